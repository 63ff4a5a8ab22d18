use levelcg_core::levelset::{ABOVE, LEFT, RIGHT};
use levelcg_core::*;
use levelcg_oracles::{double_well_lobe_action, energy_drift, energy_increments, harmonic_action, harmonic_period, lp_w1};
use proptest::prelude::*;

fn atoms() -> impl Strategy<Value = Vec<(GraphPoint64, f64)>> {
    prop::collection::vec((0usize..3, 0.0f64..1.0, 0.01f64..1.0), 1..=6).prop_map(|raw| {
        let total: f64 = raw.iter().map(|r| r.2).sum();
        raw.into_iter()
            .map(|(e, u, w)| {
                let h = if e == ABOVE { 0.25 + 2.75 * u } else { 0.25 * u };
                (GraphPoint::new(e, h), w / total)
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]
    #[test]
    fn tree_w1_matches_transport_lp(mu in atoms(), nu in atoms()) {
        let g = build_graph(&Potential64::double_well()).unwrap();
        let sweep = w1_tree(&GraphMeasure::Atoms(mu.clone()), &GraphMeasure::Atoms(nu.clone()), &g, 3.0).unwrap();
        let lp = lp_w1(&mu, &nu, &g).unwrap();
        prop_assert!((sweep - lp).abs() < 1e-10, "sweep {sweep} lp {lp}");
    }
}

#[test]
fn harmonic_tables_match_closed_forms() {
    let v = Potential64::harmonic();
    let g = LevelGraph::single_well(&v).unwrap();
    for k in 1..=20 {
        let h = 0.15 * k as f64;
        assert!((action(&g, &v, 0, h).unwrap() - harmonic_action(h)).abs() < 1e-8);
        assert!((period(&g, &v, 0, h, 1e-4).unwrap() - harmonic_period(h)).abs() < 1e-6);
    }
}

#[test]
fn lobe_action_near_the_saddle() {
    let v = Potential64::double_well();
    let g = build_graph(&v).unwrap();
    for e in [LEFT, RIGHT] {
        let s = action(&g, &v, e, 0.25 - 1e-7).unwrap();
        assert!((s - double_well_lobe_action()).abs() < 1e-5, "{s}");
    }
}

#[test]
fn energy_gains_one_per_unit_time() {
    let v = Potential64::double_well();
    let cfg = SdeConfig64::new(0.2, 0.5, PhasePoint::new(1.2, 0.0), 3000, 21);
    let times: Vec<f64> = (0..=5).map(|k| k as f64 * 0.1).collect();
    let ens = simulate_ensemble(&v, &cfg, &times).unwrap();
    for est in energy_drift(&ens, &v).iter().chain(&energy_increments(&ens, &v)) {
        assert!(est.within(4.0), "{est:?}");
    }
}
