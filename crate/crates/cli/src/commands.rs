//! The subcommands. Each one is split into a compute step returning plain
//! data and a thin writer, so the acceptance runner can share ensembles and
//! limit solutions between criteria.

use levelcg_core::duality::EpsilonInput;
use levelcg_core::levelset::project_or_vertex;
use levelcg_core::measures::{histogram, w1_over_time};
use levelcg_core::sde::emit_figure_data;
use levelcg_core::{
    build_coefficients, build_graph, gluing_weights, inequality_chain_report, integrate_path, make_test_family, pushforward,
    simulate_ensemble, simulate_graph_ensemble, solve_graph_fp, BinSpec, CoefficientSet, DualityReport, EnsemblePath, GraphDensityPath,
    GraphEnsemblePath, GraphMeasure, GraphMeasurePath, GraphPoint, GraphSdeConfig, LevelGraph, PhasePoint, Potential, SdeConfig,
};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::Result;
use crate::output::OutputDir;

/// Potential, graph, coefficient tables and snapshot grid.
pub struct Setup {
    pub v: Potential<f64>,
    pub g: LevelGraph<f64>,
    pub c: CoefficientSet<f64>,
    pub times: Vec<f64>,
}

pub fn setup(cfg: &RunConfig) -> Result<Setup> {
    let v = cfg.potential();
    let g = build_graph(&v)?;
    let c = build_coefficients(&v, &g, &cfg.grid_spec())?;
    Ok(Setup { v, g, c, times: cfg.snapshot_times() })
}

impl Setup {
    /// Projection of the configured start point.
    pub fn start(&self, cfg: &RunConfig) -> GraphPoint<f64> {
        project_or_vertex(&self.g, &self.v, PhasePoint::new(cfg.sde.x0[0], cfg.sde.x0[1]))
    }
}

// ---------------------------------------------------------------- coefficients

#[derive(Debug, Clone, Serialize)]
pub struct EdgeDescription {
    pub id: usize,
    pub side: String,
    pub h_lo: f64,
    /// `None` for the unbounded edge.
    pub h_hi: Option<f64>,
    pub q_bracket: (f64, f64),
}

#[derive(Debug, Clone, Serialize)]
pub struct VertexDescription {
    pub kind: &'static str,
    pub h: f64,
    pub q: f64,
    pub edges: Vec<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct GraphDescription {
    pub edges: Vec<EdgeDescription>,
    pub vertices: Vec<VertexDescription>,
    /// Entry probabilities at the interior vertex, per edge.
    pub gluing_probabilities: Vec<f64>,
    pub gluing_beta: Vec<f64>,
}

pub fn describe_graph(c: &CoefficientSet<f64>) -> GraphDescription {
    let g = &c.graph;
    let edges = g
        .edges
        .iter()
        .map(|e| EdgeDescription {
            id: e.id,
            side: e.side.name().to_string(),
            h_lo: e.h_lo,
            h_hi: e.h_hi.is_finite().then_some(e.h_hi),
            q_bracket: e.q_bracket,
        })
        .collect();
    let mut vertices: Vec<VertexDescription> =
        g.leaf_vertices.iter().map(|l| VertexDescription { kind: "leaf", h: l.h, q: l.q, edges: vec![l.edge] }).collect();
    if let Some(iv) = &g.interior_vertex {
        vertices.push(VertexDescription { kind: "interior", h: iv.h_star, q: iv.q_saddle, edges: iv.edges.clone() });
    }
    let w = gluing_weights(c);
    GraphDescription { edges, vertices, gluing_probabilities: w.probabilities, gluing_beta: w.beta }
}

pub fn cmd_coefficients(cfg: &RunConfig, out: &mut OutputDir) -> Result<()> {
    let s = setup(cfg)?;
    let rows = s.c.edges.iter().flat_map(|e| {
        e.grid().iter().zip(e.action_values()).zip(e.period_values()).map(move |((&h, &a), &t)| (e.edge, h, a, t, a / t))
    });
    out.write_csv("coefficients.csv", "coefficients", &["edge_id", "h", "S", "T", "p2_avg"], rows)?;
    out.write_json("graph.json", "graph", &describe_graph(&s.c))?;
    Ok(())
}

// ---------------------------------------------------------------- simulate

#[derive(Debug, Clone, Serialize)]
pub struct SimulateSummary {
    pub rows: usize,
    /// Largest `max h − min h` over windows of length `ε`.
    pub max_window_band: f64,
    pub h_range: f64,
}

/// `max h − min h` over every window `[t_i, t_i + width]`.
pub fn window_band(times: &[f64], h: &[f64], width: f64) -> f64 {
    let mut worst = 0.0f64;
    let mut j = 0;
    for i in 0..times.len() {
        j = j.max(i);
        while j + 1 < times.len() && times[j + 1] - times[i] <= width * (1.0 + 1e-12) {
            j += 1;
        }
        let w = &h[i..=j];
        let (lo, hi) = w.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
        worst = worst.max(hi - lo);
    }
    worst
}

pub fn cmd_simulate(cfg: &RunConfig, out: &mut OutputDir) -> Result<SimulateSummary> {
    let s = setup(cfg)?;
    let m = &cfg.simulate;
    let x0 = PhasePoint::new(m.x0[0], m.x0[1]);
    let sde = SdeConfig::new(m.epsilon, m.t_final, x0, m.trajectory_index + 1, m.seed).with_dt(m.dt);
    let path = integrate_path(&s.v, &sde, m.trajectory_index)?;
    let fig = emit_figure_data(&path, &s.g, &s.v);
    out.write_csv("trajectory.csv", "trajectory", &["t", "q", "p", "h", "edge"], fig.iter().map(|r| (r.t, r.q, r.p, r.h, r.edge)))?;
    out.write_csv("projection.csv", "projection", &["t", "edge_id", "h"], fig.iter().map(|r| (r.t, r.edge, r.h)))?;
    if m.ensemble_n > 0 {
        let ens_cfg = SdeConfig { n: m.ensemble_n, ..sde };
        let times = levelcg_core::sde::uniform_snapshots(m.t_final, cfg.sde.snapshot_spacing);
        let ens = simulate_ensemble(&s.v, &ens_cfg, &times)?;
        let rows = ens.times.iter().zip(&ens.states).flat_map(|(&t, slice)| slice.iter().enumerate().map(move |(i, x)| (t, i, x.q, x.p)));
        out.write_csv("ensemble.csv", "ensemble", &["t", "trajectory_index", "q", "p"], rows)?;
    }
    let h: Vec<f64> = fig.iter().map(|r| r.h).collect();
    let t: Vec<f64> = fig.iter().map(|r| r.t).collect();
    let (lo, hi) = h.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    Ok(SimulateSummary { rows: fig.len(), max_window_band: window_band(&t, &h, m.epsilon), h_range: hi - lo })
}

// ---------------------------------------------------------------- converge

/// One ensemble per configured `ε`, in config order.
pub fn run_sweep(cfg: &RunConfig, s: &Setup) -> Result<Vec<EnsemblePath<f64>>> {
    cfg.sde.epsilon.iter().map(|&eps| Ok(simulate_ensemble(&s.v, &cfg.sde_config(eps, cfg.sde.n), &s.times)?)).collect()
}

/// Forward equation from the projected start point on `cells` per edge.
pub fn limit_solution(cfg: &RunConfig, s: &Setup, cells: usize) -> Result<GraphDensityPath<f64>> {
    Ok(solve_graph_fp(&s.c, &cfg.fp_config(cells), &GraphMeasure::dirac(s.start(cfg)), &s.times)?)
}

pub fn graph_monte_carlo(cfg: &RunConfig, s: &Setup, start: GraphPoint<f64>, n: usize, t_final: f64, times: &[f64]) -> Result<GraphEnsemblePath<f64>> {
    let mut gc = GraphSdeConfig::new(start, t_final, n, cfg.graph.seed);
    gc.dt_h = cfg.graph.dt_h;
    gc.vertex_shell = cfg.graph.vertex_shell;
    Ok(simulate_graph_ensemble(&s.c, &gc, times)?)
}

#[derive(Debug, Clone, Serialize)]
pub struct Occupation {
    pub edge_id: usize,
    pub fraction: f64,
    pub std_error: f64,
}

/// Edge occupations of an equally weighted atomic measure.
pub fn occupations(m: &GraphMeasure<f64>, edges: usize, n: usize) -> Vec<Occupation> {
    m.edge_masses(edges)
        .into_iter()
        .enumerate()
        .map(|(e, p)| Occupation { edge_id: e, fraction: p, std_error: (p * (1.0 - p) / n as f64).sqrt() })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergeRow {
    pub epsilon: f64,
    pub sup_w1: f64,
    pub terminal_w1: f64,
    /// Terminal edge occupations of the projected ensemble.
    pub occupations: Vec<Occupation>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergeSeries {
    pub epsilon: f64,
    pub time: f64,
    pub w1: f64,
    /// Running supremum up to `time`.
    pub sup_w1: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergeReport {
    pub rows: Vec<ConvergeRow>,
    pub series: Vec<ConvergeSeries>,
    /// Terminal edge masses of the limit solution.
    pub limit_occupations: Vec<f64>,
    /// Largest mass deviation from 1 over the limit snapshots.
    pub limit_mass_error: f64,
}

pub fn converge_report(cfg: &RunConfig, s: &Setup, sweep: &[EnsemblePath<f64>], fp: &GraphDensityPath<f64>) -> Result<ConvergeReport> {
    let limit = fp.to_measure_path();
    let edges = s.g.edges.len();
    let mut rows = Vec::new();
    let mut series = Vec::new();
    for (ens, &eps) in sweep.iter().zip(&cfg.sde.epsilon) {
        let proj = pushforward(ens, &s.g, &s.v);
        let w = w1_over_time(&proj, &limit, &s.g, cfg.measures.w1_h_max)?;
        let mut running = 0.0f64;
        for (&t, &x) in proj.times.iter().zip(&w) {
            running = running.max(x);
            series.push(ConvergeSeries { epsilon: eps, time: t, w1: x, sup_w1: running });
        }
        let last = proj.measures.last().expect("at least one snapshot");
        rows.push(ConvergeRow { epsilon: eps, sup_w1: running, terminal_w1: *w.last().unwrap(), occupations: occupations(last, edges, ens.n()) });
    }
    let limit_mass_error = limit.measures.iter().map(|m| (m.total_mass() - 1.0).abs()).fold(0.0, f64::max);
    Ok(ConvergeReport {
        rows,
        series,
        limit_occupations: limit.measures.last().unwrap().edge_masses(edges),
        limit_mass_error,
    })
}

pub fn cmd_converge(cfg: &RunConfig, out: &mut OutputDir) -> Result<ConvergeReport> {
    let s = setup(cfg)?;
    let sweep = run_sweep(cfg, &s)?;
    let fp = limit_solution(cfg, &s, cfg.fp.cells_per_edge)?;
    let report = converge_report(cfg, &s, &sweep, &fp)?;
    out.write_json("converge.json", "converge", &report)?;

    let masses = &fp.masses;
    let fp_rows = fp.times.iter().enumerate().flat_map(|(k, &t)| {
        fp.grids.iter().flat_map(move |gr| (0..gr.cells).map(move |j| (t, gr.edge, gr.center(j), masses[k][gr.edge][j])))
    });
    out.write_csv("fp.csv", "fp_snapshots", &["t", "edge_id", "h_cell_center", "mass"], fp_rows)?;

    let bins = BinSpec::default_for(&s.g, cfg.measures.histogram_h_max);
    for (ens, &eps) in sweep.iter().zip(&cfg.sde.epsilon) {
        let last = levelcg_core::measures::project_slice(ens.states.last().unwrap(), &s.g, &s.v);
        write_measure(out, &format!("measure_eps{eps}.csv"), &histogram(&last, &bins))?;
    }
    if let Some(k) = fp.times.len().checked_sub(1) {
        write_measure(out, "measure_limit.csv", &histogram(&fp.measure(k), &bins))?;
    }

    if cfg.graph.monte_carlo {
        let mc = graph_monte_carlo(cfg, &s, s.start(cfg), cfg.graph.n, cfg.sde.t_final, &s.times)?;
        let rows = mc.times.iter().zip(&mc.states).flat_map(|(&t, slice)| slice.iter().enumerate().map(move |(i, y)| (t, i, y.edge, y.h)));
        out.write_csv("graph_ensemble.csv", "graph_ensemble", &["t", "trajectory_index", "edge_id", "h"], rows)?;
    }
    Ok(report)
}

fn write_measure(out: &mut OutputDir, name: &str, h: &levelcg_core::Histogram<f64>) -> Result<()> {
    let rows = h.masses.iter().enumerate().flat_map(|(e, m)| {
        let centers = h.bins.centers(e);
        m.iter().zip(centers).map(move |(&w, c)| (e, c, w)).collect::<Vec<_>>()
    });
    out.write_csv(name, "graph_measure", &["edge_id", "h_bin_center", "mass"], rows)?;
    Ok(())
}

// ---------------------------------------------------------------- duality

#[derive(Debug, Clone, Serialize)]
pub struct DualityOutput {
    /// The limit path was shifted off the solution.
    pub perturbed: bool,
    pub shift: f64,
    pub report: DualityReport,
}

/// Limit path on the configured grid and its halved refinements, shifted by
/// `shift` in energy.
pub fn limit_paths(cfg: &RunConfig, s: &Setup, shift: f64) -> Result<Vec<GraphMeasurePath<f64>>> {
    (0..=cfg.duality.coarse_levels)
        .map(|k| {
            let p = limit_solution(cfg, s, cfg.fp.cells_per_edge >> k)?.to_measure_path();
            Ok(if shift != 0.0 { levelcg_core::duality::shift_path(&p, &s.g, shift) } else { p })
        })
        .collect()
}

pub fn duality_report(cfg: &RunConfig, s: &Setup, sweep: &[EnsemblePath<f64>], limits: &[GraphMeasurePath<f64>]) -> Result<DualityReport> {
    let family = make_test_family(&s.g, &cfg.family_spec());
    let inputs: Vec<EpsilonInput<f64>> = sweep.iter().map(|e| EpsilonInput { epsilon: e.config.epsilon, ensemble: e }).collect();
    Ok(inequality_chain_report(&s.v, &s.c, &family, &inputs, &limits[0], &limits[1..])?)
}

pub fn cmd_duality(cfg: &RunConfig, out: &mut OutputDir) -> Result<DualityOutput> {
    let s = setup(cfg)?;
    let sweep = run_sweep(cfg, &s)?;
    let shift = cfg.duality.shift;
    let limits = limit_paths(cfg, &s, shift)?;
    let report = duality_report(cfg, &s, &sweep, &limits)?;
    let result = DualityOutput { perturbed: shift != 0.0, shift, report };
    out.write_json("duality.json", "duality", &result)?;
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn band_of_a_ramp() {
        let t: Vec<f64> = (0..=10).map(|k| k as f64 * 0.1).collect();
        let h: Vec<f64> = t.iter().map(|x| 2.0 * x).collect();
        assert!((window_band(&t, &h, 0.3) - 0.6).abs() < 1e-12);
        assert_eq!(window_band(&t, &h, 0.0), 0.0);
    }
}
