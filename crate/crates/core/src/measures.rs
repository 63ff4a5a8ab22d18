//! Probability measures on the level graph: push-forwards of phase-space
//! ensembles, histograms, the Wasserstein-1 distance for the tree path
//! metric, and conditional momentum statistics on level sets.
//!
//! Histogram mass is spread uniformly inside each bin wherever a measure is
//! integrated against a position (W1, rebinning).

use crate::error::{Error, Result};
use crate::hamiltonian::{PhasePoint, Potential};
use crate::levelset::{project_or_vertex, EdgeId, GraphPoint, LevelGraph, Side};
use crate::scalar::{lit, to_f64, Real};
use crate::sde::EnsemblePath;

/// Bin boundaries per edge (strictly increasing).
#[derive(Debug, Clone, PartialEq)]
pub struct BinSpec<T> {
    pub edges: Vec<Vec<T>>,
}

impl<T: Real> BinSpec<T> {
    /// `counts[e]` equal-width bins per edge; the unbounded edge is cut at `h_max`.
    pub fn uniform(g: &LevelGraph<T>, counts: &[usize], h_max: T) -> Self {
        let edges = g
            .edges
            .iter()
            .zip(counts)
            .map(|(e, &m)| {
                let hi = if e.h_hi.is_finite() { e.h_hi } else { h_max };
                let m = m.max(1);
                (0..=m).map(|k| e.h_lo + (hi - e.h_lo) * lit(k as f64 / m as f64)).collect()
            })
            .collect();
        Self { edges }
    }

    /// Default binning: 128 bins per well edge and 256 on the upper edge,
    /// both refined quadratically toward the saddle energy.
    pub fn default_for(g: &LevelGraph<T>, h_max: T) -> Self {
        let edges = g
            .edges
            .iter()
            .map(|e| match e.side {
                Side::LeftWell | Side::RightWell => {
                    let m = 128;
                    (0..=m)
                        .map(|k| {
                            let u = 1.0 - k as f64 / m as f64;
                            e.h_lo + (e.h_hi - e.h_lo) * lit(1.0 - u * u)
                        })
                        .collect()
                }
                Side::AboveSaddle => {
                    let m = 256;
                    (0..=m).map(|k| e.h_lo + (h_max - e.h_lo) * lit((k as f64 / m as f64).powi(2))).collect()
                }
                Side::Whole => {
                    let m = 256;
                    (0..=m).map(|k| e.h_lo + (h_max - e.h_lo) * lit(k as f64 / m as f64)).collect()
                }
            })
            .collect();
        Self { edges }
    }

    pub fn centers(&self, edge: EdgeId) -> Vec<T> {
        self.edges[edge].windows(2).map(|w| (w[0] + w[1]) * lit(0.5)).collect()
    }

    /// Bin holding `h` on `edge`. Bins are `(b_k, b_{k+1}]` (a value on a
    /// boundary goes to the lower bin); values outside the range are clamped
    /// to the first or last bin.
    pub fn locate(&self, edge: EdgeId, h: T) -> usize {
        let b = &self.edges[edge];
        let bins = b.len() - 1;
        let k = b.partition_point(|&x| x < h);
        k.saturating_sub(1).min(bins - 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram<T> {
    pub bins: BinSpec<T>,
    /// `masses[e][k]`: mass in bin `k` of edge `e`.
    pub masses: Vec<Vec<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum GraphMeasure<T> {
    Atoms(Vec<(GraphPoint<T>, T)>),
    Histogram(Histogram<T>),
}

impl<T: Real> GraphMeasure<T> {
    pub fn dirac(y: GraphPoint<T>) -> Self {
        GraphMeasure::Atoms(vec![(y, T::one())])
    }

    pub fn total_mass(&self) -> T {
        match self {
            GraphMeasure::Atoms(a) => a.iter().map(|x| x.1).sum(),
            GraphMeasure::Histogram(h) => h.masses.iter().flatten().copied().sum(),
        }
    }

    /// Checks non-negative weights summing to one and support inside edges.
    pub fn validate(&self, g: &LevelGraph<T>) -> Result<()> {
        let total = self.total_mass();
        if (total - T::one()).abs() > crate::scalar::tol::<T>(1e-12) {
            return Err(Error::InvalidMeasure(format!("total mass {} != 1", to_f64(total))));
        }
        match self {
            GraphMeasure::Atoms(atoms) => {
                for (y, w) in atoms {
                    if *w < T::zero() {
                        return Err(Error::InvalidMeasure("negative weight".into()));
                    }
                    if y.edge >= g.edges.len() || !g.edge(y.edge).contains(y.h) {
                        return Err(Error::InvalidMeasure(format!("atom {y:?} outside its edge")));
                    }
                }
            }
            GraphMeasure::Histogram(h) => {
                for (e, masses) in h.masses.iter().enumerate() {
                    if masses.iter().any(|&m| m < T::zero()) {
                        return Err(Error::InvalidMeasure("negative bin mass".into()));
                    }
                    let b = &h.bins.edges[e];
                    let edge = g.edge(e);
                    if b[0] < edge.h_lo || b[b.len() - 1] > edge.h_hi {
                        return Err(Error::InvalidMeasure(format!("bins of edge {e} leave the edge")));
                    }
                }
            }
        }
        Ok(())
    }

    /// Integral of `f(edge, h)`; bins are evaluated at their centres.
    pub fn integrate(&self, mut f: impl FnMut(EdgeId, T) -> T) -> T {
        match self {
            GraphMeasure::Atoms(a) => a.iter().map(|(y, w)| *w * f(y.edge, y.h)).sum(),
            GraphMeasure::Histogram(h) => {
                let mut acc = T::zero();
                for (e, masses) in h.masses.iter().enumerate() {
                    for (k, &m) in masses.iter().enumerate() {
                        if m != T::zero() {
                            let b = &h.bins.edges[e];
                            acc = acc + m * f(e, (b[k] + b[k + 1]) * lit(0.5));
                        }
                    }
                }
                acc
            }
        }
    }

    /// Mass on each edge.
    pub fn edge_masses(&self, edges: usize) -> Vec<T> {
        let mut out = vec![T::zero(); edges];
        match self {
            GraphMeasure::Atoms(a) => a.iter().for_each(|(y, w)| out[y.edge] = out[y.edge] + *w),
            GraphMeasure::Histogram(h) => {
                for (e, m) in h.masses.iter().enumerate() {
                    out[e] = m.iter().copied().sum();
                }
            }
        }
        out
    }
}

/// A curve of graph measures on a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphMeasurePath<T> {
    pub times: Vec<T>,
    pub measures: Vec<GraphMeasure<T>>,
}

/// Maps every atom of the ensemble through the projection, weight `1/n`.
pub fn pushforward<T: Real>(ensemble: &EnsemblePath<T>, g: &LevelGraph<T>, v: &Potential<T>) -> GraphMeasurePath<T> {
    let measures = ensemble.states.iter().map(|slice| project_slice(slice, g, v)).collect();
    GraphMeasurePath { times: ensemble.times.clone(), measures }
}

pub fn project_slice<T: Real>(slice: &[PhasePoint<T>], g: &LevelGraph<T>, v: &Potential<T>) -> GraphMeasure<T> {
    let w = T::one() / lit(slice.len() as f64);
    GraphMeasure::Atoms(slice.iter().map(|&x| (project_or_vertex(g, v, x), w)).collect())
}

/// Bins a measure. Atoms follow the lower-bin tie rule; histogram mass is
/// redistributed in proportion to bin overlap.
pub fn histogram<T: Real>(measure: &GraphMeasure<T>, bins: &BinSpec<T>) -> Histogram<T> {
    let mut masses: Vec<Vec<T>> = bins.edges.iter().map(|b| vec![T::zero(); b.len() - 1]).collect();
    match measure {
        GraphMeasure::Atoms(atoms) => {
            // integer-free but order-fixed accumulation
            for (y, w) in atoms {
                let k = bins.locate(y.edge, y.h);
                masses[y.edge][k] = masses[y.edge][k] + *w;
            }
        }
        GraphMeasure::Histogram(src) => {
            for (e, src_masses) in src.masses.iter().enumerate() {
                let sb = &src.bins.edges[e];
                let tb = &bins.edges[e];
                if sb == tb {
                    masses[e] = src_masses.clone();
                    continue;
                }
                for (k, &m) in src_masses.iter().enumerate() {
                    if m == T::zero() {
                        continue;
                    }
                    let (lo, hi) = (sb[k], sb[k + 1]);
                    let width = hi - lo;
                    let first = bins.locate(e, lo);
                    let last = bins.locate(e, hi);
                    for j in first..=last {
                        let overlap = hi.min(tb[j + 1]) - lo.max(tb[j]);
                        if overlap > T::zero() {
                            masses[e][j] = masses[e][j] + m * overlap / width;
                        }
                    }
                    // parts outside the target range go to the nearest end bin
                    let top = tb.len() - 2;
                    if lo < tb[0] {
                        masses[e][0] = masses[e][0] + m * (hi.min(tb[0]) - lo) / width;
                    }
                    if hi > tb[top + 1] {
                        masses[e][top] = masses[e][top] + m * (hi - lo.max(tb[top + 1])) / width;
                    }
                }
            }
        }
    }
    Histogram { bins: bins.clone(), masses }
}

/// Mass pieces of one measure restricted to one edge.
#[derive(Default)]
struct EdgePieces<T> {
    atoms: Vec<(T, T)>,
    /// (lo, hi, mass)
    slabs: Vec<(T, T, T)>,
}

fn pieces<T: Real>(m: &GraphMeasure<T>, edges: usize) -> Vec<EdgePieces<T>> {
    let mut out: Vec<EdgePieces<T>> = (0..edges).map(|_| EdgePieces { atoms: Vec::new(), slabs: Vec::new() }).collect();
    match m {
        GraphMeasure::Atoms(a) => {
            for (y, w) in a {
                out[y.edge].atoms.push((y.h, *w));
            }
        }
        GraphMeasure::Histogram(h) => {
            for (e, masses) in h.masses.iter().enumerate() {
                let b = &h.bins.edges[e];
                for (k, &mass) in masses.iter().enumerate() {
                    if mass != T::zero() {
                        out[e].slabs.push((b[k], b[k + 1], mass));
                    }
                }
            }
        }
    }
    out
}

/// `∫ |a + s (x − x₀)| dx` over an interval where the integrand is linear,
/// given its end values.
fn abs_linear_integral<T: Real>(d0: T, d1: T, width: T) -> T {
    if (d0 >= T::zero()) == (d1 >= T::zero()) || d0 == T::zero() || d1 == T::zero() {
        (d0.abs() + d1.abs()) * width * lit(0.5)
    } else {
        (d0 * d0 + d1 * d1) / ((d0.abs() + d1.abs()) * lit(2.0)) * width
    }
}

/// Breakpoint sweep on one edge: returns `∫ |F_μ − F_ν|`, `F` being the
/// mass strictly below the cut (leaf side) or above it (upper edge).
fn edge_w1<T: Real>(mu: &EdgePieces<T>, nu: &EdgePieces<T>, lo: T, hi: T, mass_above: bool) -> T {
    let mut xs: Vec<T> = vec![lo, hi];
    for p in [mu, nu] {
        xs.extend(p.atoms.iter().map(|a| a.0));
        for s in &p.slabs {
            xs.push(s.0);
            xs.push(s.1);
        }
    }
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    xs.dedup();
    let m = xs.len();
    let index = |x: T| xs.partition_point(|&v| v < x);

    // signed jumps and density increments of μ − ν at breakpoints
    let mut jump = vec![T::zero(); m];
    let mut density_delta = vec![T::zero(); m];
    for (p, sign) in [(mu, T::one()), (nu, -T::one())] {
        for &(h, w) in &p.atoms {
            let k = index(h);
            jump[k] = jump[k] + sign * w;
        }
        for &(a, b, mass) in &p.slabs {
            let rho = sign * mass / (b - a);
            let ka = index(a);
            let kb = index(b);
            density_delta[ka] = density_delta[ka] + rho;
            density_delta[kb] = density_delta[kb] - rho;
        }
    }
    let total: T = jump.iter().copied().sum::<T>()
        + [mu, nu]
            .iter()
            .zip([T::one(), -T::one()])
            .map(|(p, s)| s * p.slabs.iter().map(|sl| sl.2).sum::<T>())
            .sum::<T>();

    let mut below = T::zero(); // (F_μ − F_ν) for mass below the running point
    let mut density = T::zero();
    let mut acc = T::zero();
    for k in 0..m - 1 {
        below = below + jump[k];
        density = density + density_delta[k];
        let width = xs[k + 1] - xs[k];
        let d0 = below;
        let d1 = below + density * width;
        if xs[k] >= lo && xs[k + 1] <= hi {
            let (a, b) = if mass_above { (total - d0, total - d1) } else { (d0, d1) };
            acc = acc + abs_linear_integral(a, b, width);
        }
        below = d1;
    }
    acc
}

/// Wasserstein-1 distance for the path metric of the graph (distance in `h`
/// along edges, through the interior vertex). Supports must lie below
/// `h_max` on the unbounded edge.
pub fn w1_tree<T: Real>(mu: &GraphMeasure<T>, nu: &GraphMeasure<T>, g: &LevelGraph<T>, h_max: T) -> Result<T> {
    let ne = g.edges.len();
    let pm = pieces(mu, ne);
    let pn = pieces(nu, ne);
    let mut total = T::zero();
    for e in &g.edges {
        let support_hi = [&pm[e.id], &pn[e.id]]
            .iter()
            .flat_map(|p| p.atoms.iter().map(|a| a.0).chain(p.slabs.iter().map(|s| s.1)))
            .fold(e.h_lo, T::max);
        let hi = if e.h_hi.is_finite() {
            e.h_hi
        } else {
            if support_hi > h_max {
                return Err(Error::UnboundedSupport { h: to_f64(support_hi), h_max: to_f64(h_max) });
            }
            support_hi
        };
        if hi <= e.h_lo {
            continue;
        }
        let mass_above = matches!(e.side, Side::AboveSaddle);
        total = total + edge_w1(&pm[e.id], &pn[e.id], e.h_lo, hi, mass_above);
    }
    Ok(total)
}

/// Largest W1 over a common time grid.
pub fn sup_w1_over_time<T: Real>(a: &GraphMeasurePath<T>, b: &GraphMeasurePath<T>, g: &LevelGraph<T>, h_max: T) -> Result<T> {
    Ok(w1_over_time(a, b, g, h_max)?.into_iter().fold(T::zero(), T::max))
}

/// W1 at every time of a common grid.
pub fn w1_over_time<T: Real>(a: &GraphMeasurePath<T>, b: &GraphMeasurePath<T>, g: &LevelGraph<T>, h_max: T) -> Result<Vec<T>> {
    check_same_times(&a.times, &b.times)?;
    a.measures.iter().zip(&b.measures).map(|(m, n)| w1_tree(m, n, g, h_max)).collect()
}

pub fn check_same_times<T: Real>(a: &[T], b: &[T]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::TimeGridMismatch(format!("{} vs {} snapshots", a.len(), b.len())));
    }
    for (x, y) in a.iter().zip(b) {
        if (*x - *y).abs() > lit::<T>(1e-9) * (T::one() + x.abs()) {
            return Err(Error::TimeGridMismatch(format!("t = {} vs {}", to_f64(*x), to_f64(*y))));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BinStat<T> {
    pub mean_p2: T,
    pub mean_h: T,
    pub count: usize,
}

/// Sample mean of `p²` (and of `h`) among atoms in each `(edge, h-bin)`.
pub fn conditional_p2<T: Real>(
    slice: &[PhasePoint<T>],
    g: &LevelGraph<T>,
    v: &Potential<T>,
    bins: &BinSpec<T>,
) -> Vec<Vec<BinStat<T>>> {
    let mut sums: Vec<Vec<(T, T, usize)>> = bins.edges.iter().map(|b| vec![(T::zero(), T::zero(), 0); b.len() - 1]).collect();
    for &x in slice {
        let y = project_or_vertex(g, v, x);
        let k = bins.locate(y.edge, y.h);
        let s = &mut sums[y.edge][k];
        s.0 = s.0 + x.p * x.p;
        s.1 = s.1 + y.h;
        s.2 += 1;
    }
    sums.into_iter()
        .map(|edge| {
            edge.into_iter()
                .map(|(p2, h, count)| {
                    if count == 0 {
                        BinStat { mean_p2: T::zero(), mean_h: T::zero(), count }
                    } else {
                        let c: T = lit(count as f64);
                        BinStat { mean_p2: p2 / c, mean_h: h / c, count }
                    }
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levelset::{build_graph, ABOVE, LEFT, RIGHT};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn graph() -> LevelGraph<f64> {
        build_graph(&Potential::double_well()).unwrap()
    }

    fn dirac(edge: EdgeId, h: f64) -> GraphMeasure<f64> {
        GraphMeasure::dirac(GraphPoint::new(edge, h))
    }

    #[test]
    fn w1_examples() {
        let g = graph();
        assert_abs_diff_eq!(w1_tree(&dirac(RIGHT, 0.1), &dirac(RIGHT, 0.2), &g, 3.0).unwrap(), 0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(w1_tree(&dirac(LEFT, 0.1), &dirac(RIGHT, 0.1), &g, 3.0).unwrap(), 0.3, epsilon = 1e-15);
        assert_abs_diff_eq!(w1_tree(&dirac(LEFT, 0.2), &dirac(ABOVE, 1.0), &g, 3.0).unwrap(), 0.8, epsilon = 1e-15);
        assert!(matches!(w1_tree(&dirac(ABOVE, 4.0), &dirac(ABOVE, 1.0), &g, 3.0), Err(Error::UnboundedSupport { .. })));
    }

    #[test]
    fn w1_of_uniform_bin_against_its_center() {
        let g = graph();
        // uniform on [0.5, 0.7] vs Dirac at 0.6: W1 = width/4
        let bins = BinSpec { edges: vec![vec![0.0, 0.25], vec![0.0, 0.25], vec![0.25, 0.5, 0.7]] };
        let h = GraphMeasure::Histogram(Histogram { bins, masses: vec![vec![0.0], vec![0.0], vec![0.0, 1.0]] });
        assert_abs_diff_eq!(w1_tree(&h, &dirac(ABOVE, 0.6), &g, 3.0).unwrap(), 0.05, epsilon = 1e-15);
    }

    #[test]
    fn sup_over_time() {
        let g = graph();
        let path = |shift: f64| GraphMeasurePath {
            times: vec![0.0, 0.5, 1.0],
            measures: vec![dirac(RIGHT, 0.1), dirac(RIGHT, 0.1 + shift), dirac(ABOVE, 1.0)],
        };
        assert_eq!(sup_w1_over_time(&path(0.0), &path(0.0), &g, 3.0).unwrap(), 0.0);
        assert_abs_diff_eq!(sup_w1_over_time(&path(0.0), &path(0.05), &g, 3.0).unwrap(), 0.05, epsilon = 1e-15);
        let mut other = path(0.0);
        other.times[1] = 0.6;
        assert!(matches!(sup_w1_over_time(&path(0.0), &other, &g, 3.0), Err(Error::TimeGridMismatch(_))));
    }

    #[test]
    fn histogram_tie_rule_and_identity() {
        let g = graph();
        let bins = BinSpec::uniform(&g, &[5, 5, 10], 2.0);
        // 0.1 is the boundary between bins 1 and 2 of a well edge (width 0.05)
        let h = histogram(&dirac(RIGHT, 0.1), &bins);
        assert_eq!(h.masses[RIGHT][1], 1.0);
        let again = histogram(&GraphMeasure::Histogram(h.clone()), &bins);
        assert_eq!(again, h);
        let atoms = GraphMeasure::Atoms(vec![
            (GraphPoint::new(LEFT, 0.01), 0.3),
            (GraphPoint::new(ABOVE, 1.3), 0.45),
            (GraphPoint::new(RIGHT, 0.2), 0.25),
        ]);
        let h = GraphMeasure::Histogram(histogram(&atoms, &bins));
        assert_abs_diff_eq!(h.total_mass(), 1.0, epsilon = 1e-12);
        // rebinning onto a different grid preserves mass
        let coarse = BinSpec::default_for(&g, 2.0);
        let h2 = GraphMeasure::Histogram(histogram(&h, &coarse));
        assert_abs_diff_eq!(h2.total_mass(), 1.0, epsilon = 1e-12);
        h2.validate(&g).unwrap();
    }

    #[test]
    fn pushforward_of_identical_points() {
        let v = Potential::double_well();
        let g = graph();
        let slice = vec![PhasePoint::new(1.0, 0.0); 17];
        let m = project_slice(&slice, &g, &v);
        let h = histogram(&m, &BinSpec::default_for(&g, 3.0));
        assert_abs_diff_eq!(h.masses[RIGHT][0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(w1_tree(&m, &dirac(RIGHT, 0.0), &g, 3.0).unwrap(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn conditional_p2_at_turning_points() {
        let v = Potential::double_well();
        let g = graph();
        let slice: Vec<_> = (0..20).map(|i| PhasePoint::new(1.05 + 0.01 * i as f64, 0.0)).collect();
        let stats = conditional_p2(&slice, &g, &v, &BinSpec::uniform(&g, &[4, 4, 4], 3.0));
        let mut n = 0;
        for s in stats.iter().flatten().filter(|s| s.count > 0) {
            assert_eq!(s.mean_p2, 0.0);
            n += s.count;
        }
        assert_eq!(n, 20);
    }

    fn arb_atoms() -> impl Strategy<Value = GraphMeasure<f64>> {
        proptest::collection::vec((0usize..3, 0.0f64..1.0, 0.01f64..1.0), 1..6).prop_map(|raw| {
            let total: f64 = raw.iter().map(|r| r.2).sum();
            GraphMeasure::Atoms(
                raw.into_iter()
                    .map(|(e, u, w)| {
                        let h = if e == ABOVE { 0.25 + 2.0 * u } else { 0.25 * u };
                        (GraphPoint::new(e, h), w / total)
                    })
                    .collect(),
            )
        })
    }

    proptest! {
        #[test]
        fn w1_is_a_metric(a in arb_atoms(), b in arb_atoms(), c in arb_atoms()) {
            let g = graph();
            let ab = w1_tree(&a, &b, &g, 3.0).unwrap();
            let ba = w1_tree(&b, &a, &g, 3.0).unwrap();
            let bc = w1_tree(&b, &c, &g, 3.0).unwrap();
            let ac = w1_tree(&a, &c, &g, 3.0).unwrap();
            prop_assert!((ab - ba).abs() < 1e-12);
            prop_assert!(ac <= ab + bc + 1e-12);
            prop_assert!(w1_tree(&a, &a, &g, 3.0).unwrap().abs() < 1e-12);
        }

        #[test]
        fn pushforward_preserves_energy_mean(seed in 0u64..1000) {
            use rand::{Rng, SeedableRng};
            let v = Potential::double_well();
            let g = graph();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let slice: Vec<PhasePoint<f64>> = (0..50).map(|_| PhasePoint::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0))).collect();
            let m = project_slice(&slice, &g, &v);
            prop_assert!((m.total_mass() - 1.0).abs() < 1e-14);
            let mean_h = m.integrate(|_, h| h);
            let mean_energy = slice.iter().map(|&x| crate::hamiltonian::hamiltonian(&v, x)).sum::<f64>() / 50.0;
            prop_assert!((mean_h - mean_energy).abs() < 1e-13);

            // conditional bin means weighted by counts recover the ensemble mean of p²
            let stats = conditional_p2(&slice, &g, &v, &BinSpec::default_for(&g, 10.0));
            let weighted: f64 = stats.iter().flatten().map(|s| s.mean_p2 * s.count as f64).sum();
            let direct: f64 = slice.iter().map(|x| x.p * x.p).sum();
            prop_assert!((weighted - direct).abs() < 1e-12 * direct.max(1.0));

            // subsampling commutes with the push-forward
            let sub: Vec<_> = slice.iter().step_by(3).copied().collect();
            let pushed = project_slice(&sub, &g, &v);
            if let (GraphMeasure::Atoms(all), GraphMeasure::Atoms(part)) = (&m, &pushed) {
                for (i, (y, _)) in part.iter().enumerate() {
                    prop_assert_eq!(*y, all[3 * i].0);
                }
            }
        }
    }
}
