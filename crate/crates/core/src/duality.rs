//! Dual functionals of the empirical-measure rate function, evaluated on
//! test functions of the form `f = g∘Π`.
//!
//! For a time-independent `f` and a path `ρ` on `[0, T]`:
//!
//! ```text
//! J^ε(ρ, f) = ⟨f, ρ_T⟩ − ⟨f, ρ_0⟩ − ∫ ⟨A^ε f, ρ_t⟩ dt − ∫ ⟨(∂_p f)², ρ_t⟩ dt
//! A^ε f     = (p/ε) ∂_q f − (V'(q)/ε) ∂_p f + ∂²_p f
//! ```
//!
//! For `f = g∘Π` the transport part cancels and `A^ε f = g'(h) + g''(h) p²`,
//! `∂_p f = g'(h) p`. The coarse-grained functional replaces `p²` by the
//! microcanonical average `S/T` on the atom's edge. Time integrals use the
//! trapezoid rule on the snapshot grid.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::{PhasePoint, Potential};
use crate::levelset::{project_or_vertex, CoefficientSet, EdgeId, GraphPoint, LevelGraph, Side};
use crate::measures::{GraphMeasure, GraphMeasurePath};
use crate::scalar::{lit, to_f64, Real};
use crate::sde::EnsemblePath;

/// Quintic Hermite data (value, slope, curvature) on uniform knots over one edge.
#[derive(Debug, Clone, PartialEq)]
struct EdgePiece<T> {
    lo: T,
    hi: T,
    inv_dx: T,
    values: Vec<T>,
    slopes: Vec<T>,
    curvatures: Vec<T>,
}

/// Edgewise piecewise-quintic function on the graph, C² on each edge, so
/// that `g''` can be sampled at cell centres without first-order jumps.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphTestFunction<T> {
    pub label: String,
    pieces: Vec<EdgePiece<T>>,
    /// `(index, s)` when this member is `s` times an earlier family member.
    pub origin: Option<(usize, f64)>,
}

impl<T: Real> GraphTestFunction<T> {
    /// Samples `f(edge, h) = (g, g', g'')` at `intervals[e] + 1` uniform
    /// knots on each edge; unbounded edges are cut at `h_max`.
    pub fn from_fn(g: &LevelGraph<T>, intervals: &[usize], h_max: T, label: impl Into<String>, f: impl Fn(EdgeId, T) -> (T, T, T)) -> Self {
        let pieces = g
            .edges
            .iter()
            .map(|e| {
                let hi = if e.h_hi.is_finite() { e.h_hi } else { h_max };
                let m = intervals[e.id].max(1);
                let dx = (hi - e.h_lo) / lit(m as f64);
                let mut piece = EdgePiece { lo: e.h_lo, hi, inv_dx: dx.recip(), values: vec![], slopes: vec![], curvatures: vec![] };
                for k in 0..=m {
                    let h = if k == m { hi } else { e.h_lo + dx * lit(k as f64) };
                    let (v, d, dd) = f(e.id, h);
                    piece.values.push(v);
                    piece.slopes.push(d);
                    piece.curvatures.push(dd);
                }
                piece
            })
            .collect();
        Self { label: label.into(), pieces, origin: None }
    }

    pub fn scaled(&self, s: T) -> Self {
        let pieces = self
            .pieces
            .iter()
            .map(|p| EdgePiece {
                values: p.values.iter().map(|&v| v * s).collect(),
                slopes: p.slopes.iter().map(|&d| d * s).collect(),
                curvatures: p.curvatures.iter().map(|&d| d * s).collect(),
                ..p.clone()
            })
            .collect();
        Self { label: format!("{}*{}", to_f64(s), self.label), pieces, origin: None }
    }

    /// `(g, g', g'')` at `h` on `edge`.
    #[inline]
    pub fn eval(&self, edge: EdgeId, h: T) -> Result<(T, T, T)> {
        let p = self.pieces.get(edge).ok_or(Error::OutOfDomain { edge, h: to_f64(h) })?;
        let slack = (p.hi - p.lo) * lit(1e-12);
        if !(h >= p.lo - slack && h <= p.hi + slack) {
            return Err(Error::OutOfDomain { edge, h: to_f64(h) });
        }
        let m = p.values.len() - 1;
        let x = ((h - p.lo) * p.inv_dx).max(T::zero());
        let k = x.to_usize().unwrap_or(m).min(m - 1);
        let s = x - lit(k as f64);
        let dx = p.inv_dx.recip();
        let (y0, y1) = (p.values[k], p.values[k + 1]);
        let (d0, d1) = (p.slopes[k] * dx, p.slopes[k + 1] * dx);
        let (c0, c1) = (p.curvatures[k] * dx * dx, p.curvatures[k + 1] * dx * dx);
        let c = |a: f64| -> T { lit(a) };
        let (s2, s3) = (s * s, s * s * s);
        let (s4, s5) = (s3 * s, s3 * s2);
        // quintic Hermite basis and its first two derivatives
        let h = [
            T::one() - c(10.0) * s3 + c(15.0) * s4 - c(6.0) * s5,
            s - c(6.0) * s3 + c(8.0) * s4 - c(3.0) * s5,
            c(0.5) * s2 - c(1.5) * s3 + c(1.5) * s4 - c(0.5) * s5,
            c(10.0) * s3 - c(15.0) * s4 + c(6.0) * s5,
            c(-4.0) * s3 + c(7.0) * s4 - c(3.0) * s5,
            c(0.5) * s3 - s4 + c(0.5) * s5,
        ];
        let dh = [
            c(-30.0) * s2 + c(60.0) * s3 - c(30.0) * s4,
            T::one() - c(18.0) * s2 + c(32.0) * s3 - c(15.0) * s4,
            s - c(4.5) * s2 + c(6.0) * s3 - c(2.5) * s4,
            c(30.0) * s2 - c(60.0) * s3 + c(30.0) * s4,
            c(-12.0) * s2 + c(28.0) * s3 - c(15.0) * s4,
            c(1.5) * s2 - c(4.0) * s3 + c(2.5) * s4,
        ];
        let ddh = [
            c(-60.0) * s + c(180.0) * s2 - c(120.0) * s3,
            c(-36.0) * s + c(96.0) * s2 - c(60.0) * s3,
            T::one() - c(9.0) * s + c(18.0) * s2 - c(10.0) * s3,
            c(60.0) * s - c(180.0) * s2 + c(120.0) * s3,
            c(-24.0) * s + c(84.0) * s2 - c(60.0) * s3,
            c(3.0) * s - c(12.0) * s2 + c(10.0) * s3,
        ];
        // H0 = 1 − H3, written so that constants are reproduced exactly
        let coef = [T::zero(), d0, c0, y1 - y0, d1, c1];
        let comb = |b: &[T; 6]| b.iter().zip(&coef).fold(T::zero(), |acc, (&x, &y)| acc + x * y);
        Ok((y0 + comb(&h), comb(&dh) * p.inv_dx, comb(&ddh) * p.inv_dx * p.inv_dx))
    }

    /// Values at the interior vertex must agree across its edges.
    pub fn validate(&self, g: &LevelGraph<T>) -> Result<()> {
        let Some(vx) = g.interior_vertex.as_ref() else { return Ok(()) };
        let vals = vx.edges.iter().map(|&e| self.eval(e, vx.h_star).map(|x| x.0)).collect::<Result<Vec<_>>>()?;
        let scale = vals.iter().fold(T::one(), |a, v| a.max(v.abs()));
        for v in &vals {
            if (*v - vals[0]).abs() > lit::<T>(1e-12) * scale {
                return Err(Error::InvalidMeasure(format!("test function {} is discontinuous at the vertex", self.label)));
            }
        }
        Ok(())
    }

    /// `Σ σ_i β_i g_i'(h*)`: zero for functions in the domain of the limit generator.
    pub fn kirchhoff_defect(&self, g: &LevelGraph<T>, beta: &[T]) -> Result<T> {
        let Some(vx) = g.interior_vertex.as_ref() else { return Ok(T::zero()) };
        let mut acc = T::zero();
        for &e in &vx.edges {
            let d = self.eval(e, vx.h_star)?.1;
            acc = acc + lit::<T>(g.orientation(e) as f64) * beta[e] * d;
        }
        Ok(acc)
    }
}

/// `A^ε(g∘Π)(x)`. The Hamiltonian transport terms
/// `(p/ε) g' V' − (V'/ε) g' p` cancel identically, leaving `g' + g'' p²`.
pub fn apply_generator_composed<T: Real>(v: &Potential<T>, graph: &LevelGraph<T>, g: &GraphTestFunction<T>, x: PhasePoint<T>, epsilon: T) -> Result<T> {
    if !(epsilon > T::zero()) {
        return Err(Error::InvalidConfig("epsilon must be positive".into()));
    }
    let y = project_or_vertex(graph, v, x);
    let (_, d1, d2) = g.eval(y.edge, y.h)?;
    Ok(d1 + d2 * x.p * x.p)
}

/// Monte Carlo estimate with its standard error, split into the linear
/// (Dynkin) part and the quadratic part: `value = linear − quadratic`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DualEstimate {
    pub value: f64,
    pub std_error: f64,
    pub linear: f64,
    pub linear_se: f64,
    pub quadratic: f64,
    pub quadratic_se: f64,
    /// Covariance of the per-trajectory linear and quadratic means.
    pub covariance: f64,
}

impl DualEstimate {
    /// The estimate for `s·g`: linear part scales by `s`, quadratic by `s²`.
    pub fn scaled(&self, s: f64) -> Self {
        let s2 = s * s;
        let var = s2 * self.linear_se.powi(2) + s2 * s2 * self.quadratic_se.powi(2) - 2.0 * s * s2 * self.covariance;
        Self {
            value: s * self.linear - s2 * self.quadratic,
            std_error: var.max(0.0).sqrt(),
            linear: s * self.linear,
            linear_se: s.abs() * self.linear_se,
            quadratic: s2 * self.quadratic,
            quadratic_se: s2 * self.quadratic_se,
            covariance: s * s2 * self.covariance,
        }
    }
}

/// Trapezoid weights on a time grid.
pub fn trapezoid_weights<T: Real>(times: &[T]) -> Vec<T> {
    let n = times.len();
    let mut w = vec![T::zero(); n];
    for k in 1..n {
        let half = (times[k] - times[k - 1]) * lit(0.5);
        w[k - 1] = w[k - 1] + half;
        w[k] = w[k] + half;
    }
    w
}

/// Per-atom values along a path: `(edge, h, second moment)` at every snapshot.
/// The second moment is `p²` for phase-space atoms and `S/T` for graph atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedPath<T> {
    pub times: Vec<T>,
    /// `atoms[k]`: `(edge, h, weight, p2)` at snapshot `k`.
    pub atoms: Vec<Vec<(EdgeId, T, T, T)>>,
    /// Whether atom `i` is the same particle in every snapshot (enables
    /// per-trajectory standard errors).
    pub aligned: bool,
}

impl<T: Real> PreparedPath<T> {
    pub fn from_ensemble(ensemble: &EnsemblePath<T>, graph: &LevelGraph<T>, v: &Potential<T>) -> Self {
        let atoms = ensemble
            .states
            .iter()
            .map(|slice| {
                let w = T::one() / lit(slice.len() as f64);
                slice
                    .iter()
                    .map(|&x| {
                        let y = project_or_vertex(graph, v, x);
                        (y.edge, y.h, w, x.p * x.p)
                    })
                    .collect()
            })
            .collect();
        Self { times: ensemble.times.clone(), atoms, aligned: true }
    }

    /// Histogram cells become atoms at their centres.
    pub fn from_graph_path(path: &GraphMeasurePath<T>, c: &CoefficientSet<T>) -> Self {
        let mut aligned = true;
        let atoms: Vec<Vec<_>> = path
            .measures
            .iter()
            .map(|m| match m {
                GraphMeasure::Atoms(a) => a.iter().map(|(y, w)| (y.edge, y.h, *w, c.p2_avg(y.edge, y.h))).collect(),
                GraphMeasure::Histogram(hist) => {
                    aligned = false;
                    let mut out = Vec::new();
                    for (e, masses) in hist.masses.iter().enumerate() {
                        let b = &hist.bins.edges[e];
                        for (k, &w) in masses.iter().enumerate() {
                            if w != T::zero() {
                                let h = (b[k] + b[k + 1]) * lit(0.5);
                                out.push((e, h, w, c.p2_avg(e, h)));
                            }
                        }
                    }
                    out
                }
            })
            .collect();
        if atoms.windows(2).any(|w| w[0].len() != w[1].len()) {
            aligned = false;
        }
        Self { times: path.times.clone(), atoms, aligned }
    }

    /// Every other snapshot (keeping the last), for the time-step budget.
    pub fn coarsened(&self) -> Self {
        let n = self.times.len();
        let mut idx: Vec<usize> = (0..n).step_by(2).collect();
        if n > 0 && idx.last() != Some(&(n - 1)) {
            idx.push(n - 1);
        }
        Self {
            times: idx.iter().map(|&k| self.times[k]).collect(),
            atoms: idx.iter().map(|&k| self.atoms[k].clone()).collect(),
            aligned: self.aligned,
        }
    }
}

/// Evaluates the dual functional on a prepared path. Per-atom terms are
/// accumulated when the path is aligned, giving standard errors.
pub fn dual_functional<T: Real>(path: &PreparedPath<T>, g: &GraphTestFunction<T>) -> Result<DualEstimate> {
    let n_snap = path.times.len();
    if n_snap == 0 {
        return Ok(DualEstimate::default());
    }
    let w = trapezoid_weights(&path.times);
    if path.aligned {
        let n = path.atoms[0].len();
        let mut lin = vec![T::zero(); n];
        let mut quad = vec![T::zero(); n];
        let mut weights = vec![T::zero(); n];
        for (k, slice) in path.atoms.iter().enumerate() {
            for (i, &(e, h, wt, p2)) in slice.iter().enumerate() {
                let (val, d1, d2) = g.eval(e, h)?;
                let mut l = -w[k] * (d1 + d2 * p2);
                if k == 0 {
                    l = l - val;
                    weights[i] = wt;
                }
                if k == n_snap - 1 {
                    l = l + val;
                }
                lin[i] = lin[i] + l;
                quad[i] = quad[i] + w[k] * d1 * d1 * p2;
            }
        }
        Ok(weighted_stats(&weights, &lin, &quad))
    } else {
        let mut lin = T::zero();
        let mut quad = T::zero();
        for (k, slice) in path.atoms.iter().enumerate() {
            for &(e, h, wt, p2) in slice {
                let (val, d1, d2) = g.eval(e, h)?;
                let mut l = -w[k] * (d1 + d2 * p2);
                if k == 0 {
                    l = l - val;
                }
                if k == n_snap - 1 {
                    l = l + val;
                }
                lin = lin + wt * l;
                quad = quad + wt * w[k] * d1 * d1 * p2;
            }
        }
        Ok(DualEstimate { value: to_f64(lin - quad), linear: to_f64(lin), quadratic: to_f64(quad), ..DualEstimate::default() })
    }
}

fn weighted_stats<T: Real>(weights: &[T], lin: &[T], quad: &[T]) -> DualEstimate {
    let n = lin.len();
    let l: f64 = (0..n).map(|i| to_f64(weights[i] * lin[i])).sum();
    let q: f64 = (0..n).map(|i| to_f64(weights[i] * quad[i])).sum();
    if n < 2 {
        return DualEstimate { value: l - q, linear: l, quadratic: q, ..DualEstimate::default() };
    }
    // sample (co)variances of the per-trajectory terms, divided by n
    let (mut vl, mut vq, mut c) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let dl = to_f64(lin[i]) - l;
        let dq = to_f64(quad[i]) - q;
        vl += dl * dl;
        vq += dq * dq;
        c += dl * dq;
    }
    let norm = ((n - 1) * n) as f64;
    let (vl, vq, c) = (vl / norm, vq / norm, c / norm);
    DualEstimate {
        value: l - q,
        std_error: (vl + vq - 2.0 * c).max(0.0).sqrt(),
        linear: l,
        linear_se: vl.sqrt(),
        quadratic: q,
        quadratic_se: vq.sqrt(),
        covariance: c,
    }
}

/// `J^ε(ρ, g∘Π)` on a phase-space ensemble.
pub fn j_full<T: Real>(ensemble: &EnsemblePath<T>, g: &GraphTestFunction<T>, v: &Potential<T>, graph: &LevelGraph<T>) -> Result<DualEstimate> {
    dual_functional(&PreparedPath::from_ensemble(ensemble, graph, v), g)
}

/// `Ĵ^ε`: the coarse-grained functional with `p² → S/T`.
pub fn j_hat_eps<T: Real>(graph_path: &GraphMeasurePath<T>, c: &CoefficientSet<T>, g: &GraphTestFunction<T>) -> Result<DualEstimate> {
    dual_functional(&PreparedPath::from_graph_path(graph_path, c), g)
}

/// `Ĵ⁰` on a limit path (Fokker–Planck solution or graph ensemble). Same
/// formula as [`j_hat_eps`].
pub fn j_hat_zero<T: Real>(mu_path: &GraphMeasurePath<T>, c: &CoefficientSet<T>, g: &GraphTestFunction<T>) -> Result<DualEstimate> {
    dual_functional(&PreparedPath::from_graph_path(mu_path, c), g)
}

/// Derivatives of a general phase-space function: `(f, ∂_q f, ∂_p f, ∂²_p f)`.
pub type PhaseDerivatives<T> = (T, T, T, T);

/// `J^ε(ρ, f)` for an arbitrary time-independent `f(q, p)`.
pub fn j_full_general<T: Real>(ensemble: &EnsemblePath<T>, v: &Potential<T>, epsilon: T, f: impl Fn(PhasePoint<T>) -> PhaseDerivatives<T>) -> DualEstimate {
    let times = &ensemble.times;
    let w = trapezoid_weights(times);
    let n = ensemble.n();
    let last = times.len().saturating_sub(1);
    let mut lin = vec![T::zero(); n];
    let mut quad = vec![T::zero(); n];
    for (k, slice) in ensemble.states.iter().enumerate() {
        for (i, &x) in slice.iter().enumerate() {
            let (val, fq, fp, fpp) = f(x);
            let gen = x.p / epsilon * fq - v.grad(x.q) / epsilon * fp + fpp;
            let mut l = -w[k] * gen;
            if k == 0 {
                l = l - val;
            }
            if k == last {
                l = l + val;
            }
            lin[i] = lin[i] + l;
            quad[i] = quad[i] + w[k] * fp * fp;
        }
    }
    let weights = vec![T::one() / lit(n.max(1) as f64); n];
    weighted_stats(&weights, &lin, &quad)
}

/// Parameters of the deterministic test family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilySpec {
    /// Number of base members (the constant included).
    pub size: usize,
    /// Upper end of the support on the unbounded edge.
    pub h_max: f64,
    /// Global shapes are constant above this energy.
    pub h_cut: f64,
    /// Knot intervals on bounded and unbounded edges.
    pub intervals_bounded: usize,
    pub intervals_unbounded: usize,
    pub scales: Vec<f64>,
}

impl Default for FamilySpec {
    fn default() -> Self {
        Self { size: 64, h_max: 16.0, h_cut: 6.0, intervals_bounded: 128, intervals_unbounded: 512, scales: vec![1.0, 0.1, 0.01, 0.001] }
    }
}

/// `(1 − x²)³` on `|x| < 1` with two derivatives (C² across `|x| = 1`).
fn kernel(x: f64) -> (f64, f64, f64) {
    if x.abs() >= 1.0 {
        return (0.0, 0.0, 0.0);
    }
    let u = 1.0 - x * x;
    (u * u * u, -6.0 * x * u * u, 24.0 * x * x * u - 6.0 * u * u)
}

#[derive(Debug, Clone, Copy)]
enum Shape {
    Constant,
    /// `∫ (1 − h/h_cut)²` on every edge.
    Ramp,
    /// Kernel bump in `h` on every edge.
    GlobalBump { center: f64, radius: f64 },
    /// Kernel bump on one edge only.
    EdgeBump { edge: EdgeId, center: f64, radius: f64 },
    /// `(h − h*)²` times a kernel of radius `radius`, on one edge only.
    VertexFlat { edge: EdgeId, radius: f64 },
}

impl Shape {
    /// `(g, g', g'')`.
    fn eval(self, edge: EdgeId, h: f64, h_star: f64, h_cut: f64) -> (f64, f64, f64) {
        let bump = |center: f64, radius: f64| {
            let (k, dk, ddk) = kernel((h - center) / radius);
            (k, dk / radius, ddk / (radius * radius))
        };
        match self {
            Shape::Constant => (1.0, 0.0, 0.0),
            Shape::Ramp => {
                if h >= h_cut {
                    (h_cut / 3.0, 0.0, 0.0)
                } else {
                    let u = 1.0 - h / h_cut;
                    (h_cut / 3.0 * (1.0 - u * u * u), u * u, -2.0 * u / h_cut)
                }
            }
            Shape::GlobalBump { center, radius } => bump(center, radius),
            Shape::EdgeBump { edge: e, center, radius } => {
                if e != edge {
                    return (0.0, 0.0, 0.0);
                }
                bump(center, radius)
            }
            Shape::VertexFlat { edge: e, radius } => {
                if e != edge {
                    return (0.0, 0.0, 0.0);
                }
                let d = h - h_star;
                let (k, dk, ddk) = bump(h_star, radius);
                (d * d * k, 2.0 * d * k + d * d * dk, 2.0 * k + 4.0 * d * dk + d * d * ddk)
            }
        }
    }

    fn label(self, g_names: &[&str]) -> String {
        match self {
            Shape::Constant => "const".into(),
            Shape::Ramp => "ramp".into(),
            Shape::GlobalBump { center, radius } => format!("bump(c={center},r={radius})"),
            Shape::EdgeBump { edge, center, radius } => format!("bump(c={center},r={radius})@{}", g_names[edge]),
            Shape::VertexFlat { edge, radius } => format!("vflat(r={radius})@{}", g_names[edge]),
        }
    }
}

/// Deterministic test family: the constant, then signed pairs of ramps,
/// global bumps, per-edge bumps away from the vertex and vertex-flat
/// quadratics, truncated to `spec.size`; each member is repeated at every
/// scale in `spec.scales`. All members are continuous with a common slope
/// at the vertex.
pub fn make_test_family<T: Real>(g: &LevelGraph<T>, spec: &FamilySpec) -> Vec<GraphTestFunction<T>> {
    let h_star = g.h_star().map(to_f64);
    let names: Vec<&str> = g.edges.iter().map(|e| e.side.name()).collect();
    let mut shapes = vec![Shape::Ramp];
    if let Some(hs) = h_star {
        for e in &g.edges {
            let radius = if e.h_hi.is_finite() { 0.8 * (hs - to_f64(e.h_lo)) } else { 1.0 };
            shapes.push(Shape::VertexFlat { edge: e.id, radius });
        }
    }
    for &(center, radius) in &[(0.05, 0.05), (0.15, 0.1), (0.3, 0.15), (0.5, 0.25), (0.75, 0.375), (1.0, 0.5), (1.5, 0.75), (2.0, 1.0), (3.0, 1.5), (4.0, 1.5)] {
        shapes.push(Shape::GlobalBump { center, radius });
    }
    for e in &g.edges {
        let (lo, hi) = (to_f64(e.h_lo), if e.h_hi.is_finite() { to_f64(e.h_hi) } else { f64::INFINITY });
        match e.side {
            Side::LeftWell | Side::RightWell => {
                let width = hi - lo;
                for j in 1..=5 {
                    let c = lo + width * j as f64 / 6.0;
                    shapes.push(Shape::EdgeBump { edge: e.id, center: c, radius: width / 6.0 });
                }
            }
            Side::AboveSaddle => {
                for &(dc, r) in &[(0.3, 0.25), (0.5, 0.25), (0.75, 0.5), (1.0, 0.5), (1.5, 1.0), (2.0, 1.0), (3.0, 2.0), (4.0, 2.0), (6.0, 2.0)] {
                    shapes.push(Shape::EdgeBump { edge: e.id, center: lo + dc, radius: r });
                }
            }
            Side::Whole => {}
        }
    }
    let mut members: Vec<(Shape, f64)> = vec![(Shape::Constant, 1.0)];
    for s in shapes {
        members.push((s, 1.0));
        members.push((s, -1.0));
    }
    members.truncate(spec.size);
    let intervals: Vec<usize> = g.edges.iter().map(|e| if e.h_hi.is_finite() { spec.intervals_bounded } else { spec.intervals_unbounded }).collect();
    let h_max: T = lit(spec.h_max);
    let mut out: Vec<GraphTestFunction<T>> = Vec::with_capacity(members.len() * spec.scales.len());
    let base_scale = spec.scales.first().copied().unwrap_or(1.0);
    for (j, &scale) in spec.scales.iter().enumerate() {
        for (m, &(shape, sign)) in members.iter().enumerate() {
            let a = sign * scale;
            let label = format!("{}{}", if a < 0.0 { "-" } else { "" }, if scale == 1.0 { shape.label(&names) } else { format!("{scale}*{}", shape.label(&names)) });
            let mut f = GraphTestFunction::from_fn(g, &intervals, h_max, label, |e, h| {
                let (v, d, dd) = shape.eval(e, to_f64(h), h_star.unwrap_or(f64::NAN), spec.h_cut);
                (lit(a * v), lit(a * d), lit(a * dd))
            });
            if j > 0 && base_scale != 0.0 {
                f.origin = Some((m, scale / base_scale));
            }
            out.push(f);
        }
    }
    out
}

/// Moves every atom (histogram cells: their centres) by `dh` in energy.
/// Atoms on a lower edge pushed past the vertex continue on the upper edge.
pub fn shift_path<T: Real>(path: &GraphMeasurePath<T>, g: &LevelGraph<T>, dh: T) -> GraphMeasurePath<T> {
    let upper = g.edges.iter().find(|e| g.orientation(e.id) == 1).map(|e| e.id);
    let shift = |y: GraphPoint<T>| -> GraphPoint<T> {
        let h = y.h + dh;
        let e = g.edge(y.edge);
        match upper {
            Some(up) if h > e.h_hi => GraphPoint::new(up, h),
            _ => GraphPoint::new(y.edge, h.max(e.h_lo)),
        }
    };
    let measures = path
        .measures
        .iter()
        .map(|m| match m {
            GraphMeasure::Atoms(a) => GraphMeasure::Atoms(a.iter().map(|&(y, w)| (shift(y), w)).collect()),
            GraphMeasure::Histogram(hist) => {
                let mut out = Vec::new();
                for (e, masses) in hist.masses.iter().enumerate() {
                    let b = &hist.bins.edges[e];
                    for (k, &w) in masses.iter().enumerate() {
                        if w != T::zero() {
                            out.push((shift(GraphPoint::new(e, (b[k] + b[k + 1]) * lit(0.5))), w));
                        }
                    }
                }
                GraphMeasure::Atoms(out)
            }
        })
        .collect();
    GraphMeasurePath { times: path.times.clone(), measures }
}

/// One test function at one `ε`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualityRow {
    pub epsilon: f64,
    pub index: usize,
    pub label: String,
    pub j_full: DualEstimate,
    pub j_hat_eps: DualEstimate,
    /// `|J^ε − Ĵ^ε|`, the local-equilibrium substitution error.
    pub substitution_error: f64,
    /// Trapezoid error estimates `|J_Δ − J_2Δ|` (no asymptotic rate assumed).
    pub time_budget_full: f64,
    pub time_budget_hat: f64,
    /// `3 SE + time budget`.
    pub tolerance_full: f64,
    pub tolerance_hat: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSummary {
    pub epsilon: f64,
    pub sup_j_full: f64,
    pub sup_j_hat_eps: f64,
    /// `max_g (J(g) − tolerance(g))`; non-positive at a zero level.
    pub max_excess_full: f64,
    pub max_excess_hat_eps: f64,
    pub mean_substitution_error: f64,
    pub max_substitution_error: f64,
    /// `sup J^ε ≥ sup Ĵ^ε − max substitution error − tolerance`.
    pub chain_holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitRow {
    pub index: usize,
    pub label: String,
    pub j_hat_zero: DualEstimate,
    pub time_budget: f64,
    /// Refinement differences, see [`inequality_chain_report`].
    pub grid_budget: f64,
    pub tolerance: f64,
}

/// Family suprema are lower bounds for the true suprema over all test
/// functions. An empty family reports `−∞` (serialised as `null`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualityReport {
    pub family_size: usize,
    pub rows: Vec<DualityRow>,
    pub summaries: Vec<EpsilonSummary>,
    pub limit_rows: Vec<LimitRow>,
    pub sup_j_hat_zero: f64,
    pub max_excess_hat_zero: f64,
    /// Some `Ĵ⁰(g)` exceeds its tolerance: the limit input is not a zero.
    pub off_solution: bool,
    /// `sup Ĵ⁰(limit) ≤ max_ε sup J^ε + tolerance`.
    pub liminf_shadow_holds: bool,
    pub warnings: Vec<String>,
}

/// One `ε` of the sweep: the phase-space ensemble at that `ε`.
pub struct EpsilonInput<'a, T> {
    pub epsilon: T,
    pub ensemble: &'a EnsemblePath<T>,
}

fn sup(values: impl Iterator<Item = f64>) -> f64 {
    values.fold(f64::NEG_INFINITY, f64::max)
}

/// Evaluates `eval` on every member, deriving scaled members from their
/// origin instead of re-running the estimator.
fn family_estimates<T, F>(family: &[GraphTestFunction<T>], eval: F) -> Result<Vec<Vec<DualEstimate>>>
where
    T: Real,
    F: Fn(&GraphTestFunction<T>) -> Result<Vec<DualEstimate>> + Sync,
{
    let direct: Vec<Option<Vec<DualEstimate>>> = family
        .par_iter()
        .map(|f| match f.origin {
            Some((b, _)) if b < family.len() && family[b].origin.is_none() => Ok(None),
            _ => eval(f).map(Some),
        })
        .collect::<Result<_>>()?;
    Ok(family
        .iter()
        .zip(&direct)
        .map(|(f, d)| match (d, f.origin) {
            (Some(e), _) => e.clone(),
            (None, Some((b, s))) => direct[b].as_ref().expect("origin evaluated").iter().map(|e| e.scaled(s)).collect(),
            (None, None) => unreachable!(),
        })
        .collect())
}

/// Evaluates the family on every ε and on the limit path and checks the
/// inequality chain. `limit_coarse` holds solves of the same limit problem on
/// successively halved grids and supplies the grid budget
/// `max_k |J_k − J_{k+1}| / 2^k` (level 0 is `limit`), which assumes at least
/// first-order convergence but not a monotone one.
pub fn inequality_chain_report<T: Real>(
    v: &Potential<T>,
    c: &CoefficientSet<T>,
    family: &[GraphTestFunction<T>],
    inputs: &[EpsilonInput<'_, T>],
    limit: &GraphMeasurePath<T>,
    limit_coarse: &[GraphMeasurePath<T>],
) -> Result<DualityReport> {
    let g = &c.graph;
    let mut warnings = Vec::new();
    if family.is_empty() {
        warnings.push("empty test family: suprema are -inf".to_string());
    }
    for f in family {
        f.validate(g)?;
    }
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    for input in inputs {
        let eps = to_f64(input.epsilon);
        let full = PreparedPath::from_ensemble(input.ensemble, g, v);
        let full_coarse = full.coarsened();
        let hat = PreparedPath::from_graph_path(&crate::measures::pushforward(input.ensemble, g, v), c);
        let hat_coarse = hat.coarsened();
        let est = family_estimates(family, |f| {
            Ok(vec![dual_functional(&full, f)?, dual_functional(&full_coarse, f)?, dual_functional(&hat, f)?, dual_functional(&hat_coarse, f)?])
        })?;
        let eps_rows: Vec<DualityRow> = family
            .iter()
            .zip(est)
            .enumerate()
            .map(|(index, (f, e))| {
                let (jf, jfc, jh, jhc) = (e[0], e[1], e[2], e[3]);
                let tf = (jf.value - jfc.value).abs();
                let th = (jh.value - jhc.value).abs();
                DualityRow {
                    epsilon: eps,
                    index,
                    label: f.label.clone(),
                    j_full: jf,
                    j_hat_eps: jh,
                    substitution_error: (jf.value - jh.value).abs(),
                    time_budget_full: tf,
                    time_budget_hat: th,
                    tolerance_full: 3.0 * jf.std_error + tf,
                    tolerance_hat: 3.0 * jh.std_error + th,
                }
            })
            .collect();
        let sup_full = sup(eps_rows.iter().map(|r| r.j_full.value));
        let sup_hat = sup(eps_rows.iter().map(|r| r.j_hat_eps.value));
        let max_sub = sup(eps_rows.iter().map(|r| r.substitution_error));
        let mean_sub = if eps_rows.is_empty() { f64::NAN } else { eps_rows.iter().map(|r| r.substitution_error).sum::<f64>() / eps_rows.len() as f64 };
        let max_tol = sup(eps_rows.iter().map(|r| r.tolerance_full.max(r.tolerance_hat)));
        summaries.push(EpsilonSummary {
            epsilon: eps,
            sup_j_full: sup_full,
            sup_j_hat_eps: sup_hat,
            max_excess_full: sup(eps_rows.iter().map(|r| r.j_full.value - r.tolerance_full)),
            max_excess_hat_eps: sup(eps_rows.iter().map(|r| r.j_hat_eps.value - r.tolerance_hat)),
            mean_substitution_error: mean_sub,
            max_substitution_error: max_sub,
            chain_holds: eps_rows.is_empty() || sup_full >= sup_hat - max_sub - max_tol,
        });
        rows.extend(eps_rows);
    }

    let lim = PreparedPath::from_graph_path(limit, c);
    let lim_time = lim.coarsened();
    let lim_coarse: Vec<_> = limit_coarse.iter().map(|p| PreparedPath::from_graph_path(p, c)).collect();
    let est = family_estimates(family, |f| {
        let mut out = vec![dual_functional(&lim, f)?, dual_functional(&lim_time, f)?];
        for p in &lim_coarse {
            out.push(dual_functional(p, f)?);
        }
        Ok(out)
    })?;
    let limit_rows: Vec<LimitRow> = family
        .iter()
        .zip(est)
        .enumerate()
        .map(|(index, (f, e))| {
            let j = e[0];
            let tb = (j.value - e[1].value).abs();
            let levels: Vec<f64> = std::iter::once(j.value).chain(e[2..].iter().map(|x| x.value)).collect();
            let gb = levels.windows(2).enumerate().map(|(k, w)| (w[0] - w[1]).abs() / f64::powi(2.0, k as i32)).fold(0.0, f64::max);
            LimitRow { index, label: f.label.clone(), j_hat_zero: j, time_budget: tb, grid_budget: gb, tolerance: 3.0 * j.std_error + tb + gb }
        })
        .collect();
    let sup_zero = sup(limit_rows.iter().map(|r| r.j_hat_zero.value));
    let max_excess_zero = sup(limit_rows.iter().map(|r| r.j_hat_zero.value - r.tolerance));
    let zero_tol = sup(limit_rows.iter().map(|r| r.tolerance));
    let best_eps = sup(summaries.iter().map(|s| s.sup_j_full));
    if lim_coarse.is_empty() {
        warnings.push("no coarse limit path: grid budget omitted".to_string());
    }
    Ok(DualityReport {
        family_size: family.len(),
        rows,
        summaries,
        limit_rows,
        sup_j_hat_zero: sup_zero,
        max_excess_hat_zero: max_excess_zero,
        off_solution: max_excess_zero > 0.0,
        liminf_shadow_holds: family.is_empty() || inputs.is_empty() || sup_zero <= best_eps + zero_tol,
        warnings,
    })
}
