//! The graph of connected level-set components of `H`, the projection of
//! phase space onto it, and the action/period integrals along its edges.
//!
//! Edges are oriented by increasing energy. For the double well the two well
//! edges run from their leaf (the well bottom) up to the saddle energy `h*`,
//! and the upper edge runs from `h*` to infinity. A single-well potential
//! gives a one-edge graph without an interior vertex; it is used for checks
//! against the harmonic oscillator.
//!
//! Action and period are computed after the substitution
//! `q = c + r sin θ` on the orbit `[q₋, q₊]`. Writing
//! `h − V(q) = (q₊ − q)(q − q₋) R(q)` with the polynomial quotient `R > 0`
//! on the branch, both integrands become smooth in `θ`:
//!
//! ```text
//! S(h) = 2 ∫ r² cos²θ √(2R) dθ,     T(h) = 2 ∫ dθ / √(2R),     θ ∈ [−π/2, π/2]
//! ```

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::{bisect, critical_points, hamiltonian, horner, CriticalKind, PhasePoint, Potential};
use crate::interp::MonotoneCubic;
use crate::quadrature::integrate;
use crate::scalar::{lit, to_f64, tol, Real};

pub type EdgeId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    LeftWell,
    RightWell,
    AboveSaddle,
    /// The only edge of a single-well graph.
    Whole,
}

impl Side {
    pub fn name(self) -> &'static str {
        match self {
            Side::LeftWell => "left_well",
            Side::RightWell => "right_well",
            Side::AboveSaddle => "above_saddle",
            Side::Whole => "whole",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge<T> {
    pub id: EdgeId,
    pub h_lo: T,
    /// `+∞` for the unbounded edge.
    pub h_hi: T,
    pub side: Side,
    /// Positions that the branch's orbits live in.
    pub q_bracket: (T, T),
}

impl<T: Real> Edge<T> {
    pub fn contains(&self, h: T) -> bool {
        h >= self.h_lo && h <= self.h_hi
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InteriorVertex<T> {
    pub h_star: T,
    pub q_saddle: T,
    pub edges: Vec<EdgeId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Leaf<T> {
    pub edge: EdgeId,
    pub h: T,
    pub q: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelGraph<T> {
    pub edges: Vec<Edge<T>>,
    pub interior_vertex: Option<InteriorVertex<T>>,
    pub leaf_vertices: Vec<Leaf<T>>,
}

pub const LEFT: EdgeId = 0;
pub const RIGHT: EdgeId = 1;
pub const ABOVE: EdgeId = 2;

/// Builds the three-edge graph of a double-well potential.
pub fn build_graph<T: Real>(v: &Potential<T>) -> Result<LevelGraph<T>> {
    let cps = critical_points(v)?;
    let kinds: Vec<CriticalKind> = cps.iter().map(|c| c.kind).collect();
    if kinds != [CriticalKind::Minimum, CriticalKind::Maximum, CriticalKind::Minimum] {
        return Err(Error::UnsupportedTopology(format!(
            "expected (min, max, min) critical points, found {kinds:?}"
        )));
    }
    let (left, saddle, right) = (cps[0], cps[1], cps[2]);
    let inf = T::infinity();
    let edges = vec![
        Edge { id: LEFT, h_lo: left.value, h_hi: saddle.value, side: Side::LeftWell, q_bracket: (-inf, saddle.q) },
        Edge { id: RIGHT, h_lo: right.value, h_hi: saddle.value, side: Side::RightWell, q_bracket: (saddle.q, inf) },
        Edge { id: ABOVE, h_lo: saddle.value, h_hi: inf, side: Side::AboveSaddle, q_bracket: (-inf, inf) },
    ];
    Ok(LevelGraph {
        edges,
        interior_vertex: Some(InteriorVertex { h_star: saddle.value, q_saddle: saddle.q, edges: vec![LEFT, RIGHT, ABOVE] }),
        leaf_vertices: vec![
            Leaf { edge: LEFT, h: left.value, q: left.q },
            Leaf { edge: RIGHT, h: right.value, q: right.q },
        ],
    })
}

impl<T: Real> LevelGraph<T> {
    /// One-edge graph of a single-well potential (no interior vertex).
    pub fn single_well(v: &Potential<T>) -> Result<Self> {
        let cps = critical_points(v)?;
        if cps.len() != 1 || cps[0].kind != CriticalKind::Minimum {
            return Err(Error::UnsupportedTopology("expected a single minimum".into()));
        }
        let m = cps[0];
        Ok(Self {
            edges: vec![Edge {
                id: 0,
                h_lo: m.value,
                h_hi: T::infinity(),
                side: Side::Whole,
                q_bracket: (T::neg_infinity(), T::infinity()),
            }],
            interior_vertex: None,
            leaf_vertices: vec![Leaf { edge: 0, h: m.value, q: m.q }],
        })
    }

    pub fn edge(&self, id: EdgeId) -> &Edge<T> {
        &self.edges[id]
    }

    pub fn h_star(&self) -> Option<T> {
        self.interior_vertex.as_ref().map(|v| v.h_star)
    }

    pub fn leaf_of(&self, edge: EdgeId) -> Option<&Leaf<T>> {
        self.leaf_vertices.iter().find(|l| l.edge == edge)
    }

    /// `+1` when the edge leaves the interior vertex upward, `−1` when it
    /// enters the vertex from below, `0` for a graph without a vertex.
    pub fn orientation(&self, edge: EdgeId) -> i8 {
        match self.edges[edge].side {
            Side::AboveSaddle => 1,
            Side::LeftWell | Side::RightWell => -1,
            Side::Whole => 0,
        }
    }

    /// Edge holding an energy `h` on the side of `q` (the non-erroring core of
    /// [`project`]).
    pub fn classify(&self, q: T, h: T) -> EdgeId {
        match &self.interior_vertex {
            None => 0,
            Some(vx) => {
                if h > vx.h_star {
                    ABOVE
                } else if q < vx.q_saddle {
                    LEFT
                } else {
                    RIGHT
                }
            }
        }
    }

    /// Minimum potential energy over all leaves.
    pub fn ground_energy(&self) -> T {
        self.leaf_vertices.iter().map(|l| l.h).fold(T::infinity(), T::min)
    }

    fn minimum_q(&self, edge: EdgeId) -> Option<T> {
        self.leaf_of(edge).map(|l| l.q)
    }
}

/// A point on the graph: an edge and an energy on it.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GraphPoint<T> {
    pub edge: EdgeId,
    pub h: T,
}

impl<T: Real> GraphPoint<T> {
    pub fn new(edge: EdgeId, h: T) -> Self {
        Self { edge, h }
    }
}

pub const SADDLE_TIE_TOLERANCE: f64 = 1e-12;

/// The coarse-graining map `x ↦ (component of {H = H(x)} containing x, H(x))`.
pub fn project<T: Real>(g: &LevelGraph<T>, v: &Potential<T>, x: PhasePoint<T>) -> Result<GraphPoint<T>> {
    let h = hamiltonian(v, x);
    if let Some(vx) = &g.interior_vertex {
        let tie: T = tol(SADDLE_TIE_TOLERANCE);
        if (h - vx.h_star).abs() < tie && (x.q - vx.q_saddle).abs() < tie {
            return Err(Error::AtSaddlePoint { q: to_f64(x.q), p: to_f64(x.p) });
        }
    }
    Ok(GraphPoint { edge: g.classify(x.q, h), h })
}

/// Like [`project`], but a point on the saddle maps to the vertex, recorded
/// on the upper edge.
pub fn project_or_vertex<T: Real>(g: &LevelGraph<T>, v: &Potential<T>, x: PhasePoint<T>) -> GraphPoint<T> {
    let h = hamiltonian(v, x);
    match project(g, v, x) {
        Ok(y) => y,
        Err(_) => GraphPoint { edge: ABOVE, h },
    }
}

fn check_range<T: Real>(g: &LevelGraph<T>, edge: EdgeId, h: T) -> Result<&Edge<T>> {
    let e = g.edges.get(edge).ok_or(Error::OutOfRange { edge, h: to_f64(h) })?;
    if !e.contains(h) || !h.is_finite() {
        return Err(Error::OutOfRange { edge, h: to_f64(h) });
    }
    Ok(e)
}

/// Moves outward from `start` in steps of growing size until `V(q) > h`.
fn outer_bracket<T: Real>(v: &Potential<T>, start: T, direction: T, h: T) -> T {
    let mut step = T::one();
    let mut q = start + direction * step;
    while v.eval(q) <= h {
        step = step * lit(2.0);
        q = start + direction * step;
    }
    q
}

fn root<T: Real>(v: &Potential<T>, h: T, a: T, b: T) -> T {
    let r = bisect(|q| v.eval(q) - h, a, b, T::zero());
    // one Newton polish step, kept only if it improves the residual
    let d = v.grad(r);
    if d.is_zero() {
        return r;
    }
    let polished = r - (v.eval(r) - h) / d;
    if (v.eval(polished) - h).abs() < (v.eval(r) - h).abs() && polished >= a.min(b) && polished <= a.max(b) {
        polished
    } else {
        r
    }
}

/// Orbit endpoints `q₋ < q₊` with `V(q±) = h` on the given branch.
pub fn turning_points<T: Real>(g: &LevelGraph<T>, v: &Potential<T>, edge: EdgeId, h: T) -> Result<(T, T)> {
    let e = check_range(g, edge, h)?;
    let (lo, hi) = match e.side {
        Side::LeftWell | Side::RightWell => {
            let qm = g.minimum_q(edge).expect("well edge has a leaf");
            let qs = g.interior_vertex.as_ref().expect("double well has a vertex").q_saddle;
            if e.side == Side::LeftWell {
                (root(v, h, outer_bracket(v, qm, -T::one(), h), qm), root(v, h, qm, qs))
            } else {
                (root(v, h, qs, qm), root(v, h, qm, outer_bracket(v, qm, T::one(), h)))
            }
        }
        Side::AboveSaddle => {
            let ql = g.minimum_q(LEFT).expect("left leaf");
            let qr = g.minimum_q(RIGHT).expect("right leaf");
            (root(v, h, outer_bracket(v, ql, -T::one(), h), ql), root(v, h, qr, outer_bracket(v, qr, T::one(), h)))
        }
        Side::Whole => {
            let qm = g.minimum_q(edge).expect("single well leaf");
            (root(v, h, outer_bracket(v, qm, -T::one(), h), qm), root(v, h, qm, outer_bracket(v, qm, T::one(), h)))
        }
    };
    Ok((lo, hi))
}

/// `q(θ)` and the quotient `R(q(θ))` for an orbit.
struct Orbit<T> {
    center: T,
    radius: T,
    quotient: Vec<T>,
}

impl<T: Real> Orbit<T> {
    fn new(v: &Potential<T>, h: T, q_lo: T, q_hi: T) -> Self {
        Self {
            center: (q_lo + q_hi) * lit(0.5),
            radius: (q_hi - q_lo) * lit(0.5),
            quotient: v.level_quotient(h, q_lo, q_hi),
        }
    }

    fn two_r(&self, theta: T) -> T {
        let q = self.center + self.radius * theta.sin();
        let r = horner(&self.quotient, q);
        (r * lit(2.0)).max(T::min_positive_value())
    }
}

pub const ACTION_TOLERANCE: f64 = 1e-11;
pub const PERIOD_TOLERANCE: f64 = 1e-9;

/// `S(h) = ∮ |p| dq`, the phase-space area enclosed by the orbit.
pub fn action<T: Real>(g: &LevelGraph<T>, v: &Potential<T>, edge: EdgeId, h: T) -> Result<T> {
    let (a, b) = turning_points(g, v, edge, h)?;
    if a >= b {
        return Ok(T::zero());
    }
    let orbit = Orbit::new(v, h, a, b);
    let r2 = orbit.radius * orbit.radius;
    let half_pi = T::FRAC_PI_2();
    let integral = integrate(
        |theta: T| {
            let c = theta.cos();
            r2 * c * c * orbit.two_r(theta).sqrt()
        },
        -half_pi,
        half_pi,
        tol(ACTION_TOLERANCE * 0.5),
    )?;
    Ok(integral * lit(2.0))
}

/// `T(h) = ∮ dq / |p|`, the period of the orbit.
pub fn period<T: Real>(g: &LevelGraph<T>, v: &Potential<T>, edge: EdgeId, h: T, delta_sing: T) -> Result<T> {
    check_range(g, edge, h)?;
    if let Some(h_star) = g.h_star() {
        // slack of a few ulps so that band-edge energies like h* − δ are admitted
        if (h - h_star).abs() < delta_sing * (T::one() - lit(1e-9)) {
            return Err(Error::NearSaddle { h: to_f64(h), band: to_f64(delta_sing) });
        }
    }
    let (a, b) = turning_points(g, v, edge, h)?;
    let half_pi = T::FRAC_PI_2();
    let orbit = Orbit::new(v, h, a, b);
    let integral = integrate(|theta: T| orbit.two_r(theta).sqrt().recip(), -half_pi, half_pi, tol(PERIOD_TOLERANCE * 0.5))?;
    Ok(integral * lit(2.0))
}

/// Parameters for tabulating the limit coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub points_per_edge: usize,
    /// Exclusion band around the saddle energy.
    pub delta_sing: f64,
    /// Exclusion band above leaf energies.
    pub delta_floor: f64,
    /// Upper end of the table on the unbounded edge.
    pub h_max: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { points_per_edge: 256, delta_sing: 1e-4, delta_floor: 1e-6, h_max: 3.0 }
    }
}

/// `count` points from `start` outward by geometric offsets `start ± d`,
/// `d` from `d_min` to `d_max`.
fn geometric<T: Real>(count: usize, d_min: T, d_max: T) -> Vec<T> {
    if count == 1 {
        return vec![d_min];
    }
    let ratio = (d_max / d_min).ln();
    (0..count).map(|k| d_min * (ratio * lit(k as f64 / (count - 1) as f64)).exp()).collect()
}

/// Energies at which an edge is tabulated.
pub fn edge_grid<T: Real>(g: &LevelGraph<T>, edge: EdgeId, spec: &GridSpec) -> Vec<T> {
    let e = g.edge(edge);
    let m = spec.points_per_edge.max(4);
    let ds: T = lit(spec.delta_sing);
    let df: T = lit(spec.delta_floor);
    let mut grid = match e.side {
        Side::LeftWell | Side::RightWell => {
            // geometric clustering toward both the leaf and the saddle
            let half = (e.h_hi - e.h_lo) * lit(0.5);
            let n_lo = m / 2;
            let n_hi = m - n_lo;
            let mut pts: Vec<T> = geometric(n_lo, df, half).into_iter().map(|d| e.h_lo + d).collect();
            let mut upper: Vec<T> = geometric(n_hi, ds, half).into_iter().map(|d| e.h_hi - d).collect();
            upper.reverse();
            pts.extend(upper);
            pts
        }
        Side::AboveSaddle => {
            let h_max: T = lit(spec.h_max);
            geometric(m, ds, h_max - e.h_lo).into_iter().map(|d| e.h_lo + d).collect()
        }
        Side::Whole => {
            let h_max: T = lit(spec.h_max);
            geometric(m, df, h_max - e.h_lo).into_iter().map(|d| e.h_lo + d).collect()
        }
    };
    grid.dedup_by(|a, b| (*a - *b).abs() <= T::epsilon() * b.abs().max(T::one()));
    grid
}

/// Tabulated action and period on one edge, with monotone interpolation.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeCoefficients<T> {
    pub edge: EdgeId,
    /// Energy of the edge's lower vertex.
    pub h_lo: T,
    /// Energy of the edge's upper vertex (`+∞` if unbounded).
    pub h_hi: T,
    /// Whether the lower vertex is a leaf (well bottom), where `S → 0`.
    pub leaf_below: bool,
    action: MonotoneCubic<T>,
    period: MonotoneCubic<T>,
}

impl<T: Real> EdgeCoefficients<T> {
    /// Wraps an arbitrary table. `grid` must be strictly increasing and `period` positive.
    pub fn from_table(edge: EdgeId, h_lo: T, h_hi: T, leaf_below: bool, grid: Vec<T>, action: Vec<T>, period: Vec<T>) -> Result<Self> {
        if grid.len() < 2 || grid.len() != action.len() || grid.len() != period.len() {
            return Err(Error::InvalidConfig("coefficient table needs >= 2 rows of equal length".into()));
        }
        if grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidConfig("coefficient grid must be strictly increasing".into()));
        }
        if period.iter().any(|&t| t <= T::zero() || !t.is_finite()) || action.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidConfig("coefficient table values must be finite with T > 0".into()));
        }
        Ok(Self {
            edge,
            h_lo,
            h_hi,
            leaf_below,
            action: MonotoneCubic::new(grid.clone(), action),
            period: MonotoneCubic::new(grid, period),
        })
    }

    pub fn grid(&self) -> &[T] {
        self.action.x()
    }

    pub fn action_values(&self) -> &[T] {
        self.action.y()
    }

    pub fn period_values(&self) -> &[T] {
        self.period.y()
    }

    /// `S(h)`. Below the table `S` is continued linearly to zero at the
    /// leaf; above an unbounded edge's table it is continued as a power law.
    pub fn action(&self, h: T) -> T {
        let (x0, y0) = self.action.first();
        let (x1, y1) = self.action.last();
        if h < x0 {
            if self.leaf_below && x0 > self.h_lo && h >= self.h_lo {
                return y0 * (h - self.h_lo) / (x0 - self.h_lo);
            }
            return y0;
        }
        if h > x1 {
            if !self.h_hi.is_finite() {
                return power_law(self.action.x(), self.action.y(), self.h_lo, h);
            }
            return y1;
        }
        self.action.eval(h)
    }

    /// `T(h)`, held constant beyond the table except for power-law
    /// continuation on an unbounded edge.
    pub fn period(&self, h: T) -> T {
        let (x1, _) = self.period.last();
        if h > x1 && !self.h_hi.is_finite() {
            return power_law(self.period.x(), self.period.y(), self.h_lo, h);
        }
        self.period.eval(h)
    }

    /// Microcanonical average `⟨p²⟩_h = S/T`.
    pub fn p2_avg(&self, h: T) -> T {
        self.action(h) / self.period(h)
    }

    /// Diffusion coefficient `a(h) = 2 S/T` of the limit energy process.
    pub fn diffusion(&self, h: T) -> T {
        self.p2_avg(h) * lit(2.0)
    }
}

/// Continues a positive table beyond its end as `y ∝ (h − h_ref)^k`, with `k`
/// fitted to the last two rows.
fn power_law<T: Real>(x: &[T], y: &[T], h_ref: T, h: T) -> T {
    let n = x.len();
    let (xa, xb) = (x[n - 2] - h_ref, x[n - 1] - h_ref);
    let (ya, yb) = (y[n - 2], y[n - 1]);
    if ya <= T::zero() || yb <= T::zero() || xa <= T::zero() {
        return yb;
    }
    let k = (yb / ya).ln() / (xb / xa).ln();
    yb * ((h - h_ref) / xb).powf(k)
}

/// Tables for every edge of a graph, plus the parameters they were built with.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSet<T> {
    pub graph: LevelGraph<T>,
    pub edges: Vec<EdgeCoefficients<T>>,
    pub delta_sing: T,
    pub delta_floor: T,
    pub h_max: T,
    /// `S_i(h*)` evaluated by quadrature at the saddle energy itself, when
    /// the tables were built from a potential.
    pub vertex_actions: Option<Vec<T>>,
}

impl<T: Real> CoefficientSet<T> {
    /// Wraps hand-made tables (no exact vertex actions).
    pub fn from_tables(graph: LevelGraph<T>, edges: Vec<EdgeCoefficients<T>>, delta_sing: T, delta_floor: T, h_max: T) -> Self {
        Self { graph, edges, delta_sing, delta_floor, h_max, vertex_actions: None }
    }

    pub fn edge(&self, id: EdgeId) -> &EdgeCoefficients<T> {
        &self.edges[id]
    }

    /// Clamps energies inside the saddle band to the band edge of `edge`.
    pub fn clamp(&self, edge: EdgeId, h: T) -> T {
        match self.graph.h_star() {
            Some(h_star) if (h - h_star).abs() < self.delta_sing => match self.graph.orientation(edge) {
                1 => h_star + self.delta_sing,
                _ => h_star - self.delta_sing,
            },
            _ => h,
        }
    }

    pub fn p2_avg(&self, edge: EdgeId, h: T) -> T {
        self.edges[edge].p2_avg(self.clamp(edge, h))
    }

    pub fn diffusion(&self, edge: EdgeId, h: T) -> T {
        self.p2_avg(edge, h) * lit(2.0)
    }

    pub fn action(&self, edge: EdgeId, h: T) -> T {
        self.edges[edge].action(self.clamp(edge, h))
    }

    pub fn period(&self, edge: EdgeId, h: T) -> T {
        self.edges[edge].period(self.clamp(edge, h))
    }
}

/// Tabulates `S`, `T` on every edge. Grid points are evaluated in parallel;
/// the result does not depend on the thread count.
pub fn build_coefficients<T: Real>(v: &Potential<T>, g: &LevelGraph<T>, spec: &GridSpec) -> Result<CoefficientSet<T>> {
    let ds: T = lit(spec.delta_sing);
    let edges = g
        .edges
        .iter()
        .map(|e| {
            let grid = edge_grid(g, e.id, spec);
            let rows: Vec<(T, T)> = grid
                .par_iter()
                .map(|&h| Ok((action(g, v, e.id, h)?, period(g, v, e.id, h, ds)?)))
                .collect::<Result<Vec<_>>>()?;
            let (s, t): (Vec<T>, Vec<T>) = rows.into_iter().unzip();
            EdgeCoefficients::from_table(e.id, e.h_lo, e.h_hi, g.leaf_of(e.id).is_some(), grid, s, t)
        })
        .collect::<Result<Vec<_>>>()?;
    let vertex_actions = match g.interior_vertex.as_ref() {
        Some(vx) => Some(g.edges.iter().map(|e| action(g, v, e.id, vx.h_star)).collect::<Result<Vec<_>>>()?),
        None => None,
    };
    Ok(CoefficientSet { graph: g.clone(), edges, delta_sing: ds, delta_floor: lit(spec.delta_floor), h_max: lit(spec.h_max), vertex_actions })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn dw() -> (Potential<f64>, LevelGraph<f64>) {
        let v = Potential::double_well();
        let g = build_graph(&v).unwrap();
        (v, g)
    }

    fn harmonic() -> (Potential<f64>, LevelGraph<f64>) {
        let v = Potential::harmonic();
        let g = LevelGraph::single_well(&v).unwrap();
        (v, g)
    }

    #[test]
    fn double_well_graph() {
        let (_, g) = dw();
        assert_eq!(g.edges.len(), 3);
        let vx = g.interior_vertex.as_ref().unwrap();
        assert_abs_diff_eq!(vx.h_star, 0.25, epsilon = 1e-15);
        assert_eq!(g.leaf_vertices.len(), 2);
        for leaf in &g.leaf_vertices {
            assert_abs_diff_eq!(leaf.h, 0.0, epsilon = 1e-15);
        }
        for &id in &vx.edges {
            let e = g.edge(id);
            assert!(e.h_lo == vx.h_star || e.h_hi == vx.h_star);
        }
        assert_eq!(g.edge(LEFT).h_hi, g.edge(ABOVE).h_lo);
        assert!(g.edge(ABOVE).h_hi.is_infinite());
    }

    #[test]
    fn harmonic_is_unsupported_for_the_double_well_graph() {
        let v = Potential::<f64>::harmonic();
        assert!(matches!(build_graph(&v), Err(Error::UnsupportedTopology(_))));
        assert_eq!(LevelGraph::single_well(&v).unwrap().edges.len(), 1);
    }

    #[test]
    fn shifted_double_well() {
        let v = Potential::<f64>::double_well().shifted(1.0);
        let g = build_graph(&v).unwrap();
        assert_abs_diff_eq!(g.h_star().unwrap(), 1.25, epsilon = 1e-14);
        for leaf in &g.leaf_vertices {
            assert_abs_diff_eq!(leaf.h, 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn projection_examples() {
        let (v, g) = dw();
        assert_eq!(project(&g, &v, PhasePoint::new(1.0, 0.0)).unwrap(), GraphPoint::new(RIGHT, 0.0));
        assert_eq!(project(&g, &v, PhasePoint::new(0.0, 1.0)).unwrap(), GraphPoint::new(ABOVE, 0.75));
        assert_eq!(project(&g, &v, PhasePoint::new(-0.5, 0.0)).unwrap(), GraphPoint::new(LEFT, 0.140625));
        assert!(matches!(project(&g, &v, PhasePoint::new(0.0, 0.0)), Err(Error::AtSaddlePoint { .. })));
        assert_eq!(project_or_vertex(&g, &v, PhasePoint::new(0.0, 0.0)).edge, ABOVE);
    }

    #[test]
    fn turning_point_examples() {
        let (v, g) = dw();
        let (a, b) = turning_points(&g, &v, RIGHT, 0.25).unwrap();
        assert_abs_diff_eq!(a, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(b, 2f64.sqrt(), epsilon = 1e-12);
        let (a, b) = turning_points(&g, &v, ABOVE, 1.0).unwrap();
        assert_abs_diff_eq!(a, -3f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(b, 3f64.sqrt(), epsilon = 1e-12);
        for h in [0.01, 0.1, 0.2, 0.2499] {
            for edge in [LEFT, RIGHT] {
                let (a, b) = turning_points(&g, &v, edge, h).unwrap();
                assert!(a < b);
                assert!((v.eval(a) - h).abs() < 1e-12 && (v.eval(b) - h).abs() < 1e-12);
            }
        }
        assert!(matches!(turning_points(&g, &v, RIGHT, 0.3), Err(Error::OutOfRange { .. })));
        assert!(matches!(turning_points(&g, &v, ABOVE, 0.2), Err(Error::OutOfRange { .. })));

        let (v, g) = harmonic();
        let (a, b) = turning_points(&g, &v, 0, 0.7).unwrap();
        assert_abs_diff_eq!(b, (1.4f64).sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(a, -(1.4f64).sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn harmonic_action_and_period() {
        let (v, g) = harmonic();
        for h in [1e-4, 0.3, 1.0, 2.5] {
            assert_abs_diff_eq!(action(&g, &v, 0, h).unwrap(), 2.0 * std::f64::consts::PI * h, epsilon = 1e-8);
            assert_abs_diff_eq!(period(&g, &v, 0, h, 1e-4).unwrap(), 2.0 * std::f64::consts::PI, epsilon = 1e-6);
        }
    }

    #[test]
    fn action_at_saddle_closed_form() {
        let (v, g) = dw();
        // √2 ∫₀^√2 q √(2 − q²) dq = 4/3
        assert_abs_diff_eq!(action(&g, &v, RIGHT, 0.25).unwrap(), 4.0 / 3.0, epsilon = 1e-8);
        assert_abs_diff_eq!(action(&g, &v, LEFT, 0.25).unwrap(), 4.0 / 3.0, epsilon = 1e-8);
        assert_abs_diff_eq!(action(&g, &v, ABOVE, 0.25).unwrap(), 8.0 / 3.0, epsilon = 1e-8);
        assert!(action(&g, &v, RIGHT, 1e-12).unwrap() < 1e-10);
    }

    #[test]
    fn period_near_leaf_is_harmonic() {
        let (v, g) = dw();
        let t = period(&g, &v, RIGHT, 1e-6, 1e-4).unwrap();
        assert!((t - 2.0 * std::f64::consts::PI / 2f64.sqrt()).abs() < 1e-4);
        assert!(matches!(period(&g, &v, RIGHT, 0.25 - 1e-5, 1e-4), Err(Error::NearSaddle { .. })));
    }

    #[test]
    fn period_is_derivative_of_action() {
        let (v, g) = dw();
        let delta = 1e-5;
        for (edge, h) in [(RIGHT, 0.05), (LEFT, 0.12), (RIGHT, 0.2), (ABOVE, 0.4), (ABOVE, 2.0)] {
            let fd = (action(&g, &v, edge, h + delta).unwrap() - action(&g, &v, edge, h - delta).unwrap()) / (2.0 * delta);
            let t = period(&g, &v, edge, h, 1e-4).unwrap();
            assert!((fd - t).abs() / t < 1e-3, "edge {edge} h {h}: {fd} vs {t}");
        }
    }

    #[test]
    fn coefficient_tables() {
        let (v, g) = dw();
        let set = build_coefficients(&v, &g, &GridSpec::default()).unwrap();
        for e in &set.edges {
            let s = e.action_values();
            assert!(s.windows(2).all(|w| w[1] > w[0]), "S increasing on edge {}", e.edge);
            assert!(e.period_values().iter().all(|&t| t > 0.0));
            let grid = e.grid();
            // T = dS/dh at interior grid points
            for i in (1..grid.len() - 1).step_by(7) {
                let h = grid[i];
                let d = 1e-6 * (1.0 + h);
                if h - d <= e.h_lo || (h + d - 0.25).abs() < 1e-4 || (h - d - 0.25).abs() < 1e-4 {
                    continue;
                }
                let fd = (action(&g, &v, e.edge, h + d).unwrap() - action(&g, &v, e.edge, h - d).unwrap()) / (2.0 * d);
                let t = e.period_values()[i];
                assert!((fd - t).abs() / t < 1e-3, "edge {} h {h}: {fd} vs {t}", e.edge);
            }
        }
        // left/right symmetry
        for (a, b) in set.edges[LEFT].action_values().iter().zip(set.edges[RIGHT].action_values()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-9);
        }
        for (a, b) in set.edges[LEFT].period_values().iter().zip(set.edges[RIGHT].period_values()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-7);
        }
        // harmonic limit near the leaf
        let p2 = set.p2_avg(RIGHT, 1e-4);
        assert!((p2 - 1e-4).abs() / 1e-4 < 0.01, "{p2}");
    }

    #[test]
    fn vertex_additivity() {
        let (v, g) = dw();
        let sum_at = |h_above: f64, h_below: f64| {
            action(&g, &v, ABOVE, h_above).unwrap() - action(&g, &v, LEFT, h_below).unwrap() - action(&g, &v, RIGHT, h_below).unwrap()
        };
        // enclosed areas add exactly at the saddle level
        assert_abs_diff_eq!(sum_at(0.25, 0.25), 0.0, epsilon = 1e-9);
        // off the saddle the gap is the integral of the (log-divergent) period across the band
        let ds = 1e-4;
        let (gr, vr) = (&g, &v);
        let t = |edge: EdgeId| move |h: f64| period(gr, vr, edge, h, 0.0).unwrap_or(0.0);
        let band = integrate(t(ABOVE), 0.25, 0.25 + ds, 1e-12).unwrap()
            + integrate(t(LEFT), 0.25 - ds, 0.25, 1e-12).unwrap()
            + integrate(t(RIGHT), 0.25 - ds, 0.25, 1e-12).unwrap();
        let gap = sum_at(0.25 + ds, 0.25 - ds);
        assert!((gap - band).abs() < 1e-7, "{gap} vs {band}");
    }

    #[test]
    fn harmonic_equipartition() {
        let (v, g) = harmonic();
        let set = build_coefficients(&v, &g, &GridSpec { points_per_edge: 64, ..GridSpec::default() }).unwrap();
        for h in [1e-3, 0.1, 0.77, 2.0] {
            assert_abs_diff_eq!(set.p2_avg(0, h), h, epsilon = 1e-8 * (1.0 + h));
        }
    }

    #[test]
    fn projection_preserves_energy_exactly() {
        use proptest::prelude::*;
        let (v, g) = dw();
        proptest!(|(q in -3.0f64..3.0, p in -3.0f64..3.0)| {
            let y = project_or_vertex(&g, &v, PhasePoint::new(q, p));
            prop_assert_eq!(y.h, hamiltonian(&v, PhasePoint::new(q, p)));
            prop_assert!(g.edge(y.edge).contains(y.h));
        });
    }
}
