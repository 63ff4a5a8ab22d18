//! The limit process on the level graph: drift 1 and diffusion
//! `a(h) = 2 S(h)/T(h)` along each edge, glued at the interior vertex with
//! weights `β_i = 2 S_i(h*)`.
//!
//! Two representations are provided. [`simulate_graph_ensemble`] runs
//! Euler–Maruyama per atom with a shell-and-redraw vertex rule.
//! [`solve_graph_fp`] integrates the forward equation
//! `∂_t μ = −∂_h μ + ∂²_h(a μ / 2)` with an explicit finite-volume scheme.
//! The vertex is a zero-mass node whose potential `u_v` (the common value of
//! `μ_i/T_i`) is fixed each step by the discrete Kirchhoff balance.

use rand_distr::{Distribution, StandardNormal, Uniform};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::levelset::{CoefficientSet, EdgeId, GraphPoint, LevelGraph};
use crate::measures::{histogram, BinSpec, GraphMeasure, GraphMeasurePath, Histogram};
use crate::scalar::{lit, to_f64, Real};
use crate::sde::{trajectory_rng, BranchCounts};

/// Vertex weights `β_i = 2 S_i(h*)` and entry probabilities `p_i = β_i / Σβ`.
#[derive(Debug, Clone, PartialEq)]
pub struct GluingWeights<T> {
    pub beta: Vec<T>,
    pub probabilities: Vec<T>,
}

/// Uses the exact vertex actions when the tables carry them, otherwise the
/// tables at the edge of the saddle band.
pub fn gluing_weights<T: Real>(c: &CoefficientSet<T>) -> GluingWeights<T> {
    let n = c.edges.len();
    let beta: Vec<T> = match (&c.vertex_actions, c.graph.h_star()) {
        (Some(s), _) => s.iter().map(|&s| s * lit(2.0)).collect(),
        (None, Some(h_star)) => (0..n).map(|e| c.action(e, h_star) * lit(2.0)).collect(),
        (None, None) => vec![T::zero(); n],
    };
    let total: T = beta.iter().copied().sum();
    let probabilities = if total > T::zero() { beta.iter().map(|&b| b / total).collect() } else { vec![T::zero(); n] };
    GluingWeights { beta, probabilities }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphSdeConfig<T> {
    pub dt_h: T,
    /// Half-width `δ_v` of the gluing shell around `h*`.
    pub vertex_shell: T,
    pub t_final: T,
    pub start: GraphPoint<T>,
    pub base_seed: u64,
    pub n: usize,
    pub escape_bound: T,
}

impl<T: Real> GraphSdeConfig<T> {
    pub fn new(start: GraphPoint<T>, t_final: T, n: usize, base_seed: u64) -> Self {
        Self { dt_h: lit(1e-5), vertex_shell: lit(0.01), t_final, start, base_seed, n, escape_bound: lit(1e3) }
    }

    pub fn steps(&self) -> usize {
        (to_f64(self.t_final / self.dt_h) - 1e-9).ceil().max(0.0) as usize
    }

    /// Largest diffusion within `2 δ_v` of the vertex, where the step must
    /// resolve the shell.
    pub fn shell_diffusion_max(&self, c: &CoefficientSet<T>) -> T {
        let Some(h_star) = c.graph.h_star() else { return T::zero() };
        let mut a_max = T::zero();
        for e in &c.graph.edges {
            for k in 0..=64 {
                let d = self.vertex_shell * lit(1.0 + k as f64 / 64.0);
                let h = h_star + d * lit(c.graph.orientation(e.id) as f64);
                if e.contains(h) {
                    a_max = a_max.max(c.diffusion(e.id, h));
                }
            }
        }
        a_max
    }

    pub fn validate(&self, c: &CoefficientSet<T>) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if !(self.dt_h > T::zero()) || !(self.t_final >= T::zero()) || self.n == 0 {
            return bad("graph sde: dt_h > 0, t_final >= 0 and n >= 1 required");
        }
        if self.start.edge >= c.graph.edges.len() || !c.graph.edge(self.start.edge).contains(self.start.h) {
            return bad("graph sde: start point is not on its edge");
        }
        if c.graph.interior_vertex.is_some() {
            if !(self.vertex_shell > c.delta_sing) {
                return bad("graph sde: vertex_shell must exceed the coefficient band delta_sing");
            }
            let resolution = (self.shell_diffusion_max(c) * self.dt_h).sqrt();
            if !(resolution < self.vertex_shell * lit(0.25)) {
                return Err(Error::InvalidConfig(format!(
                    "graph sde: sqrt(a_max dt_h) = {} does not resolve the vertex shell {}",
                    to_f64(resolution),
                    to_f64(self.vertex_shell)
                )));
            }
        }
        Ok(())
    }
}

/// Atoms of the graph process at the snapshot times.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphEnsemblePath<T> {
    pub times: Vec<T>,
    /// `states[k][i]`: atom `i` at snapshot `k`.
    pub states: Vec<Vec<GraphPoint<T>>>,
    /// Edges chosen at every re-emission from the vertex.
    pub exits: BranchCounts,
}

impl<T: Real> GraphEnsemblePath<T> {
    pub fn to_measure_path(&self) -> GraphMeasurePath<T> {
        let measures = self
            .states
            .iter()
            .map(|s| {
                let w = T::one() / lit(s.len() as f64);
                GraphMeasure::Atoms(s.iter().map(|&y| (y, w)).collect())
            })
            .collect();
        GraphMeasurePath { times: self.times.clone(), measures }
    }

    /// Fraction of atoms on each edge at snapshot `k`.
    pub fn occupations(&self, k: usize, edges: usize) -> Vec<f64> {
        let mut out = vec![0.0; edges];
        for y in &self.states[k] {
            out[y.edge] += 1.0;
        }
        let n = self.states[k].len().max(1) as f64;
        out.iter_mut().for_each(|x| *x /= n);
        out
    }
}

/// Piecewise-linear lookup of `a(h)` on a uniform grid, falling back to the
/// tables outside it.
struct DiffusionLut<T> {
    lo: T,
    inv_step: T,
    values: Vec<T>,
}

const LUT_POINTS: usize = 8192;

impl<T: Real> DiffusionLut<T> {
    fn new(c: &CoefficientSet<T>, edge: EdgeId, hi: T) -> Self {
        let lo = c.graph.edge(edge).h_lo;
        let step = (hi - lo) / lit((LUT_POINTS - 1) as f64);
        let values = (0..LUT_POINTS).map(|k| c.diffusion(edge, lo + step * lit(k as f64))).collect();
        Self { lo, inv_step: step.recip(), values }
    }

    #[inline]
    fn eval(&self, c: &CoefficientSet<T>, edge: EdgeId, h: T) -> T {
        let x = (h - self.lo) * self.inv_step;
        if x >= T::zero() {
            let k = x.to_usize().unwrap_or(usize::MAX);
            if k + 1 < self.values.len() {
                let w = x - lit(k as f64);
                return self.values[k] + (self.values[k + 1] - self.values[k]) * w;
            }
        }
        c.diffusion(edge, h)
    }
}

fn snapshot_indices<T: Real>(dt: T, steps: usize, snapshot_times: &[T]) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(snapshot_times.len());
    for &t in snapshot_times {
        let k = to_f64(t / dt).round();
        if k < 0.0 || k as usize > steps || (lit::<T>(k) * dt - t).abs() > dt * lit(1e-6) {
            return Err(Error::TimeGridMismatch(format!("snapshot {} is not on the step grid", to_f64(t))));
        }
        if out.last().is_some_and(|&last| k as usize <= last) {
            return Err(Error::TimeGridMismatch("snapshot times must increase".into()));
        }
        out.push(k as usize);
    }
    Ok(out)
}

/// Runs `cfg.n` atoms of the graph diffusion and records them at
/// `snapshot_times` (multiples of `dt_h`).
pub fn simulate_graph_ensemble<T: Real>(
    c: &CoefficientSet<T>,
    cfg: &GraphSdeConfig<T>,
    snapshot_times: &[T],
) -> Result<GraphEnsemblePath<T>> {
    cfg.validate(c)?;
    let steps = cfg.steps();
    let idx = snapshot_indices(cfg.dt_h, steps, snapshot_times)?;
    let g = &c.graph;
    let lut_top = |e: EdgeId| {
        let edge = g.edge(e);
        if edge.h_hi.is_finite() {
            edge.h_hi
        } else {
            edge.h_lo + c.h_max.max(lit(4.0))
        }
    };
    let luts: Vec<DiffusionLut<T>> = (0..g.edges.len()).map(|e| DiffusionLut::new(c, e, lut_top(e))).collect();
    let law = g.h_star().map(|hs| ShellLaw::new(c, hs, cfg.vertex_shell));
    let dt_f = to_f64(cfg.dt_h);

    let per_atom: Vec<(Vec<GraphPoint<T>>, BranchCounts)> = (0..cfg.n)
        .into_par_iter()
        .map(|i| {
            let mut rng = trajectory_rng(cfg.base_seed, i);
            let uniform = Uniform::new(0.0f64, 1.0).expect("unit interval");
            let mut y = cfg.start;
            let mut counts = BranchCounts::default();
            let mut out = Vec::with_capacity(idx.len());
            let mut next = 0usize;
            let mut debt = 0.0f64;
            for k in 0..=steps {
                if next < idx.len() && idx[next] == k {
                    out.push(y);
                    next += 1;
                    if next == idx.len() {
                        break;
                    }
                }
                if k == steps {
                    break;
                }
                if k == 0 {
                    if let Some(law) = &law {
                        debt += redraw_if_in_shell(g, law, &mut y, &mut counts, &uniform, &mut rng);
                    }
                }
                // the atom is still inside the shell
                if debt >= dt_f {
                    debt -= dt_f;
                    continue;
                }
                let xi: f64 = StandardNormal.sample(&mut rng);
                let a = luts[y.edge].eval(c, y.edge, y.h).max(T::zero());
                y.h = y.h + cfg.dt_h + (a * cfg.dt_h).sqrt() * lit(xi);
                if let Some(leaf) = g.leaf_of(y.edge) {
                    if y.h < leaf.h {
                        y.h = leaf.h + leaf.h - y.h;
                    }
                }
                if let Some(law) = &law {
                    debt += redraw_if_in_shell(g, law, &mut y, &mut counts, &uniform, &mut rng);
                }
                if !(y.h.abs() <= cfg.escape_bound) {
                    return Err(Error::Unstable {
                        trajectory: i,
                        t: to_f64(cfg.dt_h * lit((k + 1) as f64)),
                        reason: format!("energy {} beyond escape bound", to_f64(y.h)),
                    });
                }
            }
            Ok((out, counts))
        })
        .collect::<Result<_>>()?;

    let mut states = vec![Vec::with_capacity(cfg.n); idx.len()];
    let mut exits = BranchCounts::default();
    for (path, counts) in per_atom {
        exits = exits.merge(counts);
        for (slot, y) in states.iter_mut().zip(path) {
            slot.push(y);
        }
    }
    let times = idx.iter().map(|&k| cfg.dt_h * lit(k as f64)).collect();
    Ok(GraphEnsemblePath { times, states, exits })
}

/// Exit law of the vertex shell with the coefficients frozen per edge at
/// mid-shell. On edge `i` (outward sign `s_i`, distance `x` from the vertex)
/// the drift is `s_i` and the scale density `exp(-κ_i x)`, `κ_i = 2 s_i / a_i`.
struct ShellLaw {
    h_star: f64,
    shell: f64,
    kappa: Vec<f64>,
    /// Frozen diffusion per edge.
    a: Vec<f64>,
    /// Mean exit time from the vertex itself.
    vertex_time: f64,
    probs: Vec<f64>,
    /// Acceptance of a branch entry: the chance that an excursion into the
    /// branch reaches the shell edge, relative to the most likely branch.
    accept: Vec<f64>,
}

impl ShellLaw {
    fn new<T: Real>(c: &CoefficientSet<T>, h_star: T, shell: T) -> Self {
        let g = &c.graph;
        let shell_f = to_f64(shell);
        let a: Vec<f64> = g
            .edges
            .iter()
            .map(|e| to_f64(c.diffusion(e.id, h_star + shell * lit(0.5 * g.orientation(e.id) as f64))))
            .collect();
        let kappa: Vec<f64> =
            g.edges.iter().zip(&a).map(|(e, &a)| if a > 0.0 { 2.0 * g.orientation(e.id) as f64 / a } else { 0.0 }).collect();
        // natural-scale length of the shell on each edge
        let reach: Vec<f64> = kappa.iter().map(|&k| shell_f / scale(k, shell_f)).collect();
        let top = reach.iter().copied().fold(0.0, f64::max);
        let probs: Vec<f64> = gluing_weights(c).probabilities.iter().map(|&p| to_f64(p)).collect();
        let (num, den) = probs.iter().zip(&a).filter(|(_, &a)| a > 0.0).fold((0.0, 0.0), |(n, d), (&p, &a)| (n + p / a, d + p));
        Self {
            h_star: to_f64(h_star),
            shell: shell_f,
            kappa,
            vertex_time: shell_f * shell_f * num / den.max(f64::MIN_POSITIVE),
            a,
            probs,
            accept: reach.iter().map(|r| r / top).collect(),
        }
    }
}

/// `∫₀^x exp(-κ y) dy`.
fn scale(kappa: f64, x: f64) -> f64 {
    if (kappa * x).abs() < 1e-8 {
        x * (1.0 - 0.5 * kappa * x)
    } else {
        -(-kappa * x).exp_m1() / kappa
    }
}

impl ShellLaw {
    /// Mean time to leave the shell from distance `d` on `edge`, without
    /// drift: `(a_i/2) u'' = −1` on each edge, `u = 0` at the shell edge,
    /// continuous at the vertex with `Σ β_i u_i'(0) = 0`.
    fn exit_time(&self, edge: EdgeId, d: f64) -> f64 {
        let a = self.a[edge];
        if a <= 0.0 {
            return 0.0;
        }
        let c = self.vertex_time;
        (c + (self.shell * self.shell / a - c) * d / self.shell - d * d / a).max(0.0)
    }
}

/// Moves an atom that ended a step inside the shell to the shell edge.
/// It leaves on its own edge with the probability of reaching the edge
/// before the vertex; otherwise it passes the vertex, where branch entries
/// are drawn from the gluing probabilities (and counted) until one reaches
/// the shell edge.
fn redraw_if_in_shell<T: Real>(
    g: &LevelGraph<T>,
    law: &ShellLaw,
    y: &mut GraphPoint<T>,
    counts: &mut BranchCounts,
    uniform: &Uniform<f64>,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> f64 {
    let own = g.orientation(y.edge) as f64;
    let d = (own * (to_f64(y.h) - law.h_star)).max(0.0);
    if d > law.shell {
        return 0.0;
    }
    let spent = law.exit_time(y.edge, d);
    let k = law.kappa[y.edge];
    if uniform.sample(rng) < scale(k, d) / scale(k, law.shell) {
        y.h = lit(law.h_star + own * law.shell);
        return spent;
    }
    loop {
        let u = uniform.sample(rng);
        let mut edge = law.probs.len() - 1;
        let mut acc = 0.0;
        for (e, &p) in law.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                edge = e;
                break;
            }
        }
        counts.exits[edge] += 1;
        if uniform.sample(rng) < law.accept[edge] {
            let sign = g.orientation(edge) as f64;
            *y = GraphPoint::new(edge, lit(law.h_star + sign * law.shell));
            return spent;
        }
    }
}

/// Spatial discretisation of the forward equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FpScheme {
    /// Upwind advection of `μ` plus centred differences of `D μ`, `D = a/2`.
    /// Works for arbitrary tables.
    UpwindCentered,
    /// The same equation written as `F = −S ∂_h(μ/T)` (valid when
    /// `T = dS/dh`), with the cell period taken as `ΔS/Δh`. Resolves the
    /// logarithmic density at the vertex.
    #[default]
    FluxForm,
}

/// Finite-volume discretisation parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct FpConfig<T> {
    pub cells_per_edge: usize,
    /// Far boundary of the unbounded edge (zero flux).
    pub h_max: T,
    /// Fixed time step; `None` picks `cfl_safety` times the stability limit.
    pub dt: Option<T>,
    pub cfl_safety: T,
    pub scheme: FpScheme,
}

impl<T: Real> Default for FpConfig<T> {
    fn default() -> Self {
        Self { cells_per_edge: 512, h_max: lit(3.0), dt: None, cfl_safety: lit(0.9), scheme: FpScheme::default() }
    }
}

/// Uniform cells `[lo, hi]` split `cells` ways on one edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FvGrid<T> {
    pub edge: EdgeId,
    pub lo: T,
    pub hi: T,
    pub cells: usize,
}

impl<T: Real> FvGrid<T> {
    pub fn dx(&self) -> T {
        (self.hi - self.lo) / lit(self.cells as f64)
    }

    pub fn center(&self, k: usize) -> T {
        self.lo + self.dx() * lit(k as f64 + 0.5)
    }

    pub fn faces(&self) -> Vec<T> {
        (0..=self.cells).map(|k| self.lo + self.dx() * lit(k as f64)).collect()
    }
}

/// Cell masses of the forward equation at snapshot times.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphDensityPath<T> {
    pub grids: Vec<FvGrid<T>>,
    pub times: Vec<T>,
    /// `masses[k][e][j]`: mass of cell `j` on edge `e` at snapshot `k`.
    pub masses: Vec<Vec<Vec<T>>>,
    pub beta: Vec<T>,
    /// Mass in the outermost 2% of cells of the unbounded edge, per snapshot.
    pub boundary_mass: Vec<T>,
    pub dt: T,
}

impl<T: Real> GraphDensityPath<T> {
    pub fn bins(&self) -> BinSpec<T> {
        BinSpec { edges: self.grids.iter().map(|g| g.faces()).collect() }
    }

    pub fn measure(&self, k: usize) -> GraphMeasure<T> {
        GraphMeasure::Histogram(Histogram { bins: self.bins(), masses: self.masses[k].clone() })
    }

    pub fn to_measure_path(&self) -> GraphMeasurePath<T> {
        GraphMeasurePath { times: self.times.clone(), measures: (0..self.times.len()).map(|k| self.measure(k)).collect() }
    }
}

pub fn fp_grids<T: Real>(g: &LevelGraph<T>, cfg: &FpConfig<T>) -> Vec<FvGrid<T>> {
    g.edges
        .iter()
        .map(|e| FvGrid {
            edge: e.id,
            lo: e.h_lo,
            hi: if e.h_hi.is_finite() { e.h_hi } else { cfg.h_max },
            cells: cfg.cells_per_edge,
        })
        .collect()
}

/// Where an edge meets the interior vertex.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum VertexEnd {
    None,
    Upper,
    Lower,
}

/// Explicit operator with precomputed per-cell coefficients. Both schemes
/// write the face flux as `F_j = Σ c · u` where `u_k = m_k · w_k`; the
/// vertex value `u_v` solves the Kirchhoff balance `Σ flux into vertex = 0`.
struct Operator<T> {
    scheme: FpScheme,
    ends: Vec<VertexEnd>,
    inv_dx: Vec<T>,
    /// `u_k = m_k · weight[e][k]` (density for upwind, `μ/T` for flux form).
    weight: Vec<Vec<T>>,
    /// Upwind: `D` at centres. Flux form: `S` at faces.
    coef: Vec<Vec<T>>,
    /// `S_i` at the vertex.
    vertex_action: Vec<T>,
    /// Upwind only: vertex density factor `T_i` on upward edges.
    vertex_period: Vec<T>,
}

impl<T: Real> Operator<T> {
    /// Total outflow rate of each cell, maximised; the step limit is its inverse.
    fn stability_limit(&self) -> T {
        let two: T = lit(2.0);
        let mut worst = T::zero();
        for e in 0..self.ends.len() {
            let (w, c, idx) = (&self.weight[e], &self.coef[e], self.inv_dx[e]);
            let n = w.len();
            for k in 0..n {
                let lower = if k == 0 && self.ends[e] == VertexEnd::Lower { two } else { T::one() };
                let upper = if k + 1 == n && self.ends[e] == VertexEnd::Upper { two } else { T::one() };
                let rate = match self.scheme {
                    FpScheme::UpwindCentered => w[k] * (T::one() + (lower + upper) * c[k] * idx),
                    FpScheme::FluxForm => w[k] * idx * (lower * c[k] + upper * c[k + 1]),
                };
                worst = worst.max(rate);
            }
        }
        worst.recip()
    }

    fn fluxes(&self, m: &[Vec<T>], u: &mut [Vec<T>], flux: &mut [Vec<T>]) {
        let two: T = lit(2.0);
        for e in 0..self.ends.len() {
            for ((uk, &mk), &wk) in u[e].iter_mut().zip(&m[e]).zip(&self.weight[e]) {
                *uk = mk * wk;
            }
            let (u, f, c, idx) = (&u[e], &mut flux[e], &self.coef[e], self.inv_dx[e]);
            let n = u.len();
            f[0] = T::zero();
            f[n] = T::zero();
            match self.scheme {
                FpScheme::UpwindCentered => {
                    for k in 1..n {
                        f[k] = u[k - 1] - (c[k] * u[k] - c[k - 1] * u[k - 1]) * idx;
                    }
                }
                FpScheme::FluxForm => {
                    for k in 1..n {
                        f[k] = c[k] * (u[k - 1] - u[k]) * idx;
                    }
                }
            }
        }
        // u_v = num / den from the balance of the vertex-adjacent fluxes
        let mut num = T::zero();
        let mut den = T::zero();
        for e in 0..self.ends.len() {
            let (u, c, idx, sv) = (&u[e], &self.coef[e], self.inv_dx[e], self.vertex_action[e]);
            let n = u.len();
            match (self.scheme, self.ends[e]) {
                (_, VertexEnd::None) => {}
                (FpScheme::UpwindCentered, VertexEnd::Upper) => {
                    num = num + u[n - 1] + two * c[n - 1] * u[n - 1] * idx;
                    den = den + two * sv * idx;
                }
                (FpScheme::UpwindCentered, VertexEnd::Lower) => {
                    num = num + two * c[0] * u[0] * idx;
                    den = den + two * sv * idx + self.vertex_period[e];
                }
                (FpScheme::FluxForm, VertexEnd::Upper) => {
                    num = num + sv * u[n - 1] * idx;
                    den = den + sv * idx;
                }
                (FpScheme::FluxForm, VertexEnd::Lower) => {
                    num = num + sv * u[0] * idx;
                    den = den + sv * idx;
                }
            }
        }
        if den <= T::zero() {
            return;
        }
        let uv = num / den;
        for e in 0..self.ends.len() {
            let (u, c, idx, sv) = (&u[e], &self.coef[e], self.inv_dx[e], self.vertex_action[e]);
            let n = u.len();
            let f = &mut flux[e];
            match (self.scheme, self.ends[e]) {
                (_, VertexEnd::None) => {}
                (FpScheme::UpwindCentered, VertexEnd::Upper) => {
                    f[n] = u[n - 1] - (sv * uv - c[n - 1] * u[n - 1]) * two * idx;
                }
                (FpScheme::UpwindCentered, VertexEnd::Lower) => {
                    f[0] = self.vertex_period[e] * uv - (c[0] * u[0] - sv * uv) * two * idx;
                }
                (FpScheme::FluxForm, VertexEnd::Upper) => {
                    f[n] = sv * (u[n - 1] - uv) * two * idx;
                }
                (FpScheme::FluxForm, VertexEnd::Lower) => {
                    f[0] = sv * (uv - u[0]) * two * idx;
                }
            }
        }
    }
}

fn build_operator<T: Real>(c: &CoefficientSet<T>, grids: &[FvGrid<T>], scheme: FpScheme, vertex_action: Vec<T>) -> Result<Operator<T>> {
    let g = &c.graph;
    let h_star = g.h_star();
    let ends: Vec<VertexEnd> = g
        .edges
        .iter()
        .map(|e| match h_star {
            Some(hs) if e.h_hi == hs => VertexEnd::Upper,
            Some(hs) if e.h_lo == hs => VertexEnd::Lower,
            _ => VertexEnd::None,
        })
        .collect();
    let inv_dx = grids.iter().map(|gr| gr.dx().recip()).collect();
    let mut weight = Vec::with_capacity(grids.len());
    let mut coef = Vec::with_capacity(grids.len());
    for gr in grids {
        let e = gr.edge;
        match scheme {
            FpScheme::UpwindCentered => {
                weight.push(vec![gr.dx().recip(); gr.cells]);
                coef.push((0..gr.cells).map(|k| c.diffusion(e, gr.center(k)) * lit(0.5)).collect());
            }
            FpScheme::FluxForm => {
                let faces = gr.faces();
                let mut s: Vec<T> = faces.iter().map(|&h| c.action(e, h)).collect();
                match ends[e] {
                    VertexEnd::Upper => s[gr.cells] = vertex_action[e],
                    VertexEnd::Lower => s[0] = vertex_action[e],
                    VertexEnd::None => {}
                }
                if g.leaf_of(e).is_some_and(|l| l.h == gr.lo) {
                    s[0] = T::zero();
                }
                let mut w = Vec::with_capacity(gr.cells);
                for k in 0..gr.cells {
                    let ds = s[k + 1] - s[k];
                    if !(ds > T::zero()) {
                        return Err(Error::InvalidConfig(format!(
                            "fp flux form needs a strictly increasing action; edge {e} cell {k} has dS = {}",
                            to_f64(ds)
                        )));
                    }
                    w.push(ds.recip());
                }
                weight.push(w);
                coef.push(s);
            }
        }
    }
    let vertex_period = g
        .edges
        .iter()
        .map(|e| match h_star {
            Some(hs) if ends[e.id] == VertexEnd::Lower => c.period(e.id, hs),
            _ => T::zero(),
        })
        .collect();
    Ok(Operator { scheme, ends, inv_dx, weight, coef, vertex_action, vertex_period })
}

/// Integrates the forward equation from `initial` and records cell masses
/// at `snapshot_times` (increasing, non-negative).
pub fn solve_graph_fp<T: Real>(
    c: &CoefficientSet<T>,
    cfg: &FpConfig<T>,
    initial: &GraphMeasure<T>,
    snapshot_times: &[T],
) -> Result<GraphDensityPath<T>> {
    let g = &c.graph;
    if cfg.cells_per_edge < 2 {
        return Err(Error::InvalidConfig("fp: at least two cells per edge".into()));
    }
    if g.edges.iter().any(|e| !e.h_hi.is_finite() && !(cfg.h_max > e.h_lo)) {
        return Err(Error::InvalidConfig("fp: h_max must lie above the unbounded edge's lower vertex".into()));
    }
    if snapshot_times.windows(2).any(|w| w[1] <= w[0]) || snapshot_times.first().is_some_and(|&t| t < T::zero()) {
        return Err(Error::TimeGridMismatch("fp snapshot times must be non-negative and increasing".into()));
    }
    let grids = fp_grids(g, cfg);
    let bins = BinSpec { edges: grids.iter().map(|gr| gr.faces()).collect() };
    let mut m = histogram(initial, &bins).masses;
    let mass0: T = m.iter().flatten().copied().sum();
    if (mass0 - T::one()).abs() > lit(1e-6) {
        return Err(Error::MassLoss { mass: to_f64(mass0) });
    }

    let weights = gluing_weights(c);
    let vertex_action = weights.beta.iter().map(|&b| b * lit(0.5)).collect();
    let op = build_operator(c, &grids, cfg.scheme, vertex_action)?;
    let limit = op.stability_limit();
    let dt_max = match cfg.dt {
        Some(dt) if dt > limit => return Err(Error::CflViolation { dt: to_f64(dt), limit: to_f64(limit) }),
        Some(dt) if dt > T::zero() => dt,
        Some(_) => return Err(Error::InvalidConfig("fp: dt must be positive".into())),
        None => limit * cfg.cfl_safety,
    };

    let boundary_mass = |m: &[Vec<T>]| -> T {
        let mut acc = T::zero();
        for (e, grid) in grids.iter().enumerate() {
            if !g.edge(e).h_hi.is_finite() {
                let tail = (grid.cells / 50).max(1);
                acc = acc + m[e][grid.cells - tail..].iter().copied().sum();
            }
        }
        acc
    };

    let mut u: Vec<Vec<T>> = grids.iter().map(|gr| vec![T::zero(); gr.cells]).collect();
    let mut flux: Vec<Vec<T>> = grids.iter().map(|gr| vec![T::zero(); gr.cells + 1]).collect();
    let mut t = T::zero();
    let mut masses = Vec::with_capacity(snapshot_times.len());
    let mut tails = Vec::with_capacity(snapshot_times.len());
    for &target in snapshot_times {
        let span = target - t;
        if span > T::zero() {
            let steps = to_f64(span / dt_max).ceil().max(1.0) as usize;
            let dt = span / lit(steps as f64);
            for _ in 0..steps {
                op.fluxes(&m, &mut u, &mut flux);
                for (cells, f) in m.iter_mut().zip(&flux) {
                    for (k, cell) in cells.iter_mut().enumerate() {
                        *cell = *cell - dt * (f[k + 1] - f[k]);
                    }
                }
            }
            t = target;
        }
        let total: T = m.iter().flatten().copied().sum();
        if (total - T::one()).abs() > lit(1e-6) {
            return Err(Error::MassLoss { mass: to_f64(total) });
        }
        masses.push(m.clone());
        tails.push(boundary_mass(&m));
    }
    Ok(GraphDensityPath { grids, times: snapshot_times.to_vec(), masses, beta: weights.beta, boundary_mass: tails, dt: dt_max })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::Potential;
    use crate::levelset::{build_coefficients, build_graph, EdgeCoefficients, GridSpec, ABOVE, LEFT, RIGHT};
    use crate::measures::Histogram;
    use crate::measures::w1_tree;

    fn dw_coefficients() -> CoefficientSet<f64> {
        let v = Potential::double_well();
        let g = build_graph(&v).unwrap();
        build_coefficients(&v, &g, &GridSpec { points_per_edge: 96, ..GridSpec::default() }).unwrap()
    }

    /// One unbounded edge from 0 with tables `S = s(h)`, `T = t(h)`.
    fn single_edge(s: impl Fn(f64) -> f64, t: impl Fn(f64) -> f64) -> CoefficientSet<f64> {
        let v = Potential::harmonic();
        let g = LevelGraph::single_well(&v).unwrap();
        let grid: Vec<f64> = (1..=200).map(|k| k as f64 * 0.05).collect();
        let e = EdgeCoefficients::from_table(0, 0.0, f64::INFINITY, true, grid.clone(), grid.iter().map(|&h| s(h)).collect(), grid.iter().map(|&h| t(h)).collect()).unwrap();
        CoefficientSet::from_tables(g, vec![e], 1e-4, 1e-6, 10.0)
    }

    #[test]
    fn symmetric_gluing() {
        let w = gluing_weights(&dw_coefficients());
        assert!((w.beta[LEFT] - 8.0 / 3.0).abs() < 1e-9);
        assert!((w.beta[RIGHT] - 8.0 / 3.0).abs() < 1e-9);
        assert!((w.beta[ABOVE] - 16.0 / 3.0).abs() < 1e-9);
        assert!((w.probabilities[LEFT] - 0.25).abs() < 1e-9);
        assert!((w.probabilities[ABOVE] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn zero_diffusion_is_transport() {
        let c = single_edge(|_| 0.0, |_| 1.0);
        let cfg = GraphSdeConfig::new(GraphPoint::new(0, 0.3), 0.5, 4, 1);
        let path = simulate_graph_ensemble(&c, &cfg, &[0.0, 0.25, 0.5]).unwrap();
        for (t, slice) in path.times.iter().zip(&path.states) {
            for y in slice {
                assert!((y.h - (0.3 + t)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn harmonic_mean_drift() {
        // harmonic tables: S = 2πh, T = 2π, a = 2h
        let c = single_edge(|h| 2.0 * std::f64::consts::PI * h, |_| 2.0 * std::f64::consts::PI);
        let mut cfg = GraphSdeConfig::new(GraphPoint::new(0, 0.5), 1.0, 2000, 7);
        cfg.dt_h = 1e-3;
        let path = simulate_graph_ensemble(&c, &cfg, &[1.0]).unwrap();
        let hs: Vec<f64> = path.states[0].iter().map(|y| y.h).collect();
        let n = hs.len() as f64;
        let mean = hs.iter().sum::<f64>() / n;
        let var = hs.iter().map(|h| (h - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((mean - 1.5).abs() < 3.0 * (var / n).sqrt(), "mean {mean}");
    }

    #[test]
    fn vertex_passages_keep_the_mean_energy_drift() {
        // h is linear on every edge and meets the gluing condition, so
        // E[h(t)] = h(0) + t through any number of vertex visits
        let c = dw_coefficients();
        let cfg = GraphSdeConfig::new(GraphPoint::new(ABOVE, 0.27), 0.3, 3000, 4);
        let path = simulate_graph_ensemble(&c, &cfg, &[0.3]).unwrap();
        assert!(path.exits.total() > 10 * cfg.n as u64);
        let hs: Vec<f64> = path.states[0].iter().map(|y| y.h).collect();
        let n = hs.len() as f64;
        let mean = hs.iter().sum::<f64>() / n;
        let var = hs.iter().map(|h| (h - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((mean - 0.57).abs() < 3.0 * (var / n).sqrt(), "mean {mean} se {}", (var / n).sqrt());
    }

    #[test]
    fn halving_the_shell_keeps_occupations() {
        let c = dw_coefficients();
        let wells = |shell: f64, dt: f64| {
            let mut cfg = GraphSdeConfig::new(GraphPoint::new(ABOVE, 0.27), 0.3, 4000, 6);
            cfg.vertex_shell = shell;
            cfg.dt_h = dt;
            let path = simulate_graph_ensemble(&c, &cfg, &[0.3]).unwrap();
            path.states[0].iter().filter(|y| y.edge != ABOVE).count() as f64 / cfg.n as f64
        };
        let (a, b) = (wells(0.02, 4e-5), wells(0.01, 1e-5));
        let ci = 1.96 * (2.0 * a * (1.0 - a) / 4000.0).sqrt();
        assert!((a - b).abs() < ci, "{a} vs {b}, ci {ci}");
    }

    #[test]
    fn shell_must_be_resolved() {
        let c = dw_coefficients();
        let mut cfg = GraphSdeConfig::new(GraphPoint::new(ABOVE, 0.3), 0.1, 4, 1);
        cfg.dt_h = 1e-3;
        assert!(matches!(cfg.validate(&c), Err(Error::InvalidConfig(_))));
        cfg.dt_h = 1e-5;
        cfg.vertex_shell = 1e-5;
        assert!(matches!(cfg.validate(&c), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn graph_ensemble_is_deterministic_and_reemits() {
        let c = dw_coefficients();
        let cfg = GraphSdeConfig::new(GraphPoint::new(ABOVE, 0.27), 0.05, 200, 3);
        let a = simulate_graph_ensemble(&c, &cfg, &[0.0, 0.05]).unwrap();
        let b = simulate_graph_ensemble(&c, &cfg, &[0.0, 0.05]).unwrap();
        assert_eq!(a, b);
        assert!(a.exits.total() > 0);
        let h_star = 0.25;
        for y in &a.states[1] {
            assert!((y.h - h_star).abs() >= cfg.vertex_shell - 1e-12 || y.edge == ABOVE && y.h > h_star);
        }
    }

    #[test]
    fn fp_box_translates() {
        let c = single_edge(|_| 0.0, |_| 1.0);
        let cfg = FpConfig { cells_per_edge: 1000, h_max: 2.0, scheme: FpScheme::UpwindCentered, ..FpConfig::default() };
        let bins = BinSpec { edges: vec![vec![0.0, 0.4, 0.6, 2.0]] };
        let init = GraphMeasure::Histogram(Histogram { bins, masses: vec![vec![0.0, 1.0, 0.0]] });
        let path = solve_graph_fp(&c, &cfg, &init, &[0.0, 0.1]).unwrap();
        let com = |k: usize| path.measure(k).integrate(|_, h| h);
        assert!((com(1) - com(0) - 0.1).abs() < 1e-3);
    }

    #[test]
    fn fp_conserves_mass_and_symmetry() {
        let c = dw_coefficients();
        let cfg = FpConfig { cells_per_edge: 64, ..FpConfig::default() };
        let init = GraphMeasure::Atoms(vec![(GraphPoint::new(LEFT, 0.1), 0.5), (GraphPoint::new(RIGHT, 0.1), 0.5)]);
        let times: Vec<f64> = (0..=10).map(|k| k as f64 * 0.05).collect();
        for scheme in [FpScheme::FluxForm, FpScheme::UpwindCentered] {
        let path = solve_graph_fp(&c, &FpConfig { scheme, ..cfg.clone() }, &init, &times).unwrap();
        for m in &path.masses {
            let total: f64 = m.iter().flatten().sum();
            assert!((total - 1.0).abs() < 1e-6);
            assert!(m.iter().flatten().all(|&x| x >= 0.0));
            for (l, r) in m[LEFT].iter().zip(&m[RIGHT]) {
                assert!((l - r).abs() < 1e-10);
            }
        }
        assert!(path.masses.last().unwrap()[ABOVE].iter().sum::<f64>() > 0.01);
        }
    }

    #[test]
    fn fp_harmonic_mean_drift() {
        let c = single_edge(|h| 2.0 * std::f64::consts::PI * h, |_| 2.0 * std::f64::consts::PI);
        let cfg = FpConfig { cells_per_edge: 500, h_max: 25.0, ..FpConfig::default() };
        let path = solve_graph_fp(&c, &cfg, &GraphMeasure::dirac(GraphPoint::new(0, 0.51)), &[0.0, 1.0]).unwrap();
        let mean = |k: usize| path.measure(k).integrate(|_, h| h);
        assert!((mean(1) - mean(0) - 1.0).abs() < 2e-3, "{}", mean(1) - mean(0));
        assert!(path.boundary_mass[1] < 1e-6);
    }

    #[test]
    fn fp_rejects_unstable_step() {
        let c = dw_coefficients();
        let cfg = FpConfig { cells_per_edge: 64, dt: Some(1.0), ..FpConfig::default() };
        let init = GraphMeasure::dirac(GraphPoint::new(RIGHT, 0.05));
        assert!(matches!(solve_graph_fp(&c, &cfg, &init, &[0.1]), Err(Error::CflViolation { .. })));
    }

    #[test]
    fn fp_and_monte_carlo_agree_on_a_short_horizon() {
        let c = dw_coefficients();
        let start = GraphPoint::new(RIGHT, 0.2);
        let fp = solve_graph_fp(&c, &FpConfig { cells_per_edge: 128, ..FpConfig::default() }, &GraphMeasure::dirac(start), &[0.1]).unwrap();
        let cfg = GraphSdeConfig::new(start, 0.1, 2000, 11);
        let mc = simulate_graph_ensemble(&c, &cfg, &[0.1]).unwrap();
        let d = w1_tree(&fp.measure(0), &mc.to_measure_path().measures[0], &c.graph, 1e3).unwrap();
        assert!(d < 0.03, "w1 {d}");
    }
}
