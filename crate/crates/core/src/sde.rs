//! Simulation of the fast-slow system
//!
//! ```text
//! dQ = P/ε dt,    dP = −V'(Q)/ε dt + √2 dW
//! ```
//!
//! Each outer step of length `dt` is a Strang splitting: a half-step noise
//! kick `p += √dt ξ₁`, `inner_substeps` position-Verlet steps of the
//! Hamiltonian flow run at speed `1/ε`, and a second kick with `ξ₂`.
//! Trajectory `i` draws its noise from ChaCha8 stream `i` under the base
//! seed, so results do not depend on scheduling or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hamiltonian::{hamiltonian, PhasePoint, Potential};
use crate::levelset::{project_or_vertex, EdgeId, LevelGraph};
use crate::scalar::{lit, to_f64, Real};

/// Largest Hamiltonian-time step `dt / (inner · ε)` used by the default
/// sub-step count.
pub const MAX_FLOW_STEP: f64 = 5e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct SdeConfig<T> {
    pub epsilon: T,
    pub dt: T,
    pub inner_substeps: usize,
    pub t_final: T,
    pub x0: PhasePoint<T>,
    pub base_seed: u64,
    pub n: usize,
    /// Switches the noise kicks off (deterministic Hamiltonian flow).
    pub noise: bool,
    pub escape_bound: T,
}

/// Inner sub-steps so that the flow step is at most [`MAX_FLOW_STEP`] and
/// the physical sub-step at most `ε/8`.
pub fn default_inner_substeps<T: Real>(dt: T, epsilon: T) -> usize {
    let by_flow = to_f64(dt / epsilon) / MAX_FLOW_STEP;
    let by_scale = 8.0 * to_f64(dt / epsilon);
    by_flow.max(by_scale).ceil().max(1.0) as usize
}

impl<T: Real> SdeConfig<T> {
    pub fn new(epsilon: T, t_final: T, x0: PhasePoint<T>, n: usize, base_seed: u64) -> Self {
        let dt = lit(1e-3);
        Self {
            epsilon,
            dt,
            inner_substeps: default_inner_substeps(dt, epsilon),
            t_final,
            x0,
            base_seed,
            n,
            noise: true,
            escape_bound: lit(1e3),
        }
    }

    /// Same configuration with a different outer step; the sub-step count is
    /// recomputed from the defaults.
    pub fn with_dt(mut self, dt: T) -> Self {
        self.dt = dt;
        self.inner_substeps = default_inner_substeps(dt, self.epsilon);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.epsilon > T::zero()) || !self.epsilon.is_finite() {
            return bad("epsilon must be positive");
        }
        if !(self.dt > T::zero()) || !self.dt.is_finite() {
            return bad("dt must be positive");
        }
        if !(self.t_final > T::zero()) || !self.t_final.is_finite() {
            return bad("t_final must be positive");
        }
        if self.inner_substeps == 0 {
            return bad("inner_substeps must be >= 1");
        }
        if self.n == 0 {
            return bad("n must be >= 1");
        }
        if !self.x0.is_finite() {
            return bad("x0 must be finite");
        }
        // physical sub-step at most ε/8
        let sub = self.dt / lit(self.inner_substeps as f64);
        if sub > self.epsilon / lit(8.0) * (T::one() + lit(1e-12)) {
            return Err(Error::InvalidConfig(format!(
                "inner sub-step {} exceeds epsilon/8 = {}",
                to_f64(sub),
                to_f64(self.epsilon / lit(8.0))
            )));
        }
        Ok(())
    }

    /// Number of outer steps to reach `t_final`.
    pub fn steps(&self) -> usize {
        to_f64(self.t_final / self.dt).round() as usize
    }
}

/// Noise stream of one trajectory.
pub fn trajectory_rng(base_seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
    rng.set_stream(index as u64);
    rng
}

/// Advances one outer step in place.
pub struct Stepper<'a, T> {
    v: &'a Potential<T>,
    kick: T,
    drift: T,
    half_drift: T,
    inner: usize,
    noise: bool,
}

impl<'a, T: Real> Stepper<'a, T> {
    pub fn new(v: &'a Potential<T>, cfg: &SdeConfig<T>) -> Self {
        let sub = cfg.dt / lit(cfg.inner_substeps as f64);
        let drift = sub / cfg.epsilon;
        Self {
            v,
            kick: cfg.dt.sqrt(),
            drift,
            half_drift: drift * lit(0.5),
            inner: cfg.inner_substeps,
            noise: cfg.noise,
        }
    }

    #[inline]
    pub fn step(&self, x: &mut PhasePoint<T>, rng: &mut ChaCha8Rng) {
        if self.noise {
            let xi: f64 = StandardNormal.sample(rng);
            x.p = x.p + self.kick * lit(xi);
        }
        self.flow(x);
        if self.noise {
            let xi: f64 = StandardNormal.sample(rng);
            x.p = x.p + self.kick * lit(xi);
        }
    }

    /// Noise-free part: position-Verlet sub-steps.
    #[inline]
    pub fn flow(&self, x: &mut PhasePoint<T>) {
        let (mut q, mut p) = (x.q, x.p);
        for _ in 0..self.inner {
            q = q + self.half_drift * p;
            p = p - self.drift * self.v.grad(q);
            q = q + self.half_drift * p;
        }
        x.q = q;
        x.p = p;
    }
}

/// A single path recorded at every outer step.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    pub times: Vec<T>,
    pub states: Vec<PhasePoint<T>>,
}

fn check_escape<T: Real>(x: &PhasePoint<T>, bound: T, index: usize, t: T) -> Result<()> {
    if !x.is_finite() || x.q.abs() > bound {
        return Err(Error::Unstable {
            trajectory: index,
            t: to_f64(t),
            reason: format!("|q| = {} exceeds the escape bound {}", to_f64(x.q.abs()), to_f64(bound)),
        });
    }
    Ok(())
}

/// Integrates trajectory `index` and keeps every outer step.
pub fn integrate_path<T: Real>(v: &Potential<T>, cfg: &SdeConfig<T>, index: usize) -> Result<Trajectory<T>> {
    cfg.validate()?;
    let steps = cfg.steps();
    let stepper = Stepper::new(v, cfg);
    let mut rng = trajectory_rng(cfg.base_seed, index);
    let mut x = cfg.x0;
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    times.push(T::zero());
    states.push(x);
    for k in 1..=steps {
        stepper.step(&mut x, &mut rng);
        let t = cfg.dt * lit(k as f64);
        check_escape(&x, cfg.escape_bound, index, t)?;
        times.push(t);
        states.push(x);
    }
    Ok(Trajectory { times, states })
}

/// Atoms of the empirical measure at the snapshot times.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsemblePath<T> {
    pub times: Vec<T>,
    /// `states[k][i]`: trajectory `i` at `times[k]`.
    pub states: Vec<Vec<PhasePoint<T>>>,
    pub config: SdeConfig<T>,
}

impl<T: Real> EnsemblePath<T> {
    pub fn n(&self) -> usize {
        self.states.first().map_or(0, Vec::len)
    }

    /// Keeps only the listed trajectories.
    pub fn subsample(&self, indices: &[usize]) -> Self {
        Self {
            times: self.times.clone(),
            states: self.states.iter().map(|s| indices.iter().map(|&i| s[i]).collect()).collect(),
            config: SdeConfig { n: indices.len(), ..self.config.clone() },
        }
    }
}

/// Converts snapshot times to outer-step indices.
pub fn snapshot_steps<T: Real>(cfg: &SdeConfig<T>, snapshot_times: &[T]) -> Result<Vec<usize>> {
    let steps = cfg.steps();
    let mut out = Vec::with_capacity(snapshot_times.len());
    for &t in snapshot_times {
        let k = to_f64(t / cfg.dt);
        let r = k.round();
        if (k - r).abs() > 1e-6 || r < 0.0 || r as usize > steps {
            return Err(Error::InvalidConfig(format!("snapshot time {} is not on the outer grid", to_f64(t))));
        }
        if out.last().is_some_and(|&last| r as usize <= last) {
            return Err(Error::InvalidConfig("snapshot times must be increasing".into()));
        }
        out.push(r as usize);
    }
    Ok(out)
}

/// Evenly spaced snapshot times `0, Δ, 2Δ, …, t_final`.
pub fn uniform_snapshots<T: Real>(t_final: T, spacing: T) -> Vec<T> {
    let count = to_f64(t_final / spacing).round() as usize;
    (0..=count).map(|k| spacing * lit(k as f64)).collect()
}

fn run_snapshots<T: Real>(v: &Potential<T>, cfg: &SdeConfig<T>, index: usize, steps: &[usize]) -> Result<Vec<PhasePoint<T>>> {
    let stepper = Stepper::new(v, cfg);
    let mut rng = trajectory_rng(cfg.base_seed, index);
    let mut x = cfg.x0;
    let mut out = Vec::with_capacity(steps.len());
    let mut k = 0usize;
    for &target in steps {
        while k < target {
            stepper.step(&mut x, &mut rng);
            k += 1;
        }
        check_escape(&x, cfg.escape_bound, index, cfg.dt * lit(k as f64))?;
        out.push(x);
    }
    Ok(out)
}

/// `n` independent trajectories recorded at the snapshot times.
pub fn simulate_ensemble<T: Real>(v: &Potential<T>, cfg: &SdeConfig<T>, snapshot_times: &[T]) -> Result<EnsemblePath<T>> {
    cfg.validate()?;
    let steps = snapshot_steps(cfg, snapshot_times)?;
    let per_path: Vec<Vec<PhasePoint<T>>> =
        (0..cfg.n).into_par_iter().map(|i| run_snapshots(v, cfg, i, &steps)).collect::<Result<_>>()?;
    let mut states = vec![Vec::with_capacity(cfg.n); steps.len()];
    for path in per_path {
        for (slot, x) in states.iter_mut().zip(path) {
            slot.push(x);
        }
    }
    let times = steps.iter().map(|&k| cfg.dt * lit(k as f64)).collect();
    Ok(EnsemblePath { times, states, config: cfg.clone() })
}

/// One row of figure data: the phase-space point and its projection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FigureRow<T> {
    pub t: T,
    pub q: T,
    pub p: T,
    pub h: T,
    pub edge: EdgeId,
}

pub fn emit_figure_data<T: Real>(trajectory: &Trajectory<T>, g: &LevelGraph<T>, v: &Potential<T>) -> Vec<FigureRow<T>> {
    trajectory
        .times
        .iter()
        .zip(&trajectory.states)
        .map(|(&t, &x)| {
            let y = project_or_vertex(g, v, x);
            FigureRow { t, q: x.q, p: x.p, h: y.h, edge: y.edge }
        })
        .collect()
}

/// Branch taken after each passage through the saddle energy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BranchCounts {
    /// Indexed by edge id (left, right, above).
    pub exits: [u64; 3],
}

impl BranchCounts {
    pub fn total(&self) -> u64 {
        self.exits.iter().sum()
    }

    pub fn frequencies(&self) -> [f64; 3] {
        let n = self.total().max(1) as f64;
        self.exits.map(|c| c as f64 / n)
    }

    pub fn merge(mut self, other: Self) -> Self {
        for (a, b) in self.exits.iter_mut().zip(other.exits) {
            *a += b;
        }
        self
    }
}

/// Runs the full SDE and records, every time the energy crosses the saddle
/// energy, on which branch the path leaves the shell `|H − h*| ≤ shell`.
/// Paths stop after `t_final` or once their energy exceeds `h_stop`.
pub fn record_vertex_exits<T: Real>(
    v: &Potential<T>,
    g: &LevelGraph<T>,
    cfg: &SdeConfig<T>,
    shell: T,
    h_stop: T,
) -> Result<BranchCounts> {
    cfg.validate()?;
    let h_star = g
        .h_star()
        .ok_or_else(|| Error::UnsupportedTopology("vertex exits need an interior vertex".into()))?;
    let steps = cfg.steps();
    let counts = (0..cfg.n)
        .into_par_iter()
        .map(|i| {
            let stepper = Stepper::new(v, cfg);
            let mut rng = trajectory_rng(cfg.base_seed, i);
            let mut x = cfg.x0;
            let mut counts = BranchCounts::default();
            let mut prev_side = hamiltonian(v, x) > h_star;
            let mut armed = false;
            for k in 1..=steps {
                stepper.step(&mut x, &mut rng);
                check_escape(&x, cfg.escape_bound, i, cfg.dt * lit(k as f64))?;
                let h = hamiltonian(v, x);
                let side = h > h_star;
                if side != prev_side {
                    armed = true;
                }
                prev_side = side;
                if armed && (h - h_star).abs() > shell {
                    let edge = g.classify(x.q, h);
                    counts.exits[edge] += 1;
                    armed = false;
                }
                if !armed && h > h_stop {
                    break;
                }
            }
            Ok(counts)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(counts.into_iter().fold(BranchCounts::default(), BranchCounts::merge))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levelset::{build_graph, RIGHT};

    fn dw() -> Potential<f64> {
        Potential::double_well()
    }

    #[test]
    fn zero_noise_conserves_energy() {
        let v = dw();
        for &eps in &[0.5, 0.2, 0.1, 0.05] {
            for x0 in [PhasePoint::new(1.2, 0.0), PhasePoint::new(0.0, 1.0), PhasePoint::new(-0.3, 0.4), PhasePoint::new(1.9, -1.2)] {
                let mut cfg = SdeConfig::new(eps, 10.0 * eps, x0, 1, 3);
                cfg.noise = false;
                let path = integrate_path(&v, &cfg, 0).unwrap();
                let h0 = hamiltonian(&v, x0);
                let worst = path.states.iter().map(|&x| (hamiltonian(&v, x) - h0).abs()).fold(0.0, f64::max);
                assert!(worst < 1e-6, "eps {eps} x0 {x0:?}: drift {worst}");
            }
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let v = dw();
        let cfg = SdeConfig::new(0.1, 0.5, PhasePoint::new(1.2, 0.0), 1, 42);
        let a = integrate_path(&v, &cfg, 5).unwrap();
        let b = integrate_path(&v, &cfg, 5).unwrap();
        assert_eq!(a, b);
        let c = integrate_path(&v, &cfg, 6).unwrap();
        assert_ne!(a.states.last(), c.states.last());
    }

    #[test]
    fn single_member_ensemble_matches_path() {
        let v = dw();
        let cfg = SdeConfig::new(0.1, 0.2, PhasePoint::new(1.2, 0.0), 1, 9);
        let path = integrate_path(&v, &cfg, 0).unwrap();
        let snaps = uniform_snapshots(0.2, 0.01);
        let ens = simulate_ensemble(&v, &cfg, &snaps).unwrap();
        for (k, &t) in ens.times.iter().enumerate() {
            let step = (t / cfg.dt).round() as usize;
            assert_eq!(ens.states[k][0], path.states[step]);
        }
    }

    #[test]
    fn initial_snapshot_is_x0() {
        let v = dw();
        let g = build_graph(&v).unwrap();
        let cfg = SdeConfig::new(0.1, 0.05, PhasePoint::new(1.2, 0.0), 50, 1);
        let ens = simulate_ensemble(&v, &cfg, &uniform_snapshots(0.05, 0.01)).unwrap();
        assert_eq!(ens.times[0], 0.0);
        for &x in &ens.states[0] {
            assert_eq!(x, PhasePoint::new(1.2, 0.0));
            let y = project_or_vertex(&g, &v, x);
            assert_eq!(y.edge, RIGHT);
            assert!((y.h - 0.0484).abs() < 1e-15);
        }
        assert!(ens.states.iter().all(|s| s.len() == 50));
    }

    #[test]
    fn time_reversal_at_zero_noise() {
        let v = dw();
        let mut cfg = SdeConfig::new(0.1, 0.3, PhasePoint::new(0.4, 0.7), 1, 0);
        cfg.noise = false;
        let forward = integrate_path(&v, &cfg, 0).unwrap();
        let end = *forward.states.last().unwrap();
        cfg.x0 = PhasePoint::new(end.q, -end.p);
        let back = integrate_path(&v, &cfg, 0).unwrap();
        let last = back.states.last().unwrap();
        assert!((last.q - 0.4).abs() < 1e-10 && (last.p + 0.7).abs() < 1e-10, "{last:?}");
    }

    #[test]
    fn figure_rows() {
        let v = dw();
        let g = build_graph(&v).unwrap();
        let cfg = SdeConfig::new(0.1, 1.0, PhasePoint::new(1.2, 0.0), 1, 11);
        let path = integrate_path(&v, &cfg, 0).unwrap();
        let rows = emit_figure_data(&path, &g, &v);
        assert_eq!(rows.len(), 1001);
        for r in &rows {
            assert_eq!(r.h, hamiltonian(&v, PhasePoint::new(r.q, r.p)));
        }

        let mut quiet = cfg.clone();
        quiet.noise = false;
        let rows = emit_figure_data(&integrate_path(&v, &quiet, 0).unwrap(), &g, &v);
        assert!(rows.iter().all(|r| r.edge == RIGHT));
        assert!(rows.iter().all(|r| (r.h - 0.0484).abs() < 1e-6));
    }

    #[test]
    fn rejects_bad_config() {
        let v = dw();
        let mut cfg = SdeConfig::new(0.1, 1.0, PhasePoint::new(1.2, 0.0), 1, 11);
        cfg.epsilon = -0.1;
        assert!(matches!(integrate_path(&v, &cfg, 0), Err(Error::InvalidConfig(_))));
        let mut cfg = SdeConfig::new(0.1, 1.0, PhasePoint::new(1.2, 0.0), 1, 11);
        cfg.inner_substeps = 0;
        assert!(cfg.validate().is_err());
        let cfg = SdeConfig::new(0.1, 1.0, PhasePoint::new(1.2, 0.0), 1, 11);
        assert!(simulate_ensemble(&v, &cfg, &[0.0, 0.0005]).is_err());
    }

    #[test]
    fn escape_is_reported() {
        let v = dw();
        let mut cfg = SdeConfig::new(0.1, 1.0, PhasePoint::new(1.2, 0.0), 1, 11);
        cfg.escape_bound = 1.1;
        assert!(matches!(integrate_path(&v, &cfg, 0), Err(Error::Unstable { .. })));
    }
}
