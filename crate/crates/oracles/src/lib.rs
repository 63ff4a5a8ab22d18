//! Reference computations for checking `levelcg-core`. Each one takes a
//! different route to the same number: a general LP instead of the tree
//! sweep, explicit path lengths instead of cumulative flows, closed forms
//! instead of quadrature, and Itô's formula instead of the integrator.

use std::f64::consts::PI;
use std::fmt;

use levelcg_core::{hamiltonian, EnsemblePath, GraphPoint, LevelGraph, Potential};
use microlp::{ComparisonOp, OptimizationDirection, Problem};

#[derive(Debug, Clone, PartialEq)]
pub enum OracleError {
    EmptyMeasure,
    MassMismatch { left: f64, right: f64 },
    Solver(String),
}

impl fmt::Display for OracleError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OracleError::EmptyMeasure => write!(f, "measure has no atoms"),
            OracleError::MassMismatch { left, right } => write!(f, "total masses differ: {left} vs {right}"),
            OracleError::Solver(msg) => write!(f, "lp solver: {msg}"),
        }
    }
}

impl std::error::Error for OracleError {}

/// Length of the path between two graph points: along the edge if they
/// share one, otherwise through the interior vertex.
pub fn tree_distance(g: &LevelGraph<f64>, a: GraphPoint<f64>, b: GraphPoint<f64>) -> f64 {
    if a.edge == b.edge {
        return (a.h - b.h).abs();
    }
    let h_star = g.h_star().expect("distinct edges meet at the interior vertex");
    (a.h - h_star).abs() + (b.h - h_star).abs()
}

/// W1 between two atomic measures by solving the transport LP over all
/// couplings with cost [`tree_distance`].
pub fn lp_w1(mu: &[(GraphPoint<f64>, f64)], nu: &[(GraphPoint<f64>, f64)], g: &LevelGraph<f64>) -> Result<f64, OracleError> {
    if mu.is_empty() || nu.is_empty() {
        return Err(OracleError::EmptyMeasure);
    }
    let (ma, mb): (f64, f64) = (mu.iter().map(|a| a.1).sum(), nu.iter().map(|a| a.1).sum());
    if (ma - mb).abs() > 1e-12 * ma.max(1.0) {
        return Err(OracleError::MassMismatch { left: ma, right: mb });
    }
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let vars: Vec<Vec<_>> = mu
        .iter()
        .map(|&(x, _)| nu.iter().map(|&(y, _)| lp.add_var(tree_distance(g, x, y), (0.0, f64::INFINITY))).collect())
        .collect();
    for (i, &(_, w)) in mu.iter().enumerate() {
        let row: Vec<_> = vars[i].iter().map(|&v| (v, 1.0)).collect();
        lp.add_constraint(row.as_slice(), ComparisonOp::Eq, w);
    }
    // the last column constraint is implied by the others
    for (j, &(_, w)) in nu.iter().enumerate().take(nu.len() - 1) {
        let col: Vec<_> = vars.iter().map(|r| (r[j], 1.0)).collect();
        lp.add_constraint(col.as_slice(), ComparisonOp::Eq, w);
    }
    let outcome = lp.solve().map_err(|e| OracleError::Solver(e.to_string()))?;
    let solution = outcome.into_solution().map_err(|_| OracleError::Solver("interrupted".into()))?;
    Ok(solution.objective())
}

/// Harmonic oscillator `H = (p² + q²)/2`: the orbit at energy `h` encloses
/// area `2πh`.
pub fn harmonic_action(h: f64) -> f64 {
    2.0 * PI * h
}

/// Harmonic period, independent of energy.
pub fn harmonic_period(_h: f64) -> f64 {
    2.0 * PI
}

/// Area of one lobe of the separatrix of `V = (q² − 1)²/4`:
/// `2 ∫₀^√2 √(2(1/4 − V)) dq = √2 ∫₀^√2 q √(2 − q²) dq = 4/3`.
pub fn double_well_lobe_action() -> f64 {
    let upper = 2f64.sqrt();
    let antiderivative = |q: f64| -(2.0 - q * q).max(0.0).powf(1.5) / 3.0;
    2f64.sqrt() * (antiderivative(upper) - antiderivative(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n: usize,
}

impl MeanEstimate {
    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len();
        let mean = samples.iter().sum::<f64>() / n.max(1) as f64;
        let var = if n > 1 { samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64 } else { 0.0 };
        Self { mean, std_error: (var / n.max(1) as f64).sqrt(), n }
    }

    /// `|mean| ≤ k · SE`.
    pub fn within(&self, k: f64) -> bool {
        self.mean.abs() <= k * self.std_error
    }
}

/// Itô's formula for `dH = dt + √2 p dW`: `H(X_t) − H(X_0) − t` has mean
/// zero at every snapshot.
pub fn energy_drift(ens: &EnsemblePath<f64>, v: &Potential<f64>) -> Vec<MeanEstimate> {
    let h0: Vec<f64> = ens.states[0].iter().map(|&x| hamiltonian(v, x)).collect();
    ens.times
        .iter()
        .zip(&ens.states)
        .skip(1)
        .map(|(&t, slice)| {
            let d: Vec<f64> = slice.iter().zip(&h0).map(|(&x, h)| hamiltonian(v, x) - h - t).collect();
            MeanEstimate::from_samples(&d)
        })
        .collect()
}

/// Per-gap version of [`energy_drift`]: `H(X_{t_{k+1}}) − H(X_{t_k}) − Δ_k`.
pub fn energy_increments(ens: &EnsemblePath<f64>, v: &Potential<f64>) -> Vec<MeanEstimate> {
    ens.times
        .windows(2)
        .zip(ens.states.windows(2))
        .map(|(t, s)| {
            let d: Vec<f64> = s[0].iter().zip(&s[1]).map(|(&a, &b)| hamiltonian(v, b) - hamiltonian(v, a) - (t[1] - t[0])).collect();
            MeanEstimate::from_samples(&d)
        })
        .collect()
}

/// Standardised deviation of an observed count from a binomial mean.
pub fn binomial_z(count: u64, trials: u64, p: f64) -> f64 {
    let n = trials as f64;
    let sd = (n * p * (1.0 - p)).sqrt();
    if sd == 0.0 {
        return if count as f64 == n * p { 0.0 } else { f64::INFINITY };
    }
    (count as f64 - n * p) / sd
}

#[cfg(test)]
mod tests {
    use super::*;
    use levelcg_core::{build_graph, Potential};

    #[test]
    fn lobe_action_is_four_thirds() {
        assert!((double_well_lobe_action() - 4.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn lp_moves_mass_through_the_vertex() {
        let v = Potential::double_well();
        let g = build_graph(&v).unwrap();
        let mu = [(GraphPoint::new(0, 0.05), 1.0)];
        let nu = [(GraphPoint::new(2, 0.5), 1.0)];
        assert!((lp_w1(&mu, &nu, &g).unwrap() - 0.45).abs() < 1e-12);
        let nu = [(GraphPoint::new(0, 0.15), 0.5), (GraphPoint::new(1, 0.2), 0.5)];
        // 0.5·0.1 + 0.5·(0.2 + 0.05)
        assert!((lp_w1(&mu, &nu, &g).unwrap() - 0.175).abs() < 1e-12);
    }

    #[test]
    fn mass_mismatch_is_rejected() {
        let g = build_graph(&Potential::double_well()).unwrap();
        let r = lp_w1(&[(GraphPoint::new(0, 0.1), 1.0)], &[(GraphPoint::new(0, 0.1), 0.5)], &g);
        assert!(matches!(r, Err(OracleError::MassMismatch { .. })));
    }

    #[test]
    fn binomial_score() {
        assert_eq!(binomial_z(50, 100, 0.5), 0.0);
        assert!((binomial_z(60, 100, 0.5) - 2.0).abs() < 1e-12);
    }
}
