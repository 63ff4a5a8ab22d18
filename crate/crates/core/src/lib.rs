//! Coarse-graining of a noisy Hamiltonian system onto the graph of its
//! level-set components.
//!
//! The crate simulates the fast-slow SDE
//! `dQ = P/ε dt, dP = −V'(Q)/ε dt + √2 dW`, projects ensembles onto the
//! energy graph of `H = p²/2 + V(q)`, builds the limiting diffusion on that
//! graph (Monte Carlo and a finite-volume Fokker–Planck solver), measures
//! convergence in the tree Wasserstein-1 distance, and evaluates the dual
//! functionals of the empirical-measure rate functional before and after
//! coarse-graining.
//!
//! All numerics are generic over [`Real`]; the `*64` aliases fix `f64`.

pub mod duality;
pub mod error;
pub mod graphdyn;
pub mod hamiltonian;
pub mod interp;
pub mod levelset;
pub mod measures;
pub mod quadrature;
pub mod scalar;
pub mod sde;

pub use duality::{
    apply_generator_composed, inequality_chain_report, j_full, j_hat_eps, j_hat_zero, make_test_family, DualEstimate, DualityReport,
    FamilySpec, GraphTestFunction,
};
pub use error::{Error, Result};
pub use graphdyn::{
    gluing_weights, simulate_graph_ensemble, solve_graph_fp, FpConfig, FpScheme, GraphDensityPath, GraphEnsemblePath, GraphSdeConfig,
};
pub use hamiltonian::{critical_points, hamiltonian, CriticalKind, CriticalPoint, PhasePoint, Potential};
pub use levelset::{
    action, build_coefficients, build_graph, period, project, turning_points, CoefficientSet, EdgeCoefficients, EdgeId,
    GraphPoint, GridSpec, LevelGraph, Side,
};
pub use measures::{pushforward, sup_w1_over_time, w1_tree, BinSpec, GraphMeasure, GraphMeasurePath, Histogram};
pub use scalar::Real;
pub use sde::{integrate_path, simulate_ensemble, EnsemblePath, SdeConfig, Trajectory};

pub type Potential64 = Potential<f64>;
pub type PhasePoint64 = PhasePoint<f64>;
pub type LevelGraph64 = LevelGraph<f64>;
pub type GraphPoint64 = GraphPoint<f64>;
pub type CoefficientSet64 = CoefficientSet<f64>;
pub type SdeConfig64 = SdeConfig<f64>;
pub type EnsemblePath64 = EnsemblePath<f64>;
pub type GraphMeasure64 = GraphMeasure<f64>;
pub type GraphMeasurePath64 = GraphMeasurePath<f64>;
pub type GraphSdeConfig64 = GraphSdeConfig<f64>;
pub type GraphDensityPath64 = GraphDensityPath<f64>;
pub type GraphEnsemblePath64 = GraphEnsemblePath<f64>;
pub type GraphTestFunction64 = GraphTestFunction<f64>;
