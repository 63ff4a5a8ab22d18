use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("degenerate critical point at q = {q} (|V''| = {curvature:e})")]
    DegenerateCritical { q: f64, curvature: f64 },
    #[error("V' has no real roots in the scan window")]
    NoRoots,
    #[error("unsupported level-set topology: {0}")]
    UnsupportedTopology(String),
    #[error("point ({q}, {p}) sits on the saddle of H")]
    AtSaddlePoint { q: f64, p: f64 },
    #[error("energy {h} is outside the range of edge {edge}")]
    OutOfRange { edge: usize, h: f64 },
    #[error("energy {h} is within {band:e} of the saddle energy; the period diverges there")]
    NearSaddle { h: f64, band: f64 },
    #[error("quadrature did not reach tolerance {tolerance:e} (estimate {estimate:e})")]
    Quadrature { tolerance: f64, estimate: f64 },
    #[error("trajectory {trajectory} became unstable at t = {t}: {reason}")]
    Unstable { trajectory: usize, t: f64, reason: String },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("explicit step {dt:e} exceeds the stability limit {limit:e}")]
    CflViolation { dt: f64, limit: f64 },
    #[error("mass drifted to {mass} (tolerance 1e-6)")]
    MassLoss { mass: f64 },
    #[error("measure has mass beyond h_max = {h_max} (at h = {h})")]
    UnboundedSupport { h: f64, h_max: f64 },
    #[error("time grids differ: {0}")]
    TimeGridMismatch(String),
    #[error("energy {h} on edge {edge} is outside the test function domain")]
    OutOfDomain { edge: usize, h: f64 },
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),
}

pub type Result<T> = std::result::Result<T, Error>;
