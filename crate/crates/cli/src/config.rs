//! Run configuration: one TOML document with a section per module. Every
//! field has a default, so an empty file is a valid configuration.

use std::path::Path;

use levelcg_core::duality::FamilySpec;
use levelcg_core::{FpConfig, FpScheme, GridSpec, PhasePoint, Potential, SdeConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, ConfigError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PotentialSection {
    /// Polynomial coefficients of `V`, ascending powers.
    pub coefficients: Vec<f64>,
}

impl Default for PotentialSection {
    fn default() -> Self {
        Self { coefficients: vec![0.25, 0.0, -0.5, 0.0, 0.25] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SdeSection {
    pub epsilon: Vec<f64>,
    pub n: usize,
    pub dt: f64,
    /// Defaults to the smallest count meeting the flow-step bounds.
    pub inner_substeps: Option<usize>,
    pub t_final: f64,
    pub snapshot_spacing: f64,
    pub x0: [f64; 2],
    pub seed: u64,
}

impl Default for SdeSection {
    fn default() -> Self {
        Self { epsilon: vec![0.5, 0.2, 0.1, 0.05], n: 10_000, dt: 1e-3, inner_substeps: None, t_final: 1.0, snapshot_spacing: 0.01, x0: [1.2, 0.0], seed: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TablesSection {
    pub points_per_edge: usize,
    pub delta_sing: f64,
    pub delta_floor: f64,
    pub h_max: f64,
}

impl Default for TablesSection {
    fn default() -> Self {
        let g = GridSpec::default();
        Self { points_per_edge: g.points_per_edge, delta_sing: g.delta_sing, delta_floor: g.delta_floor, h_max: 16.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphSection {
    /// Also run the Monte Carlo limit process in `converge`.
    pub monte_carlo: bool,
    pub n: usize,
    pub dt_h: f64,
    pub vertex_shell: f64,
    pub seed: u64,
}

impl Default for GraphSection {
    fn default() -> Self {
        Self { monte_carlo: false, n: 10_000, dt_h: 1e-5, vertex_shell: 0.01, seed: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FpSection {
    pub cells_per_edge: usize,
    pub h_max: f64,
    pub dt: Option<f64>,
    pub cfl_safety: f64,
    pub scheme: FpScheme,
}

impl Default for FpSection {
    fn default() -> Self {
        Self { cells_per_edge: 512, h_max: 8.0, dt: None, cfl_safety: 0.9, scheme: FpScheme::FluxForm }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeasuresSection {
    /// Cut of the unbounded edge for W1; supports beyond it are an error.
    pub w1_h_max: f64,
    /// Cut of the unbounded edge for histogram output.
    pub histogram_h_max: f64,
}

impl Default for MeasuresSection {
    fn default() -> Self {
        Self { w1_h_max: 1e3, histogram_h_max: 8.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DualitySection {
    pub family_size: usize,
    pub scales: Vec<f64>,
    pub h_max: f64,
    pub h_cut: f64,
    pub intervals_bounded: usize,
    pub intervals_unbounded: usize,
    /// Halved-grid limit solves used for the grid budget.
    pub coarse_levels: usize,
    /// Shift of the limit path in `h`; non-zero gives an off-solution input.
    pub shift: f64,
}

impl Default for DualitySection {
    fn default() -> Self {
        let f = FamilySpec::default();
        Self {
            family_size: f.size,
            scales: f.scales,
            h_max: f.h_max,
            h_cut: f.h_cut,
            intervals_bounded: f.intervals_bounded,
            intervals_unbounded: f.intervals_unbounded,
            coarse_levels: 2,
            shift: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub epsilon: f64,
    pub t_final: f64,
    pub dt: f64,
    pub x0: [f64; 2],
    pub seed: u64,
    pub trajectory_index: usize,
    /// Ensemble size for `ensemble.csv`; 0 writes no ensemble.
    pub ensemble_n: usize,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self { epsilon: 0.05, t_final: 1.0, dt: 1e-3, x0: [1.2, 0.0], seed: 1, trajectory_index: 0, ensemble_n: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: String,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: "out".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub potential: PotentialSection,
    pub sde: SdeSection,
    pub tables: TablesSection,
    pub graph: GraphSection,
    pub fp: FpSection,
    pub measures: MeasuresSection,
    pub duality: DualitySection,
    pub simulate: SimulateSection,
    pub output: OutputSection,
}

/// A configuration together with the text it was read from, which is
/// copied into every output header.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub source: String,
}

impl LoadedConfig {
    pub fn from_str(source: &str) -> Result<Self, CliError> {
        let config: RunConfig = toml::from_str(source).map_err(|e| {
            let line = e.span().map(|s| line_of(source, s.start));
            CliError::Config(ConfigError { line, field: String::new(), message: e.message().trim().to_string() })
        })?;
        let loaded = Self { config, source: source.to_string() };
        loaded.config.validate().map_err(|mut e| {
            e.line = locate(source, &e.field);
            CliError::Config(e)
        })?;
        Ok(loaded)
    }

    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::from_str(&text)
    }

    /// Defaults, with the serialized defaults as the recorded source.
    pub fn defaults() -> Self {
        let config = RunConfig::default();
        let source = toml::to_string(&config).expect("default config serializes");
        Self { config, source }
    }

    /// Re-validates after command-line overrides.
    pub fn revalidate(&self) -> Result<(), CliError> {
        self.config.validate().map_err(|mut e| {
            e.line = locate(&self.source, &e.field);
            CliError::Config(e)
        })
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Line of `section.key` in a TOML document, if written there.
pub fn locate(text: &str, field: &str) -> Option<usize> {
    let (section, key) = field.split_once('.')?;
    let mut current = String::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if let Some(name) = t.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
            current = name.trim().to_string();
            continue;
        }
        if current == section {
            if let Some((k, _)) = t.split_once('=') {
                if k.trim() == key {
                    return Some(i + 1);
                }
            }
        }
    }
    None
}

fn positive(field: &str, x: f64) -> Result<(), ConfigError> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::new(field, format!("must be positive and finite, got {x}")))
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        Potential::new(self.potential.coefficients.clone()).map_err(|e| ConfigError::new("potential.coefficients", e.to_string()))?;

        let s = &self.sde;
        if s.epsilon.is_empty() {
            return Err(ConfigError::new("sde.epsilon", "needs at least one value"));
        }
        for &eps in &s.epsilon {
            positive("sde.epsilon", eps)?;
        }
        if s.n == 0 {
            return Err(ConfigError::new("sde.n", "must be at least 1"));
        }
        positive("sde.dt", s.dt)?;
        positive("sde.t_final", s.t_final)?;
        positive("sde.snapshot_spacing", s.snapshot_spacing)?;
        check_grid("sde.snapshot_spacing", s.t_final, s.snapshot_spacing)?;
        check_grid("sde.dt", s.snapshot_spacing, s.dt)?;
        if !s.x0.iter().all(|x| x.is_finite()) {
            return Err(ConfigError::new("sde.x0", "must be finite"));
        }
        if s.inner_substeps == Some(0) {
            return Err(ConfigError::new("sde.inner_substeps", "must be at least 1"));
        }
        for &eps in &s.epsilon {
            self.sde_config(eps, s.n).validate().map_err(|e| ConfigError::new("sde.inner_substeps", e.to_string()))?;
        }

        let t = &self.tables;
        if t.points_per_edge < 8 {
            return Err(ConfigError::new("tables.points_per_edge", "must be at least 8"));
        }
        positive("tables.delta_sing", t.delta_sing)?;
        positive("tables.delta_floor", t.delta_floor)?;
        positive("tables.h_max", t.h_max)?;

        let g = &self.graph;
        if g.n == 0 {
            return Err(ConfigError::new("graph.n", "must be at least 1"));
        }
        positive("graph.dt_h", g.dt_h)?;
        positive("graph.vertex_shell", g.vertex_shell)?;
        if g.vertex_shell <= t.delta_sing {
            return Err(ConfigError::new("graph.vertex_shell", "must exceed tables.delta_sing"));
        }

        let f = &self.fp;
        if f.cells_per_edge < 2 {
            return Err(ConfigError::new("fp.cells_per_edge", "must be at least 2"));
        }
        if f.cells_per_edge >> self.duality.coarse_levels < 2 {
            return Err(ConfigError::new("duality.coarse_levels", "halving leaves fewer than 2 cells per edge"));
        }
        positive("fp.h_max", f.h_max)?;
        if f.h_max > t.h_max {
            return Err(ConfigError::new("fp.h_max", "must not exceed tables.h_max"));
        }
        if let Some(dt) = f.dt {
            positive("fp.dt", dt)?;
        }
        if !(f.cfl_safety > 0.0 && f.cfl_safety <= 1.0) {
            return Err(ConfigError::new("fp.cfl_safety", "must lie in (0, 1]"));
        }

        positive("measures.w1_h_max", self.measures.w1_h_max)?;
        positive("measures.histogram_h_max", self.measures.histogram_h_max)?;

        let d = &self.duality;
        if d.family_size == 0 {
            return Err(ConfigError::new("duality.family_size", "must be at least 1"));
        }
        if d.scales.is_empty() || d.scales.iter().any(|&x| x == 0.0 || !x.is_finite()) {
            return Err(ConfigError::new("duality.scales", "needs finite non-zero values"));
        }
        positive("duality.h_max", d.h_max)?;
        positive("duality.h_cut", d.h_cut)?;
        if d.intervals_bounded == 0 || d.intervals_unbounded == 0 {
            return Err(ConfigError::new("duality.intervals_bounded", "interval counts must be at least 1"));
        }
        if !d.shift.is_finite() || d.shift < 0.0 {
            return Err(ConfigError::new("duality.shift", "must be finite and non-negative"));
        }

        let m = &self.simulate;
        positive("simulate.epsilon", m.epsilon)?;
        positive("simulate.t_final", m.t_final)?;
        positive("simulate.dt", m.dt)?;
        if !m.x0.iter().all(|x| x.is_finite()) {
            return Err(ConfigError::new("simulate.x0", "must be finite"));
        }
        if self.output.dir.is_empty() {
            return Err(ConfigError::new("output.dir", "must not be empty"));
        }
        Ok(())
    }

    pub fn potential(&self) -> Potential<f64> {
        Potential::new(self.potential.coefficients.clone()).expect("validated")
    }

    pub fn sde_config(&self, epsilon: f64, n: usize) -> SdeConfig<f64> {
        let s = &self.sde;
        let mut cfg = SdeConfig::new(epsilon, s.t_final, PhasePoint::new(s.x0[0], s.x0[1]), n, s.seed).with_dt(s.dt);
        if let Some(k) = s.inner_substeps {
            cfg.inner_substeps = k;
        }
        cfg
    }

    pub fn grid_spec(&self) -> GridSpec {
        let t = &self.tables;
        GridSpec { points_per_edge: t.points_per_edge, delta_sing: t.delta_sing, delta_floor: t.delta_floor, h_max: t.h_max }
    }

    pub fn fp_config(&self, cells: usize) -> FpConfig<f64> {
        let f = &self.fp;
        FpConfig { cells_per_edge: cells, h_max: f.h_max, dt: f.dt, cfl_safety: f.cfl_safety, scheme: f.scheme }
    }

    pub fn family_spec(&self) -> FamilySpec {
        let d = &self.duality;
        FamilySpec {
            size: d.family_size,
            h_max: d.h_max,
            h_cut: d.h_cut,
            intervals_bounded: d.intervals_bounded,
            intervals_unbounded: d.intervals_unbounded,
            scales: d.scales.clone(),
        }
    }

    /// Snapshot times `0, Δ, …, t_final`.
    pub fn snapshot_times(&self) -> Vec<f64> {
        let k = (self.sde.t_final / self.sde.snapshot_spacing).round() as usize;
        (0..=k).map(|i| i as f64 * self.sde.snapshot_spacing).collect()
    }

    pub fn apply_seed(&mut self, seed: u64) {
        self.sde.seed = seed;
        self.simulate.seed = seed;
        self.graph.seed = seed.wrapping_add(1);
    }
}

/// `total` must be an integer multiple of `step`.
fn check_grid(field: &str, total: f64, step: f64) -> Result<(), ConfigError> {
    let k = total / step;
    if (k - k.round()).abs() > 1e-9 * k.max(1.0) {
        return Err(ConfigError::new(field, format!("{total} is not a multiple of {step}")));
    }
    Ok(())
}
