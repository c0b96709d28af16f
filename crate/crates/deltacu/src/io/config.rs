//! Run configuration: one JSON file covering every workflow, with CLI
//! overrides applied before anything derives from it.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::epi::EpiParams;
use crate::eval::{default_schedule, EnsembleConfig, SchedulePoint};
use crate::grid::TimeGrid;
use crate::inference::{ModelKind, PmmhConfig, ThetaSpec, ThetaVector};
use crate::traj::TrajectoryModel;
use crate::{Error, Result};

/// Artifact schema version stamped into every output file.
pub const SCHEMA_VERSION: u32 = 1;

pub fn default_grid() -> TimeGrid {
    TimeGrid::new(1985.0, 2010.0, 0.5).expect("default grid is valid")
}

/// Midpoints of every epidemic-parameter prior range; the default parameter
/// set for forward simulation.
pub fn midrange_epi_params() -> EpiParams {
    let spec = ThetaSpec::for_model(ModelKind::Bm);
    let mut v: Vec<f64> = spec
        .coords
        .iter()
        .take(crate::inference::N_EPI_COORDS)
        .map(|c| match c.prior {
            crate::inference::Prior::Uniform { lo, hi } => 0.5 * (lo + hi),
            crate::inference::Prior::HalfNormal { shift, .. } => shift,
        })
        .collect();
    v.push(0.5);
    v.push(1.0);
    spec.epi_params(&ThetaVector(v))
}

/// Forward-simulation settings (`simulate` workflow).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSettings {
    /// True trajectory to simulate under; required by the workflow.
    pub model: Option<TrajectoryModel>,
    /// Epidemic parameters; prior mid-range when omitted.
    pub params: Option<EpiParams>,
    pub schedule: Vec<SchedulePoint>,
}

impl Default for SimulateSettings {
    fn default() -> Self {
        SimulateSettings { model: None, params: None, schedule: default_schedule() }
    }
}

/// Prior-implied change check settings (`prior-check` workflow).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorCheckSettings {
    pub draws: usize,
}

impl Default for PriorCheckSettings {
    fn default() -> Self {
        PriorCheckSettings { draws: 100_000 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub grid: TimeGrid,
    /// Observations CSV path (`fit` workflow input).
    pub observations: Option<PathBuf>,
    /// Trajectory prior to fit.
    pub model: ModelKind,
    /// Master seed; every random stream in the run derives from it.
    pub seed: u64,
    /// Post-burn-in thinning applied by summaries.
    pub thin: usize,
    pub inference: PmmhConfig,
    pub ensemble: EnsembleConfig,
    pub simulate: SimulateSettings,
    pub prior_check: PriorCheckSettings,
}

impl Default for FileConfig {
    fn default() -> Self {
        FileConfig {
            grid: default_grid(),
            observations: None,
            model: ModelKind::Bm,
            seed: 1,
            thin: 1,
            inference: PmmhConfig::default(),
            ensemble: EnsembleConfig::default(),
            simulate: SimulateSettings::default(),
            prior_check: PriorCheckSettings::default(),
        }
    }
}

/// CLI flag values that take precedence over the file contents.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub model: Option<ModelKind>,
    pub particles: Option<usize>,
    pub iterations: Option<usize>,
}

impl FileConfig {
    /// Apply CLI overrides and propagate the master seed into the nested
    /// sections so one value governs the whole run.
    pub fn resolve(&mut self, overrides: &Overrides) -> Result<()> {
        if let Some(seed) = overrides.seed {
            self.seed = seed;
        }
        if let Some(model) = overrides.model {
            self.model = model;
        }
        if let Some(particles) = overrides.particles {
            self.inference.particles = particles;
            self.ensemble.inference.particles = particles;
        }
        if let Some(iterations) = overrides.iterations {
            self.inference.iterations = iterations;
            self.ensemble.inference.iterations = iterations;
        }
        self.inference.seed = self.seed;
        self.ensemble.seed = self.seed;
        self.ensemble.inference.seed = self.seed;
        if self.thin == 0 {
            return Err(Error::Config("thin must be >= 1".into()));
        }
        self.inference.validate()?;
        Ok(())
    }
}

/// Parse a configuration from raw JSON bytes.
pub fn parse_config_bytes(bytes: &[u8]) -> Result<FileConfig> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| Error::Config(format!("config is not valid UTF-8: {e}")))?;
    serde_json::from_str(text).map_err(|e| Error::Config(format!("config parse error: {e}")))
}

pub fn load_config(path: &Path) -> Result<FileConfig> {
    let bytes = std::fs::read(path)
        .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
    parse_config_bytes(&bytes)
}

/// Short hex digest of the resolved configuration, stamped into artifacts.
pub fn config_hash(cfg: &FileConfig) -> String {
    let json = serde_json::to_string(cfg).expect("config serializes");
    let digest = Sha256::digest(json.as_bytes());
    let mut out = String::with_capacity(16);
    for byte in digest.iter().take(8) {
        out.push_str(&format!("{byte:02x}"));
    }
    out
}
