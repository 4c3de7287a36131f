//! Run settings, merged from three layers in rising precedence:
//! built-in defaults, a TOML file, then command-line flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::DEFAULT_KEY_TOLERANCE;
use crate::error::{Error, Result};
use crate::parameter_monitor::CombineRule;

/// Twin settings for `simulate`: which calibration preset to start
/// from and which knobs to override.
#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct TwinConfig {
    /// "paper-like" (dimension-level shift) or "parameter-shift"
    /// (coefficient-level shift).
    pub preset: Option<String>,
    /// Trend-intercept offsets applied to status 2, one per
    /// coefficient, replacing the preset's offsets.
    pub offsets: Option<[f64; 6]>,
    pub sd_radius: Option<f64>,
    pub sd_height: Option<f64>,
    pub correlation: Option<f64>,
}

/// Everything a command needs beyond its input files.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub alpha: f64,
    pub seed: u64,
    pub bootstrap_iterations: usize,
    pub samples_per_group: usize,
    /// Monte Carlo repetitions per sweep point.
    pub repetitions: usize,
    pub vote_cap: usize,
    pub coverage: f64,
    /// Threshold-widening factor beyond which a coefficient is
    /// declared unthresholdable.
    pub widen_cap: f64,
    pub combine: CombineRule,
    /// Records generated per cell by `simulate`.
    pub n_per_cell: usize,
    /// Cell keys closer than this are the same cell.
    pub key_tolerance: f64,
    /// Scale the one-sample z statistic by s/sqrt(n) instead of s.
    pub standard_error_z: bool,
    pub reference: Option<PathBuf>,
    pub query: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub twin: TwinConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            alpha: 0.10,
            seed: 7,
            bootstrap_iterations: 40,
            samples_per_group: 3,
            repetitions: 200,
            vote_cap: 2,
            coverage: 0.95,
            widen_cap: 10.0,
            combine: CombineRule::Envelope,
            n_per_cell: 20,
            key_tolerance: DEFAULT_KEY_TOLERANCE,
            standard_error_z: false,
            reference: None,
            query: None,
            out: None,
            twin: TwinConfig::default(),
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub alpha: Option<f64>,
    pub reference: Option<PathBuf>,
    pub query: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    /// Defaults, then the file if given, then the flags.
    pub fn resolve(config_path: Option<&Path>, overrides: &Overrides) -> Result<RunConfig> {
        let mut cfg = match config_path {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = overrides.seed {
            cfg.seed = seed;
        }
        if let Some(alpha) = overrides.alpha {
            cfg.alpha = alpha;
        }
        if let Some(reference) = &overrides.reference {
            cfg.reference = Some(reference.clone());
        }
        if let Some(query) = &overrides.query {
            cfg.query = Some(query.clone());
        }
        if let Some(out) = &overrides.out {
            cfg.out = Some(out.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let open_unit = |name: &str, v: f64| -> Result<()> {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(Error::Config(format!(
                    "{name} must be inside (0, 1), got {v}"
                )))
            }
        };
        open_unit("alpha", self.alpha)?;
        open_unit("coverage", self.coverage)?;
        let count = |name: &str, v: usize| -> Result<()> {
            if v >= 1 {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be at least 1")))
            }
        };
        count("bootstrap_iterations", self.bootstrap_iterations)?;
        count("samples_per_group", self.samples_per_group)?;
        count("repetitions", self.repetitions)?;
        count("vote_cap", self.vote_cap)?;
        count("n_per_cell", self.n_per_cell)?;
        if !(self.widen_cap > 0.0) {
            return Err(Error::Config(format!(
                "widen_cap must be positive, got {}",
                self.widen_cap
            )));
        }
        if !(self.key_tolerance >= 0.0) {
            return Err(Error::Config(format!(
                "key_tolerance must be nonnegative, got {}",
                self.key_tolerance
            )));
        }
        if let Some(sd) = self.twin.sd_radius {
            if !(sd >= 0.0) {
                return Err(Error::Config(format!(
                    "twin.sd_radius must be nonnegative, got {sd}"
                )));
            }
        }
        if let Some(sd) = self.twin.sd_height {
            if !(sd >= 0.0) {
                return Err(Error::Config(format!(
                    "twin.sd_height must be nonnegative, got {sd}"
                )));
            }
        }
        if let Some(rho) = self.twin.correlation {
            if !(rho > -1.0 && rho < 1.0) {
                return Err(Error::Config(format!(
                    "twin.correlation must be inside (-1, 1), got {rho}"
                )));
            }
        }
        Ok(())
    }
}
