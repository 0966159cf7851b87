//! Run configuration file.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use hemi_core::flow::FlowParams;
use hemi_core::geometry::FieldSpec;
use hemi_core::quadrature::DEFAULT_TOL;
use hemi_core::reduced::ModelParams;
use serde::{Deserialize, Serialize};

/// Missing or invalid configuration; maps to exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

pub const DEFAULT_SEED: u64 = 20240601;

/// Contents of the `--config` JSON file. Every key except `field` has a default.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Sphere dimension; taken from `field.dimension` when omitted.
    pub dimension: Option<usize>,
    pub field: Option<FieldSpec>,
    pub quadrature_tol: f64,
    /// Newton seeds per angular direction of the critical-point search.
    pub seeds_per_dim: usize,
    /// Largest `q + 2p` enumerated by the census.
    pub mass_max: usize,
    pub model: ModelParams,
    pub flow: FlowParams,
    /// Initial states per region of the `flow` verification suite.
    pub verify_flow_states: usize,
    pub rng_seed: u64,
    /// Directory receiving the artifacts; stdout when absent.
    pub output_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dimension: None,
            field: None,
            quadrature_tol: DEFAULT_TOL,
            seeds_per_dim: 8,
            mass_max: 4,
            model: ModelParams::default(),
            flow: FlowParams::default(),
            verify_flow_states: 50,
            rng_seed: DEFAULT_SEED,
            output_dir: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        let cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if let (Some(d), Some(f)) = (self.dimension, &self.field) {
            if d != f.dimension {
                return Err(ConfigError(format!(
                    "dimension {d} differs from field.dimension {}",
                    f.dimension
                )));
            }
        }
        if self.dimension() < 5 {
            return Err(ConfigError(format!("dimension {} < 5", self.dimension())));
        }
        if self.quadrature_tol.is_nan() || self.quadrature_tol <= 0.0 {
            return Err(ConfigError("quadrature_tol must be positive".into()));
        }
        let f = &self.flow;
        let tolerances = [f.step_tol, f.j_tol, f.stagnation, f.dt_initial, f.dt_max, f.eta];
        if tolerances.iter().any(|t| t.is_nan() || *t <= 0.0) {
            return Err(ConfigError("flow tolerances and step sizes must be positive".into()));
        }
        if self.mass_max == 0 {
            return Err(ConfigError("mass_max must be at least 1".into()));
        }
        Ok(())
    }

    pub fn dimension(&self) -> usize {
        self.dimension.or(self.field.as_ref().map(|f| f.dimension)).unwrap_or(5)
    }

    pub fn field(&self) -> Result<&FieldSpec, ConfigError> {
        self.field
            .as_ref()
            .ok_or_else(|| ConfigError("this command needs a config file with a `field` entry".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_takes_defaults() {
        let cfg: RunConfig = serde_json::from_str(r#"{"field": {"dimension": 6, "kappa0": 1.0}}"#).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.dimension(), 6);
        assert_eq!(cfg.rng_seed, DEFAULT_SEED);
        assert_eq!(cfg.flow, FlowParams::default());
    }

    #[test]
    fn partial_flow_params_merge_with_defaults() {
        let cfg: RunConfig = serde_json::from_str(r#"{"flow": {"eta": 0.05}}"#).unwrap();
        assert_eq!(cfg.flow.eta, 0.05);
        assert_eq!(cfg.flow.m0, FlowParams::default().m0);
    }

    #[test]
    fn rejects_bad_values() {
        let low: RunConfig = serde_json::from_str(r#"{"dimension": 4}"#).unwrap();
        assert!(low.validate().is_err());
        let tol: RunConfig = serde_json::from_str(r#"{"quadrature_tol": 0.0}"#).unwrap();
        assert!(tol.validate().is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"unknown": 1}"#).is_err());
    }
}
