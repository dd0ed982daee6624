//! Run configuration, loaded from JSON. Every simulation, oracle, and
//! comparison entry point consumes the same file; command line flags
//! override individual fields.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ansatz::AnsatzKind;
use crate::engine::RegularizationConfig;
use crate::error::{Error, Result};
use crate::integrator::SolverScheme;
use crate::model::{ModelSpec, SseMode};
use crate::sampler::SamplerConfig;

fn default_bootstrap_scale() -> f64 {
    1e-3
}

fn default_dt() -> f64 {
    1e-3
}

fn default_record_stride() -> usize {
    10
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Complete description of one trajectory-ensemble run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSpec,
    pub ansatz: AnsatzKind,
    /// Scale of the random perturbation applied to RBM weights at
    /// initialization (the exact paramagnetic point is a stationary point
    /// of the equations of motion). Ignored by the Jastrow ansatz.
    #[serde(default = "default_bootstrap_scale")]
    pub bootstrap_scale: f64,
    #[serde(default)]
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub regularization: RegularizationConfig,
    #[serde(default)]
    pub scheme: SolverScheme,
    /// Time step in units of 1/J.
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Evolution horizon in units of 1/J. Zero records the initial state
    /// only.
    pub total_time: f64,
    /// Observables are recorded every this many steps (plus the final one).
    #[serde(default = "default_record_stride")]
    pub record_stride: usize,
    pub n_trajectories: usize,
    #[serde(default)]
    pub mode: SseMode,
    pub master_seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: RunConfig = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.ansatz.validate(self.model.n_sites)?;
        if !(self.bootstrap_scale >= 0.0 && self.bootstrap_scale.is_finite()) {
            return Err(Error::Config("bootstrap_scale must be finite and >= 0".into()));
        }
        self.sampler.validate()?;
        self.regularization.validate()?;
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.total_time >= 0.0 && self.total_time.is_finite()) {
            return Err(Error::Config(format!(
                "total_time must be finite and >= 0, got {}",
                self.total_time
            )));
        }
        if self.record_stride == 0 {
            return Err(Error::Config("record_stride must be >= 1".into()));
        }
        if self.n_trajectories == 0 {
            return Err(Error::Config("n_trajectories must be >= 1".into()));
        }
        Ok(())
    }

    /// Number of integration steps covering `total_time` at `dt`.
    pub fn n_steps(&self) -> usize {
        (self.total_time / self.dt).round() as usize
    }

    /// The recording grid: every `record_stride`-th step plus the last.
    pub fn record_times(&self) -> Vec<f64> {
        let n = self.n_steps();
        (0..=n)
            .filter(|&i| i % self.record_stride == 0 || i == n)
            .map(|i| i as f64 * self.dt)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_json() -> String {
        r#"{
            "model": {"n_sites": 4, "alpha": 1.0, "j": 1.0, "h": 0.0, "kappa": 0.5},
            "ansatz": {"kind": "lj", "sharing_distance": 3},
            "total_time": 1.0,
            "n_trajectories": 8,
            "master_seed": 42
        }"#
        .to_string()
    }

    #[test]
    fn defaults_fill_optional_fields() {
        let config = RunConfig::from_json(&minimal_json()).unwrap();
        assert_eq!(config.dt, 1e-3);
        assert_eq!(config.record_stride, 10);
        assert_eq!(config.mode, SseMode::Nonlinear);
        assert_eq!(config.scheme, SolverScheme::Midpoint);
        assert_eq!(config.sampler, SamplerConfig::default());
        assert_eq!(config.bootstrap_scale, 1e-3);
        assert_eq!(config.output_dir, PathBuf::from("out"));
        assert_eq!(config.n_steps(), 1000);
    }

    #[test]
    fn record_grid_includes_endpoints() {
        let mut config = RunConfig::from_json(&minimal_json()).unwrap();
        config.total_time = 0.025;
        config.dt = 1e-3;
        config.record_stride = 10;
        let times = config.record_times();
        assert_eq!(times.len(), 4);
        assert_eq!(times[0], 0.0);
        assert!((times[3] - 0.025).abs() < 1e-12);

        config.total_time = 0.0;
        assert_eq!(config.record_times(), vec![0.0]);
    }

    #[test]
    fn validation_rejects_inconsistent_fields() {
        let mut config = RunConfig::from_json(&minimal_json()).unwrap();
        config.n_trajectories = 0;
        assert!(config.validate().is_err());

        let mut config = RunConfig::from_json(&minimal_json()).unwrap();
        config.dt = 0.0;
        assert!(config.validate().is_err());

        let mut config = RunConfig::from_json(&minimal_json()).unwrap();
        config.record_stride = 0;
        assert!(config.validate().is_err());

        let mut config = RunConfig::from_json(&minimal_json()).unwrap();
        config.ansatz = AnsatzKind::Lj { sharing_distance: 9 };
        assert!(config.validate().is_err());

        let bad = minimal_json().replace("\"total_time\": 1.0", "\"total_time\": -2.0");
        assert!(RunConfig::from_json(&bad).is_err());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let with_extra = minimal_json().replace(
            "\"master_seed\": 42",
            "\"master_seed\": 42, \"typo_field\": 1",
        );
        assert!(RunConfig::from_json(&with_extra).is_err());
    }

    #[test]
    fn round_trips_through_json() {
        let config = RunConfig::from_json(&minimal_json()).unwrap();
        let text = serde_json::to_string_pretty(&config).unwrap();
        let back = RunConfig::from_json(&text).unwrap();
        assert_eq!(serde_json::to_string(&back).unwrap(), serde_json::to_string(&config).unwrap());
    }
}
