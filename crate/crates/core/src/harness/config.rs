use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::environments::EnvironmentConfig;
use crate::error::{Error, Result};
use crate::kernel_rf::KernelSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    OsGptd,
    OsEgptd,
    BatchOracle,
}

impl EstimatorKind {
    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::OsGptd => "os_gptd",
            EstimatorKind::OsEgptd => "os_egptd",
            EstimatorKind::BatchOracle => "batch_oracle",
        }
    }
}

impl std::fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegretConfig {
    pub horizons: Vec<usize>,
    /// Falls back to the experiment's trajectory count.
    pub num_trajectories: Option<usize>,
}

impl Default for RegretConfig {
    fn default() -> Self {
        RegretConfig {
            horizons: (1..=10).map(|k| 100 * k).collect(),
            num_trajectories: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub methods: Vec<EstimatorKind>,
    pub horizon: usize,
    /// The exact oracle refits from scratch every slot, so it gets a
    /// shorter run.
    pub oracle_horizon: usize,
    pub num_trajectories: usize,
    /// Slots per timing window.
    pub window: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            methods: vec![
                EstimatorKind::OsGptd,
                EstimatorKind::OsEgptd,
                EstimatorKind::BatchOracle,
            ],
            horizon: 1000,
            oracle_horizon: 200,
            num_trajectories: 5,
            window: 100,
        }
    }
}

/// One environment, one estimator, and everything needed to run it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub environment: EnvironmentConfig,
    pub estimator: EstimatorKind,
    /// Single-kernel estimators use the first entry.
    pub kernels: Vec<KernelSpec>,
    pub num_features: usize,
    pub noise_var: f64,
    pub num_trajectories: usize,
    pub horizon: usize,
    pub master_seed: u64,
    pub output_dir: PathBuf,
    pub workers: usize,
    /// Transition cap for the exact O(t³) oracle.
    pub oracle_max_slots: usize,
    pub regret: RegretConfig,
    pub bench: BenchConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            environment: EnvironmentConfig::RandomWalk(Default::default()),
            estimator: EstimatorKind::OsGptd,
            kernels: [0.1, 1.0, 10.0]
                .iter()
                .map(|&l| KernelSpec::gaussian(l).expect("positive lengthscale"))
                .collect(),
            num_features: 100,
            noise_var: 0.01,
            num_trajectories: 100,
            horizon: 1000,
            master_seed: 0,
            output_dir: PathBuf::from("results"),
            workers: 1,
            oracle_max_slots: 2000,
            regret: RegretConfig::default(),
            bench: BenchConfig::default(),
        }
    }
}

fn config_error(e: impl std::fmt::Display) -> Error {
    Error::Config(e.to_string())
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(config_error)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
            .map_err(|e| Error::Config(format!("{}: {}", path.display(), strip_prefix(&e))))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(config_error)
    }

    pub fn discount(&self) -> f64 {
        self.environment.discount()
    }

    /// Kernel of the single-kernel estimators.
    pub fn primary_kernel(&self) -> KernelSpec {
        self.kernels[0]
    }

    /// Every validation failure is reported as a config error.
    pub fn validate(&self) -> Result<()> {
        self.validate_inner()
            .map_err(|e| Error::Config(strip_prefix(&e)))
    }

    fn validate_inner(&self) -> Result<()> {
        self.environment.validate()?;
        if self.kernels.is_empty() {
            return Err(Error::invalid("kernel dictionary is empty"));
        }
        for k in &self.kernels {
            k.validate()?;
        }
        let positive = [
            ("num_features", self.num_features),
            ("num_trajectories", self.num_trajectories),
            ("horizon", self.horizon),
            ("workers", self.workers),
            ("bench.horizon", self.bench.horizon),
            ("bench.oracle_horizon", self.bench.oracle_horizon),
            ("bench.num_trajectories", self.bench.num_trajectories),
            ("bench.window", self.bench.window),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::invalid(format!("{name} must be >= 1")));
            }
        }
        if !(self.noise_var > 0.0 && self.noise_var.is_finite()) {
            return Err(Error::invalid(format!(
                "noise_var must be positive, got {}",
                self.noise_var
            )));
        }
        check_horizons(&self.regret.horizons)?;
        if self.regret.num_trajectories == Some(0) {
            return Err(Error::invalid("regret.num_trajectories must be >= 1"));
        }
        if self.bench.methods.is_empty() {
            return Err(Error::invalid("bench.methods is empty"));
        }
        Ok(())
    }
}

pub(crate) fn check_horizons(horizons: &[usize]) -> Result<()> {
    if horizons.is_empty() || horizons[0] == 0 {
        return Err(Error::invalid(
            "regret horizons must be a non-empty list of positive integers",
        ));
    }
    if horizons.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid(format!(
            "regret horizons must be strictly ascending, got {horizons:?}"
        )));
    }
    Ok(())
}

fn strip_prefix(e: &Error) -> String {
    match e {
        Error::Config(m) | Error::InvalidArgument(m) => m.clone(),
        other => other.to_string(),
    }
}
