//! Sweep configuration: one TOML document drives a whole experiment.

use llcbench_core::estimator::EstimatorConfig;
use llcbench_core::samplers::{
    AdamHypers, CommonHypers, RmsPropHypers, SamplerConfig, SamplerKind, SghmcHypers, SgnhtHypers,
    UpdateVariants,
};
use llcbench_core::taskgen::{builtin_class, DataParams};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, clap::ValueEnum,
)]
#[serde(rename_all = "snake_case")]
pub enum AlgorithmId {
    Sgld,
    AdamSgld,
    RmspropSgld,
    Sghmc,
    Sgnht,
}

impl AlgorithmId {
    pub const ALL: [AlgorithmId; 5] = [
        AlgorithmId::Sgld,
        AlgorithmId::AdamSgld,
        AlgorithmId::RmspropSgld,
        AlgorithmId::Sghmc,
        AlgorithmId::Sgnht,
    ];

    /// Stable identifier used in files and seed derivation.
    pub fn key(self) -> &'static str {
        match self {
            AlgorithmId::Sgld => "sgld",
            AlgorithmId::AdamSgld => "adam_sgld",
            AlgorithmId::RmspropSgld => "rmsprop_sgld",
            AlgorithmId::Sghmc => "sghmc",
            AlgorithmId::Sgnht => "sgnht",
        }
    }

    /// Conventional display name.
    pub fn display_name(self) -> &'static str {
        match self {
            AlgorithmId::Sgld => "SGLD",
            AlgorithmId::AdamSgld => "AdamSGLD",
            AlgorithmId::RmspropSgld => "RMSPropSGLD",
            AlgorithmId::Sghmc => "SGHMC",
            AlgorithmId::Sgnht => "SGNHT",
        }
    }
}

impl fmt::Display for AlgorithmId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.display_name())
    }
}

/// Step-size grid: either explicit values or a log-spaced range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridSpec {
    Values { values: Vec<f64> },
    LogSpace { min: f64, max: f64, points: usize },
}

impl GridSpec {
    /// Ascending step sizes.
    pub fn build(&self) -> Result<Vec<f64>, ConfigError> {
        let grid = match self {
            GridSpec::Values { values } => values.clone(),
            GridSpec::LogSpace { min, max, points } => {
                if *points < 1 || !(min > &0.0) || max < min {
                    return Err(ConfigError::Invalid(format!(
                        "bad grid range [{min}, {max}] with {points} points"
                    )));
                }
                if *points == 1 {
                    vec![*min]
                } else {
                    let step = (max / min).ln() / (*points as f64 - 1.0);
                    (0..*points).map(|k| min * (k as f64 * step).exp()).collect()
                }
            }
        };
        if grid.is_empty() {
            return Err(ConfigError::Invalid("step size grid is empty".into()));
        }
        if grid.iter().any(|e| !(e > &0.0) || !e.is_finite()) {
            return Err(ConfigError::Invalid("step sizes must be positive".into()));
        }
        if grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ConfigError::Invalid(
                "step sizes must be strictly increasing".into(),
            ));
        }
        Ok(grid)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetSettings {
    pub n: usize,
    pub batch_size: usize,
    pub noise_variance: f64,
    pub input_low: f64,
    pub input_high: f64,
}

impl DatasetSettings {
    pub fn data_params(&self) -> DataParams {
        DataParams {
            n: self.n,
            noise_variance: self.noise_variance,
            input_low: self.input_low,
            input_high: self.input_high,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerSettings {
    /// Chain length T.
    pub steps: usize,
    /// Localization gamma.
    pub gamma: f64,
    #[serde(default)]
    pub position_uses_new_momentum: bool,
    #[serde(default)]
    pub thermostat_squared_norm: bool,
    pub adam: AdamHypers,
    pub rmsprop: RmsPropHypers,
    pub sghmc: SghmcHypers,
    pub sgnht: SgnhtHypers,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSettings {
    pub beta0: f64,
    /// Burn-in as a fraction of T: B = floor(fraction * T).
    pub burn_in_fraction: f64,
    pub chains: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub model_class: String,
    pub num_problems: usize,
    pub algorithms: Vec<AlgorithmId>,
    pub master_seed: u64,
    /// 0 means one worker per available core.
    #[serde(default)]
    pub worker_count: usize,
    pub grid: GridSpec,
    pub dataset: DatasetSettings,
    pub sampler: SamplerSettings,
    pub estimator: EstimatorSettings,
}

impl SweepConfig {
    /// The desk-scale default protocol: thirty 1K problems, n = 1e4 samples,
    /// batches of 100, T = 2000 steps, eight step sizes spanning 1e-6..1e-2.
    pub fn desk_1k(master_seed: u64) -> Self {
        SweepConfig {
            model_class: "1K".into(),
            num_problems: 30,
            algorithms: AlgorithmId::ALL.to_vec(),
            master_seed,
            worker_count: 0,
            grid: GridSpec::LogSpace {
                min: 1e-6,
                max: 1e-2,
                points: 8,
            },
            dataset: DatasetSettings {
                n: 10_000,
                batch_size: 100,
                noise_variance: 0.02,
                input_low: -10.0,
                input_high: 10.0,
            },
            sampler: SamplerSettings {
                steps: 2000,
                gamma: 1.0,
                position_uses_new_momentum: false,
                thermostat_squared_norm: false,
                adam: AdamHypers {
                    stability: 1e-8,
                    decay1: 0.9,
                    decay2: 0.999,
                },
                rmsprop: RmsPropHypers {
                    stability: 1e-8,
                    decay: 0.999,
                },
                sghmc: SghmcHypers { friction: 0.1 },
                sgnht: SgnhtHypers {
                    initial_friction: 0.1,
                },
            },
            estimator: EstimatorSettings {
                beta0: 1.0,
                burn_in_fraction: 0.9,
                chains: 1,
            },
        }
    }

    /// The published protocol: n = 1e6, batches of 500, T = 5e4, gamma = 1,
    /// one hundred problems of the given class.
    pub fn paper_scale(class: &str, master_seed: u64) -> Self {
        let mut cfg = Self::desk_1k(master_seed);
        cfg.model_class = class.into();
        cfg.num_problems = 100;
        cfg.dataset = DatasetSettings {
            n: 1_000_000,
            batch_size: 500,
            noise_variance: 0.25,
            input_low: -10.0,
            input_high: 10.0,
        };
        cfg.sampler.steps = 50_000;
        cfg
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: SweepConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if builtin_class(&self.model_class).is_none() {
            return Err(ConfigError::Invalid(format!(
                "unknown model class {:?}",
                self.model_class
            )));
        }
        if self.num_problems == 0 {
            return Err(ConfigError::Invalid("num_problems must be >= 1".into()));
        }
        if self.algorithms.is_empty() {
            return Err(ConfigError::Invalid("algorithms list is empty".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for a in &self.algorithms {
            if !seen.insert(*a) {
                return Err(ConfigError::Invalid(format!("duplicate algorithm {a}")));
            }
        }
        self.grid.build()?;
        if self.dataset.n < 3 {
            return Err(ConfigError::Invalid("dataset n must be >= 3".into()));
        }
        if self.dataset.batch_size == 0 || self.dataset.batch_size > self.dataset.n {
            return Err(ConfigError::Invalid(format!(
                "batch size {} must be in 1..=n ({})",
                self.dataset.batch_size, self.dataset.n
            )));
        }
        if !(self.dataset.input_low < self.dataset.input_high) {
            return Err(ConfigError::Invalid("input bounds are not an interval".into()));
        }
        if !(self.dataset.noise_variance >= 0.0) {
            return Err(ConfigError::Invalid("noise variance must be >= 0".into()));
        }
        if self.sampler.steps == 0 {
            return Err(ConfigError::Invalid("sampler steps must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.estimator.burn_in_fraction) {
            return Err(ConfigError::Invalid(
                "burn_in_fraction must lie in [0, 1)".into(),
            ));
        }
        if !(self.estimator.beta0 > 0.0) {
            return Err(ConfigError::Invalid("beta0 must be positive".into()));
        }
        if self.estimator.chains == 0 {
            return Err(ConfigError::Invalid("chains must be >= 1".into()));
        }
        if !(self.sampler.gamma >= 0.0) {
            return Err(ConfigError::Invalid("gamma must be >= 0".into()));
        }
        Ok(())
    }

    pub fn burn_in(&self) -> usize {
        (self.estimator.burn_in_fraction * self.sampler.steps as f64).floor() as usize
    }

    pub fn estimator_config(&self) -> EstimatorConfig {
        EstimatorConfig {
            n: self.dataset.n,
            beta0: self.estimator.beta0,
            burn_in: self.burn_in(),
            chains: self.estimator.chains,
        }
    }

    /// Posterior temperature `n * beta` fed to the samplers.
    pub fn beta_tilde(&self) -> f64 {
        self.estimator_config()
            .beta_tilde()
            .expect("validated config has n >= 3 and beta0 > 0")
    }

    pub fn sampler_config(&self, algorithm: AlgorithmId, epsilon: f64) -> SamplerConfig {
        let kind = match algorithm {
            AlgorithmId::Sgld => SamplerKind::Sgld,
            AlgorithmId::AdamSgld => SamplerKind::AdamSgld(self.sampler.adam),
            AlgorithmId::RmspropSgld => SamplerKind::RmsPropSgld(self.sampler.rmsprop),
            AlgorithmId::Sghmc => SamplerKind::Sghmc(self.sampler.sghmc),
            AlgorithmId::Sgnht => SamplerKind::Sgnht(self.sampler.sgnht),
        };
        SamplerConfig {
            common: CommonHypers {
                epsilon,
                gamma: self.sampler.gamma,
                beta_tilde: self.beta_tilde(),
                batch_size: self.dataset.batch_size,
                steps: self.sampler.steps,
            },
            kind,
            variants: UpdateVariants {
                position_uses_new_momentum: self.sampler.position_uses_new_momentum,
                thermostat_squared_norm: self.sampler.thermostat_squared_norm,
            },
        }
    }
}
