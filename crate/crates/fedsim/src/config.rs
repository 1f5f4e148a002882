//! Experiment configuration: a single strictly validated JSON document.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use fedsim_core::data::SyntheticSpec;
use fedsim_core::federation::{clients_per_round, PartitionScheme, StrategyParams, StrategyRegistry};
use fedsim_core::model::{Activation, OptimizerKind};
use serde::{Deserialize, Serialize};

/// Problem with a configuration file. `key` is the dotted path of the
/// offending field when one can be named.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {message}")]
    Read { path: PathBuf, message: String },
    #[error("invalid config: {0}")]
    Syntax(String),
    #[error("invalid config value for `{key}`: {message}")]
    Invalid { key: String, message: String },
}

impl ConfigError {
    fn invalid(key: impl Into<String>, message: impl fmt::Display) -> Self {
        ConfigError::Invalid { key: key.into(), message: message.to_string() }
    }

    /// Name of the offending key, if known.
    pub fn key(&self) -> Option<&str> {
        match self {
            ConfigError::Invalid { key, .. } => Some(key),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Centralized,
    Federated,
    Both,
}

impl Mode {
    pub fn runs_centralized(self) -> bool {
        matches!(self, Mode::Centralized | Mode::Both)
    }

    pub fn runs_federated(self) -> bool {
        matches!(self, Mode::Federated | Mode::Both)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum DatasetSource {
    Synthetic(SyntheticSpec),
    Csv(CsvSource),
}

impl Default for DatasetSource {
    fn default() -> Self {
        DatasetSource::Synthetic(SyntheticSpec::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSource {
    pub path: PathBuf,
    #[serde(default)]
    pub header: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StrategyConfig {
    /// Registry name: fedavg, fedmedian, fedprox or fedopt.
    pub rule: String,
    pub mu: f64,
    pub server_learning_rate: f64,
    pub beta: f64,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        let p = StrategyParams::default();
        Self { rule: "fedavg".into(), mu: p.mu, server_learning_rate: p.server_learning_rate, beta: p.beta }
    }
}

impl StrategyConfig {
    pub fn params(&self) -> StrategyParams {
        StrategyParams { mu: self.mu, server_learning_rate: self.server_learning_rate, beta: self.beta }
    }
}

mod defaults {
    use super::*;

    pub fn test_fraction() -> f64 {
        0.2
    }
    pub fn hidden_layers() -> Vec<usize> {
        vec![16]
    }
    pub fn learning_rate() -> f64 {
        0.05
    }
    pub fn batch_size() -> usize {
        32
    }
    pub fn epochs() -> usize {
        10
    }
    pub fn centralized_epochs() -> usize {
        25
    }
    pub fn rounds() -> usize {
        20
    }
    pub fn clients() -> usize {
        10
    }
    pub fn fraction_fit() -> f64 {
        1.0
    }
    pub fn min_fit_clients() -> usize {
        1
    }
    pub fn accept_failures() -> bool {
        true
    }
    pub fn partition() -> PartitionScheme {
        PartitionScheme::Iid
    }
}

/// Full experiment description. Only `mode` and `seed` are required.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    #[serde(default)]
    pub dataset: DatasetSource,
    #[serde(default = "defaults::test_fraction")]
    pub test_fraction: f64,
    /// Hidden layer widths; input and output sizes come from the data.
    #[serde(default = "defaults::hidden_layers")]
    pub hidden_layers: Vec<usize>,
    #[serde(default)]
    pub activation: Activation,
    #[serde(default)]
    pub optimizer: OptimizerKind,
    #[serde(default = "defaults::learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "defaults::batch_size")]
    pub batch_size: usize,
    /// Local epochs per federated round.
    #[serde(default = "defaults::epochs")]
    pub epochs: usize,
    #[serde(default = "defaults::centralized_epochs")]
    pub centralized_epochs: usize,
    #[serde(default = "defaults::rounds")]
    pub rounds: usize,
    #[serde(default = "defaults::clients")]
    pub clients: usize,
    #[serde(default = "defaults::fraction_fit")]
    pub fraction_fit: f64,
    #[serde(default = "defaults::min_fit_clients")]
    pub min_fit_clients: usize,
    #[serde(default = "defaults::accept_failures")]
    pub accept_failures: bool,
    #[serde(default)]
    pub failure_probability: f64,
    #[serde(default = "defaults::partition")]
    pub partition: PartitionScheme,
    #[serde(default)]
    pub strategy: StrategyConfig,
    /// Learning-rate factor for the second half of the clients; `null` disables it.
    #[serde(default)]
    pub dynamic_lr: Option<f64>,
    #[serde(default)]
    pub client_evaluation: bool,
    pub seed: u64,
}

impl ExperimentConfig {
    /// A config with every default applied.
    pub fn with_defaults(mode: Mode, seed: u64) -> Self {
        Self {
            mode,
            dataset: DatasetSource::default(),
            test_fraction: defaults::test_fraction(),
            hidden_layers: defaults::hidden_layers(),
            activation: Activation::default(),
            optimizer: OptimizerKind::default(),
            learning_rate: defaults::learning_rate(),
            batch_size: defaults::batch_size(),
            epochs: defaults::epochs(),
            centralized_epochs: defaults::centralized_epochs(),
            rounds: defaults::rounds(),
            clients: defaults::clients(),
            fraction_fit: defaults::fraction_fit(),
            min_fit_clients: defaults::min_fit_clients(),
            accept_failures: defaults::accept_failures(),
            failure_probability: 0.0,
            partition: defaults::partition(),
            strategy: StrategyConfig::default(),
            dynamic_lr: None,
            client_evaluation: false,
            seed,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let config: Self = serde_json::from_str(text).map_err(|e| ConfigError::Syntax(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Checks every range constraint that can be decided before the data is loaded.
    pub fn validate(&self) -> Result<(), ConfigError> {
        fn positive(key: &str, v: f64) -> Result<(), ConfigError> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(ConfigError::invalid(key, format!("must be positive, got {v}")))
            }
        }

        if let DatasetSource::Synthetic(spec) = &self.dataset {
            spec.validate().map_err(|e| ConfigError::invalid("dataset.synthetic", e))?;
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(ConfigError::invalid(
                "test_fraction",
                format!("must lie in (0, 1), got {}", self.test_fraction),
            ));
        }
        if let Some(i) = self.hidden_layers.iter().position(|&w| w == 0) {
            return Err(ConfigError::invalid("hidden_layers", format!("layer {i} has width 0")));
        }
        positive("learning_rate", self.learning_rate)?;
        if self.batch_size == 0 {
            return Err(ConfigError::invalid("batch_size", "must be at least 1"));
        }
        if self.epochs == 0 {
            return Err(ConfigError::invalid("epochs", "must be at least 1"));
        }
        if self.mode.runs_centralized() && self.centralized_epochs == 0 {
            return Err(ConfigError::invalid("centralized_epochs", "must be at least 1"));
        }
        if self.mode.runs_federated() && self.rounds == 0 {
            return Err(ConfigError::invalid("rounds", "must be at least 1"));
        }
        if self.clients == 0 {
            return Err(ConfigError::invalid("clients", "must be at least 1"));
        }
        if !(self.fraction_fit > 0.0 && self.fraction_fit <= 1.0) {
            return Err(ConfigError::invalid("fraction_fit", format!("must lie in (0, 1], got {}", self.fraction_fit)));
        }
        if self.min_fit_clients == 0 {
            return Err(ConfigError::invalid("min_fit_clients", "must be at least 1"));
        }
        clients_per_round(self.clients, self.fraction_fit, self.min_fit_clients)
            .map_err(|e| ConfigError::invalid("min_fit_clients", e))?;
        if !(0.0..1.0).contains(&self.failure_probability) {
            return Err(ConfigError::invalid(
                "failure_probability",
                format!("must lie in [0, 1), got {}", self.failure_probability),
            ));
        }
        if let PartitionScheme::Dirichlet { alpha } = self.partition {
            positive("partition.alpha", alpha)?;
        }

        let registry = StrategyRegistry::with_builtins();
        if !registry.contains(&self.strategy.rule) {
            let known: Vec<_> = registry.names().collect();
            return Err(ConfigError::invalid(
                "strategy.rule",
                format!("unknown rule `{}` (known: {})", self.strategy.rule, known.join(", ")),
            ));
        }
        if !(self.strategy.mu >= 0.0 && self.strategy.mu.is_finite()) {
            return Err(ConfigError::invalid("strategy.mu", format!("must be non-negative, got {}", self.strategy.mu)));
        }
        positive("strategy.server_learning_rate", self.strategy.server_learning_rate)?;
        if !(0.0..1.0).contains(&self.strategy.beta) {
            return Err(ConfigError::invalid(
                "strategy.beta",
                format!("must lie in [0, 1), got {}", self.strategy.beta),
            ));
        }
        if let Some(alpha) = self.dynamic_lr {
            if !(alpha >= 1.0 && alpha.is_finite()) {
                return Err(ConfigError::invalid("dynamic_lr", format!("factor must be at least 1, got {alpha}")));
            }
        }
        Ok(())
    }
}

/// Reads and validates a config file.
pub fn load_config(path: impl AsRef<Path>) -> Result<ExperimentConfig, ConfigError> {
    let path = path.as_ref();
    let text =
        fs::read_to_string(path).map_err(|e| ConfigError::Read { path: path.to_path_buf(), message: e.to_string() })?;
    ExperimentConfig::from_json(&text)
}
