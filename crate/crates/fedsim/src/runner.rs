//! Runs the configured experiments and writes the output directory.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use fedsim_core::data::{generate_synthetic, load_csv, split_train_test, Dataset};
use fedsim_core::federation::{
    run_centralized, run_federated, CentralizedExperiment, FederatedExperiment, FederationConfig, RunOutput,
    StrategyRegistry,
};
use fedsim_core::model::{MlpArchitecture, TrainConfig};

use crate::config::{ConfigError, DatasetSource, ExperimentConfig};
use crate::report::{
    clients_csv, confusion_csv, metrics_csv, roc_csv, round_seconds, summary_table, DatasetSummary, ExperimentReport,
    SummaryRow, Timing,
};
use crate::svg::emit_svg;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] fedsim_core::Error),
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: io::Error },
}

impl RunError {
    /// Process exit status: 1 for configuration problems, 2 otherwise.
    pub fn exit_code(&self) -> u8 {
        match self {
            RunError::Config(_) => 1,
            _ => 2,
        }
    }
}

/// Everything computed by a run, before anything is written.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub report: ExperimentReport,
    pub centralized: Option<RunOutput>,
    pub federated: Option<RunOutput>,
}

pub fn load_dataset(config: &ExperimentConfig) -> Result<Dataset, RunError> {
    Ok(match &config.dataset {
        DatasetSource::Synthetic(spec) => generate_synthetic(spec, config.seed)?,
        DatasetSource::Csv(src) => load_csv(&src.path, src.header)?,
    })
}

fn architecture(config: &ExperimentConfig, data: &Dataset) -> Result<MlpArchitecture, RunError> {
    let mut sizes = Vec::with_capacity(config.hidden_layers.len() + 2);
    sizes.push(data.dims());
    sizes.extend_from_slice(&config.hidden_layers);
    sizes.push(data.class_count());
    Ok(MlpArchitecture::new(sizes, config.activation)?)
}

/// Runs the experiments `config` asks for without touching the filesystem
/// (beyond reading a CSV dataset).
pub fn execute(config: &ExperimentConfig) -> Result<RunResult, RunError> {
    config.validate()?;
    let data = load_dataset(config)?;
    let (train, test) = split_train_test(&data, config.test_fraction, config.seed)?;
    let arch = architecture(config, &data)?;
    let local = TrainConfig {
        epochs: config.epochs,
        batch_size: config.batch_size,
        optimizer: config.optimizer,
        learning_rate: config.learning_rate,
        proximal_mu: 0.0,
    };

    let centralized = if config.mode.runs_centralized() {
        Some(run_centralized(&CentralizedExperiment {
            arch: arch.clone(),
            train: &train,
            test: &test,
            config: TrainConfig { epochs: config.centralized_epochs, ..local.clone() },
            seed: config.seed,
        })?)
    } else {
        None
    };

    let federated = if config.mode.runs_federated() {
        let strategy = StrategyRegistry::with_builtins().create(&config.strategy.rule, &config.strategy.params())?;
        Some(run_federated(&FederatedExperiment {
            arch: arch.clone(),
            train: &train,
            test: &test,
            partition: config.partition,
            clients: config.clients,
            rounds: config.rounds,
            strategy: strategy.as_ref(),
            local: local.clone(),
            federation: FederationConfig {
                fraction_fit: config.fraction_fit,
                min_fit_clients: config.min_fit_clients,
                accept_failures: config.accept_failures,
                failure_probability: config.failure_probability,
            },
            dynamic_lr: config.dynamic_lr,
            client_evaluation: config.client_evaluation,
            seed: config.seed,
        })?)
    } else {
        None
    };

    let summary_row = |approach: &str, out: &RunOutput| SummaryRow {
        approach: approach.into(),
        train_loss: out.report.final_train_loss,
        train_accuracy: out.report.final_train_accuracy,
        test_loss: out.report.evaluation.loss,
        test_accuracy: out.report.evaluation.accuracy,
    };
    let summary = match (&centralized, &federated) {
        (Some(c), Some(f)) => Some(vec![summary_row("centralized", c), summary_row("federated", f)]),
        _ => None,
    };
    let timing = Timing {
        centralized_seconds: centralized.as_ref().map(|o| round_seconds(o.wall_time.as_secs_f64())),
        federated_seconds: federated.as_ref().map(|o| round_seconds(o.wall_time.as_secs_f64())),
    };
    let report = ExperimentReport {
        config: config.clone(),
        dataset: DatasetSummary {
            train_samples: train.len(),
            test_samples: test.len(),
            features: data.dims(),
            classes: data.class_count(),
        },
        centralized: centralized.as_ref().map(|o| o.report.clone()),
        federated: federated.as_ref().map(|o| o.report.clone()),
        summary,
        timing,
    };
    Ok(RunResult { report, centralized, federated })
}

fn write(path: PathBuf, contents: &str) -> Result<(), RunError> {
    fs::write(&path, contents).map_err(|source| RunError::Write { path, source })
}

fn write_run(dir: &Path, out: &RunOutput, plot: bool) -> Result<(), RunError> {
    fs::create_dir_all(dir).map_err(|source| RunError::Write { path: dir.to_path_buf(), source })?;
    let report = &out.report;
    write(dir.join("metrics.csv"), &metrics_csv(&report.history))?;
    write(dir.join("confusion.csv"), &confusion_csv(&report.evaluation.confusion))?;
    for curve in report.evaluation.roc.curves() {
        write(dir.join(format!("roc_{}.csv", curve.kind)), &roc_csv(curve))?;
    }
    if !report.rounds.is_empty() {
        write(dir.join("clients.csv"), &clients_csv(&report.rounds))?;
    }
    if plot {
        let curves: Vec<_> = report.evaluation.roc.curves().cloned().collect();
        write(dir.join("roc.svg"), &emit_svg(&curves))?;
    }
    Ok(())
}

/// Writes report.json, per-approach CSVs (and roc.svg with `plot`) and, when
/// both approaches ran, summary.txt.
pub fn write_outputs(result: &RunResult, out_dir: &Path, plot: bool) -> Result<(), RunError> {
    fs::create_dir_all(out_dir).map_err(|source| RunError::Write { path: out_dir.to_path_buf(), source })?;
    write(out_dir.join("report.json"), &result.report.to_json())?;
    if let Some(out) = &result.centralized {
        write_run(&out_dir.join("centralized"), out, plot)?;
    }
    if let Some(out) = &result.federated {
        write_run(&out_dir.join("federated"), out, plot)?;
    }
    if let Some(rows) = &result.report.summary {
        write(out_dir.join("summary.txt"), &summary_table(rows, &result.report.timing))?;
    }
    Ok(())
}

/// Runs `config` and writes every output file under `out_dir`.
pub fn run(config: &ExperimentConfig, out_dir: &Path, plot: bool) -> Result<RunResult, RunError> {
    let result = execute(config)?;
    write_outputs(&result, out_dir, plot)?;
    Ok(result)
}
