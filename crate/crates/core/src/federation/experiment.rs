//! Whole experiments: the federated loop and the centralized baseline.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::aggregate::ServerState;
use super::protocol::{assign_learning_rates, run_round, Client, FederationConfig, RoundContext, RoundReport};
use super::strategy::AggregationStrategy;
use crate::data::{partition_dirichlet, partition_iid, Dataset, Partition};
use crate::metrics::{confusion_matrix, roc_set, ConfusionMatrix, RocSet};
use crate::model::{
    evaluate, init_params, train_local_with, MlpArchitecture, ParameterVector, ShuffleSchedule, TrainConfig,
};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum PartitionScheme {
    Iid,
    Dirichlet { alpha: f64 },
}

impl PartitionScheme {
    pub fn apply(&self, data: &Dataset, clients: usize, seed: u64) -> Result<Partition> {
        match *self {
            PartitionScheme::Iid => partition_iid(data, clients, seed),
            PartitionScheme::Dirichlet { alpha } => partition_dirichlet(data, clients, alpha, seed),
        }
    }
}

/// Final evaluation of a model on the held-out test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub loss: f64,
    pub accuracy: f64,
    pub confusion: ConfusionMatrix,
    pub roc: RocSet,
}

pub fn evaluate_model(arch: &MlpArchitecture, params: &[f64], test: &Dataset) -> Result<Evaluation> {
    let (loss, accuracy, probs) = evaluate(arch, params, test)?;
    Ok(Evaluation {
        loss,
        accuracy,
        confusion: confusion_matrix(&probs, test.labels())?,
        roc: roc_set(&probs, test.labels())?,
    })
}

/// One row of a training curve: a federated round or a centralized epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub index: usize,
    pub train_loss: Option<f64>,
    pub train_accuracy: Option<f64>,
    pub test_loss: f64,
    pub test_accuracy: f64,
}

/// Deterministic part of a run's results. Wall time lives in [`RunOutput`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub history: Vec<HistoryRow>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rounds: Vec<RoundReport>,
    /// Training loss/accuracy of the final epoch (centralized) or of client
    /// 0's last participation (federated).
    pub final_train_loss: Option<f64>,
    pub final_train_accuracy: Option<f64>,
    pub evaluation: Evaluation,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: RunReport,
    pub params: ParameterVector,
    pub wall_time: Duration,
}

#[derive(Debug)]
pub struct FederatedExperiment<'a> {
    pub arch: MlpArchitecture,
    pub train: &'a Dataset,
    pub test: &'a Dataset,
    pub partition: PartitionScheme,
    pub clients: usize,
    pub rounds: usize,
    pub strategy: &'a dyn AggregationStrategy,
    /// Local schedule; `learning_rate` is the base rate.
    pub local: TrainConfig,
    pub federation: FederationConfig,
    /// Factor for the second half of clients; `None` keeps one rate.
    pub dynamic_lr: Option<f64>,
    /// Also evaluate the global model on per-client test shards.
    pub client_evaluation: bool,
    pub seed: u64,
}

impl FederatedExperiment<'_> {
    pub fn build_clients(&self) -> Result<Vec<Client>> {
        self.federation.validate(self.clients)?;
        let partition = self.partition.apply(self.train, self.clients, self.seed)?;
        let rates = match self.dynamic_lr {
            Some(factor) => assign_learning_rates(self.clients, self.local.learning_rate, factor),
            None => vec![self.local.learning_rate; self.clients],
        };
        let shards = if self.client_evaluation {
            // Different seed lane from the training partition.
            Some(partition_iid(self.test, self.clients, self.seed.wrapping_add(0x5eed))?)
        } else {
            None
        };
        (0..self.clients)
            .map(|id| {
                Ok(Client {
                    id,
                    data: self.train.subset(partition.client(id))?,
                    learning_rate: rates[id],
                    test: shards.as_ref().map(|s| self.test.subset(s.client(id))).transpose()?,
                })
            })
            .collect()
    }
}

pub fn run_federated(exp: &FederatedExperiment<'_>) -> Result<RunOutput> {
    let started = Instant::now();
    if exp.clients == 0 {
        return Err(Error::Config("at least one client is required".into()));
    }
    let clients = exp.build_clients()?;
    let mut server = exp.strategy.init_state(init_params(&exp.arch, exp.seed));
    let ctx = RoundContext {
        arch: &exp.arch,
        strategy: exp.strategy,
        federation: &exp.federation,
        train: &exp.local,
        test: exp.test,
        seed: exp.seed,
    };

    let mut rounds = Vec::with_capacity(exp.rounds);
    for _ in 0..exp.rounds {
        let out = run_round(&ctx, &server, &clients)?;
        server = out.server;
        rounds.push(out.report);
    }
    finish_federated(exp, server, rounds, started)
}

fn finish_federated(
    exp: &FederatedExperiment<'_>,
    server: ServerState,
    rounds: Vec<RoundReport>,
    started: Instant,
) -> Result<RunOutput> {
    let history = rounds
        .iter()
        .map(|r| HistoryRow {
            index: r.round,
            train_loss: r.train_loss,
            train_accuracy: r.train_accuracy,
            test_loss: r.test_loss,
            test_accuracy: r.test_accuracy,
        })
        .collect();
    let reference = rounds.iter().rev().flat_map(|r| r.clients.iter()).find(|c| c.reference);
    let evaluation = evaluate_model(&exp.arch, &server.params, exp.test)?;
    let report = RunReport {
        history,
        final_train_loss: reference.map(|c| c.train_loss),
        final_train_accuracy: reference.map(|c| c.train_accuracy),
        rounds,
        evaluation,
    };
    Ok(RunOutput { report, params: server.params, wall_time: started.elapsed() })
}

#[derive(Debug)]
pub struct CentralizedExperiment<'a> {
    pub arch: MlpArchitecture,
    pub train: &'a Dataset,
    pub test: &'a Dataset,
    pub config: TrainConfig,
    pub seed: u64,
}

/// Plain training on the whole training set, evaluated after every epoch.
pub fn run_centralized(exp: &CentralizedExperiment<'_>) -> Result<RunOutput> {
    let started = Instant::now();
    let start = init_params(&exp.arch, exp.seed);
    let config = TrainConfig { proximal_mu: 0.0, ..exp.config.clone() };
    let mut history = Vec::with_capacity(config.epochs);
    let (params, metrics) = train_local_with(
        &exp.arch,
        &start,
        exp.train,
        &config,
        ShuffleSchedule::new(exp.seed, 0, 0),
        |stats, params| {
            let (test_loss, test_accuracy, _) = evaluate(&exp.arch, params, exp.test)?;
            history.push(HistoryRow {
                index: stats.epoch + 1,
                train_loss: Some(stats.loss),
                train_accuracy: Some(stats.accuracy),
                test_loss,
                test_accuracy,
            });
            Ok(())
        },
    )?;
    let evaluation = evaluate_model(&exp.arch, &params, exp.test)?;
    let report = RunReport {
        history,
        rounds: Vec::new(),
        final_train_loss: Some(metrics.loss),
        final_train_accuracy: Some(metrics.accuracy),
        evaluation,
    };
    Ok(RunOutput { report, params, wall_time: started.elapsed() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, split_train_test, SyntheticSpec};
    use crate::federation::strategy::{FedAvg, FedOpt};
    use crate::model::Activation;

    fn data() -> (Dataset, Dataset) {
        let spec =
            SyntheticSpec { class_count: 3, dims: 4, samples_per_class: 40, center_separation: 4.0, noise_stddev: 1.0 };
        split_train_test(&generate_synthetic(&spec, 1).unwrap(), 0.25, 2).unwrap()
    }

    fn experiment<'a>(
        train: &'a Dataset,
        test: &'a Dataset,
        strategy: &'a dyn AggregationStrategy,
    ) -> FederatedExperiment<'a> {
        FederatedExperiment {
            arch: MlpArchitecture::new(vec![4, 6, 3], Activation::Relu).unwrap(),
            train,
            test,
            partition: PartitionScheme::Iid,
            clients: 4,
            rounds: 3,
            strategy,
            local: TrainConfig { epochs: 2, batch_size: 8, ..TrainConfig::default() },
            federation: FederationConfig::default(),
            dynamic_lr: None,
            client_evaluation: false,
            seed: 11,
        }
    }

    #[test]
    fn zero_rounds_reports_initial_model() {
        let (train, test) = data();
        let exp = FederatedExperiment { rounds: 0, ..experiment(&train, &test, &FedAvg) };
        let out = run_federated(&exp).unwrap();
        let init = init_params(&exp.arch, 11);
        assert_eq!(out.params, init);
        assert_eq!(out.report.evaluation, evaluate_model(&exp.arch, &init, &test).unwrap());
        assert!(out.report.history.is_empty());
    }

    #[test]
    fn federated_runs_are_reproducible() {
        let (train, test) = data();
        let strategy = FedOpt { learning_rate: 0.7, beta: 0.5 };
        let exp = FederatedExperiment {
            dynamic_lr: Some(2.0),
            client_evaluation: true,
            federation: FederationConfig { fraction_fit: 0.5, failure_probability: 0.2, ..FederationConfig::default() },
            ..experiment(&train, &test, &strategy)
        };
        let a = run_federated(&exp).unwrap();
        let b = run_federated(&exp).unwrap();
        assert_eq!(a.report, b.report);
        assert_eq!(a.params, b.params);
        assert_eq!(a.report.rounds.len(), 3);
        assert_eq!(a.report.rounds[0].client_evaluations.len(), 4);
    }

    #[test]
    fn dynamic_rates_reach_clients() {
        let (train, test) = data();
        let exp = FederatedExperiment { dynamic_lr: Some(3.0), ..experiment(&train, &test, &FedAvg) };
        let rates: Vec<f64> = exp.build_clients().unwrap().iter().map(|c| c.learning_rate).collect();
        assert_eq!(rates, vec![0.05, 0.05, 0.15000000000000002, 0.15000000000000002]);
    }

    #[test]
    fn centralized_zero_epochs_is_initial_model() {
        let (train, test) = data();
        let arch = MlpArchitecture::new(vec![4, 6, 3], Activation::Relu).unwrap();
        let exp = CentralizedExperiment {
            arch: arch.clone(),
            train: &train,
            test: &test,
            config: TrainConfig { epochs: 0, ..TrainConfig::default() },
            seed: 3,
        };
        let out = run_centralized(&exp).unwrap();
        assert_eq!(out.params, init_params(&arch, 3));
        assert!(out.report.history.is_empty());
    }

    #[test]
    fn centralized_convex_full_batch_descends() {
        let (train, test) = data();
        let arch = MlpArchitecture::new(vec![4, 3], Activation::Relu).unwrap();
        let config = TrainConfig { epochs: 30, batch_size: train.len(), learning_rate: 0.05, ..TrainConfig::default() };
        let out =
            run_centralized(&CentralizedExperiment { arch, train: &train, test: &test, config, seed: 3 }).unwrap();
        for w in out.report.history.windows(2) {
            assert!(w[1].train_loss.unwrap() <= w[0].train_loss.unwrap());
        }
    }

    #[test]
    fn centralized_learns_separable_blobs() {
        let spec = SyntheticSpec {
            class_count: 2,
            dims: 2,
            samples_per_class: 100,
            center_separation: 10.0,
            noise_stddev: 0.5,
        };
        let (train, test) = split_train_test(&generate_synthetic(&spec, 7).unwrap(), 0.2, 7).unwrap();
        let arch = MlpArchitecture::new(vec![2, 8, 2], Activation::Relu).unwrap();
        let config = TrainConfig { epochs: 25, ..TrainConfig::default() };
        let out =
            run_centralized(&CentralizedExperiment { arch, train: &train, test: &test, config, seed: 1 }).unwrap();
        assert!(out.report.evaluation.accuracy >= 0.95, "{}", out.report.evaluation.accuracy);
        assert_eq!(out.report.history.len(), 25);
    }
}
