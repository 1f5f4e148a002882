//! One federated round: sample, fail, train, aggregate, evaluate.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::aggregate::{ClientUpdate, ServerState};
use super::strategy::AggregationStrategy;
use crate::data::Dataset;
use crate::model::{evaluate, train_local, MlpArchitecture, ShuffleSchedule, TrainConfig};
use crate::rng::{self, Purpose, StreamRng};
use crate::{Error, Result};

/// Per-client learning rates: 1-based clients `k <= floor(K/2)` get `base`,
/// the rest `factor * base`.
pub fn assign_learning_rates(clients: usize, base: f64, factor: f64) -> Vec<f64> {
    let half = clients / 2;
    (1..=clients).map(|k| if k <= half { base } else { factor * base }).collect()
}

/// `max(min_fit_clients, ceil(fraction_fit * K))`, or a configuration error
/// when that exceeds `K`.
pub fn clients_per_round(clients: usize, fraction_fit: f64, min_fit_clients: usize) -> Result<usize> {
    if !(fraction_fit > 0.0 && fraction_fit <= 1.0) {
        return Err(Error::Config(format!("fraction_fit {fraction_fit} outside (0, 1]")));
    }
    // Tolerate representation error such as 0.3 * 10 = 3.0000000000000004.
    let by_fraction = (fraction_fit * clients as f64 - 1e-9).ceil().max(0.0) as usize;
    let required = by_fraction.max(min_fit_clients);
    if required > clients {
        return Err(Error::Config(format!("round needs {required} clients but only {clients} exist")));
    }
    Ok(required)
}

/// Uniform sample without replacement, returned in ascending id order.
pub fn sample_clients(
    clients: usize,
    fraction_fit: f64,
    min_fit_clients: usize,
    rng: &mut StreamRng,
) -> Result<Vec<usize>> {
    let size = clients_per_round(clients, fraction_fit, min_fit_clients)?;
    let mut picked = index::sample(rng, clients, size).into_vec();
    picked.sort_unstable();
    Ok(picked)
}

/// Each sampled client fails independently with probability `p_fail`.
/// Returns `(survivors, failed)`, both in the input order.
pub fn simulate_failures(sampled: &[usize], p_fail: f64, rng: &mut StreamRng) -> (Vec<usize>, Vec<usize>) {
    let mut survivors = Vec::with_capacity(sampled.len());
    let mut failed = Vec::new();
    for &k in sampled {
        if p_fail > 0.0 && rng.random_bool(p_fail) {
            failed.push(k);
        } else {
            survivors.push(k);
        }
    }
    (survivors, failed)
}

/// Server-side participation and failure policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FederationConfig {
    pub fraction_fit: f64,
    pub min_fit_clients: usize,
    pub accept_failures: bool,
    pub failure_probability: f64,
}

impl Default for FederationConfig {
    fn default() -> Self {
        Self { fraction_fit: 1.0, min_fit_clients: 1, accept_failures: true, failure_probability: 0.0 }
    }
}

impl FederationConfig {
    pub fn validate(&self, clients: usize) -> Result<()> {
        if self.min_fit_clients == 0 {
            return Err(Error::Config("min_fit_clients must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.failure_probability) {
            return Err(Error::Config(format!("failure_probability {} outside [0, 1)", self.failure_probability)));
        }
        clients_per_round(clients, self.fraction_fit, self.min_fit_clients).map(|_| ())
    }
}

/// A simulated data holder.
#[derive(Debug, Clone)]
pub struct Client {
    pub id: usize,
    pub data: Dataset,
    pub learning_rate: f64,
    /// Local evaluation shard, when client-side evaluation is enabled.
    pub test: Option<Dataset>,
}

/// Everything a round needs besides the evolving server state.
#[derive(Debug, Clone, Copy)]
pub struct RoundContext<'a> {
    pub arch: &'a MlpArchitecture,
    pub strategy: &'a dyn AggregationStrategy,
    pub federation: &'a FederationConfig,
    /// Local schedule; its `learning_rate` and `proximal_mu` are overridden
    /// per client and by the strategy.
    pub train: &'a TrainConfig,
    pub test: &'a Dataset,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientRecord {
    pub id: usize,
    pub samples: usize,
    pub learning_rate: f64,
    pub train_loss: f64,
    pub train_accuracy: f64,
    /// `||theta_k - theta_global||_2` after local training.
    pub drift: f64,
    /// Client 0 is the reference client for single-client comparisons.
    pub reference: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientEvaluation {
    pub id: usize,
    pub samples: usize,
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    /// 1-based round number.
    pub round: usize,
    pub strategy: String,
    pub sampled: Vec<usize>,
    pub participants: Vec<usize>,
    pub failed: Vec<usize>,
    pub skipped: bool,
    pub clients: Vec<ClientRecord>,
    /// Sample-weighted mean over participants; absent for skipped rounds.
    pub train_loss: Option<f64>,
    pub train_accuracy: Option<f64>,
    pub test_loss: f64,
    pub test_accuracy: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub client_evaluations: Vec<ClientEvaluation>,
}

#[derive(Debug, Clone)]
pub struct RoundOutput {
    pub server: ServerState,
    pub report: RoundReport,
    /// Updates that entered aggregation (empty for a skipped round).
    pub updates: Vec<ClientUpdate>,
}

fn round_stream(seed: u64, purpose: Purpose, round: usize) -> StreamRng {
    rng::stream(seed, purpose, round as u64, 0)
}

/// Runs round `server.round` and returns the advanced state.
pub fn run_round(ctx: &RoundContext<'_>, server: &ServerState, clients: &[Client]) -> Result<RoundOutput> {
    if clients.is_empty() {
        return Err(Error::Config("no clients".into()));
    }
    let t = server.round;
    let fed = ctx.federation;
    let sampled = sample_clients(
        clients.len(),
        fed.fraction_fit,
        fed.min_fit_clients,
        &mut round_stream(ctx.seed, Purpose::Sampling, t),
    )?;
    let (survivors, failed) =
        simulate_failures(&sampled, fed.failure_probability, &mut round_stream(ctx.seed, Purpose::Failure, t));
    if !failed.is_empty() && !fed.accept_failures {
        return Err(Error::RoundFailed { round: t + 1, failed });
    }

    let mut next = server.clone();
    next.round = t + 1;
    let mut records = Vec::new();
    let mut updates = Vec::new();
    let skipped = survivors.len() < fed.min_fit_clients;

    if !skipped {
        for &k in &survivors {
            let client = &clients[k];
            let config = TrainConfig {
                learning_rate: client.learning_rate,
                proximal_mu: ctx.strategy.proximal_mu(),
                ..ctx.train.clone()
            };
            let schedule = ShuffleSchedule::new(ctx.seed, client.id as u64, (t * ctx.train.epochs) as u64);
            let (params, metrics) = train_local(ctx.arch, &server.params, &client.data, &config, schedule)?;
            records.push(ClientRecord {
                id: client.id,
                samples: metrics.samples,
                learning_rate: client.learning_rate,
                train_loss: metrics.loss,
                train_accuracy: metrics.accuracy,
                drift: params.distance(&server.params),
                reference: client.id == 0,
            });
            updates.push(ClientUpdate::new(client.id, params, metrics.samples as f64));
        }
        next = ctx.strategy.aggregate(server, &updates)?;
        next.round = t + 1;
        if !next.params.is_finite() {
            return Err(Error::Aggregation(format!("round {}: aggregate is not finite", t + 1)));
        }
    }

    let (train_loss, train_accuracy) = if records.is_empty() {
        (None, None)
    } else {
        let n: f64 = records.iter().map(|r| r.samples as f64).sum();
        let loss = records.iter().map(|r| r.train_loss * r.samples as f64).sum::<f64>() / n;
        let acc = records.iter().map(|r| r.train_accuracy * r.samples as f64).sum::<f64>() / n;
        (Some(loss), Some(acc))
    };
    let (test_loss, test_accuracy, _) = evaluate(ctx.arch, &next.params, ctx.test)?;
    let client_evaluations = clients
        .iter()
        .filter_map(|c| c.test.as_ref().map(|shard| (c.id, shard)))
        .map(|(id, shard)| {
            let (loss, accuracy, _) = evaluate(ctx.arch, &next.params, shard)?;
            Ok(ClientEvaluation { id, samples: shard.len(), loss, accuracy })
        })
        .collect::<Result<Vec<_>>>()?;

    let report = RoundReport {
        round: t + 1,
        strategy: ctx.strategy.name().to_string(),
        sampled,
        participants: if skipped { Vec::new() } else { survivors.clone() },
        // Survivors of a skipped round did not contribute either.
        failed: if skipped {
            let mut all: Vec<usize> = failed.iter().chain(&survivors).copied().collect();
            all.sort_unstable();
            all
        } else {
            failed
        },
        skipped,
        clients: records,
        train_loss,
        train_accuracy,
        test_loss,
        test_accuracy,
        client_evaluations,
    };
    Ok(RoundOutput { server: next, report, updates })
}
