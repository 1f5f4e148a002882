//! Client/server round protocol, aggregation strategies and experiment
//! drivers.
//!
//! Strategies implement [`AggregationStrategy`] and are created by name from
//! a [`StrategyRegistry`]. Within a round every client's randomness is keyed
//! by `(seed, round, client id)`, so results do not depend on the order in
//! which clients are trained.

mod aggregate;
mod experiment;
mod protocol;
mod strategy;

pub use aggregate::{aggregate_fedavg, aggregate_fedmedian, server_fedopt_step, ClientUpdate, ServerState};
pub use experiment::{
    evaluate_model, run_centralized, run_federated, CentralizedExperiment, Evaluation, FederatedExperiment, HistoryRow,
    PartitionScheme, RunOutput, RunReport,
};
pub use protocol::{
    assign_learning_rates, clients_per_round, run_round, sample_clients, simulate_failures, Client, ClientEvaluation,
    ClientRecord, FederationConfig, RoundContext, RoundOutput, RoundReport,
};
pub use strategy::{
    AggregationStrategy, FedAvg, FedMedian, FedOpt, FedProx, StrategyFactory, StrategyParams, StrategyRegistry,
};
