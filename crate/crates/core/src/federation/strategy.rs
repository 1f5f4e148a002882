//! Aggregation strategies behind a common trait, looked up by name.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::aggregate::{aggregate_fedavg, aggregate_fedmedian, server_fedopt_step, ClientUpdate, ServerState};
use crate::model::ParameterVector;
use crate::{Error, Result};

/// A server aggregation rule.
pub trait AggregationStrategy: fmt::Debug + Send + Sync {
    /// Registry name.
    fn name(&self) -> &'static str;

    /// Weight of the proximal term clients add to their local objective.
    fn proximal_mu(&self) -> f64 {
        0.0
    }

    /// Server state for a freshly initialised global model.
    fn init_state(&self, params: ParameterVector) -> ServerState {
        ServerState::new(params)
    }

    /// Produces the next server state from the surviving clients' updates.
    /// The round counter is left to the caller.
    fn aggregate(&self, server: &ServerState, updates: &[ClientUpdate]) -> Result<ServerState>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct FedAvg;

impl AggregationStrategy for FedAvg {
    fn name(&self) -> &'static str {
        "fedavg"
    }

    fn aggregate(&self, server: &ServerState, updates: &[ClientUpdate]) -> Result<ServerState> {
        Ok(ServerState { params: aggregate_fedavg(updates)?, momentum: None, round: server.round })
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct FedMedian;

impl AggregationStrategy for FedMedian {
    fn name(&self) -> &'static str {
        "fedmedian"
    }

    fn aggregate(&self, server: &ServerState, updates: &[ClientUpdate]) -> Result<ServerState> {
        let refs: Vec<&[f64]> = updates.iter().map(|u| &u.params[..]).collect();
        Ok(ServerState { params: aggregate_fedmedian(&refs)?, momentum: None, round: server.round })
    }
}

/// FedAvg on the server; clients train with a proximal penalty.
#[derive(Debug, Clone, Copy)]
pub struct FedProx {
    pub mu: f64,
}

impl AggregationStrategy for FedProx {
    fn name(&self) -> &'static str {
        "fedprox"
    }

    fn proximal_mu(&self) -> f64 {
        self.mu
    }

    fn aggregate(&self, server: &ServerState, updates: &[ClientUpdate]) -> Result<ServerState> {
        FedAvg.aggregate(server, updates)
    }
}

/// Server-side momentum on the FedAvg pseudo-gradient.
#[derive(Debug, Clone, Copy)]
pub struct FedOpt {
    pub learning_rate: f64,
    pub beta: f64,
}

impl AggregationStrategy for FedOpt {
    fn name(&self) -> &'static str {
        "fedopt"
    }

    fn init_state(&self, params: ParameterVector) -> ServerState {
        ServerState::with_momentum(params)
    }

    fn aggregate(&self, server: &ServerState, updates: &[ClientUpdate]) -> Result<ServerState> {
        server_fedopt_step(server, updates, self.learning_rate, self.beta)
    }
}

/// Hyperparameters a strategy factory may read. Each rule reads only its
/// own fields.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StrategyParams {
    /// Proximal weight (fedprox).
    pub mu: f64,
    /// Server learning rate (fedopt).
    pub server_learning_rate: f64,
    /// Server momentum coefficient (fedopt).
    pub beta: f64,
}

impl Default for StrategyParams {
    fn default() -> Self {
        Self { mu: 0.01, server_learning_rate: 1.0, beta: 0.9 }
    }
}

pub type StrategyFactory = fn(&StrategyParams) -> Result<Box<dyn AggregationStrategy>>;

fn build_fedavg(_: &StrategyParams) -> Result<Box<dyn AggregationStrategy>> {
    Ok(Box::new(FedAvg))
}

fn build_fedmedian(_: &StrategyParams) -> Result<Box<dyn AggregationStrategy>> {
    Ok(Box::new(FedMedian))
}

fn build_fedprox(p: &StrategyParams) -> Result<Box<dyn AggregationStrategy>> {
    if !(p.mu >= 0.0 && p.mu.is_finite()) {
        return Err(Error::Config(format!("mu must be non-negative, got {}", p.mu)));
    }
    Ok(Box::new(FedProx { mu: p.mu }))
}

fn build_fedopt(p: &StrategyParams) -> Result<Box<dyn AggregationStrategy>> {
    if !(p.server_learning_rate > 0.0 && p.server_learning_rate.is_finite()) {
        return Err(Error::Config(format!("server_learning_rate must be positive, got {}", p.server_learning_rate)));
    }
    if !(0.0..1.0).contains(&p.beta) {
        return Err(Error::Config(format!("beta must lie in [0, 1), got {}", p.beta)));
    }
    Ok(Box::new(FedOpt { learning_rate: p.server_learning_rate, beta: p.beta }))
}

/// Name-to-factory table of aggregation strategies.
#[derive(Clone)]
pub struct StrategyRegistry {
    factories: BTreeMap<&'static str, StrategyFactory>,
}

impl StrategyRegistry {
    pub fn empty() -> Self {
        Self { factories: BTreeMap::new() }
    }

    /// Registry holding fedavg, fedmedian, fedprox and fedopt.
    pub fn with_builtins() -> Self {
        let mut r = Self::empty();
        r.register("fedavg", build_fedavg);
        r.register("fedmedian", build_fedmedian);
        r.register("fedprox", build_fedprox);
        r.register("fedopt", build_fedopt);
        r
    }

    /// Adds or replaces `name`.
    pub fn register(&mut self, name: &'static str, factory: StrategyFactory) {
        self.factories.insert(name, factory);
    }

    pub fn contains(&self, name: &str) -> bool {
        self.factories.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.factories.keys().copied()
    }

    pub fn create(&self, name: &str, params: &StrategyParams) -> Result<Box<dyn AggregationStrategy>> {
        let factory = self.factories.get(name).ok_or_else(|| Error::UnknownStrategy(name.to_string()))?;
        factory(params)
    }
}

impl Default for StrategyRegistry {
    fn default() -> Self {
        Self::with_builtins()
    }
}

impl fmt::Debug for StrategyRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.factories.keys()).finish()
    }
}
