//! Deterministic federated-learning simulation engine.
//!
//! A small multilayer-perceptron classifier is trained across simulated
//! clients and aggregated on a simulated server under one of several
//! interchangeable aggregation strategies. The crate also provides a
//! centralized baseline and the evaluation metrics (confusion matrix,
//! one-vs-rest / micro / macro ROC curves) used to compare the two.
//!
//! All randomness is derived from a single experiment seed through
//! independent per-purpose streams (see [`rng`]), so every run is
//! reproducible bit-for-bit.

pub mod data;
pub mod error;
pub mod federation;
pub mod metrics;
pub mod model;
pub mod rng;

pub use error::{Error, Result};
