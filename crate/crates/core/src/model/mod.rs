//! From-scratch MLP classifier: parameter layout, forward/backward passes,
//! optimizers and the client-side local training loop.

mod matrix;
mod mlp;
mod optim;
mod params;
mod train;

pub(crate) use train::argmax;

pub use matrix::Matrix;
pub use mlp::{backward, cross_entropy, forward, init_params, Activation, LayerView, MlpArchitecture};
pub use optim::{adam_step, sgd_step, OptimizerKind, OptimizerState};
pub use params::{Gradient, ParameterVector};
pub use train::{
    add_proximal_gradient, evaluate, train_local, train_local_with, EpochStats, LocalMetrics, ShuffleSchedule,
    TrainConfig,
};
