//! Client-side local training loop.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::mlp::backward_with_probs;
use super::{
    cross_entropy, forward, Gradient, Matrix, MlpArchitecture, OptimizerKind, OptimizerState, ParameterVector,
};
use crate::data::Dataset;
use crate::rng::{self, Purpose, StreamRng};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    /// Weight of the proximal penalty `mu/2 * ||theta - start||^2`.
    pub proximal_mu: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 1, batch_size: 32, optimizer: OptimizerKind::Sgd, learning_rate: 0.05, proximal_mu: 0.0 }
    }
}

/// Identifies the mini-batch shuffling stream of one trainer.
///
/// Epoch `e` of a call shuffles with stream `(seed, Batching, lane,
/// first_epoch + e)`. A federated client uses its id as `lane` and
/// `round * epochs` as `first_epoch`; a centralized run uses lane 0 from
/// epoch 0, so a single full-data client replays the centralized schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShuffleSchedule {
    pub seed: u64,
    pub lane: u64,
    pub first_epoch: u64,
}

impl ShuffleSchedule {
    pub fn new(seed: u64, lane: u64, first_epoch: u64) -> Self {
        Self { seed, lane, first_epoch }
    }

    pub fn epoch_rng(&self, epoch: usize) -> StreamRng {
        rng::stream(self.seed, Purpose::Batching, self.lane, self.first_epoch + epoch as u64)
    }
}

/// Training loss and accuracy accumulated over one epoch, measured on each
/// mini-batch before its update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalMetrics {
    /// Final-epoch mean training loss (cross-entropy only, no proximal term).
    pub loss: f64,
    pub accuracy: f64,
    pub samples: usize,
    pub epochs: Vec<EpochStats>,
}

/// Adds the proximal gradient `mu * (params - anchor)` to `grad`.
pub fn add_proximal_gradient(grad: &mut Gradient, params: &[f64], anchor: &[f64], mu: f64) {
    if mu == 0.0 {
        return;
    }
    for ((g, p), a) in grad.iter_mut().zip(params).zip(anchor) {
        *g += mu * (p - a);
    }
}

/// Runs `config.epochs` epochs of shuffled mini-batch training starting
/// from (and proximally anchored to) `start`.
pub fn train_local(
    arch: &MlpArchitecture,
    start: &ParameterVector,
    data: &Dataset,
    config: &TrainConfig,
    schedule: ShuffleSchedule,
) -> Result<(ParameterVector, LocalMetrics)> {
    train_local_with(arch, start, data, config, schedule, |_, _| Ok(()))
}

/// [`train_local`] with a hook called after every epoch with that epoch's
/// statistics and the parameters at its end.
pub fn train_local_with<F>(
    arch: &MlpArchitecture,
    start: &ParameterVector,
    data: &Dataset,
    config: &TrainConfig,
    schedule: ShuffleSchedule,
    mut on_epoch: F,
) -> Result<(ParameterVector, LocalMetrics)>
where
    F: FnMut(&EpochStats, &ParameterVector) -> Result<()>,
{
    arch.check(start)?;
    if data.is_empty() {
        return Err(Error::Domain("cannot train on an empty dataset".into()));
    }
    if data.dims() != arch.inputs() || data.class_count() != arch.classes() {
        return Err(Error::Shape(format!(
            "dataset is {}-dimensional with {} classes, architecture is {:?}",
            data.dims(),
            data.class_count(),
            arch.layer_sizes()
        )));
    }
    if !(config.learning_rate > 0.0 && config.learning_rate.is_finite()) {
        return Err(Error::Config(format!("learning rate must be positive, got {}", config.learning_rate)));
    }
    if !(config.proximal_mu >= 0.0 && config.proximal_mu.is_finite()) {
        return Err(Error::Config(format!("proximal mu must be non-negative, got {}", config.proximal_mu)));
    }

    let n = data.len();
    let batch_size = config.batch_size.clamp(1, n);
    let mut params = start.clone();
    let mut optimizer = OptimizerState::new(config.optimizer, config.learning_rate);
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        // Each epoch's order depends only on its own stream, so a run split
        // into several calls sees the same batches as one long call.
        let mut order: Vec<usize> = (0..n).collect();
        // A single full batch has no order to randomize.
        if batch_size < n {
            order.shuffle(&mut schedule.epoch_rng(epoch));
        }
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for chunk in order.chunks(batch_size) {
            let (batch, labels) = gather(data, chunk);
            let (loss, mut grad, probs) = backward_with_probs(arch, &params, &batch, &labels)?;
            loss_sum += loss * chunk.len() as f64;
            correct += count_correct(&probs, &labels);
            add_proximal_gradient(&mut grad, &params, start, config.proximal_mu);
            optimizer.step(&mut params, &grad);
        }
        if !params.is_finite() {
            return Err(Error::Domain(format!("parameters diverged to non-finite values in epoch {epoch}")));
        }
        let stats = EpochStats { epoch, loss: loss_sum / n as f64, accuracy: correct as f64 / n as f64 };
        on_epoch(&stats, &params)?;
        history.push(stats);
    }

    let (loss, accuracy) = match history.last() {
        Some(last) => (last.loss, last.accuracy),
        None => {
            let eval = evaluate(arch, &params, data)?;
            (eval.0, eval.1)
        }
    };
    Ok((params, LocalMetrics { loss, accuracy, samples: n, epochs: history }))
}

fn gather(data: &Dataset, rows: &[usize]) -> (Matrix, Vec<usize>) {
    let mut features = Vec::with_capacity(rows.len() * data.dims());
    let mut labels = Vec::with_capacity(rows.len());
    for &i in rows {
        features.extend_from_slice(data.row(i));
        labels.push(data.labels()[i]);
    }
    (Matrix::from_vec(rows.len(), data.dims(), features).expect("sized above"), labels)
}

/// Index of the largest entry; ties go to the lowest index.
pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = j;
        }
    }
    best
}

fn count_correct(probs: &Matrix, labels: &[usize]) -> usize {
    labels.iter().enumerate().filter(|&(i, &y)| argmax(probs.row(i)) == y).count()
}

/// Loss, accuracy and the probability matrix of `params` on `data`.
pub fn evaluate(arch: &MlpArchitecture, params: &[f64], data: &Dataset) -> Result<(f64, f64, Matrix)> {
    let batch = Matrix::from_vec(data.len(), data.dims(), data.features().to_vec())?;
    let probs = forward(arch, params, &batch)?;
    let loss = cross_entropy(&probs, data.labels())?;
    let accuracy = count_correct(&probs, data.labels()) as f64 / data.len() as f64;
    Ok((loss, accuracy, probs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SyntheticSpec};
    use crate::model::{backward, init_params, sgd_step, Activation};

    fn blobs(seed: u64) -> Dataset {
        let spec =
            SyntheticSpec { class_count: 3, dims: 4, samples_per_class: 30, center_separation: 2.0, noise_stddev: 1.0 };
        generate_synthetic(&spec, seed).unwrap()
    }

    fn full_matrix(ds: &Dataset) -> Matrix {
        Matrix::from_vec(ds.len(), ds.dims(), ds.features().to_vec()).unwrap()
    }

    #[test]
    fn one_full_batch_epoch_is_one_sgd_step() {
        let ds = blobs(1);
        let arch = MlpArchitecture::new(vec![4, 5, 3], Activation::Relu).unwrap();
        let start = init_params(&arch, 2);
        let config = TrainConfig { epochs: 1, batch_size: ds.len(), learning_rate: 0.1, ..TrainConfig::default() };
        let (trained, metrics) = train_local(&arch, &start, &ds, &config, ShuffleSchedule::new(3, 0, 0)).unwrap();

        let (loss, grad) = backward(&arch, &start, &full_matrix(&ds), ds.labels()).unwrap();
        let expected = sgd_step(&OptimizerState::new(OptimizerKind::Sgd, 0.1), &start, &grad);
        assert_eq!(trained, expected);
        assert_eq!(metrics.loss, loss);
    }

    #[test]
    fn oversized_batch_is_clamped() {
        let ds = blobs(1);
        let arch = MlpArchitecture::new(vec![4, 3], Activation::Relu).unwrap();
        let start = init_params(&arch, 2);
        let big = TrainConfig { batch_size: 10_000, ..TrainConfig::default() };
        let exact = TrainConfig { batch_size: ds.len(), ..TrainConfig::default() };
        let s = ShuffleSchedule::new(1, 0, 0);
        assert_eq!(
            train_local(&arch, &start, &ds, &big, s).unwrap().0,
            train_local(&arch, &start, &ds, &exact, s).unwrap().0
        );
    }

    #[test]
    fn strong_proximal_term_limits_drift() {
        let ds = blobs(4);
        let arch = MlpArchitecture::new(vec![4, 6, 3], Activation::Relu).unwrap();
        let start = init_params(&arch, 9);
        let s = ShuffleSchedule::new(5, 0, 0);
        let plain = TrainConfig { epochs: 3, batch_size: 8, learning_rate: 1e-3, ..TrainConfig::default() };
        let prox = TrainConfig { proximal_mu: 1e6, ..plain.clone() };
        let free = train_local(&arch, &start, &ds, &plain, s).unwrap().0;
        // eta * mu = 1000 would overshoot; keep eta * mu < 2.
        let prox = TrainConfig { learning_rate: 1e-6, ..prox };
        let held = train_local(&arch, &start, &ds, &prox, s).unwrap().0;
        assert!(held.distance(&start) < free.distance(&start));
    }

    #[test]
    fn proximal_gradient_difference() {
        let ds = blobs(2);
        let arch = MlpArchitecture::new(vec![4, 3, 3], Activation::Tanh).unwrap();
        let theta = init_params(&arch, 1);
        let anchor = init_params(&arch, 2);
        let (_, plain) = backward(&arch, &theta, &full_matrix(&ds), ds.labels()).unwrap();
        let mut with_mu = plain.clone();
        add_proximal_gradient(&mut with_mu, &theta, &anchor, 0.7);
        for i in 0..theta.len() {
            let expected = 0.7 * (theta[i] - anchor[i]);
            assert!(((with_mu[i] - plain[i]) - expected).abs() <= 1e-15 * (1.0 + plain[i].abs()));
        }
    }

    #[test]
    fn convex_full_batch_descent_is_monotone() {
        let ds = blobs(6);
        let arch = MlpArchitecture::new(vec![4, 3], Activation::Relu).unwrap();
        let start = init_params(&arch, 1);
        let config = TrainConfig { epochs: 40, batch_size: ds.len(), learning_rate: 0.05, ..TrainConfig::default() };
        let (_, metrics) = train_local(&arch, &start, &ds, &config, ShuffleSchedule::new(0, 0, 0)).unwrap();
        for pair in metrics.epochs.windows(2) {
            assert!(pair[1].loss <= pair[0].loss, "{pair:?}");
        }
    }

    #[test]
    fn deterministic_and_schedule_sensitive() {
        let ds = blobs(3);
        let arch = MlpArchitecture::new(vec![4, 6, 3], Activation::Relu).unwrap();
        let start = init_params(&arch, 4);
        let config = TrainConfig {
            epochs: 2,
            batch_size: 7,
            optimizer: OptimizerKind::Adam,
            learning_rate: 0.01,
            proximal_mu: 0.0,
        };
        let a = train_local(&arch, &start, &ds, &config, ShuffleSchedule::new(1, 2, 3)).unwrap();
        let b = train_local(&arch, &start, &ds, &config, ShuffleSchedule::new(1, 2, 3)).unwrap();
        assert_eq!(a, b);
        let c = train_local(&arch, &start, &ds, &config, ShuffleSchedule::new(1, 3, 3)).unwrap();
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn split_sgd_run_matches_one_long_run() {
        let ds = blobs(5);
        let arch = MlpArchitecture::new(vec![4, 6, 3], Activation::Tanh).unwrap();
        let start = init_params(&arch, 2);
        let config = TrainConfig {
            epochs: 5,
            batch_size: 8,
            optimizer: OptimizerKind::Sgd,
            learning_rate: 0.05,
            proximal_mu: 0.0,
        };
        let (long, _) = train_local(&arch, &start, &ds, &config, ShuffleSchedule::new(9, 0, 0)).unwrap();
        let first = TrainConfig { epochs: 2, ..config.clone() };
        let second = TrainConfig { epochs: 3, ..config };
        let (mid, _) = train_local(&arch, &start, &ds, &first, ShuffleSchedule::new(9, 0, 0)).unwrap();
        let (split, _) = train_local(&arch, &mid, &ds, &second, ShuffleSchedule::new(9, 0, 2)).unwrap();
        assert_eq!(long, split);
    }

    #[test]
    fn zero_epochs_reports_start_metrics() {
        let ds = blobs(3);
        let arch = MlpArchitecture::new(vec![4, 3], Activation::Relu).unwrap();
        let start = init_params(&arch, 4);
        let config = TrainConfig { epochs: 0, ..TrainConfig::default() };
        let (p, m) = train_local(&arch, &start, &ds, &config, ShuffleSchedule::new(1, 0, 0)).unwrap();
        assert_eq!(p, start);
        let (loss, acc, _) = evaluate(&arch, &start, &ds).unwrap();
        assert_eq!((m.loss, m.accuracy), (loss, acc));
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[0.5, 0.5]), 0);
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), 1);
    }
}
