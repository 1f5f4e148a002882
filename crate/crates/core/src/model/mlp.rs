//! Fully connected network with a softmax output.
//!
//! Parameters are flattened layer by layer: the layer's weight matrix in
//! row-major order with one row per output neuron, then that layer's biases.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Gradient, Matrix, ParameterVector};
use crate::rng::{self, Purpose};
use crate::{Error, Result};

/// Probability floor applied before taking logarithms.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed in terms of the activation's output.
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpArchitecture {
    layer_sizes: Vec<usize>,
    activation: Activation,
}

/// Borrowed view of one dense layer inside a flat parameter vector.
#[derive(Debug, Clone, Copy)]
pub struct LayerView<'a> {
    pub fan_in: usize,
    pub fan_out: usize,
    /// `fan_out x fan_in`, row-major.
    pub weights: &'a [f64],
    pub biases: &'a [f64],
}

impl MlpArchitecture {
    /// `layer_sizes` is `[inputs, hidden..., classes]`.
    pub fn new(layer_sizes: Vec<usize>, activation: Activation) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::Shape("an architecture needs input and output layer sizes".into()));
        }
        if layer_sizes.contains(&0) {
            return Err(Error::Shape(format!("zero-width layer in {layer_sizes:?}")));
        }
        Ok(Self { layer_sizes, activation })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn inputs(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn classes(&self) -> usize {
        *self.layer_sizes.last().expect("validated non-empty")
    }

    /// Number of dense layers.
    pub fn depth(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn param_count(&self) -> usize {
        self.layer_sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    fn offsets(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        let mut offset = 0;
        self.layer_sizes.windows(2).map(move |w| {
            let start = offset;
            offset += w[0] * w[1] + w[1];
            (start, w[0], w[1])
        })
    }

    pub fn check(&self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::Shape(format!(
                "parameter vector has {} entries, architecture {:?} needs {}",
                params.len(),
                self.layer_sizes,
                self.param_count()
            )));
        }
        Ok(())
    }

    /// Splits a flat vector into per-layer views.
    pub fn layers<'a>(&self, params: &'a [f64]) -> Result<Vec<LayerView<'a>>> {
        self.check(params)?;
        Ok(self
            .offsets()
            .map(|(start, fan_in, fan_out)| {
                let w_end = start + fan_in * fan_out;
                LayerView { fan_in, fan_out, weights: &params[start..w_end], biases: &params[w_end..w_end + fan_out] }
            })
            .collect())
    }

    /// Inverse of [`MlpArchitecture::layers`]: concatenates `(weights, biases)`
    /// per layer.
    pub fn flatten(&self, layers: &[(Vec<f64>, Vec<f64>)]) -> Result<ParameterVector> {
        if layers.len() != self.depth() {
            return Err(Error::Shape(format!("expected {} layers, got {}", self.depth(), layers.len())));
        }
        let mut out = Vec::with_capacity(self.param_count());
        for ((_, fan_in, fan_out), (w, b)) in self.offsets().zip(layers) {
            if w.len() != fan_in * fan_out || b.len() != fan_out {
                return Err(Error::Shape(format!("layer {fan_in}->{fan_out} has wrong block sizes")));
            }
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
        Ok(ParameterVector::new(out))
    }
}

/// Glorot-uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero biases.
pub fn init_params(arch: &MlpArchitecture, seed: u64) -> ParameterVector {
    let mut rng = rng::stream(seed, Purpose::Init, 0, 0);
    let mut out = Vec::with_capacity(arch.param_count());
    for (_, fan_in, fan_out) in arch.offsets() {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        out.extend((0..fan_in * fan_out).map(|_| rng.random_range(-limit..=limit)));
        out.extend(std::iter::repeat_n(0.0, fan_out));
    }
    ParameterVector::new(out)
}

/// Activations of every layer for a batch; index 0 is the input itself and
/// the last entry holds the softmax probabilities.
struct Activations {
    batch: usize,
    layers: Vec<Vec<f64>>,
}

fn forward_all(arch: &MlpArchitecture, params: &[f64], batch: &Matrix) -> Result<Activations> {
    let views = arch.layers(params)?;
    if batch.cols() != arch.inputs() {
        return Err(Error::Shape(format!(
            "batch has {} features, architecture expects {}",
            batch.cols(),
            arch.inputs()
        )));
    }
    if batch.rows() == 0 {
        return Err(Error::Shape("empty batch".into()));
    }
    let b = batch.rows();
    let mut layers = vec![batch.as_slice().to_vec()];
    for (l, view) in views.iter().enumerate() {
        let input = &layers[l];
        let mut out = vec![0.0; b * view.fan_out];
        for i in 0..b {
            let x = &input[i * view.fan_in..(i + 1) * view.fan_in];
            let y = &mut out[i * view.fan_out..(i + 1) * view.fan_out];
            for (o, y_o) in y.iter_mut().enumerate() {
                let w = &view.weights[o * view.fan_in..(o + 1) * view.fan_in];
                *y_o = view.biases[o] + w.iter().zip(x).map(|(w, x)| w * x).sum::<f64>();
            }
        }
        if l + 1 < views.len() {
            out.iter_mut().for_each(|z| *z = arch.activation.apply(*z));
        } else {
            for row in out.chunks_mut(view.fan_out) {
                softmax_in_place(row);
            }
        }
        layers.push(out);
    }
    Ok(Activations { batch: b, layers })
}

fn softmax_in_place(logits: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for z in logits.iter_mut() {
        *z = (*z - max).exp();
        sum += *z;
    }
    logits.iter_mut().for_each(|p| *p /= sum);
}

/// Row-wise class probabilities for a `B x D` batch.
pub fn forward(arch: &MlpArchitecture, params: &[f64], batch: &Matrix) -> Result<Matrix> {
    let acts = forward_all(arch, params, batch)?;
    let probs = acts.layers.into_iter().last().expect("at least one layer");
    Matrix::from_vec(acts.batch, arch.classes(), probs)
}

/// Mean negative log-likelihood of the true labels.
pub fn cross_entropy(probs: &Matrix, labels: &[usize]) -> Result<f64> {
    if probs.rows() != labels.len() || probs.rows() == 0 {
        return Err(Error::Shape(format!("{} probability rows for {} labels", probs.rows(), labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= probs.cols()) {
        return Err(Error::Shape(format!("label {bad} outside [0, {})", probs.cols())));
    }
    let total: f64 = labels.iter().enumerate().map(|(i, &y)| -probs.get(i, y).max(PROB_FLOOR).ln()).sum();
    Ok(total / labels.len() as f64)
}

/// Mean cross-entropy over the batch and its exact gradient.
pub fn backward(arch: &MlpArchitecture, params: &[f64], batch: &Matrix, labels: &[usize]) -> Result<(f64, Gradient)> {
    backward_with_probs(arch, params, batch, labels).map(|(loss, grad, _)| (loss, grad))
}

/// [`backward`] that also hands back the forward-pass probabilities.
pub(crate) fn backward_with_probs(
    arch: &MlpArchitecture,
    params: &[f64],
    batch: &Matrix,
    labels: &[usize],
) -> Result<(f64, Gradient, Matrix)> {
    if labels.len() != batch.rows() {
        return Err(Error::Shape(format!("{} labels for {} rows", labels.len(), batch.rows())));
    }
    let acts = forward_all(arch, params, batch)?;
    let views = arch.layers(params)?;
    let b = acts.batch;
    let classes = arch.classes();

    let out = acts.layers.last().expect("output layer");
    let probs = Matrix::from_vec(b, classes, out.clone())?;
    let loss = cross_entropy(&probs, labels)?;

    // d loss / d logits for softmax + mean cross-entropy.
    let scale = 1.0 / b as f64;
    let mut delta: Vec<f64> = out.iter().map(|p| p * scale).collect();
    for (i, &y) in labels.iter().enumerate() {
        delta[i * classes + y] -= scale;
    }

    let mut grad = vec![0.0; arch.param_count()];
    let offsets: Vec<_> = arch.offsets().collect();
    for l in (0..views.len()).rev() {
        let view = views[l];
        let (start, fan_in, fan_out) = offsets[l];
        let input = &acts.layers[l];
        let (g_w, g_b) = grad[start..start + fan_in * fan_out + fan_out].split_at_mut(fan_in * fan_out);
        for i in 0..b {
            let d = &delta[i * fan_out..(i + 1) * fan_out];
            let x = &input[i * fan_in..(i + 1) * fan_in];
            for (o, &d_o) in d.iter().enumerate() {
                g_b[o] += d_o;
                for (g, &x_j) in g_w[o * fan_in..(o + 1) * fan_in].iter_mut().zip(x) {
                    *g += d_o * x_j;
                }
            }
        }
        if l > 0 {
            let mut prev = vec![0.0; b * fan_in];
            for i in 0..b {
                let d = &delta[i * fan_out..(i + 1) * fan_out];
                let p = &mut prev[i * fan_in..(i + 1) * fan_in];
                for (o, &d_o) in d.iter().enumerate() {
                    for (p_j, &w) in p.iter_mut().zip(&view.weights[o * fan_in..(o + 1) * fan_in]) {
                        *p_j += w * d_o;
                    }
                }
                let a = &input[i * fan_in..(i + 1) * fan_in];
                for (p_j, &a_j) in p.iter_mut().zip(a) {
                    *p_j *= arch.activation.derivative_from_output(a_j);
                }
            }
            delta = prev;
        }
    }
    Ok((loss, Gradient::new(grad), probs))
}
