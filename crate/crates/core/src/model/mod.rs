//! The patch classifier: a four-convolution network with one hidden dense
//! layer and a two-way softmax, its training loop and checkpoint format.

mod checkpoint;
mod train;

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::{
    self, bce_loss, conv2d_backward, conv2d_forward, dense_backward, dense_forward, dropout,
    dropout_backward, maxpool2_backward, maxpool2_forward, relu_backward, relu_forward, softmax,
    Adadelta, AdadeltaState, Differentiable, DropoutMask, DropoutMode, Padding, Scalar, Tensor,
    TensorError,
};

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC};
pub use train::{evaluate, train, train_with, EpochStats, Hyper, Sample, TrainHistory};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid architecture: {0}")]
    Config(String),
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("training diverged at epoch {epoch}, batch {batch}: loss is not finite")]
    Divergence { epoch: usize, batch: usize },
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("I/O error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, ModelError>;

/// Layer stack description. The default is the 100×100 grayscale network:
/// conv64, conv128, pool, dropout 0.4, conv64, conv128, pool, dropout 0.6,
/// dense128, dropout 0.5, dense2, softmax.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchConfig {
    pub input_height: usize,
    pub input_width: usize,
    pub conv_filters: Vec<usize>,
    /// Square kernel size.
    pub kernel: usize,
    /// Zero-based indices of the conv layers followed by 2×2 max pooling.
    pub pool_after: Vec<usize>,
    /// One rate per pooling layer, then one for the dense layer.
    pub dropouts: Vec<f64>,
    pub dense_units: usize,
    pub output_classes: usize,
    pub padding: Padding,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            input_height: 100,
            input_width: 100,
            conv_filters: vec![64, 128, 64, 128],
            kernel: 3,
            pool_after: vec![1, 3],
            dropouts: vec![0.4, 0.6, 0.5],
            dense_units: 128,
            output_classes: 2,
            padding: Padding::Same,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Layer {
    Conv(usize),
    Relu,
    Pool,
    Dropout(f64),
    Dense(usize),
}

impl ArchConfig {
    /// Same stack on a different input size.
    pub fn with_input(mut self, height: usize, width: usize) -> Self {
        self.input_height = height;
        self.input_width = width;
        self
    }

    pub fn without_dropout(mut self) -> Self {
        self.dropouts.iter_mut().for_each(|r| *r = 0.0);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ModelError::Config(m));
        if self.conv_filters.is_empty() || self.conv_filters.contains(&0) {
            return bad(format!("conv filters {:?}", self.conv_filters));
        }
        if self.kernel == 0 || (self.padding == Padding::Same && self.kernel.is_multiple_of(2)) {
            return bad(format!("kernel size {} with {:?} padding", self.kernel, self.padding));
        }
        if self.pool_after.windows(2).any(|w| w[0] >= w[1])
            || self.pool_after.iter().any(|&i| i >= self.conv_filters.len())
        {
            return bad(format!("pool positions {:?}", self.pool_after));
        }
        if self.dropouts.len() != self.pool_after.len() + 1 {
            return bad(format!(
                "{} dropout rates for {} pooling layers plus the dense layer",
                self.dropouts.len(),
                self.pool_after.len()
            ));
        }
        if let Some(r) = self.dropouts.iter().find(|r| !(0.0..1.0).contains(*r)) {
            return bad(format!("dropout rate {r} outside [0, 1)"));
        }
        if self.dense_units == 0 {
            return bad("dense layer needs at least one unit".into());
        }
        if self.output_classes != 2 {
            return bad(format!("binary classifier needs 2 outputs, got {}", self.output_classes));
        }
        let (mut h, mut w) = (self.input_height, self.input_width);
        for i in 0..self.conv_filters.len() {
            if self.padding == Padding::Valid {
                if h < self.kernel || w < self.kernel {
                    return bad(format!("conv{} input {h}×{w} smaller than kernel", i + 1));
                }
                h -= self.kernel - 1;
                w -= self.kernel - 1;
            }
            if self.pool_after.contains(&i) {
                if h < 2 || w < 2 {
                    return bad(format!("pool after conv{} sees {h}×{w} input", i + 1));
                }
                h /= 2;
                w /= 2;
            }
        }
        if h == 0 || w == 0 {
            return bad("feature map vanishes".into());
        }
        Ok(())
    }

    /// Spatial size and channels entering the dense layer.
    pub fn feature_dims(&self) -> (usize, usize, usize) {
        let (mut h, mut w) = (self.input_height, self.input_width);
        for i in 0..self.conv_filters.len() {
            if self.padding == Padding::Valid {
                h -= self.kernel - 1;
                w -= self.kernel - 1;
            }
            if self.pool_after.contains(&i) {
                h /= 2;
                w /= 2;
            }
        }
        (h, w, *self.conv_filters.last().expect("validated"))
    }

    pub fn flatten_width(&self) -> usize {
        let (h, w, c) = self.feature_dims();
        h * w * c
    }

    fn layers(&self) -> Vec<Layer> {
        let mut out = Vec::new();
        let mut drops = self.dropouts.iter();
        for i in 0..self.conv_filters.len() {
            out.push(Layer::Conv(2 * i));
            out.push(Layer::Relu);
            if self.pool_after.contains(&i) {
                out.push(Layer::Pool);
                out.push(Layer::Dropout(*drops.next().expect("validated")));
            }
        }
        let dense = 2 * self.conv_filters.len();
        out.push(Layer::Dense(dense));
        out.push(Layer::Relu);
        out.push(Layer::Dropout(*drops.next().expect("validated")));
        out.push(Layer::Dense(dense + 2));
        out
    }

    /// Shapes of every parameter tensor, in storage order.
    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        let mut shapes = Vec::new();
        let mut channels = 1;
        for &f in &self.conv_filters {
            shapes.push(vec![self.kernel, self.kernel, channels, f]);
            shapes.push(vec![f]);
            channels = f;
        }
        shapes.push(vec![self.flatten_width(), self.dense_units]);
        shapes.push(vec![self.dense_units]);
        shapes.push(vec![self.dense_units, self.output_classes]);
        shapes.push(vec![self.output_classes]);
        shapes
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for i in 1..=self.conv_filters.len() {
            names.push(format!("conv{i}.kernel"));
            names.push(format!("conv{i}.bias"));
        }
        names.extend(["dense.weight", "dense.bias", "output.weight", "output.bias"].map(String::from));
        names
    }

    /// Parameter tensor indices that belong to convolutions.
    pub fn conv_param_indices(&self) -> std::ops::Range<usize> {
        0..2 * self.conv_filters.len()
    }
}

impl fmt::Display for ArchConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}×{} input", self.input_height, self.input_width)?;
        let mut drops = self.dropouts.iter();
        for (i, c) in self.conv_filters.iter().enumerate() {
            write!(f, " → conv{c}")?;
            if self.pool_after.contains(&i) {
                write!(f, " → pool → drop{}", drops.next().unwrap_or(&0.0))?;
            }
        }
        write!(
            f,
            " → dense{} → drop{} → dense{} → softmax",
            self.dense_units,
            drops.next().unwrap_or(&0.0),
            self.output_classes
        )
    }
}

/// All trainable tensors of a network plus its optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams<S> {
    pub arch: ArchConfig,
    pub tensors: Vec<Tensor<S>>,
    pub optimizer: AdadeltaState<S>,
}

/// Activations recorded by a forward pass for the backward pass.
struct Trace<S> {
    /// Input to each layer, in order.
    inputs: Vec<Tensor<S>>,
    masks: Vec<DropoutMask<S>>,
    logits: Vec<S>,
}

impl<S: Scalar> NetworkParams<S> {
    /// He-normal weights scaled by fan-in, zero biases.
    pub fn build(arch: ArchConfig, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tensors: Vec<Tensor<S>> = arch
            .param_shapes()
            .into_iter()
            .map(|shape| {
                if shape.len() == 1 {
                    return Tensor::zeros(&shape);
                }
                let fan_in: usize = shape[..shape.len() - 1].iter().product();
                let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
                let data = (0..shape.iter().product::<usize>())
                    .map(|_| S::from_f64(normal.sample(&mut rng)))
                    .collect();
                Tensor::from_vec(&shape, data).expect("shape matches")
            })
            .collect();
        let optimizer = AdadeltaState::new(Adadelta::default(), &tensors);
        Ok(Self {
            arch,
            tensors,
            optimizer,
        })
    }

    pub fn param_count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn input_tensor(&self, pixels: &[S]) -> Result<Tensor<S>> {
        let (h, w) = (self.arch.input_height, self.arch.input_width);
        if pixels.len() != h * w {
            return Err(ModelError::Tensor(TensorError::Shape(format!(
                "network expects {h}×{w} input, got {} values",
                pixels.len()
            ))));
        }
        Ok(Tensor::from_vec(&[h, w, 1], pixels.to_vec())?)
    }

    fn forward<R: Rng>(&self, input: Tensor<S>, mode: DropoutMode, rng: &mut R, keep: bool) -> Result<Trace<S>> {
        let mut inputs = Vec::new();
        let mut masks = Vec::new();
        let mut x = input;
        for layer in self.arch.layers() {
            let y = match layer {
                Layer::Conv(p) => conv2d_forward(&x, &self.tensors[p], &self.tensors[p + 1], self.arch.padding)?,
                Layer::Relu => relu_forward(&x),
                Layer::Pool => maxpool2_forward(&x)?,
                Layer::Dropout(rate) => {
                    let (y, mask) = dropout(&x, rate, mode, rng)?;
                    masks.push(mask);
                    y
                }
                Layer::Dense(p) => dense_forward(&x, &self.tensors[p], &self.tensors[p + 1])?,
            };
            if keep {
                inputs.push(x);
            }
            x = y;
        }
        x.ensure_finite("logits")?;
        Ok(Trace {
            inputs,
            masks,
            logits: x.into_data(),
        })
    }

    /// Softmax output `[p_male, p_female]` for one input in inference mode.
    pub fn predict(&self, pixels: &[S]) -> Result<[S; 2]> {
        let input = self.input_tensor(pixels)?;
        let mut rng = rand::rngs::mock::StepRng::new(0, 0);
        let trace = self.forward(input, DropoutMode::Infer, &mut rng, false)?;
        let p = softmax(&trace.logits);
        Ok([p[0], p[1]])
    }

    /// Loss and parameter gradients for one labeled input. `dropout_rng` is
    /// `None` for a deterministic (inference-mode) pass.
    pub fn loss_and_grads<R: Rng>(
        &self,
        pixels: &[S],
        label: u8,
        dropout_rng: Option<&mut R>,
    ) -> Result<(S, [S; 2], Vec<Tensor<S>>)> {
        let input = self.input_tensor(pixels)?;
        self.loss_and_grads_tensor(input, label, dropout_rng)
    }

    fn loss_and_grads_tensor<R: Rng>(
        &self,
        input: Tensor<S>,
        label: u8,
        dropout_rng: Option<&mut R>,
    ) -> Result<(S, [S; 2], Vec<Tensor<S>>)> {
        let mut trace = match dropout_rng {
            Some(rng) => self.forward(input, DropoutMode::Train, rng, true)?,
            None => {
                let mut idle = rand::rngs::mock::StepRng::new(0, 0);
                self.forward(input, DropoutMode::Infer, &mut idle, true)?
            }
        };
        let probs = softmax(&trace.logits);
        let p = probs[1];
        let (loss, d_p) = bce_loss(p, label)?;
        // Softmax Jacobian: dp_1/dz_j = p_1 (δ_1j − p_j).
        let d_logits: Vec<S> = probs
            .iter()
            .enumerate()
            .map(|(j, &pj)| {
                let delta = if j == 1 { S::one() } else { S::zero() };
                d_p * p * (delta - pj)
            })
            .collect();
        let mut grad = Tensor::from_vec(&[d_logits.len()], d_logits)?;
        let mut grads: Vec<Option<Tensor<S>>> = vec![None; self.tensors.len()];
        let layers = self.arch.layers();
        for (layer, x) in layers.iter().zip(trace.inputs.iter()).rev() {
            grad = match *layer {
                Layer::Conv(p) => {
                    let g = conv2d_backward(x, &self.tensors[p], &grad, self.arch.padding)?;
                    let mut it = g.d_params.into_iter();
                    grads[p] = it.next();
                    grads[p + 1] = it.next();
                    g.d_input
                }
                Layer::Dense(p) => {
                    let g = dense_backward(x, &self.tensors[p], &grad)?;
                    let mut it = g.d_params.into_iter();
                    grads[p] = it.next();
                    grads[p + 1] = it.next();
                    g.d_input
                }
                Layer::Relu => relu_backward(x, &grad)?,
                Layer::Pool => maxpool2_backward(x, &grad)?,
                Layer::Dropout(_) => {
                    let mask = trace.masks.pop().expect("one mask per dropout layer");
                    dropout_backward(&mask, &grad)?
                }
            };
        }
        let grads = grads
            .into_iter()
            .map(|g| g.expect("every parameter receives a gradient"))
            .collect();
        Ok((loss, [probs[0], probs[1]], grads))
    }

    pub fn cast<T: Scalar>(&self) -> NetworkParams<T> {
        NetworkParams {
            arch: self.arch.clone(),
            tensors: self.tensors.iter().map(Tensor::cast).collect(),
            optimizer: AdadeltaState {
                config: self.optimizer.config,
                accum_grad_sq: self.optimizer.accum_grad_sq.iter().map(Tensor::cast).collect(),
                accum_update_sq: self.optimizer.accum_update_sq.iter().map(Tensor::cast).collect(),
            },
        }
    }
}

/// Builds a freshly initialized network.
pub fn build_network<S: Scalar>(arch: ArchConfig, seed: u64) -> Result<NetworkParams<S>> {
    NetworkParams::build(arch, seed)
}

/// `[p_male, p_female]` for one patch of gray levels, normalized to `[0, 1]`.
pub fn predict_patch(params: &NetworkParams<f32>, gray: &[u8]) -> Result<[f32; 2]> {
    let pixels: Vec<f32> = gray.iter().map(|&g| g as f32 / 255.0).collect();
    params.predict(&pixels)
}

/// 64-bit network in deterministic mode, checked against finite
/// differences on a batch of `(input, label)` pairs. Loss is the batch mean.
pub struct GradCheckNet {
    pub params: NetworkParams<f64>,
    /// Requests dropout during the check; the checker refuses such nets.
    pub dropout_enabled: bool,
}

impl Differentiable for GradCheckNet {
    type Batch = [(Vec<f64>, u8)];

    fn is_deterministic(&self) -> bool {
        !self.dropout_enabled
    }

    fn param_names(&self) -> Vec<String> {
        self.params.arch.param_names()
    }

    fn params_mut(&mut self) -> &mut [Tensor<f64>] {
        &mut self.params.tensors
    }

    fn loss(&self, batch: &Self::Batch) -> tensor::Result<f64> {
        self.loss_and_grads(batch).map(|(l, _)| l)
    }

    fn loss_and_grads(&self, batch: &Self::Batch) -> tensor::Result<(f64, Vec<Tensor<f64>>)> {
        let to_tensor_err = |e: ModelError| match e {
            ModelError::Tensor(t) => t,
            other => TensorError::Usage(other.to_string()),
        };
        let n = batch.len() as f64;
        let mut total = 0.0;
        let mut sum: Option<Vec<Tensor<f64>>> = None;
        for (pixels, label) in batch {
            let (loss, _, grads) = self
                .params
                .loss_and_grads::<ChaCha8Rng>(pixels, *label, None)
                .map_err(to_tensor_err)?;
            total += loss;
            match sum.as_mut() {
                None => sum = Some(grads),
                Some(acc) => {
                    for (a, g) in acc.iter_mut().zip(&grads) {
                        a.add_assign(g)?;
                    }
                }
            }
        }
        let mut grads = sum.ok_or_else(|| TensorError::Usage("empty batch".into()))?;
        grads.iter_mut().for_each(|g| g.scale(1.0 / n));
        Ok((total / n, grads))
    }
}
