//! The numeric engine: layer forward/backward passes, parameter
//! initialization, and assembly of the default embedding + twin-conv
//! classification network.
//!
//! Everything is 64-bit floats. Backward passes are hand-derived for the
//! fixed layer set; there is no general autodiff tape. Activations flow
//! through the stack as `[batch, len, channels]` (3-D) or `[batch, features]`
//! (2-D) row-major tensors, so the innermost loops always run over
//! contiguous channel slices.

use std::fmt;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::tensor::{IndexMatrix, Tensor};

/// Embedding dimension of the default network.
pub const EMBED_DIM: usize = 300;
/// Convolution kernel width of the default network.
pub const KERNEL_WIDTH: usize = 3;
/// Channel count of both convolution layers in the default network.
pub const CONV_CHANNELS: usize = 64;
/// Hidden width of the first dense layer in the default network.
pub const DENSE_HIDDEN: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub enum NnError {
    /// Convolution geometry does not divide evenly (`(w + 2p - f) % s != 0`).
    InvalidGeometry {
        input_len: usize,
        filter: usize,
        padding: usize,
        stride: usize,
    },
    /// Filter wider than the padded input, or zero stride.
    BadConvArgs {
        input_len: usize,
        filter: usize,
        padding: usize,
        stride: usize,
    },
    /// Embedding lookup outside the vocabulary, with the offending position.
    IndexOutOfVocab {
        row: usize,
        col: usize,
        index: usize,
        vocab: usize,
    },
    ShapeMismatch {
        context: &'static str,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    /// Dropout probability outside `[0, 1)`.
    BadDropout(f64),
    /// Input kind does not match the first layer (indices vs. real features).
    BadInputKind(&'static str),
    /// Backward called with a cache that does not match the network.
    CacheMismatch,
}

impl fmt::Display for NnError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NnError::InvalidGeometry {
                input_len,
                filter,
                padding,
                stride,
            } => write!(
                f,
                "convolution geometry (w={input_len}, f={filter}, p={padding}, s={stride}) \
                 does not produce an integral output length"
            ),
            NnError::BadConvArgs {
                input_len,
                filter,
                padding,
                stride,
            } => write!(
                f,
                "invalid convolution arguments (w={input_len}, f={filter}, p={padding}, s={stride})"
            ),
            NnError::IndexOutOfVocab {
                row,
                col,
                index,
                vocab,
            } => write!(
                f,
                "embedding index {index} at position ({row}, {col}) is outside vocabulary of size {vocab}"
            ),
            NnError::ShapeMismatch {
                context,
                expected,
                found,
            } => write!(f, "{context}: expected shape {expected:?}, found {found:?}"),
            NnError::BadDropout(p) => write!(f, "dropout probability {p} must lie in [0, 1)"),
            NnError::BadInputKind(msg) => write!(f, "{msg}"),
            NnError::CacheMismatch => write!(f, "forward cache does not match the network"),
        }
    }
}

impl std::error::Error for NnError {}

/// Output length of a 1-D convolution: `(w + 2p - f) / s + 1`.
///
/// The division must be exact; a non-integral result is invalid geometry.
pub fn conv_out_len(w: usize, f: usize, p: usize, s: usize) -> Result<usize, NnError> {
    if s == 0 || f == 0 || w + 2 * p < f {
        return Err(NnError::BadConvArgs {
            input_len: w,
            filter: f,
            padding: p,
            stride: s,
        });
    }
    let span = w + 2 * p - f;
    if !span.is_multiple_of(s) {
        return Err(NnError::InvalidGeometry {
            input_len: w,
            filter: f,
            padding: p,
            stride: s,
        });
    }
    Ok(span / s + 1)
}

/// Train/eval switch for stochastic layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// One layer of the fixed stack. Parameter tensors live inline.
#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    /// Lookup table `[vocab, dim]`; maps index rows to dense vectors.
    Embedding {
        table: Tensor,
    },
    /// Kernels `[width, c_in, c_out]` plus per-output-channel bias.
    Conv1d {
        kernels: Tensor,
        bias: Tensor,
        padding: usize,
        stride: usize,
    },
    Relu,
    Dropout {
        p: f64,
    },
    GlobalMaxPool,
    /// Weights `[in, out]` plus bias `[out]`.
    Dense {
        weights: Tensor,
        bias: Tensor,
    },
    Sigmoid,
}

impl Layer {
    /// Parameter tensors in a fixed order (weights first, then bias).
    pub fn params(&self) -> Vec<&Tensor> {
        match self {
            Layer::Embedding { table } => vec![table],
            Layer::Conv1d { kernels, bias, .. } => vec![kernels, bias],
            Layer::Dense { weights, bias } => vec![weights, bias],
            _ => vec![],
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            Layer::Embedding { table } => vec![table],
            Layer::Conv1d { kernels, bias, .. } => vec![kernels, bias],
            Layer::Dense { weights, bias } => vec![weights, bias],
            _ => vec![],
        }
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }
}

/// Input to a network forward pass: integer index rows for an
/// embedding-first stack, real feature rows for a dense-first stack.
#[derive(Debug, Clone, Copy)]
pub enum NetInput<'a> {
    Indices(&'a IndexMatrix),
    Real(&'a Tensor),
}

/// Per-layer bookkeeping recorded by a forward pass, consumed by backward.
#[derive(Debug, Clone)]
pub enum LayerCache {
    Embedding {
        indices: IndexMatrix,
    },
    Conv1d {
        input: Tensor,
    },
    Relu {
        input: Tensor,
    },
    /// Combined multiplier per element (0 or 1/(1-p)); `None` when the layer
    /// acted as identity (eval mode or p = 0).
    Dropout {
        mask: Option<Vec<f64>>,
    },
    GlobalMaxPool {
        argmax: Vec<usize>,
        in_shape: [usize; 3],
    },
    Dense {
        input: Tensor,
    },
    Sigmoid {
        output: Tensor,
    },
}

/// Activation bookkeeping for one forward pass; one entry per layer.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub layers: Vec<LayerCache>,
}

/// Gradients for every parameter tensor, parallel to the layer list and to
/// each layer's `params()` order.
#[derive(Debug, Clone)]
pub struct ParamGrads {
    pub per_layer: Vec<Vec<Tensor>>,
}

impl ParamGrads {
    pub fn zeros_like(net: &Network) -> Self {
        let per_layer = net
            .layers
            .iter()
            .map(|l| {
                l.params()
                    .iter()
                    .map(|t| Tensor::zeros(t.shape().to_vec()))
                    .collect()
            })
            .collect();
        Self { per_layer }
    }
}

/// Ordered layer stack.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub layers: Vec<Layer>,
}

impl Network {
    /// The default architecture: embedding into 300 dims, two same-padded
    /// width-3 convolutions with 64 channels and ReLU, global max pooling,
    /// a 256-wide ReLU dense layer, and a single sigmoid output. Dropout
    /// (probability `dropout_p`) follows every trainable layer except the
    /// output neuron. Parameters start at zero; call
    /// [`Network::init_params`].
    pub fn embedding_conv_net(vocab_size: usize, dropout_p: f64) -> Network {
        Network {
            layers: vec![
                Layer::Embedding {
                    table: Tensor::zeros(vec![vocab_size, EMBED_DIM]),
                },
                Layer::Dropout { p: dropout_p },
                Layer::Conv1d {
                    kernels: Tensor::zeros(vec![KERNEL_WIDTH, EMBED_DIM, CONV_CHANNELS]),
                    bias: Tensor::zeros(vec![CONV_CHANNELS]),
                    padding: 1,
                    stride: 1,
                },
                Layer::Relu,
                Layer::Dropout { p: dropout_p },
                Layer::Conv1d {
                    kernels: Tensor::zeros(vec![KERNEL_WIDTH, CONV_CHANNELS, CONV_CHANNELS]),
                    bias: Tensor::zeros(vec![CONV_CHANNELS]),
                    padding: 1,
                    stride: 1,
                },
                Layer::Relu,
                Layer::Dropout { p: dropout_p },
                Layer::GlobalMaxPool,
                Layer::Dense {
                    weights: Tensor::zeros(vec![CONV_CHANNELS, DENSE_HIDDEN]),
                    bias: Tensor::zeros(vec![DENSE_HIDDEN]),
                },
                Layer::Relu,
                Layer::Dropout { p: dropout_p },
                Layer::Dense {
                    weights: Tensor::zeros(vec![DENSE_HIDDEN, 1]),
                    bias: Tensor::zeros(vec![1]),
                },
                Layer::Sigmoid,
            ],
        }
    }

    /// A small dense-only stack over real-valued inputs: `in -> hidden`
    /// (ReLU) `-> 1` (sigmoid).
    pub fn dense_net(input_dim: usize, hidden: usize) -> Network {
        Network {
            layers: vec![
                Layer::Dense {
                    weights: Tensor::zeros(vec![input_dim, hidden]),
                    bias: Tensor::zeros(vec![hidden]),
                },
                Layer::Relu,
                Layer::Dense {
                    weights: Tensor::zeros(vec![hidden, 1]),
                    bias: Tensor::zeros(vec![1]),
                },
                Layer::Sigmoid,
            ],
        }
    }

    pub fn total_params(&self) -> usize {
        self.layers.iter().map(|l| l.param_count()).sum()
    }

    /// Fills parameters from a seeded generator, in layer order:
    /// scaled-uniform (Glorot) ranges for conv/dense weights, zero biases,
    /// and a +/-0.05 uniform embedding table.
    pub fn init_params(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in &mut self.layers {
            match layer {
                Layer::Embedding { table } => {
                    fill_uniform(table.data_mut(), 0.05, &mut rng);
                }
                Layer::Conv1d { kernels, .. } => {
                    let shape = kernels.shape();
                    let (width, c_in, c_out) = (shape[0], shape[1], shape[2]);
                    let limit = (6.0 / ((width * c_in + width * c_out) as f64)).sqrt();
                    fill_uniform(kernels.data_mut(), limit, &mut rng);
                }
                Layer::Dense { weights, .. } => {
                    let shape = weights.shape();
                    let limit = (6.0 / ((shape[0] + shape[1]) as f64)).sqrt();
                    fill_uniform(weights.data_mut(), limit, &mut rng);
                }
                _ => {}
            }
        }
    }

    /// Runs the stack on a batch. Returns the final activation and a cache
    /// with one entry per layer (dropout masks only recorded in train mode).
    pub fn forward<R: Rng>(
        &self,
        input: NetInput<'_>,
        mode: Mode,
        rng: &mut R,
    ) -> Result<(Tensor, ForwardCache), NnError> {
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut current: Tensor;

        let mut layers = self.layers.iter();
        let first = layers.next().ok_or(NnError::CacheMismatch)?;
        match (first, input) {
            (Layer::Embedding { table }, NetInput::Indices(indices)) => {
                current = embedding_forward(indices, table)?;
                caches.push(LayerCache::Embedding {
                    indices: indices.clone(),
                });
            }
            (Layer::Embedding { .. }, NetInput::Real(_)) => {
                return Err(NnError::BadInputKind(
                    "embedding-first network requires integer index input",
                ));
            }
            (_, NetInput::Real(x)) => {
                let (next, cache) = apply_layer(first, x.clone(), mode, rng)?;
                caches.push(cache);
                current = next;
            }
            (_, NetInput::Indices(_)) => {
                return Err(NnError::BadInputKind(
                    "dense-first network requires real-valued input",
                ));
            }
        }

        for layer in layers {
            let (next, cache) = apply_layer(layer, current, mode, rng)?;
            caches.push(cache);
            current = next;
        }

        Ok((current, ForwardCache { layers: caches }))
    }

    /// Reverse pass. `grad_out` is dLoss/dOutput for the final activation;
    /// the cache must come from a train-mode forward on the same input.
    /// Returns one gradient per parameter tensor plus dLoss/dInput (`None`
    /// when the stack starts with an embedding, whose input is discrete).
    pub fn backward(
        &self,
        cache: &ForwardCache,
        grad_out: &Tensor,
    ) -> Result<(ParamGrads, Option<Tensor>), NnError> {
        if cache.layers.len() != self.layers.len() {
            return Err(NnError::CacheMismatch);
        }
        let mut grads = ParamGrads {
            per_layer: vec![Vec::new(); self.layers.len()],
        };
        let mut grad = Some(grad_out.clone());
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let upstream = grad.take().ok_or(NnError::CacheMismatch)?;
            let (next_grad, layer_grads) = backward_layer(layer, &cache.layers[i], upstream)?;
            grads.per_layer[i] = layer_grads;
            grad = next_grad;
            if grad.is_none() && i != 0 {
                return Err(NnError::CacheMismatch);
            }
        }
        Ok((grads, grad))
    }
}

fn fill_uniform<R: Rng>(data: &mut [f64], limit: f64, rng: &mut R) {
    for v in data.iter_mut() {
        let u: f64 = rng.gen();
        *v = (2.0 * u - 1.0) * limit;
    }
}

fn apply_layer<R: Rng>(
    layer: &Layer,
    input: Tensor,
    mode: Mode,
    rng: &mut R,
) -> Result<(Tensor, LayerCache), NnError> {
    match layer {
        Layer::Embedding { .. } => Err(NnError::BadInputKind(
            "embedding layer only supported as the first layer",
        )),
        Layer::Conv1d {
            kernels,
            bias,
            padding,
            stride,
        } => {
            let out = conv1d_forward(&input, kernels, bias, *padding, *stride)?;
            Ok((out, LayerCache::Conv1d { input }))
        }
        Layer::Relu => {
            let out = relu(&input);
            Ok((out, LayerCache::Relu { input }))
        }
        Layer::Dropout { p } => {
            let (out, mask) = dropout(input, *p, mode, rng)?;
            Ok((out, LayerCache::Dropout { mask }))
        }
        Layer::GlobalMaxPool => {
            let (out, argmax, in_shape) = global_max_pool(&input)?;
            Ok((out, LayerCache::GlobalMaxPool { argmax, in_shape }))
        }
        Layer::Dense { weights, bias } => {
            let out = dense_forward(&input, weights, bias)?;
            Ok((out, LayerCache::Dense { input }))
        }
        Layer::Sigmoid => {
            let out = sigmoid(&input);
            let cache = LayerCache::Sigmoid {
                output: out.clone(),
            };
            Ok((out, cache))
        }
    }
}

/// Gradient w.r.t. the layer input (None for embedding) plus gradients for
/// the layer's parameters in `params()` order.
fn backward_layer(
    layer: &Layer,
    cache: &LayerCache,
    grad: Tensor,
) -> Result<(Option<Tensor>, Vec<Tensor>), NnError> {
    match (layer, cache) {
        (Layer::Embedding { table }, LayerCache::Embedding { indices }) => {
            let d_table = embedding_backward(indices, table, &grad)?;
            Ok((None, vec![d_table]))
        }
        (
            Layer::Conv1d {
                kernels,
                bias: _,
                padding,
                stride,
            },
            LayerCache::Conv1d { input },
        ) => {
            let (dx, dk, db) = conv1d_backward(input, kernels, &grad, *padding, *stride)?;
            Ok((Some(dx), vec![dk, db]))
        }
        (Layer::Relu, LayerCache::Relu { input }) => {
            let mut g = grad;
            for (gv, &xv) in g.data_mut().iter_mut().zip(input.data()) {
                if xv <= 0.0 {
                    *gv = 0.0;
                }
            }
            Ok((Some(g), vec![]))
        }
        (Layer::Dropout { .. }, LayerCache::Dropout { mask }) => {
            let mut g = grad;
            if let Some(mask) = mask {
                if mask.len() != g.len() {
                    return Err(NnError::CacheMismatch);
                }
                for (gv, &m) in g.data_mut().iter_mut().zip(mask.iter()) {
                    *gv *= m;
                }
            }
            Ok((Some(g), vec![]))
        }
        (Layer::GlobalMaxPool, LayerCache::GlobalMaxPool { argmax, in_shape }) => {
            let [batch, len, channels] = *in_shape;
            if grad.shape() != [batch, channels] {
                return Err(NnError::ShapeMismatch {
                    context: "global max pool backward",
                    expected: vec![batch, channels],
                    found: grad.shape().to_vec(),
                });
            }
            let mut dx = Tensor::zeros(vec![batch, len, channels]);
            let dxd = dx.data_mut();
            for b in 0..batch {
                for c in 0..channels {
                    let t = argmax[b * channels + c];
                    dxd[(b * len + t) * channels + c] = grad.data()[b * channels + c];
                }
            }
            Ok((Some(dx), vec![]))
        }
        (Layer::Dense { weights, .. }, LayerCache::Dense { input }) => {
            let (dx, dw, db) = dense_backward(input, weights, &grad)?;
            Ok((Some(dx), vec![dw, db]))
        }
        (Layer::Sigmoid, LayerCache::Sigmoid { output }) => {
            let mut g = grad;
            for (gv, &y) in g.data_mut().iter_mut().zip(output.data()) {
                *gv *= y * (1.0 - y);
            }
            Ok((Some(g), vec![]))
        }
        _ => Err(NnError::CacheMismatch),
    }
}

/// Looks up each index row in the table: `[batch, len]` -> `[batch, len, dim]`.
pub fn embedding_forward(indices: &IndexMatrix, table: &Tensor) -> Result<Tensor, NnError> {
    let vocab = table.shape()[0];
    let dim = table.shape()[1];
    let (batch, len) = (indices.n_rows(), indices.n_cols());
    let mut out = Tensor::zeros(vec![batch, len, dim]);
    let out_data = out.data_mut();
    for b in 0..batch {
        for (t, &idx) in indices.row(b).iter().enumerate() {
            if idx >= vocab {
                return Err(NnError::IndexOutOfVocab {
                    row: b,
                    col: t,
                    index: idx,
                    vocab,
                });
            }
            let dst = (b * len + t) * dim;
            out_data[dst..dst + dim].copy_from_slice(&table.data()[idx * dim..(idx + 1) * dim]);
        }
    }
    Ok(out)
}

/// Accumulates output gradients into the rows of the embedding table that
/// were looked up; rows never indexed keep a zero gradient.
pub fn embedding_backward(
    indices: &IndexMatrix,
    table: &Tensor,
    grad: &Tensor,
) -> Result<Tensor, NnError> {
    let dim = table.shape()[1];
    let (batch, len) = (indices.n_rows(), indices.n_cols());
    if grad.shape() != [batch, len, dim] {
        return Err(NnError::ShapeMismatch {
            context: "embedding backward",
            expected: vec![batch, len, dim],
            found: grad.shape().to_vec(),
        });
    }
    let mut d_table = Tensor::zeros(table.shape().to_vec());
    let dt = d_table.data_mut();
    for b in 0..batch {
        for (t, &idx) in indices.row(b).iter().enumerate() {
            let src = (b * len + t) * dim;
            let dst = idx * dim;
            let g_row = &grad.data()[src..src + dim];
            for (acc, &g) in dt[dst..dst + dim].iter_mut().zip(g_row) {
                *acc += g;
            }
        }
    }
    Ok(d_table)
}

/// 1-D convolution over `[batch, len, c_in]` with kernels `[width, c_in, c_out]`
/// and zero-padded boundaries: `y[b,t,o] = bias[o] + sum_k sum_c K[k,c,o] * x[b, t*s + k - p, c]`.
pub fn conv1d_forward(
    x: &Tensor,
    kernels: &Tensor,
    bias: &Tensor,
    padding: usize,
    stride: usize,
) -> Result<Tensor, NnError> {
    let (batch, len, c_in) = shape3(x, "conv1d input")?;
    let width = kernels.shape()[0];
    let c_out = kernels.shape()[2];
    if kernels.shape()[1] != c_in || bias.len() != c_out {
        return Err(NnError::ShapeMismatch {
            context: "conv1d kernels",
            expected: vec![width, c_in, c_out],
            found: kernels.shape().to_vec(),
        });
    }
    let out_len = conv_out_len(len, width, padding, stride)?;
    let mut y = Tensor::zeros(vec![batch, out_len, c_out]);
    let yd = y.data_mut();
    let xd = x.data();
    let kd = kernels.data();
    for b in 0..batch {
        let y_rows = &mut yd[b * out_len * c_out..(b + 1) * out_len * c_out];
        for row in y_rows.chunks_mut(c_out) {
            row.copy_from_slice(bias.data());
        }
        // (k, c) outer so each kernel row is reused across every output
        // position while the output rows stay cache-resident
        for k in 0..width {
            let Some((t_lo, t_hi)) = conv_t_range(k, len, out_len, padding, stride) else {
                continue;
            };
            let k_block = &kd[k * c_in * c_out..(k + 1) * c_in * c_out];
            for c in 0..c_in {
                let k_row = &k_block[c * c_out..(c + 1) * c_out];
                for t in t_lo..=t_hi {
                    let src = t * stride + k - padding;
                    let xv = xd[(b * len + src) * c_in + c];
                    if xv == 0.0 {
                        continue;
                    }
                    let y_row = &mut y_rows[t * c_out..(t + 1) * c_out];
                    for (yv, &kv) in y_row.iter_mut().zip(k_row) {
                        *yv = xv.mul_add(kv, *yv);
                    }
                }
            }
        }
    }
    Ok(y)
}

/// Output positions `t` for which `t*stride + k - padding` lands inside the
/// input; `None` when the range is empty.
fn conv_t_range(
    k: usize,
    len: usize,
    out_len: usize,
    padding: usize,
    stride: usize,
) -> Option<(usize, usize)> {
    let t_lo = if k >= padding {
        0
    } else {
        (padding - k).div_ceil(stride)
    };
    if len + padding < k + 1 {
        return None;
    }
    let t_hi = ((len - 1 + padding - k) / stride).min(out_len.checked_sub(1)?);
    if t_lo > t_hi {
        return None;
    }
    Some((t_lo, t_hi))
}

/// Backward of [`conv1d_forward`]: gradients w.r.t. input, kernels, and bias.
pub fn conv1d_backward(
    x: &Tensor,
    kernels: &Tensor,
    grad: &Tensor,
    padding: usize,
    stride: usize,
) -> Result<(Tensor, Tensor, Tensor), NnError> {
    let (batch, len, c_in) = shape3(x, "conv1d input")?;
    let width = kernels.shape()[0];
    let c_out = kernels.shape()[2];
    let out_len = conv_out_len(len, width, padding, stride)?;
    if grad.shape() != [batch, out_len, c_out] {
        return Err(NnError::ShapeMismatch {
            context: "conv1d backward",
            expected: vec![batch, out_len, c_out],
            found: grad.shape().to_vec(),
        });
    }
    let mut dx = Tensor::zeros(vec![batch, len, c_in]);
    let mut dk = Tensor::zeros(kernels.shape().to_vec());
    let mut db = Tensor::zeros(vec![c_out]);

    let xd = x.data();
    let kd = kernels.data();
    let gd = grad.data();
    let dxd = dx.data_mut();
    let dkd = dk.data_mut();
    let dbd = db.data_mut();

    for b in 0..batch {
        let g_rows = &gd[b * out_len * c_out..(b + 1) * out_len * c_out];
        for g_row in g_rows.chunks(c_out) {
            for (acc, &g) in dbd.iter_mut().zip(g_row) {
                *acc += g;
            }
        }
        for k in 0..width {
            let Some((t_lo, t_hi)) = conv_t_range(k, len, out_len, padding, stride) else {
                continue;
            };
            let k_block = &kd[k * c_in * c_out..(k + 1) * c_in * c_out];
            let dk_block = &mut dkd[k * c_in * c_out..(k + 1) * c_in * c_out];
            for c in 0..c_in {
                let k_row = &k_block[c * c_out..(c + 1) * c_out];
                let dk_row = &mut dk_block[c * c_out..(c + 1) * c_out];
                for t in t_lo..=t_hi {
                    let src = t * stride + k - padding;
                    let g_row = &g_rows[t * c_out..(t + 1) * c_out];
                    let x_off = (b * len + src) * c_in + c;
                    let xv = xd[x_off];
                    if xv != 0.0 {
                        for (acc, &g) in dk_row.iter_mut().zip(g_row) {
                            *acc = xv.mul_add(g, *acc);
                        }
                    }
                    dxd[x_off] += dot_product(k_row, g_row);
                }
            }
        }
    }
    Ok((dx, dk, db))
}

/// Elementwise `max(0, x)`.
pub fn relu(x: &Tensor) -> Tensor {
    let data = x.data().iter().map(|&v| v.max(0.0)).collect();
    Tensor::new(x.shape().to_vec(), data)
}

/// Inverted dropout. In train mode each element is zeroed independently with
/// probability `p` and survivors are scaled by `1/(1-p)`; eval mode is the
/// identity. The returned mask holds the applied multipliers (`None` when the
/// layer acted as identity).
pub fn dropout<R: Rng>(
    mut x: Tensor,
    p: f64,
    mode: Mode,
    rng: &mut R,
) -> Result<(Tensor, Option<Vec<f64>>), NnError> {
    if !(0.0..1.0).contains(&p) {
        return Err(NnError::BadDropout(p));
    }
    if mode == Mode::Eval || p == 0.0 {
        return Ok((x, None));
    }
    let scale = 1.0 / (1.0 - p);
    let mut mask = Vec::with_capacity(x.len());
    for v in x.data_mut().iter_mut() {
        let u: f64 = rng.gen();
        let m = if u < p { 0.0 } else { scale };
        *v *= m;
        mask.push(m);
    }
    Ok((x, Some(mask)))
}

/// Max over the sequence dimension per channel: `[batch, len, c]` -> `[batch, c]`.
/// Returns the first maximizing position per (batch, channel) for backward
/// routing (ties resolve to the earliest position).
pub fn global_max_pool(x: &Tensor) -> Result<(Tensor, Vec<usize>, [usize; 3]), NnError> {
    let (batch, len, channels) = shape3(x, "global max pool input")?;
    let mut out = Tensor::zeros(vec![batch, channels]);
    let mut argmax = vec![0usize; batch * channels];
    let xd = x.data();
    let od = out.data_mut();
    for b in 0..batch {
        let base = b * len * channels;
        od[b * channels..(b + 1) * channels].copy_from_slice(&xd[base..base + channels]);
        for t in 1..len {
            let row = &xd[base + t * channels..base + (t + 1) * channels];
            for c in 0..channels {
                if row[c] > od[b * channels + c] {
                    od[b * channels + c] = row[c];
                    argmax[b * channels + c] = t;
                }
            }
        }
    }
    Ok((out, argmax, [batch, len, channels]))
}

/// Affine map `y = x W + b` over `[batch, in]`.
pub fn dense_forward(x: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<Tensor, NnError> {
    let (batch, d_in) = shape2(x, "dense input")?;
    let (w_in, w_out) = (weights.shape()[0], weights.shape()[1]);
    if w_in != d_in || bias.len() != w_out {
        return Err(NnError::ShapeMismatch {
            context: "dense weights",
            expected: vec![d_in, w_out],
            found: weights.shape().to_vec(),
        });
    }
    let mut y = Tensor::zeros(vec![batch, w_out]);
    let yd = y.data_mut();
    let xd = x.data();
    let wd = weights.data();
    for b in 0..batch {
        let y_row = &mut yd[b * w_out..(b + 1) * w_out];
        y_row.copy_from_slice(bias.data());
        let x_row = &xd[b * d_in..(b + 1) * d_in];
        for (i, &xv) in x_row.iter().enumerate() {
            if xv == 0.0 {
                continue;
            }
            let w_row = &wd[i * w_out..(i + 1) * w_out];
            for (yv, &wv) in y_row.iter_mut().zip(w_row) {
                *yv = xv.mul_add(wv, *yv);
            }
        }
    }
    Ok(y)
}

/// Backward of [`dense_forward`]: gradients w.r.t. input, weights, and bias.
pub fn dense_backward(
    x: &Tensor,
    weights: &Tensor,
    grad: &Tensor,
) -> Result<(Tensor, Tensor, Tensor), NnError> {
    let (batch, d_in) = shape2(x, "dense input")?;
    let (w_in, w_out) = (weights.shape()[0], weights.shape()[1]);
    if grad.shape() != [batch, w_out] || w_in != d_in {
        return Err(NnError::ShapeMismatch {
            context: "dense backward",
            expected: vec![batch, w_out],
            found: grad.shape().to_vec(),
        });
    }
    let mut dx = Tensor::zeros(vec![batch, d_in]);
    let mut dw = Tensor::zeros(vec![d_in, w_out]);
    let mut db = Tensor::zeros(vec![w_out]);
    let xd = x.data();
    let wd = weights.data();
    let gd = grad.data();
    let dxd = dx.data_mut();
    let dwd = dw.data_mut();
    let dbd = db.data_mut();
    for b in 0..batch {
        let g_row = &gd[b * w_out..(b + 1) * w_out];
        for (acc, &g) in dbd.iter_mut().zip(g_row) {
            *acc += g;
        }
        let x_row = &xd[b * d_in..(b + 1) * d_in];
        let dx_row = &mut dxd[b * d_in..(b + 1) * d_in];
        for i in 0..d_in {
            let w_row = &wd[i * w_out..(i + 1) * w_out];
            dx_row[i] += dot_product(w_row, g_row);
            let xv = x_row[i];
            if xv != 0.0 {
                let dw_row = &mut dwd[i * w_out..(i + 1) * w_out];
                for (acc, &g) in dw_row.iter_mut().zip(g_row) {
                    *acc = xv.mul_add(g, *acc);
                }
            }
        }
    }
    Ok((dx, dw, db))
}

/// Numerically stable logistic function, elementwise.
pub fn sigmoid(x: &Tensor) -> Tensor {
    let data = x.data().iter().map(|&v| sigmoid_scalar(v)).collect();
    Tensor::new(x.shape().to_vec(), data)
}

pub fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Dot product over eight independent accumulator lanes. The lane layout is
/// fixed, so results are deterministic for a given build while the loop
/// stays free to vectorize.
#[inline]
fn dot_product(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 8];
    let mut a_chunks = a.chunks_exact(8);
    let mut b_chunks = b.chunks_exact(8);
    for (ca, cb) in (&mut a_chunks).zip(&mut b_chunks) {
        for lane in 0..8 {
            acc[lane] = ca[lane].mul_add(cb[lane], acc[lane]);
        }
    }
    let mut tail = 0.0;
    for (&x, &y) in a_chunks.remainder().iter().zip(b_chunks.remainder()) {
        tail = x.mul_add(y, tail);
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}

fn shape3(x: &Tensor, context: &'static str) -> Result<(usize, usize, usize), NnError> {
    match x.shape() {
        &[a, b, c] => Ok((a, b, c)),
        other => Err(NnError::ShapeMismatch {
            context,
            expected: vec![0, 0, 0],
            found: other.to_vec(),
        }),
    }
}

fn shape2(x: &Tensor, context: &'static str) -> Result<(usize, usize), NnError> {
    match x.shape() {
        &[a, b] => Ok((a, b)),
        other => Err(NnError::ShapeMismatch {
            context,
            expected: vec![0, 0],
            found: other.to_vec(),
        }),
    }
}
