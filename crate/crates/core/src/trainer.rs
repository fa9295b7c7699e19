//! Binary cross-entropy, the Adam optimizer, and the mini-batch training
//! loop with per-epoch train/test accuracy logging.

use std::fmt;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::nn::{Mode, NetInput, Network, NnError, ParamGrads};
use crate::tensor::{select_rows, IndexMatrix, Tensor};

use serde::{Deserialize, Serialize};

/// Training hyperparameters. Defaults: 150 epochs, batch 32, learning rate
/// 1e-3, decay rates 0.9 / 0.99, epsilon 1e-8, dropout 0.3.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub epsilon: f64,
    /// Dropout probability for the stochastic layers; 0 disables them.
    pub dropout_p: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 150,
            batch_size: 32,
            learning_rate: 1e-3,
            alpha1: 0.9,
            alpha2: 0.99,
            epsilon: 1e-8,
            dropout_p: 0.3,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let lr_ok = self.learning_rate.is_finite() && self.learning_rate > 0.0;
        let eps_ok = self.epsilon.is_finite() && self.epsilon >= 0.0;
        if self.epochs == 0
            || self.batch_size == 0
            || !lr_ok
            || !(0.0..1.0).contains(&self.alpha1)
            || !(0.0..1.0).contains(&self.alpha2)
            || !(0.0..1.0).contains(&self.dropout_p)
            || !eps_ok
        {
            return Err(TrainError::BadConfig);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrainError {
    BadConfig,
    /// Predicted/label vectors of different lengths.
    LengthMismatch {
        predictions: usize,
        labels: usize,
    },
    /// Non-finite loss; training aborted.
    Diverged {
        epoch: usize,
        batch: usize,
        loss: f64,
    },
    EmptySet(&'static str),
    Nn(NnError),
}

impl fmt::Display for TrainError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrainError::BadConfig => write!(f, "invalid training configuration"),
            TrainError::LengthMismatch {
                predictions,
                labels,
            } => write!(f, "{predictions} predictions vs {labels} labels"),
            TrainError::Diverged { epoch, batch, loss } => write!(
                f,
                "training diverged at epoch {epoch}, batch {batch}: loss = {loss}"
            ),
            TrainError::EmptySet(which) => write!(f, "{which} set is empty"),
            TrainError::Nn(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for TrainError {}

impl From<NnError> for TrainError {
    fn from(e: NnError) -> Self {
        TrainError::Nn(e)
    }
}

/// One row of the per-epoch training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub test_acc: f64,
}

/// Renders epoch logs as CSV with the fixed header, six decimal places.
pub fn epoch_logs_to_csv(logs: &[EpochLog]) -> String {
    let mut out = String::from("epoch,train_loss,train_acc,test_acc\n");
    for l in logs {
        out.push_str(&format!(
            "{},{:.6},{:.6},{:.6}\n",
            l.epoch, l.train_loss, l.train_acc, l.test_acc
        ));
    }
    out
}

/// Mean binary cross-entropy and its gradient w.r.t. the predictions.
///
/// Predictions are clamped to `[1e-12, 1 - 1e-12]` before the logs, so the
/// loss and gradient stay finite at saturated outputs.
pub fn bce_loss(predictions: &[f64], labels: &[f64]) -> Result<(f64, Vec<f64>), TrainError> {
    if predictions.len() != labels.len() {
        return Err(TrainError::LengthMismatch {
            predictions: predictions.len(),
            labels: labels.len(),
        });
    }
    let n = predictions.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(predictions.len());
    for (&p, &y) in predictions.iter().zip(labels) {
        let pc = p.clamp(1e-12, 1.0 - 1e-12);
        loss -= y * pc.ln() + (1.0 - y) * (1.0 - pc).ln();
        grad.push((pc - y) / (pc * (1.0 - pc)) / n);
    }
    Ok((loss / n, grad))
}

/// Per-parameter first/second moment accumulators plus the global timestep.
#[derive(Debug, Clone)]
pub struct AdamState {
    first: Vec<Vec<Tensor>>,
    second: Vec<Vec<Tensor>>,
    timestep: u64,
}

impl AdamState {
    /// Zero-initialized moments shaped like the network's parameters.
    pub fn new(net: &Network) -> Self {
        let zeros = |net: &Network| -> Vec<Vec<Tensor>> {
            net.layers
                .iter()
                .map(|l| {
                    l.params()
                        .iter()
                        .map(|t| Tensor::zeros(t.shape().to_vec()))
                        .collect()
                })
                .collect()
        };
        Self {
            first: zeros(net),
            second: zeros(net),
            timestep: 0,
        }
    }

    pub fn timestep(&self) -> u64 {
        self.timestep
    }
}

/// One Adam update over every parameter tensor:
///
/// ```text
/// m = a1 m + (1 - a1) g          v = a2 v + (1 - a2) g^2
/// m_hat = m / (1 - a1^t)         v_hat = v / (1 - a2^t)
/// w <- w - lr * m_hat / sqrt(v_hat + eps)
/// ```
///
/// Note the epsilon sits inside the square root.
pub fn adam_step(net: &mut Network, grads: &ParamGrads, state: &mut AdamState, cfg: &TrainConfig) {
    state.timestep += 1;
    let t = state.timestep as i32;
    let bias1 = 1.0 - cfg.alpha1.powi(t);
    let bias2 = 1.0 - cfg.alpha2.powi(t);
    for (li, layer) in net.layers.iter_mut().enumerate() {
        let params = layer.params_mut();
        for (pi, param) in params.into_iter().enumerate() {
            let g = &grads.per_layer[li][pi];
            let m = &mut state.first[li][pi];
            let v = &mut state.second[li][pi];
            debug_assert_eq!(g.shape(), param.shape());
            for (((w, &g), m), v) in param
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut().iter_mut())
                .zip(v.data_mut().iter_mut())
            {
                *m = cfg.alpha1 * *m + (1.0 - cfg.alpha1) * g;
                *v = cfg.alpha2 * *v + (1.0 - cfg.alpha2) * g * g;
                let m_hat = *m / bias1;
                let v_hat = *v / bias2;
                *w -= cfg.learning_rate * m_hat / (v_hat + cfg.epsilon).sqrt();
            }
        }
    }
}

/// Feature view handed to the training loop: integer index rows for the
/// embedding path, real rows for the dense path.
#[derive(Debug, Clone, Copy)]
pub enum Features<'a> {
    Indices(&'a IndexMatrix),
    Real(&'a Tensor),
}

impl<'a> Features<'a> {
    pub fn n_rows(&self) -> usize {
        match self {
            Features::Indices(m) => m.n_rows(),
            Features::Real(t) => t.shape()[0],
        }
    }

    fn gather(&self, rows: &[usize]) -> OwnedFeatures {
        match self {
            Features::Indices(m) => OwnedFeatures::Indices(m.select_rows(rows)),
            Features::Real(t) => OwnedFeatures::Real(select_rows(t, rows)),
        }
    }
}

enum OwnedFeatures {
    Indices(IndexMatrix),
    Real(Tensor),
}

impl OwnedFeatures {
    fn as_input(&self) -> NetInput<'_> {
        match self {
            OwnedFeatures::Indices(m) => NetInput::Indices(m),
            OwnedFeatures::Real(t) => NetInput::Real(t),
        }
    }
}

/// Seeded Fisher-Yates shuffle; every epoch visits each index exactly once.
fn shuffled_indices<R: Rng>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        idx.swap(i, j);
    }
    idx
}

/// Trains the network in place. Per epoch: reshuffle, iterate batches (the
/// last one may be short), forward in train mode, BCE, backward, one Adam
/// step per batch; then record mean train loss plus train/test accuracy
/// measured in eval mode at threshold 0.5.
pub fn train(
    net: &mut Network,
    train_x: Features<'_>,
    train_y: &[f64],
    test_x: Features<'_>,
    test_y: &[f64],
    cfg: &TrainConfig,
) -> Result<Vec<EpochLog>, TrainError> {
    cfg.validate()?;
    let n_train = train_x.n_rows();
    if n_train == 0 || train_y.is_empty() {
        return Err(TrainError::EmptySet("training"));
    }
    if test_x.n_rows() == 0 || test_y.is_empty() {
        return Err(TrainError::EmptySet("test"));
    }
    if n_train != train_y.len() {
        return Err(TrainError::LengthMismatch {
            predictions: n_train,
            labels: train_y.len(),
        });
    }

    // Stream 1 drives shuffling and dropout; stream 0 is parameter init.
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut adam = AdamState::new(net);
    let mut logs = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        let order = shuffled_indices(n_train, &mut rng);
        let mut loss_sum = 0.0;
        for (batch_no, batch_rows) in order.chunks(cfg.batch_size).enumerate() {
            let batch_x = train_x.gather(batch_rows);
            let batch_y: Vec<f64> = batch_rows.iter().map(|&r| train_y[r]).collect();
            let (out, cache) = net.forward(batch_x.as_input(), Mode::Train, &mut rng)?;
            let (loss, grad) = bce_loss(out.data(), &batch_y)?;
            if !loss.is_finite() {
                return Err(TrainError::Diverged {
                    epoch,
                    batch: batch_no,
                    loss,
                });
            }
            loss_sum += loss * batch_rows.len() as f64;
            let grad_out = Tensor::new(out.shape().to_vec(), grad);
            let (grads, _) = net.backward(&cache, &grad_out)?;
            adam_step(net, &grads, &mut adam, cfg);
        }
        let train_loss = loss_sum / n_train as f64;
        let train_acc = accuracy_of(net, train_x, train_y)?;
        let test_acc = accuracy_of(net, test_x, test_y)?;
        logs.push(EpochLog {
            epoch,
            train_loss,
            train_acc,
            test_acc,
        });
    }
    Ok(logs)
}

/// Eval-mode forward over the whole set, chunked to bound peak memory.
pub fn predict(net: &Network, x: Features<'_>) -> Result<Vec<f64>, TrainError> {
    let n = x.n_rows();
    let mut out = Vec::with_capacity(n);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let chunk = 128;
    let mut start = 0;
    while start < n {
        let rows: Vec<usize> = (start..(start + chunk).min(n)).collect();
        let batch = x.gather(&rows);
        let (p, _) = net.forward(batch.as_input(), Mode::Eval, &mut rng)?;
        out.extend_from_slice(p.data());
        start += chunk;
    }
    Ok(out)
}

fn accuracy_of(net: &Network, x: Features<'_>, y: &[f64]) -> Result<f64, TrainError> {
    let p = predict(net, x)?;
    if p.len() != y.len() {
        return Err(TrainError::LengthMismatch {
            predictions: p.len(),
            labels: y.len(),
        });
    }
    let correct = p
        .iter()
        .zip(y)
        .filter(|(&pi, &yi)| (if pi >= 0.5 { 1.0 } else { 0.0 }) == yi)
        .count();
    Ok(correct as f64 / y.len() as f64)
}
