//! One-hidden-layer softmax classifiers (the fcn-x family), trained with
//! manual backprop, Adam, and validation-based early stopping.
//!
//! Everything is deterministic given the config seed: mini-batch order is
//! drawn from a per-epoch stream derived from (seed, epoch), and the
//! returned parameters are those of the best-validation epoch.

use crate::error::{Error, Result};
use crate::seeds;
use crate::simplex::{ProbabilityVector, Scoring};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

/// Shape of an fcn-x model: `hidden_dim` is the x.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub num_classes: usize,
}

impl ModelDims {
    pub fn new(input_dim: usize, hidden_dim: usize, num_classes: usize) -> Result<Self> {
        if input_dim == 0 || hidden_dim == 0 {
            return Err(Error::InvalidArgument {
                name: "dims",
                reason: "input and hidden dimensions must be positive".into(),
            });
        }
        if num_classes < 2 {
            return Err(Error::InvalidArgument {
                name: "num_classes",
                reason: format!("need at least 2 classes, got {num_classes}"),
            });
        }
        Ok(Self { input_dim, hidden_dim, num_classes })
    }

    /// input·hidden + hidden + hidden·classes + classes
    pub fn param_count(&self) -> usize {
        self.input_dim * self.hidden_dim
            + self.hidden_dim
            + self.hidden_dim * self.num_classes
            + self.num_classes
    }
}

/// Fully-connected classifier: dense → ReLU → dense → softmax, with the
/// parameters kept as one flat vector (first-layer weights, first-layer
/// biases, output weights, output biases).
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    dims: ModelDims,
    params: Vec<f64>,
}

impl MlpModel {
    pub fn from_params(dims: ModelDims, params: Vec<f64>) -> Result<Self> {
        if params.len() != dims.param_count() {
            return Err(Error::DimensionMismatch {
                expected: dims.param_count(),
                got: params.len(),
            });
        }
        Ok(Self { dims, params })
    }

    pub fn zeros(dims: ModelDims) -> Self {
        let params = vec![0.0; dims.param_count()];
        Self { dims, params }
    }

    pub fn dims(&self) -> ModelDims {
        self.dims
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn offsets(&self) -> (usize, usize, usize) {
        let d = self.dims;
        let w1_end = d.input_dim * d.hidden_dim;
        let b1_end = w1_end + d.hidden_dim;
        let w2_end = b1_end + d.hidden_dim * d.num_classes;
        (w1_end, b1_end, w2_end)
    }

    /// Softmax probabilities for one input, plus the hidden pre-activations
    /// needed by backprop.
    fn forward_parts(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let d = self.dims;
        let (w1_end, b1_end, w2_end) = self.offsets();
        let w1 = &self.params[..w1_end];
        let b1 = &self.params[w1_end..b1_end];
        let w2 = &self.params[b1_end..w2_end];
        let b2 = &self.params[w2_end..];

        let mut z1 = b1.to_vec();
        for (i, &xi) in x.iter().enumerate() {
            if xi != 0.0 {
                let row = &w1[i * d.hidden_dim..(i + 1) * d.hidden_dim];
                for (z, &w) in z1.iter_mut().zip(row) {
                    *z += xi * w;
                }
            }
        }
        let mut logits = b2.to_vec();
        for (j, &zj) in z1.iter().enumerate() {
            if zj > 0.0 {
                let row = &w2[j * d.num_classes..(j + 1) * d.num_classes];
                for (l, &w) in logits.iter_mut().zip(row) {
                    *l += zj * w;
                }
            }
        }
        // Stable softmax: subtract the max logit.
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut probs: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
        let sum: f64 = probs.iter().sum();
        for p in &mut probs {
            *p /= sum;
        }
        (probs, z1)
    }

    pub fn forward_one(&self, x: &[f64]) -> Result<ProbabilityVector> {
        if x.len() != self.dims.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.dims.input_dim,
                got: x.len(),
            });
        }
        let (probs, _) = self.forward_parts(x);
        if probs.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFiniteForward { example: 0 });
        }
        ProbabilityVector::new(probs)
    }

    /// Batched forward pass; outputs are in input order.
    pub fn forward(&self, features: &[Vec<f64>]) -> Result<Vec<ProbabilityVector>> {
        features
            .iter()
            .enumerate()
            .map(|(i, x)| {
                self.forward_one(x).map_err(|e| match e {
                    Error::NonFiniteForward { .. } => Error::NonFiniteForward { example: i },
                    other => other,
                })
            })
            .collect()
    }

    /// Write a versioned JSON checkpoint; floats round-trip bit-exactly.
    pub fn save(&self, path: &Path) -> Result<()> {
        if self.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Checkpoint("parameters contain non-finite values".into()));
        }
        let file = CheckpointFile {
            format_version: CHECKPOINT_VERSION,
            input_dim: self.dims.input_dim,
            hidden_dim: self.dims.hidden_dim,
            num_classes: self.dims.num_classes,
            params: self.params.clone(),
        };
        fs::write(path, serde_json::to_string(&file)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file: CheckpointFile = serde_json::from_str(&fs::read_to_string(path)?)?;
        if file.format_version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {}",
                file.format_version
            )));
        }
        let dims = ModelDims::new(file.input_dim, file.hidden_dim, file.num_classes)?;
        Self::from_params(dims, file.params)
    }
}

const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format_version: u32,
    input_dim: usize,
    hidden_dim: usize,
    num_classes: usize,
    params: Vec<f64>,
}

/// Feature rows paired with soft target rows.
///
/// `new` enforces simplex rows (sum 1 ± 1e-6). `new_weighted` relaxes the
/// invariant to non-negative rows with sum ≤ 1, which is what the anchor
/// label transformation produces.
#[derive(Debug, Clone)]
pub struct SoftTargetBatch {
    features: Vec<Vec<f64>>,
    targets: Vec<Vec<f64>>,
}

impl SoftTargetBatch {
    pub fn new(features: Vec<Vec<f64>>, targets: Vec<Vec<f64>>) -> Result<Self> {
        Self::validated(features, targets, true)
    }

    pub fn new_weighted(features: Vec<Vec<f64>>, targets: Vec<Vec<f64>>) -> Result<Self> {
        Self::validated(features, targets, false)
    }

    fn validated(features: Vec<Vec<f64>>, targets: Vec<Vec<f64>>, simplex: bool) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::EmptySample);
        }
        if features.len() != targets.len() {
            return Err(Error::DimensionMismatch {
                expected: features.len(),
                got: targets.len(),
            });
        }
        let d = features[0].len();
        let m = targets[0].len();
        if m < 2 {
            return Err(Error::InvalidProbability(format!(
                "target rows need at least 2 classes, got {m}"
            )));
        }
        for (i, (x, t)) in features.iter().zip(&targets).enumerate() {
            if x.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: x.len() });
            }
            if t.len() != m {
                return Err(Error::DimensionMismatch { expected: m, got: t.len() });
            }
            let mut sum = 0.0;
            for &v in t {
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::InvalidProbability(format!(
                        "target row {i} has invalid entry {v}"
                    )));
                }
                sum += v;
            }
            let ok = if simplex {
                (sum - 1.0).abs() <= 1e-6
            } else {
                sum <= 1.0 + 1e-6
            };
            if !ok {
                return Err(Error::InvalidProbability(format!(
                    "target row {i} sums to {sum}"
                )));
            }
        }
        Ok(Self { features, targets })
    }

    /// One-hot targets from integer labels.
    pub fn from_labels(features: Vec<Vec<f64>>, labels: &[usize], num_classes: usize) -> Result<Self> {
        let mut targets = Vec::with_capacity(labels.len());
        for &y in labels {
            if y >= num_classes {
                return Err(Error::LabelOutOfRange { label: y, classes: num_classes });
            }
            let mut row = vec![0.0; num_classes];
            row[y] = 1.0;
            targets.push(row);
        }
        Self::new(features, targets)
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.features[0].len()
    }

    pub fn num_classes(&self) -> usize {
        self.targets[0].len()
    }

    pub fn features(&self) -> &[Vec<f64>] {
        &self.features
    }

    pub fn targets(&self) -> &[Vec<f64>] {
        &self.targets
    }

    /// Gather the given rows into a new batch.
    pub fn gather(&self, rows: &[usize]) -> Self {
        Self {
            features: rows.iter().map(|&i| self.features[i].clone()).collect(),
            targets: rows.iter().map(|&i| self.targets[i].clone()).collect(),
        }
    }
}

/// Mean loss (1/n) Σ_i t_i · φ(h(x_i)) without gradients.
pub fn batch_loss(model: &MlpModel, batch: &SoftTargetBatch, phi: &Scoring) -> Result<f64> {
    let mut total = 0.0;
    for (i, (x, t)) in batch.features().iter().zip(batch.targets()).enumerate() {
        let (probs, _) = checked_forward(model, x, i)?;
        total += phi.weighted_score(t, &probs);
    }
    Ok(total / batch.len() as f64)
}

fn checked_forward(model: &MlpModel, x: &[f64], example: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if x.len() != model.dims.input_dim {
        return Err(Error::DimensionMismatch {
            expected: model.dims.input_dim,
            got: x.len(),
        });
    }
    let (probs, z1) = model.forward_parts(x);
    if probs.iter().any(|p| !p.is_finite()) {
        return Err(Error::NonFiniteForward { example });
    }
    Ok((probs, z1))
}

/// Mean loss over the batch and its exact gradient w.r.t. the flat
/// parameter vector, backpropagated through the softmax and both layers.
pub fn loss_and_gradient(
    model: &MlpModel,
    batch: &SoftTargetBatch,
    phi: &Scoring,
) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::EmptySample);
    }
    let d = model.dims;
    let (w1_end, b1_end, w2_end) = model.offsets();
    let w2 = &model.params[b1_end..w2_end];

    let mut grad = vec![0.0; model.params.len()];
    let mut total = 0.0;
    let n = batch.len() as f64;

    for (i, (x, t)) in batch.features().iter().zip(batch.targets()).enumerate() {
        let (probs, z1) = checked_forward(model, x, i)?;
        total += phi.weighted_score(t, &probs);

        // d(loss)/d(logits) through the softmax Jacobian:
        // dz_j = p_j (dL/dp_j − Σ_y dL/dp_y p_y).
        let dp = phi.weighted_gradient(t, &probs);
        let inner: f64 = dp.iter().zip(&probs).map(|(&g, &p)| g * p).sum();
        let dz2: Vec<f64> = probs
            .iter()
            .zip(&dp)
            .map(|(&p, &g)| p * (g - inner))
            .collect();

        let (gw1, rest) = grad.split_at_mut(w1_end);
        let (gb1, rest) = rest.split_at_mut(b1_end - w1_end);
        let (gw2, gb2) = rest.split_at_mut(w2_end - b1_end);

        for (c, &dz) in dz2.iter().enumerate() {
            gb2[c] += dz;
        }
        let mut dz1 = vec![0.0; d.hidden_dim];
        for (j, &a) in z1.iter().enumerate() {
            if a > 0.0 {
                let row = &w2[j * d.num_classes..(j + 1) * d.num_classes];
                let grow = &mut gw2[j * d.num_classes..(j + 1) * d.num_classes];
                let mut acc = 0.0;
                for ((&dz, &w), g) in dz2.iter().zip(row).zip(grow.iter_mut()) {
                    *g += a * dz;
                    acc += w * dz;
                }
                dz1[j] = acc; // ReLU is active, derivative 1
            }
        }
        for (ii, &xi) in x.iter().enumerate() {
            if xi != 0.0 {
                let grow = &mut gw1[ii * d.hidden_dim..(ii + 1) * d.hidden_dim];
                for (g, &dz) in grow.iter_mut().zip(&dz1) {
                    *g += xi * dz;
                }
            }
        }
        for (g, &dz) in gb1.iter_mut().zip(&dz1) {
            *g += dz;
        }
    }

    for g in &mut grad {
        *g /= n;
    }
    Ok((total / n, grad))
}

/// Training hyper-parameters.
///
/// `max_epochs = 0` means no optimization at all: the initialization is
/// returned unchanged (used to realize a pure warm start).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub batch_size: usize,
    pub patience: usize,
    pub adam_lr: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_epochs: 100,
            batch_size: 32,
            patience: 5,
            adam_lr: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-7,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.patience == 0 {
            return Err(Error::InvalidArgument {
                name: "patience",
                reason: "must be at least 1".into(),
            });
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument {
                name: "batch_size",
                reason: "must be at least 1".into(),
            });
        }
        if self.adam_lr <= 0.0 || self.adam_lr.is_nan() {
            return Err(Error::InvalidArgument {
                name: "adam_lr",
                reason: format!("{} must be positive", self.adam_lr),
            });
        }
        Ok(())
    }
}

pub(crate) struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl Adam {
    pub(crate) fn new(len: usize, cfg: &TrainConfig) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
            lr: cfg.adam_lr,
            beta1: cfg.adam_beta1,
            beta2: cfg.adam_beta2,
            eps: cfg.adam_eps,
        }
    }

    pub(crate) fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grad)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// The epoch-`epoch` visit order for `n` rows under the config seed.
pub(crate) fn shuffled_indices(seed: u64, epoch: usize, n: usize) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = seeds::rng(seed, &[0xBA7C, epoch as u64]);
    idx.shuffle(&mut rng);
    idx
}

/// A trained model plus its early-stopping bookkeeping.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: MlpModel,
    pub best_validation_loss: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
}

/// Supplies the mini-batches for one epoch of training.
pub trait BatchProvider {
    fn epoch_batches(&mut self, epoch: usize) -> Result<Vec<SoftTargetBatch>>;
}

/// Plain provider: reshuffles a fixed batch each epoch and slices it.
pub struct ShuffledBatches<'a> {
    data: &'a SoftTargetBatch,
    batch_size: usize,
    seed: u64,
}

impl<'a> ShuffledBatches<'a> {
    pub fn new(data: &'a SoftTargetBatch, batch_size: usize, seed: u64) -> Self {
        Self { data, batch_size, seed }
    }
}

impl BatchProvider for ShuffledBatches<'_> {
    fn epoch_batches(&mut self, epoch: usize) -> Result<Vec<SoftTargetBatch>> {
        let order = shuffled_indices(self.seed, epoch, self.data.len());
        Ok(order
            .chunks(self.batch_size)
            .map(|chunk| self.data.gather(chunk))
            .collect())
    }
}

/// Adam + early stopping over an arbitrary batch stream.
///
/// Stops once the validation loss has failed to improve for `patience`
/// consecutive epochs and restores the best-epoch parameters.
pub fn train_with_provider(
    init: &MlpModel,
    provider: &mut dyn BatchProvider,
    validation: &SoftTargetBatch,
    cfg: &TrainConfig,
    phi: &Scoring,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if validation.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut model = init.clone();
    let mut adam = Adam::new(model.params.len(), cfg);

    // The first epoch always becomes the initial best; patience counts
    // non-improving epochs after that.
    let mut best_params = model.params.clone();
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0usize;
    let mut bad_epochs = 0usize;
    let mut epochs_run = 0usize;

    for epoch in 1..=cfg.max_epochs {
        epochs_run = epoch;
        for batch in provider.epoch_batches(epoch)? {
            let (loss, grad) = loss_and_gradient(&model, &batch, phi)?;
            if !loss.is_finite() {
                return Err(Error::TrainingDiverged { epoch });
            }
            adam.step(&mut model.params, &grad);
        }
        let val = batch_loss(&model, validation, phi)?;
        if !val.is_finite() {
            return Err(Error::TrainingDiverged { epoch });
        }
        if val < best_val {
            best_val = val;
            best_params = model.params.clone();
            best_epoch = epoch;
            bad_epochs = 0;
        } else {
            bad_epochs += 1;
            if bad_epochs >= cfg.patience {
                break;
            }
        }
    }

    model.params = best_params;
    if epochs_run == 0 {
        best_val = batch_loss(&model, validation, phi)?;
    }
    Ok(TrainOutcome {
        model,
        best_validation_loss: best_val,
        best_epoch,
        epochs_run,
    })
}

/// Train on a fixed batch with per-epoch reshuffling.
pub fn train(
    init: &MlpModel,
    data: &SoftTargetBatch,
    validation: &SoftTargetBatch,
    cfg: &TrainConfig,
    phi: &Scoring,
) -> Result<TrainOutcome> {
    let mut provider = ShuffledBatches::new(data, cfg.batch_size, cfg.seed);
    train_with_provider(init, &mut provider, validation, cfg, phi)
}

/// Fresh Glorot-uniform initialization: weights drawn from
/// U(−√(6/(fan_in+fan_out)), +√(6/(fan_in+fan_out))), biases zero.
pub fn init_cold(dims: ModelDims, seed: u64) -> MlpModel {
    use rand::Rng;
    let mut rng = seeds::rng(seed, &[0xC01D]);
    let mut model = MlpModel::zeros(dims);
    let (w1_end, b1_end, w2_end) = model.offsets();
    let limit1 = (6.0 / (dims.input_dim + dims.hidden_dim) as f64).sqrt();
    for w in &mut model.params[..w1_end] {
        *w = rng.random_range(-limit1..limit1);
    }
    let limit2 = (6.0 / (dims.hidden_dim + dims.num_classes) as f64).sqrt();
    for w in &mut model.params[b1_end..w2_end] {
        *w = rng.random_range(-limit2..limit2);
    }
    model
}

/// Shrink-perturb initialization: α·θ_base + (1−α)·θ_fresh.
pub fn init_shrink_perturb(base: &MlpModel, alpha: f64, seed: u64) -> Result<MlpModel> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidArgument {
            name: "alpha",
            reason: format!("{alpha} outside [0, 1]"),
        });
    }
    let fresh = init_cold(base.dims, seed);
    let params = base
        .params
        .iter()
        .zip(&fresh.params)
        .map(|(&b, &f)| alpha * b + (1.0 - alpha) * f)
        .collect();
    MlpModel::from_params(base.dims, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simplex::empirical_risk;

    fn dims() -> ModelDims {
        ModelDims::new(3, 5, 2).unwrap()
    }

    fn toy_batch(n: usize, seed: u64) -> SoftTargetBatch {
        use rand::Rng;
        let mut rng = seeds::rng(seed, &[1]);
        let features: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..2)).collect();
        SoftTargetBatch::from_labels(features, &labels, 2).unwrap()
    }

    #[test]
    fn param_count_matches_contract() {
        let d = ModelDims::new(7, 11, 3).unwrap();
        assert_eq!(d.param_count(), 7 * 11 + 11 + 11 * 3 + 3);
    }

    #[test]
    fn zero_model_outputs_uniform() {
        let model = MlpModel::zeros(dims());
        let p = model.forward_one(&[0.4, -1.0, 2.0]).unwrap();
        assert!((p.values()[0] - 0.5).abs() < 1e-15);
        assert!((p.values()[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn forward_is_deterministic_and_ordered() {
        let model = init_cold(dims(), 9);
        let x = vec![0.1, 0.2, 0.3];
        let batch = vec![x.clone(), vec![1.0, -1.0, 0.5], x.clone()];
        let out = model.forward(&batch).unwrap();
        assert_eq!(out.len(), 3);
        assert_eq!(out[0], out[2]);
        assert!(model.forward(&[vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn loss_matches_empirical_risk_on_one_hot() {
        let model = init_cold(dims(), 4);
        let batch = toy_batch(17, 4);
        for phi in [Scoring::cross_entropy(), Scoring::brier()] {
            let (loss, _) = loss_and_gradient(&model, &batch, &phi).unwrap();
            let preds = model.forward(batch.features()).unwrap();
            let labels: Vec<usize> = batch
                .targets()
                .iter()
                .map(|t| t.iter().position(|&v| v == 1.0).unwrap())
                .collect();
            let risk = empirical_risk(&phi, &preds, &labels).unwrap();
            assert!((loss - risk).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        let model = init_cold(dims(), 42);
        let batch = toy_batch(5, 42);
        let step = 1e-5;
        for phi in [Scoring::cross_entropy(), Scoring::brier()] {
            let (_, grad) = loss_and_gradient(&model, &batch, &phi).unwrap();
            let mut worst = 0.0f64;
            for (k, &g) in grad.iter().enumerate() {
                let mut plus = model.clone();
                plus.params_mut()[k] += step;
                let mut minus = model.clone();
                minus.params_mut()[k] -= step;
                let fd = (batch_loss(&plus, &batch, &phi).unwrap()
                    - batch_loss(&minus, &batch, &phi).unwrap())
                    / (2.0 * step);
                let denom = g.abs().max(fd.abs()).max(1e-8);
                worst = worst.max((g - fd).abs() / denom);
            }
            assert!(worst < 1e-4, "worst relative error {worst}");
        }
    }

    #[test]
    fn training_is_deterministic_and_learns_blobs() {
        // Linearly separable 2-class blobs; fcn-10 should fit them easily.
        use rand::Rng;
        let mut rng = seeds::rng(7, &[2]);
        let n = 120;
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let c = i % 2;
            let offset = if c == 0 { -2.0 } else { 2.0 };
            features.push(vec![
                offset + 0.5 * rng.random_range(-1.0..1.0),
                offset + 0.5 * rng.random_range(-1.0..1.0),
            ]);
            labels.push(c);
        }
        let data = SoftTargetBatch::from_labels(features.clone(), &labels, 2).unwrap();
        let val = data.gather(&(0..20).collect::<Vec<_>>());
        let cfg = TrainConfig {
            max_epochs: 50,
            ..TrainConfig::default()
        }
        .with_seed(3);
        let init = init_cold(ModelDims::new(2, 10, 2).unwrap(), 3);
        let phi = Scoring::cross_entropy();
        let out = train(&init, &data, &val, &cfg, &phi).unwrap();
        let preds = out.model.forward(&features).unwrap();
        let correct = preds
            .iter()
            .zip(&labels)
            .filter(|(p, &y)| p.hard_label() == y)
            .count();
        assert!(correct as f64 / n as f64 >= 0.95);

        let again = train(&init, &data, &val, &cfg, &phi).unwrap();
        assert_eq!(out.model.params(), again.model.params());
    }

    #[test]
    fn patience_one_on_constant_stream_stops_after_two_epochs() {
        // Zero-gradient setup: uniform targets keep the loss constant.
        let features = vec![vec![0.0, 0.0, 0.0]; 8];
        let targets = vec![vec![0.5, 0.5]; 8];
        let data = SoftTargetBatch::new(features.clone(), targets.clone()).unwrap();
        let val = SoftTargetBatch::new(features, targets).unwrap();
        let cfg = TrainConfig {
            max_epochs: 50,
            patience: 1,
            ..TrainConfig::default()
        };
        let init = MlpModel::zeros(dims());
        let out = train(&init, &data, &val, &cfg, &Scoring::cross_entropy()).unwrap();
        assert_eq!(out.epochs_run, 2);
    }

    #[test]
    fn early_stopping_restores_best_epoch() {
        let data = toy_batch(60, 5);
        let val = toy_batch(20, 6);
        let cfg = TrainConfig {
            max_epochs: 30,
            patience: 3,
            ..TrainConfig::default()
        }
        .with_seed(5);
        let init = init_cold(dims(), 5);
        let phi = Scoring::cross_entropy();
        let out = train(&init, &data, &val, &cfg, &phi).unwrap();
        let val_loss = batch_loss(&out.model, &val, &phi).unwrap();
        assert!((val_loss - out.best_validation_loss).abs() < 1e-12);
    }

    #[test]
    fn zero_epochs_returns_init() {
        let data = toy_batch(10, 8);
        let cfg = TrainConfig {
            max_epochs: 0,
            ..TrainConfig::default()
        };
        let init = init_cold(dims(), 8);
        let out = train(&init, &data, &data, &cfg, &Scoring::cross_entropy()).unwrap();
        assert_eq!(out.model.params(), init.params());
        assert_eq!(out.epochs_run, 0);
    }

    #[test]
    fn cold_init_is_seeded_and_bounded() {
        let d = dims();
        let a = init_cold(d, 1);
        let b = init_cold(d, 1);
        let c = init_cold(d, 2);
        assert_eq!(a.params(), b.params());
        assert_ne!(a.params(), c.params());
        let limit1 = (6.0 / (d.input_dim + d.hidden_dim) as f64).sqrt();
        let w1_len = d.input_dim * d.hidden_dim;
        for &w in &a.params()[..w1_len] {
            assert!(w.abs() <= limit1);
        }
    }

    #[test]
    fn shrink_perturb_endpoints_and_midpoint() {
        let base = init_cold(dims(), 10);
        let fresh = init_cold(dims(), 11);
        let warm = init_shrink_perturb(&base, 1.0, 11).unwrap();
        assert_eq!(warm.params(), base.params());
        let cold = init_shrink_perturb(&base, 0.0, 11).unwrap();
        assert_eq!(cold.params(), fresh.params());
        let mid = init_shrink_perturb(&base, 0.5, 11).unwrap();
        for k in [0, 7, 19] {
            let expect = 0.5 * base.params()[k] + 0.5 * fresh.params()[k];
            assert!((mid.params()[k] - expect).abs() < 1e-15);
        }
        assert!(init_shrink_perturb(&base, 1.5, 11).is_err());
    }

    #[test]
    fn forward_is_class_permutation_equivariant() {
        let d = dims();
        let model = init_cold(d, 33);
        // Swap the two output classes: permute output-layer columns and biases.
        let mut swapped = model.clone();
        let (w1_end, b1_end, w2_end) = model.offsets();
        {
            let params = swapped.params_mut();
            for j in 0..d.hidden_dim {
                params.swap(b1_end + j * 2, b1_end + j * 2 + 1);
            }
            params.swap(w2_end, w2_end + 1);
        }
        let _ = w1_end;
        let x = vec![0.3, -0.7, 0.2];
        let p = model.forward_one(&x).unwrap();
        let q = swapped.forward_one(&x).unwrap();
        assert!((p.values()[0] - q.values()[1]).abs() < 1e-15);
        assert!((p.values()[1] - q.values()[0]).abs() < 1e-15);
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let model = init_cold(dims(), 21);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        model.save(&path).unwrap();
        let loaded = MlpModel::load(&path).unwrap();
        assert_eq!(model.dims(), loaded.dims());
        for (a, b) in model.params().iter().zip(loaded.params()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
