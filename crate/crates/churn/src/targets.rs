//! Label transformations and training procedures for the churn baselines:
//! distillation, anchor, label smoothing, mixup, and co-distillation.
//!
//! Each transformation turns (labels, base predictions) into soft target
//! rows consumable by the trainer. Distillation mixes `λ·e_y + (1−λ)·g(x)`;
//! minimizing the resulting loss is the same as minimizing
//! `λ·R̂ + (1−λ)·Ĉ` plus a model-independent constant.

use crate::error::{Error, Result};
use crate::nn::{
    self, loss_and_gradient, Adam, BatchProvider, MlpModel, SoftTargetBatch, TrainConfig,
    TrainOutcome,
};
use crate::oracle::AnchorParams;
use crate::seeds;
use crate::simplex::{divergence_rows, ProbabilityVector, Scoring};
use rand::seq::SliceRandom;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

/// Weight on the one-hot label in the distilled target.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DistillConfig {
    pub lambda: f64,
}

impl DistillConfig {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::InvalidArgument {
                name: "lambda",
                reason: format!("{lambda} outside [0, 1]"),
            });
        }
        Ok(Self { lambda })
    }
}

/// Beta-distribution shape for mixup's mixing coefficient.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MixupConfig {
    pub alpha: f64,
}

impl MixupConfig {
    pub fn new(alpha: f64) -> Result<Self> {
        if alpha <= 0.0 || alpha.is_nan() {
            return Err(Error::InvalidArgument {
                name: "alpha",
                reason: format!("{alpha} must be positive"),
            });
        }
        Ok(Self { alpha })
    }
}

/// Co-distillation coupling weight and warmup.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CoDistillConfig {
    pub alpha: f64,
    pub warmup_steps: usize,
}

impl CoDistillConfig {
    pub fn new(alpha: f64, warmup_steps: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::InvalidArgument {
                name: "alpha",
                reason: format!("{alpha} outside [0, 1]"),
            });
        }
        Ok(Self { alpha, warmup_steps })
    }
}

fn check_lengths(labels: &[usize], base_predictions: &[ProbabilityVector]) -> Result<usize> {
    if labels.len() != base_predictions.len() {
        return Err(Error::DimensionMismatch {
            expected: labels.len(),
            got: base_predictions.len(),
        });
    }
    if labels.is_empty() {
        return Err(Error::EmptySample);
    }
    let m = base_predictions[0].dim();
    for (i, &y) in labels.iter().enumerate() {
        if base_predictions[i].dim() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: base_predictions[i].dim(),
            });
        }
        if y >= m {
            return Err(Error::LabelOutOfRange { label: y, classes: m });
        }
    }
    Ok(m)
}

/// Distilled target rows: λ·e_{y_i} + (1−λ)·g(x_i). Every row is on the
/// simplex.
pub fn distilled_targets(
    labels: &[usize],
    base_predictions: &[ProbabilityVector],
    cfg: &DistillConfig,
) -> Result<Vec<Vec<f64>>> {
    let _ = check_lengths(labels, base_predictions)?;
    Ok(labels
        .iter()
        .zip(base_predictions)
        .map(|(&y, g)| {
            g.values()
                .iter()
                .enumerate()
                .map(|(i, &gi)| {
                    let e = if i == y { 1.0 } else { 0.0 };
                    cfg.lambda * e + (1.0 - cfg.lambda) * gi
                })
                .collect()
        })
        .collect())
}

/// Anchor target rows: α·g(x_i) + (1−α)·e_{y_i} where the base model's hard
/// prediction agrees with the label, and η·e_{y_i} otherwise.
///
/// Disagreement rows are deliberately not renormalized — they down-weight
/// the example — so rows sum to at most 1. Pair them with
/// [`SoftTargetBatch::new_weighted`].
pub fn anchor_targets(
    labels: &[usize],
    base_predictions: &[ProbabilityVector],
    params: &AnchorParams,
) -> Result<Vec<Vec<f64>>> {
    let m = check_lengths(labels, base_predictions)?;
    Ok(labels
        .iter()
        .zip(base_predictions)
        .map(|(&y, g)| {
            if y == g.hard_label() {
                g.values()
                    .iter()
                    .enumerate()
                    .map(|(i, &gi)| {
                        let e = if i == y { 1.0 } else { 0.0 };
                        params.alpha * gi + (1.0 - params.alpha) * e
                    })
                    .collect()
            } else {
                let mut row = vec![0.0; m];
                row[y] = params.eta;
                row
            }
        })
        .collect())
}

/// Label-smoothing rows: (1−α)·e_{y_i} + α·g(x_i).
///
/// Algebraically identical to [`distilled_targets`] with λ = 1−α; kept as a
/// separately named baseline for reporting parity.
pub fn smoothed_targets(
    labels: &[usize],
    base_predictions: &[ProbabilityVector],
    alpha: f64,
) -> Result<Vec<Vec<f64>>> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidArgument {
            name: "alpha",
            reason: format!("{alpha} outside [0, 1]"),
        });
    }
    distilled_targets(labels, base_predictions, &DistillConfig { lambda: 1.0 - alpha })
}

/// Deterministic mixup stream: each epoch pairs the data with one shuffled
/// copy of itself, and each mini-batch draws its own coefficient
/// λ_mix ~ Beta(α, α) applied to features and targets alike.
pub struct MixupStream {
    data: SoftTargetBatch,
    cfg: MixupConfig,
    batch_size: usize,
    seed: u64,
}

impl MixupStream {
    pub fn new(data: SoftTargetBatch, cfg: MixupConfig, batch_size: usize, seed: u64) -> Result<Self> {
        if data.len() < 2 {
            return Err(Error::SampleTooSmall { needed: 2, got: data.len() });
        }
        if batch_size == 0 {
            return Err(Error::InvalidArgument {
                name: "batch_size",
                reason: "must be at least 1".into(),
            });
        }
        Ok(Self { data, cfg, batch_size, seed })
    }
}

/// λ·row(i) + (1−λ)·row(partner), applied to features and targets with the
/// same coefficient.
fn mix_rows(data: &SoftTargetBatch, rows: &[usize], partners: &[usize], lambda: f64) -> Result<SoftTargetBatch> {
    let mut features = Vec::with_capacity(rows.len());
    let mut targets = Vec::with_capacity(rows.len());
    for &i in rows {
        let j = partners[i];
        features.push(
            data.features()[i]
                .iter()
                .zip(&data.features()[j])
                .map(|(&a, &b)| lambda * a + (1.0 - lambda) * b)
                .collect(),
        );
        targets.push(
            data.targets()[i]
                .iter()
                .zip(&data.targets()[j])
                .map(|(&a, &b)| lambda * a + (1.0 - lambda) * b)
                .collect(),
        );
    }
    SoftTargetBatch::new(features, targets)
}

impl BatchProvider for MixupStream {
    fn epoch_batches(&mut self, epoch: usize) -> Result<Vec<SoftTargetBatch>> {
        let n = self.data.len();
        let mut rng = seeds::rng(self.seed, &[0x317u64, epoch as u64]);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let mut partners: Vec<usize> = (0..n).collect();
        partners.shuffle(&mut rng);
        let beta = Beta::new(self.cfg.alpha, self.cfg.alpha).map_err(|e| Error::InvalidArgument {
            name: "alpha",
            reason: e.to_string(),
        })?;
        order
            .chunks(self.batch_size)
            .map(|chunk| {
                let lambda = beta.sample(&mut rng);
                mix_rows(&self.data, chunk, &partners, lambda)
            })
            .collect()
    }
}

/// Train with mixup batches built from one-hot labels.
#[allow(clippy::too_many_arguments)]
pub fn mixup_train(
    init: &MlpModel,
    features: Vec<Vec<f64>>,
    labels: &[usize],
    num_classes: usize,
    validation: &SoftTargetBatch,
    cfg: &MixupConfig,
    train_cfg: &TrainConfig,
    phi: &Scoring,
) -> Result<TrainOutcome> {
    let data = SoftTargetBatch::from_labels(features, labels, num_classes)?;
    let mut stream = MixupStream::new(data, *cfg, train_cfg.batch_size, train_cfg.seed)?;
    nn::train_with_provider(init, &mut stream, validation, train_cfg, phi)
}

/// Joint training of two models; each model's per-step loss is
/// (1−a)·loss on the true labels + a·divergence toward the other model's
/// current predictions, with a = 0 during warmup.
///
/// Early stopping monitors model A's validation loss; model A is returned.
/// With `alpha = 0` this reproduces [`nn::train`] exactly, mini-batch for
/// mini-batch.
pub fn co_distill_train(
    model_a_init: &MlpModel,
    model_b_init: &MlpModel,
    data: &SoftTargetBatch,
    validation: &SoftTargetBatch,
    cfg: &CoDistillConfig,
    train_cfg: &TrainConfig,
    phi: &Scoring,
) -> Result<TrainOutcome> {
    if model_a_init.dims() != model_b_init.dims() {
        return Err(Error::DimensionMismatch {
            expected: model_a_init.params().len(),
            got: model_b_init.params().len(),
        });
    }
    if validation.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut a = model_a_init.clone();
    let mut b = model_b_init.clone();
    let mut adam_a = Adam::new(a.params().len(), train_cfg);
    let mut adam_b = Adam::new(b.params().len(), train_cfg);

    let mut best_params = a.params().to_vec();
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0usize;
    let mut bad_epochs = 0usize;
    let mut epochs_run = 0usize;
    let mut global_step = 0usize;

    for epoch in 1..=train_cfg.max_epochs {
        epochs_run = epoch;
        let order = nn::shuffled_indices(train_cfg.seed, epoch, data.len());
        for chunk in order.chunks(train_cfg.batch_size) {
            let batch = data.gather(chunk);
            let coupling = if global_step >= cfg.warmup_steps { cfg.alpha } else { 0.0 };

            let (loss_a, grad_a) = loss_and_gradient(&a, &batch, phi)?;
            let (loss_b, grad_b) = loss_and_gradient(&b, &batch, phi)?;
            let (step_loss_a, ga, gb);
            if coupling > 0.0 {
                let preds_a = a.forward(batch.features())?;
                let preds_b = b.forward(batch.features())?;
                let rows_a: Vec<Vec<f64>> = preds_a.iter().map(|p| p.values().to_vec()).collect();
                let rows_b: Vec<Vec<f64>> = preds_b.iter().map(|p| p.values().to_vec()).collect();
                let toward_b = SoftTargetBatch::new(batch.features().to_vec(), rows_b.clone())?;
                let toward_a = SoftTargetBatch::new(batch.features().to_vec(), rows_a.clone())?;
                let (_, cgrad_a) = loss_and_gradient(&a, &toward_b, phi)?;
                let (_, cgrad_b) = loss_and_gradient(&b, &toward_a, phi)?;
                let div_a: f64 = rows_b
                    .iter()
                    .zip(&rows_a)
                    .map(|(gb_row, ha_row)| divergence_rows(phi, gb_row, ha_row))
                    .sum::<f64>()
                    / rows_a.len() as f64;
                step_loss_a = (1.0 - coupling) * loss_a + coupling * div_a;
                ga = combine(&grad_a, &cgrad_a, coupling);
                gb = combine(&grad_b, &cgrad_b, coupling);
            } else {
                step_loss_a = loss_a;
                let _ = loss_b;
                ga = grad_a;
                gb = grad_b;
            }
            if !step_loss_a.is_finite() {
                return Err(Error::TrainingDiverged { epoch });
            }
            adam_a.step(a.params_mut(), &ga);
            adam_b.step(b.params_mut(), &gb);
            global_step += 1;
        }
        let val = nn::batch_loss(&a, validation, phi)?;
        if !val.is_finite() {
            return Err(Error::TrainingDiverged { epoch });
        }
        if val < best_val {
            best_val = val;
            best_params = a.params().to_vec();
            best_epoch = epoch;
            bad_epochs = 0;
        } else {
            bad_epochs += 1;
            if bad_epochs >= train_cfg.patience {
                break;
            }
        }
    }

    let model = MlpModel::from_params(a.dims(), best_params)?;
    let best_validation_loss = if epochs_run == 0 {
        nn::batch_loss(&model, validation, phi)?
    } else {
        best_val
    };
    Ok(TrainOutcome {
        model,
        best_validation_loss,
        best_epoch,
        epochs_run,
    })
}

fn combine(label_grad: &[f64], coupling_grad: &[f64], a: f64) -> Vec<f64> {
    label_grad
        .iter()
        .zip(coupling_grad)
        .map(|(&g, &c)| (1.0 - a) * g + a * c)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{batch_loss, init_cold, ModelDims};
    use crate::simplex::{empirical_churn, empirical_risk};
    use rand::Rng;

    fn pv(values: &[f64]) -> ProbabilityVector {
        ProbabilityVector::new(values.to_vec()).unwrap()
    }

    #[test]
    fn distilled_target_examples() {
        let base = vec![pv(&[0.6, 0.4])];
        let one_hot = distilled_targets(&[0], &base, &DistillConfig::new(1.0).unwrap()).unwrap();
        assert_eq!(one_hot[0], vec![1.0, 0.0]);
        let teacher = distilled_targets(&[0], &base, &DistillConfig::new(0.0).unwrap()).unwrap();
        assert_eq!(teacher[0], vec![0.6, 0.4]);
        let mixed = distilled_targets(&[0], &base, &DistillConfig::new(0.5).unwrap()).unwrap();
        assert!((mixed[0][0] - 0.8).abs() < 1e-15);
        assert!((mixed[0][1] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn anchor_target_examples() {
        let params = AnchorParams::new(0.0, 1.0).unwrap();
        // Base agrees everywhere, α=0 → one-hot rows.
        let rows = anchor_targets(&[0], &[pv(&[0.9, 0.1])], &params).unwrap();
        assert_eq!(rows[0], vec![1.0, 0.0]);
        // Base disagrees, η=1 → plain one-hot.
        let rows = anchor_targets(&[0], &[pv(&[0.3, 0.7])], &params).unwrap();
        assert_eq!(rows[0], vec![1.0, 0.0]);
        // Base disagrees, η=0.5 → η-scaled one-hot, not renormalized.
        let params = AnchorParams::new(0.3, 0.5).unwrap();
        let rows = anchor_targets(&[0], &[pv(&[0.3, 0.7])], &params).unwrap();
        assert_eq!(rows[0], vec![0.5, 0.0]);
        // Agreement rows match (1−α)-smoothed distillation.
        let g = pv(&[0.8, 0.2]);
        let anchor = anchor_targets(&[0], std::slice::from_ref(&g), &params).unwrap();
        let smooth = smoothed_targets(&[0], &[g], params.alpha).unwrap();
        for (a, s) in anchor[0].iter().zip(&smooth[0]) {
            assert!((a - s).abs() < 1e-15);
        }
    }

    #[test]
    fn smoothing_is_distillation_with_flipped_weight() {
        let mut rng = seeds::rng(2, &[]);
        for _ in 0..10 {
            let raw: Vec<f64> = (0..3).map(|_| rng.random::<f64>() + 0.01).collect();
            let sum: f64 = raw.iter().sum();
            let g = pv(&raw.iter().map(|&r| r / sum).collect::<Vec<_>>());
            let alpha: f64 = rng.random();
            let y = rng.random_range(0..3);
            let s = smoothed_targets(&[y], std::slice::from_ref(&g), alpha).unwrap();
            let d =
                distilled_targets(&[y], &[g], &DistillConfig::new(1.0 - alpha).unwrap()).unwrap();
            assert_eq!(s, d);
        }
    }

    #[test]
    fn target_rows_stay_in_their_domains() {
        let mut rng = seeds::rng(3, &[]);
        for _ in 0..20 {
            let raw: Vec<f64> = (0..4).map(|_| rng.random::<f64>() + 0.01).collect();
            let sum: f64 = raw.iter().sum();
            let g = pv(&raw.iter().map(|&r| r / sum).collect::<Vec<_>>());
            let y = rng.random_range(0..4);
            let d = distilled_targets(&[y], std::slice::from_ref(&g), &DistillConfig::new(rng.random()).unwrap())
                .unwrap();
            let dsum: f64 = d[0].iter().sum();
            assert!((dsum - 1.0).abs() < 1e-12 && d[0].iter().all(|&v| v >= 0.0));
            let params = AnchorParams::new(rng.random(), rng.random()).unwrap();
            let a = anchor_targets(&[y], &[g], &params).unwrap();
            let asum: f64 = a[0].iter().sum();
            assert!(asum <= 1.0 + 1e-12 && a[0].iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn mixup_identity_and_half_mix() {
        let features = vec![vec![0.0, 1.0], vec![2.0, 3.0]];
        let data = SoftTargetBatch::from_labels(features, &[0, 1], 2).unwrap();
        // λ_mix = 1 leaves the batch untouched regardless of partners.
        let full = mix_rows(&data, &[0, 1], &[1, 0], 1.0).unwrap();
        assert_eq!(full.features(), data.features());
        assert_eq!(full.targets(), data.targets());
        // λ_mix = 0.5 across different classes gives the (0.5, 0.5) target.
        let half = mix_rows(&data, &[0], &[1, 0], 0.5).unwrap();
        assert_eq!(half.targets()[0], vec![0.5, 0.5]);
        assert_eq!(half.features()[0], vec![1.0, 2.0]);
    }

    #[test]
    fn mixup_stream_is_deterministic() {
        let mut rng = seeds::rng(4, &[]);
        let features: Vec<Vec<f64>> = (0..16)
            .map(|_| (0..3).map(|_| rng.random::<f64>()).collect())
            .collect();
        let labels: Vec<usize> = (0..16).map(|i| i % 2).collect();
        let data = SoftTargetBatch::from_labels(features, &labels, 2).unwrap();
        let cfg = MixupConfig::new(0.4).unwrap();
        let mut s1 = MixupStream::new(data.clone(), cfg, 4, 9).unwrap();
        let mut s2 = MixupStream::new(data, cfg, 4, 9).unwrap();
        for epoch in 1..=3 {
            let b1 = s1.epoch_batches(epoch).unwrap();
            let b2 = s2.epoch_batches(epoch).unwrap();
            assert_eq!(b1.len(), b2.len());
            for (x, y) in b1.iter().zip(&b2) {
                assert_eq!(x.features(), y.features());
                assert_eq!(x.targets(), y.targets());
            }
        }
    }

    #[test]
    fn distillation_loss_decomposes_into_risk_and_churn() {
        // L̂_λ(h) − [λ·R̂(h) + (1−λ)·Ĉ(h)] must be the same constant for any
        // model h, equal to (1−λ)·mean(g·φ(g)).
        let mut rng = seeds::rng(6, &[]);
        let dims = ModelDims::new(4, 6, 3).unwrap();
        let features: Vec<Vec<f64>> = (0..30)
            .map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let labels: Vec<usize> = (0..30).map(|_| rng.random_range(0..3)).collect();
        let base = init_cold(dims, 100);
        let base_preds = base.forward(&features).unwrap();
        let lambda = 0.35;
        let rows =
            distilled_targets(&labels, &base_preds, &DistillConfig::new(lambda).unwrap()).unwrap();
        let batch = SoftTargetBatch::new(features.clone(), rows).unwrap();

        for phi in [Scoring::cross_entropy(), Scoring::brier()] {
            let constant: f64 = base_preds
                .iter()
                .map(|g| phi.weighted_score(g.values(), g.values()))
                .sum::<f64>()
                / features.len() as f64;
            let mut diffs = Vec::new();
            for seed in 0..10 {
                let h = init_cold(dims, 200 + seed);
                let preds = h.forward(&features).unwrap();
                let loss = batch_loss(&h, &batch, &phi).unwrap();
                let risk = empirical_risk(&phi, &preds, &labels).unwrap();
                let churn = empirical_churn(&phi, &base_preds, &preds).unwrap();
                diffs.push(loss - lambda * risk - (1.0 - lambda) * churn);
            }
            let spread = diffs.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                - diffs.iter().cloned().fold(f64::INFINITY, f64::min);
            assert!(spread < 1e-9, "decomposition residual varies by {spread}");
            assert!((diffs[0] - (1.0 - lambda) * constant).abs() < 1e-9);
        }
    }

    fn toy_problem(seed: u64) -> (SoftTargetBatch, SoftTargetBatch) {
        let mut rng = seeds::rng(seed, &[8]);
        let features: Vec<Vec<f64>> = (0..48)
            .map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let labels: Vec<usize> = features
            .iter()
            .map(|x| usize::from(x[0] + 0.3 * x[1] > 0.0))
            .collect();
        let data = SoftTargetBatch::from_labels(features, &labels, 2).unwrap();
        let val = data.gather(&(0..12).collect::<Vec<_>>());
        (data, val)
    }

    #[test]
    fn codistill_with_zero_alpha_matches_plain_training() {
        let (data, val) = toy_problem(11);
        let dims = ModelDims::new(3, 5, 2).unwrap();
        let cfg = TrainConfig {
            max_epochs: 8,
            ..TrainConfig::default()
        }
        .with_seed(21);
        let phi = Scoring::cross_entropy();
        let a_init = init_cold(dims, 1);
        let b_init = init_cold(dims, 2);
        let plain = nn::train(&a_init, &data, &val, &cfg, &phi).unwrap();
        let co = co_distill_train(
            &a_init,
            &b_init,
            &data,
            &val,
            &CoDistillConfig::new(0.0, 0).unwrap(),
            &cfg,
            &phi,
        )
        .unwrap();
        assert_eq!(plain.model.params(), co.model.params());
        // Warmup longer than the whole run behaves the same way.
        let warm = co_distill_train(
            &a_init,
            &b_init,
            &data,
            &val,
            &CoDistillConfig::new(0.7, 10_000).unwrap(),
            &cfg,
            &phi,
        )
        .unwrap();
        assert_eq!(plain.model.params(), warm.model.params());
    }

    #[test]
    fn codistill_identical_inits_stay_identical_under_full_coupling() {
        let (data, val) = toy_problem(12);
        let dims = ModelDims::new(3, 5, 2).unwrap();
        let cfg = TrainConfig {
            max_epochs: 5,
            patience: 2,
            ..TrainConfig::default()
        }
        .with_seed(22);
        let init = init_cold(dims, 3);
        let out = co_distill_train(
            &init,
            &init,
            &data,
            &val,
            &CoDistillConfig::new(1.0, 0).unwrap(),
            &cfg,
            &Scoring::cross_entropy(),
        )
        .unwrap();
        // Pure mutual agreement between identical models is stationary.
        let worst = out
            .model
            .params()
            .iter()
            .zip(init.params())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(worst < 1e-9);
    }
}
