//! Synthetic data distributions with exactly known class probabilities.
//!
//! The quantities the closed-form results talk about — the true conditional
//! class probabilities p(x) and the base model g(x) — are unobservable on
//! real data. These generators make them exact: a linear-softmax ground
//! truth or a Gaussian-blob posterior, paired with a (usually perturbed)
//! base model and a deterministic feature sampler.

use crate::error::{Error, Result};
use crate::seeds;
use crate::simplex::ProbabilityVector;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Softmax of a linear map: p(x) = softmax(Wx + b).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearSoftmax {
    /// One row of coefficients per class.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
}

impl LinearSoftmax {
    pub fn random(dims: usize, classes: usize, scale: f64, rng: &mut ChaCha8Rng) -> Self {
        let weights = (0..classes)
            .map(|_| (0..dims).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect())
            .collect();
        let biases = (0..classes)
            .map(|_| 0.5 * scale * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Self { weights, biases }
    }

    /// A copy with independent Gaussian noise of the given scale added to
    /// every coefficient.
    pub fn perturbed(&self, noise: f64, rng: &mut ChaCha8Rng) -> Self {
        let weights = self
            .weights
            .iter()
            .map(|row| {
                row.iter()
                    .map(|&w| w + noise * rng.sample::<f64, _>(StandardNormal))
                    .collect()
            })
            .collect();
        let biases = self
            .biases
            .iter()
            .map(|&b| b + noise * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Self { weights, biases }
    }

    pub fn eval(&self, x: &[f64]) -> ProbabilityVector {
        let logits: Vec<f64> = self
            .weights
            .iter()
            .zip(&self.biases)
            .map(|(row, &b)| b + row.iter().zip(x).map(|(&w, &xi)| w * xi).sum::<f64>())
            .collect();
        softmax(&logits)
    }
}

/// An isotropic Gaussian mixture; doubles as a feature sampler and as the
/// exact posterior p(class | x).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlobModel {
    pub centers: Vec<Vec<f64>>,
    pub sigma: f64,
    pub priors: Vec<f64>,
}

impl BlobModel {
    /// Bayes posterior over components given a point.
    pub fn posterior(&self, x: &[f64]) -> ProbabilityVector {
        let logs: Vec<f64> = self
            .centers
            .iter()
            .zip(&self.priors)
            .map(|(c, &prior)| {
                let sq: f64 = c.iter().zip(x).map(|(&ci, &xi)| (ci - xi) * (ci - xi)).sum();
                prior.ln() - sq / (2.0 * self.sigma * self.sigma)
            })
            .collect();
        softmax(&logs)
    }

    fn sample_point(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut component = self.centers.len() - 1;
        for (i, &p) in self.priors.iter().enumerate() {
            acc += p;
            if u < acc {
                component = i;
                break;
            }
        }
        self.centers[component]
            .iter()
            .map(|&c| c + self.sigma * rng.sample::<f64, _>(StandardNormal))
            .collect()
    }
}

fn softmax(logits: &[f64]) -> ProbabilityVector {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    ProbabilityVector::new(exps.into_iter().map(|e| e / sum).collect())
        .expect("softmax output is a valid probability vector")
}

/// A conditional-probability model x ↦ Δ_m.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum CondModel {
    Linear(LinearSoftmax),
    Blobs(BlobModel),
}

impl CondModel {
    pub fn eval(&self, x: &[f64]) -> ProbabilityVector {
        match self {
            CondModel::Linear(m) => m.eval(x),
            CondModel::Blobs(m) => m.posterior(x),
        }
    }

    pub fn num_classes(&self) -> usize {
        match self {
            CondModel::Linear(m) => m.weights.len(),
            CondModel::Blobs(m) => m.centers.len(),
        }
    }
}

/// Marginal distribution of the features.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum FeatureSampler {
    /// x ~ N(0, I_d).
    Gaussian { dims: usize },
    /// x ~ the blob mixture itself.
    Blobs(BlobModel),
}

impl FeatureSampler {
    fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        match self {
            FeatureSampler::Gaussian { dims } => {
                (0..*dims).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
            }
            FeatureSampler::Blobs(b) => b.sample_point(rng),
        }
    }

    pub fn dims(&self) -> usize {
        match self {
            FeatureSampler::Gaussian { dims } => *dims,
            FeatureSampler::Blobs(b) => b.centers[0].len(),
        }
    }
}

/// A fully specified synthetic task: true p(x), base g(x), and the feature
/// marginal, all deterministic given the seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticDistribution {
    true_model: CondModel,
    base_model: CondModel,
    sampler: FeatureSampler,
    seed: u64,
}

impl SyntheticDistribution {
    pub fn new(
        true_model: CondModel,
        base_model: CondModel,
        sampler: FeatureSampler,
        seed: u64,
    ) -> Result<Self> {
        if true_model.num_classes() != base_model.num_classes() {
            return Err(Error::DimensionMismatch {
                expected: true_model.num_classes(),
                got: base_model.num_classes(),
            });
        }
        Ok(Self { true_model, base_model, sampler, seed })
    }

    /// The true conditional class probabilities p(x).
    pub fn class_probability(&self, x: &[f64]) -> ProbabilityVector {
        self.true_model.eval(x)
    }

    /// The base model's prediction g(x).
    pub fn base_probability(&self, x: &[f64]) -> ProbabilityVector {
        self.base_model.eval(x)
    }

    pub fn num_classes(&self) -> usize {
        self.true_model.num_classes()
    }

    pub fn feature_dim(&self) -> usize {
        self.sampler.dims()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Replace the base model, e.g. with the true model to realize g ≡ p.
    pub fn with_base(mut self, base: CondModel) -> Result<Self> {
        if base.num_classes() != self.true_model.num_classes() {
            return Err(Error::DimensionMismatch {
                expected: self.true_model.num_classes(),
                got: base.num_classes(),
            });
        }
        self.base_model = base;
        Ok(self)
    }

    pub fn true_model(&self) -> &CondModel {
        &self.true_model
    }

    /// Draw `n` feature vectors from the marginal; same seed, same sample.
    pub fn sample_features(&self, n: usize, salt: u64) -> Vec<Vec<f64>> {
        let mut rng = seeds::rng(self.seed, &[0x5EA7, salt]);
        (0..n).map(|_| self.sampler.sample(&mut rng)).collect()
    }

    /// Draw a label from p(x) using the provided stream.
    pub fn sample_label(&self, x: &[f64], rng: &mut ChaCha8Rng) -> usize {
        let p = self.class_probability(x);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, &pi) in p.values().iter().enumerate() {
            acc += pi;
            if u < acc {
                return i;
            }
        }
        p.dim() - 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_softmax_rows_are_probabilities() {
        let mut rng = seeds::rng(3, &[]);
        let m = LinearSoftmax::random(4, 3, 1.0, &mut rng);
        let p = m.eval(&[0.1, -0.2, 0.3, 0.0]);
        let sum: f64 = p.values().iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
        assert_eq!(p.dim(), 3);
    }

    #[test]
    fn blob_posterior_peaks_at_center() {
        let blob = BlobModel {
            centers: vec![vec![-3.0, 0.0], vec![3.0, 0.0]],
            sigma: 1.0,
            priors: vec![0.5, 0.5],
        };
        let p = blob.posterior(&[-3.0, 0.0]);
        assert!(p.values()[0] > 0.99);
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let mut rng = seeds::rng(11, &[]);
        let truth = CondModel::Linear(LinearSoftmax::random(3, 2, 1.0, &mut rng));
        let base = truth.clone();
        let dist = SyntheticDistribution::new(
            truth,
            base,
            FeatureSampler::Gaussian { dims: 3 },
            11,
        )
        .unwrap();
        assert_eq!(dist.sample_features(5, 0), dist.sample_features(5, 0));
        assert_ne!(dist.sample_features(5, 0), dist.sample_features(5, 1));
    }
}
