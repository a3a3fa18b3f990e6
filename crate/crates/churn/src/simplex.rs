//! Simplex arithmetic, strictly proper scoring functions, and the empirical
//! risk / churn estimators built on them.
//!
//! The scoring function φ maps a probability vector to a per-class score
//! vector. The induced loss and divergence are
//!
//! ```text
//! loss(y, v)  = φ_y(v)
//! d(u, v)     = Σ_y u_y (φ_y(v) − φ_y(u))
//! ```
//!
//! For cross-entropy, `d` is the KL divergence KL(u‖v); for the Brier score
//! it is the squared L2 distance ‖u−v‖₂². Both φ are strictly proper: the
//! weighted score u·φ(v) is uniquely minimized over the simplex at v = u,
//! which makes `d` non-negative and zero only at u = v.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Largest tolerated deviation of an input's sum from 1 before construction
/// rejects it instead of renormalizing.
const SUM_SLACK: f64 = 1e-6;

/// A point on the (m−1)-simplex: non-negative entries summing to one.
///
/// Construction renormalizes inputs whose sum is within `1e-6` of one and
/// rejects anything further off, so softmax round-off passes through while
/// genuinely malformed vectors fail loudly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityVector {
    values: Vec<f64>,
}

impl ProbabilityVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidProbability(format!(
                "need at least 2 classes, got {}",
                values.len()
            )));
        }
        let mut sum = 0.0;
        for (i, &v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::InvalidProbability(format!(
                    "entry {i} is not finite: {v}"
                )));
            }
            if v < 0.0 {
                return Err(Error::InvalidProbability(format!(
                    "entry {i} is negative: {v}"
                )));
            }
            sum += v;
        }
        if (sum - 1.0).abs() > SUM_SLACK {
            return Err(Error::InvalidProbability(format!(
                "entries sum to {sum}, outside 1 ± {SUM_SLACK}"
            )));
        }
        let values = values.into_iter().map(|v| v / sum).collect();
        Ok(Self { values })
    }

    /// Wrap entries that are already normalized (e.g. a convex combination
    /// of probability vectors) without touching their bits.
    pub(crate) fn from_normalized(values: Vec<f64>) -> Self {
        debug_assert!(values.len() >= 2);
        debug_assert!((values.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        debug_assert!(values.iter().all(|&v| v >= 0.0));
        Self { values }
    }

    /// Uniform distribution over `m` classes.
    pub fn uniform(m: usize) -> Self {
        debug_assert!(m >= 2);
        Self {
            values: vec![1.0 / m as f64; m],
        }
    }

    /// One-hot indicator e_y.
    pub fn one_hot(m: usize, class: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidProbability(format!(
                "need at least 2 classes, got {m}"
            )));
        }
        if class >= m {
            return Err(Error::LabelOutOfRange { label: class, classes: m });
        }
        let mut values = vec![0.0; m];
        values[class] = 1.0;
        Ok(Self { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Hard prediction: argmax with ties broken toward the larger class index.
    pub fn hard_label(&self) -> usize {
        argmax_tie_larger(&self.values)
    }

    /// Convex combination `w·self + (1−w)·other`.
    pub fn mix(&self, other: &Self, w: f64) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: other.dim(),
            });
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| w * a + (1.0 - w) * b)
            .collect();
        Ok(Self { values })
    }

    pub fn l1_distance(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| (a - b).abs())
            .sum()
    }
}

/// Argmax over a slice with ties broken in favor of the larger index.
pub fn argmax_tie_larger(values: &[f64]) -> usize {
    let mut best = 0usize;
    for (i, &v) in values.iter().enumerate() {
        if v >= values[best] {
            best = i;
        }
    }
    best
}

/// The allowed limit ε on expected soft churn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChurnBudget {
    epsilon: f64,
}

impl ChurnBudget {
    pub fn new(epsilon: f64) -> Result<Self> {
        if epsilon <= 0.0 || !epsilon.is_finite() {
            return Err(Error::InvalidArgument {
                name: "epsilon",
                reason: format!("{epsilon} must be a positive real"),
            });
        }
        Ok(Self { epsilon })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
}

/// Which norm a scoring function's curvature constant refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GapNorm {
    L1,
    L2,
}

/// A strictly proper scoring function φ: Δ_m → R₊^m.
///
/// `CrossEntropy` clips its argument at `clip_floor` so scores stay bounded
/// by `B = −ln(clip_floor)`; `Brier` is bounded by `B = 2` on the simplex.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scoring {
    CrossEntropy { clip_floor: f64 },
    Brier,
}

impl Scoring {
    /// Cross-entropy with the default clip floor of 1e-12.
    pub fn cross_entropy() -> Self {
        Scoring::CrossEntropy { clip_floor: 1e-12 }
    }

    pub fn brier() -> Self {
        Scoring::Brier
    }

    /// φ_y(v).
    pub fn score_entry(&self, y: usize, v: &[f64]) -> f64 {
        match *self {
            Scoring::CrossEntropy { clip_floor } => -v[y].max(clip_floor).ln(),
            Scoring::Brier => v
                .iter()
                .enumerate()
                .map(|(i, &vi)| {
                    let target = if i == y { 1.0 } else { 0.0 };
                    (target - vi) * (target - vi)
                })
                .sum(),
        }
    }

    /// The full score vector φ(v).
    pub fn score(&self, v: &[f64]) -> Vec<f64> {
        (0..v.len()).map(|y| self.score_entry(y, v)).collect()
    }

    /// Weighted score Σ_y w_y φ_y(v) for non-negative weights `w`.
    pub fn weighted_score(&self, w: &[f64], v: &[f64]) -> f64 {
        debug_assert_eq!(w.len(), v.len());
        match *self {
            Scoring::CrossEntropy { clip_floor } => w
                .iter()
                .zip(v)
                .map(|(&wy, &vy)| {
                    if wy == 0.0 {
                        0.0
                    } else {
                        -wy * vy.max(clip_floor).ln()
                    }
                })
                .sum(),
            Scoring::Brier => {
                // Σ_y w_y ( ‖v‖² − 2 v_y + 1 )
                let sq: f64 = v.iter().map(|&x| x * x).sum();
                let wsum: f64 = w.iter().sum();
                let dot: f64 = w.iter().zip(v).map(|(&wy, &vy)| wy * vy).sum();
                wsum * (sq + 1.0) - 2.0 * dot
            }
        }
    }

    /// Gradient of v ↦ Σ_y w_y φ_y(v).
    ///
    /// Where the cross-entropy clip is active the partial derivative is zero,
    /// matching the clipped score actually evaluated.
    pub fn weighted_gradient(&self, w: &[f64], v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(w.len(), v.len());
        match *self {
            Scoring::CrossEntropy { clip_floor } => w
                .iter()
                .zip(v)
                .map(|(&wy, &vy)| {
                    if wy == 0.0 || vy <= clip_floor {
                        0.0
                    } else {
                        -wy / vy
                    }
                })
                .collect(),
            Scoring::Brier => {
                let wsum: f64 = w.iter().sum();
                v.iter()
                    .zip(w)
                    .map(|(&vi, &wi)| 2.0 * (wsum * vi - wi))
                    .collect()
            }
        }
    }

    /// Upper bound B with ‖φ(v)‖_∞ ≤ B on the (clipped) simplex.
    pub fn bound(&self) -> f64 {
        match *self {
            Scoring::CrossEntropy { clip_floor } => -clip_floor.ln(),
            Scoring::Brier => 2.0,
        }
    }

    /// Strong-concavity constant α of u ↦ u·φ(u) and the norm it holds in:
    /// (1, L1) for cross-entropy, (2, L2) for Brier.
    pub fn concavity(&self) -> (f64, GapNorm) {
        match *self {
            Scoring::CrossEntropy { .. } => (1.0, GapNorm::L1),
            Scoring::Brier => (2.0, GapNorm::L2),
        }
    }

    /// Default Lipschitz constant of φ_y w.r.t. the L1 norm, used by the
    /// risk/churn bound when the caller does not supply one.
    pub fn default_lipschitz(&self) -> f64 {
        match *self {
            Scoring::CrossEntropy { clip_floor } => 1.0 / clip_floor,
            Scoring::Brier => 4.0,
        }
    }
}

/// φ_y(h): the per-example loss of predicting `h` when the label is `y`.
pub fn loss_phi(phi: &Scoring, y: usize, h: &ProbabilityVector) -> Result<f64> {
    if y >= h.dim() {
        return Err(Error::LabelOutOfRange { label: y, classes: h.dim() });
    }
    Ok(phi.score_entry(y, h.values()))
}

/// The divergence d(u, v) = Σ_y u_y (φ_y(v) − φ_y(u)).
pub fn divergence_phi(phi: &Scoring, u: &ProbabilityVector, v: &ProbabilityVector) -> Result<f64> {
    if u.dim() != v.dim() {
        return Err(Error::DimensionMismatch {
            expected: u.dim(),
            got: v.dim(),
        });
    }
    Ok(divergence_rows(phi, u.values(), v.values()))
}

/// Divergence on raw rows; callers guarantee both are probability rows of
/// equal length.
pub(crate) fn divergence_rows(phi: &Scoring, u: &[f64], v: &[f64]) -> f64 {
    phi.weighted_score(u, v) - phi.weighted_score(u, u)
}

/// Empirical risk R̂(h) = (1/n) Σ_i φ_{y_i}(h(x_i)).
pub fn empirical_risk(
    phi: &Scoring,
    h_predictions: &[ProbabilityVector],
    labels: &[usize],
) -> Result<f64> {
    if h_predictions.is_empty() {
        return Err(Error::EmptySample);
    }
    if h_predictions.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: h_predictions.len(),
            got: labels.len(),
        });
    }
    let mut total = 0.0;
    for (h, &y) in h_predictions.iter().zip(labels) {
        total += loss_phi(phi, y, h)?;
    }
    Ok(total / h_predictions.len() as f64)
}

/// Empirical churn Ĉ(h) = (1/n) Σ_i d(g(x_i), h(x_i)).
pub fn empirical_churn(
    phi: &Scoring,
    base_predictions: &[ProbabilityVector],
    h_predictions: &[ProbabilityVector],
) -> Result<f64> {
    if base_predictions.is_empty() {
        return Err(Error::EmptySample);
    }
    if base_predictions.len() != h_predictions.len() {
        return Err(Error::DimensionMismatch {
            expected: base_predictions.len(),
            got: h_predictions.len(),
        });
    }
    let mut total = 0.0;
    for (g, h) in base_predictions.iter().zip(h_predictions) {
        total += divergence_phi(phi, g, h)?;
    }
    Ok(total / base_predictions.len() as f64)
}

/// Fraction of examples whose hard prediction differs from the base model's,
/// with ties broken toward the larger class index on both sides.
pub fn hard_churn(
    base_predictions: &[ProbabilityVector],
    h_predictions: &[ProbabilityVector],
) -> Result<f64> {
    if base_predictions.is_empty() {
        return Err(Error::EmptySample);
    }
    if base_predictions.len() != h_predictions.len() {
        return Err(Error::DimensionMismatch {
            expected: base_predictions.len(),
            got: h_predictions.len(),
        });
    }
    let disagreements = base_predictions
        .iter()
        .zip(h_predictions)
        .filter(|(g, h)| g.hard_label() != h.hard_label())
        .count();
    Ok(disagreements as f64 / base_predictions.len() as f64)
}

/// Unbiased sample variance of the per-example losses {φ_{y_i}(h(x_i))}.
pub fn empirical_loss_variance(
    phi: &Scoring,
    h_predictions: &[ProbabilityVector],
    labels: &[usize],
) -> Result<f64> {
    let n = h_predictions.len();
    if n < 2 {
        return Err(Error::SampleTooSmall { needed: 2, got: n });
    }
    if n != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: labels.len(),
        });
    }
    let losses: Vec<f64> = h_predictions
        .iter()
        .zip(labels)
        .map(|(h, &y)| loss_phi(phi, y, h))
        .collect::<Result<_>>()?;
    let mean = losses.iter().sum::<f64>() / n as f64;
    let ss: f64 = losses.iter().map(|&l| (l - mean) * (l - mean)).sum();
    Ok(ss / (n - 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pv(values: &[f64]) -> ProbabilityVector {
        ProbabilityVector::new(values.to_vec()).unwrap()
    }

    #[test]
    fn construction_renormalizes_small_drift() {
        let p = ProbabilityVector::new(vec![0.5 + 4e-7, 0.5]).unwrap();
        let sum: f64 = p.values().iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
    }

    #[test]
    fn construction_rejects_garbage() {
        assert!(ProbabilityVector::new(vec![0.7, 0.7]).is_err());
        assert!(ProbabilityVector::new(vec![-0.1, 1.1]).is_err());
        assert!(ProbabilityVector::new(vec![1.0]).is_err());
        assert!(ProbabilityVector::new(vec![f64::NAN, 1.0]).is_err());
    }

    #[test]
    fn loss_examples() {
        let ce = Scoring::cross_entropy();
        let brier = Scoring::brier();
        assert_eq!(loss_phi(&ce, 0, &pv(&[1.0, 0.0])).unwrap(), 0.0);
        assert!((loss_phi(&brier, 0, &pv(&[0.5, 0.5])).unwrap() - 0.5).abs() < 1e-12);
        // Independent evaluation of −ln 0.75.
        let expected = -(0.75f64.ln());
        assert!((loss_phi(&ce, 1, &pv(&[0.25, 0.75])).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 0.287_682_072_451_780_9).abs() < 1e-12);
    }

    #[test]
    fn loss_rejects_out_of_range_label() {
        let ce = Scoring::cross_entropy();
        assert!(loss_phi(&ce, 2, &pv(&[0.5, 0.5])).is_err());
    }

    #[test]
    fn divergence_examples() {
        let ce = Scoring::cross_entropy();
        let brier = Scoring::brier();
        assert_eq!(
            divergence_phi(&ce, &pv(&[0.3, 0.7]), &pv(&[0.3, 0.7])).unwrap(),
            0.0
        );
        // KL((0.5,0.5) ‖ (0.25,0.75)) computed independently.
        let kl = 0.5 * (0.5f64 / 0.25).ln() + 0.5 * (0.5f64 / 0.75).ln();
        let d = divergence_phi(&ce, &pv(&[0.5, 0.5]), &pv(&[0.25, 0.75])).unwrap();
        assert!((d - kl).abs() < 1e-12);
        assert!((d - 0.143_841_036_225_890_5).abs() < 1e-12);
        // Squared-L2 form: ‖(1,0) − (0,1)‖₂² = 2.
        let d = divergence_phi(&brier, &pv(&[1.0, 0.0]), &pv(&[0.0, 1.0])).unwrap();
        assert!((d - 2.0).abs() < 1e-12);
    }

    #[test]
    fn divergence_rejects_dimension_mismatch() {
        let ce = Scoring::cross_entropy();
        let u = pv(&[0.5, 0.5]);
        let v = pv(&[0.3, 0.3, 0.4]);
        assert!(divergence_phi(&ce, &u, &v).is_err());
    }

    #[test]
    fn empirical_risk_examples() {
        let ce = Scoring::cross_entropy();
        let brier = Scoring::brier();
        assert_eq!(
            empirical_risk(&ce, &[pv(&[1.0, 0.0])], &[0]).unwrap(),
            0.0
        );
        let r = empirical_risk(&brier, &[pv(&[0.5, 0.5]), pv(&[0.5, 0.5])], &[0, 1]).unwrap();
        assert!((r - 0.5).abs() < 1e-12);
        // Hand average of {0.1, 0.2, 0.3} via predictions that realize them.
        let preds = [
            pv(&[(-0.1f64).exp(), 1.0 - (-0.1f64).exp()]),
            pv(&[(-0.2f64).exp(), 1.0 - (-0.2f64).exp()]),
            pv(&[(-0.3f64).exp(), 1.0 - (-0.3f64).exp()]),
        ];
        let r = empirical_risk(&ce, &preds, &[0, 0, 0]).unwrap();
        assert!((r - 0.2).abs() < 1e-12);
        assert!(empirical_risk(&ce, &[], &[]).is_err());
    }

    #[test]
    fn empirical_churn_examples() {
        let ce = Scoring::cross_entropy();
        let g = vec![pv(&[0.5, 0.5]), pv(&[0.2, 0.8])];
        assert_eq!(empirical_churn(&ce, &g, &g).unwrap(), 0.0);
        let kl = 0.5 * (0.5f64 / 0.25).ln() + 0.5 * (0.5f64 / 0.75).ln();
        let c = empirical_churn(&ce, &[pv(&[0.5, 0.5])], &[pv(&[0.25, 0.75])]).unwrap();
        assert!((c - kl).abs() < 1e-12);
        // One zero-divergence point, one at 0.2 → mean 0.1.
        let brier = Scoring::brier();
        let half_gap = (0.2f64 / 2.0).sqrt(); // ‖u−v‖₂² = 2·half_gap² = 0.2
        let g = vec![pv(&[0.5, 0.5]), pv(&[0.5, 0.5])];
        let h = vec![pv(&[0.5, 0.5]), pv(&[0.5 - half_gap, 0.5 + half_gap])];
        let c = empirical_churn(&brier, &g, &h).unwrap();
        assert!((c - 0.1).abs() < 1e-12);
    }

    #[test]
    fn hard_churn_examples() {
        let g = vec![pv(&[0.9, 0.1]), pv(&[0.2, 0.8])];
        assert_eq!(hard_churn(&g, &g).unwrap(), 0.0);
        let h = vec![pv(&[0.1, 0.9]), pv(&[0.2, 0.8])];
        assert_eq!(hard_churn(&g, &h).unwrap(), 0.5);
        // Exact ties resolve to the larger class on both sides: agreement.
        let tied = vec![pv(&[0.5, 0.5])];
        assert_eq!(hard_churn(&tied, &tied).unwrap(), 0.0);
        assert_eq!(tied[0].hard_label(), 1);
    }

    #[test]
    fn loss_variance_examples() {
        let ce = Scoring::cross_entropy();
        let constant = vec![pv(&[0.5, 0.5]), pv(&[0.5, 0.5]), pv(&[0.5, 0.5])];
        let v = empirical_loss_variance(&ce, &constant, &[0, 0, 0]).unwrap();
        assert!(v.abs() < 1e-15);
        // Losses {0, 1}: sample variance 0.5.
        let e1 = (-1.0f64).exp();
        let preds = vec![pv(&[1.0, 0.0]), pv(&[e1, 1.0 - e1])];
        let v = empirical_loss_variance(&ce, &preds, &[0, 0]).unwrap();
        assert!((v - 0.5).abs() < 1e-12);
        // Losses {0.1, 0.2, 0.3}: sample variance 0.01.
        let preds = vec![
            pv(&[(-0.1f64).exp(), 1.0 - (-0.1f64).exp()]),
            pv(&[(-0.2f64).exp(), 1.0 - (-0.2f64).exp()]),
            pv(&[(-0.3f64).exp(), 1.0 - (-0.3f64).exp()]),
        ];
        let v = empirical_loss_variance(&ce, &preds, &[0, 0, 0]).unwrap();
        assert!((v - 0.01).abs() < 1e-12);
        assert!(empirical_loss_variance(&ce, &preds[..1], &[0]).is_err());
    }

    #[test]
    fn bounds_hold_on_clipped_simplex() {
        let ce = Scoring::cross_entropy();
        let brier = Scoring::brier();
        for v in [&[1.0, 0.0][..], &[0.5, 0.5], &[0.0, 1.0]] {
            for y in 0..2 {
                assert!(ce.score_entry(y, v) <= ce.bound() + 1e-12);
                assert!(brier.score_entry(y, v) <= brier.bound() + 1e-12);
            }
        }
    }

    fn random_simplex(m: usize, raw: &[f64]) -> ProbabilityVector {
        // Map raw positives to a simplex point.
        let sum: f64 = raw[..m].iter().sum();
        ProbabilityVector::new(raw[..m].iter().map(|&r| r / sum).collect()).unwrap()
    }

    proptest! {
        #[test]
        fn divergence_non_negative(
            raw_u in proptest::collection::vec(1e-3..1.0f64, 4),
            raw_v in proptest::collection::vec(1e-3..1.0f64, 4),
            m in 2usize..=4,
        ) {
            let u = random_simplex(m, &raw_u);
            let v = random_simplex(m, &raw_v);
            for phi in [Scoring::cross_entropy(), Scoring::brier()] {
                let d = divergence_phi(&phi, &u, &v).unwrap();
                prop_assert!(d >= -1e-9);
                if u.l1_distance(&v) < 1e-12 {
                    prop_assert!(d.abs() < 1e-9);
                }
            }
        }

        #[test]
        fn brier_divergence_is_squared_l2(
            raw_u in proptest::collection::vec(1e-3..1.0f64, 5),
            raw_v in proptest::collection::vec(1e-3..1.0f64, 5),
            m in 2usize..=5,
        ) {
            let u = random_simplex(m, &raw_u);
            let v = random_simplex(m, &raw_v);
            let sq_l2: f64 = u
                .values()
                .iter()
                .zip(v.values())
                .map(|(&a, &b)| (a - b) * (a - b))
                .sum();
            let d = divergence_phi(&Scoring::brier(), &u, &v).unwrap();
            prop_assert!((d - sq_l2).abs() < 1e-12);
        }

        #[test]
        fn cross_entropy_divergence_is_kl(
            raw_u in proptest::collection::vec(1e-3..1.0f64, 4),
            raw_v in proptest::collection::vec(1e-3..1.0f64, 4),
            m in 2usize..=4,
        ) {
            let u = random_simplex(m, &raw_u);
            let v = random_simplex(m, &raw_v);
            let kl: f64 = u
                .values()
                .iter()
                .zip(v.values())
                .map(|(&a, &b)| if a == 0.0 { 0.0 } else { a * (a / b).ln() })
                .sum();
            let d = divergence_phi(&Scoring::cross_entropy(), &u, &v).unwrap();
            prop_assert!((d - kl).abs() < 1e-12);
        }

        #[test]
        fn weighted_score_midpoint_convexity(
            raw_u in proptest::collection::vec(1e-3..1.0f64, 4),
            raw_a in proptest::collection::vec(1e-3..1.0f64, 4),
            raw_b in proptest::collection::vec(1e-3..1.0f64, 4),
            m in 2usize..=4,
        ) {
            let u = random_simplex(m, &raw_u);
            let a = random_simplex(m, &raw_a);
            let b = random_simplex(m, &raw_b);
            let mid = a.mix(&b, 0.5).unwrap();
            for phi in [Scoring::cross_entropy(), Scoring::brier()] {
                let lhs = phi.weighted_score(u.values(), mid.values());
                let rhs = 0.5 * phi.weighted_score(u.values(), a.values())
                    + 0.5 * phi.weighted_score(u.values(), b.values());
                prop_assert!(lhs <= rhs + 1e-9);
            }
        }
    }
}
