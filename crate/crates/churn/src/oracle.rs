//! Independent ground truth: closed-form minimizers and brute-force grid
//! search, used to verify the trained pipeline rather than power it.
//!
//! Nothing here shares code with the training path. The brute-force
//! minimizer enumerates a simplex grid and polishes the best point with
//! projected gradient descent; the closed forms are direct evaluations of
//! the analytic minimizers.

use crate::error::{Error, Result};
use crate::simplex::{argmax_tie_larger, ProbabilityVector, Scoring};
use crate::synth::SyntheticDistribution;
use serde::{Deserialize, Serialize};

/// Hyper-parameters of the anchor loss.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AnchorParams {
    pub alpha: f64,
    pub eta: f64,
}

impl AnchorParams {
    pub fn new(alpha: f64, eta: f64) -> Result<Self> {
        for (name, v) in [("alpha", alpha), ("eta", eta)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidArgument {
                    name,
                    reason: format!("{v} outside [0, 1]"),
                });
            }
        }
        Ok(Self { alpha, eta })
    }
}

/// Euclidean projection of an arbitrary vector onto the probability simplex.
pub fn project_to_simplex(v: &[f64]) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).expect("finite entries"));
    let mut cumulative = 0.0;
    let mut threshold = 0.0;
    for (i, &u) in sorted.iter().enumerate() {
        cumulative += u;
        let t = (cumulative - 1.0) / (i + 1) as f64;
        if u - t > 0.0 {
            threshold = t;
        }
    }
    v.iter().map(|&x| (x - threshold).max(0.0)).collect()
}

fn validate_weight(weight: &[f64]) -> Result<()> {
    if weight.len() < 2 {
        return Err(Error::InvalidArgument {
            name: "weight",
            reason: format!("need at least 2 entries, got {}", weight.len()),
        });
    }
    let mut sum = 0.0;
    for &w in weight {
        if !w.is_finite() || w < 0.0 {
            return Err(Error::InvalidArgument {
                name: "weight",
                reason: format!("entries must be finite and non-negative, got {w}"),
            });
        }
        sum += w;
    }
    if sum == 0.0 {
        return Err(Error::InvalidArgument {
            name: "weight",
            reason: "entries are all zero".into(),
        });
    }
    Ok(())
}

/// Visit every point of the step-`1/k` grid on the (m−1)-simplex.
pub fn visit_simplex_grid(m: usize, k: usize, f: &mut dyn FnMut(&[f64])) {
    fn recurse(
        counts: &mut Vec<usize>,
        level: usize,
        remaining: usize,
        k: usize,
        f: &mut dyn FnMut(&[f64]),
    ) {
        if level == counts.len() - 1 {
            counts[level] = remaining;
            let point: Vec<f64> = counts.iter().map(|&c| c as f64 / k as f64).collect();
            f(&point);
            return;
        }
        for c in 0..=remaining {
            counts[level] = c;
            recurse(counts, level + 1, remaining - c, k, f);
        }
    }
    let mut counts = vec![0usize; m];
    recurse(&mut counts, 0, k, k, f);
}

/// Minimize v ↦ Σ_y weight_y φ_y(v) over the simplex by dense grid search
/// followed by 200 projected-gradient steps with backtracking.
///
/// The weights need not be normalized. Deterministic; errors for m > 6 with
/// a grid step below 0.02 (combinatorial blowup guard).
pub fn brute_force_pointwise_minimizer(
    phi: &Scoring,
    weight: &[f64],
    grid_step: f64,
) -> Result<ProbabilityVector> {
    validate_weight(weight)?;
    if !(grid_step > 0.0 && grid_step <= 0.1) {
        return Err(Error::InvalidArgument {
            name: "grid_step",
            reason: format!("{grid_step} outside (0, 0.1]"),
        });
    }
    let m = weight.len();
    if m > 6 && grid_step < 0.02 {
        return Err(Error::GridTooFine { classes: m, step: grid_step });
    }
    let k = (1.0 / grid_step).round().max(1.0) as usize;

    let mut best = vec![0.0; m];
    let mut best_value = f64::INFINITY;
    visit_simplex_grid(m, k, &mut |point| {
        let value = phi.weighted_score(weight, point);
        if value < best_value {
            best_value = value;
            best = point.to_vec();
        }
    });

    // Polish with projected gradient. The Armijo test uses the projected
    // direction (candidate − v), not the raw gradient: at a constrained
    // optimum only the tangential component vanishes.
    let mut v = best;
    let mut fv = best_value;
    let mut step = 1.0;
    for _ in 0..2000 {
        let grad = phi.weighted_gradient(weight, &v);
        let mut accepted = false;
        for _ in 0..80 {
            let candidate: Vec<f64> = v.iter().zip(&grad).map(|(&x, &g)| x - step * g).collect();
            let candidate = project_to_simplex(&candidate);
            let dir_deriv: f64 = grad
                .iter()
                .zip(candidate.iter().zip(&v))
                .map(|(&g, (&c, &x))| g * (c - x))
                .sum();
            let fc = phi.weighted_score(weight, &candidate);
            if dir_deriv < 0.0 && fc <= fv + 1e-4 * dir_deriv {
                let moved: f64 = candidate
                    .iter()
                    .zip(&v)
                    .map(|(&c, &x)| (c - x).abs())
                    .sum();
                v = candidate;
                fv = fc;
                step *= 2.0;
                accepted = moved > 1e-14;
                break;
            }
            step *= 0.5;
            if step < 1e-18 {
                break;
            }
        }
        if !accepted {
            break;
        }
    }
    ProbabilityVector::new(v)
}

/// The pointwise optimal-feasible classifier λ·p(x) + (1−λ)·g(x).
pub fn optimal_mixture_classifier(
    dist: &SyntheticDistribution,
    lambda: f64,
    x: &[f64],
) -> Result<ProbabilityVector> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidArgument {
            name: "lambda",
            reason: format!("{lambda} outside [0, 1]"),
        });
    }
    dist.class_probability(x)
        .mix(&dist.base_probability(x), lambda)
}

/// Closed-form minimizer of the anchor loss when the base model equals the
/// true class probabilities p.
///
/// With j the tie-broken argmax of p: z_j = α p_j² + (1−α) p_j, and
/// z_i = (η + α max_k p_k) p_i elsewhere; the minimizer is z normalized.
pub fn anchor_minimizer(p: &ProbabilityVector, params: &AnchorParams) -> ProbabilityVector {
    let values = p.values();
    let j = argmax_tie_larger(values);
    let p_max = values[j];
    let mut z: Vec<f64> = values
        .iter()
        .enumerate()
        .map(|(i, &pi)| {
            if i == j {
                params.alpha * pi * pi + (1.0 - params.alpha) * pi
            } else {
                (params.eta + params.alpha * p_max) * pi
            }
        })
        .collect();
    let sum: f64 = z.iter().sum();
    debug_assert!(sum > 0.0, "anchor weight mass vanished");
    for zi in &mut z {
        *zi /= sum;
    }
    ProbabilityVector::new(z).expect("normalized anchor minimizer is on the simplex")
}

/// The anchor loss's pointwise weight vector p̃ before normalization,
/// i.e. the expected label weights when the base model equals p. Exposed so
/// the closed form can be cross-checked by brute-force minimization.
pub fn anchor_ideal_weight(p: &ProbabilityVector, params: &AnchorParams) -> Vec<f64> {
    let values = p.values();
    let j = argmax_tie_larger(values);
    let p_max = values[j];
    values
        .iter()
        .enumerate()
        .map(|(i, &pi)| {
            if i == j {
                params.alpha * pi * pi + (1.0 - params.alpha) * pi
            } else {
                (params.eta + params.alpha * p_max) * pi
            }
        })
        .collect()
}

/// Upper bound on the optimal mixing coefficient:
/// λ* ≤ √(2ε / (α · E‖p−g‖_q²)), capped at 1.
///
/// α and q come from the scoring function's strong-concavity constant:
/// (1, L1) for cross-entropy, (2, L2) for Brier.
pub fn lambda_star_bound(phi: &Scoring, epsilon: f64, expected_gap: f64) -> Result<f64> {
    if epsilon <= 0.0 {
        return Err(Error::InvalidArgument {
            name: "epsilon",
            reason: format!("{epsilon} must be positive"),
        });
    }
    if expected_gap <= 0.0 {
        return Err(Error::InvalidArgument {
            name: "expected_gap",
            reason: format!("{expected_gap} must be positive; handle g ≡ p separately"),
        });
    }
    let (alpha, _) = phi.concavity();
    Ok((2.0 * epsilon / (alpha * expected_gap)).sqrt().min(1.0))
}

/// Upper bound on the excess risk R(ĥ) − R(h̃):
/// ε + Δ_C + (B + Φ·λ*) · E‖p−g‖₁.
///
/// `lipschitz_const` and `bound_b` default to the scoring function's shipped
/// constants when not supplied.
pub fn risk_churn_bound(
    phi: &Scoring,
    epsilon: f64,
    churn_gen_slack: f64,
    lambda_star: f64,
    expected_l1_gap: f64,
    lipschitz_const: Option<f64>,
    bound_b: Option<f64>,
) -> f64 {
    let lip = lipschitz_const.unwrap_or_else(|| phi.default_lipschitz());
    let b = bound_b.unwrap_or_else(|| phi.bound());
    epsilon + churn_gen_slack + (b + lip * lambda_star) * expected_l1_gap
}
