//! Cross-module verification: each check pits a trained or computed
//! artifact against an independent closed-form or brute-force computation
//! and records the worst deviation observed.
//!
//! Stochastic checks use fixed sample sizes with 3σ slacks, so a failure
//! indicates a bug rather than noise.

use crate::algorithm::{
    run_algorithm_one, AlgorithmMode, AlgorithmOneRun, LambdaGrid, SweepInit,
};
use crate::data::{make_synthetic, SyntheticKind};
use crate::error::{Error, Result};
use crate::nn::{self, init_cold, ModelDims, TrainConfig};
use crate::oracle::{anchor_minimizer, brute_force_pointwise_minimizer, lambda_star_bound, AnchorParams};
use crate::seeds;
use crate::simplex::{divergence_phi, empirical_churn, ChurnBudget, GapNorm, ProbabilityVector, Scoring};
use crate::synth::SyntheticDistribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Result of one verification check.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub pass: bool,
    /// Worst deviation observed; `pass` holds iff it is within `tolerance`.
    pub measured: f64,
    pub tolerance: f64,
    /// One-line statement of the contract being checked.
    pub contract: String,
    /// Extra reported-but-not-asserted quantities.
    pub note: Option<String>,
}

impl CheckOutcome {
    fn evaluated(name: &str, contract: &str, measured: f64, tolerance: f64) -> Self {
        Self {
            name: name.to_owned(),
            pass: measured <= tolerance,
            measured,
            tolerance,
            contract: contract.to_owned(),
            note: None,
        }
    }

    fn with_note(mut self, note: String) -> Self {
        self.note = Some(note);
        self
    }
}

fn random_interior_simplex(m: usize, rng: &mut rand_chacha::ChaCha8Rng) -> ProbabilityVector {
    let raw: Vec<f64> = (0..m).map(|_| rng.random::<f64>() + 0.05).collect();
    let sum: f64 = raw.iter().sum();
    ProbabilityVector::new(raw.into_iter().map(|v| v / sum).collect())
        .expect("normalized positives form a simplex point")
}

fn grid_step_for(m: usize) -> f64 {
    match m {
        2 | 3 => 0.01,
        _ => 0.02,
    }
}

/// For random (p, g, λ), the brute-force minimizer of
/// v ↦ (λp + (1−λ)g)·φ(v) must be the mixture λp + (1−λ)g itself.
pub fn check_distillation_pointwise(phi: &Scoring, trials: usize, seed: u64) -> Result<CheckOutcome> {
    if trials == 0 {
        return Err(Error::InvalidArgument {
            name: "trials",
            reason: "must be at least 1".into(),
        });
    }
    let mut rng = seeds::rng(seed, &[0xD011]);
    let mut worst = 0.0f64;
    for trial in 0..trials {
        let m = 2 + trial % 3;
        let p = random_interior_simplex(m, &mut rng);
        let g = random_interior_simplex(m, &mut rng);
        let lambda: f64 = rng.random();
        let mixture = p.mix(&g, lambda)?;
        let found = brute_force_pointwise_minimizer(phi, mixture.values(), grid_step_for(m))?;
        worst = worst.max(mixture.l1_distance(&found));
    }
    Ok(CheckOutcome::evaluated(
        "distillation-pointwise-minimizer",
        "pointwise minimizer of the mixture-weighted proper loss equals the mixture λp+(1−λ)g",
        worst,
        1e-3,
    ))
}

/// With α = η = 1 and a soft base prediction, the anchor loss's minimizer
/// must move away from p and strictly down-weight p's top class, while the
/// distillation minimizer stays at p.
pub fn check_anchor_bias(phi: &Scoring, trials: usize, seed: u64) -> Result<CheckOutcome> {
    if trials == 0 {
        return Err(Error::InvalidArgument {
            name: "trials",
            reason: "must be at least 1".into(),
        });
    }
    let params = AnchorParams::new(1.0, 1.0)?;
    let mut rng = seeds::rng(seed, &[0xA2C4]);
    let mut violations = 0usize;
    let mut min_gap = f64::INFINITY;
    for trial in 0..trials {
        let m = 2 + trial % 3;
        // Soft predictions only; hard base predictions are fixed points.
        let p = random_interior_simplex(m, &mut rng);
        let top = p.hard_label();
        let z = anchor_minimizer(&p, &params);
        let gap = p.l1_distance(&z);
        min_gap = min_gap.min(gap);
        let moved = gap > 1e-6;
        let down_weighted = z.values()[top] < p.values()[top];
        let distill = brute_force_pointwise_minimizer(phi, p.values(), grid_step_for(m))?;
        let distill_stays = p.l1_distance(&distill) <= 1e-3;
        if !(moved && down_weighted && distill_stays) {
            violations += 1;
        }
    }
    Ok(CheckOutcome::evaluated(
        "anchor-bias",
        "anchor minimizer departs from soft p and down-weights its top class; distillation minimizer stays at p",
        violations as f64,
        0.0,
    )
    .with_note(format!("smallest anchor gap {min_gap:.3e} (threshold 1e-6)")))
}

/// A feasible-flagged run must have training-sample soft churn within
/// ε + 1e-6; test churn is reported, not asserted.
pub fn check_feasibility_contract(
    run: &AlgorithmOneRun,
    phi: &Scoring,
    test_features: &[Vec<f64>],
) -> Result<CheckOutcome> {
    if !run.report.feasible {
        return Err(Error::InvalidArgument {
            name: "run",
            reason: "feasibility contract applies to feasible-flagged runs only".into(),
        });
    }
    let train_preds = run.training_predictions()?;
    let train_churn = empirical_churn(phi, run.sweep.cached_base(), &train_preds)?;
    let measured = train_churn - run.report.epsilon;

    let test_preds = run.predict(test_features)?;
    let base_test = run.sweep.base_model().forward(test_features)?;
    let test_churn = empirical_churn(phi, &base_test, &test_preds)?;

    Ok(CheckOutcome::evaluated(
        "feasibility-contract",
        "feasible-flagged runs keep training-sample churn within the budget ε",
        measured,
        1e-6,
    )
    .with_note(format!(
        "training churn {train_churn:.6}, ε {:.6}, test churn {test_churn:.6} (reported only)",
        run.report.epsilon
    )))
}

/// Monte-Carlo admissible-λ check of the mixing-coefficient bound: the
/// largest λ whose mixture churn stays within ε must satisfy
/// λ ≤ √(2ε/(α·E‖p−g‖_q²)) up to 3σ of Monte-Carlo error.
pub fn check_lambda_star_bound(
    dist: &SyntheticDistribution,
    phi: &Scoring,
    epsilon: f64,
    n_mc: usize,
    seed: u64,
) -> Result<CheckOutcome> {
    let contract = "largest budget-feasible mixing coefficient obeys λ ≤ √(2ε/(α·E‖p−g‖_q²))";
    let features = dist.sample_features(n_mc, seeds::derive(seed, &[0x10C]));
    let pairs: Vec<(ProbabilityVector, ProbabilityVector)> = features
        .iter()
        .map(|x| (dist.class_probability(x), dist.base_probability(x)))
        .collect();

    let (_, norm) = phi.concavity();
    let gaps: Vec<f64> = pairs
        .iter()
        .map(|(p, g)| match norm {
            GapNorm::L1 => {
                let d = p.l1_distance(g);
                d * d
            }
            GapNorm::L2 => p
                .values()
                .iter()
                .zip(g.values())
                .map(|(&a, &b)| (a - b) * (a - b))
                .sum(),
        })
        .collect();
    let gap_mean = gaps.iter().sum::<f64>() / n_mc as f64;
    if gap_mean < 1e-12 {
        let mut out = CheckOutcome::evaluated("lambda-star-bound", contract, 0.0, 0.0);
        out.note = Some("skipped: base model coincides with p on the sampled support".into());
        return Ok(out);
    }
    let gap_stderr = stderr_of_mean(&gaps);

    // Churn along the mixture path, on a 0.001 grid of λ.
    let churn_at = |lambda: f64| -> Result<(f64, f64)> {
        let mut samples = Vec::with_capacity(n_mc);
        for (p, g) in &pairs {
            let mix = p.mix(g, lambda)?;
            samples.push(divergence_phi(phi, g, &mix)?);
        }
        let mean = samples.iter().sum::<f64>() / n_mc as f64;
        Ok((mean, stderr_of_mean(&samples)))
    };

    let mut admissible = 0.0f64;
    let mut admissible_stderr = 0.0f64;
    for k in 0..=1000 {
        let lambda = k as f64 / 1000.0;
        let (c, se) = churn_at(lambda)?;
        if c <= epsilon {
            admissible = lambda;
            admissible_stderr = se;
        }
    }

    let bound = lambda_star_bound(phi, epsilon, gap_mean)?;

    // 3σ slack, propagated to λ units through the local churn slope and the
    // gap estimate.
    let delta = 0.01;
    let lo = (admissible - delta).max(0.0);
    let hi = (admissible + delta).min(1.0);
    let slope = ((churn_at(hi)?.0 - churn_at(lo)?.0) / (hi - lo)).max(1e-9);
    let slack_from_churn = 3.0 * admissible_stderr / slope;
    let slack_from_gap = 3.0 * gap_stderr * bound / (2.0 * gap_mean);
    let slack = slack_from_churn + slack_from_gap + 1e-3; // grid resolution

    Ok(CheckOutcome::evaluated(
        "lambda-star-bound",
        contract,
        admissible - bound,
        slack,
    )
    .with_note(format!(
        "admissible λ {admissible:.3}, bound {bound:.3}, ε {epsilon}, gap {gap_mean:.4}"
    )))
}

fn stderr_of_mean(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    if values.len() < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (var / n).sqrt()
}

/// Run every check at suite scale. Deterministic per seed; sized for a
/// single desktop core.
pub fn run_verification_suite(seed: u64) -> Result<Vec<CheckOutcome>> {
    let mut outcomes = Vec::new();
    let ce = Scoring::cross_entropy();
    let brier = Scoring::brier();

    for (phi, tag) in [(ce, "cross-entropy"), (brier, "brier")] {
        let mut out = check_distillation_pointwise(&phi, 100, seeds::derive(seed, &[1]))?;
        out.name = format!("{}/{}", out.name, tag);
        outcomes.push(out);
        let mut out = check_anchor_bias(&phi, 100, seeds::derive(seed, &[2]))?;
        out.name = format!("{}/{}", out.name, tag);
        outcomes.push(out);
    }

    // Feasibility contract on a small synthetic run, both modes.
    let (data, _) = make_synthetic(
        SyntheticKind::GaussianBlobs,
        2,
        2,
        700,
        seeds::derive(seed, &[3]),
    )?;
    let train = data.subset(&(0..400).collect::<Vec<_>>());
    let validation = data.subset(&(400..480).collect::<Vec<_>>()).one_hot_batch()?;
    let test = data.subset(&(480..700).collect::<Vec<_>>());
    let dims = ModelDims::new(2, 10, 2)?;
    let cfg = TrainConfig {
        max_epochs: 25,
        patience: 3,
        ..TrainConfig::default()
    }
    .with_seed(seeds::derive(seed, &[4]));
    let base_data = train.subset(&(0..200).collect::<Vec<_>>());
    let base = nn::train(
        &init_cold(dims, cfg.seed),
        &base_data.one_hot_batch()?,
        &validation,
        &cfg,
        &ce,
    )?
    .model;
    let grid = LambdaGrid::new(vec![0.2, 0.5, 0.9])?;
    let budget = ChurnBudget::new(0.05)?;
    for mode in [AlgorithmMode::Ensemble, AlgorithmMode::SingleBest] {
        let run = run_algorithm_one(
            &train,
            &validation,
            &base,
            &grid,
            &budget,
            SweepInit::Cold,
            &cfg,
            &ce,
            mode,
        )?;
        if run.report.feasible {
            let mut out = check_feasibility_contract(&run, &ce, test.features())?;
            out.name = format!(
                "{}/{}",
                out.name,
                match mode {
                    AlgorithmMode::Ensemble => "ensemble",
                    AlgorithmMode::SingleBest => "single-best",
                }
            );
            outcomes.push(out);
        }
    }

    // Mixing-coefficient bound on random ground-truth tasks.
    for (i, epsilon) in [(0u64, 0.01), (1u64, 0.05)] {
        let (_, dist) = make_synthetic(
            SyntheticKind::LogisticGroundTruth,
            3,
            3,
            1,
            seeds::derive(seed, &[5, i]),
        )?;
        for (phi, tag) in [(ce, "cross-entropy"), (brier, "brier")] {
            let mut out =
                check_lambda_star_bound(&dist, &phi, epsilon, 10_000, seeds::derive(seed, &[6, i]))?;
            out.name = format!("{}/{}/eps={}", out.name, tag, epsilon);
            outcomes.push(out);
        }
    }

    Ok(outcomes)
}
