//! The λ-grid sweep and the constrained convex program over the ensemble
//! simplex.
//!
//! Step one trains a classifier per mixing coefficient λ on distilled
//! labels. Step two picks a convex combination of the trained members that
//! minimizes empirical risk subject to the empirical churn budget:
//!
//! ```text
//! min_{α ∈ Δ_L}  R̂(Σ_j α_j h_j)   s.t.   Ĉ(Σ_j α_j h_j) ≤ ε
//! ```
//!
//! Both objective and constraint are convex in α because φ is convex and
//! the ensemble prediction is affine in α. The solver is an exterior
//! quadratic penalty with exponentiated-gradient inner iterations; the base
//! model can be appended as an extra member, which makes the program
//! feasible for every ε > 0.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::{self, MlpModel, SoftTargetBatch, TrainConfig};
use crate::seeds;
use crate::simplex::{divergence_rows, ChurnBudget, ProbabilityVector, Scoring};
use crate::targets::{distilled_targets, DistillConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

/// Sorted mixing coefficients in (0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaGrid {
    values: Vec<f64>,
}

impl LambdaGrid {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument {
                name: "grid",
                reason: "need at least one coefficient".into(),
            });
        }
        for pair in values.windows(2) {
            if pair[1] <= pair[0] {
                return Err(Error::InvalidArgument {
                    name: "grid",
                    reason: format!("values must be strictly increasing, got {pair:?}"),
                });
            }
        }
        for &v in &values {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::InvalidArgument {
                    name: "grid",
                    reason: format!("{v} outside (0, 1]"),
                });
            }
        }
        Ok(Self { values })
    }

    /// The hyper-parameter grid used in practice: {0.1, 0.2, …, 0.9}.
    pub fn practical() -> Self {
        Self {
            values: (1..=9).map(|k| k as f64 / 10.0).collect(),
        }
    }

    /// Evenly spaced grid {k/L} clipped below at ε/(ε+2B), the form the
    /// optimality/feasibility guarantees are stated for.
    pub fn with_budget_floor(budget: &ChurnBudget, bound_b: f64, points: usize) -> Result<Self> {
        if points == 0 {
            return Err(Error::InvalidArgument {
                name: "points",
                reason: "need at least one grid point".into(),
            });
        }
        let floor = budget.epsilon() / (budget.epsilon() + 2.0 * bound_b);
        let mut values: Vec<f64> = (1..=points)
            .map(|k| (k as f64 / points as f64).max(floor))
            .collect();
        values.dedup();
        Self::new(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// How sweep members are initialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepInit {
    /// Fresh random init per member (default).
    Cold,
    /// Start every member from the base model's parameters.
    Warm,
}

/// The trained λ-family plus prediction caches on the training sample.
#[derive(Debug, Clone)]
pub struct LambdaSweep {
    grid: LambdaGrid,
    models: Vec<MlpModel>,
    member_seeds: Vec<u64>,
    base_model: MlpModel,
    features: Vec<Vec<f64>>,
    labels: Vec<usize>,
    cached_predictions: Vec<Vec<ProbabilityVector>>,
    cached_base: Vec<ProbabilityVector>,
}

/// Per-member empirical risk and churn on the training sample.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MemberStats {
    pub lambda: f64,
    pub risk: f64,
    pub churn: f64,
}

impl LambdaSweep {
    pub fn from_parts(
        grid: LambdaGrid,
        models: Vec<MlpModel>,
        member_seeds: Vec<u64>,
        base_model: MlpModel,
        data: &Dataset,
    ) -> Result<Self> {
        if models.len() != grid.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                got: models.len(),
            });
        }
        let cached_predictions = models
            .iter()
            .map(|m| m.forward(data.features()))
            .collect::<Result<Vec<_>>>()?;
        let cached_base = base_model.forward(data.features())?;
        Ok(Self {
            grid,
            models,
            member_seeds,
            base_model,
            features: data.features().to_vec(),
            labels: data.labels().to_vec(),
            cached_predictions,
            cached_base,
        })
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn grid(&self) -> &LambdaGrid {
        &self.grid
    }

    pub fn models(&self) -> &[MlpModel] {
        &self.models
    }

    pub fn member_seeds(&self) -> &[u64] {
        &self.member_seeds
    }

    pub fn base_model(&self) -> &MlpModel {
        &self.base_model
    }

    pub fn features(&self) -> &[Vec<f64>] {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn cached_predictions(&self) -> &[Vec<ProbabilityVector>] {
        &self.cached_predictions
    }

    pub fn cached_base(&self) -> &[ProbabilityVector] {
        &self.cached_base
    }

    /// Training-sample risk and churn of each member, from the caches.
    pub fn member_stats(&self, phi: &Scoring) -> Result<Vec<MemberStats>> {
        self.grid
            .values()
            .iter()
            .zip(&self.cached_predictions)
            .map(|(&lambda, preds)| {
                Ok(MemberStats {
                    lambda,
                    risk: crate::simplex::empirical_risk(phi, preds, &self.labels)?,
                    churn: crate::simplex::empirical_churn(phi, &self.cached_base, preds)?,
                })
            })
            .collect()
    }

    #[cfg(test)]
    pub(crate) fn override_caches(
        &mut self,
        cached_predictions: Vec<Vec<ProbabilityVector>>,
        cached_base: Vec<ProbabilityVector>,
    ) {
        self.cached_predictions = cached_predictions;
        self.cached_base = cached_base;
    }
}

/// Train one distilled member per grid coefficient and cache everything the
/// convex program needs. Member trainings run in parallel; each member's
/// seed is derived from (config seed, member index).
pub fn run_lambda_sweep(
    train_data: &Dataset,
    validation: &SoftTargetBatch,
    base: &MlpModel,
    grid: &LambdaGrid,
    init: SweepInit,
    train_cfg: &TrainConfig,
    phi: &Scoring,
) -> Result<LambdaSweep> {
    let base_preds = base.forward(train_data.features())?;
    let member_seeds: Vec<u64> = (0..grid.len())
        .map(|k| seeds::derive(train_cfg.seed, &[0x3EED, k as u64]))
        .collect();

    let models: Vec<MlpModel> = grid
        .values()
        .par_iter()
        .zip(&member_seeds)
        .map(|(&lambda, &seed)| {
            let cfg = DistillConfig::new(lambda)?;
            let rows = distilled_targets(train_data.labels(), &base_preds, &cfg)?;
            let batch = SoftTargetBatch::new(train_data.features().to_vec(), rows)?;
            let member_cfg = train_cfg.with_seed(seed);
            let init_model = match init {
                SweepInit::Cold => nn::init_cold(base.dims(), seed),
                SweepInit::Warm => base.clone(),
            };
            nn::train(&init_model, &batch, validation, &member_cfg, phi)
                .map(|out| out.model)
                .map_err(|e| Error::SweepMemberFailed { lambda, source: Box::new(e) })
        })
        .collect::<Result<_>>()?;

    LambdaSweep::from_parts(grid.clone(), models, member_seeds, base.clone(), train_data)
}

/// A point on the ensemble simplex Δ_L.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleWeights {
    values: Vec<f64>,
}

impl EnsembleWeights {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument {
                name: "weights",
                reason: "need at least one member".into(),
            });
        }
        let mut sum = 0.0;
        for &v in &values {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidArgument {
                    name: "weights",
                    reason: format!("entry {v} must be a non-negative real"),
                });
            }
            sum += v;
        }
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument {
                name: "weights",
                reason: format!("entries sum to {sum}, outside 1 ± 1e-9"),
            });
        }
        Ok(Self { values })
    }

    pub fn vertex(len: usize, index: usize) -> Self {
        let mut values = vec![0.0; len];
        values[index] = 1.0;
        Self { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Row-wise convex combination of the sweep members' cached predictions.
pub fn ensemble_predictions(
    sweep: &LambdaSweep,
    weights: &EnsembleWeights,
) -> Result<Vec<ProbabilityVector>> {
    if weights.len() != sweep.len() {
        return Err(Error::DimensionMismatch {
            expected: sweep.len(),
            got: weights.len(),
        });
    }
    combine_rows(&member_refs(sweep, false), weights.values())
}

fn member_refs(sweep: &LambdaSweep, include_base: bool) -> Vec<&[ProbabilityVector]> {
    let mut members: Vec<&[ProbabilityVector]> = sweep
        .cached_predictions
        .iter()
        .map(|p| p.as_slice())
        .collect();
    if include_base {
        members.push(&sweep.cached_base);
    }
    members
}

fn combine_rows(
    members: &[&[ProbabilityVector]],
    alpha: &[f64],
) -> Result<Vec<ProbabilityVector>> {
    let n = members[0].len();
    let m = members[0][0].dim();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut row = vec![0.0; m];
        for (&aj, member) in alpha.iter().zip(members) {
            if aj != 0.0 {
                for (r, &v) in row.iter_mut().zip(member[i].values()) {
                    *r += aj * v;
                }
            }
        }
        out.push(ProbabilityVector::from_normalized(row));
    }
    Ok(out)
}

/// The convex program over cached member predictions.
struct EnsembleProgram<'a> {
    members: Vec<&'a [ProbabilityVector]>,
    base: &'a [ProbabilityVector],
    labels: &'a [usize],
    phi: &'a Scoring,
}

impl EnsembleProgram<'_> {
    fn mixed_row(&self, alpha: &[f64], i: usize, row: &mut [f64]) {
        row.fill(0.0);
        for (&aj, member) in alpha.iter().zip(&self.members) {
            if aj != 0.0 {
                for (r, &v) in row.iter_mut().zip(member[i].values()) {
                    *r += aj * v;
                }
            }
        }
    }

    fn risk_churn(&self, alpha: &[f64]) -> (f64, f64) {
        let n = self.labels.len();
        let m = self.base[0].dim();
        let mut row = vec![0.0; m];
        let mut risk = 0.0;
        let mut churn = 0.0;
        for i in 0..n {
            self.mixed_row(alpha, i, &mut row);
            risk += self.phi.score_entry(self.labels[i], &row);
            churn += divergence_rows(self.phi, self.base[i].values(), &row);
        }
        (risk / n as f64, churn / n as f64)
    }

    /// Gradients of R̂ and Ĉ w.r.t. α by the chain rule: the ensemble row is
    /// affine in α, so ∂/∂α_j = ⟨∇_v ·, h_j(x_i)⟩.
    fn gradients(&self, alpha: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.labels.len();
        let l = alpha.len();
        let m = self.base[0].dim();
        let mut row = vec![0.0; m];
        let mut one_hot = vec![0.0; m];
        let mut grad_risk = vec![0.0; l];
        let mut grad_churn = vec![0.0; l];
        for i in 0..n {
            self.mixed_row(alpha, i, &mut row);
            one_hot.fill(0.0);
            one_hot[self.labels[i]] = 1.0;
            let dr = self.phi.weighted_gradient(&one_hot, &row);
            let dc = self.phi.weighted_gradient(self.base[i].values(), &row);
            for (j, member) in self.members.iter().enumerate() {
                let h = member[i].values();
                grad_risk[j] += dot(&dr, h);
                grad_churn[j] += dot(&dc, h);
            }
        }
        for g in &mut grad_risk {
            *g /= n as f64;
        }
        for g in &mut grad_churn {
            *g /= n as f64;
        }
        (grad_risk, grad_churn)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// One multiplicative-weights update, exponent-shifted for stability.
fn eg_step(alpha: &[f64], grad: &[f64], step: f64) -> Vec<f64> {
    let shift = grad.iter().map(|&g| -step * g).fold(f64::NEG_INFINITY, f64::max);
    let mut next: Vec<f64> = alpha
        .iter()
        .zip(grad)
        .map(|(&a, &g)| a * (-step * g - shift).exp())
        .collect();
    let sum: f64 = next.iter().sum();
    if sum <= 0.0 || !sum.is_finite() {
        return alpha.to_vec();
    }
    for v in &mut next {
        *v /= sum;
    }
    next
}

/// Exponentiated gradient with a monotone Armijo line search on the step.
fn eg_minimize(
    mut alpha: Vec<f64>,
    objective: &dyn Fn(&[f64]) -> f64,
    gradient: &dyn Fn(&[f64]) -> Vec<f64>,
    iterations: usize,
) -> Vec<f64> {
    let mut value = objective(&alpha);
    let mut step = 1.0;
    for _ in 0..iterations {
        let grad = gradient(&alpha);
        let mut accepted = false;
        for _ in 0..60 {
            let candidate = eg_step(&alpha, &grad, step);
            let dir_deriv: f64 = grad
                .iter()
                .zip(candidate.iter().zip(&alpha))
                .map(|(&g, (&c, &a))| g * (c - a))
                .sum();
            let next = objective(&candidate);
            if dir_deriv < 0.0 && next <= value + 1e-4 * dir_deriv {
                let moved: f64 = candidate
                    .iter()
                    .zip(&alpha)
                    .map(|(&c, &a)| (c - a).abs())
                    .sum();
                alpha = candidate;
                value = next;
                step *= 2.0;
                accepted = moved > 1e-15;
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
    alpha
}

/// Constraint slack below which the penalty loop stops doubling.
const PENALTY_SLACK: f64 = 1e-6;
const MAX_PENALTY_DOUBLINGS: usize = 50;
const EG_ITERATIONS: usize = 400;

/// Outcome of the constrained program.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleSolution {
    pub weights: EnsembleWeights,
    pub includes_base: bool,
    pub feasible: bool,
    pub risk: f64,
    pub churn: f64,
}

/// Minimize R̂ over the ensemble simplex subject to Ĉ ≤ ε.
///
/// Exterior quadratic penalty with doubling, exponentiated-gradient inner
/// loops, and a feasibility-restoration bisection toward the least-churn
/// point. Every returned feasible solution satisfies Ĉ ≤ ε outright.
/// Infeasibility is reported as a flag carrying the least-churn weights,
/// never as an error.
pub fn solve_ensemble_program(
    sweep: &LambdaSweep,
    budget: &ChurnBudget,
    phi: &Scoring,
    include_base: bool,
) -> Result<EnsembleSolution> {
    if sweep.is_empty() {
        return Err(Error::EmptySample);
    }
    let members = member_refs(sweep, include_base);
    let program = EnsembleProgram {
        members,
        base: &sweep.cached_base,
        labels: &sweep.labels,
        phi,
    };
    let l = program.members.len();
    let epsilon = budget.epsilon();

    let risk_obj = |a: &[f64]| program.risk_churn(a).0;
    let churn_obj = |a: &[f64]| program.risk_churn(a).1;
    let churn_grad = |a: &[f64]| program.gradients(a).1;

    // Feasible candidates: vertices first, so the ensemble never loses to a
    // single member.
    let mut best: Option<(Vec<f64>, f64, f64)> = None;
    for j in 0..l {
        let vertex = EnsembleWeights::vertex(l, j);
        let (r, c) = program.risk_churn(vertex.values());
        consider_candidate(&mut best, epsilon, vertex.values(), r, c);
    }

    let uniform = vec![1.0 / l as f64; l];
    let min_churn_alpha = eg_minimize(uniform.clone(), &churn_obj, &churn_grad, EG_ITERATIONS);
    let (mc_risk, mc_churn) = program.risk_churn(&min_churn_alpha);
    consider_candidate(&mut best, epsilon, &min_churn_alpha, mc_risk, mc_churn);

    if best.is_none() {
        // No feasible point found anywhere: report the least-churn weights.
        let (alpha, risk, churn) = if mc_churn
            <= program.risk_churn(&least_churn_vertex(&program, l)).1
        {
            (min_churn_alpha, mc_risk, mc_churn)
        } else {
            let v = least_churn_vertex(&program, l);
            let (r, c) = program.risk_churn(&v);
            (v, r, c)
        };
        return Ok(EnsembleSolution {
            weights: EnsembleWeights::new(alpha)?,
            includes_base: include_base,
            feasible: false,
            risk,
            churn,
        });
    }

    // Exterior penalty loop. The quadratic penalty keeps the effective
    // multiplier 2ρ·max(0, Ĉ−ε) bounded along the solution path.
    let mut rho = 1.0f64;
    let mut alpha: Vec<f64> = uniform
        .iter()
        .zip(&min_churn_alpha)
        .map(|(&u, &m)| 0.5 * u + 0.5 * m)
        .collect();
    for _ in 0..MAX_PENALTY_DOUBLINGS {
        let penalized = |a: &[f64]| {
            let (r, c) = program.risk_churn(a);
            let viol = (c - epsilon).max(0.0);
            r + rho * viol * viol
        };
        let penalized_grad = |a: &[f64]| {
            let (_, c) = program.risk_churn(a);
            let (gr, gc) = program.gradients(a);
            let viol = (c - epsilon).max(0.0);
            gr.iter()
                .zip(&gc)
                .map(|(&r, &cg)| r + 2.0 * rho * viol * cg)
                .collect()
        };
        alpha = eg_minimize(alpha, &penalized, &penalized_grad, EG_ITERATIONS);
        let (risk, churn) = program.risk_churn(&alpha);
        if churn <= epsilon {
            consider_candidate(&mut best, epsilon, &alpha, risk, churn);
        } else if mc_churn <= epsilon {
            // Restore feasibility by bisecting toward the least-churn point.
            let restored = restore_feasible(&program, &alpha, &min_churn_alpha, epsilon);
            let (r, c) = program.risk_churn(&restored);
            consider_candidate(&mut best, epsilon, &restored, r, c);
        }
        if churn <= epsilon + PENALTY_SLACK {
            break;
        }
        rho *= 2.0;
    }

    let (alpha, risk, churn) = best.expect("feasible candidate recorded above");
    let _ = risk_obj;
    Ok(EnsembleSolution {
        weights: EnsembleWeights::new(alpha)?,
        includes_base: include_base,
        feasible: true,
        risk,
        churn,
    })
}

fn consider_candidate(
    best: &mut Option<(Vec<f64>, f64, f64)>,
    epsilon: f64,
    alpha: &[f64],
    risk: f64,
    churn: f64,
) {
    if churn <= epsilon {
        let better = match best {
            None => true,
            Some((_, br, bc)) => risk < *br - 1e-15 || (risk <= *br + 1e-15 && churn < *bc),
        };
        if better {
            *best = Some((alpha.to_vec(), risk, churn));
        }
    }
}

fn least_churn_vertex(program: &EnsembleProgram<'_>, l: usize) -> Vec<f64> {
    let mut best = 0usize;
    let mut best_churn = f64::INFINITY;
    for j in 0..l {
        let v = EnsembleWeights::vertex(l, j);
        let (_, c) = program.risk_churn(v.values());
        if c < best_churn {
            best_churn = c;
            best = j;
        }
    }
    EnsembleWeights::vertex(l, best).values().to_vec()
}

/// Smallest mix toward `anchor` that brings the churn within ε; `anchor`
/// must satisfy the constraint.
fn restore_feasible(
    program: &EnsembleProgram<'_>,
    alpha: &[f64],
    anchor: &[f64],
    epsilon: f64,
) -> Vec<f64> {
    let blend = |t: f64| -> Vec<f64> {
        alpha
            .iter()
            .zip(anchor)
            .map(|(&a, &b)| (1.0 - t) * a + t * b)
            .collect()
    };
    let mut lo = 0.0;
    let mut hi = 1.0;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let (_, c) = program.risk_churn(&blend(mid));
        if c <= epsilon {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    blend(hi)
}

/// Which predictor Algorithm 1 returns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlgorithmMode {
    /// The convex-program ensemble (base model appended as a member).
    Ensemble,
    /// The single feasible member with least empirical risk.
    SingleBest,
}

/// The returned predictor.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ChosenPredictor {
    Ensemble {
        weights: Vec<f64>,
        includes_base: bool,
    },
    Single {
        index: usize,
    },
}

/// Everything the caller needs to audit a run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AlgorithmOneReport {
    pub mode: AlgorithmMode,
    pub epsilon: f64,
    pub members: Vec<MemberStats>,
    pub feasible: bool,
    pub chosen: ChosenPredictor,
    /// Training-sample risk of the returned predictor.
    pub risk: f64,
    /// Training-sample soft churn of the returned predictor.
    pub churn: f64,
}

/// A finished run: the sweep plus the resolution of step two.
#[derive(Debug, Clone)]
pub struct AlgorithmOneRun {
    pub sweep: LambdaSweep,
    pub report: AlgorithmOneReport,
}

impl AlgorithmOneRun {
    /// Predictions of the returned classifier on an arbitrary query set.
    pub fn predict(&self, features: &[Vec<f64>]) -> Result<Vec<ProbabilityVector>> {
        match &self.report.chosen {
            ChosenPredictor::Single { index } => self.sweep.models[*index].forward(features),
            ChosenPredictor::Ensemble { weights, includes_base } => {
                let mut prediction_sets: Vec<Vec<ProbabilityVector>> = self
                    .sweep
                    .models
                    .iter()
                    .map(|m| m.forward(features))
                    .collect::<Result<_>>()?;
                if *includes_base {
                    prediction_sets.push(self.sweep.base_model.forward(features)?);
                }
                let refs: Vec<&[ProbabilityVector]> =
                    prediction_sets.iter().map(|p| p.as_slice()).collect();
                combine_rows(&refs, weights)
            }
        }
    }

    /// The returned classifier's predictions on the training sample, from
    /// the caches.
    pub fn training_predictions(&self) -> Result<Vec<ProbabilityVector>> {
        match &self.report.chosen {
            ChosenPredictor::Single { index } => Ok(self.sweep.cached_predictions[*index].clone()),
            ChosenPredictor::Ensemble { weights, includes_base } => {
                combine_rows(&member_refs(&self.sweep, *includes_base), weights)
            }
        }
    }
}

/// Resolve step two of the algorithm on an existing sweep, without any
/// retraining.
pub fn resolve_algorithm_one(
    sweep: LambdaSweep,
    budget: &ChurnBudget,
    phi: &Scoring,
    mode: AlgorithmMode,
) -> Result<AlgorithmOneRun> {
    let members = sweep.member_stats(phi)?;
    let report = match mode {
        AlgorithmMode::Ensemble => {
            let solution = solve_ensemble_program(&sweep, budget, phi, true)?;
            AlgorithmOneReport {
                mode,
                epsilon: budget.epsilon(),
                feasible: solution.feasible,
                chosen: ChosenPredictor::Ensemble {
                    weights: solution.weights.values().to_vec(),
                    includes_base: solution.includes_base,
                },
                risk: solution.risk,
                churn: solution.churn,
                members,
            }
        }
        AlgorithmMode::SingleBest => {
            let feasible_best = members
                .iter()
                .enumerate()
                .filter(|(_, s)| s.churn <= budget.epsilon())
                .min_by(|(_, a), (_, b)| {
                    (a.risk, a.churn).partial_cmp(&(b.risk, b.churn)).expect("finite stats")
                })
                .map(|(i, _)| i);
            let (index, feasible) = match feasible_best {
                Some(i) => (i, true),
                None => {
                    let least = members
                        .iter()
                        .enumerate()
                        .min_by(|(_, a), (_, b)| {
                            a.churn.partial_cmp(&b.churn).expect("finite stats")
                        })
                        .map(|(i, _)| i)
                        .expect("sweep is nonempty");
                    (least, false)
                }
            };
            AlgorithmOneReport {
                mode,
                epsilon: budget.epsilon(),
                feasible,
                chosen: ChosenPredictor::Single { index },
                risk: members[index].risk,
                churn: members[index].churn,
                members,
            }
        }
    };
    Ok(AlgorithmOneRun { sweep, report })
}

/// The full pipeline: λ-grid sweep, then the constrained selection.
#[allow(clippy::too_many_arguments)]
pub fn run_algorithm_one(
    train_data: &Dataset,
    validation: &SoftTargetBatch,
    base: &MlpModel,
    grid: &LambdaGrid,
    budget: &ChurnBudget,
    init: SweepInit,
    train_cfg: &TrainConfig,
    phi: &Scoring,
    mode: AlgorithmMode,
) -> Result<AlgorithmOneRun> {
    let sweep = run_lambda_sweep(train_data, validation, base, grid, init, train_cfg, phi)?;
    resolve_algorithm_one(sweep, budget, phi, mode)
}

const MANIFEST_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ManifestMember {
    lambda: f64,
    seed: u64,
    risk: f64,
    churn: f64,
    checkpoint: String,
}

#[derive(Serialize, Deserialize)]
struct SweepManifest {
    schema_version: u32,
    scoring: Scoring,
    grid: Vec<f64>,
    members: Vec<ManifestMember>,
    base_checkpoint: String,
    sample: String,
}

#[derive(Serialize, Deserialize)]
struct SampleFile {
    features: Vec<Vec<f64>>,
    labels: Vec<usize>,
    num_classes: usize,
}

/// Write a sweep artifact directory: one checkpoint per λ, the base
/// checkpoint, the training sample, and a manifest with per-member stats.
pub fn save_sweep(sweep: &LambdaSweep, phi: &Scoring, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let stats = sweep.member_stats(phi)?;
    let mut members = Vec::new();
    for (k, (model, stat)) in sweep.models.iter().zip(&stats).enumerate() {
        let name = format!("member_{k:02}.json");
        model.save(&dir.join(&name))?;
        members.push(ManifestMember {
            lambda: stat.lambda,
            seed: sweep.member_seeds.get(k).copied().unwrap_or_default(),
            risk: stat.risk,
            churn: stat.churn,
            checkpoint: name,
        });
    }
    sweep.base_model.save(&dir.join("base.json"))?;
    let sample = SampleFile {
        features: sweep.features.clone(),
        labels: sweep.labels.clone(),
        num_classes: sweep.cached_base[0].dim(),
    };
    fs::write(dir.join("sample.json"), serde_json::to_string(&sample)?)?;
    let manifest = SweepManifest {
        schema_version: MANIFEST_VERSION,
        scoring: *phi,
        grid: sweep.grid.values().to_vec(),
        members,
        base_checkpoint: "base.json".into(),
        sample: "sample.json".into(),
    };
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

/// Load a sweep artifact directory. Prediction caches are rebuilt with
/// forward passes only; nothing is retrained.
pub fn load_sweep(dir: &Path) -> Result<(LambdaSweep, Scoring)> {
    let manifest: SweepManifest =
        serde_json::from_str(&fs::read_to_string(dir.join("manifest.json"))?)?;
    if manifest.schema_version != MANIFEST_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported manifest version {}",
            manifest.schema_version
        )));
    }
    let sample: SampleFile = serde_json::from_str(&fs::read_to_string(dir.join(&manifest.sample))?)?;
    let data = Dataset::new(sample.features, sample.labels, sample.num_classes)?;
    let base = MlpModel::load(&dir.join(&manifest.base_checkpoint))?;
    let mut models = Vec::new();
    let mut member_seeds = Vec::new();
    for member in &manifest.members {
        models.push(MlpModel::load(&dir.join(&member.checkpoint))?);
        member_seeds.push(member.seed);
    }
    let grid = LambdaGrid::new(manifest.grid)?;
    let sweep = LambdaSweep::from_parts(grid, models, member_seeds, base, &data)?;
    Ok((sweep, manifest.scoring))
}
