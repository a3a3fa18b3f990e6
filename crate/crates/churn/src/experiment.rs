//! The multi-baseline experiment runner.
//!
//! One trial: draw splits, train a base model on the initial sample, then
//! train every method × hyper-parameter setting on the combined
//! initial+batch data and record test accuracy plus hard/soft churn against
//! the base model. Trials aggregate into per-setting means and standard
//! errors, the churn-at-cold-accuracy selection, and the accuracy/churn
//! Pareto frontier. Identical plans produce byte-identical reports.

use crate::algorithm::{
    run_algorithm_one, AlgorithmMode, AlgorithmOneRun, LambdaGrid, SweepInit,
};
use crate::data::{
    load_csv_dataset, make_synthetic, CategoricalPolicy, CsvSchema, Dataset, SyntheticKind,
};
use crate::error::{Error, Result};
use crate::nn::{self, init_cold, init_shrink_perturb, ModelDims, SoftTargetBatch, TrainConfig};
use crate::simplex::ChurnBudget;
use crate::oracle::AnchorParams;
use crate::seeds;
use crate::simplex::{empirical_churn, hard_churn, Scoring};
use crate::targets::{
    anchor_targets, co_distill_train, distilled_targets, mixup_train, smoothed_targets,
    CoDistillConfig, DistillConfig, MixupConfig,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};

fn default_hyper_grid() -> Vec<f64> {
    (1..=9).map(|k| k as f64 / 10.0).collect()
}

fn default_eta_grid() -> Vec<f64> {
    vec![0.5, 0.7, 1.0]
}

fn default_categorical_policy() -> CategoricalPolicy {
    CategoricalPolicy::OneHot
}

/// Where the data comes from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "source")]
pub enum DatasetSource {
    Csv {
        path: PathBuf,
        label_column: String,
        #[serde(default = "default_categorical_policy")]
        categorical: CategoricalPolicy,
    },
    Synthetic {
        kind: SyntheticKind,
        dims: usize,
        classes: usize,
        n: usize,
    },
}

/// Per-trial split sizes: test rows are carved off by fraction first, the
/// rest feeds the initial / validation / update-batch draws.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SplitSpec {
    pub initial_size: usize,
    pub batch_size: usize,
    pub validation_size: usize,
    pub test_fraction: f64,
}

/// One method to run, with its hyper-parameter grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "name")]
pub enum MethodSpec {
    Cold,
    Warm,
    ShrinkPerturb {
        #[serde(default = "default_hyper_grid")]
        alphas: Vec<f64>,
    },
    Mixup {
        #[serde(default = "default_hyper_grid")]
        alphas: Vec<f64>,
    },
    LabelSmoothing {
        #[serde(default = "default_hyper_grid")]
        alphas: Vec<f64>,
    },
    CoDistill {
        #[serde(default = "default_hyper_grid")]
        alphas: Vec<f64>,
        #[serde(default)]
        warmup_steps: usize,
    },
    Anchor {
        #[serde(default = "default_hyper_grid")]
        alphas: Vec<f64>,
        #[serde(default = "default_eta_grid")]
        etas: Vec<f64>,
    },
    Distill {
        #[serde(default = "default_hyper_grid")]
        lambdas: Vec<f64>,
    },
}

/// One fully instantiated training recipe.
#[derive(Debug, Clone, Copy)]
enum Setting {
    Cold,
    Warm,
    ShrinkPerturb { alpha: f64 },
    Mixup { alpha: f64 },
    LabelSmoothing { alpha: f64 },
    CoDistill { alpha: f64, warmup_steps: usize },
    Anchor { alpha: f64, eta: f64 },
    Distill { lambda: f64 },
}

impl Setting {
    fn method_name(&self) -> &'static str {
        match self {
            Setting::Cold => "cold",
            Setting::Warm => "warm",
            Setting::ShrinkPerturb { .. } => "shrink-perturb",
            Setting::Mixup { .. } => "mixup",
            Setting::LabelSmoothing { .. } => "label-smoothing",
            Setting::CoDistill { .. } => "co-distill",
            Setting::Anchor { .. } => "anchor",
            Setting::Distill { .. } => "distill",
        }
    }

    fn hyperparameters(&self) -> Vec<(String, f64)> {
        match *self {
            Setting::Cold | Setting::Warm => vec![],
            Setting::ShrinkPerturb { alpha }
            | Setting::Mixup { alpha }
            | Setting::LabelSmoothing { alpha } => vec![("alpha".into(), alpha)],
            Setting::CoDistill { alpha, warmup_steps } => vec![
                ("alpha".into(), alpha),
                ("warmup_steps".into(), warmup_steps as f64),
            ],
            Setting::Anchor { alpha, eta } => {
                vec![("alpha".into(), alpha), ("eta".into(), eta)]
            }
            Setting::Distill { lambda } => vec![("lambda".into(), lambda)],
        }
    }
}

fn expand_methods(methods: &[MethodSpec]) -> Vec<Setting> {
    let mut settings = Vec::new();
    for spec in methods {
        match spec {
            MethodSpec::Cold => settings.push(Setting::Cold),
            MethodSpec::Warm => settings.push(Setting::Warm),
            MethodSpec::ShrinkPerturb { alphas } => {
                settings.extend(alphas.iter().map(|&alpha| Setting::ShrinkPerturb { alpha }));
            }
            MethodSpec::Mixup { alphas } => {
                settings.extend(alphas.iter().map(|&alpha| Setting::Mixup { alpha }));
            }
            MethodSpec::LabelSmoothing { alphas } => {
                settings.extend(alphas.iter().map(|&alpha| Setting::LabelSmoothing { alpha }));
            }
            MethodSpec::CoDistill { alphas, warmup_steps } => {
                settings.extend(alphas.iter().map(|&alpha| Setting::CoDistill {
                    alpha,
                    warmup_steps: *warmup_steps,
                }));
            }
            MethodSpec::Anchor { alphas, etas } => {
                for &alpha in alphas {
                    for &eta in etas {
                        settings.push(Setting::Anchor { alpha, eta });
                    }
                }
            }
            MethodSpec::Distill { lambdas } => {
                settings.extend(lambdas.iter().map(|&lambda| Setting::Distill { lambda }));
            }
        }
    }
    settings
}

/// The full experiment description; everything a run needs is in here, so
/// identical plans yield identical reports.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub dataset: DatasetSource,
    pub split: SplitSpec,
    /// Hidden width of the fcn-x models.
    pub hidden_dim: usize,
    pub scoring: Scoring,
    pub methods: Vec<MethodSpec>,
    pub num_trials: usize,
    pub seed: u64,
    /// Optimizer settings shared by every training. The seed field is
    /// ignored; per-training seeds derive from the plan seed.
    pub train: TrainConfig,
}

impl ExperimentPlan {
    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::Plan(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_trials == 0 {
            return Err(Error::Plan("num_trials must be at least 1".into()));
        }
        if !(self.split.test_fraction > 0.0 && self.split.test_fraction < 1.0) {
            return Err(Error::Plan(format!(
                "test_fraction {} outside (0, 1)",
                self.split.test_fraction
            )));
        }
        if self.hidden_dim == 0 {
            return Err(Error::Plan("hidden_dim must be positive".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Plan("no methods configured".into()));
        }
        Ok(())
    }
}

/// Mean and standard error (standard deviation of the mean) over trials.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SummaryStat {
    pub mean: f64,
    pub stderr: f64,
}

fn summarize(values: &[f64]) -> SummaryStat {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let stderr = if values.len() < 2 {
        0.0
    } else {
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    };
    SummaryStat { mean, stderr }
}

/// Aggregated results of one (method, hyper-parameter) setting.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodRecord {
    pub method: String,
    pub hyperparameters: Vec<(String, f64)>,
    pub trial_accuracy: Vec<f64>,
    pub trial_hard_churn: Vec<f64>,
    pub trial_soft_churn: Vec<f64>,
    pub accuracy: SummaryStat,
    pub hard_churn: SummaryStat,
    pub soft_churn: SummaryStat,
    /// Per-trial failure messages; failed trials contribute no samples.
    pub failures: Vec<String>,
}

impl MethodRecord {
    pub fn hyper_label(&self) -> String {
        if self.hyperparameters.is_empty() {
            return "-".to_owned();
        }
        self.hyperparameters
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(",")
    }
}

/// Per-method churn-at-cold-accuracy pick.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodSelection {
    pub method: String,
    /// None when no setting reaches cold-start accuracy.
    pub selection: Option<SelectedSetting>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectedSetting {
    pub hyperparameters: Vec<(String, f64)>,
    pub accuracy: f64,
    pub hard_churn: f64,
}

/// A point retained on the accuracy/churn frontier.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrontierPoint {
    pub method: String,
    pub hyperparameters: Vec<(String, f64)>,
    pub accuracy: f64,
    pub hard_churn: f64,
}

/// Everything a run produces.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub plan: ExperimentPlan,
    pub base_accuracy: SummaryStat,
    pub records: Vec<MethodRecord>,
    pub selections: Vec<MethodSelection>,
    pub frontier: Vec<FrontierPoint>,
    /// Present when the dataset came from a CSV file.
    pub csv_schema: Option<CsvSchema>,
}

const REPORT_VERSION: u32 = 1;

fn load_dataset(source: &DatasetSource, seed: u64) -> Result<(Dataset, Option<CsvSchema>)> {
    match source {
        DatasetSource::Csv { path, label_column, categorical } => {
            let (ds, schema) = load_csv_dataset(path, label_column, *categorical)?;
            Ok((ds, Some(schema)))
        }
        DatasetSource::Synthetic { kind, dims, classes, n } => {
            let (ds, _) = make_synthetic(*kind, *dims, *classes, *n, seeds::derive(seed, &[0xDA7A]))?;
            Ok((ds, None))
        }
    }
}

pub(crate) struct TrialSplit {
    pub initial: Dataset,
    pub combined: Dataset,
    pub validation: SoftTargetBatch,
    pub test: Dataset,
}

pub(crate) fn draw_split(
    seed: u64,
    split: &SplitSpec,
    data: &Dataset,
    trial: usize,
) -> Result<TrialSplit> {
    use rand::seq::SliceRandom;
    let n = data.len();
    let test_count = ((split.test_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let pool = n - test_count;
    let needed = split.initial_size + split.batch_size + split.validation_size;
    if needed > pool {
        return Err(Error::Plan(format!(
            "splits need {needed} rows but only {pool} remain after the test split"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = seeds::rng(seed, &[0x5B17, trial as u64]);
    order.shuffle(&mut rng);

    let test = data.subset(&order[..test_count]);
    let rest = &order[test_count..];
    let initial_rows = &rest[..split.initial_size];
    let validation_rows = &rest[split.initial_size..split.initial_size + split.validation_size];
    let batch_rows = &rest[split.initial_size + split.validation_size
        ..split.initial_size + split.validation_size + split.batch_size];

    let initial = data.subset(initial_rows);
    let mut combined_rows = initial_rows.to_vec();
    combined_rows.extend_from_slice(batch_rows);
    let combined = data.subset(&combined_rows);
    let validation = data.subset(validation_rows).one_hot_batch()?;
    Ok(TrialSplit { initial, combined, validation, test })
}

struct TrialOutcome {
    base_accuracy: f64,
    settings: Vec<std::result::Result<(f64, f64, f64), String>>,
}

fn run_trial(
    plan: &ExperimentPlan,
    data: &Dataset,
    settings: &[Setting],
    trial: usize,
) -> Result<TrialOutcome> {
    let phi = plan.scoring;
    let split = draw_split(plan.seed, &plan.split, data, trial)?;
    let dims = ModelDims::new(data.feature_dim(), plan.hidden_dim, data.num_classes())?;

    let base_seed = seeds::derive(plan.seed, &[0xBA5E, trial as u64]);
    let base_cfg = plan.train.with_seed(base_seed);
    let base = nn::train(
        &init_cold(dims, base_seed),
        &split.initial.one_hot_batch()?,
        &split.validation,
        &base_cfg,
        &phi,
    )?
    .model;

    let base_test = base.forward(split.test.features())?;
    let base_combined = base.forward(split.combined.features())?;
    let base_accuracy = split.test.accuracy(&base_test)?;

    let results = settings
        .iter()
        .enumerate()
        .map(|(idx, setting)| {
            let seed = seeds::derive(plan.seed, &[0x7EA1, trial as u64, idx as u64]);
            let cfg = plan.train.with_seed(seed);
            let trained = (|| -> Result<_> {
                let m = data.num_classes();
                let labels = split.combined.labels();
                let features = split.combined.features().to_vec();
                let model = match *setting {
                    Setting::Cold => nn::train(
                        &init_cold(dims, seed),
                        &split.combined.one_hot_batch()?,
                        &split.validation,
                        &cfg,
                        &phi,
                    )?
                    .model,
                    Setting::Warm => nn::train(
                        &base,
                        &split.combined.one_hot_batch()?,
                        &split.validation,
                        &cfg,
                        &phi,
                    )?
                    .model,
                    Setting::ShrinkPerturb { alpha } => nn::train(
                        &init_shrink_perturb(&base, alpha, seed)?,
                        &split.combined.one_hot_batch()?,
                        &split.validation,
                        &cfg,
                        &phi,
                    )?
                    .model,
                    Setting::Mixup { alpha } => mixup_train(
                        &init_cold(dims, seed),
                        features,
                        labels,
                        m,
                        &split.validation,
                        &MixupConfig::new(alpha)?,
                        &cfg,
                        &phi,
                    )?
                    .model,
                    Setting::LabelSmoothing { alpha } => {
                        let rows = smoothed_targets(labels, &base_combined, alpha)?;
                        let batch = SoftTargetBatch::new(features, rows)?;
                        nn::train(&init_cold(dims, seed), &batch, &split.validation, &cfg, &phi)?
                            .model
                    }
                    Setting::CoDistill { alpha, warmup_steps } => co_distill_train(
                        &base,
                        &base,
                        &split.combined.one_hot_batch()?,
                        &split.validation,
                        &CoDistillConfig::new(alpha, warmup_steps)?,
                        &cfg,
                        &phi,
                    )?
                    .model,
                    Setting::Anchor { alpha, eta } => {
                        let params = AnchorParams::new(alpha, eta)?;
                        let rows = anchor_targets(labels, &base_combined, &params)?;
                        let batch = SoftTargetBatch::new_weighted(features, rows)?;
                        nn::train(&init_cold(dims, seed), &batch, &split.validation, &cfg, &phi)?
                            .model
                    }
                    Setting::Distill { lambda } => {
                        let rows =
                            distilled_targets(labels, &base_combined, &DistillConfig::new(lambda)?)?;
                        let batch = SoftTargetBatch::new(features, rows)?;
                        nn::train(&init_cold(dims, seed), &batch, &split.validation, &cfg, &phi)?
                            .model
                    }
                };
                let preds = model.forward(split.test.features())?;
                let accuracy = split.test.accuracy(&preds)?;
                let hard = hard_churn(&base_test, &preds)?;
                let soft = empirical_churn(&phi, &base_test, &preds)?;
                Ok((accuracy, hard, soft))
            })();
            trained.map_err(|e| format!("trial {trial}: {e}"))
        })
        .collect();

    Ok(TrialOutcome { base_accuracy, settings: results })
}

/// Run the whole plan. Trials execute in parallel and aggregate in trial
/// order, so reports do not depend on thread scheduling.
pub fn run_experiment(plan: &ExperimentPlan) -> Result<ExperimentReport> {
    plan.validate()?;
    let (data, csv_schema) = load_dataset(&plan.dataset, plan.seed)?;

    // Churn-at-cold-accuracy needs the cold-start record; run it even when
    // the plan omits it.
    let mut methods = plan.methods.clone();
    if !methods.iter().any(|m| matches!(m, MethodSpec::Cold)) {
        methods.insert(0, MethodSpec::Cold);
    }
    let settings = expand_methods(&methods);

    let trials: Vec<TrialOutcome> = (0..plan.num_trials)
        .into_par_iter()
        .map(|t| run_trial(plan, &data, &settings, t))
        .collect::<Result<_>>()?;

    let base_accuracy = summarize(&trials.iter().map(|t| t.base_accuracy).collect::<Vec<_>>());

    let mut records = Vec::with_capacity(settings.len());
    for (idx, setting) in settings.iter().enumerate() {
        let mut acc = Vec::new();
        let mut hard = Vec::new();
        let mut soft = Vec::new();
        let mut failures = Vec::new();
        for trial in &trials {
            match &trial.settings[idx] {
                Ok((a, h, s)) => {
                    acc.push(*a);
                    hard.push(*h);
                    soft.push(*s);
                }
                Err(msg) => failures.push(msg.clone()),
            }
        }
        if acc.is_empty() {
            return Err(Error::MethodFailed {
                method: format!(
                    "{} ({})",
                    setting.method_name(),
                    setting
                        .hyperparameters()
                        .iter()
                        .map(|(k, v)| format!("{k}={v}"))
                        .collect::<Vec<_>>()
                        .join(",")
                ),
                trials: plan.num_trials,
                detail: failures.first().cloned().unwrap_or_default(),
            });
        }
        records.push(MethodRecord {
            method: setting.method_name().to_owned(),
            hyperparameters: setting.hyperparameters(),
            accuracy: summarize(&acc),
            hard_churn: summarize(&hard),
            soft_churn: summarize(&soft),
            trial_accuracy: acc,
            trial_hard_churn: hard,
            trial_soft_churn: soft,
            failures,
        });
    }

    let cold = records
        .iter()
        .find(|r| r.method == "cold")
        .expect("cold record inserted above");
    let cold_accuracy = cold.accuracy.mean;
    let selections = churn_at_cold_accuracy(&records, cold_accuracy);

    let frontier_points: Vec<(f64, f64)> = records
        .iter()
        .map(|r| (r.accuracy.mean, r.hard_churn.mean))
        .collect();
    let keep = pareto_indices(&frontier_points);
    let mut frontier: Vec<FrontierPoint> = keep
        .into_iter()
        .map(|i| FrontierPoint {
            method: records[i].method.clone(),
            hyperparameters: records[i].hyperparameters.clone(),
            accuracy: records[i].accuracy.mean,
            hard_churn: records[i].hard_churn.mean,
        })
        .collect();
    frontier.sort_by(|a, b| {
        (a.accuracy, a.hard_churn)
            .partial_cmp(&(b.accuracy, b.hard_churn))
            .expect("finite stats")
    });

    Ok(ExperimentReport {
        schema_version: REPORT_VERSION,
        plan: plan.clone(),
        base_accuracy,
        records,
        selections,
        frontier,
        csv_schema,
    })
}

/// Per method, the lowest-mean-churn setting whose mean accuracy is at
/// least the cold-start mean accuracy; `None` when no setting qualifies.
pub fn churn_at_cold_accuracy(records: &[MethodRecord], cold_accuracy: f64) -> Vec<MethodSelection> {
    let mut order: Vec<&str> = Vec::new();
    for r in records {
        if !order.contains(&r.method.as_str()) {
            order.push(&r.method);
        }
    }
    order
        .into_iter()
        .map(|method| {
            let pick = records
                .iter()
                .filter(|r| r.method == method && r.accuracy.mean >= cold_accuracy)
                .min_by(|a, b| {
                    (a.hard_churn.mean, -a.accuracy.mean)
                        .partial_cmp(&(b.hard_churn.mean, -b.accuracy.mean))
                        .expect("finite stats")
                });
            MethodSelection {
                method: method.to_owned(),
                selection: pick.map(|r| SelectedSetting {
                    hyperparameters: r.hyperparameters.clone(),
                    accuracy: r.accuracy.mean,
                    hard_churn: r.hard_churn.mean,
                }),
            }
        })
        .collect()
}

/// Indices of the non-dominated points: nothing else has
/// accuracy ≥ and churn ≤ with at least one strict.
fn pareto_indices(points: &[(f64, f64)]) -> Vec<usize> {
    let dominated = |i: usize| {
        points.iter().enumerate().any(|(j, &(acc, churn))| {
            j != i
                && acc >= points[i].0
                && churn <= points[i].1
                && (acc > points[i].0 || churn < points[i].1)
        })
    };
    (0..points.len()).filter(|&i| !dominated(i)).collect()
}

/// Non-dominated subset of (accuracy, churn) points, accuracy ascending.
pub fn pareto_frontier(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut kept: Vec<(f64, f64)> = pareto_indices(points).into_iter().map(|i| points[i]).collect();
    kept.sort_by(|a, b| a.partial_cmp(b).expect("finite points"));
    kept
}

/// Write `report.json` plus the flat CSV exports and the categorical
/// vocabulary when one exists.
pub fn write_report(report: &ExperimentReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("report.json"), serde_json::to_string_pretty(report)?)?;
    write_csv_exports(report, dir)?;
    if let Some(schema) = &report.csv_schema {
        fs::write(dir.join("vocabulary.json"), serde_json::to_string_pretty(schema)?)?;
    }
    Ok(())
}

/// The flat CSV views of a report: per-setting summary, frontier, cost
/// curves, and the churn-at-cold-accuracy selections.
pub fn write_csv_exports(report: &ExperimentReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut methods_csv = String::from(
        "method,hyperparameters,mean_accuracy,stderr_accuracy,mean_hard_churn,stderr_hard_churn,mean_soft_churn,stderr_soft_churn,trials\n",
    );
    for r in &report.records {
        methods_csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.method,
            r.hyper_label(),
            r.accuracy.mean,
            r.accuracy.stderr,
            r.hard_churn.mean,
            r.hard_churn.stderr,
            r.soft_churn.mean,
            r.soft_churn.stderr,
            r.trial_accuracy.len(),
        ));
    }
    fs::write(dir.join("methods.csv"), methods_csv)?;

    let mut frontier_csv = String::from("method,hyperparameters,accuracy,hard_churn\n");
    for p in &report.frontier {
        let label = if p.hyperparameters.is_empty() {
            "-".to_owned()
        } else {
            p.hyperparameters
                .iter()
                .map(|(k, v)| format!("{k}={v}"))
                .collect::<Vec<_>>()
                .join(",")
        };
        frontier_csv.push_str(&format!(
            "{},{},{},{}\n",
            p.method, label, p.accuracy, p.hard_churn
        ));
    }
    fs::write(dir.join("frontier.csv"), frontier_csv)?;

    // Cost curves: per method, the best w·error + (1−w)·churn over its grid.
    let mut cost_csv = String::from("method,tradeoff_weight,cost\n");
    let mut methods_seen: Vec<&str> = Vec::new();
    for r in &report.records {
        if !methods_seen.contains(&r.method.as_str()) {
            methods_seen.push(&r.method);
        }
    }
    for method in methods_seen {
        for step in 0..=20 {
            let w = step as f64 / 20.0;
            let cost = report
                .records
                .iter()
                .filter(|r| r.method == method)
                .map(|r| w * (1.0 - r.accuracy.mean) + (1.0 - w) * r.hard_churn.mean)
                .fold(f64::INFINITY, f64::min);
            cost_csv.push_str(&format!("{method},{w},{cost}\n"));
        }
    }
    fs::write(dir.join("cost_curves.csv"), cost_csv)?;

    let mut selections_csv =
        String::from("method,qualified,hyperparameters,accuracy,hard_churn\n");
    for s in &report.selections {
        match &s.selection {
            Some(sel) => {
                let label = if sel.hyperparameters.is_empty() {
                    "-".to_owned()
                } else {
                    sel.hyperparameters
                        .iter()
                        .map(|(k, v)| format!("{k}={v}"))
                        .collect::<Vec<_>>()
                        .join(",")
                };
                selections_csv.push_str(&format!(
                    "{},yes,{},{},{}\n",
                    s.method, label, sel.accuracy, sel.hard_churn
                ));
            }
            None => selections_csv.push_str(&format!("{},no,,,\n", s.method)),
        }
    }
    fs::write(dir.join("selections.csv"), selections_csv)?;
    Ok(())
}

fn default_lambda_grid() -> Vec<f64> {
    default_hyper_grid()
}

fn default_mode() -> AlgorithmMode {
    AlgorithmMode::Ensemble
}

fn default_sweep_init() -> SweepInit {
    SweepInit::Cold
}

/// Plan for a standalone λ-grid sweep run: train the base model on the
/// initial split, the sweep on the combined data, then resolve the
/// churn-constrained selection.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepPlan {
    pub dataset: DatasetSource,
    pub split: SplitSpec,
    pub hidden_dim: usize,
    pub scoring: Scoring,
    #[serde(default = "default_lambda_grid")]
    pub lambda_grid: Vec<f64>,
    pub epsilon: f64,
    #[serde(default = "default_mode")]
    pub mode: AlgorithmMode,
    #[serde(default = "default_sweep_init")]
    pub init: SweepInit,
    pub seed: u64,
    pub train: TrainConfig,
}

impl SweepPlan {
    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::Plan(e.to_string()))
    }
}

/// Execute a sweep plan end to end; the returned run carries the manifest
/// material (sweep) and the selection report.
pub fn run_sweep_plan(plan: &SweepPlan) -> Result<AlgorithmOneRun> {
    let (data, _) = load_dataset(&plan.dataset, plan.seed)?;
    let split = draw_split(plan.seed, &plan.split, &data, 0)?;
    let dims = ModelDims::new(data.feature_dim(), plan.hidden_dim, data.num_classes())?;
    let base_seed = seeds::derive(plan.seed, &[0xBA5E, 0]);
    let base = nn::train(
        &init_cold(dims, base_seed),
        &split.initial.one_hot_batch()?,
        &split.validation,
        &plan.train.with_seed(base_seed),
        &plan.scoring,
    )?
    .model;
    let grid = LambdaGrid::new(plan.lambda_grid.clone())?;
    let budget = ChurnBudget::new(plan.epsilon)?;
    run_algorithm_one(
        &split.combined,
        &split.validation,
        &base,
        &grid,
        &budget,
        plan.init,
        &plan.train.with_seed(seeds::derive(plan.seed, &[0x53EE, 0])),
        &plan.scoring,
        plan.mode,
    )
}
