//! Statistical tendencies observed on pilot runs and kept as regression
//! checks: majority-vote assertions, not hard invariants, since individual
//! seeds can legitimately buck the trend.

use churn::algorithm::{run_lambda_sweep, LambdaGrid, SweepInit};
use churn::data::{make_synthetic, SyntheticKind};
use churn::experiment::{run_experiment, DatasetSource, ExperimentPlan, MethodSpec, SplitSpec};
use churn::nn::{self, init_cold, ModelDims, TrainConfig};
use churn::simplex::Scoring;

/// Across the λ grid, lower λ leans harder on the teacher, so empirical
/// churn should mostly decrease as λ decreases: over 5 seeds, the majority
/// of adjacent grid pairs must be ordered.
#[test]
fn sweep_churn_tends_to_increase_with_lambda() {
    let phi = Scoring::cross_entropy();
    let grid = LambdaGrid::practical();
    let mut ordered = 0usize;
    let mut total = 0usize;
    for seed in 0..5u64 {
        let (data, _) = make_synthetic(SyntheticKind::GaussianBlobs, 2, 2, 460, 50 + seed).unwrap();
        let train = data.subset(&(0..260).collect::<Vec<_>>());
        let validation = data.subset(&(260..320).collect::<Vec<_>>()).one_hot_batch().unwrap();
        let base_data = data.subset(&(320..460).collect::<Vec<_>>());
        let cfg = TrainConfig {
            max_epochs: 20,
            patience: 3,
            ..TrainConfig::default()
        }
        .with_seed(seed);
        let dims = ModelDims::new(2, 8, 2).unwrap();
        let base = nn::train(
            &init_cold(dims, seed),
            &base_data.one_hot_batch().unwrap(),
            &validation,
            &cfg,
            &phi,
        )
        .unwrap()
        .model;
        let sweep =
            run_lambda_sweep(&train, &validation, &base, &grid, SweepInit::Cold, &cfg, &phi)
                .unwrap();
        let stats = sweep.member_stats(&phi).unwrap();
        for pair in stats.windows(2) {
            total += 1;
            if pair[0].churn <= pair[1].churn {
                ordered += 1;
            }
        }
    }
    assert!(
        2 * ordered > total,
        "only {ordered}/{total} adjacent pairs ordered"
    );
}

/// A λ = 0 member mimics the base model outright, so its test hard churn
/// should undercut cold start in the majority of seeds.
#[test]
fn pure_teacher_mimic_beats_cold_churn() {
    let plan = ExperimentPlan {
        dataset: DatasetSource::Synthetic {
            kind: SyntheticKind::GaussianBlobs,
            dims: 2,
            classes: 2,
            n: 520,
        },
        split: SplitSpec {
            initial_size: 130,
            batch_size: 130,
            validation_size: 50,
            test_fraction: 0.3,
        },
        hidden_dim: 8,
        scoring: Scoring::cross_entropy(),
        methods: vec![
            MethodSpec::Cold,
            MethodSpec::Distill { lambdas: vec![0.0] },
        ],
        num_trials: 10,
        seed: 31,
        train: TrainConfig {
            max_epochs: 25,
            patience: 3,
            ..TrainConfig::default()
        },
    };
    let report = run_experiment(&plan).unwrap();
    let cold = report.records.iter().find(|r| r.method == "cold").unwrap();
    let mimic = report.records.iter().find(|r| r.method == "distill").unwrap();
    let wins = mimic
        .trial_hard_churn
        .iter()
        .zip(&cold.trial_hard_churn)
        .filter(|(d, c)| d <= c)
        .count();
    assert!(wins > 5, "teacher mimic beat cold churn in only {wins}/10 seeds");
}
