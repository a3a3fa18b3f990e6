use churn::algorithm::{resolve_algorithm_one, save_sweep, AlgorithmMode};
use churn::error::Error;
use churn::experiment::{
    run_experiment, run_sweep_plan, write_csv_exports, write_report, ExperimentPlan,
    ExperimentReport, SweepPlan,
};
use churn::simplex::ChurnBudget;
use churn::verify::run_verification_suite;
use clap::{Parser, Subcommand};
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

/// Churn-constrained classifier training via distillation against a base
/// model.
#[derive(Parser)]
#[command(name = "churn", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment plan and write the report directory.
    Run {
        /// Plan file (TOML).
        #[arg(long)]
        plan: PathBuf,
        /// Output directory for report.json and the CSV exports.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the oracle verification suite; exits non-zero on any failure.
    OracleCheck {
        #[arg(long, default_value_t = 17)]
        seed: u64,
        /// Where to write the machine-readable outcomes (JSON).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export the CSV views of an existing report.
    Frontier {
        /// Path to a report.json produced by `run`.
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a λ-grid sweep and write its artifact directory, or re-resolve
    /// the constrained selection from an existing manifest.
    Sweep {
        /// Sweep plan file (TOML). Omit when using --from-manifest.
        #[arg(long, required_unless_present = "from_manifest", conflicts_with = "from_manifest")]
        plan: Option<PathBuf>,
        /// Existing sweep directory; step two reruns without retraining.
        #[arg(long)]
        from_manifest: Option<PathBuf>,
        /// Churn budget ε (required with --from-manifest).
        #[arg(long)]
        epsilon: Option<f64>,
        /// ensemble | single-best (with --from-manifest; default ensemble).
        #[arg(long)]
        mode: Option<String>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_mode(text: Option<&str>) -> Result<AlgorithmMode, Error> {
    match text {
        None | Some("ensemble") => Ok(AlgorithmMode::Ensemble),
        Some("single-best") => Ok(AlgorithmMode::SingleBest),
        Some(other) => Err(Error::Plan(format!(
            "unknown mode {other:?}; expected ensemble or single-best"
        ))),
    }
}

fn configure_parallelism() {
    if let Ok(value) = std::env::var("CHURN_PARALLELISM") {
        if let Ok(threads) = value.parse::<usize>() {
            if threads >= 1 {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build_global();
            }
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    match cli.command {
        Command::Run { plan, out } => {
            let plan = ExperimentPlan::from_toml_file(&plan)?;
            let report = run_experiment(&plan)?;
            write_report(&report, &out)?;
            println!(
                "base accuracy {:.4} ± {:.4} over {} trials",
                report.base_accuracy.mean, report.base_accuracy.stderr, plan.num_trials
            );
            for sel in &report.selections {
                match &sel.selection {
                    Some(s) => println!(
                        "{:<16} churn-at-cold-accuracy {:.4} (accuracy {:.4})",
                        sel.method, s.hard_churn, s.accuracy
                    ),
                    None => println!("{:<16} no qualifying setting", sel.method),
                }
            }
            println!("report written to {}", out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::OracleCheck { seed, out } => {
            let outcomes = run_verification_suite(seed)?;
            let mut failed = 0usize;
            for o in &outcomes {
                let status = if o.pass { "PASS" } else { "FAIL" };
                println!(
                    "[{status}] {:<44} measured {:>12.6e} tolerance {:>12.6e}",
                    o.name, o.measured, o.tolerance
                );
                if !o.pass {
                    failed += 1;
                }
            }
            if let Some(path) = out {
                fs::write(&path, serde_json::to_string_pretty(&outcomes)?)?;
                println!("outcomes written to {}", path.display());
            }
            if failed > 0 {
                eprintln!("{failed} check(s) failed");
                return Ok(ExitCode::FAILURE);
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Frontier { report, out } => {
            let report: ExperimentReport = serde_json::from_str(&fs::read_to_string(&report)?)?;
            write_csv_exports(&report, &out)?;
            println!("CSV exports written to {}", out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep { plan, from_manifest, epsilon, mode, out } => {
            let run = match (plan, from_manifest) {
                (Some(plan_path), None) => {
                    let plan = SweepPlan::from_toml_file(&plan_path)?;
                    let run = run_sweep_plan(&plan)?;
                    save_sweep(&run.sweep, &plan.scoring, &out)?;
                    run
                }
                (None, Some(dir)) => {
                    let (sweep, phi) = churn::algorithm::load_sweep(&dir)?;
                    let epsilon = epsilon.ok_or_else(|| {
                        Error::Plan("--epsilon is required with --from-manifest".into())
                    })?;
                    let budget = ChurnBudget::new(epsilon)?;
                    let mode = parse_mode(mode.as_deref())?;
                    resolve_algorithm_one(sweep, &budget, &phi, mode)?
                }
                _ => unreachable!("clap enforces exactly one of --plan / --from-manifest"),
            };
            fs::create_dir_all(&out)?;
            fs::write(
                out.join("algorithm_report.json"),
                serde_json::to_string_pretty(&run.report)?,
            )?;
            println!(
                "{} members, feasible: {}, risk {:.4}, churn {:.6} (ε {:.6})",
                run.report.members.len(),
                run.report.feasible,
                run.report.risk,
                run.report.churn,
                run.report.epsilon
            );
            println!("artifacts written to {}", out.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    configure_parallelism();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
