//! `commgt`: simulate the two-stage community group-testing scheme, sweep
//! parameters, evaluate the closed-form test counts, and run the verification
//! grids.
//!
//! Exit codes: 0 success, 1 verification/check failure, 2 configuration
//! error. Data goes to `--output` (or stdout); progress and diagnostics go to
//! stderr only. Output is byte-identical for a fixed seed regardless of
//! `--threads`.

mod config;

use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use commgt::bounds::BoundReport;
use commgt::verify::{
    dilution_error_rate, mc_error_rate, verify_closed_forms, verify_mc_moments,
    verify_outcome_equivalence, verify_proposition1, verify_proposition2, verify_regime_bounds,
    McReport, Prop1Grid, Prop2Grid, RegimeGrid, TrialOptions, VerificationReport,
};

use config::{ConfigError, ExperimentConfig, Mode, VerifyGrids};

#[derive(Parser)]
#[command(
    name = "commgt",
    version,
    about = "Two-stage community group testing under a pool-size budget"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate trials of the configured scheme and record the results.
    Simulate(RunArgs),
    /// Re-run the simulation once per swept value; one record per value.
    Sweep(RunArgs),
    /// Evaluate the closed-form test counts, regime bounds, and ratios.
    Bounds(RunArgs),
    /// Run the verification grids; exits 1 if any check fails.
    Verify(VerifyArgs),
    /// Shorthand for `simulate` with `mode = dilution`.
    Dilution(RunArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args)]
struct RunArgs {
    /// Key-value experiment file (see the book's CLI chapter).
    #[arg(long)]
    config: PathBuf,
    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Trial count override.
    #[arg(long)]
    trials: Option<u32>,
    /// Worker threads (results do not depend on this).
    #[arg(long)]
    threads: Option<usize>,
    /// Write here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Decoder-constant override.
    #[arg(long)]
    zeta: Option<f64>,
    /// Stop after stage 1.
    #[arg(long)]
    no_stage2: bool,
}

#[derive(Args)]
struct VerifyArgs {
    /// Optional grid-spec file (keys: outcome_trials, regime_points,
    /// prop1_f_max, prop2_u_max, prop2_budget_max, seed).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

enum CliError {
    Config(String),
    Check(String),
    Io(String),
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.0)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(args) => run_simulate(args, None),
        Command::Dilution(args) => run_simulate(args, Some(Mode::Dilution)),
        Command::Sweep(args) => run_sweep(args),
        Command::Bounds(args) => run_bounds(args),
        Command::Verify(args) => run_verify(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Check(message)) => {
            eprintln!("check failed: {message}");
            ExitCode::from(1)
        }
        Err(CliError::Config(message)) => {
            eprintln!("config error: {message}");
            ExitCode::from(2)
        }
        Err(CliError::Io(message)) => {
            eprintln!("io error: {message}");
            ExitCode::from(2)
        }
    }
}

fn install_threads(threads: Option<usize>) {
    if let Some(n) = threads {
        // Ignore the error if a pool already exists (tests call in-process).
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
}

fn load_config(args: &RunArgs, forced_mode: Option<Mode>) -> Result<ExperimentConfig, CliError> {
    let mut cfg = ExperimentConfig::from_file(&args.config)?;
    if let Some(mode) = forced_mode {
        cfg.mode = mode;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(trials) = args.trials {
        cfg.trials = trials;
    }
    if let Some(zeta) = args.zeta {
        cfg.zeta = Some(zeta);
    }
    if args.no_stage2 {
        cfg.stage2 = false;
    }
    Ok(cfg)
}

fn emit(output: &Option<PathBuf>, text: &str) -> Result<(), CliError> {
    match output {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// The metadata block every JSON document carries. Deliberately excludes the
/// thread count so output bytes do not depend on parallelism.
fn metadata(command: &str, cfg: &ExperimentConfig) -> serde_json::Value {
    json!({
        "command": command,
        "mode": match cfg.mode { Mode::Community => "community", Mode::Dilution => "dilution" },
        "version": env!("CARGO_PKG_VERSION"),
        "seed": cfg.seed,
        "log_base": "natural",
        "zeta": cfg.zeta.unwrap_or_else(commgt::params::default_zeta),
        "c_in": cfg.c_in,
        "trials": cfg.trials,
        "stage2": cfg.stage2,
    })
}

fn aggregate_json(report: &McReport) -> serde_json::Value {
    json!({
        "trials": report.trials,
        "stage1_errors": report.stage1_errors,
        "end_to_end_errors": report.end_to_end_errors,
        "stage1_error_rate": report.stage1_error_rate,
        "wilson_low": report.wilson_low,
        "wilson_high": report.wilson_high,
        "max_pool": report.max_pool,
    })
}

const TRIAL_CSV_HEADER: &str =
    "trial,stage1_tests,stage2_tests,total_tests,stage1_error,end_to_end_error,pool_size\n";

fn trials_csv(report: &McReport) -> String {
    let mut out = String::from(TRIAL_CSV_HEADER);
    for r in &report.records {
        let end_to_end = r.end_to_end_error.map_or(String::new(), |e| e.to_string());
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.trial, r.stage1_tests, r.stage2_tests, r.total_tests, r.stage1_error, end_to_end,
            r.pool_size
        );
    }
    out
}

fn run_simulate(args: RunArgs, forced_mode: Option<Mode>) -> Result<(), CliError> {
    install_threads(args.threads);
    let cfg = load_config(&args, forced_mode)?;
    let map_design =
        |e: commgt::design::DesignError| CliError::Config(format!("infeasible config: {e}"));

    let (document, report) = match cfg.mode {
        Mode::Community => {
            let p = cfg.parameters()?;
            let opts = TrialOptions {
                stage2: cfg.stage2,
                c_in: cfg.c_in,
            };
            eprintln!("simulate: {} community trials, seed {}", cfg.trials, p.seed);
            let (stage1, report) = mc_error_rate(&p, cfg.trials, opts).map_err(map_design)?;
            let bounds = BoundReport::compute(&p).map_err(|e| CliError::Config(e.to_string()))?;
            let doc = json!({
                "metadata": metadata("simulate", &cfg),
                "parameters": p,
                "stage1_config": stage1,
                "bounds": bounds,
                "aggregate": aggregate_json(&report),
                "trials": report.records,
            });
            (doc, report)
        }
        Mode::Dilution => {
            let dp = cfg.dilution()?;
            eprintln!(
                "simulate: {} dilution trials, seed {}",
                cfg.trials, dp.seed
            );
            let (dcfg, report) = dilution_error_rate(&dp, cfg.trials).map_err(map_design)?;
            let doc = json!({
                "metadata": metadata("simulate", &cfg),
                "parameters": dp,
                "dilution_config": dcfg,
                "aggregate": aggregate_json(&report),
                "trials": report.records,
            });
            (doc, report)
        }
    };

    match args.format {
        Format::Json => emit(
            &args.output,
            &format!("{}\n", serde_json::to_string_pretty(&document).unwrap()),
        ),
        Format::Csv => {
            eprintln!(
                "aggregate: {} errors / {} trials (rate {:.6})",
                report.stage1_errors, report.trials, report.stage1_error_rate
            );
            emit(&args.output, &trials_csv(&report))
        }
    }
}

const SWEEP_CSV_HEADER: &str = "sweep_var,value,rho,alpha,t1_tests,formula_t1,stage1_errors,\
                                trials,stage1_error_rate,wilson_low,wilson_high,t1_theorem,t1_corollary\n";

fn run_sweep(args: RunArgs) -> Result<(), CliError> {
    install_threads(args.threads);
    let cfg = load_config(&args, None)?;
    let Some((var, values)) = cfg.sweep.clone() else {
        return Err(CliError::Config(
            "sweep needs `sweep_var` and `sweep_values` in the config".into(),
        ));
    };
    let map_design =
        |e: commgt::design::DesignError| CliError::Config(format!("infeasible config: {e}"));

    let mut rows_json = Vec::new();
    let mut csv = String::from(SWEEP_CSV_HEADER);
    for &value in &values {
        let point = cfg.with_swept(&var, value)?;
        eprintln!("sweep: {var} = {value}");
        match point.mode {
            Mode::Community => {
                let p = point.parameters()?;
                let opts = TrialOptions {
                    stage2: point.stage2,
                    c_in: point.c_in,
                };
                let (stage1, report) = mc_error_rate(&p, point.trials, opts).map_err(map_design)?;
                let bounds =
                    BoundReport::compute(&p).map_err(|e| CliError::Config(e.to_string()))?;
                let _ = writeln!(
                    csv,
                    "{var},{value},{},{},{},{},{},{},{},{},{},{},{}",
                    stage1.rho,
                    stage1.alpha,
                    stage1.tests,
                    stage1.formula_tests,
                    report.stage1_errors,
                    report.trials,
                    report.stage1_error_rate,
                    report.wilson_low,
                    report.wilson_high,
                    bounds.t1_theorem,
                    bounds.t1_corollary
                );
                rows_json.push(json!({
                    "sweep_var": var,
                    "value": value,
                    "stage1_config": stage1,
                    "aggregate": aggregate_json(&report),
                    "t1_theorem": bounds.t1_theorem,
                    "t1_corollary": bounds.t1_corollary,
                }));
            }
            Mode::Dilution => {
                let dp = point.dilution()?;
                let (dcfg, report) =
                    dilution_error_rate(&dp, point.trials).map_err(map_design)?;
                let _ = writeln!(
                    csv,
                    "{var},{value},{},{},{},{},{},{},{},{},{},,",
                    dcfg.rho,
                    dp.alpha,
                    dcfg.tests,
                    dcfg.formula_tests,
                    report.stage1_errors,
                    report.trials,
                    report.stage1_error_rate,
                    report.wilson_low,
                    report.wilson_high
                );
                rows_json.push(json!({
                    "sweep_var": var,
                    "value": value,
                    "dilution_config": dcfg,
                    "aggregate": aggregate_json(&report),
                }));
            }
        }
    }

    match args.format {
        Format::Json => {
            let doc = json!({ "metadata": metadata("sweep", &cfg), "rows": rows_json });
            emit(
                &args.output,
                &format!("{}\n", serde_json::to_string_pretty(&doc).unwrap()),
            )
        }
        Format::Csv => emit(&args.output, &csv),
    }
}

fn run_bounds(args: RunArgs) -> Result<(), CliError> {
    install_threads(args.threads);
    let cfg = load_config(&args, None)?;
    let (p, budget) = cfg.bound_parameters()?;
    let report =
        BoundReport::compute_with_budget(&p, budget).map_err(|e| CliError::Config(e.to_string()))?;
    match args.format {
        Format::Json => {
            let doc = json!({ "metadata": metadata("bounds", &cfg), "report": report });
            emit(
                &args.output,
                &format!("{}\n", serde_json::to_string_pretty(&doc).unwrap()),
            )
        }
        Format::Csv => {
            let mut csv = String::from(
                "rho_hat,f_rhohat,t1_theorem,t1_corollary,regime,regime_lower_bound,\
                 regime_bound_holds,t2_linear,ignore_community,community_unconstrained_stage1,\
                 community_unconstrained_stage2,community_constrained_stage1,\
                 ratio_total_vs_ignore_community,ratio_stage1_vs_constrained,budget_branch\n",
            );
            let branch = serde_json::to_value(report.ratios.budget_branch).unwrap();
            let _ = writeln!(
                csv,
                "{},{},{},{},{:?},{},{},{},{},{},{},{},{},{},{}",
                report.rho_hat,
                report.f_rhohat,
                report.t1_theorem,
                report.t1_corollary,
                report.regime,
                report.regime_lower_bound,
                report.regime_bound_holds,
                report.t2_linear,
                report.baselines.ignore_community,
                report.baselines.community_unconstrained_stage1,
                report.baselines.community_unconstrained_stage2,
                report.baselines.community_constrained_stage1,
                report.ratios.total_vs_ignore_community,
                report.ratios.stage1_vs_constrained_baseline,
                branch.as_str().unwrap()
            );
            emit(&args.output, &csv)
        }
    }
}

fn run_verify(args: VerifyArgs) -> Result<(), CliError> {
    install_threads(args.threads);
    let mut grids = match &args.config {
        Some(path) => VerifyGrids::from_file(path)?,
        None => VerifyGrids::default(),
    };
    if let Some(seed) = args.seed {
        grids.seed = seed;
    }

    eprintln!("verify: score-moment inequality grid");
    let mut report = verify_proposition1(&Prop1Grid {
        families: (4..=grids.prop1_f_max).collect(),
        ..Prop1Grid::default()
    });
    eprintln!("verify: pool-objective monotonicity grid");
    report.merge(verify_proposition2(&Prop2Grid {
        u_max: grids.prop2_u_max,
        budget_max: grids.prop2_budget_max,
        ..Prop2Grid::default()
    }));
    eprintln!("verify: regime lower bounds");
    report.merge(verify_regime_bounds(&RegimeGrid {
        points: grids.regime_points,
        seed: grids.seed,
        tolerance: 1e-12,
    }));
    eprintln!("verify: closed forms vs enumeration");
    report.merge(verify_closed_forms(1e-12));
    eprintln!("verify: outcome equivalence ({} trials)", grids.outcome_trials);
    report.merge(verify_outcome_equivalence(grids.outcome_trials, grids.seed));
    eprintln!("verify: empirical score moments (100000 tests)");
    report.merge(verify_mc_moments(100_000, grids.seed));

    let pass = report.pass();
    let text = match args.format {
        Format::Json => {
            let doc = json!({
                "metadata": {
                    "command": "verify",
                    "version": env!("CARGO_PKG_VERSION"),
                    "seed": grids.seed,
                    "log_base": "natural",
                },
                "pass": pass,
                "report": report,
            });
            format!("{}\n", serde_json::to_string_pretty(&doc).unwrap())
        }
        Format::Csv => {
            let mut csv = String::from("check,points,failures,tolerance,pass\n");
            for c in &report.checks {
                let _ = writeln!(
                    csv,
                    "{},{},{},{},{}",
                    c.name, c.points, c.failures, c.tolerance, c.pass
                );
            }
            csv
        }
    };
    emit(&args.output, &text)?;
    if pass {
        Ok(())
    } else {
        Err(CliError::Check(summarize_failures(&report)))
    }
}

fn summarize_failures(report: &VerificationReport) -> String {
    let names: Vec<&str> = report
        .checks
        .iter()
        .filter(|c| !c.pass)
        .map(|c| c.name.as_str())
        .chain(
            report
                .sigma_bounds
                .iter()
                .filter(|s| !s.pass)
                .map(|s| s.name.as_str()),
        )
        .collect();
    format!("failing checks: {}", names.join(", "))
}
