//! Order-constrained GLM fitting from the command line.
//!
//! Exit codes: 0 success, 1 input error, 2 non-convergence, 3 selfcheck
//! failure.

mod config;
mod data;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};

use config::RunConfig;
use ordglm::diagnostics::{selfcheck, SelfCheckScale};
use ordglm::inference::lrt;
use ordglm::solver::{fit, FitStatus, SolverOptions};
use ordglm::{build_model, Error as CoreError};
use report::Report;

#[derive(Parser)]
#[command(name = "ordglm", version, about = "Maximum likelihood for GLMs with monotone ordinal predictors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the constrained model and report coefficients, KKT status, and
    /// the convergence trace.
    Fit(RunArgs),
    /// Fit the model and run the configured likelihood ratio test.
    Test(RunArgs),
    /// Run the randomized diagnostic suites (oracle equivalence, derivative
    /// checks, isotonic specialization, mixture weights, calibration).
    Selfcheck(SelfcheckArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Headered CSV data file.
    #[arg(long)]
    data: PathBuf,
    /// JSON model configuration.
    #[arg(long)]
    config: PathBuf,
    /// Report destination; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Simulation seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Simulation count; overrides the config.
    #[arg(long)]
    nsim: Option<usize>,
    /// Multiplier tolerance of the active set loop.
    #[arg(long)]
    tol_kkt: Option<f64>,
    /// Feasibility slack on constrained coordinates.
    #[arg(long)]
    tol_feas: Option<f64>,
    /// Outer iteration cap (default 10 * p).
    #[arg(long)]
    max_iter: Option<usize>,
}

#[derive(Args)]
struct SelfcheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Oracle-equivalence instances per family.
    #[arg(long, default_value_t = SelfCheckScale::default().oracle_per_family)]
    oracle_cases: usize,
    /// Finite-difference derivative checks per family.
    #[arg(long, default_value_t = SelfCheckScale::default().gradient_per_family)]
    gradient_cases: usize,
    /// Gaussian single-factor PAVA comparisons.
    #[arg(long, default_value_t = SelfCheckScale::default().isotonic_cases)]
    isotonic_cases: usize,
    /// Simulation size of the mixture-weight checks.
    #[arg(long, default_value_t = SelfCheckScale::default().weight_sims)]
    weight_sims: usize,
    /// Outer replicates of the null-calibration suite.
    #[arg(long, default_value_t = SelfCheckScale::default().calibration_replicates)]
    calibration_reps: usize,
    /// Simulation size per calibration test.
    #[arg(long, default_value_t = SelfCheckScale::default().calibration_sims)]
    calibration_sims: usize,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Text,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Fit(args) => run_model(&args, false),
        Command::Test(args) => run_model(&args, true),
        Command::Selfcheck(args) => run_selfcheck(&args),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

fn solver_options(config: &RunConfig, args: &RunArgs) -> SolverOptions {
    let mut options = SolverOptions::default();
    if let Some(t) = &config.tolerances {
        if let Some(v) = t.kkt {
            options.kkt_tol = v;
        }
        if let Some(v) = t.feasibility {
            options.feas_tol = v;
        }
        if let Some(v) = t.max_outer {
            options.max_outer = Some(v);
        }
    }
    if let Some(v) = args.tol_kkt {
        options.kkt_tol = v;
    }
    if let Some(v) = args.tol_feas {
        options.feas_tol = v;
    }
    if let Some(v) = args.max_iter {
        options.max_outer = Some(v);
    }
    options
}

fn run_model(args: &RunArgs, with_test: bool) -> anyhow::Result<u8> {
    let config = RunConfig::load(&args.config)?;
    let table = data::read_table(&args.data, &config.numeric_columns(), &config.factor_columns())?;
    let spec = config.model_spec()?;
    let model = build_model(&spec, &table)?;
    let options = solver_options(&config, args);

    for warning in model.design().warnings() {
        eprintln!("warning: {warning}");
    }

    let result = fit(&model, &options)?;
    let mut exit = match result.status {
        FitStatus::Converged => 0u8,
        _ => 2u8,
    };

    let test = if with_test && result.status != FitStatus::Converged {
        eprintln!("error: cannot test, the alternative fit did not converge");
        exit = 2;
        None
    } else if with_test {
        let (null, lrt_options) = config.lrt_request(args.seed, args.nsim, options.clone())?;
        match lrt(&model, &null, &lrt_options) {
            Ok(outcome) => Some(outcome),
            Err(CoreError::LrtFitFailed { alt, null }) => {
                eprintln!("error: fits did not converge (alternative: {alt}, null: {null})");
                exit = 2;
                None
            }
            Err(other) => return Err(other.into()),
        }
    } else {
        None
    };

    let report = Report::build(&model, &result, test);
    let rendered = match args.format {
        Format::Json => report.to_json(),
        Format::Text => report.to_text(),
    };
    match &args.out {
        Some(path) => std::fs::write(path, rendered)
            .with_context(|| format!("cannot write report to {}", path.display()))?,
        None => print!("{rendered}"),
    }
    Ok(exit)
}

fn run_selfcheck(args: &SelfcheckArgs) -> anyhow::Result<u8> {
    let scale = SelfCheckScale {
        oracle_per_family: args.oracle_cases,
        gradient_per_family: args.gradient_cases,
        isotonic_cases: args.isotonic_cases,
        weight_sims: args.weight_sims,
        calibration_replicates: args.calibration_reps,
        calibration_sims: args.calibration_sims,
    };
    let report = selfcheck(&scale, args.seed)?;
    let rendered = match args.format {
        Format::Json => {
            let mut text = serde_json::to_string_pretty(&report)?;
            text.push('\n');
            text
        }
        Format::Text => {
            let mut text = String::new();
            for suite in &report.suites {
                text.push_str(&format!(
                    "{:<26} {:>5} cases  {}\n",
                    suite.suite,
                    suite.cases,
                    if suite.pass { "pass" } else { "FAIL" }
                ));
                for failure in &suite.failures {
                    text.push_str(&format!(
                        "    seed {:?} family {:?}: {}\n",
                        failure.case_seed, failure.family, failure.detail
                    ));
                }
            }
            text.push_str(&format!(
                "selfcheck: {}\n",
                if report.pass { "pass" } else { "FAIL" }
            ));
            text
        }
    };
    match &args.out {
        Some(path) => std::fs::write(path, rendered)
            .with_context(|| format!("cannot write report to {}", path.display()))?,
        None => print!("{rendered}"),
    }
    Ok(if report.pass { 0 } else { 3 })
}
