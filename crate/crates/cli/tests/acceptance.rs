//! Acceptance suite. Each test pins one release criterion at its stated
//! tolerance and prints a single pass/fail line:
//!
//!   cargo test -p ordglm-cli --test acceptance -- --nocapture

use std::path::PathBuf;
use std::process::Command;
use std::sync::OnceLock;
use std::time::Instant;

use ordglm::diagnostics::{
    run_calibration, run_efficiency, run_gradient_cases, run_isotonic_cases, run_oracle_cases,
    run_unconstrained_cases, run_weight_checks, IsotonicCase, OracleCase,
};

const SEED: u64 = 661_057;
const ORACLE_INSTANCES_PER_FAMILY: usize = 200;
const ISOTONIC_INSTANCES: usize = 100;
const GRADIENT_INSTANCES_PER_FAMILY: usize = 50;
const UNCONSTRAINED_INSTANCES_PER_FAMILY: usize = 100;
const WEIGHT_SIMS: usize = 10_000;
const CALIBRATION_REPLICATES: usize = 2000;
const CALIBRATION_SIMS: usize = 2000;
const EFFICIENCY_REPLICATES: usize = 1000;

static ORACLE: OnceLock<(Vec<OracleCase>, f64)> = OnceLock::new();
static ISOTONIC: OnceLock<Vec<IsotonicCase>> = OnceLock::new();

fn oracle_cases() -> &'static (Vec<OracleCase>, f64) {
    ORACLE.get_or_init(|| {
        let start = Instant::now();
        let cases = run_oracle_cases(ORACLE_INSTANCES_PER_FAMILY, SEED).expect("oracle suite");
        (cases, start.elapsed().as_secs_f64())
    })
}

fn isotonic_cases() -> &'static [IsotonicCase] {
    ISOTONIC.get_or_init(|| run_isotonic_cases(ISOTONIC_INSTANCES, SEED).expect("isotonic suite"))
}

fn report(criterion: &str, pass: bool, detail: &str) {
    println!(
        "criterion {criterion}: {} - {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {criterion} failed: {detail}");
}

#[test]
fn criterion_01_oracle_equivalence() {
    let (cases, elapsed) = oracle_cases();
    let max_diff = cases.iter().map(|c| c.abs_diff).fold(0.0f64, f64::max);
    let all_converged = cases.iter().all(|c| c.converged);
    let pass = max_diff <= 1e-7 && all_converged && *elapsed <= 300.0;
    report(
        "1 (oracle equivalence)",
        pass,
        &format!(
            "{} instances, max |loglik - enumeration| = {max_diff:.2e}, all converged = {all_converged}, {elapsed:.1}s",
            cases.len()
        ),
    );
}

#[test]
fn criterion_02_kkt_characterization() {
    let (cases, _) = oracle_cases();
    let converged: Vec<_> = cases.iter().filter(|c| c.converged).collect();
    let failures = converged.iter().filter(|c| !c.kkt_pass).count();
    report(
        "2 (KKT characterization)",
        failures == 0 && !converged.is_empty(),
        &format!("{} converged fits, {} KKT failures", converged.len(), failures),
    );
}

#[test]
fn criterion_03_isotonic_specialization() {
    let cases = isotonic_cases();
    let max_diff = cases.iter().map(|c| c.max_abs_diff).fold(0.0f64, f64::max);
    report(
        "3 (isotonic specialization)",
        cases.len() == ISOTONIC_INSTANCES && max_diff <= 1e-8,
        &format!("{} single-factor fits, max |fit - PAVA| = {max_diff:.2e}", cases.len()),
    );
}

#[test]
fn criterion_04_derivative_correctness() {
    let cases =
        run_gradient_cases(GRADIENT_INSTANCES_PER_FAMILY, SEED).expect("gradient suite");
    let max_grad = cases.iter().map(|c| c.gradient_rel_err).fold(0.0f64, f64::max);
    let max_hess = cases.iter().map(|c| c.hessian_rel_err).fold(0.0f64, f64::max);
    report(
        "4 (derivative correctness)",
        max_grad < 1e-5 && max_hess < 1e-5,
        &format!(
            "{} instances, max rel err: gradient {max_grad:.2e}, hessian {max_hess:.2e}",
            cases.len()
        ),
    );
}

#[test]
fn criterion_05_monotone_objective_and_feasibility() {
    let (oracle, _) = oracle_cases();
    let isotonic = isotonic_cases();
    let monotone = oracle.iter().all(|c| c.trace_monotone)
        && isotonic.iter().all(|c| c.trace_monotone);
    let feasible = oracle.iter().all(|c| c.feasible_path)
        && isotonic.iter().all(|c| c.feasible_path);
    report(
        "5 (monotone objective, feasible iterates)",
        monotone && feasible,
        &format!(
            "{} fits: objective nondecreasing within 1e-10 = {monotone}, min_J beta >= -1e-12 = {feasible}",
            oracle.len() + isotonic.len()
        ),
    );
}

#[test]
fn criterion_06_unconstrained_agreement() {
    let cases = run_unconstrained_cases(UNCONSTRAINED_INSTANCES_PER_FAMILY, SEED)
        .expect("unconstrained suite");
    let comparable: Vec<_> = cases.iter().filter(|c| c.comparable).collect();
    let max_diff = comparable
        .iter()
        .map(|c| c.max_coef_diff)
        .fold(0.0f64, f64::max);
    let j_empty = comparable.iter().filter(|c| c.j_empty).count();
    report(
        "6 (unconstrained agreement)",
        !comparable.is_empty() && j_empty > 0 && max_diff <= 1e-8,
        &format!(
            "{} comparable instances ({} with empty J), max coefficient diff = {max_diff:.2e}",
            comparable.len(),
            j_empty
        ),
    );
}

#[test]
fn criterion_07_chibar_weights() {
    let checks = run_weight_checks(WEIGHT_SIMS, SEED).expect("weight checks");
    let worst = checks
        .iter()
        .map(|c| c.max_standard_errors)
        .fold(0.0f64, f64::max);
    let detail: Vec<String> = checks
        .iter()
        .map(|c| {
            format!(
                "m={}: {:?} vs {:?}",
                c.dimension,
                c.weights.iter().map(|w| (w * 1e4).round() / 1e4).collect::<Vec<_>>(),
                c.expected
            )
        })
        .collect();
    report(
        "7 (chi-bar weights)",
        worst <= 3.0,
        &format!("{}; worst deviation {worst:.2} MC standard errors", detail.join("; ")),
    );
}

#[test]
fn criterion_08_lrt_calibration() {
    let start = Instant::now();
    let calibration = run_calibration(CALIBRATION_REPLICATES, CALIBRATION_SIMS, SEED)
        .expect("calibration suite");
    let elapsed = start.elapsed().as_secs_f64();
    let pass = calibration.rate >= 0.035 && calibration.rate <= 0.065 && elapsed <= 900.0;
    report(
        "8 (LRT calibration)",
        pass,
        &format!(
            "rejection rate {:.4} over {} replicates (nominal 0.05, band [0.035, 0.065]), {elapsed:.1}s",
            calibration.rate, calibration.replicates
        ),
    );
}

#[test]
fn criterion_09_efficiency_gain() {
    let result = run_efficiency(EFFICIENCY_REPLICATES, SEED).expect("efficiency suite");
    report(
        "9 (small-sample efficiency)",
        result.ratio < 1.0,
        &format!(
            "MSE constrained {:.5} vs unconstrained {:.5}, ratio {:.4} over {} replicates",
            result.mse_constrained, result.mse_unconstrained, result.ratio, result.replicates
        ),
    );
}

#[test]
fn criterion_10_report_determinism() {
    let dir = std::env::temp_dir().join(format!("ordglm-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let data = dir.join("det.csv");
    let config = dir.join("det.json");
    let mut csv = String::from("y,g\n");
    let ys = [
        0.31, -0.42, 0.95, 0.12, -0.77, 0.58, 1.21, 0.44, 0.03, 0.89, 1.12, 0.27, 0.66, 1.05,
        0.51, 0.73, 1.33, 0.18, 0.92, 0.61,
    ];
    for (i, y) in ys.iter().enumerate() {
        csv.push_str(&format!("{y},{}\n", if i % 2 == 0 { "lo" } else { "hi" }));
    }
    std::fs::write(&data, csv).unwrap();
    std::fs::write(
        &config,
        r#"{
          "family": "gaussian",
          "response": "y",
          "factors": [{"column": "g", "levels": ["lo", "hi"]}],
          "test": {"null": {"factor": "g"}, "method": "parametric_bootstrap", "n_sim": 500, "seed": 31}
        }"#,
    )
    .unwrap();

    let run = |out: &PathBuf| {
        let status = Command::new(env!("CARGO_BIN_EXE_ordglm"))
            .args([
                "test",
                "--data",
                data.to_str().unwrap(),
                "--config",
                config.to_str().unwrap(),
                "--out",
                out.to_str().unwrap(),
            ])
            .status()
            .expect("binary runs");
        assert!(status.success());
    };
    let first = dir.join("report-1.json");
    let second = dir.join("report-2.json");
    run(&first);
    run(&second);
    let bytes_first = std::fs::read(&first).unwrap();
    let bytes_second = std::fs::read(&second).unwrap();
    report(
        "10 (report determinism)",
        bytes_first == bytes_second,
        &format!(
            "two consecutive runs produced {} identical bytes",
            bytes_first.len()
        ),
    );
}
