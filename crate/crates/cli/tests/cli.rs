//! End-to-end runs of the ordglm binary.

use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ordglm"))
}

fn workdir(test: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("ordglm-cli-{}-{}", std::process::id(), test));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write(dir: &std::path::Path, name: &str, content: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, content).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

const TOY_CSV: &str = "y,dose\n3.0,low\n1.0,mid\n2.0,high\n";
const TOY_CONFIG: &str = r#"{
  "family": "gaussian",
  "response": "y",
  "factors": [{"column": "dose", "levels": ["low", "mid", "high"], "direction": "nondecreasing"}]
}"#;

#[test]
fn fit_reports_pooled_effects_on_the_toy_dataset() {
    let dir = workdir("toy");
    let data = write(&dir, "toy.csv", TOY_CSV);
    let config = write(&dir, "toy.json", TOY_CONFIG);
    let out = run(&[
        "fit",
        "--data",
        data.to_str().unwrap(),
        "--config",
        config.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["status"], "converged");
    assert_eq!(report["kkt"]["pass"], true);
    let levels = report["level_effects"][0]["levels"].as_array().unwrap();
    let intercept = report["coefficients"][0]["estimate"].as_f64().unwrap();
    for level in levels {
        let mean = intercept + level["effect"].as_f64().unwrap();
        assert!((mean - 2.0).abs() < 1e-9, "per-level mean {mean}");
    }
    assert!((report["loglik"].as_f64().unwrap() - (-1.0)).abs() < 1e-9);
}

#[test]
fn unconstrained_logistic_fit_matches_irls_oracle() {
    let dir = workdir("logit");
    let mut csv = String::from("y,x\n");
    let xs = [-1.3, -0.6, -0.2, 0.1, 0.4, 0.9, 1.5, -0.8, 0.3, 1.1];
    let ys = [0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 1.0];
    for (x, y) in xs.iter().zip(&ys) {
        csv.push_str(&format!("{y},{x}\n"));
    }
    let data = write(&dir, "logit.csv", &csv);
    let config = write(
        &dir,
        "logit.json",
        r#"{"family": "logistic", "response": "y", "covariates": ["x"]}"#,
    );
    let out = run(&[
        "fit",
        "--data",
        data.to_str().unwrap(),
        "--config",
        config.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();

    let design = ordglm::DesignSystem::from_parts(
        nalgebra::DMatrix::from_fn(10, 2, |i, j| if j == 0 { 1.0 } else { xs[i] }),
        vec![],
        vec![
            ordglm::ColumnRole::Intercept,
            ordglm::ColumnRole::Covariate { name: "x".into() },
        ],
    )
    .unwrap();
    let reference = ordglm::oracles::irls(&design, &ys).unwrap();
    for (j, expected) in reference.iter().enumerate() {
        let got = report["coefficients"][j]["estimate"].as_f64().unwrap();
        assert!((got - expected).abs() < 1e-8, "coef {j}: {got} vs {expected}");
    }
}

#[test]
fn missing_response_column_is_an_input_error() {
    let dir = workdir("missing");
    let data = write(&dir, "bad.csv", "z,dose\n1.0,low\n2.0,mid\n3.0,high\n");
    let config = write(&dir, "toy.json", TOY_CONFIG);
    let out = run(&[
        "fit",
        "--data",
        data.to_str().unwrap(),
        "--config",
        config.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("`y`"), "stderr: {stderr}");
}

#[test]
fn malformed_row_names_the_line() {
    let dir = workdir("badrow");
    let data = write(&dir, "bad.csv", "y,dose\n3.0,low\noops,mid\n2.0,high\n");
    let config = write(&dir, "toy.json", TOY_CONFIG);
    let out = run(&[
        "fit",
        "--data",
        data.to_str().unwrap(),
        "--config",
        config.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("line 3"), "stderr: {stderr}");
}

#[test]
fn missing_seed_for_simulation_is_an_input_error() {
    let dir = workdir("noseed");
    let data = write(&dir, "toy.csv", "y,dose\n3.0,low\n1.0,mid\n2.0,high\n0.5,low\n");
    let config = write(
        &dir,
        "test.json",
        r#"{
          "family": "gaussian",
          "response": "y",
          "factors": [{"column": "dose", "levels": ["low", "mid", "high"]}],
          "test": {"null": {"factor": "dose"}}
        }"#,
    );
    let out = run(&[
        "test",
        "--data",
        data.to_str().unwrap(),
        "--config",
        config.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed"));
}

#[test]
fn iteration_cap_yields_nonconvergence_exit() {
    let dir = workdir("cap");
    let data = write(&dir, "toy.csv", TOY_CSV);
    let config = write(&dir, "toy.json", TOY_CONFIG);
    let out = run(&[
        "fit",
        "--data",
        data.to_str().unwrap(),
        "--config",
        config.to_str().unwrap(),
        "--max-iter",
        "0",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["status"], "max_iterations");
}

#[test]
fn test_subcommand_on_nonconverged_fit_exits_two_with_report() {
    let dir = workdir("capttest");
    let data = write(&dir, "toy.csv", "y,dose\n3.0,low\n1.0,mid\n2.0,high\n0.5,low\n");
    let config = write(
        &dir,
        "test.json",
        r#"{
          "family": "gaussian",
          "response": "y",
          "factors": [{"column": "dose", "levels": ["low", "mid", "high"]}],
          "test": {"null": {"factor": "dose"}, "n_sim": 1500, "seed": 4}
        }"#,
    );
    let out = run(&[
        "test",
        "--data",
        data.to_str().unwrap(),
        "--config",
        config.to_str().unwrap(),
        "--max-iter",
        "0",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["status"], "max_iterations");
    assert!(report.get("test").is_none());
}

#[test]
fn reported_coefficients_reproduce_the_reported_loglik() {
    let dir = workdir("roundtrip");
    let mut csv = String::from("y,g,x\n");
    let levels = ["a", "b", "c", "d"];
    let ys = [
        0.3, 1.9, 0.8, 2.4, 1.1, 0.2, 2.8, 1.5, 0.9, 2.1, 1.7, 0.4, 2.2, 1.3, 0.6, 1.8,
    ];
    for (i, y) in ys.iter().enumerate() {
        csv.push_str(&format!("{y},{},{:.3}\n", levels[i % 4], (i as f64) * 0.13 - 1.0));
    }
    let data = write(&dir, "rt.csv", &csv);
    let config = write(
        &dir,
        "rt.json",
        r#"{
          "family": "gaussian",
          "response": "y",
          "factors": [{"column": "g", "levels": ["a", "b", "c", "d"]}],
          "covariates": ["x"]
        }"#,
    );
    let out = run(&[
        "fit",
        "--data",
        data.to_str().unwrap(),
        "--config",
        config.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let beta: Vec<f64> = report["coefficients"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["estimate"].as_f64().unwrap())
        .collect();

    // Rebuild the model the same way the CLI does and re-evaluate.
    let table = ordglm::ObservationTable::from_columns(vec![
        ("y".into(), ordglm::Column::Numeric(ys.to_vec())),
        (
            "g".into(),
            ordglm::Column::Label((0..16).map(|i| levels[i % 4].to_string()).collect()),
        ),
        (
            "x".into(),
            ordglm::Column::Numeric((0..16).map(|i| (i as f64) * 0.13 - 1.0).collect()),
        ),
    ])
    .unwrap();
    let spec = ordglm::ModelSpec {
        family: ordglm::Family::Gaussian,
        response: ordglm::ResponseColumns::Numeric { column: "y".into() },
        factors: vec![ordglm::OrderedFactor::new(
            "g",
            levels.iter().map(|s| s.to_string()).collect(),
            ordglm::Direction::Nondecreasing,
        )
        .unwrap()],
        covariates: vec!["x".into()],
        intercept: ordglm::InterceptPolicy::Automatic,
    };
    let model = ordglm::build_model(&spec, &table).unwrap();
    let objective = model
        .objective(&nalgebra::DVector::from_vec(beta))
        .unwrap();
    let reported = report["loglik"].as_f64().unwrap();
    assert!(
        (objective.loglik - reported).abs() <= 1e-12,
        "recomputed {} vs reported {}",
        objective.loglik,
        reported
    );
}

#[test]
fn nonincreasing_factor_reports_flipped_increments() {
    let dir = workdir("flip");
    let data = write(&dir, "flip.csv", "y,g\n3.0,a\n2.0,b\n1.0,c\n2.9,a\n1.9,b\n0.9,c\n");
    let config = write(
        &dir,
        "flip.json",
        r#"{
          "family": "gaussian",
          "response": "y",
          "factors": [{"column": "g", "levels": ["a", "b", "c"], "direction": "nonincreasing"}]
        }"#,
    );
    let out = run(&[
        "fit",
        "--data",
        data.to_str().unwrap(),
        "--config",
        config.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    // Raw solver coefficients stay in the nonnegative cone; the reported
    // increments and level effects carry the flipped sign.
    for coef in report["coefficients"].as_array().unwrap() {
        if coef["constrained"] == true {
            assert!(coef["estimate"].as_f64().unwrap() >= -1e-12);
            assert!(coef["increment"].as_f64().unwrap() <= 1e-12);
        }
    }
    let effects: Vec<f64> = report["level_effects"][0]["levels"]
        .as_array()
        .unwrap()
        .iter()
        .map(|l| l["effect"].as_f64().unwrap())
        .collect();
    for pair in effects.windows(2) {
        assert!(pair[1] <= pair[0] + 1e-12, "effects should be nonincreasing: {effects:?}");
    }
}

#[test]
fn selfcheck_replay_is_deterministic() {
    let args = [
        "selfcheck",
        "--seed",
        "77",
        "--oracle-cases",
        "5",
        "--gradient-cases",
        "3",
        "--isotonic-cases",
        "5",
        "--weight-sims",
        "1200",
        "--calibration-reps",
        "0",
    ];
    let first = run(&args);
    let second = run(&args);
    assert!(first.status.success());
    assert_eq!(first.stdout, second.stdout);
}

#[test]
fn selfcheck_zero_scale_passes() {
    let out = run(&[
        "selfcheck",
        "--oracle-cases",
        "0",
        "--gradient-cases",
        "0",
        "--isotonic-cases",
        "0",
        "--weight-sims",
        "0",
        "--calibration-reps",
        "0",
    ]);
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["pass"], true);
}

#[test]
fn shipped_example_dataset_fits_and_tests() {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..");
    let data = root.join("data/oncology-synthetic.csv");
    let config = root.join("data/oncology-synthetic.json");
    let out = run(&[
        "test",
        "--data",
        data.to_str().unwrap(),
        "--config",
        config.to_str().unwrap(),
        "--nsim",
        "2000",
    ]);
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["family"]["kind"], "cox");
    assert_eq!(report["family"]["ties"], "breslow");
    assert_eq!(report["kkt"]["pass"], true);
    let stat = report["test"]["stat"].as_f64().unwrap();
    assert!(stat >= 0.0);
    let p = report["test"]["p_value"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&p));
}
