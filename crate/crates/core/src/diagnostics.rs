//! Randomized self-check suites over the public API: oracle equivalence,
//! derivative checks against central finite differences, mixture-weight
//! sanity, and null calibration. The CLI selfcheck subcommand runs these at
//! a configurable scale so the solver's correctness evidence can be
//! reproduced without a separate harness; the crate's acceptance tests run
//! them at full scale with pinned thresholds.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::design::{Direction, InterceptPolicy, ModelSpec, OrderedFactor, ResponseColumns};
use crate::error::Result;
use crate::families::{build_model, Family, Model, Response};
use crate::inference::{
    chibar_weights, lrt, GaussianVariance, LrtOptions, NullSpec, PvalueMethod,
};
use crate::oracles::{brute_force, irls, pava};
use crate::solver::{fit, solve_subproblem, SolverOptions};
use crate::table::{Column, ObservationTable};

/// Mix a master seed with suite and case indices into a per-case seed.
/// SplitMix64 finalizer; collisions across (suite, index) pairs are not a
/// concern at these scales.
pub fn derive_seed(seed: u64, suite: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(suite.wrapping_mul(0x9e37_79b9_7f4a_7c15))
        .wrapping_add(index.wrapping_mul(0xbf58_476d_1ce4_e5b9));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    Gaussian,
    Logistic,
    Cox,
}

impl FamilyKind {
    pub const ALL: [FamilyKind; 3] = [FamilyKind::Gaussian, FamilyKind::Logistic, FamilyKind::Cox];

    fn family(self) -> Family {
        match self {
            FamilyKind::Gaussian => Family::Gaussian,
            FamilyKind::Logistic => Family::Logistic,
            FamilyKind::Cox => Family::Cox { ties: Default::default() },
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FamilyKind::Gaussian => "gaussian",
            FamilyKind::Logistic => "logistic",
            FamilyKind::Cox => "cox",
        }
    }
}

/// A tame random instance built through the same specification path the CLI
/// uses: ordered factors with every level observed, a few covariates, and a
/// latent effect sequence that violates monotonicity often enough to make
/// constraints bind.
///
/// Two-factor draws can collide: a threshold indicator of one factor may
/// exactly duplicate a threshold indicator of the other, which the rank
/// check rejects. Such draws are retried with a derived sub-seed, keeping
/// the result a deterministic function of `case_seed`.
pub fn random_model(kind: FamilyKind, case_seed: u64) -> Model {
    for attempt in 0..32 {
        if let Ok(model) = random_model_attempt(kind, derive_seed(case_seed, 97, attempt)) {
            return model;
        }
    }
    unreachable!("32 consecutive rank-deficient draws for seed {case_seed}")
}

fn random_model_attempt(kind: FamilyKind, case_seed: u64) -> crate::error::Result<Model> {
    let mut rng = ChaCha8Rng::seed_from_u64(case_seed);
    // Logistic instances stay single-factor and get their classes mixed
    // within every level group below, so that no cumulative threshold can
    // separate the response and the maximizer stays finite.
    let two_factors = !matches!(kind, FamilyKind::Logistic) && rng.random_range(0..4) == 0;
    let mut level_counts = vec![rng.random_range(3..=5usize)];
    if two_factors {
        let budget = 8 - (level_counts[0] - 1);
        if budget >= 2 {
            level_counts.push(rng.random_range(2..=budget.min(4) + 1).min(budget + 1).max(2));
        }
    }
    let constrained: usize = level_counts.iter().map(|k| k - 1).sum();
    let has_intercept = !matches!(kind, FamilyKind::Cox);
    let max_cov = 10usize
        .saturating_sub(constrained + usize::from(has_intercept))
        .min(2);
    let n_cov = if max_cov == 0 { 0 } else { rng.random_range(0..=max_cov) };
    let p = usize::from(has_intercept) + constrained + n_cov;
    let n_lo = (p + 8).max(match kind {
        FamilyKind::Gaussian => 12,
        FamilyKind::Logistic => 25,
        FamilyKind::Cox => 18,
    });
    let n = rng.random_range(n_lo..=50.max(n_lo + 1));

    let mut factors = Vec::new();
    let mut factor_levels: Vec<Vec<usize>> = Vec::new();
    let mut eta = vec![0.0f64; n];
    for (f, &k) in level_counts.iter().enumerate() {
        let levels: Vec<String> = (0..k).map(|l| format!("f{f}l{l}")).collect();
        let direction = if rng.random_range(0..5) == 0 {
            Direction::Nonincreasing
        } else {
            Direction::Nondecreasing
        };
        // Latent per-level effects: a random walk whose steps may go either
        // way, so the monotone constraint binds on a healthy fraction of
        // instances.
        let mut effects = vec![0.0f64; k];
        for l in 1..k {
            let step = rng.random_range(-0.35..0.55);
            effects[l] = effects[l - 1] + if direction == Direction::Nonincreasing { -step } else { step };
        }
        let assignment: Vec<usize> = (0..n)
            .map(|i| if i < k { i } else { rng.random_range(0..k) })
            .collect();
        for i in 0..n {
            eta[i] += effects[assignment[i]];
        }
        factors.push(OrderedFactor::new(format!("g{f}"), levels, direction).unwrap());
        factor_levels.push(assignment);
    }

    let mut covariates = Vec::new();
    let mut columns: Vec<(String, Column)> = Vec::new();
    for c in 0..n_cov {
        let coef = rng.random_range(-0.7..0.7);
        let values: Vec<f64> = (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                (z * 0.8).clamp(-2.0, 2.0)
            })
            .collect();
        for i in 0..n {
            eta[i] += coef * values[i];
        }
        let name = format!("x{c}");
        columns.push((name.clone(), Column::Numeric(values)));
        covariates.push(name);
    }
    if has_intercept {
        let intercept = rng.random_range(-0.4..0.4);
        for e in &mut eta {
            *e += intercept;
        }
    }

    for (f, factor) in factors.iter().enumerate() {
        let labels: Vec<String> = factor_levels[f]
            .iter()
            .map(|&l| factor.levels[l].clone())
            .collect();
        columns.push((factor.name.clone(), Column::Label(labels)));
    }

    let response = match kind {
        FamilyKind::Gaussian => {
            let y: Vec<f64> = eta
                .iter()
                .map(|&e| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    e + z
                })
                .collect();
            columns.push(("y".into(), Column::Numeric(y)));
            ResponseColumns::Numeric { column: "y".into() }
        }
        FamilyKind::Logistic => {
            let mut y: Vec<f64> = eta
                .iter()
                .map(|&e| {
                    let mu = 1.0 / (1.0 + (-e).exp());
                    if rng.random_range(0.0..1.0) < mu { 1.0 } else { 0.0 }
                })
                .collect();
            // Force both classes into every level group of two or more
            // observations; a pure group lets a threshold indicator push its
            // increment to infinity.
            for assignment in &factor_levels {
                let k = assignment.iter().copied().max().unwrap_or(0) + 1;
                for level in 0..k {
                    let members: Vec<usize> =
                        (0..n).filter(|&i| assignment[i] == level).collect();
                    if members.len() >= 2 && members.iter().all(|&i| y[i] == y[members[0]]) {
                        let flip = members[rng.random_range(0..members.len())];
                        y[flip] = 1.0 - y[flip];
                    }
                }
            }
            // Degenerate all-one/all-zero responses have no finite optimum.
            if y.iter().all(|&v| v == y[0]) {
                y[0] = 1.0 - y[0];
                y[n - 1] = 1.0 - y[n - 1];
            }
            columns.push(("y".into(), Column::Numeric(y)));
            ResponseColumns::Numeric { column: "y".into() }
        }
        FamilyKind::Cox => {
            let time: Vec<f64> = eta
                .iter()
                .map(|&e| {
                    let u: f64 = rng.random_range(0.0..1.0);
                    (-u.max(1e-12).ln() / e.exp()).max(1e-9)
                })
                .collect();
            let mut event: Vec<f64> = (0..n)
                .map(|_| if rng.random_range(0.0..1.0) < 0.75 { 1.0 } else { 0.0 })
                .collect();
            if event.iter().map(|&d| d as usize).sum::<usize>() < 3 {
                event[0] = 1.0;
                event[1] = 1.0;
                event[2] = 1.0;
            }
            columns.push(("time".into(), Column::Numeric(time)));
            columns.push(("status".into(), Column::Numeric(event)));
            ResponseColumns::Survival {
                time: "time".into(),
                event: "status".into(),
            }
        }
    };

    let table = ObservationTable::from_columns(columns).unwrap();
    let spec = ModelSpec {
        family: kind.family(),
        response,
        factors,
        covariates,
        intercept: InterceptPolicy::Automatic,
    };
    build_model(&spec, &table)
}

/// Central finite difference of the log-likelihood.
pub fn finite_diff_gradient(model: &Model, beta: &DVector<f64>, step: f64) -> Result<DVector<f64>> {
    let p = model.p();
    let mut grad = DVector::zeros(p);
    for j in 0..p {
        let mut up = beta.clone();
        let mut down = beta.clone();
        up[j] += step;
        down[j] -= step;
        grad[j] = (model.objective(&up)?.loglik - model.objective(&down)?.loglik) / (2.0 * step);
    }
    Ok(grad)
}

/// Central finite difference of the analytic gradient.
pub fn finite_diff_hessian(model: &Model, beta: &DVector<f64>, step: f64) -> Result<DMatrix<f64>> {
    let p = model.p();
    let mut hess = DMatrix::zeros(p, p);
    for j in 0..p {
        let mut up = beta.clone();
        let mut down = beta.clone();
        up[j] += step;
        down[j] -= step;
        let diff = (model.objective(&up)?.gradient - model.objective(&down)?.gradient) / (2.0 * step);
        hess.set_column(j, &diff);
    }
    Ok(hess)
}

fn normwise_rel_err(candidate: &[f64], reference: &[f64]) -> f64 {
    let scale = reference.iter().fold(1.0f64, |acc, &v| acc.max(v.abs()));
    candidate
        .iter()
        .zip(reference)
        .fold(0.0f64, |acc, (&a, &b)| acc.max((a - b).abs()))
        / scale
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleCase {
    pub family: &'static str,
    pub case_seed: u64,
    pub n: usize,
    pub p: usize,
    pub constrained: usize,
    pub fit_loglik: f64,
    pub oracle_loglik: f64,
    pub abs_diff: f64,
    pub converged: bool,
    pub kkt_pass: bool,
    pub trace_monotone: bool,
    pub feasible_path: bool,
}

/// Fit vs exhaustive enumeration, with KKT, monotonicity, and feasibility
/// checks on the same fits.
pub fn run_oracle_cases(per_family: usize, seed: u64) -> Result<Vec<OracleCase>> {
    let mut jobs = Vec::new();
    for (f, kind) in FamilyKind::ALL.iter().enumerate() {
        for i in 0..per_family {
            jobs.push((*kind, derive_seed(seed, 1 + f as u64, i as u64)));
        }
    }
    jobs.into_par_iter()
        .map(|(kind, case_seed)| {
            let model = random_model(kind, case_seed);
            let options = SolverOptions::default();
            let result = fit(&model, &options)?;
            let oracle = brute_force(&model, &options)?;
            let trace_monotone = result
                .trace
                .windows(2)
                .all(|w| w[1].objective >= w[0].objective - 1e-10);
            let feasible_path = result.trace.iter().all(|s| s.min_constrained >= -1e-12);
            Ok(OracleCase {
                family: kind.name(),
                case_seed,
                n: model.n(),
                p: model.p(),
                constrained: model.design().constrained().len(),
                fit_loglik: result.loglik,
                oracle_loglik: oracle.best_loglik,
                abs_diff: (result.loglik - oracle.best_loglik).abs(),
                converged: result.converged(),
                kkt_pass: result.kkt.pass,
                trace_monotone,
                feasible_path,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct GradientCase {
    pub family: &'static str,
    pub case_seed: u64,
    pub gradient_rel_err: f64,
    pub hessian_rel_err: f64,
}

/// Analytic derivatives vs central finite differences at a random point.
pub fn run_gradient_cases(per_family: usize, seed: u64) -> Result<Vec<GradientCase>> {
    let step = 1e-5;
    let mut jobs = Vec::new();
    for (f, kind) in FamilyKind::ALL.iter().enumerate() {
        for i in 0..per_family {
            jobs.push((*kind, derive_seed(seed, 10 + f as u64, i as u64)));
        }
    }
    jobs.into_par_iter()
        .map(|(kind, case_seed)| {
            let model = random_model(kind, case_seed);
            let mut rng = ChaCha8Rng::seed_from_u64(case_seed ^ 0x5bd1_e995);
            let beta = DVector::from_fn(model.p(), |_, _| {
                let z: f64 = StandardNormal.sample(&mut rng);
                0.4 * z
            });
            let objective = model.objective(&beta)?;
            let fd_grad = finite_diff_gradient(&model, &beta, step)?;
            let fd_hess = finite_diff_hessian(&model, &beta, step)?;
            Ok(GradientCase {
                family: kind.name(),
                case_seed,
                gradient_rel_err: normwise_rel_err(
                    objective.gradient.as_slice(),
                    fd_grad.as_slice(),
                ),
                hessian_rel_err: normwise_rel_err(
                    objective.hessian.as_slice(),
                    fd_hess.as_slice(),
                ),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct IsotonicCase {
    pub case_seed: u64,
    pub levels: usize,
    pub max_abs_diff: f64,
    pub trace_monotone: bool,
    pub feasible_path: bool,
}

/// Gaussian single-factor fits vs weighted pool-adjacent-violators on the
/// per-level means.
pub fn run_isotonic_cases(count: usize, seed: u64) -> Result<Vec<IsotonicCase>> {
    (0..count)
        .into_par_iter()
        .map(|i| {
            let case_seed = derive_seed(seed, 20, i as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(case_seed);
            let k = rng.random_range(2..=8usize);
            let sizes: Vec<usize> = (0..k).map(|_| rng.random_range(1..=6usize)).collect();
            let levels: Vec<String> = (0..k).map(|l| format!("l{l}")).collect();
            let mut labels = Vec::new();
            let mut y = Vec::new();
            let mut effects = vec![0.0f64; k];
            for l in 1..k {
                effects[l] = effects[l - 1] + rng.random_range(-0.4..0.6);
            }
            for (l, &size) in sizes.iter().enumerate() {
                for _ in 0..size {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    labels.push(levels[l].clone());
                    y.push(effects[l] + z);
                }
            }
            let table = ObservationTable::from_columns(vec![
                ("y".into(), Column::Numeric(y.clone())),
                ("g".into(), Column::Label(labels.clone())),
            ])
            .unwrap();
            let spec = ModelSpec {
                family: Family::Gaussian,
                response: ResponseColumns::Numeric { column: "y".into() },
                factors: vec![OrderedFactor::new("g", levels.clone(), Direction::Nondecreasing)
                    .unwrap()],
                covariates: vec![],
                intercept: InterceptPolicy::Automatic,
            };
            let model = build_model(&spec, &table)?;
            let result = fit(&model, &SolverOptions::default())?;

            // Weighted PAVA on the level means is the classical solution.
            let mut means = vec![0.0f64; k];
            let mut weights = vec![0.0f64; k];
            for (label, &value) in labels.iter().zip(&y) {
                let l = levels.iter().position(|x| x == label).unwrap();
                means[l] += value;
                weights[l] += 1.0;
            }
            for l in 0..k {
                means[l] /= weights[l];
            }
            let pooled = pava(&means, &weights)?;

            let effects = model.design().level_effects(&result.beta);
            let max_abs_diff = effects[0]
                .levels
                .iter()
                .zip(&pooled)
                .fold(0.0f64, |acc, (lvl, &target)| {
                    acc.max((result.beta[0] + lvl.effect - target).abs())
                });
            Ok(IsotonicCase {
                case_seed,
                levels: k,
                max_abs_diff,
                trace_monotone: result
                    .trace
                    .windows(2)
                    .all(|w| w[1].objective >= w[0].objective - 1e-10),
                feasible_path: result.trace.iter().all(|s| s.min_constrained >= -1e-12),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct UnconstrainedCase {
    pub family: &'static str,
    pub case_seed: u64,
    /// True when the model has no constrained columns at all.
    pub j_empty: bool,
    /// False when the instance's unconstrained optimum is infeasible, in
    /// which case no agreement is expected and the diff is not meaningful.
    pub comparable: bool,
    pub max_coef_diff: f64,
}

/// A covariate-only instance: intercept plus a few numeric columns, J empty.
pub fn random_unconstrained_model(kind: FamilyKind, case_seed: u64) -> Model {
    let mut rng = ChaCha8Rng::seed_from_u64(case_seed);
    let n_cov = rng.random_range(1..=3usize);
    let n = rng.random_range(20..=50usize);
    let mut eta = vec![rng.random_range(-0.4..0.4); n];
    let mut columns: Vec<(String, Column)> = Vec::new();
    let mut covariates = Vec::new();
    for c in 0..n_cov {
        let coef = rng.random_range(-0.7..0.7);
        let values: Vec<f64> = (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                (z * 0.8).clamp(-2.0, 2.0)
            })
            .collect();
        for i in 0..n {
            eta[i] += coef * values[i];
        }
        let name = format!("x{c}");
        columns.push((name.clone(), Column::Numeric(values)));
        covariates.push(name);
    }
    match kind {
        FamilyKind::Gaussian => {
            let y: Vec<f64> = eta
                .iter()
                .map(|&e| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    e + z
                })
                .collect();
            columns.push(("y".into(), Column::Numeric(y)));
        }
        FamilyKind::Logistic => {
            let mut y: Vec<f64> = eta
                .iter()
                .map(|&e| {
                    let mu = 1.0 / (1.0 + (-e).exp());
                    if rng.random_range(0.0..1.0) < mu { 1.0 } else { 0.0 }
                })
                .collect();
            if y.iter().all(|&v| v == y[0]) {
                y[0] = 1.0 - y[0];
                y[n - 1] = 1.0 - y[n - 1];
            }
            columns.push(("y".into(), Column::Numeric(y)));
        }
        FamilyKind::Cox => unimplemented!("covariate-only reference fits cover OLS and IRLS"),
    }
    let table = ObservationTable::from_columns(columns).unwrap();
    let spec = ModelSpec {
        family: kind.family(),
        response: ResponseColumns::Numeric { column: "y".into() },
        factors: vec![],
        covariates,
        intercept: InterceptPolicy::Automatic,
    };
    build_model(&spec, &table).expect("generated instance must assemble")
}

/// Constrained fits vs plain OLS / IRLS where the two must coincide: either
/// J is empty or the unconstrained optimum already lies in the cone.
pub fn run_unconstrained_cases(per_family: usize, seed: u64) -> Result<Vec<UnconstrainedCase>> {
    let kinds = [FamilyKind::Gaussian, FamilyKind::Logistic];
    let mut jobs = Vec::new();
    for (f, kind) in kinds.iter().enumerate() {
        for i in 0..per_family {
            // Even cases are covariate-only (J empty), odd cases carry
            // factors whose unconstrained optimum may or may not be feasible.
            jobs.push((*kind, derive_seed(seed, 30 + f as u64, i as u64), i % 2 == 0));
        }
    }
    jobs.into_par_iter()
        .map(|(kind, case_seed, j_empty)| {
            let model = if j_empty {
                random_unconstrained_model(kind, case_seed)
            } else {
                random_model(kind, case_seed)
            };
            // Coefficient-level agreement needs both optimizers pushed well
            // past their default gradient tolerance, or flat likelihood
            // directions leave stop-tolerance slack near the 1e-8 threshold.
            let options = SolverOptions {
                inner_tol: 1e-12,
                ..SolverOptions::default()
            };
            let empty = std::collections::BTreeSet::new();
            let unconstrained = match kind {
                FamilyKind::Gaussian => {
                    solve_subproblem(&model, &empty, &DVector::zeros(model.p()), &options)?
                }
                FamilyKind::Logistic => match irls(model.design(), gaussian_or_binary(&model)) {
                    Ok(beta) => beta,
                    // Separated instances have no unconstrained optimum to
                    // agree with.
                    Err(_) => {
                        return Ok(UnconstrainedCase {
                            family: kind.name(),
                            case_seed,
                            j_empty,
                            comparable: false,
                            max_coef_diff: f64::NAN,
                        })
                    }
                },
                FamilyKind::Cox => unreachable!(),
            };
            let feasible = model
                .design()
                .constrained()
                .iter()
                .all(|&j| unconstrained[j] >= -1e-12);
            if !feasible {
                return Ok(UnconstrainedCase {
                    family: kind.name(),
                    case_seed,
                    j_empty,
                    comparable: false,
                    max_coef_diff: f64::NAN,
                });
            }
            let result = fit(&model, &options)?;
            Ok(UnconstrainedCase {
                family: kind.name(),
                case_seed,
                j_empty,
                comparable: true,
                max_coef_diff: (&result.beta - &unconstrained).amax(),
            })
        })
        .collect()
}

fn gaussian_or_binary(model: &Model) -> &[f64] {
    match model.response() {
        Response::Continuous(y) | Response::Binary(y) => y,
        Response::Survival { .. } => unreachable!(),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct WeightCheck {
    pub dimension: usize,
    pub n_sim: usize,
    pub weights: Vec<f64>,
    pub expected: Vec<f64>,
    pub max_standard_errors: f64,
}

/// Simulated mixture weights vs the exactly known orthant-symmetry values.
pub fn run_weight_checks(n_sim: usize, seed: u64) -> Result<Vec<WeightCheck>> {
    let mut checks = Vec::new();
    let cases = [
        (DMatrix::from_element(1, 1, 1.7), vec![0.5, 0.5]),
        (DMatrix::identity(2, 2), vec![0.25, 0.5, 0.25]),
    ];
    for (i, (cov, expected)) in cases.into_iter().enumerate() {
        let weights = chibar_weights(&cov, n_sim, derive_seed(seed, 40, i as u64))?;
        let max_standard_errors = weights
            .iter()
            .zip(&expected)
            .map(|(&w, &e)| (w - e).abs() / (e * (1.0 - e) / n_sim as f64).sqrt())
            .fold(0.0f64, f64::max);
        checks.push(WeightCheck {
            dimension: expected.len() - 1,
            n_sim,
            weights,
            expected,
            max_standard_errors,
        });
    }
    Ok(checks)
}

#[derive(Debug, Clone, Serialize)]
pub struct CalibrationResult {
    pub replicates: usize,
    pub n_sim_per_test: usize,
    pub nominal_level: f64,
    pub rejections: usize,
    pub rate: f64,
}

/// Rejection rate of the nominal-0.05 test under a true Gaussian null:
/// n = 30, one 2-level ordered factor, known unit variance, mixture method.
pub fn run_calibration(replicates: usize, n_sim: usize, seed: u64) -> Result<CalibrationResult> {
    let rejections: Result<Vec<bool>> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let case_seed = derive_seed(seed, 50, r as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(case_seed);
            let n = 30;
            let y: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
            let labels: Vec<String> = (0..n)
                .map(|i| if i < n / 2 { "lo".into() } else { "hi".into() })
                .collect();
            let table = ObservationTable::from_columns(vec![
                ("y".into(), Column::Numeric(y)),
                ("g".into(), Column::Label(labels)),
            ])
            .unwrap();
            let spec = ModelSpec {
                family: Family::Gaussian,
                response: ResponseColumns::Numeric { column: "y".into() },
                factors: vec![OrderedFactor::new(
                    "g",
                    vec!["lo".into(), "hi".into()],
                    Direction::Nondecreasing,
                )
                .unwrap()],
                covariates: vec![],
                intercept: InterceptPolicy::Automatic,
            };
            let model = build_model(&spec, &table)?;
            let mut options = LrtOptions::new(
                PvalueMethod::ChibarWeights,
                n_sim,
                derive_seed(case_seed, 51, 0),
            );
            options.variance = GaussianVariance::Known(1.0);
            let result = lrt(&model, &NullSpec::FactorNoEffect { factor: "g".into() }, &options)?;
            Ok(result.p_value <= 0.05)
        })
        .collect();
    let rejections = rejections?.into_iter().filter(|&r| r).count();
    Ok(CalibrationResult {
        replicates,
        n_sim_per_test: n_sim,
        nominal_level: 0.05,
        rejections,
        rate: if replicates == 0 {
            0.0
        } else {
            rejections as f64 / replicates as f64
        },
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct EfficiencyResult {
    pub replicates: usize,
    pub mse_constrained: f64,
    pub mse_unconstrained: f64,
    pub ratio: f64,
}

/// Small-sample mean squared error of per-level means, constrained vs
/// unconstrained, under a strictly monotone Gaussian truth (n = 20).
pub fn run_efficiency(replicates: usize, seed: u64) -> Result<EfficiencyResult> {
    let truth = [0.0, 0.25, 0.5, 0.75];
    let per_level = 5usize;
    let sums: Result<Vec<(f64, f64)>> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let case_seed = derive_seed(seed, 60, r as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(case_seed);
            let levels: Vec<String> = (0..4).map(|l| format!("l{l}")).collect();
            let mut y = Vec::new();
            let mut labels = Vec::new();
            for (l, &mu) in truth.iter().enumerate() {
                for _ in 0..per_level {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    y.push(mu + z);
                    labels.push(levels[l].clone());
                }
            }
            let table = ObservationTable::from_columns(vec![
                ("y".into(), Column::Numeric(y.clone())),
                ("g".into(), Column::Label(labels.clone())),
            ])
            .unwrap();
            let spec = ModelSpec {
                family: Family::Gaussian,
                response: ResponseColumns::Numeric { column: "y".into() },
                factors: vec![OrderedFactor::new("g", levels.clone(), Direction::Nondecreasing)
                    .unwrap()],
                covariates: vec![],
                intercept: InterceptPolicy::Automatic,
            };
            let model = build_model(&spec, &table)?;
            let constrained = fit(&model, &SolverOptions::default())?;
            let effects = model.design().level_effects(&constrained.beta);
            let fitted: Vec<f64> = effects[0]
                .levels
                .iter()
                .map(|lvl| constrained.beta[0] + lvl.effect)
                .collect();
            // Unconstrained estimator: per-level sample means (the OLS fit
            // of the saturated one-factor design).
            let mut means = [0.0f64; 4];
            for (label, &value) in labels.iter().zip(&y) {
                let l = levels.iter().position(|x| x == label).unwrap();
                means[l] += value / per_level as f64;
            }
            let mse_c: f64 = fitted
                .iter()
                .zip(&truth)
                .map(|(f, t)| (f - t).powi(2))
                .sum::<f64>()
                / 4.0;
            let mse_u: f64 = means
                .iter()
                .zip(&truth)
                .map(|(m, t)| (m - t).powi(2))
                .sum::<f64>()
                / 4.0;
            Ok((mse_c, mse_u))
        })
        .collect();
    let sums = sums?;
    let mse_constrained = sums.iter().map(|s| s.0).sum::<f64>() / replicates.max(1) as f64;
    let mse_unconstrained = sums.iter().map(|s| s.1).sum::<f64>() / replicates.max(1) as f64;
    Ok(EfficiencyResult {
        replicates,
        mse_constrained,
        mse_unconstrained,
        ratio: mse_constrained / mse_unconstrained,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SelfCheckScale {
    pub oracle_per_family: usize,
    pub gradient_per_family: usize,
    pub isotonic_cases: usize,
    pub weight_sims: usize,
    pub calibration_replicates: usize,
    pub calibration_sims: usize,
}

impl Default for SelfCheckScale {
    fn default() -> Self {
        Self {
            oracle_per_family: 60,
            gradient_per_family: 40,
            isotonic_cases: 60,
            weight_sims: 5000,
            calibration_replicates: 300,
            calibration_sims: 1000,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FailingCase {
    pub suite: String,
    pub family: Option<String>,
    pub case_seed: Option<u64>,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteOutcome {
    pub suite: String,
    pub cases: usize,
    pub pass: bool,
    pub failures: Vec<FailingCase>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SelfCheckReport {
    pub seed: u64,
    pub scale: SelfCheckScale,
    pub suites: Vec<SuiteOutcome>,
    pub pass: bool,
}

/// Run all suites at the given scale. Zero-sized suites pass vacuously.
pub fn selfcheck(scale: &SelfCheckScale, seed: u64) -> Result<SelfCheckReport> {
    let mut suites = Vec::new();

    let oracle = run_oracle_cases(scale.oracle_per_family, seed)?;
    let mut failures = Vec::new();
    for case in &oracle {
        let mut problems = Vec::new();
        if case.abs_diff > 1e-7 {
            problems.push(format!("loglik differs from enumeration by {:.3e}", case.abs_diff));
        }
        if !case.converged {
            problems.push("fit did not converge".into());
        } else if !case.kkt_pass {
            problems.push("KKT verification failed".into());
        }
        if !case.trace_monotone {
            problems.push("objective trace decreased".into());
        }
        if !case.feasible_path {
            problems.push("iterate left the feasible cone".into());
        }
        if !problems.is_empty() {
            failures.push(FailingCase {
                suite: "oracle_equivalence".into(),
                family: Some(case.family.to_string()),
                case_seed: Some(case.case_seed),
                detail: problems.join("; "),
            });
        }
    }
    suites.push(SuiteOutcome {
        suite: "oracle_equivalence".into(),
        cases: oracle.len(),
        pass: failures.is_empty(),
        failures,
    });

    let gradients = run_gradient_cases(scale.gradient_per_family, seed)?;
    let mut failures = Vec::new();
    for case in &gradients {
        if case.gradient_rel_err > 1e-5 || case.hessian_rel_err > 1e-5 {
            failures.push(FailingCase {
                suite: "derivative_check".into(),
                family: Some(case.family.to_string()),
                case_seed: Some(case.case_seed),
                detail: format!(
                    "gradient rel err {:.3e}, hessian rel err {:.3e}",
                    case.gradient_rel_err, case.hessian_rel_err
                ),
            });
        }
    }
    suites.push(SuiteOutcome {
        suite: "derivative_check".into(),
        cases: gradients.len(),
        pass: failures.is_empty(),
        failures,
    });

    let isotonic = run_isotonic_cases(scale.isotonic_cases, seed)?;
    let mut failures = Vec::new();
    for case in &isotonic {
        if case.max_abs_diff > 1e-8 {
            failures.push(FailingCase {
                suite: "isotonic_specialization".into(),
                family: Some("gaussian".into()),
                case_seed: Some(case.case_seed),
                detail: format!("per-level effects differ from PAVA by {:.3e}", case.max_abs_diff),
            });
        }
    }
    suites.push(SuiteOutcome {
        suite: "isotonic_specialization".into(),
        cases: isotonic.len(),
        pass: failures.is_empty(),
        failures,
    });

    if scale.weight_sims > 0 {
        let checks = run_weight_checks(scale.weight_sims, seed)?;
        let mut failures = Vec::new();
        for check in &checks {
            if check.max_standard_errors > 3.0 {
                failures.push(FailingCase {
                    suite: "mixture_weights".into(),
                    family: None,
                    case_seed: None,
                    detail: format!(
                        "m = {}: weights {:?} deviate from {:?} by {:.2} standard errors",
                        check.dimension, check.weights, check.expected, check.max_standard_errors
                    ),
                });
            }
        }
        suites.push(SuiteOutcome {
            suite: "mixture_weights".into(),
            cases: checks.len(),
            pass: failures.is_empty(),
            failures,
        });
    } else {
        suites.push(SuiteOutcome {
            suite: "mixture_weights".into(),
            cases: 0,
            pass: true,
            failures: Vec::new(),
        });
    }

    let calibration = run_calibration(scale.calibration_replicates, scale.calibration_sims, seed)?;
    let mut failures = Vec::new();
    if calibration.replicates > 0 {
        // Binomial three-sigma band around the nominal level, plus slack for
        // the simulated critical value.
        let half_width = 3.0 * (0.05f64 * 0.95 / calibration.replicates as f64).sqrt() + 0.01;
        if (calibration.rate - 0.05).abs() > half_width {
            failures.push(FailingCase {
                suite: "null_calibration".into(),
                family: Some("gaussian".into()),
                case_seed: None,
                detail: format!(
                    "rejection rate {:.4} outside 0.05 +/- {:.4}",
                    calibration.rate, half_width
                ),
            });
        }
    }
    suites.push(SuiteOutcome {
        suite: "null_calibration".into(),
        cases: calibration.replicates,
        pass: failures.is_empty(),
        failures,
    });

    let pass = suites.iter().all(|s| s.pass);
    Ok(SelfCheckReport {
        seed,
        scale: scale.clone(),
        suites,
        pass,
    })
}
