//! Likelihood ratio tests of a restricted null against the order-constrained
//! alternative.
//!
//! The null clamps a subset of the constrained increments to zero, so it is
//! nested in the alternative by construction and the statistic
//! 2(l_alt - l_null) is nonnegative. Its null distribution is approximated
//! either by a simulated chi-bar-square mixture (orthant projections of
//! Gaussian draws under the inverse-information metric, projected with the
//! same active set machinery used for fitting) or by a parametric bootstrap
//! from the null fit.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::design::{ColumnRole, DesignSystem};
use crate::error::{Error, Result};
use crate::families::{Family, Model, Response};
use crate::solver::{fit, FitStatus, SolverOptions, ACTIVE_THRESHOLD};

/// Minimum simulation size for the mixture-weight estimator.
pub const MIN_WEIGHT_SIMULATIONS: usize = 1000;
/// Replicate failure budget of the parametric bootstrap.
pub const MAX_BOOTSTRAP_FAILURE_RATE: f64 = 0.05;

/// Which increments the null forces to zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NullSpec {
    /// All increments of the named factor are zero ("no effect").
    FactorNoEffect { factor: String },
    /// An explicit subset of the constrained column indices.
    Subset { indices: Vec<usize> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PvalueMethod {
    ChibarWeights,
    ParametricBootstrap,
}

/// Error variance handling for Gaussian tests.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GaussianVariance {
    /// Estimated under the alternative; the statistic is n log(RSS0/RSS1).
    Estimated,
    /// Known variance; the statistic is (RSS0 - RSS1) / sigma2.
    Known(f64),
}

#[derive(Debug, Clone)]
pub struct LrtOptions {
    pub method: PvalueMethod,
    pub n_sim: usize,
    pub seed: u64,
    pub variance: GaussianVariance,
    pub solver: SolverOptions,
}

impl LrtOptions {
    pub fn new(method: PvalueMethod, n_sim: usize, seed: u64) -> Self {
        Self {
            method,
            n_sim,
            seed,
            variance: GaussianVariance::Estimated,
            solver: SolverOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LrtResult {
    pub stat: f64,
    pub p_value: f64,
    pub method: PvalueMethod,
    /// Number of constraints under test.
    pub df: usize,
    pub weights: Option<Vec<f64>>,
    pub null_sample: Option<Vec<f64>>,
    pub n_sim: usize,
    pub seed: u64,
    pub replicate_failures: usize,
}

/// Replicate statistics simulated under the null fit.
#[derive(Debug, Clone)]
pub struct BootstrapNull {
    pub stats: Vec<f64>,
    pub failures: usize,
}

struct NullStructure {
    clamp: Vec<usize>,
    keep: Vec<usize>,
    reduced: Option<DesignSystem>,
}

fn resolve_null(model: &Model, spec: &NullSpec) -> Result<NullStructure> {
    let design = model.design();
    let mut clamp: Vec<usize> = match spec {
        NullSpec::FactorNoEffect { factor } => {
            let layout = design
                .factors()
                .iter()
                .find(|l| &l.name == factor)
                .ok_or_else(|| {
                    Error::InvalidInput(format!("no factor named `{factor}` in the model"))
                })?;
            layout.columns.iter().map(|(col, _)| *col).collect()
        }
        NullSpec::Subset { indices } => {
            for &j in indices {
                if !design.is_constrained(j) {
                    return Err(Error::NotNested(format!(
                        "column {j} is not a constrained increment; \
                         the null must clamp a subset of the constrained set"
                    )));
                }
            }
            indices.clone()
        }
    };
    clamp.sort_unstable();
    clamp.dedup();
    if clamp.is_empty() {
        return Err(Error::NotNested(
            "the null clamps no coordinates; it is not a restriction".into(),
        ));
    }
    let keep: Vec<usize> = (0..design.p()).filter(|j| !clamp.contains(j)).collect();
    let reduced = if keep.is_empty() {
        None
    } else {
        Some(design.drop_columns(&clamp)?)
    };
    Ok(NullStructure { clamp, keep, reduced })
}

/// Fit the null model and return (loglik, status, coefficients embedded in
/// the full design). A null with no remaining columns needs no
/// optimization: the objective is evaluated at zero.
fn fit_null(
    model: &Model,
    structure: &NullStructure,
    options: &SolverOptions,
) -> Result<(f64, FitStatus, DVector<f64>)> {
    match &structure.reduced {
        Some(reduced) => {
            let null_model = model.with_design(reduced.clone())?;
            let result = fit(&null_model, options)?;
            let mut beta_full = DVector::zeros(model.p());
            for (i, &j) in structure.keep.iter().enumerate() {
                beta_full[j] = result.beta[i];
            }
            Ok((result.loglik, result.status, beta_full))
        }
        None => {
            let beta = DVector::zeros(model.p());
            let objective = model.objective(&beta)?;
            Ok((objective.loglik, FitStatus::Converged, beta))
        }
    }
}

fn statistic(
    family: Family,
    variance: &GaussianVariance,
    n: usize,
    loglik_alt: f64,
    loglik_null: f64,
) -> Result<f64> {
    let raw = match family {
        Family::Gaussian => {
            let rss_alt = (-2.0 * loglik_alt).max(f64::MIN_POSITIVE);
            let rss_null = (-2.0 * loglik_null).max(f64::MIN_POSITIVE);
            match variance {
                GaussianVariance::Known(sigma2) => {
                    if *sigma2 <= 0.0 || sigma2.is_nan() {
                        return Err(Error::InvalidInput(
                            "known variance must be positive".into(),
                        ));
                    }
                    (rss_null - rss_alt) / sigma2
                }
                GaussianVariance::Estimated => n as f64 * (rss_null / rss_alt).ln(),
            }
        }
        _ => 2.0 * (loglik_alt - loglik_null),
    };
    if raw < -1e-10 {
        return Err(Error::InvalidInput(format!(
            "alternative log-likelihood fell below the null ({raw:.3e}); \
             the fits are inconsistent"
        )));
    }
    Ok(raw.max(0.0))
}

/// Tail probability of the chi-bar-square mixture with the given weights.
pub fn chibar_p_value(stat: f64, weights: &[f64]) -> f64 {
    if stat <= 0.0 {
        return 1.0;
    }
    let mut p = 0.0;
    for (k, &w) in weights.iter().enumerate().skip(1) {
        // chi-square with k degrees of freedom; the k = 0 component has no
        // mass above any positive threshold.
        let chi = ChiSquared::new(k as f64).expect("positive degrees of freedom");
        p += w * chi.sf(stat);
    }
    p.clamp(0.0, 1.0)
}

/// Estimate the mixture weights by projecting N(0, cov) draws onto the
/// nonnegative orthant under the cov^-1 inner product and counting positive
/// coordinates. The projection is itself a constrained Gaussian fit, solved
/// by the crate's active set method.
pub fn chibar_weights(cov: &DMatrix<f64>, n_sim: usize, seed: u64) -> Result<Vec<f64>> {
    let m = cov.nrows();
    if cov.ncols() != m || m == 0 {
        return Err(Error::DimensionMismatch(format!(
            "covariance must be square and nonempty, got {}x{}",
            m,
            cov.ncols()
        )));
    }
    if n_sim < MIN_WEIGHT_SIMULATIONS {
        return Err(Error::TooFewSimulations {
            n_sim,
            min: MIN_WEIGHT_SIMULATIONS,
        });
    }
    let chol = cov.clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
    let l_inv = chol
        .l()
        .solve_lower_triangular(&DMatrix::identity(m, m))
        .ok_or(Error::NotPositiveDefinite)?;

    // With x = L z for standard normal z, the projection objective
    // (b - x)' cov^-1 (b - x) equals |L^-1 b - z|^2: a Gaussian fit with
    // design L^-1, response z, and every coefficient constrained.
    let roles: Vec<ColumnRole> = (0..m)
        .map(|j| ColumnRole::Increment {
            factor: "orthant_projection".into(),
            from: format!("z{j}"),
            to: format!("z{}", j + 1),
            negated: false,
        })
        .collect();
    let projection = DesignSystem::from_parts(l_inv, (0..m).collect(), roles)?;
    let options = SolverOptions::default();

    let counts: Result<Vec<usize>> = (0..n_sim)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let z: Vec<f64> = (0..m).map(|_| StandardNormal.sample(&mut rng)).collect();
            let model = Model::new(
                projection.clone(),
                Family::Gaussian,
                Response::Continuous(z),
            )?;
            let result = fit(&model, &options)?;
            if result.status != FitStatus::Converged {
                return Err(Error::InvalidInput(
                    "orthant projection did not converge".into(),
                ));
            }
            Ok(result.beta.iter().filter(|&&b| b > ACTIVE_THRESHOLD).count())
        })
        .collect();
    let counts = counts?;
    let mut weights = vec![0.0; m + 1];
    for k in counts {
        weights[k] += 1.0;
    }
    for w in &mut weights {
        *w /= n_sim as f64;
    }
    Ok(weights)
}

/// Simulate replicate statistics under the null fit: Gaussian responses get
/// normal errors (known variance if supplied, otherwise estimated under the
/// null), logistic responses are Bernoulli at the fitted means, and
/// survival times are exponential with rate exp(eta) at the null linear
/// predictor, all uncensored. Failed replicates are counted; they are
/// treated as exceedances when a p-value is formed from the sample.
pub fn parametric_bootstrap(
    model: &Model,
    null: &NullSpec,
    n_sim: usize,
    seed: u64,
    variance: &GaussianVariance,
    options: &SolverOptions,
) -> Result<BootstrapNull> {
    if n_sim == 0 {
        return Err(Error::TooFewSimulations { n_sim, min: 1 });
    }
    let structure = resolve_null(model, null)?;
    let (null_loglik, null_status, null_beta) = fit_null(model, &structure, options)?;
    if null_status != FitStatus::Converged {
        return Err(Error::LrtFitFailed {
            alt: "not fitted".into(),
            null: format!("{null_status:?}"),
        });
    }
    let eta = model.design().linear_predictor(&null_beta);
    let n = model.n();

    let sigma = match (model.family(), variance) {
        (Family::Gaussian, GaussianVariance::Known(s2)) => Some(s2.sqrt()),
        (Family::Gaussian, GaussianVariance::Estimated) => {
            Some(((-2.0 * null_loglik).max(0.0) / n as f64).sqrt())
        }
        _ => None,
    };

    let outcomes: Vec<Option<f64>> = (0..n_sim)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64 + 1);
            let response = match model.family() {
                Family::Gaussian => {
                    let s = sigma.unwrap();
                    Response::Continuous(
                        (0..n)
                            .map(|i| {
                                let z: f64 = StandardNormal.sample(&mut rng);
                                eta[i] + s * z
                            })
                            .collect(),
                    )
                }
                Family::Logistic => Response::Binary(
                    (0..n)
                        .map(|i| {
                            let mu = 1.0 / (1.0 + (-eta[i]).exp());
                            if rng.random_range(0.0..1.0) < mu {
                                1.0
                            } else {
                                0.0
                            }
                        })
                        .collect(),
                ),
                Family::Cox { .. } => Response::Survival {
                    time: (0..n)
                        .map(|i| {
                            let u: f64 = rng.random_range(0.0..1.0);
                            -u.max(f64::MIN_POSITIVE).ln() / eta[i].exp()
                        })
                        .collect(),
                    event: vec![1; n],
                },
            };
            replicate_stat(model, &structure, response, variance, options)
        })
        .collect();

    let stats: Vec<f64> = outcomes.iter().filter_map(|o| *o).collect();
    let failures = n_sim - stats.len();
    if (failures as f64) > MAX_BOOTSTRAP_FAILURE_RATE * n_sim as f64 {
        return Err(Error::BootstrapFailures {
            failed: failures,
            total: n_sim,
        });
    }
    Ok(BootstrapNull { stats, failures })
}

fn replicate_stat(
    model: &Model,
    structure: &NullStructure,
    response: Response,
    variance: &GaussianVariance,
    options: &SolverOptions,
) -> Option<f64> {
    let replicate = model.with_response(response).ok()?;
    let alt = fit(&replicate, options).ok()?;
    if alt.status != FitStatus::Converged {
        return None;
    }
    let (null_loglik, null_status, _) = fit_null(&replicate, structure, options).ok()?;
    if null_status != FitStatus::Converged {
        return None;
    }
    statistic(
        replicate.family(),
        variance,
        replicate.n(),
        alt.loglik,
        null_loglik,
    )
    .ok()
}

/// Fit the alternative and the null, form the statistic, and compute a
/// p-value by the selected method.
pub fn lrt(model: &Model, null: &NullSpec, options: &LrtOptions) -> Result<LrtResult> {
    let structure = resolve_null(model, null)?;
    let alt = fit(model, &options.solver)?;
    let (null_loglik, null_status, null_beta) = fit_null(model, &structure, &options.solver)?;
    if alt.status != FitStatus::Converged || null_status != FitStatus::Converged {
        return Err(Error::LrtFitFailed {
            alt: format!("{:?}", alt.status),
            null: format!("{null_status:?}"),
        });
    }
    let stat = statistic(
        model.family(),
        &options.variance,
        model.n(),
        alt.loglik,
        null_loglik,
    )?;
    let df = structure.clamp.len();

    match options.method {
        PvalueMethod::ChibarWeights => {
            // The relevant block of the inverse expected information at the
            // null fit drives the cone projection.
            let objective = model.objective(&null_beta)?;
            let info = -objective.hessian;
            let cov_full = info
                .cholesky()
                .ok_or(Error::NotPositiveDefinite)?
                .inverse();
            let block = DMatrix::from_fn(df, df, |a, b| {
                cov_full[(structure.clamp[a], structure.clamp[b])]
            });
            let weights = chibar_weights(&block, options.n_sim, options.seed)?;
            let p_value = chibar_p_value(stat, &weights);
            Ok(LrtResult {
                stat,
                p_value,
                method: options.method,
                df,
                weights: Some(weights),
                null_sample: None,
                n_sim: options.n_sim,
                seed: options.seed,
                replicate_failures: 0,
            })
        }
        PvalueMethod::ParametricBootstrap => {
            let sample = parametric_bootstrap(
                model,
                null,
                options.n_sim,
                options.seed,
                &options.variance,
                &options.solver,
            )?;
            let exceed = sample.stats.iter().filter(|&&s| s >= stat).count() + sample.failures;
            let p_value = (1.0 + exceed as f64) / (options.n_sim as f64 + 1.0);
            Ok(LrtResult {
                stat,
                p_value,
                method: options.method,
                df,
                weights: None,
                null_sample: Some(sample.stats),
                n_sim: options.n_sim,
                seed: options.seed,
                replicate_failures: sample.failures,
            })
        }
    }
}
