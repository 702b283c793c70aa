//! Primal active set maximization over the cone {beta_j >= 0, j in J}.
//!
//! The outer loop starts from the fully clamped (hence feasible) set A = J,
//! alternates equality-restricted inner maximizations with boundary steps
//! that add blocking coordinates, and releases a clamped coordinate only
//! when its partial derivative says the objective still climbs into the
//! cone. Termination is certified by the first-order conditions: zero
//! gradient on free coordinates, nonpositive gradient on binding ones.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::families::{Family, Model, Response};

/// Feasibility slack on constrained coordinates.
pub const FEASIBILITY_TOL: f64 = 1e-12;
/// Multiplier tolerance for releasing a clamped coordinate.
pub const KKT_TOL: f64 = 1e-8;
/// Gradient sup-norm target of the inner Newton iteration.
pub const INNER_GRADIENT_TOL: f64 = 1e-10;
/// Gradient tolerance of the independent KKT verification.
pub const KKT_VERIFY_TOL: f64 = 1e-7;
/// Coordinates at or below this value count as sitting on the boundary.
pub const ACTIVE_THRESHOLD: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct SolverOptions {
    pub feas_tol: f64,
    pub kkt_tol: f64,
    pub inner_tol: f64,
    pub verify_tol: f64,
    pub max_inner: usize,
    pub max_halvings: usize,
    pub armijo: f64,
    /// Outer iteration cap; defaults to 10 * p.
    pub max_outer: Option<usize>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            feas_tol: FEASIBILITY_TOL,
            kkt_tol: KKT_TOL,
            inner_tol: INNER_GRADIENT_TOL,
            verify_tol: KKT_VERIFY_TOL,
            max_inner: 200,
            max_halvings: 50,
            armijo: 1e-4,
            max_outer: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FitStatus {
    Converged,
    MaxIterations,
    NumericalFailure,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StepAction {
    Add,
    Drop,
    Converge,
}

/// One outer-iteration record.
#[derive(Debug, Clone, Serialize)]
pub struct TraceStep {
    pub objective: f64,
    pub active_count: usize,
    pub action: StepAction,
    /// min over J of beta_j at the iterate; +inf when J is empty.
    pub min_constrained: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct KktEntry {
    pub index: usize,
    pub label: String,
    pub constrained: bool,
    pub value: f64,
    pub gradient: f64,
    /// Constrained coordinate sitting on the boundary.
    pub binding: bool,
    pub ok: bool,
    /// Binding with multiplier indistinguishable from zero.
    pub degenerate: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct KktReport {
    pub pass: bool,
    pub tol: f64,
    pub entries: Vec<KktEntry>,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub beta: DVector<f64>,
    pub loglik: f64,
    pub active: BTreeSet<usize>,
    pub kkt: KktReport,
    pub trace: Vec<TraceStep>,
    pub status: FitStatus,
    pub outer_iterations: usize,
    pub failure: Option<String>,
}

impl FitResult {
    pub fn converged(&self) -> bool {
        self.status == FitStatus::Converged
    }
}

fn is_numerical(err: &Error) -> bool {
    matches!(
        err,
        Error::SingularHessian { .. } | Error::LineSearchFailed { .. }
    )
}

fn free_indices(p: usize, active: &BTreeSet<usize>) -> Vec<usize> {
    (0..p).filter(|j| !active.contains(j)).collect()
}

fn gather(v: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_fn(idx.len(), |i, _| v[idx[i]])
}

fn gather_square(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), idx.len(), |i, j| m[(idx[i], idx[j])])
}

fn scatter(p: usize, idx: &[usize], values: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(p);
    for (i, &j) in idx.iter().enumerate() {
        out[j] = values[i];
    }
    out
}

/// Maximize the objective over {beta : beta_j = 0 for j in active}.
///
/// Gaussian solves the reduced normal equations in closed form; logistic and
/// Cox run a damped Newton iteration with Armijo backtracking from `start`
/// (whose clamped coordinates are zeroed).
pub fn solve_subproblem(
    model: &Model,
    active: &BTreeSet<usize>,
    start: &DVector<f64>,
    options: &SolverOptions,
) -> Result<DVector<f64>> {
    let p = model.p();
    for &j in active {
        if !model.design().is_constrained(j) {
            return Err(Error::InvalidInput(format!(
                "active index {j} is not a constrained column"
            )));
        }
    }
    let free = free_indices(p, active);
    if free.is_empty() {
        return Ok(DVector::zeros(p));
    }

    if let (Family::Gaussian, Response::Continuous(y)) = (model.family(), model.response()) {
        let x = model.design().matrix();
        let xf = x.select_columns(free.iter());
        let xtx = xf.transpose() * &xf;
        let xty = xf.transpose() * DVector::from_column_slice(y);
        let chol = xtx.cholesky().ok_or_else(|| Error::SingularHessian {
            active: active.iter().copied().collect(),
        })?;
        return Ok(scatter(p, &free, &chol.solve(&xty)));
    }

    let mut beta = start.clone();
    for &j in active {
        beta[j] = 0.0;
    }
    let mut current = model.objective(&beta)?;
    if !current.loglik.is_finite() {
        return Err(Error::InvalidInput(
            "objective is non-finite at the subproblem start".into(),
        ));
    }
    for _ in 0..options.max_inner {
        let grad_free = gather(&current.gradient, &free);
        if grad_free.amax() <= options.inner_tol {
            break;
        }
        let neg_hess = -gather_square(&current.hessian, &free);
        let chol = neg_hess.cholesky().ok_or_else(|| Error::SingularHessian {
            active: active.iter().copied().collect(),
        })?;
        let direction = chol.solve(&grad_free);
        let slope = grad_free.dot(&direction);

        // Once the predicted gain g'H^-1 g / 2 falls below what f64 can
        // resolve in the objective, sufficient-decrease acceptance cannot
        // distinguish progress from rounding. Newton is quadratically
        // convergent here, so take the pure step while it keeps shrinking
        // the gradient.
        if slope <= 1e-13 * (1.0 + current.loglik.abs()) {
            let mut candidate = beta.clone();
            for (i, &j) in free.iter().enumerate() {
                candidate[j] += direction[i];
            }
            let next = model.objective(&candidate)?;
            if next.loglik.is_finite()
                && gather(&next.gradient, &free).amax() < grad_free.amax()
            {
                beta = candidate;
                current = next;
                continue;
            }
            break;
        }

        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..=options.max_halvings {
            let mut candidate = beta.clone();
            for (i, &j) in free.iter().enumerate() {
                candidate[j] += step * direction[i];
            }
            match model.objective(&candidate) {
                Ok(next) if next.loglik.is_finite() => {
                    if next.loglik >= current.loglik + options.armijo * step * slope {
                        beta = candidate;
                        current = next;
                        accepted = true;
                        break;
                    }
                }
                Ok(_) => {}
                Err(e) => return Err(e),
            }
            step *= 0.5;
        }
        if !accepted {
            return Err(Error::LineSearchFailed {
                halvings: options.max_halvings,
            });
        }
    }
    Ok(beta)
}

/// First-order verification of a feasible point: the gradient must vanish on
/// free coordinates and be nonpositive on binding constrained ones. For a
/// concave objective over the orthant cone this characterizes the maximizer.
pub fn verify_kkt(model: &Model, beta: &DVector<f64>, tol: f64) -> Result<KktReport> {
    let design = model.design();
    for &j in design.constrained() {
        if beta[j] < -FEASIBILITY_TOL {
            return Err(Error::Infeasible {
                index: j,
                value: beta[j],
            });
        }
    }
    let objective = model.objective(beta)?;
    let mut entries = Vec::with_capacity(model.p());
    let mut pass = true;
    for j in 0..model.p() {
        let constrained = design.is_constrained(j);
        let binding = constrained && beta[j] <= ACTIVE_THRESHOLD;
        let g = objective.gradient[j];
        let ok = if binding { g <= tol } else { g.abs() <= tol };
        let degenerate = binding && g.abs() <= tol;
        pass &= ok;
        entries.push(KktEntry {
            index: j,
            label: design.columns()[j].label(),
            constrained,
            value: beta[j],
            gradient: g,
            binding,
            ok,
            degenerate,
        });
    }
    Ok(KktReport { pass, tol, entries })
}

/// Maximize the family log-likelihood over the constraint cone.
pub fn fit(model: &Model, options: &SolverOptions) -> Result<FitResult> {
    let p = model.p();
    let mut active: BTreeSet<usize> = model.design().constrained().iter().copied().collect();
    let mut beta = DVector::zeros(p);
    // Surface validation problems (dimensions, bad data) before iterating.
    let mut objective = model.objective(&beta)?;
    let max_outer = options.max_outer.unwrap_or(10 * p.max(1));
    let mut trace: Vec<TraceStep> = Vec::new();
    let mut status = FitStatus::MaxIterations;
    let mut failure = None;
    let mut outer = 0;

    while outer < max_outer {
        outer += 1;
        let candidate = match solve_subproblem(model, &active, &beta, options) {
            Ok(c) => c,
            Err(e) if is_numerical(&e) => {
                status = FitStatus::NumericalFailure;
                failure = Some(e.to_string());
                break;
            }
            Err(e) => return Err(e),
        };

        // Blocking coordinates: constrained, free, pulled outside the cone.
        let mut blocking: Option<(usize, f64)> = None;
        for &j in model.design().constrained() {
            if active.contains(&j) || candidate[j] >= -options.feas_tol {
                continue;
            }
            let ratio = beta[j] / (beta[j] - candidate[j]);
            let better = match blocking {
                None => true,
                Some((_, best)) => ratio < best,
            };
            if better {
                blocking = Some((j, ratio));
            }
        }

        if let Some((j, ratio)) = blocking {
            let step = ratio.clamp(0.0, 1.0);
            beta = &beta + (candidate - &beta) * step;
            for &a in active.iter() {
                beta[a] = 0.0;
            }
            beta[j] = 0.0;
            active.insert(j);
            objective = model.objective(&beta)?;
            push_step(&mut trace, model, &beta, objective.loglik, active.len(), StepAction::Add);
        } else {
            let candidate_obj = model.objective(&candidate)?;
            if let Some(prev) = trace.last() {
                if candidate_obj.loglik - prev.objective <= -options.feas_tol.max(1e-12) {
                    status = FitStatus::NumericalFailure;
                    failure = Some(format!(
                        "objective decreased across an outer step: {} -> {}",
                        prev.objective, candidate_obj.loglik
                    ));
                    break;
                }
            }
            // Largest positive partial derivative among clamped coordinates;
            // ties resolved toward the lowest index by iteration order.
            let mut release: Option<(usize, f64)> = None;
            for &j in active.iter() {
                let g = candidate_obj.gradient[j];
                if g > options.kkt_tol {
                    let better = match release {
                        None => true,
                        Some((_, best)) => g > best,
                    };
                    if better {
                        release = Some((j, g));
                    }
                }
            }
            beta = candidate;
            objective = candidate_obj;
            match release {
                Some((j, _)) => {
                    active.remove(&j);
                    push_step(&mut trace, model, &beta, objective.loglik, active.len(), StepAction::Drop);
                }
                None => {
                    push_step(&mut trace, model, &beta, objective.loglik, active.len(), StepAction::Converge);
                    status = FitStatus::Converged;
                    break;
                }
            }
        }
    }

    let kkt = verify_kkt(model, &beta, options.verify_tol)?;
    Ok(FitResult {
        loglik: objective.loglik,
        beta,
        active,
        kkt,
        trace,
        status,
        outer_iterations: outer,
        failure,
    })
}

fn push_step(
    trace: &mut Vec<TraceStep>,
    model: &Model,
    beta: &DVector<f64>,
    objective: f64,
    active_count: usize,
    action: StepAction,
) {
    let min_constrained = model
        .design()
        .constrained()
        .iter()
        .map(|&j| beta[j])
        .fold(f64::INFINITY, f64::min);
    trace.push(TraceStep {
        objective,
        active_count,
        action,
        min_constrained,
    });
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{Direction, InterceptPolicy, ModelSpec, OrderedFactor, ResponseColumns};
    use crate::families::build_model;
    use crate::table::{Column, ObservationTable};

    fn single_factor_model(y: &[f64]) -> Model {
        let k = y.len();
        let levels: Vec<String> = (0..k).map(|i| format!("l{i}")).collect();
        let table = ObservationTable::from_columns(vec![
            ("y".into(), Column::Numeric(y.to_vec())),
            ("f".into(), Column::Label(levels.clone())),
        ])
        .unwrap();
        let spec = ModelSpec {
            family: Family::Gaussian,
            response: ResponseColumns::Numeric { column: "y".into() },
            factors: vec![OrderedFactor::new("f", levels, Direction::Nondecreasing).unwrap()],
            covariates: vec![],
            intercept: InterceptPolicy::Automatic,
        };
        build_model(&spec, &table).unwrap()
    }

    #[test]
    fn pooled_fit_for_decreasing_data() {
        let model = single_factor_model(&[3.0, 1.0, 2.0]);
        let result = fit(&model, &SolverOptions::default()).unwrap();
        assert!(result.converged());
        assert!((result.loglik - (-1.0)).abs() < 1e-10);
        assert!((result.beta[0] - 2.0).abs() < 1e-10);
        assert!(result.beta[1].abs() < 1e-12);
        assert!(result.beta[2].abs() < 1e-12);
        assert_eq!(result.active, BTreeSet::from([1, 2]));
        assert!(result.kkt.pass);
        // Hand gradient of the pooled fit: residuals (1, -1, 0).
        assert!((result.kkt.entries[1].gradient - (-1.0)).abs() < 1e-10);
        assert!(result.kkt.entries[2].gradient.abs() < 1e-10);
        assert!(result.kkt.entries[2].degenerate);
        assert!(!result.kkt.entries[1].degenerate);
    }

    #[test]
    fn monotone_data_fits_exactly() {
        let model = single_factor_model(&[1.0, 2.0, 3.0]);
        let result = fit(&model, &SolverOptions::default()).unwrap();
        assert!(result.converged());
        assert!(result.loglik.abs() < 1e-18);
        assert!(result.active.is_empty());
        assert!((result.beta[1] - 1.0).abs() < 1e-10);
        assert!((result.beta[2] - 1.0).abs() < 1e-10);
        for pair in result.trace.windows(2) {
            assert!(pair[1].objective >= pair[0].objective - 1e-10);
        }
        for step in &result.trace {
            assert!(step.min_constrained >= -1e-12);
        }
    }

    #[test]
    fn subproblem_all_free_is_ols() {
        let model = single_factor_model(&[3.0, 1.0, 2.0]);
        let beta = solve_subproblem(
            &model,
            &BTreeSet::new(),
            &DVector::zeros(3),
            &SolverOptions::default(),
        )
        .unwrap();
        // Saturated design: exact interpolation.
        assert!((beta[0] - 3.0).abs() < 1e-10);
        assert!((beta[1] - (-2.0)).abs() < 1e-10);
        assert!((beta[2] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn subproblem_all_clamped_is_intercept_fit() {
        let model = single_factor_model(&[3.0, 1.0, 2.0]);
        let beta = solve_subproblem(
            &model,
            &BTreeSet::from([1, 2]),
            &DVector::zeros(3),
            &SolverOptions::default(),
        )
        .unwrap();
        assert!((beta[0] - 2.0).abs() < 1e-10);
        assert_eq!(beta[1], 0.0);
        assert_eq!(beta[2], 0.0);
    }

    #[test]
    fn kkt_fails_away_from_the_maximizer() {
        let model = single_factor_model(&[1.0, 2.0, 3.0]);
        let report = verify_kkt(&model, &DVector::zeros(3), KKT_VERIFY_TOL).unwrap();
        assert!(!report.pass);
        assert!(report.entries[1].gradient > 0.0);
    }

    #[test]
    fn kkt_rejects_infeasible_point() {
        let model = single_factor_model(&[1.0, 2.0, 3.0]);
        let err = verify_kkt(
            &model,
            &DVector::from_vec(vec![0.0, -0.5, 0.0]),
            KKT_VERIFY_TOL,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Infeasible { index: 1, .. }));
    }

    #[test]
    fn kkt_passes_at_feasible_unconstrained_optimum() {
        let model = single_factor_model(&[1.0, 2.0, 3.0]);
        let result = fit(&model, &SolverOptions::default()).unwrap();
        let report = verify_kkt(&model, &result.beta, KKT_VERIFY_TOL).unwrap();
        assert!(report.pass);
        for entry in &report.entries {
            assert!(entry.gradient.abs() <= 1e-7);
        }
    }
}
