//! Independent reference computations used to validate the solver: subset
//! enumeration over active sets, pool-adjacent-violators for the Gaussian
//! single-factor specialization, and textbook IRLS for unconstrained
//! logistic fits. Deliberately simple; enumeration is exponential in |J|.

use std::collections::BTreeSet;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::families::Model;
use crate::solver::{solve_subproblem, SolverOptions, FEASIBILITY_TOL};

/// Enumeration guard: subsets of J are enumerated exhaustively.
pub const MAX_ENUMERATED_CONSTRAINTS: usize = 16;

#[derive(Debug, Clone, Serialize)]
pub struct SubsetOutcome {
    pub active: Vec<usize>,
    pub feasible: bool,
    pub loglik: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleReport {
    pub best_loglik: f64,
    pub best_active: Vec<usize>,
    pub per_subset: Vec<SubsetOutcome>,
}

/// Solve the equality-restricted subproblem for every subset of J and
/// return the best feasible optimum. Ties within 1e-12 prefer the larger
/// subset, mirroring how the solver reports degenerate binding coordinates.
pub fn brute_force(model: &Model, options: &SolverOptions) -> Result<OracleReport> {
    let constrained = model.design().constrained().to_vec();
    let m = constrained.len();
    if m > MAX_ENUMERATED_CONSTRAINTS {
        return Err(Error::EnumerationGuard {
            size: m,
            limit: MAX_ENUMERATED_CONSTRAINTS,
        });
    }

    let per_subset: Vec<SubsetOutcome> = (0u32..(1u32 << m))
        .into_par_iter()
        .map(|mask| {
            let active: BTreeSet<usize> = constrained
                .iter()
                .enumerate()
                .filter(|(bit, _)| mask & (1 << bit) != 0)
                .map(|(_, &j)| j)
                .collect();
            let start = DVector::zeros(model.p());
            match solve_subproblem(model, &active, &start, options) {
                Ok(beta) => {
                    let feasible = constrained
                        .iter()
                        .all(|&j| active.contains(&j) || beta[j] >= -FEASIBILITY_TOL);
                    let loglik = model.objective(&beta).ok().map(|o| o.loglik);
                    SubsetOutcome {
                        active: active.into_iter().collect(),
                        feasible: feasible && loglik.is_some(),
                        loglik,
                    }
                }
                Err(_) => SubsetOutcome {
                    active: active.into_iter().collect(),
                    feasible: false,
                    loglik: None,
                },
            }
        })
        .collect();

    let mut best: Option<(f64, &SubsetOutcome)> = None;
    for outcome in &per_subset {
        if !outcome.feasible {
            continue;
        }
        let loglik = outcome.loglik.unwrap();
        let better = match best {
            None => true,
            Some((best_loglik, best_outcome)) => {
                loglik > best_loglik + 1e-12
                    || (loglik >= best_loglik - 1e-12
                        && outcome.active.len() > best_outcome.active.len())
            }
        };
        if better {
            best = Some((loglik, outcome));
        }
    }
    let (best_loglik, best_outcome) = best.ok_or_else(|| {
        Error::InvalidInput("subset enumeration found no feasible solution".into())
    })?;
    Ok(OracleReport {
        best_loglik,
        best_active: best_outcome.active.clone(),
        per_subset,
    })
}

/// Weighted least-squares nondecreasing fit by pool-adjacent-violators.
pub fn pava(values: &[f64], weights: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::InvalidInput("pava needs at least one value".into()));
    }
    if values.len() != weights.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} values, {} weights",
            values.len(),
            weights.len()
        )));
    }
    for (index, &w) in weights.iter().enumerate() {
        if w <= 0.0 || w.is_nan() {
            return Err(Error::NonPositiveWeight { index, found: w });
        }
    }
    // Blocks of (mean, weight, count); adjacent violators merge into their
    // weighted mean.
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(values.len());
    for (&v, &w) in values.iter().zip(weights) {
        blocks.push((v, w, 1));
        while blocks.len() >= 2 && blocks[blocks.len() - 2].0 > blocks[blocks.len() - 1].0 {
            let (m2, w2, c2) = blocks.pop().unwrap();
            let (m1, w1, c1) = blocks.pop().unwrap();
            blocks.push(((m1 * w1 + m2 * w2) / (w1 + w2), w1 + w2, c1 + c2));
        }
    }
    let mut fitted = Vec::with_capacity(values.len());
    for (mean, _, count) in blocks {
        fitted.extend(std::iter::repeat_n(mean, count));
    }
    Ok(fitted)
}

/// Textbook iteratively reweighted least squares for unconstrained logistic
/// regression: repeated weighted normal-equation solves on the working
/// response, no step control. Divergence is reported as separation.
pub fn irls(design: &crate::design::DesignSystem, y: &[f64]) -> Result<DVector<f64>> {
    if y.len() != design.n() {
        return Err(Error::DimensionMismatch(format!(
            "response has {} rows, design has {}",
            y.len(),
            design.n()
        )));
    }
    for (row, &v) in y.iter().enumerate() {
        if v != 0.0 && v != 1.0 {
            return Err(Error::NonBinaryResponse { row, found: v });
        }
    }
    let x = design.matrix();
    let n = design.n();
    let p = design.p();
    let mut beta = DVector::<f64>::zeros(p);
    let mut polished = false;
    for _ in 0..100 {
        let eta = x * &beta;
        let mut grad = DVector::<f64>::zeros(p);
        let mut weighted = x.clone();
        let mut working = DVector::<f64>::zeros(n);
        let mut max_weight = 0.0f64;
        for i in 0..n {
            let mu = 1.0 / (1.0 + (-eta[i]).exp());
            let w = (mu * (1.0 - mu)).max(1e-300);
            max_weight = max_weight.max(w);
            grad += x.row(i).transpose() * (y[i] - mu);
            let sw = w.sqrt();
            weighted.row_mut(i).scale_mut(sw);
            working[i] = sw * (eta[i] + (y[i] - mu) / w);
        }
        if grad.amax() <= 1e-10 {
            // A vanishing gradient with every fitted probability pinned at
            // 0 or 1 is the profile of a maximum at infinity, not a fixed
            // point: the data are separated.
            if max_weight < 1e-10 {
                return Err(Error::Separation { norm: beta.norm() });
            }
            // One more update past the threshold; quadratic convergence
            // leaves the polished gradient near machine precision.
            if polished {
                return Ok(beta);
            }
            polished = true;
        }
        let xtwx = weighted.transpose() * &weighted;
        let rhs = weighted.transpose() * working;
        let next = match xtwx.cholesky() {
            Some(chol) => chol.solve(&rhs),
            None => return Err(Error::Separation { norm: beta.norm() }),
        };
        beta = next;
        if beta.norm() > 1e6 {
            return Err(Error::Separation { norm: beta.norm() });
        }
    }
    if polished {
        return Ok(beta);
    }
    Err(Error::Separation { norm: beta.norm() })
}
