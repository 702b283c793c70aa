//! Log-likelihood, gradient, and Hessian for the three model families.
//!
//! All three objectives are concave in the coefficients and return the full
//! dense Hessian; coefficient dimension is small in this problem class, so
//! dense factorization downstream is appropriate.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::design::{assemble, DesignSystem, ModelSpec, ResponseColumns};
use crate::error::{Error, Result};
use crate::table::ObservationTable;

/// Tie handling for the Cox partial likelihood. Tied event times share one
/// risk set and each contributes its own term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TieRule {
    #[default]
    Breslow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Family {
    Gaussian,
    Logistic,
    Cox { ties: TieRule },
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Gaussian => "gaussian",
            Family::Logistic => "logistic",
            Family::Cox { .. } => "cox",
        }
    }
}

/// Response data, validated against the family in [`Model::new`].
#[derive(Debug, Clone, PartialEq)]
pub enum Response {
    Continuous(Vec<f64>),
    Binary(Vec<f64>),
    Survival { time: Vec<f64>, event: Vec<u8> },
}

impl Response {
    pub fn len(&self) -> usize {
        match self {
            Response::Continuous(y) | Response::Binary(y) => y.len(),
            Response::Survival { time, .. } => time.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Objective value at a coefficient vector.
#[derive(Debug, Clone)]
pub struct Objective {
    pub loglik: f64,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
}

/// log(1 + exp(z)) without overflow for large |z|.
fn log1p_exp(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Logistic mean, stable on both tails.
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn check_dims(design: &DesignSystem, n_response: usize, beta: &DVector<f64>) -> Result<()> {
    if n_response != design.n() {
        return Err(Error::DimensionMismatch(format!(
            "response has {} rows, design has {}",
            n_response,
            design.n()
        )));
    }
    if beta.len() != design.p() {
        return Err(Error::DimensionMismatch(format!(
            "beta has {} entries, design has {} columns",
            beta.len(),
            design.p()
        )));
    }
    Ok(())
}

fn symmetrize(h: &mut DMatrix<f64>) {
    let p = h.nrows();
    for i in 0..p {
        for j in (i + 1)..p {
            let avg = 0.5 * (h[(i, j)] + h[(j, i)]);
            h[(i, j)] = avg;
            h[(j, i)] = avg;
        }
    }
}

/// Least-squares objective with unit error variance: the variance cancels in
/// the maximizer and is reintroduced only by the inference layer.
pub fn eval_gaussian(
    design: &DesignSystem,
    y: &[f64],
    beta: &DVector<f64>,
) -> Result<Objective> {
    check_dims(design, y.len(), beta)?;
    let x = design.matrix();
    let residual = DVector::from_column_slice(y) - x * beta;
    let loglik = -0.5 * residual.dot(&residual);
    let gradient = x.transpose() * &residual;
    let mut hessian = -(x.transpose() * x);
    symmetrize(&mut hessian);
    Ok(Objective { loglik, gradient, hessian })
}

pub fn eval_logistic(
    design: &DesignSystem,
    y: &[f64],
    beta: &DVector<f64>,
) -> Result<Objective> {
    check_dims(design, y.len(), beta)?;
    for (row, &v) in y.iter().enumerate() {
        if v != 0.0 && v != 1.0 {
            return Err(Error::NonBinaryResponse { row, found: v });
        }
    }
    let x = design.matrix();
    let eta = x * beta;
    let mut loglik = 0.0;
    let mut score = DVector::zeros(design.n());
    let mut weights = DVector::zeros(design.n());
    for i in 0..design.n() {
        loglik += y[i] * eta[i] - log1p_exp(eta[i]);
        let mu = sigmoid(eta[i]);
        score[i] = y[i] - mu;
        weights[i] = mu * (1.0 - mu);
    }
    let gradient = x.transpose() * score;
    let mut weighted = x.clone();
    for i in 0..design.n() {
        weighted.row_mut(i).scale_mut(weights[i]);
    }
    let mut hessian = -(x.transpose() * weighted);
    symmetrize(&mut hessian);
    Ok(Objective { loglik, gradient, hessian })
}

/// Breslow partial log-likelihood. The risk set at an event time t is
/// {j : time_j >= t}; tied event times share it and each contributes a term.
/// Accumulation runs in one pass over times sorted decreasing, with the
/// linear predictor centered at its maximum before exponentiation.
pub fn eval_cox(
    design: &DesignSystem,
    time: &[f64],
    event: &[u8],
    beta: &DVector<f64>,
) -> Result<Objective> {
    check_dims(design, time.len(), beta)?;
    if event.len() != time.len() {
        return Err(Error::DimensionMismatch(format!(
            "event has {} rows, time has {}",
            event.len(),
            time.len()
        )));
    }
    if design.has_intercept() {
        return Err(Error::InterceptUnderCox);
    }
    for (row, &t) in time.iter().enumerate() {
        if t <= 0.0 || t.is_nan() {
            return Err(Error::NonPositiveTime { row, found: t });
        }
    }
    if !event.contains(&1) {
        return Err(Error::NoEvents);
    }

    let n = design.n();
    let p = design.p();
    let x = design.matrix();
    let eta = x * beta;
    let center = eta.iter().cloned().fold(f64::NEG_INFINITY, f64::max);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| time[b].partial_cmp(&time[a]).unwrap().then(a.cmp(&b)));

    let mut s0 = 0.0;
    let mut s1 = DVector::<f64>::zeros(p);
    let mut s2 = DMatrix::<f64>::zeros(p, p);
    let mut loglik = 0.0;
    let mut gradient = DVector::<f64>::zeros(p);
    let mut hessian = DMatrix::<f64>::zeros(p, p);

    let mut pos = 0;
    while pos < n {
        let t = time[order[pos]];
        let mut end = pos;
        while end < n && time[order[end]] == t {
            end += 1;
        }
        // Everyone at this time enters the risk set before its events count.
        for &i in &order[pos..end] {
            let w = (eta[i] - center).exp();
            s0 += w;
            let xi = x.row(i).transpose();
            s1.axpy(w, &xi, 1.0);
            s2.ger(w, &xi, &xi, 1.0);
        }
        for &i in &order[pos..end] {
            if event[i] != 1 {
                continue;
            }
            let mean = &s1 / s0;
            loglik += (eta[i] - center) - s0.ln();
            gradient += x.row(i).transpose() - &mean;
            hessian -= &s2 / s0 - &mean * mean.transpose();
        }
        pos = end;
    }
    symmetrize(&mut hessian);
    Ok(Objective { loglik, gradient, hessian })
}

/// A design paired with validated response data.
#[derive(Debug, Clone)]
pub struct Model {
    design: DesignSystem,
    family: Family,
    response: Response,
}

impl Model {
    pub fn new(design: DesignSystem, family: Family, response: Response) -> Result<Self> {
        if response.len() != design.n() {
            return Err(Error::DimensionMismatch(format!(
                "response has {} rows, design has {}",
                response.len(),
                design.n()
            )));
        }
        match (family, &response) {
            (Family::Gaussian, Response::Continuous(y)) => {
                for (row, &v) in y.iter().enumerate() {
                    if !v.is_finite() {
                        return Err(Error::InvalidInput(format!(
                            "response has non-finite value at row {row}"
                        )));
                    }
                }
            }
            (Family::Logistic, Response::Binary(y)) => {
                for (row, &v) in y.iter().enumerate() {
                    if v != 0.0 && v != 1.0 {
                        return Err(Error::NonBinaryResponse { row, found: v });
                    }
                }
            }
            (Family::Cox { .. }, Response::Survival { time, event }) => {
                if design.has_intercept() {
                    return Err(Error::InterceptUnderCox);
                }
                for (row, &t) in time.iter().enumerate() {
                    if t <= 0.0 || t.is_nan() {
                        return Err(Error::NonPositiveTime { row, found: t });
                    }
                }
                if !event.contains(&1) {
                    return Err(Error::NoEvents);
                }
            }
            (family, _) => {
                return Err(Error::InvalidInput(format!(
                    "response data does not match family `{}`",
                    family.name()
                )))
            }
        }
        Ok(Self { design, family, response })
    }

    pub fn design(&self) -> &DesignSystem {
        &self.design
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn response(&self) -> &Response {
        &self.response
    }

    pub fn n(&self) -> usize {
        self.design.n()
    }

    pub fn p(&self) -> usize {
        self.design.p()
    }

    pub fn objective(&self, beta: &DVector<f64>) -> Result<Objective> {
        match (&self.family, &self.response) {
            (Family::Gaussian, Response::Continuous(y)) => eval_gaussian(&self.design, y, beta),
            (Family::Logistic, Response::Binary(y)) => eval_logistic(&self.design, y, beta),
            (Family::Cox { .. }, Response::Survival { time, event }) => {
                eval_cox(&self.design, time, event, beta)
            }
            _ => unreachable!("validated at construction"),
        }
    }

    /// Same design, new response (bootstrap replicates).
    pub fn with_response(&self, response: Response) -> Result<Self> {
        Self::new(self.design.clone(), self.family, response)
    }

    /// Same response, a column-reduced design (null fits).
    pub fn with_design(&self, design: DesignSystem) -> Result<Self> {
        Self::new(design, self.family, self.response.clone())
    }
}

/// Assemble the design and extract the response for a specification.
pub fn build_model(spec: &ModelSpec, table: &ObservationTable) -> Result<Model> {
    let design = assemble(spec, table)?;
    let response = match (&spec.family, &spec.response) {
        (Family::Gaussian, ResponseColumns::Numeric { column }) => {
            Response::Continuous(table.numeric(column)?.to_vec())
        }
        (Family::Logistic, ResponseColumns::Numeric { column }) => {
            Response::Binary(table.numeric(column)?.to_vec())
        }
        (Family::Cox { .. }, ResponseColumns::Survival { time, event }) => {
            let times = table.numeric(time)?.to_vec();
            let raw = table.numeric(event)?;
            let mut indicators = Vec::with_capacity(raw.len());
            for (row, &v) in raw.iter().enumerate() {
                if v == 0.0 {
                    indicators.push(0u8);
                } else if v == 1.0 {
                    indicators.push(1u8);
                } else {
                    return Err(Error::NonBinaryResponse { row, found: v });
                }
            }
            Response::Survival { time: times, event: indicators }
        }
        (family, _) => {
            return Err(Error::InvalidInput(format!(
                "response specification does not match family `{}`",
                family.name()
            )))
        }
    };
    Model::new(design, spec.family, response)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::ColumnRole;

    fn plain_design(rows: usize, cols: usize, data: &[f64]) -> DesignSystem {
        let roles = (0..cols)
            .map(|j| ColumnRole::Covariate { name: format!("x{j}") })
            .collect();
        DesignSystem::from_parts(DMatrix::from_row_slice(rows, cols, data), vec![], roles).unwrap()
    }

    #[test]
    fn gaussian_zero_residual() {
        let design = plain_design(2, 1, &[1.0, 2.0]);
        let beta = DVector::from_vec(vec![3.0]);
        let y = [3.0, 6.0];
        let obj = eval_gaussian(&design, &y, &beta).unwrap();
        assert_eq!(obj.loglik, 0.0);
        assert_eq!(obj.gradient[0], 0.0);
    }

    #[test]
    fn gaussian_unit_residuals() {
        // y = [0,0], X beta = [1,-1] -> loglik = -1
        let design = plain_design(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let beta = DVector::from_vec(vec![1.0, -1.0]);
        let obj = eval_gaussian(&design, &[0.0, 0.0], &beta).unwrap();
        assert!((obj.loglik - (-1.0)).abs() < 1e-15);
    }

    #[test]
    fn logistic_at_zero() {
        let design = plain_design(4, 1, &[1.0, -1.0, 2.0, 0.5]);
        let beta = DVector::zeros(1);
        let y = [1.0, 0.0, 1.0, 0.0];
        let obj = eval_logistic(&design, &y, &beta).unwrap();
        assert!((obj.loglik - 4.0 * 0.5f64.ln()).abs() < 1e-12);
        // Score at zero is X' (y - 1/2).
        let expected = 1.0 * 0.5 + (-1.0) * (-0.5) + 2.0 * 0.5 + 0.5 * (-0.5);
        assert!((obj.gradient[0] - expected).abs() < 1e-14);
    }

    #[test]
    fn logistic_rejects_nonbinary() {
        let design = plain_design(2, 1, &[1.0, 1.0]);
        let err = eval_logistic(&design, &[0.0, 0.5], &DVector::zeros(1)).unwrap_err();
        assert!(matches!(err, Error::NonBinaryResponse { row: 1, .. }));
    }

    #[test]
    fn logistic_huge_eta_is_finite() {
        let design = plain_design(2, 1, &[700.0, -700.0]);
        let beta = DVector::from_vec(vec![1.0]);
        let obj = eval_logistic(&design, &[0.0, 1.0], &beta).unwrap();
        assert!(obj.loglik.is_finite());
        assert!(obj.gradient[0].is_finite());
        assert!(obj.hessian[(0, 0)].is_finite());
    }

    #[test]
    fn cox_three_distinct_events_at_zero() {
        let design = plain_design(3, 1, &[0.2, -0.1, 0.4]);
        let obj = eval_cox(&design, &[1.0, 2.0, 3.0], &[1, 1, 1], &DVector::zeros(1)).unwrap();
        assert!((obj.loglik - (-(6.0f64).ln())).abs() < 1e-12);
    }

    #[test]
    fn cox_rejects_all_censored() {
        let design = plain_design(2, 1, &[0.2, -0.1]);
        let err = eval_cox(&design, &[1.0, 2.0], &[0, 0], &DVector::zeros(1)).unwrap_err();
        assert!(matches!(err, Error::NoEvents));
    }

    #[test]
    fn cox_rejects_nonpositive_time() {
        let design = plain_design(2, 1, &[0.2, -0.1]);
        let err = eval_cox(&design, &[0.0, 2.0], &[1, 1], &DVector::zeros(1)).unwrap_err();
        assert!(matches!(err, Error::NonPositiveTime { row: 0, .. }));
    }

    #[test]
    fn cox_ties_share_risk_set() {
        // Two events tied at t=1 with one later subject at t=2:
        // each tied event sees the full risk set of size 3 at beta = 0.
        let design = plain_design(3, 1, &[0.5, -0.3, 0.2]);
        let obj = eval_cox(&design, &[1.0, 1.0, 2.0], &[1, 1, 1], &DVector::zeros(1)).unwrap();
        let expected = -(3.0f64.ln()) - 3.0f64.ln() - 1.0f64.ln();
        assert!((obj.loglik - expected).abs() < 1e-12);
    }
}
