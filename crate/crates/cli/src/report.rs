//! Report assembly and rendering. The JSON form has stable field names and
//! deterministic ordering so identical runs produce identical bytes; floats
//! serialize in shortest exact round-trip form.

use serde::Serialize;

use ordglm::inference::{LrtResult, PvalueMethod};
use ordglm::solver::{FitResult, FitStatus, KktReport, TraceStep};
use ordglm::{ColumnRole, Direction, FactorEffects, Family, Model};

fn status_name(status: FitStatus) -> &'static str {
    match status {
        FitStatus::Converged => "converged",
        FitStatus::MaxIterations => "max_iterations",
        FitStatus::NumericalFailure => "numerical_failure",
    }
}

fn method_name(method: PvalueMethod) -> &'static str {
    match method {
        PvalueMethod::ChibarWeights => "chibar_weights",
        PvalueMethod::ParametricBootstrap => "parametric_bootstrap",
    }
}

fn direction_name(direction: Direction) -> &'static str {
    match direction {
        Direction::Nondecreasing => "nondecreasing",
        Direction::Nonincreasing => "nonincreasing",
    }
}

#[derive(Debug, Serialize)]
pub struct ToolInfo {
    pub name: &'static str,
    pub version: &'static str,
}

#[derive(Debug, Serialize)]
pub struct CoefficientRow {
    pub index: usize,
    pub label: String,
    #[serde(flatten)]
    pub role: ColumnRole,
    /// Raw solver-scale coefficient; feeds back into the design matrix.
    pub estimate: f64,
    /// Model-scale step between consecutive level effects (only for
    /// increment columns; sign-flipped for nonincreasing factors).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub increment: Option<f64>,
    pub constrained: bool,
    pub active: bool,
    pub gradient: f64,
}

#[derive(Debug, Serialize)]
pub struct TraceSummary {
    pub outer_iterations: usize,
    pub steps: Vec<TraceStep>,
}

#[derive(Debug, Serialize)]
pub struct Report {
    pub tool: ToolInfo,
    pub family: Family,
    pub n: usize,
    pub p: usize,
    pub warnings: Vec<String>,
    pub status: FitStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
    pub loglik: f64,
    pub coefficients: Vec<CoefficientRow>,
    pub level_effects: Vec<FactorEffects>,
    pub active_set: Vec<usize>,
    pub kkt: KktReport,
    pub trace: TraceSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test: Option<LrtResult>,
}

impl Report {
    pub fn build(model: &Model, result: &FitResult, test: Option<LrtResult>) -> Self {
        let design = model.design();
        let coefficients = design
            .columns()
            .iter()
            .enumerate()
            .map(|(j, role)| {
                let estimate = result.beta[j];
                let increment = match role {
                    ColumnRole::Increment { negated, .. } => {
                        Some(if *negated { -estimate } else { estimate })
                    }
                    _ => None,
                };
                CoefficientRow {
                    index: j,
                    label: role.label(),
                    role: role.clone(),
                    estimate,
                    increment,
                    constrained: design.is_constrained(j),
                    active: result.active.contains(&j),
                    gradient: result.kkt.entries[j].gradient,
                }
            })
            .collect();
        Report {
            tool: ToolInfo {
                name: "ordglm",
                version: env!("CARGO_PKG_VERSION"),
            },
            family: model.family(),
            n: model.n(),
            p: model.p(),
            warnings: design.warnings().to_vec(),
            status: result.status,
            failure: result.failure.clone(),
            loglik: result.loglik,
            coefficients,
            level_effects: design.level_effects(&result.beta),
            active_set: result.active.iter().copied().collect(),
            kkt: result.kkt.clone(),
            trace: TraceSummary {
                outer_iterations: result.outer_iterations,
                steps: result.trace.clone(),
            },
            test,
        }
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("report serialization");
        text.push('\n');
        text
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let family_line = match self.family {
            Family::Cox { .. } => "cox (partial likelihood, breslow tie handling)".to_string(),
            other => other.name().to_string(),
        };
        out.push_str(&format!("family:  {family_line}\n"));
        out.push_str(&format!("rows:    {}\ncolumns: {}\n", self.n, self.p));
        for w in &self.warnings {
            out.push_str(&format!("warning: {w}\n"));
        }
        out.push_str(&format!("status:  {}\n", status_name(self.status)));
        if let Some(f) = &self.failure {
            out.push_str(&format!("failure: {f}\n"));
        }
        out.push_str(&format!("loglik:  {:.10}\n\n", self.loglik));

        out.push_str("coefficients\n");
        out.push_str(&format!(
            "  {:<24} {:>14} {:>14} {:>6} {:>7}\n",
            "column", "estimate", "increment", "bound", "kkt"
        ));
        for row in &self.coefficients {
            let increment = row
                .increment
                .map(|v| format!("{v:>14.6}"))
                .unwrap_or_else(|| format!("{:>14}", "-"));
            let bound = if row.active { "yes" } else if row.constrained { "no" } else { "-" };
            let kkt = if self.kkt.entries[row.index].ok { "ok" } else { "FAIL" };
            out.push_str(&format!(
                "  {:<24} {:>14.6} {} {:>6} {:>7}\n",
                row.label, row.estimate, increment, bound, kkt
            ));
        }

        for factor in &self.level_effects {
            out.push_str(&format!(
                "\nlevel effects for `{}` ({})\n",
                factor.factor,
                direction_name(factor.direction)
            ));
            for level in &factor.levels {
                let mark = if level.observed { "" } else { "  (unobserved)" };
                out.push_str(&format!("  {:<16} {:>12.6}{mark}\n", level.level, level.effect));
            }
        }

        out.push_str(&format!(
            "\nKKT verification: {} (tolerance {:.1e})\n",
            if self.kkt.pass { "pass" } else { "FAIL" },
            self.kkt.tol
        ));
        out.push_str(&format!(
            "outer iterations: {} ({} trace steps)\n",
            self.trace.outer_iterations,
            self.trace.steps.len()
        ));

        if let Some(test) = &self.test {
            out.push_str("\nlikelihood ratio test\n");
            out.push_str(&format!("  statistic: {:.8}\n", test.stat));
            out.push_str(&format!("  p-value:   {:.6}\n", test.p_value));
            out.push_str(&format!("  method:    {}, df = {}\n", method_name(test.method), test.df));
            out.push_str(&format!("  n_sim:     {} (seed {})\n", test.n_sim, test.seed));
            if let Some(w) = &test.weights {
                let rendered: Vec<String> = w.iter().map(|x| format!("{x:.4}")).collect();
                out.push_str(&format!("  weights:   [{}]\n", rendered.join(", ")));
            }
            if test.replicate_failures > 0 {
                out.push_str(&format!(
                    "  replicate failures: {}\n",
                    test.replicate_failures
                ));
            }
        }
        out
    }
}
