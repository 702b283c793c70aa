//! Design matrix construction for ordinal predictors.
//!
//! An ordered factor with k levels is coded by k−1 cumulative indicator
//! columns ("level rank ≥ j+1"). The coefficient of column j is then the
//! effect increment from level j to level j+1, so a monotone level-effect
//! sequence is exactly elementwise nonnegativity of the increment
//! coefficients. Nonincreasing factors get negated indicator columns, which
//! keeps the solver's constraint cone uniformly {beta_j >= 0}; the sign is
//! recorded in the column role and undone when effects are reported.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::families::Family;
use crate::table::ObservationTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Nondecreasing,
    Nonincreasing,
}

/// An ordinal predictor with a declared scientific level ordering.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderedFactor {
    pub name: String,
    pub levels: Vec<String>,
    pub direction: Direction,
}

impl OrderedFactor {
    pub fn new(
        name: impl Into<String>,
        levels: Vec<String>,
        direction: Direction,
    ) -> Result<Self> {
        let name = name.into();
        if levels.len() < 2 {
            return Err(Error::TooFewLevels { factor: name });
        }
        for (i, level) in levels.iter().enumerate() {
            if levels[..i].contains(level) {
                return Err(Error::DuplicateLevel {
                    factor: name,
                    level: level.clone(),
                });
            }
        }
        Ok(Self { name, levels, direction })
    }

    fn rank_of(&self, label: &str) -> Result<usize> {
        self.levels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::UnknownLevel {
                factor: self.name.clone(),
                label: label.to_string(),
                declared: self.levels.clone(),
            })
    }
}

/// Cumulative indicator block for one factor: entry (i, j) is 1 when
/// observation i sits at level rank ≥ j+1 (0-based column j), else 0.
/// The block is direction-agnostic; the sign convention for nonincreasing
/// factors is applied during assembly and recorded in the column roles.
pub fn encode_ordinal(factor: &OrderedFactor, observations: &[String]) -> Result<DMatrix<f64>> {
    if factor.levels.len() < 2 {
        return Err(Error::TooFewLevels {
            factor: factor.name.clone(),
        });
    }
    let k = factor.levels.len();
    let n = observations.len();
    let mut block = DMatrix::zeros(n, k - 1);
    for (i, label) in observations.iter().enumerate() {
        let rank = factor.rank_of(label)?;
        for j in 0..k - 1 {
            if rank > j {
                block[(i, j)] = 1.0;
            }
        }
    }
    Ok(block)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InterceptPolicy {
    /// Family default: include for Gaussian and logistic, omit for Cox.
    Automatic,
    Include,
    Exclude,
}

/// What to fit: family, response columns, ordinal factors, covariates.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub family: Family,
    pub response: ResponseColumns,
    pub factors: Vec<OrderedFactor>,
    pub covariates: Vec<String>,
    pub intercept: InterceptPolicy,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ResponseColumns {
    Numeric { column: String },
    Survival { time: String, event: String },
}

/// Provenance of one design column.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "role", rename_all = "snake_case")]
pub enum ColumnRole {
    Intercept,
    Increment {
        factor: String,
        /// Level the increment steps from (nearest observed lower level).
        from: String,
        /// Level whose threshold indicator this column is.
        to: String,
        /// True when the factor is nonincreasing: the stored column is the
        /// negated indicator and the model-scale increment is −beta.
        negated: bool,
    },
    Covariate {
        name: String,
    },
}

impl ColumnRole {
    pub fn label(&self) -> String {
        match self {
            ColumnRole::Intercept => "(intercept)".to_string(),
            ColumnRole::Increment { factor, from, to, .. } => format!("{factor}[{from}->{to}]"),
            ColumnRole::Covariate { name } => name.clone(),
        }
    }
}

/// Reporting layout for one factor: which design columns carry its
/// increments and which declared level each threshold belongs to.
#[derive(Debug, Clone, Serialize)]
pub struct FactorLayout {
    pub name: String,
    pub direction: Direction,
    /// Declared levels after boundary trimming, in scientific order.
    pub levels: Vec<String>,
    /// Per level: observed in the data?
    pub observed: Vec<bool>,
    /// (design column index, threshold level index) pairs, ascending.
    pub columns: Vec<(usize, usize)>,
    pub dropped_leading: Vec<String>,
    pub dropped_trailing: Vec<String>,
}

/// Per-level effects of one factor on the linear predictor scale.
#[derive(Debug, Clone, Serialize)]
pub struct FactorEffects {
    pub factor: String,
    pub direction: Direction,
    pub levels: Vec<LevelEffect>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LevelEffect {
    pub level: String,
    pub effect: f64,
    pub observed: bool,
}

/// Assembled design: matrix, constrained column set J, and provenance.
#[derive(Debug, Clone)]
pub struct DesignSystem {
    matrix: DMatrix<f64>,
    constrained: Vec<usize>,
    columns: Vec<ColumnRole>,
    factors: Vec<FactorLayout>,
    warnings: Vec<String>,
}

impl DesignSystem {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn p(&self) -> usize {
        self.matrix.ncols()
    }

    /// Indices of sign-constrained columns (sorted, 0-based).
    pub fn constrained(&self) -> &[usize] {
        &self.constrained
    }

    pub fn is_constrained(&self, index: usize) -> bool {
        self.constrained.binary_search(&index).is_ok()
    }

    pub fn columns(&self) -> &[ColumnRole] {
        &self.columns
    }

    pub fn factors(&self) -> &[FactorLayout] {
        &self.factors
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn has_intercept(&self) -> bool {
        self.columns.iter().any(|c| matches!(c, ColumnRole::Intercept))
    }

    pub fn linear_predictor(&self, beta: &DVector<f64>) -> DVector<f64> {
        &self.matrix * beta
    }

    /// Build a design directly from a matrix and constraint set. The
    /// constrained-index invariant and the rank check still apply.
    pub fn from_parts(
        matrix: DMatrix<f64>,
        constrained: Vec<usize>,
        columns: Vec<ColumnRole>,
    ) -> Result<Self> {
        if columns.len() != matrix.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "{} column roles for {} columns",
                columns.len(),
                matrix.ncols()
            )));
        }
        let mut constrained = constrained;
        constrained.sort_unstable();
        constrained.dedup();
        for &j in &constrained {
            if j >= matrix.ncols() {
                return Err(Error::InvalidInput(format!(
                    "constrained index {j} out of range for p = {}",
                    matrix.ncols()
                )));
            }
            if !matches!(columns[j], ColumnRole::Increment { .. }) {
                return Err(Error::InvalidInput(format!(
                    "constrained index {j} is not an increment column"
                )));
            }
        }
        let design = Self {
            matrix,
            constrained,
            columns,
            factors: Vec::new(),
            warnings: Vec::new(),
        };
        design.check_rank()?;
        Ok(design)
    }

    /// New design with the given columns removed; constraint indices and
    /// provenance are remapped. Dropping columns of a full-rank matrix
    /// cannot introduce rank deficiency, so no re-check is needed.
    pub fn drop_columns(&self, drop: &[usize]) -> Result<Self> {
        let p = self.p();
        for &j in drop {
            if j >= p {
                return Err(Error::InvalidInput(format!(
                    "drop index {j} out of range for p = {p}"
                )));
            }
        }
        let keep: Vec<usize> = (0..p).filter(|j| !drop.contains(j)).collect();
        let mut new_index = vec![usize::MAX; p];
        for (new_j, &old_j) in keep.iter().enumerate() {
            new_index[old_j] = new_j;
        }
        let matrix = DMatrix::from_fn(self.n(), keep.len(), |i, j| self.matrix[(i, keep[j])]);
        let constrained = self
            .constrained
            .iter()
            .filter(|j| new_index[**j] != usize::MAX)
            .map(|j| new_index[*j])
            .collect();
        let columns = keep.iter().map(|&j| self.columns[j].clone()).collect();
        let factors = self
            .factors
            .iter()
            .map(|layout| FactorLayout {
                columns: layout
                    .columns
                    .iter()
                    .filter(|(col, _)| new_index[*col] != usize::MAX)
                    .map(|(col, lvl)| (new_index[*col], *lvl))
                    .collect(),
                ..layout.clone()
            })
            .collect();
        Ok(Self {
            matrix,
            constrained,
            columns,
            factors,
            warnings: self.warnings.clone(),
        })
    }

    /// Per-level effects induced by a coefficient vector: partial sums of
    /// model-scale increments in declared level order. The baseline (first
    /// retained level) has effect 0.
    pub fn level_effects(&self, beta: &DVector<f64>) -> Vec<FactorEffects> {
        self.factors
            .iter()
            .map(|layout| {
                let mut levels = Vec::with_capacity(layout.levels.len());
                let mut acc = 0.0;
                for (idx, level) in layout.levels.iter().enumerate() {
                    for &(col, threshold) in &layout.columns {
                        if threshold == idx {
                            let negated = matches!(
                                self.columns[col],
                                ColumnRole::Increment { negated: true, .. }
                            );
                            acc += if negated { -beta[col] } else { beta[col] };
                        }
                    }
                    levels.push(LevelEffect {
                        level: level.clone(),
                        effect: acc,
                        observed: layout.observed[idx],
                    });
                }
                FactorEffects {
                    factor: layout.name.clone(),
                    direction: layout.direction,
                    levels,
                }
            })
            .collect()
    }

    fn check_rank(&self) -> Result<()> {
        let p = self.p();
        if p == 0 {
            return Err(Error::InvalidInput("design has no columns".into()));
        }
        if self.n() < p {
            return Err(Error::RankDeficient {
                columns: self.columns.iter().map(|c| c.label()).collect(),
            });
        }
        let qr = self.matrix.clone().col_piv_qr();
        let r = qr.r();
        let scale = r[(0, 0)].abs().max(1.0);
        let tol = scale * 1e-10;
        let rank = (0..p).take_while(|&j| r[(j, j)].abs() > tol).count();
        if rank == p {
            return Ok(());
        }
        // Columns pivoted past the numerical rank form a dependent set.
        let mut order: Vec<usize> = (0..p).collect();
        let perm = qr.p();
        let mut order_mat = DMatrix::from_fn(p, 1, |i, _| order[i]);
        perm.permute_rows(&mut order_mat);
        order = (0..p).map(|i| order_mat[(i, 0)]).collect();
        let dependent: Vec<String> = order[rank..]
            .iter()
            .map(|&j| self.columns[j].label())
            .collect();
        Err(Error::RankDeficient { columns: dependent })
    }
}

/// Assemble the design matrix for a model specification.
///
/// Column order is [intercept?][factor blocks in spec order][covariates in
/// spec order]. The constrained set J collects exactly the factor-increment
/// columns. Declared levels that are unobserved at the boundary of the
/// ordering are dropped with a warning; unobserved interior levels keep
/// their place in the reported ordering but contribute no increment column
/// (their effect carries forward from the level below), since their
/// threshold indicator would duplicate the next one.
pub fn assemble(spec: &ModelSpec, data: &ObservationTable) -> Result<DesignSystem> {
    let n = data.n_rows();
    let include_intercept = match (spec.intercept, spec.family) {
        (InterceptPolicy::Automatic, Family::Cox { .. }) => false,
        (InterceptPolicy::Automatic, _) => true,
        (InterceptPolicy::Include, Family::Cox { .. }) => return Err(Error::InterceptUnderCox),
        (InterceptPolicy::Include, _) => true,
        (InterceptPolicy::Exclude, _) => false,
    };

    let mut warnings = Vec::new();
    let mut roles: Vec<ColumnRole> = Vec::new();
    let mut cols: Vec<DVector<f64>> = Vec::new();
    let mut layouts: Vec<FactorLayout> = Vec::new();
    let mut constrained: Vec<usize> = Vec::new();

    if include_intercept {
        roles.push(ColumnRole::Intercept);
        cols.push(DVector::from_element(n, 1.0));
    }

    for factor in &spec.factors {
        let labels = data.labels(&factor.name)?;
        // Validate every observation and mark observed declared levels.
        let mut observed = vec![false; factor.levels.len()];
        for label in labels {
            observed[factor.rank_of(label)?] = true;
        }

        let first = observed.iter().position(|&o| o);
        let last = observed.iter().rposition(|&o| o);
        let (first, last) = match (first, last) {
            (Some(f), Some(l)) if f < l => (f, l),
            _ => {
                return Err(Error::TooFewObservedLevels {
                    factor: factor.name.clone(),
                })
            }
        };
        let dropped_leading: Vec<String> = factor.levels[..first].to_vec();
        let dropped_trailing: Vec<String> = factor.levels[last + 1..].to_vec();
        if !dropped_leading.is_empty() {
            warnings.push(format!(
                "factor `{}`: leading unobserved level(s) {:?} dropped; baseline is `{}`",
                factor.name, dropped_leading, factor.levels[first]
            ));
        }
        if !dropped_trailing.is_empty() {
            warnings.push(format!(
                "factor `{}`: trailing unobserved level(s) {:?} dropped",
                factor.name, dropped_trailing
            ));
        }

        let retained: Vec<String> = factor.levels[first..=last].to_vec();
        let retained_observed: Vec<bool> = observed[first..=last].to_vec();
        let trimmed = OrderedFactor {
            name: factor.name.clone(),
            levels: retained.clone(),
            direction: factor.direction,
        };
        let block = encode_ordinal(&trimmed, labels)?;
        let sign = match factor.direction {
            Direction::Nondecreasing => 1.0,
            Direction::Nonincreasing => -1.0,
        };

        let mut layout_cols = Vec::new();
        let mut prev_observed = 0usize;
        for threshold in 1..retained.len() {
            if !retained_observed[threshold] {
                // Interior gap: the threshold indicator would duplicate the
                // next observed one; the level keeps its slot in the report
                // with its effect carried forward.
                warnings.push(format!(
                    "factor `{}`: interior level `{}` unobserved; its effect is carried forward from `{}`",
                    factor.name, retained[threshold], retained[prev_observed]
                ));
                continue;
            }
            let col_index = cols.len();
            cols.push(DVector::from_fn(n, |i, _| sign * block[(i, threshold - 1)]));
            roles.push(ColumnRole::Increment {
                factor: factor.name.clone(),
                from: retained[prev_observed].clone(),
                to: retained[threshold].clone(),
                negated: sign < 0.0,
            });
            constrained.push(col_index);
            layout_cols.push((col_index, threshold));
            prev_observed = threshold;
        }

        layouts.push(FactorLayout {
            name: factor.name.clone(),
            direction: factor.direction,
            levels: retained,
            observed: retained_observed,
            columns: layout_cols,
            dropped_leading,
            dropped_trailing,
        });
    }

    for name in &spec.covariates {
        let values = data.numeric(name)?;
        for (row, v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "covariate `{name}` has non-finite value at row {row}"
                )));
            }
        }
        roles.push(ColumnRole::Covariate { name: name.clone() });
        cols.push(DVector::from_column_slice(values));
    }

    if cols.is_empty() {
        return Err(Error::InvalidInput(
            "model has no columns: no intercept, factors, or covariates".into(),
        ));
    }

    let matrix = DMatrix::from_columns(&cols);
    let design = DesignSystem {
        matrix,
        constrained,
        columns: roles,
        factors: layouts,
        warnings,
    };
    design.check_rank()?;
    Ok(design)
}
