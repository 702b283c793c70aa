//! Declarative run configuration.
//!
//! A single JSON file names the family, the response column(s), the ordered
//! factors with their explicit level order (never inferred from the data),
//! covariates, and an optional test block. Command line flags override the
//! seed, simulation count, and solver tolerances.

use std::path::Path;

use anyhow::{bail, Context};
use serde::Deserialize;

use ordglm::inference::{GaussianVariance, LrtOptions, NullSpec, PvalueMethod};
use ordglm::{
    Direction, Family, InterceptPolicy, ModelSpec, OrderedFactor, ResponseColumns, SolverOptions,
    TieRule,
};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub family: FamilyName,
    #[serde(default)]
    pub response: Option<String>,
    #[serde(default)]
    pub time: Option<String>,
    #[serde(default)]
    pub event: Option<String>,
    #[serde(default)]
    pub intercept: Option<bool>,
    #[serde(default)]
    pub factors: Vec<FactorConfig>,
    #[serde(default)]
    pub covariates: Vec<String>,
    #[serde(default)]
    pub test: Option<TestConfig>,
    #[serde(default)]
    pub tolerances: Option<ToleranceConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyName {
    Gaussian,
    Logistic,
    Cox,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorConfig {
    pub column: String,
    pub levels: Vec<String>,
    #[serde(default = "default_direction")]
    pub direction: DirectionName,
}

fn default_direction() -> DirectionName {
    DirectionName::Nondecreasing
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectionName {
    Nondecreasing,
    Nonincreasing,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestConfig {
    pub null: NullConfig,
    #[serde(default = "default_method")]
    pub method: MethodName,
    #[serde(default)]
    pub n_sim: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Known Gaussian error variance; omitted means estimated.
    #[serde(default)]
    pub variance: Option<f64>,
}

fn default_method() -> MethodName {
    MethodName::ChibarWeights
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodName {
    ChibarWeights,
    ParametricBootstrap,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum NullConfig {
    Factor { factor: String },
    Indices { indices: Vec<usize> },
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceConfig {
    #[serde(default)]
    pub kkt: Option<f64>,
    #[serde(default)]
    pub feasibility: Option<f64>,
    #[serde(default)]
    pub max_outer: Option<usize>,
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        let config: RunConfig = serde_json::from_str(&text)
            .with_context(|| format!("cannot parse config file {}", path.display()))?;
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> anyhow::Result<()> {
        match self.family {
            FamilyName::Gaussian | FamilyName::Logistic => {
                if self.response.is_none() {
                    bail!("family `{:?}` needs a `response` column", self.family);
                }
                if self.time.is_some() || self.event.is_some() {
                    bail!("`time`/`event` are only valid for the cox family");
                }
            }
            FamilyName::Cox => {
                if self.time.is_none() || self.event.is_none() {
                    bail!("the cox family needs both `time` and `event` columns");
                }
                if self.response.is_some() {
                    bail!("`response` is not valid for the cox family; use `time`/`event`");
                }
            }
        }
        if self.factors.is_empty() && self.covariates.is_empty() {
            bail!("model needs at least one factor or covariate");
        }
        if let Some(test) = &self.test {
            if let Some(v) = test.variance {
                if v <= 0.0 || v.is_nan() {
                    bail!("test.variance must be positive");
                }
                if self.family != FamilyName::Gaussian {
                    bail!("test.variance only applies to the gaussian family");
                }
            }
        }
        Ok(())
    }

    pub fn family(&self) -> Family {
        match self.family {
            FamilyName::Gaussian => Family::Gaussian,
            FamilyName::Logistic => Family::Logistic,
            FamilyName::Cox => Family::Cox { ties: TieRule::Breslow },
        }
    }

    pub fn model_spec(&self) -> anyhow::Result<ModelSpec> {
        let response = match self.family {
            FamilyName::Gaussian | FamilyName::Logistic => ResponseColumns::Numeric {
                column: self.response.clone().unwrap(),
            },
            FamilyName::Cox => ResponseColumns::Survival {
                time: self.time.clone().unwrap(),
                event: self.event.clone().unwrap(),
            },
        };
        let mut factors = Vec::new();
        for f in &self.factors {
            let direction = match f.direction {
                DirectionName::Nondecreasing => Direction::Nondecreasing,
                DirectionName::Nonincreasing => Direction::Nonincreasing,
            };
            factors.push(OrderedFactor::new(f.column.clone(), f.levels.clone(), direction)?);
        }
        Ok(ModelSpec {
            family: self.family(),
            response,
            factors,
            covariates: self.covariates.clone(),
            intercept: match self.intercept {
                None => InterceptPolicy::Automatic,
                Some(true) => InterceptPolicy::Include,
                Some(false) => InterceptPolicy::Exclude,
            },
        })
    }

    /// Numeric columns the data file must provide.
    pub fn numeric_columns(&self) -> Vec<String> {
        let mut cols = Vec::new();
        if let Some(r) = &self.response {
            cols.push(r.clone());
        }
        if let Some(t) = &self.time {
            cols.push(t.clone());
        }
        if let Some(e) = &self.event {
            cols.push(e.clone());
        }
        cols.extend(self.covariates.iter().cloned());
        cols
    }

    pub fn factor_columns(&self) -> Vec<String> {
        self.factors.iter().map(|f| f.column.clone()).collect()
    }

    /// Resolve the test block plus flag overrides into solver-ready options.
    /// Both p-value methods are simulation-based, so a seed is mandatory.
    pub fn lrt_request(
        &self,
        seed_flag: Option<u64>,
        nsim_flag: Option<usize>,
        solver: SolverOptions,
    ) -> anyhow::Result<(NullSpec, LrtOptions)> {
        let test = self
            .test
            .as_ref()
            .context("config has no `test` block; nothing to test")?;
        let seed = seed_flag
            .or(test.seed)
            .context("simulation-based tests need a seed (config `test.seed` or --seed)")?;
        let n_sim = nsim_flag.or(test.n_sim).unwrap_or(10_000);
        let null = match &test.null {
            NullConfig::Factor { factor } => NullSpec::FactorNoEffect { factor: factor.clone() },
            NullConfig::Indices { indices } => NullSpec::Subset { indices: indices.clone() },
        };
        let method = match test.method {
            MethodName::ChibarWeights => PvalueMethod::ChibarWeights,
            MethodName::ParametricBootstrap => PvalueMethod::ParametricBootstrap,
        };
        let mut options = LrtOptions::new(method, n_sim, seed);
        options.variance = match test.variance {
            Some(v) => GaussianVariance::Known(v),
            None => GaussianVariance::Estimated,
        };
        options.solver = solver;
        Ok((null, options))
    }
}
