//! Maximum likelihood for generalized linear models whose ordinal
//! predictors carry monotone effect constraints.
//!
//! Ordered factors are coded so that monotonicity of their level effects
//! becomes elementwise nonnegativity of increment coefficients; a primal
//! active set method maximizes the Gaussian, logistic, or Cox partial
//! log-likelihood over that cone; the returned point is verified against
//! the first-order optimality conditions. Likelihood ratio tests against a
//! restricted null come with a simulated chi-bar-square null or a
//! parametric bootstrap.

pub mod design;
pub mod diagnostics;
pub mod error;
pub mod families;
pub mod inference;
pub mod oracles;
pub mod solver;
pub mod table;

pub use design::{
    assemble, encode_ordinal, ColumnRole, DesignSystem, Direction, FactorEffects, FactorLayout,
    InterceptPolicy, LevelEffect, ModelSpec, OrderedFactor, ResponseColumns,
};
pub use error::{Error, Result};
pub use families::{build_model, Family, Model, Objective, Response, TieRule};
pub use inference::{
    chibar_p_value, chibar_weights, lrt, parametric_bootstrap, BootstrapNull, GaussianVariance,
    LrtOptions, LrtResult, NullSpec, PvalueMethod,
};
pub use solver::{
    fit, solve_subproblem, verify_kkt, FitResult, FitStatus, KktEntry, KktReport, SolverOptions,
    StepAction, TraceStep,
};
pub use table::{Column, ObservationTable};
