//! Confidence intervals and regions for pseudo-true parameters of possibly
//! misspecified working models.
//!
//! Two families of methods are provided side by side:
//!
//! * Wald intervals built on the plug-in sandwich covariance
//!   `A_n(theta_hat)^-1 B_n(theta_hat) A_n(theta_hat)^-1` and its small-sample
//!   corrections (`hc1`..`hc5`), plus the model-based information covariance.
//! * The score pivot, which keeps `B_n` evaluated at the candidate parameter
//!   and is inverted numerically into intervals and regions.
//!
//! The [`mc`] module reproduces coverage experiments for overdispersed counts
//! and heteroscedastic regressions; [`io`] handles CSV input and result files.

// `!(x > 0.0)` guards are meant to reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimators;
pub mod inference;
pub mod io;
pub mod linalg;
pub mod mc;
pub mod model;
pub mod quantile;
pub mod roots;

pub use error::{Error, Result};
pub use estimators::{
    corrected_cov, leverage, moment_matrices, sandwich_cov, CorrectedCov, CorrectionKind,
    MomentMatrices, QuantilePolicy,
};
pub use inference::{
    covers, interval, pivot_interval, pivot_stat, region_boundary, region_membership,
    theorem1_gap, wald_interval, Endpoint, IntervalResult, Method, PivotStat, RegionResult,
};
pub use mc::{
    gen_dataset, population_study, run_coverage, CoverageRecord, PopulationConfig, Scenario,
    ScenarioKind, SimConfig,
};
pub use model::{mle_fit, score_sum, Dataset, ModelKind, ParamPoint, WorkingModel};

pub use nalgebra::{DMatrix, DVector};
