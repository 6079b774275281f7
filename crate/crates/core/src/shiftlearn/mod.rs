//! Learning under covariate shift.
//!
//! Importance weights move a training sample toward a target population;
//! a weighted linear regression is then fitted on dummy- or numerically
//! coded quasi-identifiers and judged by bias, R² and distribution
//! similarity.

mod design;
mod metrics;
mod regression;
mod weights;

pub use design::{build_design, Coding, Design, DesignSpec};
pub use metrics::{histogram_intersection, r_squared, relative_bias, tuple_pmf};
pub use regression::{fit_regression, weighted_least_squares, RegressionModel, DEFAULT_RIDGE};
pub use weights::{
    logistic_weights, nonparametric_weights, transfer_weights, Estimator, LogisticFit, LogisticOptions,
    ShiftWeights, SupportWeights, TransferSpec,
};
