use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::design::{Coding, DesignSpec};
use crate::dataset::DataTable;
use crate::error::{Error, Result};

/// Default ridge penalty on the non-intercept coefficients.
pub const DEFAULT_RIDGE: f64 = 1e-8;

/// Weighted least squares with a small ridge on every column but the first
/// (the intercept), minimizing `Σ w_i (x_iᵀβ − y_i)² + ε w̄ ‖β_{1..}‖²`.
///
/// The penalty is scaled by the mean weight `w̄` so that rescaling all
/// weights leaves the solution unchanged; for mean-one weights it is `ε`.
///
/// The `√w`-scaled system, stacked with `√ε` rows for the penalty, is solved
/// through a QR decomposition.
pub fn weighted_least_squares(design: &DMatrix<f64>, y: &[f64], weights: &[f64], ridge: f64) -> Result<Vec<f64>> {
    let (n, p) = design.shape();
    if y.len() != n {
        return Err(Error::Shape { expected: n, got: y.len() });
    }
    if weights.len() != n {
        return Err(Error::Shape {
            expected: n,
            got: weights.len(),
        });
    }
    if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
        return Err(Error::Domain("weights must be finite and non-negative".into()));
    }
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(Error::Domain(format!("ridge must be non-negative, got {ridge}")));
    }
    if weights.iter().all(|&w| w == 0.0) {
        return Err(Error::Degenerate("all regression weights are zero".into()));
    }
    let penalty_rows = if ridge > 0.0 { p.saturating_sub(1) } else { 0 };
    let rows = n + penalty_rows;
    if rows < p {
        return Err(Error::Degenerate(format!("{n} observations for {p} coefficients")));
    }
    let mut a = DMatrix::<f64>::zeros(rows, p);
    let mut b = DVector::<f64>::zeros(rows);
    for i in 0..n {
        let s = weights[i].sqrt();
        for j in 0..p {
            a[(i, j)] = s * design[(i, j)];
        }
        b[i] = s * y[i];
    }
    let mean_weight = weights.iter().sum::<f64>() / n as f64;
    let root = (ridge * mean_weight).sqrt();
    for r in 0..penalty_rows {
        a[(n + r, r + 1)] = root;
    }
    let qr = a.qr();
    let rhs = qr.q().transpose() * b;
    let r = qr.r();
    let scale = r.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if r.diagonal().iter().any(|v| !(v.abs() > scale * 1e-13)) {
        return Err(Error::Degenerate("design matrix is rank deficient".into()));
    }
    let beta = r
        .solve_upper_triangular(&rhs)
        .ok_or_else(|| Error::Degenerate("design matrix is rank deficient".into()))?;
    Ok(beta.iter().copied().collect())
}

/// A fitted linear model and the coding it expects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionModel {
    pub coding: Coding,
    pub coefficients: Vec<f64>,
    pub spec: DesignSpec,
    pub ridge: f64,
}

impl RegressionModel {
    /// Predictions for `table` and the warnings raised while coding it.
    pub fn predict(&self, table: &DataTable) -> Result<(Vec<f64>, Vec<String>)> {
        let design = self.spec.build(table)?;
        let beta = DVector::from_column_slice(&self.coefficients);
        Ok(((design.matrix * beta).iter().copied().collect(), design.warnings))
    }
}

/// Codes `train` and fits a weighted regression of its response.
pub fn fit_regression(train: &DataTable, coding: Coding, weights: &[f64], ridge: f64) -> Result<RegressionModel> {
    let spec = DesignSpec::fit(train, coding);
    let design = spec.build(train)?;
    let coefficients = weighted_least_squares(&design.matrix, train.response(), weights, ridge)?;
    Ok(RegressionModel {
        coding,
        coefficients,
        spec,
        ridge,
    })
}
