use serde::{Deserialize, Serialize};

use super::DataTable;
use crate::error::Result;

/// Per-column z-score transform (sample variance, denominator n − 1).
///
/// Constant columns are flagged and left untouched, so `scales[j] == 1`
/// there and the transform is the identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
    pub constant_flags: Vec<bool>,
    pub response_mean: f64,
    pub response_scale: f64,
    pub response_constant: bool,
}

fn moments(values: &[f64]) -> (f64, f64, bool) {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 1.0, true);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    let sd = (ss / (n - 1) as f64).sqrt();
    if sd > 0.0 && sd.is_finite() {
        (mean, sd, false)
    } else {
        (mean, 1.0, true)
    }
}

impl Standardizer {
    pub fn fit(table: &DataTable) -> Self {
        let d = table.d();
        let mut means = Vec::with_capacity(d);
        let mut scales = Vec::with_capacity(d);
        let mut constant_flags = Vec::with_capacity(d);
        for j in 0..d {
            let (m, s, c) = moments(&table.column(j));
            means.push(m);
            scales.push(s);
            constant_flags.push(c);
        }
        let (response_mean, response_scale, response_constant) =
            moments(table.response());
        Self {
            means,
            scales,
            constant_flags,
            response_mean,
            response_scale,
            response_constant,
        }
    }

    pub fn dims(&self) -> usize {
        self.means.len()
    }

    #[inline]
    pub fn apply_value(&self, j: usize, v: f64) -> f64 {
        if self.constant_flags[j] {
            v
        } else {
            (v - self.means[j]) / self.scales[j]
        }
    }

    #[inline]
    pub fn revert_value(&self, j: usize, z: f64) -> f64 {
        if self.constant_flags[j] {
            z
        } else {
            z * self.scales[j] + self.means[j]
        }
    }

    pub fn apply_response(&self, y: f64) -> f64 {
        if self.response_constant {
            y
        } else {
            (y - self.response_mean) / self.response_scale
        }
    }

    pub fn revert_response(&self, z: f64) -> f64 {
        if self.response_constant {
            z
        } else {
            z * self.response_scale + self.response_mean
        }
    }

    pub fn apply_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter().enumerate().map(|(j, &v)| self.apply_value(j, v)).collect()
    }

    pub fn revert_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter().enumerate().map(|(j, &z)| self.revert_value(j, z)).collect()
    }

    fn map_table(
        &self,
        table: &DataTable,
        qi: impl Fn(usize, f64) -> f64,
        resp: impl Fn(f64) -> f64,
    ) -> Result<DataTable> {
        let d = table.d();
        let flat = table
            .qi_flat()
            .iter()
            .enumerate()
            .map(|(idx, &v)| qi(idx % d, v))
            .collect();
        table
            .with_qi(flat)?
            .with_response(table.response().iter().map(|&y| resp(y)).collect())
    }

    pub fn transform(&self, table: &DataTable) -> Result<DataTable> {
        self.map_table(table, |j, v| self.apply_value(j, v), |y| self.apply_response(y))
    }

    pub fn revert(&self, table: &DataTable) -> Result<DataTable> {
        self.map_table(table, |j, z| self.revert_value(j, z), |z| self.revert_response(z))
    }
}

/// Standardizes every quasi-identifier column and the response.
pub fn standardize(table: &DataTable) -> Result<(DataTable, Standardizer)> {
    let s = Standardizer::fit(table);
    Ok((s.transform(table)?, s))
}
