use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::dataset::{ColumnKind, DataTable};
use crate::error::{Error, Result};

/// How discrete quasi-identifiers enter the regression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Coding {
    /// One indicator per level except the lowest.
    Dummy,
    /// Level values used as real numbers.
    Numeric,
}

impl fmt::Display for Coding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Coding::Dummy => "dummy",
            Coding::Numeric => "numeric",
        })
    }
}

impl FromStr for Coding {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dummy" => Ok(Coding::Dummy),
            "numeric" => Ok(Coding::Numeric),
            other => Err(Error::Usage(format!("unknown coding '{other}' (expected dummy or numeric)"))),
        }
    }
}

/// Column layout of a design matrix, learned from a training table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub coding: Coding,
    /// Per variable, the levels that get an indicator column (empty when the
    /// variable enters numerically).
    pub indicator_levels: Vec<Vec<f64>>,
    /// Per variable, the dropped lowest level (`None` for numeric entry).
    pub reference: Vec<Option<f64>>,
    /// Per variable, whether it enters as one numeric column.
    pub numeric: Vec<bool>,
    pub column_names: Vec<String>,
}

/// A design matrix with any warnings raised while coding it.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub matrix: DMatrix<f64>,
    pub warnings: Vec<String>,
}

impl DesignSpec {
    pub fn fit(table: &DataTable, coding: Coding) -> Self {
        let mut indicator_levels = Vec::with_capacity(table.d());
        let mut numeric = Vec::with_capacity(table.d());
        let mut reference = Vec::with_capacity(table.d());
        let mut column_names = vec!["intercept".to_string()];
        for (j, col) in table.columns().iter().enumerate() {
            if coding == Coding::Numeric || col.kind == ColumnKind::Continuous {
                numeric.push(true);
                reference.push(None);
                indicator_levels.push(Vec::new());
                column_names.push(col.name.clone());
            } else {
                let mut levels = table.column(j);
                levels.sort_by(f64::total_cmp);
                levels.dedup();
                reference.push(levels.first().copied());
                let kept: Vec<f64> = levels.into_iter().skip(1).collect();
                column_names.extend(kept.iter().map(|v| format!("{}={v}", col.name)));
                numeric.push(false);
                indicator_levels.push(kept);
            }
        }
        Self {
            coding,
            indicator_levels,
            reference,
            numeric,
            column_names,
        }
    }

    pub fn width(&self) -> usize {
        self.column_names.len()
    }

    /// Codes `table`. Levels never seen in training fall to the reference
    /// level (all indicators zero) and are reported as warnings.
    pub fn build(&self, table: &DataTable) -> Result<Design> {
        if table.d() != self.numeric.len() {
            return Err(Error::Shape {
                expected: self.numeric.len(),
                got: table.d(),
            });
        }
        let mut warnings = Vec::new();
        let mut unseen: Vec<Vec<f64>> = vec![Vec::new(); table.d()];
        let width = self.width();
        let mut m = DMatrix::<f64>::zeros(table.n(), width);
        for (i, row) in table.rows().enumerate() {
            m[(i, 0)] = 1.0;
            let mut col = 1;
            for (j, &v) in row.iter().enumerate() {
                if self.numeric[j] {
                    m[(i, col)] = v;
                    col += 1;
                    continue;
                }
                let levels = &self.indicator_levels[j];
                match levels.iter().position(|&l| l == v) {
                    Some(p) => m[(i, col + p)] = 1.0,
                    None if self.reference[j] == Some(v) => {}
                    None => {
                        if !unseen[j].contains(&v) {
                            unseen[j].push(v);
                        }
                    }
                }
                col += levels.len();
            }
        }
        for (j, vs) in unseen.iter().enumerate() {
            for v in vs {
                warnings.push(format!(
                    "level {v} of '{}' was not seen in training; coded as the reference level",
                    table.columns()[j].name
                ));
            }
        }
        Ok(Design { matrix: m, warnings })
    }
}

/// Design matrix of `table` under `coding`, with the layout learned from it.
pub fn build_design(table: &DataTable, coding: Coding) -> Result<(Design, DesignSpec)> {
    let spec = DesignSpec::fit(table, coding);
    Ok((spec.build(table)?, spec))
}
