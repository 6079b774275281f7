//! Synthetic populations for experiments.
//!
//! Quasi-identifiers take integer levels `1..=L_j` drawn from smooth
//! discrete marginals. A dependence knob ties every later dimension to the
//! first one, and the target population tilts the marginal of one dimension
//! exponentially. The response is linear in the levels with a curved term
//! in the first dimension and noise that grows along it.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::{Column, ColumnKind, DataTable};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, domain, substream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    /// Number of levels per quasi-identifier.
    pub levels: Vec<usize>,
    /// Probability that a later dimension follows the first instead of
    /// being drawn from its own marginal.
    pub dependence: f64,
    /// Exponential tilt of the shifted dimension in the target population.
    pub shift: f64,
    pub shift_dim: usize,
    pub intercept: f64,
    /// Linear coefficient per dimension.
    pub slopes: Vec<f64>,
    /// Coefficient of the squared, centred first dimension.
    pub curvature: f64,
    /// Noise standard deviation at the lowest level of the first dimension.
    pub noise: f64,
    /// Relative noise growth across the first dimension.
    pub heteroscedasticity: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            levels: vec![8, 2, 5],
            dependence: 0.4,
            shift: 0.0,
            shift_dim: 0,
            intercept: 20.0,
            slopes: vec![1.5, 4.0, -1.0],
            curvature: 0.8,
            noise: 2.0,
            heteroscedasticity: 1.0,
        }
    }
}

/// Which side of the shift a sample comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Population {
    Source,
    Target,
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.levels.is_empty() || self.levels.iter().any(|&l| l < 2) {
            return Err(Error::Domain("every quasi-identifier needs at least two levels".into()));
        }
        if self.slopes.len() != self.levels.len() {
            return Err(Error::Shape {
                expected: self.levels.len(),
                got: self.slopes.len(),
            });
        }
        if !(0.0..=1.0).contains(&self.dependence) {
            return Err(Error::Domain(format!("dependence must lie in [0, 1], got {}", self.dependence)));
        }
        if self.shift_dim >= self.levels.len() {
            return Err(Error::Domain(format!("shift dimension {} out of range", self.shift_dim)));
        }
        if !(self.noise >= 0.0 && self.heteroscedasticity >= 0.0 && self.shift.is_finite()) {
            return Err(Error::Domain("noise parameters must be non-negative and finite".into()));
        }
        Ok(())
    }

    /// Marginal PMF of dimension `j` over levels `1..=L_j`.
    pub fn marginal(&self, j: usize, population: Population) -> Vec<f64> {
        let l = self.levels[j];
        // a discretized bell whose centre moves with j
        let centre = 0.35 + 0.1 * (j % 4) as f64;
        let mut p: Vec<f64> = (0..l)
            .map(|i| {
                let t = i as f64 / (l - 1) as f64;
                (-((t - centre) / 0.35).powi(2)).exp() + 0.05
            })
            .collect();
        if population == Population::Target && j == self.shift_dim {
            for (i, v) in p.iter_mut().enumerate() {
                *v *= (self.shift * i as f64 / (l - 1) as f64).exp();
            }
        }
        let s: f64 = p.iter().sum();
        p.iter_mut().for_each(|v| *v /= s);
        p
    }

    fn columns(&self) -> Vec<Column> {
        self.levels
            .iter()
            .enumerate()
            .map(|(j, &l)| {
                let kind = if l == 2 { ColumnKind::Binary } else { ColumnKind::Ordinal };
                Column::new(format!("q{}", j + 1), kind)
            })
            .collect()
    }

    /// Noise-free mean response at a level vector.
    pub fn mean_response(&self, x: &[f64]) -> f64 {
        let l0 = self.levels[0] as f64;
        let c = (x[0] - 1.0) / (l0 - 1.0) - 0.5;
        self.intercept
            + x.iter().zip(&self.slopes).map(|(v, b)| v * b).sum::<f64>()
            + self.curvature * l0 * c * c * 4.0
    }

    /// Draws `n` records of `population` from stream `index` of `seed`.
    pub fn generate(&self, n: usize, population: Population, seed: u64, index: u64) -> Result<DataTable> {
        self.validate()?;
        if n == 0 {
            return Err(Error::EmptyInput);
        }
        let d = self.levels.len();
        let samplers: Vec<WeightedIndex<f64>> = (0..d)
            .map(|j| WeightedIndex::new(self.marginal(j, population)).map_err(|e| Error::Internal(e.to_string())))
            .collect::<Result<_>>()?;
        let pop_tag = match population {
            Population::Source => 0,
            Population::Target => 1,
        };
        let mut rng = substream(derive_seed(seed, pop_tag), domain::SYNTH, index);
        let l0 = self.levels[0];
        let mut rows = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        for _ in 0..n {
            let mut x = Vec::with_capacity(d);
            let first = samplers[0].sample(&mut rng);
            x.push(first as f64 + 1.0);
            for (j, sampler) in samplers.iter().enumerate().skip(1) {
                let lj = self.levels[j];
                let follows = rng.random::<f64>() < self.dependence;
                let level = if follows && !(population == Population::Target && j == self.shift_dim) {
                    // rank-matched level of the first dimension
                    ((first as f64 / (l0 - 1) as f64) * (lj - 1) as f64).round() as usize
                } else {
                    sampler.sample(&mut rng)
                };
                x.push(level as f64 + 1.0);
            }
            let spread = 1.0 + self.heteroscedasticity * (x[0] - 1.0) / (l0 - 1) as f64;
            let eps: f64 = rng.sample(StandardNormal);
            y.push(self.mean_response(&x) + self.noise * spread * eps);
            rows.push(x);
        }
        DataTable::new(rows, y, self.columns(), "y", None)
    }
}
