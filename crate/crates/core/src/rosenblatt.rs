//! Rosenblatt transforms.
//!
//! The forward direction maps a dither sample to a vector of conditional CDF
//! values under the dither's own mixture law. The inverse direction runs the
//! empirical conditional quantile chain of the original data.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use nalgebra::DMatrix;
use libm::erfc;

use crate::dataset::{ratio, EmpiricalJoint};
use crate::dither::{CellPartition, DitherSample, GaussianDither, PD_TOLERANCE};
use crate::error::{Error, Result};

/// Uniform coordinates of one record, each in `(0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformVector {
    pub u: Vec<f64>,
    pub record_index: usize,
}

impl UniformVector {
    pub fn new(u: Vec<f64>, record_index: usize) -> Result<Self> {
        if let Some(bad) = u.iter().find(|&&v| !(v > 0.0 && v <= 1.0)) {
            return Err(Error::Domain(format!("probability {bad} outside (0, 1]")));
        }
        Ok(Self { u, record_index })
    }
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z * FRAC_1_SQRT_2)
}

fn log_normal_density(z: f64) -> f64 {
    -0.5 * z * z - 0.5 * (2.0 * PI).ln()
}

fn clamp_probability(u: f64) -> f64 {
    if u > 1.0 {
        1.0
    } else if u > 0.0 {
        u
    } else {
        f64::MIN_POSITIVE
    }
}

/// Forward transform of an intra-cluster dither sample.
///
/// Under the dither mixture, the mass of each cell conditional on the cells
/// of the earlier coordinates is the empirical conditional PMF, and the
/// within-interval law is uniform, so `u_j` is the empirical mass below the
/// interval plus a linear share of the interval's own mass.
pub fn forward_cell_uniform(
    xt: &DitherSample,
    partition: &CellPartition,
    joint: &EmpiricalJoint,
) -> Result<UniformVector> {
    let d = joint.dims();
    if xt.xt.len() != d || partition.dims() != d {
        return Err(Error::Shape {
            expected: d,
            got: xt.xt.len(),
        });
    }
    let mut prefix = Vec::with_capacity(d);
    let mut u = Vec::with_capacity(d);
    for (j, &x) in xt.xt.iter().enumerate() {
        if !x.is_finite() {
            return Err(Error::Domain(format!("non-finite dither coordinate {x}")));
        }
        let iv = partition.intervals(j)[partition.interval_index(j, x)];
        let pmf = joint
            .conditional(j, &prefix)
            .map_err(|_| Error::Partition(format!("dither sample {} lies outside every cell", xt.record_index)))?;
        let support = pmf.support();
        let a = support.partition_point(|&s| s < iv.first);
        let b = support.partition_point(|&s| s <= iv.last);
        let before = pmf.count_below(a);
        let count = pmf.count_below(b) - before;
        if count == 0 {
            return Err(Error::Partition(format!(
                "dither sample {} lies outside every cell",
                xt.record_index
            )));
        }
        let (lo, hi) = iv.support;
        let t = ((x - lo) / (hi - lo)).clamp(0.0, 1.0);
        let lower = ratio(before, pmf.total());
        let upper = ratio(before + count, pmf.total());
        let mut uj = (before as f64 + count as f64 * t) / pmf.total() as f64;
        if uj <= lower {
            uj = lower.next_up();
        }
        u.push(uj.min(upper));
        if iv.first != iv.last && j + 1 < d {
            return Err(Error::Internal("merged cells can only end the conditioning chain".into()));
        }
        prefix.push(iv.first);
    }
    UniformVector::new(u, xt.record_index)
}

/// Forward transform under the Gaussian mixture `Σ_ℓ (n_ℓ/n) N(x̄_ℓ, Λ_ℓ)`.
///
/// Component posteriors given the earlier coordinates are carried as log
/// weights so far-away points do not underflow.
pub fn forward_gaussian(xt: &DitherSample, dither: &GaussianDither) -> Result<UniformVector> {
    let d = dither.dims();
    if xt.xt.len() != d {
        return Err(Error::Shape {
            expected: d,
            got: xt.xt.len(),
        });
    }
    if let Some(bad) = xt.xt.iter().find(|v| !v.is_finite()) {
        return Err(Error::Domain(format!("non-finite dither coordinate {bad}")));
    }
    let c = dither.components();
    let mut log_w: Vec<f64> = (0..c).map(|l| dither.weight(l).ln()).collect();
    // standardized residuals z_ℓk of the coordinates seen so far
    let mut z = vec![vec![0.0; d]; c];
    let mut u = Vec::with_capacity(d);
    for j in 0..d {
        let top = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let norm: f64 = log_w.iter().map(|w| (w - top).exp()).sum();
        let mut uj = 0.0;
        for l in 0..c {
            let factor = dither.factor(l);
            let sigma = factor[(j, j)];
            if !(sigma * sigma > PD_TOLERANCE) {
                return Err(Error::Internal(format!("conditional variance {} too small", sigma * sigma)));
            }
            let mu = dither.mean(l)[j] + (0..j).map(|k| factor[(j, k)] * z[l][k]).sum::<f64>();
            let zj = (xt.xt[j] - mu) / sigma;
            z[l][j] = zj;
            uj += (log_w[l] - top).exp() / norm * normal_cdf(zj);
            log_w[l] += log_normal_density(zj) - sigma.ln();
        }
        u.push(clamp_probability(uj));
    }
    UniformVector::new(u, xt.record_index)
}

/// Mean and variance of coordinate `j` of `N(mean, lambda)` given the first
/// `j` coordinates equal `prefix`, via a Cholesky factorization of the
/// leading `(j+1) × (j+1)` block.
pub fn conditional_params(lambda: &DMatrix<f64>, mean: &[f64], j: usize, prefix: &[f64]) -> Result<(f64, f64)> {
    if prefix.len() != j || j >= mean.len() || lambda.nrows() != mean.len() || lambda.ncols() != mean.len() {
        return Err(Error::Dimension(format!(
            "conditioning coordinate {j} of a {}-dimensional law on {} values",
            mean.len(),
            prefix.len()
        )));
    }
    let block = lambda.view((0, 0), (j + 1, j + 1)).into_owned();
    let l = block
        .cholesky()
        .ok_or_else(|| Error::Internal("covariance block is not positive definite".into()))?
        .unpack();
    let mut mu = mean[j];
    let mut z = vec![0.0; j];
    for k in 0..j {
        let partial: f64 = (0..k).map(|m| l[(k, m)] * z[m]).sum();
        z[k] = (prefix[k] - mean[k] - partial) / l[(k, k)];
        mu += l[(j, k)] * z[k];
    }
    let var = l[(j, j)] * l[(j, j)];
    if !(var > PD_TOLERANCE) {
        return Err(Error::Internal(format!("conditional variance {var} too small")));
    }
    Ok((mu, var))
}

/// Value indices chosen by the inverse empirical conditional chain.
pub fn inverse_empirical_indexed(u: &UniformVector, joint: &EmpiricalJoint) -> Result<Vec<usize>> {
    if u.u.len() != joint.dims() {
        return Err(Error::Shape {
            expected: joint.dims(),
            got: u.u.len(),
        });
    }
    let mut idx = Vec::with_capacity(u.u.len());
    for (j, &uj) in u.u.iter().enumerate() {
        let i = joint.inverse_conditional_indexed(j, &idx, clamp_probability(uj))?;
        idx.push(i);
    }
    Ok(idx)
}

/// Observed value vector chosen by the inverse empirical conditional chain.
pub fn inverse_empirical(u: &UniformVector, joint: &EmpiricalJoint) -> Result<Vec<f64>> {
    Ok(joint.value_of(&inverse_empirical_indexed(u, joint)?))
}
