//! Dither generation.
//!
//! Intra-cluster dither draws a continuous point from the union of the
//! rectangular cells holding the cluster's values, picking each cell with
//! probability `n_ℓ(cell) / n_ℓ` and then a uniform point inside it. Gaussian
//! dither draws from `N(x̄_ℓ, Σ_ℓ + αI)`.

use std::collections::BTreeMap;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::dataset::EmpiricalJoint;
use crate::error::{Error, Result};
use crate::kmember::ClusterModel;

/// Default diagonal loading for Gaussian dither.
pub const DEFAULT_ALPHA: f64 = 1.0 / 3.0;

/// One interval of a dimension's partition.
///
/// The interval is `(lower, upper]` and holds the observed values with
/// indices `first..=last` (a single value unless cells were merged).
/// `support` is the sub-range where the within-cell uniform law lives; it
/// differs from the interval only on the two unbounded edge intervals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub first: usize,
    pub last: usize,
    pub lower: f64,
    pub upper: f64,
    pub support: (f64, f64),
}

/// Rectangular partition of quasi-identifier space with per-cluster cell
/// counts. A cell is a tuple of interval indices, one per dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct CellPartition {
    intervals: Vec<Vec<Interval>>,
    // per cluster: (cell, n_ℓ(cell)) sorted by cell
    cluster_cells: Vec<Vec<(Vec<usize>, u64)>>,
    cell_totals: BTreeMap<Vec<usize>, u64>,
}

/// A dithered point for one record.
#[derive(Debug, Clone, PartialEq)]
pub struct DitherSample {
    pub xt: Vec<f64>,
    pub record_index: usize,
    pub cluster: usize,
}

fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) / 2.0;
    // the interval (m, ..] must still contain b
    if m >= b {
        a
    } else {
        m
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let m = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[m]
    } else {
        0.5 * (xs[m - 1] + xs[m])
    }
}

/// Intervals around the distinct values of one dimension: midpoint
/// boundaries, with the unbounded edges truncated to `[v − Δ, v + Δ]`,
/// `Δ` being half the median width of the bounded intervals.
fn dimension_intervals(values: &[f64]) -> Vec<Interval> {
    let m = values.len();
    let bounds: Vec<f64> = values.windows(2).map(|w| midpoint(w[0], w[1])).collect();
    let half_width = if m >= 3 {
        0.5 * median(bounds.windows(2).map(|w| w[1] - w[0]).collect())
    } else if m == 2 {
        0.5 * (values[1] - values[0])
    } else {
        0.5
    };
    (0..m)
        .map(|i| {
            let lower = if i == 0 { f64::NEG_INFINITY } else { bounds[i - 1] };
            let upper = if i + 1 == m { f64::INFINITY } else { bounds[i] };
            let v = values[i];
            let lo = if i == 0 { v - half_width } else { lower };
            let hi = if i + 1 == m { v + half_width } else { upper };
            let support = (lo, hi);
            Interval {
                first: i,
                last: i,
                lower,
                upper,
                support,
            }
        })
        .collect()
}

/// Builds the midpoint partition of `joint`'s values and tallies, per
/// cluster, how many members fall in each cell.
///
/// `model` must be built on the same (standardized) values as `joint`.
pub fn build_cell_partition(joint: &EmpiricalJoint, model: &ClusterModel) -> Result<CellPartition> {
    let d = joint.dims();
    if model.d() != d {
        return Err(Error::Dimension(format!(
            "model has {} dimensions, joint has {d}",
            model.d()
        )));
    }
    let intervals: Vec<Vec<Interval>> = (0..d).map(|j| dimension_intervals(joint.values(j))).collect();
    let mut cluster_cells = Vec::with_capacity(model.c());
    for (l, cluster) in model.clusters.iter().enumerate() {
        let mut cells: BTreeMap<Vec<usize>, u64> = BTreeMap::new();
        for row in &cluster.values {
            let cell = joint.index_of(row).ok_or_else(|| {
                Error::Partition(format!("cluster {l} holds a value vector absent from the joint"))
            })?;
            *cells.entry(cell).or_insert(0) += 1;
        }
        cluster_cells.push(cells.into_iter().collect());
    }
    let partition = CellPartition::assemble(intervals, cluster_cells);
    if &partition.cell_totals != joint.counts() {
        return Err(Error::Partition(
            "per-cluster cell counts do not add up to the joint counts".into(),
        ));
    }
    Ok(partition)
}

impl CellPartition {
    fn assemble(intervals: Vec<Vec<Interval>>, cluster_cells: Vec<Vec<(Vec<usize>, u64)>>) -> Self {
        let mut cell_totals = BTreeMap::new();
        for cells in &cluster_cells {
            for (cell, c) in cells {
                *cell_totals.entry(cell.clone()).or_insert(0) += c;
            }
        }
        Self {
            intervals,
            cluster_cells,
            cell_totals,
        }
    }

    pub fn dims(&self) -> usize {
        self.intervals.len()
    }

    pub fn intervals(&self, j: usize) -> &[Interval] {
        &self.intervals[j]
    }

    /// Interior boundaries of dimension `j`, increasing.
    pub fn boundaries(&self, j: usize) -> Vec<f64> {
        self.intervals[j].iter().skip(1).map(|iv| iv.lower).collect()
    }

    /// `(cell, n_ℓ(cell))` pairs of cluster `l`.
    pub fn cluster_cells(&self, l: usize) -> &[(Vec<usize>, u64)] {
        &self.cluster_cells[l]
    }

    /// `n(cell)` summed over clusters.
    pub fn cell_totals(&self) -> &BTreeMap<Vec<usize>, u64> {
        &self.cell_totals
    }

    /// Interval of dimension `j` containing `x`.
    pub fn interval_index(&self, j: usize, x: f64) -> usize {
        self.intervals[j].partition_point(|iv| iv.upper < x)
    }

    /// Cell containing `x`.
    pub fn locate(&self, x: &[f64]) -> Vec<usize> {
        x.iter().enumerate().map(|(j, &v)| self.interval_index(j, v)).collect()
    }
}

/// Draws the intra-cluster dither for `record`.
pub fn sample_intra_cluster<R: Rng + ?Sized>(
    record: usize,
    model: &ClusterModel,
    partition: &CellPartition,
    rng: &mut R,
) -> Result<DitherSample> {
    let l = *model
        .assignment
        .get(record)
        .ok_or_else(|| Error::Domain(format!("record {record} is not assigned")))?;
    let cells = partition.cluster_cells(l);
    let size: u64 = cells.iter().map(|(_, c)| c).sum();
    let mut r = rng.random_range(0..size);
    let mut chosen = &cells[cells.len() - 1].0;
    for (cell, c) in cells {
        if r < *c {
            chosen = cell;
            break;
        }
        r -= c;
    }
    let xt = chosen
        .iter()
        .enumerate()
        .map(|(j, &i)| {
            let (lo, hi) = partition.intervals[j][i].support;
            // t in (0, 1] so the point stays inside (lo, hi]
            let t = 1.0 - rng.random::<f64>();
            let x = lo + t * (hi - lo);
            if x > lo {
                x.min(hi)
            } else {
                hi
            }
        })
        .collect();
    Ok(DitherSample {
        xt,
        record_index: record,
        cluster: l,
    })
}

/// Merges runs of contiguous one-dimensional cells whose records all belong
/// to one and the same cluster.
pub fn merge_cells_1d(partition: &CellPartition, model: &ClusterModel) -> Result<CellPartition> {
    if partition.dims() != 1 {
        return Err(Error::Dimension(format!(
            "cell merging is defined for one dimension, partition has {}",
            partition.dims()
        )));
    }
    let m = partition.intervals[0].len();
    // owner[i] = Some(ℓ) when interval i is held in full by cluster ℓ
    let mut holders: Vec<Vec<usize>> = vec![Vec::new(); m];
    for (l, cells) in partition.cluster_cells.iter().enumerate() {
        for (cell, _) in cells {
            holders[cell[0]].push(l);
        }
    }
    if holders.iter().any(Vec::is_empty) {
        return Err(Error::Partition("interval without records".into()));
    }
    let owner: Vec<Option<usize>> = holders
        .iter()
        .map(|h| if h.len() == 1 { Some(h[0]) } else { None })
        .collect();

    let old = &partition.intervals[0];
    let mut merged: Vec<Interval> = Vec::new();
    let mut new_index = vec![0usize; m];
    let mut i = 0;
    while i < m {
        let mut end = i;
        if owner[i].is_some() {
            while end + 1 < m && owner[end + 1] == owner[i] {
                end += 1;
            }
        }
        let iv = Interval {
            first: old[i].first,
            last: old[end].last,
            lower: old[i].lower,
            upper: old[end].upper,
            support: (old[i].support.0, old[end].support.1),
        };
        for slot in &mut new_index[i..=end] {
            *slot = merged.len();
        }
        merged.push(iv);
        i = end + 1;
    }

    let cluster_cells = partition
        .cluster_cells
        .iter()
        .map(|cells| {
            let mut acc: BTreeMap<Vec<usize>, u64> = BTreeMap::new();
            for (cell, c) in cells {
                *acc.entry(vec![new_index[cell[0]]]).or_insert(0) += c;
            }
            acc.into_iter().collect()
        })
        .collect();
    let _ = model;
    Ok(CellPartition::assemble(vec![merged], cluster_cells))
}

/// Per-cluster Gaussian laws `N(x̄_ℓ, Λ_ℓ)` with `Λ_ℓ = Σ_ℓ + αI`, kept as
/// lower Cholesky factors.
#[derive(Debug, Clone)]
pub struct GaussianDither {
    alpha: f64,
    means: Vec<Vec<f64>>,
    lambdas: Vec<DMatrix<f64>>,
    factors: Vec<DMatrix<f64>>,
    weights: Vec<f64>,
    assignment: Vec<usize>,
}

/// Smallest admissible pivot `L_jj²` of a conditioning factorization.
pub const PD_TOLERANCE: f64 = 1e-10;

fn cholesky_lower(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let chol: Cholesky<f64, Dyn> = Cholesky::new(m.clone())
        .ok_or_else(|| Error::Internal("covariance is not positive definite".into()))?;
    let l = chol.unpack();
    if l.diagonal().iter().any(|&p| !(p * p > PD_TOLERANCE)) {
        return Err(Error::Internal("covariance pivot below tolerance".into()));
    }
    Ok(l)
}

impl GaussianDither {
    pub fn new(model: &ClusterModel, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::Domain(format!("alpha must be positive, got {alpha}")));
        }
        let d = model.d();
        let n = model.n() as f64;
        let mut means = Vec::with_capacity(model.c());
        let mut lambdas = Vec::with_capacity(model.c());
        let mut factors = Vec::with_capacity(model.c());
        let mut weights = Vec::with_capacity(model.c());
        for cluster in &model.clusters {
            let lambda = cluster.covariance_matrix() + DMatrix::<f64>::identity(d, d) * alpha;
            factors.push(cholesky_lower(&lambda)?);
            lambdas.push(lambda);
            means.push(cluster.centroid_x.clone());
            weights.push(cluster.size() as f64 / n);
        }
        Ok(Self {
            alpha,
            means,
            lambdas,
            factors,
            weights,
            assignment: model.assignment.clone(),
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn components(&self) -> usize {
        self.means.len()
    }

    pub fn dims(&self) -> usize {
        self.means.first().map_or(0, Vec::len)
    }

    /// Mixture weight `n_ℓ / n`.
    pub fn weight(&self, l: usize) -> f64 {
        self.weights[l]
    }

    pub fn mean(&self, l: usize) -> &[f64] {
        &self.means[l]
    }

    /// `Λ_ℓ = Σ_ℓ + αI`.
    pub fn lambda(&self, l: usize) -> &DMatrix<f64> {
        &self.lambdas[l]
    }

    /// Lower Cholesky factor of `Λ_ℓ`.
    pub fn factor(&self, l: usize) -> &DMatrix<f64> {
        &self.factors[l]
    }

    pub fn sample<R: Rng + ?Sized>(&self, record: usize, rng: &mut R) -> Result<DitherSample> {
        let l = *self
            .assignment
            .get(record)
            .ok_or_else(|| Error::Domain(format!("record {record} is not assigned")))?;
        let d = self.dims();
        let z = DVector::<f64>::from_iterator(d, (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let x = &self.factors[l] * z;
        Ok(DitherSample {
            xt: x.iter().zip(&self.means[l]).map(|(a, m)| a + m).collect(),
            record_index: record,
            cluster: l,
        })
    }
}

/// Draws Gaussian dither `N(x̄_ℓ, Σ_ℓ + αI)` for `record`.
pub fn sample_gaussian<R: Rng + ?Sized>(
    record: usize,
    model: &ClusterModel,
    alpha: f64,
    rng: &mut R,
) -> Result<DitherSample> {
    GaussianDither::new(model, alpha)?.sample(record, rng)
}
