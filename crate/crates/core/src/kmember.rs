//! k-member clustering.
//!
//! Records are grouped into `c = ⌊n/k⌋` clusters of at least `k` members each,
//! minimizing the summed distortion between every record `(x_i, y_i)` and its
//! cluster centroid. The solver is a greedy heuristic: clusters are grown one
//! at a time around a seed record by absorbing the nearest unassigned record.

use std::fmt;
use std::io::Write;

use nalgebra::DMatrix;
use rand::Rng;
use serde::Serialize;

use crate::dataset::DataTable;
use crate::error::{Error, Result};
use crate::rng::{domain, substream};

/// Weighted squared Euclidean distortion
/// `‖x − x̄‖² + w (y − ȳ)²` between a record and a centroid.
pub fn distortion(a: (&[f64], f64), b: (&[f64], f64), w: f64) -> Result<f64> {
    if a.0.len() != b.0.len() {
        return Err(Error::Shape {
            expected: a.0.len(),
            got: b.0.len(),
        });
    }
    if !(w > 0.0) {
        return Err(Error::Domain(format!("distortion weight must be positive, got {w}")));
    }
    Ok(raw_distortion(a.0, a.1, b.0, b.1, w))
}

#[inline]
fn raw_distortion(x: &[f64], y: f64, cx: &[f64], cy: f64, w: f64) -> f64 {
    let dx: f64 = x.iter().zip(cx).map(|(a, b)| (a - b) * (a - b)).sum();
    dx + w * (y - cy) * (y - cy)
}

/// One cluster: members, their quasi-identifier rows and summary moments.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cluster {
    pub members: Vec<usize>,
    /// Quasi-identifier rows of the members, in member order.
    pub values: Vec<Vec<f64>>,
    pub centroid_x: Vec<f64>,
    pub centroid_y: f64,
    /// Row-major d×d covariance of `values` (denominator `members.len()`).
    pub covariance: Vec<f64>,
}

impl Cluster {
    pub fn size(&self) -> usize {
        self.members.len()
    }

    pub fn covariance_matrix(&self) -> DMatrix<f64> {
        let d = self.centroid_x.len();
        DMatrix::from_row_slice(d, d, &self.covariance)
    }

    fn from_members(table: &DataTable, members: Vec<usize>) -> Self {
        let d = table.d();
        let m = members.len() as f64;
        let values: Vec<Vec<f64>> = members.iter().map(|&i| table.row(i).to_vec()).collect();
        let mut centroid_x = vec![0.0; d];
        let mut centroid_y = 0.0;
        for (&i, row) in members.iter().zip(&values) {
            for (c, v) in centroid_x.iter_mut().zip(row) {
                *c += v;
            }
            centroid_y += table.response()[i];
        }
        centroid_x.iter_mut().for_each(|c| *c /= m);
        centroid_y /= m;
        let mut covariance = vec![0.0; d * d];
        for row in &values {
            for a in 0..d {
                let da = row[a] - centroid_x[a];
                for b in a..d {
                    covariance[a * d + b] += da * (row[b] - centroid_x[b]);
                }
            }
        }
        for a in 0..d {
            for b in a..d {
                let v = covariance[a * d + b] / m;
                covariance[a * d + b] = v;
                covariance[b * d + a] = v;
            }
        }
        Self {
            members,
            values,
            centroid_x,
            centroid_y,
            covariance,
        }
    }
}

/// A k-member clustering of a (standardized) table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterModel {
    /// Cluster index of every record, `0..c`.
    pub assignment: Vec<usize>,
    pub clusters: Vec<Cluster>,
    pub k: usize,
    pub w: f64,
}

impl ClusterModel {
    /// Builds cluster summaries from a record → cluster assignment.
    pub fn from_assignment(table: &DataTable, assignment: Vec<usize>, k: usize, w: f64) -> Result<Self> {
        if assignment.len() != table.n() {
            return Err(Error::Shape {
                expected: table.n(),
                got: assignment.len(),
            });
        }
        let c = assignment.iter().max().map_or(0, |m| m + 1);
        let mut members = vec![Vec::new(); c];
        for (i, &l) in assignment.iter().enumerate() {
            members[l].push(i);
        }
        if let Some(empty) = members.iter().position(Vec::is_empty) {
            return Err(Error::Domain(format!("cluster {empty} has no members")));
        }
        let clusters = members
            .into_iter()
            .map(|m| Cluster::from_members(table, m))
            .collect();
        Ok(Self {
            assignment,
            clusters,
            k,
            w,
        })
    }

    pub fn c(&self) -> usize {
        self.clusters.len()
    }

    pub fn n(&self) -> usize {
        self.assignment.len()
    }

    pub fn d(&self) -> usize {
        self.clusters.first().map_or(0, |c| c.centroid_x.len())
    }

    pub fn cluster_of(&self, record: usize) -> &Cluster {
        &self.clusters[self.assignment[record]]
    }

    /// Writes `record_id,cluster_index` rows for audit.
    pub fn write_assignment_csv<W: Write>(&self, writer: W, record_ids: &[String]) -> Result<()> {
        if record_ids.len() != self.n() {
            return Err(Error::Shape {
                expected: self.n(),
                got: record_ids.len(),
            });
        }
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["record_id", "cluster_index"])?;
        for (id, l) in record_ids.iter().zip(&self.assignment) {
            wtr.write_record([id.as_str(), &l.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Greedy k-member clustering with `c = ⌊n/k⌋` clusters.
///
/// The first seed is a uniformly random record; each cluster grows by adding
/// the unassigned record nearest its running centroid until it holds `k`
/// members, and the next seed is the unassigned record farthest from the
/// finished cluster's centroid. Leftover records join the nearest centroid.
/// Ties go to the lowest index.
pub fn greedy_k_member(table: &DataTable, k: usize, w: f64, seed: u64) -> Result<ClusterModel> {
    let n = table.n();
    if k < 2 {
        return Err(Error::Domain(format!("k must be at least 2, got {k}")));
    }
    if k > n {
        return Err(Error::Infeasible { k, n });
    }
    if !(w > 0.0) {
        return Err(Error::Domain(format!("distortion weight must be positive, got {w}")));
    }
    let y = table.response();
    let c = n / k;

    let mut rng = substream(seed, domain::CLUSTER_SEED, 0);
    let mut unassigned: Vec<usize> = (0..n).collect();
    let mut assignment = vec![usize::MAX; n];
    let mut centroids: Vec<(Vec<f64>, f64)> = Vec::with_capacity(c);

    let take = |pool: &mut Vec<usize>, pos: usize| pool.swap_remove(pos);

    let mut seed_pos = rng.random_range(0..n);
    for l in 0..c {
        if l > 0 {
            let (cx, cy) = &centroids[l - 1];
            seed_pos = extreme(&unassigned, |i| raw_distortion(table.row(i), y[i], cx, *cy, w), true);
        }
        let first = take(&mut unassigned, seed_pos);
        assignment[first] = l;
        let mut sum_x = table.row(first).to_vec();
        let mut sum_y = y[first];
        let mut size = 1usize;
        while size < k {
            let cx: Vec<f64> = sum_x.iter().map(|s| s / size as f64).collect();
            let cy = sum_y / size as f64;
            let pos = extreme(&unassigned, |i| raw_distortion(table.row(i), y[i], &cx, cy, w), false);
            let rec = take(&mut unassigned, pos);
            assignment[rec] = l;
            for (s, v) in sum_x.iter_mut().zip(table.row(rec)) {
                *s += v;
            }
            sum_y += y[rec];
            size += 1;
        }
        centroids.push((sum_x.iter().map(|s| s / size as f64).collect(), sum_y / size as f64));
    }

    unassigned.sort_unstable();
    for &rec in &unassigned {
        let mut best = (f64::INFINITY, 0);
        for (l, (cx, cy)) in centroids.iter().enumerate() {
            let dist = raw_distortion(table.row(rec), y[rec], cx, *cy, w);
            if dist < best.0 {
                best = (dist, l);
            }
        }
        assignment[rec] = best.1;
    }
    debug_assert!(assignment.iter().all(|&l| l < c));
    debug_assert_eq!(centroids.len(), c);
    ClusterModel::from_assignment(table, assignment, k, w)
}

/// Position in `pool` of the record minimizing (or maximizing) `score`;
/// ties resolve to the lowest record index.
fn extreme(pool: &[usize], score: impl Fn(usize) -> f64, maximize: bool) -> usize {
    let mut best_pos = 0;
    let mut best = (score(pool[0]), pool[0]);
    for (pos, &rec) in pool.iter().enumerate().skip(1) {
        let s = score(rec);
        let better = if maximize { s > best.0 } else { s < best.0 };
        if better || (s == best.0 && rec < best.1) {
            best = (s, rec);
            best_pos = pos;
        }
    }
    best_pos
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum Violation {
    Undersized { cluster: usize, size: usize, k: usize },
    Duplicated { record: usize, clusters: Vec<usize> },
    Unassigned { record: usize },
    AssignmentMismatch { record: usize, assigned: usize, listed: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Undersized { cluster, size, k } => {
                write!(f, "cluster {cluster} has {size} members, fewer than k = {k}")
            }
            Violation::Duplicated { record, clusters } => {
                write!(f, "record {record} appears in clusters {clusters:?}")
            }
            Violation::Unassigned { record } => write!(f, "record {record} is in no cluster"),
            Violation::AssignmentMismatch {
                record,
                assigned,
                listed,
            } => write!(
                f,
                "record {record} is assigned to cluster {assigned} but listed in cluster {listed}"
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub valid: bool,
    pub violations: Vec<Violation>,
}

/// Checks the k-member constraints: every cluster has at least `k` members
/// and the member lists partition the records exactly.
pub fn validate_k_anonymous(model: &ClusterModel) -> ValidationReport {
    let n = model.n();
    let mut violations = Vec::new();
    let mut seen: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (l, cluster) in model.clusters.iter().enumerate() {
        if cluster.size() < model.k {
            violations.push(Violation::Undersized {
                cluster: l,
                size: cluster.size(),
                k: model.k,
            });
        }
        for &rec in &cluster.members {
            if rec < n {
                seen[rec].push(l);
            }
        }
    }
    for (rec, clusters) in seen.into_iter().enumerate() {
        match clusters.as_slice() {
            [] => violations.push(Violation::Unassigned { record: rec }),
            [l] if *l != model.assignment[rec] => violations.push(Violation::AssignmentMismatch {
                record: rec,
                assigned: model.assignment[rec],
                listed: *l,
            }),
            [_] => {}
            _ => violations.push(Violation::Duplicated { record: rec, clusters }),
        }
    }
    ValidationReport {
        valid: violations.is_empty(),
        violations,
    }
}

/// Objective value `Σ_i d((x_i, y_i), (x̄_{ℓ_i}, ȳ_{ℓ_i}))`.
pub fn total_distortion(model: &ClusterModel, table: &DataTable) -> Result<f64> {
    if model.n() != table.n() {
        return Err(Error::Shape {
            expected: table.n(),
            got: model.n(),
        });
    }
    let y = table.response();
    Ok((0..table.n())
        .map(|i| {
            let c = model.cluster_of(i);
            raw_distortion(table.row(i), y[i], &c.centroid_x, c.centroid_y, model.w)
        })
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Column, ColumnKind};

    pub(crate) fn line(xs: &[f64]) -> DataTable {
        DataTable::new(
            xs.iter().map(|&x| vec![x]).collect(),
            vec![0.0; xs.len()],
            vec![Column::new("x", ColumnKind::Continuous)],
            "y",
            None,
        )
        .unwrap()
    }

    #[test]
    fn distortion_values() {
        assert_eq!(distortion((&[1.0, 2.0], 3.0), (&[1.0, 2.0], 3.0), 1.0).unwrap(), 0.0);
        let a = distortion((&[0.0, 0.0], 0.0), (&[3.0, 4.0], 1.0), 2.0).unwrap();
        assert_eq!(a, 27.0);
        let b = distortion((&[3.0, 4.0], 1.0), (&[0.0, 0.0], 0.0), 2.0).unwrap();
        assert_eq!(a, b);
        assert!(matches!(distortion((&[0.0], 0.0), (&[0.0, 1.0], 0.0), 1.0), Err(Error::Shape { .. })));
        assert!(matches!(distortion((&[0.0], 0.0), (&[0.0], 0.0), 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn separates_two_well_spaced_pairs() {
        let t = line(&[0.0, 1.0, 10.0, 11.0]);
        for seed in 0..8 {
            let m = greedy_k_member(&t, 2, 1.0, seed).unwrap();
            assert_eq!(m.c(), 2);
            assert_eq!(m.assignment[0], m.assignment[1]);
            assert_eq!(m.assignment[2], m.assignment[3]);
            assert_ne!(m.assignment[0], m.assignment[2]);
            assert_eq!(total_distortion(&m, &t).unwrap(), 1.0);
        }
    }

    #[test]
    fn k_equal_n_is_one_cluster_at_the_mean() {
        let t = line(&[1.0, 2.0, 6.0]);
        let m = greedy_k_member(&t, 3, 1.0, 1).unwrap();
        assert_eq!(m.c(), 1);
        assert_eq!(m.clusters[0].centroid_x, vec![3.0]);
        assert_eq!(m.clusters[0].members, vec![0, 1, 2]);
    }

    #[test]
    fn leftover_record_is_absorbed() {
        let t = line(&[0.0, 1.0, 2.0, 10.0, 11.0]);
        let m = greedy_k_member(&t, 2, 1.0, 3).unwrap();
        assert_eq!(m.c(), 2);
        let mut sizes: Vec<usize> = m.clusters.iter().map(Cluster::size).collect();
        sizes.sort();
        assert_eq!(sizes, vec![2, 3]);
        assert!(validate_k_anonymous(&m).valid);
    }

    #[test]
    fn rejects_bad_k() {
        let t = line(&[0.0, 1.0, 2.0]);
        assert!(matches!(greedy_k_member(&t, 4, 1.0, 0), Err(Error::Infeasible { k: 4, n: 3 })));
        assert!(matches!(greedy_k_member(&t, 1, 1.0, 0), Err(Error::Domain(_))));
    }

    #[test]
    fn deterministic_given_seed() {
        let xs: Vec<f64> = (0..37).map(|i| ((i * 7919) % 101) as f64).collect();
        let t = line(&xs);
        let a = greedy_k_member(&t, 4, 1.0, 11).unwrap();
        let b = greedy_k_member(&t, 4, 1.0, 11).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn validation_reports_violations() {
        let t = line(&[0.0, 1.0, 2.0, 3.0, 4.0, 5.0]);
        let good = greedy_k_member(&t, 3, 1.0, 0).unwrap();
        assert!(validate_k_anonymous(&good).valid);

        let mut small = good.clone();
        let moved = small.clusters[0].members.pop().unwrap();
        small.clusters[1].members.push(moved);
        small.assignment[moved] = 1;
        let report = validate_k_anonymous(&small);
        assert!(!report.valid);
        assert!(report
            .violations
            .contains(&Violation::Undersized { cluster: 0, size: 2, k: 3 }));

        let mut dup = good.clone();
        let rec = dup.clusters[0].members[0];
        dup.clusters[1].members.push(rec);
        let report = validate_k_anonymous(&dup);
        assert!(!report.valid);
        assert!(matches!(report.violations[0], Violation::Duplicated { record, .. } if record == rec));
    }

    #[test]
    fn centroid_is_member_mean_and_covariance_is_psd() {
        let rows = vec![vec![0.0, 1.0], vec![2.0, 1.0], vec![4.0, 4.0], vec![1.0, 0.0]];
        let t = DataTable::new(
            rows,
            vec![1.0, 2.0, 3.0, 4.0],
            vec![Column::new("a", ColumnKind::Continuous), Column::new("b", ColumnKind::Continuous)],
            "y",
            None,
        )
        .unwrap();
        let m = ClusterModel::from_assignment(&t, vec![0, 0, 0, 0], 2, 1.0).unwrap();
        let c = &m.clusters[0];
        assert_eq!(c.centroid_x, vec![1.75, 1.5]);
        assert_eq!(c.centroid_y, 2.5);
        let cov = c.covariance_matrix();
        assert_eq!(cov, cov.transpose());
        assert!(cov.symmetric_eigenvalues().iter().all(|&e| e >= -1e-12));
    }

    #[test]
    fn assignment_csv() {
        let t = line(&[0.0, 1.0, 10.0, 11.0]);
        let m = greedy_k_member(&t, 2, 1.0, 0).unwrap();
        let mut buf = Vec::new();
        m.write_assignment_csv(&mut buf, t.record_ids()).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("record_id,cluster_index\n"));
        assert_eq!(text.lines().count(), 5);
    }
}
