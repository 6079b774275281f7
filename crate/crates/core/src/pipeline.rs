//! End-to-end anonymization.
//!
//! The quasi-identifiers are standardized, clustered into k-member groups and
//! then released by one of five methods. Dither-based methods map each
//! record through a dither sample, the forward Rosenblatt transform of the
//! dither law and the inverse empirical chain, so the released values are
//! always observed ones. The response is rejoined untouched.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use num_rational::Ratio;
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{build_empirical_joint, standardize, DataTable, EmpiricalJoint, Standardizer};
use crate::dither::{build_cell_partition, sample_intra_cluster, CellPartition, GaussianDither, DEFAULT_ALPHA};
use crate::error::{Error, Result};
use crate::kmember::{greedy_k_member, ClusterModel};
use crate::rng::{derive_seed, domain, substream};
use crate::rosenblatt::{forward_cell_uniform, forward_gaussian, inverse_empirical_indexed};

/// Release method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Every record gets its cluster's mean.
    Centroid,
    /// Independent draws of a cluster member per record.
    Resample,
    /// A random permutation of each cluster's values.
    Permute,
    /// Piecewise-uniform dither over the cluster's cells.
    CellDither,
    /// Gaussian dither with the cluster's loaded covariance.
    Gaussian,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Centroid,
        Method::Resample,
        Method::Permute,
        Method::CellDither,
        Method::Gaussian,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Centroid => "centroid",
            Method::Resample => "resample",
            Method::Permute => "permute",
            Method::CellDither => "cell_dither",
            Method::Gaussian => "gaussian",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "centroid" => Ok(Method::Centroid),
            "resample" => Ok(Method::Resample),
            "permute" => Ok(Method::Permute),
            "cell-dither" | "cell_dither" => Ok(Method::CellDither),
            "gaussian" => Ok(Method::Gaussian),
            other => Err(Error::Usage(format!(
                "unknown method '{other}' (expected centroid, resample, permute, cell-dither or gaussian)"
            ))),
        }
    }
}

/// Run parameters shared by all methods.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnonParams {
    /// Weight of the response in the clustering distortion.
    pub w: f64,
    /// Diagonal loading of the Gaussian dither.
    pub alpha: f64,
    pub seed: u64,
}

impl Default for AnonParams {
    fn default() -> Self {
        Self {
            w: 1.0,
            alpha: DEFAULT_ALPHA,
            seed: 0,
        }
    }
}

/// Released table: anonymized quasi-identifiers next to the original
/// response, in input record order.
#[derive(Debug, Clone, PartialEq)]
pub struct AnonymizedTable {
    pub table: DataTable,
    pub method: Method,
    pub k: usize,
    pub seed: u64,
    pub alpha: f64,
    pub w: f64,
    /// Cluster of every record.
    pub assignment: Vec<usize>,
}

#[derive(Serialize)]
struct Sidecar<'a> {
    method: Method,
    k: usize,
    seed: u64,
    alpha: f64,
    w: f64,
    n: usize,
    clusters: usize,
    quasi_identifiers: Vec<&'a str>,
    response: &'a str,
    started_at: String,
    finished_at: String,
}

impl AnonymizedTable {
    pub fn n(&self) -> usize {
        self.table.n()
    }

    pub fn qi_hat(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.table.rows()
    }

    pub fn response(&self) -> &[f64] {
        self.table.response()
    }

    /// Writes the release as CSV. Tables loaded from CSV keep their original
    /// header and every non-quasi-identifier field verbatim.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        match &self.table.source {
            Some(src) => {
                wtr.write_record(&src.headers)?;
                for (row, xhat) in src.rows.iter().zip(self.table.rows()) {
                    let mut out = row.clone();
                    for (&pos, v) in src.qi_positions.iter().zip(xhat) {
                        out[pos] = v.to_string();
                    }
                    wtr.write_record(&out)?;
                }
            }
            None => {
                let mut header: Vec<&str> = self.table.columns().iter().map(|c| c.name.as_str()).collect();
                header.push(self.table.response_name());
                wtr.write_record(&header)?;
                for (xhat, y) in self.table.rows().zip(self.table.response()) {
                    let mut out: Vec<String> = xhat.iter().map(f64::to_string).collect();
                    out.push(y.to_string());
                    wtr.write_record(&out)?;
                }
            }
        }
        wtr.flush()?;
        Ok(())
    }

    /// Writes the JSON metadata sidecar.
    pub fn write_sidecar<W: Write>(
        &self,
        writer: W,
        started_at: chrono::DateTime<chrono::Utc>,
        finished_at: chrono::DateTime<chrono::Utc>,
    ) -> Result<()> {
        let sidecar = Sidecar {
            method: self.method,
            k: self.k,
            seed: self.seed,
            alpha: self.alpha,
            w: self.w,
            n: self.n(),
            clusters: self.assignment.iter().max().map_or(0, |m| m + 1),
            quasi_identifiers: self.table.columns().iter().map(|c| c.name.as_str()).collect(),
            response: self.table.response_name(),
            started_at: started_at.to_rfc3339(),
            finished_at: finished_at.to_rfc3339(),
        };
        serde_json::to_writer_pretty(writer, &sidecar)?;
        Ok(())
    }
}

/// A clustered table ready to be released any number of times.
///
/// Clustering depends only on the data, `k`, `w` and the clustering seed;
/// each release then draws fresh randomness from its own seed.
#[derive(Debug, Clone)]
pub struct Anonymizer {
    raw: DataTable,
    standardized: DataTable,
    standardizer: Standardizer,
    raw_joint: EmpiricalJoint,
    joint: EmpiricalJoint,
    model: ClusterModel,
    partition: CellPartition,
    k: usize,
    w: f64,
}

impl Anonymizer {
    pub fn prepare(table: &DataTable, k: usize, w: f64, seed: u64) -> Result<Self> {
        let (standardized, standardizer) = standardize(table)?;
        let raw_joint = build_empirical_joint(table);
        let joint = build_empirical_joint(&standardized);
        if joint.counts() != raw_joint.counts() {
            return Err(Error::Internal(
                "standardization merged distinct quasi-identifier values".into(),
            ));
        }
        let model = greedy_k_member(&standardized, k, w, seed)?;
        let partition = build_cell_partition(&joint, &model)?;
        Ok(Self {
            raw: table.clone(),
            standardized,
            standardizer,
            raw_joint,
            joint,
            model,
            partition,
            k,
            w,
        })
    }

    pub fn model(&self) -> &ClusterModel {
        &self.model
    }

    pub fn standardizer(&self) -> &Standardizer {
        &self.standardizer
    }

    pub fn standardized(&self) -> &DataTable {
        &self.standardized
    }

    /// Empirical joint of the standardized quasi-identifiers.
    pub fn joint(&self) -> &EmpiricalJoint {
        &self.joint
    }

    pub fn raw_joint(&self) -> &EmpiricalJoint {
        &self.raw_joint
    }

    pub fn partition(&self) -> &CellPartition {
        &self.partition
    }

    /// Releases the table with `method`, drawing randomness from `seed`.
    pub fn release(&self, method: Method, alpha: f64, seed: u64) -> Result<AnonymizedTable> {
        let d = self.raw.d();
        let qi: Vec<f64> = match method {
            Method::Centroid => (0..self.raw.n())
                .flat_map(|i| self.standardizer.revert_row(&self.model.cluster_of(i).centroid_x))
                .collect(),
            Method::Resample | Method::Permute => {
                let sources = resample_within_clusters(&self.model, seed, method == Method::Resample);
                sources.iter().flat_map(|&s| self.raw.row(s).to_vec()).collect()
            }
            Method::CellDither => {
                let picks = (0..self.raw.n())
                    .into_par_iter()
                    .map(|i| {
                        let mut rng = substream(seed, domain::CELL_DITHER, i as u64);
                        let xt = sample_intra_cluster(i, &self.model, &self.partition, &mut rng)?;
                        let u = forward_cell_uniform(&xt, &self.partition, &self.joint)?;
                        inverse_empirical_indexed(&u, &self.joint)
                    })
                    .collect::<Result<Vec<_>>>()?;
                picks.iter().flat_map(|t| self.raw_joint.value_of(t)).collect()
            }
            Method::Gaussian => {
                let dither = GaussianDither::new(&self.model, alpha)?;
                let picks = (0..self.raw.n())
                    .into_par_iter()
                    .map(|i| {
                        let mut rng = substream(seed, domain::GAUSSIAN, i as u64);
                        let xt = dither.sample(i, &mut rng)?;
                        let u = forward_gaussian(&xt, &dither)?;
                        inverse_empirical_indexed(&u, &self.joint)
                    })
                    .collect::<Result<Vec<_>>>()?;
                picks.iter().flat_map(|t| self.raw_joint.value_of(t)).collect()
            }
        };
        debug_assert_eq!(qi.len(), self.raw.n() * d);
        Ok(AnonymizedTable {
            table: self.raw.with_qi(qi)?,
            method,
            k: self.k,
            seed,
            alpha,
            w: self.w,
            assignment: self.model.assignment.clone(),
        })
    }
}

/// Standardize, cluster and release `table` in one go.
pub fn anonymize(table: &DataTable, k: usize, method: Method, params: AnonParams) -> Result<AnonymizedTable> {
    if method == Method::Gaussian && !(params.alpha > 0.0 && params.alpha.is_finite()) {
        return Err(Error::Domain(format!("alpha must be positive, got {}", params.alpha)));
    }
    Anonymizer::prepare(table, k, params.w, params.seed)?.release(method, params.alpha, params.seed)
}

/// Seed of release `trial` in a series of repeated releases.
pub fn trial_seed(seed: u64, trial: u64) -> u64 {
    derive_seed(derive_seed(seed, domain::TRIAL), trial)
}

/// Source record whose values each record receives.
///
/// With replacement every record draws a member of its own cluster
/// uniformly at random, so a value is picked with its frequency in the
/// cluster. Without replacement each cluster's members are shuffled among
/// themselves.
pub fn resample_within_clusters(model: &ClusterModel, seed: u64, with_replacement: bool) -> Vec<usize> {
    let mut out = vec![0usize; model.n()];
    if with_replacement {
        out.par_iter_mut().enumerate().for_each(|(i, slot)| {
            let members = &model.cluster_of(i).members;
            let mut rng = substream(seed, domain::RESAMPLE, i as u64);
            *slot = members[rng.random_range(0..members.len())];
        });
    } else {
        let shuffled: Vec<Vec<usize>> = model
            .clusters
            .par_iter()
            .enumerate()
            .map(|(l, c)| {
                let mut rng = substream(seed, domain::PERMUTE, l as u64);
                let mut m = c.members.clone();
                m.shuffle(&mut rng);
                m
            })
            .collect();
        for (c, perm) in model.clusters.iter().zip(&shuffled) {
            for (&dst, &src) in c.members.iter().zip(perm) {
                out[dst] = src;
            }
        }
    }
    out
}

/// Exact output PMF of resampling with replacement:
/// `Σ_ℓ (n_ℓ/n) · n_ℓ(v)/n_ℓ` for every value tuple `v` of `joint`.
pub fn resample_output_pmf(joint: &EmpiricalJoint, model: &ClusterModel) -> Result<BTreeMap<Vec<usize>, Ratio<u64>>> {
    let n = model.n() as u64;
    let mut pmf: BTreeMap<Vec<usize>, Ratio<u64>> = BTreeMap::new();
    for cluster in &model.clusters {
        let size = cluster.size() as u64;
        let weight = Ratio::new(size, n);
        let mut counts: BTreeMap<Vec<usize>, u64> = BTreeMap::new();
        for row in &cluster.values {
            let key = joint
                .index_of(row)
                .ok_or_else(|| Error::Partition("cluster value absent from the joint".into()))?;
            *counts.entry(key).or_insert(0) += 1;
        }
        for (key, c) in counts {
            *pmf.entry(key).or_insert_with(|| Ratio::from_integer(0)) += weight * Ratio::new(c, size);
        }
    }
    Ok(pmf)
}

/// Empirical PMF of `joint` as exact fractions.
pub fn empirical_pmf_exact(joint: &EmpiricalJoint) -> BTreeMap<Vec<usize>, Ratio<u64>> {
    joint
        .counts()
        .iter()
        .map(|(k, &c)| (k.clone(), Ratio::new(c, joint.total())))
        .collect()
}
