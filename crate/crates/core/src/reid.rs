//! Reidentification risk.
//!
//! An attacker links each original record to the released record nearest to
//! it in standardized quasi-identifier space, breaking ties uniformly at
//! random. Repeating release and linkage gives per-class and overall
//! frequencies of retrieving the right record.

use std::collections::BTreeMap;
use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::{DataTable, Standardizer};
use crate::error::{Error, Result};
use crate::pipeline::{trial_seed, Anonymizer, Method};
use crate::rng::{domain, substream};

/// Index of the released record chosen for every original record.
///
/// Distances are Euclidean on the quasi-identifiers after applying
/// `standardizer` (fitted on the original table) to both sides.
pub fn match_min_distance(
    original: &DataTable,
    released: &DataTable,
    standardizer: &Standardizer,
    seed: u64,
) -> Result<Vec<usize>> {
    if original.d() != released.d() {
        return Err(Error::Shape {
            expected: original.d(),
            got: released.d(),
        });
    }
    if released.n() == 0 {
        return Err(Error::EmptyInput);
    }
    // releases repeat few distinct tuples; group the candidates by tuple
    let mut groups: BTreeMap<Vec<u64>, Vec<usize>> = BTreeMap::new();
    for (i, row) in released.rows().enumerate() {
        groups.entry(row.iter().map(|v| v.to_bits()).collect()).or_default().push(i);
    }
    let targets: Vec<(Vec<f64>, &Vec<usize>)> = groups
        .iter()
        .map(|(key, members)| {
            let row: Vec<f64> = key.iter().map(|&b| f64::from_bits(b)).collect();
            (standardizer.apply_row(&row), members)
        })
        .collect();

    let matches = (0..original.n())
        .into_par_iter()
        .map(|i| {
            let x = standardizer.apply_row(original.row(i));
            let mut best = f64::INFINITY;
            let mut tied: Vec<&Vec<usize>> = Vec::new();
            for (t, members) in &targets {
                let dist: f64 = x.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum();
                if dist < best {
                    best = dist;
                    tied.clear();
                    tied.push(members);
                } else if dist == best {
                    tied.push(members);
                }
            }
            let total: usize = tied.iter().map(|m| m.len()).sum();
            let mut r = substream(seed, domain::REID_TIES, i as u64).random_range(0..total);
            for members in tied {
                if r < members.len() {
                    return members[r];
                }
                r -= members.len();
            }
            unreachable!("r is below the number of tied candidates")
        })
        .collect();
    Ok(matches)
}

/// Reidentification frequency of one equivalence class (records sharing an
/// original quasi-identifier tuple).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassFrequency {
    pub values: Vec<f64>,
    pub records: usize,
    pub hits: u64,
    pub frequency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReidReport {
    pub method: Method,
    pub k: usize,
    pub trials: usize,
    pub n: usize,
    pub hits: u64,
    /// Fraction of (record, trial) pairs linked to the right record.
    pub average: f64,
    /// `1/k`.
    pub nominal: f64,
    /// `3 · sqrt((1/k)(1 − 1/k)/T)`.
    pub band: f64,
    pub classes: Vec<ClassFrequency>,
}

impl ReidReport {
    /// Whether the average stays within the nominal rate plus its band.
    pub fn within_band(&self) -> bool {
        self.average <= self.nominal + self.band
    }

    pub fn write_json<W: Write>(&self, writer: W) -> Result<()> {
        serde_json::to_writer_pretty(writer, self)?;
        Ok(())
    }

    /// One row per class: the tuple values, size, hits and frequency.
    pub fn write_classes_csv<W: Write>(&self, writer: W, columns: &[String]) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = columns.to_vec();
        header.extend(["records", "hits", "frequency"].map(String::from));
        wtr.write_record(&header)?;
        for c in &self.classes {
            let mut row: Vec<String> = c.values.iter().map(f64::to_string).collect();
            row.push(c.records.to_string());
            row.push(c.hits.to_string());
            row.push(c.frequency.to_string());
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Repeats release and linkage `trials` times on a fixed clustering.
pub fn reid_trials(
    original: &DataTable,
    anonymizer: &Anonymizer,
    method: Method,
    alpha: f64,
    trials: usize,
    seed: u64,
) -> Result<ReidReport> {
    if trials == 0 {
        return Err(Error::Domain("at least one trial is required".into()));
    }
    let n = original.n();
    let per_trial: Vec<Vec<bool>> = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let s = trial_seed(seed, t);
            let released = anonymizer.release(method, alpha, s)?;
            let matched = match_min_distance(original, &released.table, anonymizer.standardizer(), s)?;
            Ok(matched.iter().enumerate().map(|(i, &m)| m == i).collect())
        })
        .collect::<Result<_>>()?;

    let mut record_hits = vec![0u64; n];
    for hits in &per_trial {
        for (acc, &h) in record_hits.iter_mut().zip(hits) {
            *acc += u64::from(h);
        }
    }
    let mut classes: BTreeMap<Vec<u64>, (usize, u64)> = BTreeMap::new();
    for (i, row) in original.rows().enumerate() {
        let e = classes.entry(row.iter().map(|v| v.to_bits()).collect()).or_insert((0, 0));
        e.0 += 1;
        e.1 += record_hits[i];
    }
    let classes: Vec<ClassFrequency> = classes
        .into_iter()
        .map(|(key, (records, hits))| ClassFrequency {
            values: key.iter().map(|&b| f64::from_bits(b)).collect(),
            records,
            hits,
            frequency: hits as f64 / (records * trials) as f64,
        })
        .collect();
    let hits: u64 = record_hits.iter().sum();
    let k = anonymizer.model().k;
    let nominal = 1.0 / k as f64;
    Ok(ReidReport {
        method,
        k,
        trials,
        n,
        hits,
        average: hits as f64 / (n * trials) as f64,
        nominal,
        band: 3.0 * (nominal * (1.0 - nominal) / trials as f64).sqrt(),
        classes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Column, ColumnKind};

    fn table(rows: Vec<Vec<f64>>) -> DataTable {
        let n = rows.len();
        DataTable::new(
            rows,
            (0..n).map(|i| i as f64).collect(),
            vec![Column::new("a", ColumnKind::Ordinal), Column::new("b", ColumnKind::Ordinal)],
            "y",
            None,
        )
        .unwrap()
    }

    #[test]
    fn unique_rows_match_themselves() {
        let t = table(vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 2.0], vec![3.0, 3.0]]);
        let s = Standardizer::fit(&t);
        assert_eq!(match_min_distance(&t, &t, &s, 1).unwrap(), vec![0, 1, 2, 3]);
    }

    #[test]
    fn shared_tuple_splits_evenly() {
        let t = table(vec![vec![0.0, 0.0], vec![0.0, 0.0], vec![5.0, 5.0]]);
        let s = Standardizer::fit(&t);
        let mut own = 0;
        let draws = 4000;
        for seed in 0..draws {
            let m = match_min_distance(&t, &t, &s, seed).unwrap();
            assert!(m[0] < 2);
            own += usize::from(m[0] == 0);
            assert_eq!(m[2], 2);
        }
        let f = own as f64 / draws as f64;
        assert!((f - 0.5).abs() < 4.0 * (0.25 / draws as f64).sqrt(), "{f}");
    }

    #[test]
    fn centroid_release_with_k_equal_n_is_pure_chance() {
        let rows: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64, (i * i % 5) as f64]).collect();
        let t = table(rows);
        let a = Anonymizer::prepare(&t, 8, 1.0, 0).unwrap();
        let r = reid_trials(&t, &a, Method::Centroid, 1.0 / 3.0, 400, 2).unwrap();
        assert!((r.average - 0.125).abs() < 4.0 * (0.125 * 0.875 / 3200.0f64).sqrt());
        let weighted: u64 = r.classes.iter().map(|c| c.hits).sum();
        assert_eq!(weighted, r.hits);
        let mean: f64 = r.classes.iter().map(|c| c.frequency * c.records as f64).sum::<f64>() / r.n as f64;
        assert!((mean - r.average).abs() < 1e-12);
    }

    #[test]
    fn zero_trials_rejected() {
        let t = table(vec![vec![0.0, 0.0], vec![1.0, 1.0]]);
        let a = Anonymizer::prepare(&t, 2, 1.0, 0).unwrap();
        assert!(reid_trials(&t, &a, Method::Resample, 1.0, 0, 0).is_err());
    }
}
