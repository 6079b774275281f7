use std::collections::{BTreeMap, HashMap};

use super::{ratio, DataTable};
use crate::error::{Error, Result};

/// Conditional PMF of one dimension given a fixed prefix of value indices.
///
/// `support` lists the value indices of the next dimension that occur after
/// the prefix, increasing; `cumulative[k]` counts records with an index
/// `<= support[k]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConditionalPmf {
    support: Vec<usize>,
    cumulative: Vec<u64>,
}

impl ConditionalPmf {
    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn total(&self) -> u64 {
        *self.cumulative.last().expect("conditional pmf is never empty")
    }

    /// Records at support position `pos`.
    pub fn count(&self, pos: usize) -> u64 {
        self.cumulative[pos] - self.count_below(pos)
    }

    /// Records strictly before support position `pos`.
    pub fn count_below(&self, pos: usize) -> u64 {
        if pos == 0 {
            0
        } else {
            self.cumulative[pos - 1]
        }
    }

    pub fn position(&self, index: usize) -> Option<usize> {
        self.support.binary_search(&index).ok()
    }

    /// CDF at the `pos`-th support point.
    pub fn cdf_at(&self, pos: usize) -> f64 {
        ratio(self.cumulative[pos], self.total())
    }

    /// CDF just below the `pos`-th support point.
    pub fn cdf_below(&self, pos: usize) -> f64 {
        ratio(self.count_below(pos), self.total())
    }

    /// Generalized inverse: position of the unique support point with
    /// `F(previous) < u <= F(point)`.
    pub fn inverse(&self, u: f64) -> Result<usize> {
        if !(u > 0.0 && u <= 1.0) {
            return Err(Error::Domain(format!("probability {u} outside (0, 1]")));
        }
        let total = self.total();
        let pos = self.cumulative.partition_point(|&c| ratio(c, total) < u);
        Ok(pos.min(self.support.len() - 1))
    }
}

/// Empirical joint distribution of the quasi-identifiers.
///
/// Values per dimension are the sorted distinct observations; joint counts
/// are kept sparsely by index tuple, never as a dense array.
#[derive(Debug, Clone)]
pub struct EmpiricalJoint {
    values: Vec<Vec<f64>>,
    counts: BTreeMap<Vec<usize>, u64>,
    total: u64,
    // chains[j] maps a prefix of j indices to the PMF of dimension j.
    chains: Vec<HashMap<Box<[usize]>, ConditionalPmf>>,
}

impl PartialEq for EmpiricalJoint {
    fn eq(&self, other: &Self) -> bool {
        self.values == other.values && self.counts == other.counts
    }
}

/// Builds the empirical joint of a table's quasi-identifiers.
pub fn build_empirical_joint(table: &DataTable) -> EmpiricalJoint {
    EmpiricalJoint::from_rows(table.rows(), table.d()).expect("tables are non-empty and rectangular")
}

impl EmpiricalJoint {
    /// Groups rows by exact value equality.
    pub fn from_rows<'a, I>(rows: I, d: usize) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let rows: Vec<&[f64]> = rows.into_iter().collect();
        if rows.is_empty() || d == 0 {
            return Err(Error::EmptyInput);
        }
        let mut values: Vec<Vec<f64>> = vec![Vec::new(); d];
        for row in &rows {
            if row.len() != d {
                return Err(Error::Shape {
                    expected: d,
                    got: row.len(),
                });
            }
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::Domain(format!("non-finite value {v} in dimension {j}")));
                }
                values[j].push(v);
            }
        }
        for v in &mut values {
            v.sort_by(f64::total_cmp);
            v.dedup();
        }
        let mut counts = BTreeMap::new();
        for row in &rows {
            let key: Vec<usize> = row
                .iter()
                .zip(&values)
                .map(|(x, vals)| vals.binary_search_by(|p| p.total_cmp(x)).expect("value present"))
                .collect();
            *counts.entry(key).or_insert(0u64) += 1;
        }
        Ok(Self::from_counts(values, counts))
    }

    fn from_counts(values: Vec<Vec<f64>>, counts: BTreeMap<Vec<usize>, u64>) -> Self {
        let d = values.len();
        let total = counts.values().sum();
        let mut raw: Vec<HashMap<Box<[usize]>, BTreeMap<usize, u64>>> = vec![HashMap::new(); d];
        for (key, &c) in &counts {
            for j in 0..d {
                *raw[j]
                    .entry(key[..j].into())
                    .or_default()
                    .entry(key[j])
                    .or_insert(0) += c;
            }
        }
        let chains = raw
            .into_iter()
            .map(|level| {
                level
                    .into_iter()
                    .map(|(prefix, pmf)| {
                        let mut acc = 0;
                        let (support, cumulative) = pmf
                            .into_iter()
                            .map(|(idx, c)| {
                                acc += c;
                                (idx, acc)
                            })
                            .unzip();
                        (prefix, ConditionalPmf { support, cumulative })
                    })
                    .collect()
            })
            .collect();
        Self {
            values,
            counts,
            total,
            chains,
        }
    }

    /// Applies a strictly increasing per-dimension map to the values while
    /// keeping every index and count.
    pub fn map_values(&self, f: impl Fn(usize, f64) -> f64) -> Result<Self> {
        let values: Vec<Vec<f64>> = self
            .values
            .iter()
            .enumerate()
            .map(|(j, vals)| vals.iter().map(|&v| f(j, v)).collect())
            .collect();
        for (j, vals) in values.iter().enumerate() {
            if vals.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(Error::Domain(format!(
                    "value map is not strictly increasing in dimension {j}"
                )));
            }
        }
        Ok(Self {
            values,
            counts: self.counts.clone(),
            total: self.total,
            chains: self.chains.clone(),
        })
    }

    pub fn dims(&self) -> usize {
        self.values.len()
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Distinct values of dimension `j`, increasing.
    pub fn values(&self, j: usize) -> &[f64] {
        &self.values[j]
    }

    pub fn levels(&self, j: usize) -> usize {
        self.values[j].len()
    }

    pub fn counts(&self) -> &BTreeMap<Vec<usize>, u64> {
        &self.counts
    }

    pub fn count(&self, tuple: &[usize]) -> u64 {
        self.counts.get(tuple).copied().unwrap_or(0)
    }

    /// Empirical PMF over observed index tuples.
    pub fn pmf(&self) -> impl Iterator<Item = (&Vec<usize>, f64)> + '_ {
        self.counts.iter().map(|(k, &c)| (k, ratio(c, self.total)))
    }

    pub fn value_index(&self, j: usize, v: f64) -> Option<usize> {
        self.values[j].binary_search_by(|p| p.total_cmp(&v)).ok()
    }

    /// Index tuple of an exactly observed value vector.
    pub fn index_of(&self, row: &[f64]) -> Option<Vec<usize>> {
        if row.len() != self.dims() {
            return None;
        }
        row.iter()
            .enumerate()
            .map(|(j, &v)| self.value_index(j, v))
            .collect()
    }

    pub fn value_of(&self, tuple: &[usize]) -> Vec<f64> {
        tuple.iter().enumerate().map(|(j, &i)| self.values[j][i]).collect()
    }

    /// PMF of dimension `j` given the first `j` value indices.
    pub fn conditional(&self, j: usize, prefix: &[usize]) -> Result<&ConditionalPmf> {
        if j >= self.dims() || prefix.len() != j {
            return Err(Error::Dimension(format!(
                "conditioning dimension {j} needs a prefix of length {j}, got {}",
                prefix.len()
            )));
        }
        self.chains[j].get(prefix).ok_or(Error::EmptyCondition)
    }

    fn prefix_indices(&self, prefix: &[f64]) -> Result<Vec<usize>> {
        prefix
            .iter()
            .enumerate()
            .map(|(j, &v)| self.value_index(j, v).ok_or(Error::EmptyCondition))
            .collect()
    }

    /// `F(x | prefix)` for dimension `j` with index-valued prefix.
    pub fn conditional_cdf_indexed(&self, j: usize, prefix: &[usize], x: f64) -> Result<f64> {
        let pmf = self.conditional(j, prefix)?;
        let vals = &self.values[j];
        let below = pmf.support.partition_point(|&idx| vals[idx] <= x);
        Ok(if below == 0 { 0.0 } else { pmf.cdf_at(below - 1) })
    }

    /// `F_{X_j | X^{j-1}}(x | prefix)` where `prefix` holds observed values of
    /// the first `j` dimensions.
    pub fn conditional_cdf(&self, j: usize, prefix: &[f64], x: f64) -> Result<f64> {
        let idx = self.prefix_indices(prefix)?;
        self.conditional_cdf_indexed(j, &idx, x)
    }

    /// Value index selected by the generalized inverse conditional CDF.
    pub fn inverse_conditional_indexed(&self, j: usize, prefix: &[usize], u: f64) -> Result<usize> {
        let pmf = self.conditional(j, prefix)?;
        Ok(pmf.support[pmf.inverse(u)?])
    }

    /// Observed value `v_j(i)` with `F(v_j(i-1) | prefix) < u <= F(v_j(i) | prefix)`.
    pub fn inverse_conditional_cdf(&self, j: usize, prefix: &[f64], u: f64) -> Result<f64> {
        if !(u > 0.0 && u <= 1.0) {
            return Err(Error::Domain(format!("probability {u} outside (0, 1]")));
        }
        let idx = self.prefix_indices(prefix)?;
        Ok(self.values[j][self.inverse_conditional_indexed(j, &idx, u)?])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn joint(rows: &[&[f64]]) -> EmpiricalJoint {
        EmpiricalJoint::from_rows(rows.iter().copied(), rows[0].len()).unwrap()
    }

    fn small() -> EmpiricalJoint {
        joint(&[&[1.0, 1.0], &[1.0, 2.0], &[2.0, 1.0]])
    }

    #[test]
    fn tallies_distinct_values_and_counts() {
        let j = small();
        assert_eq!(j.levels(0), 2);
        assert_eq!(j.levels(1), 2);
        assert_eq!(j.total(), 3);
        let expected: BTreeMap<Vec<usize>, u64> =
            [(vec![0, 0], 1), (vec![0, 1], 1), (vec![1, 0], 1)].into_iter().collect();
        assert_eq!(j.counts(), &expected);
    }

    #[test]
    fn singleton_and_all_equal() {
        let one = joint(&[&[7.0]]);
        assert_eq!(one.levels(0), 1);
        assert_eq!(one.count(&[0]), 1);
        let same = joint(&[&[3.0], &[3.0], &[3.0]]);
        assert_eq!(same.levels(0), 1);
        assert_eq!(same.count(&[0]), 3);
    }

    #[test]
    fn conditional_cdf_matches_counts() {
        let j = small();
        assert_eq!(j.conditional_cdf(0, &[], 1.0).unwrap(), 2.0 / 3.0);
        assert_eq!(j.conditional_cdf(1, &[1.0], 1.0).unwrap(), 0.5);
        assert_eq!(j.conditional_cdf(1, &[2.0], 1.0).unwrap(), 1.0);
        assert_eq!(j.conditional_cdf(0, &[], 0.5).unwrap(), 0.0);
        assert_eq!(j.conditional_cdf(0, &[], 2.0).unwrap(), 1.0);
        assert_eq!(j.conditional_cdf(0, &[], 99.0).unwrap(), 1.0);
        // right-continuous step between support points
        assert_eq!(j.conditional_cdf(0, &[], 1.5).unwrap(), 2.0 / 3.0);
    }

    #[test]
    fn unobserved_prefix_is_empty_condition() {
        let j = small();
        assert!(matches!(j.conditional_cdf(1, &[1.5], 1.0), Err(Error::EmptyCondition)));
        let k = joint(&[&[1.0, 1.0], &[2.0, 2.0]]);
        assert!(matches!(k.conditional(1, &[5]), Err(Error::EmptyCondition)));
    }

    #[test]
    fn inverse_brackets() {
        let j = small();
        assert_eq!(j.inverse_conditional_cdf(0, &[], 0.5).unwrap(), 1.0);
        assert_eq!(j.inverse_conditional_cdf(0, &[], 1.0).unwrap(), 2.0);
        assert_eq!(j.inverse_conditional_cdf(0, &[], 2.0 / 3.0).unwrap(), 1.0);
        assert_eq!(j.inverse_conditional_cdf(0, &[], 0.6667).unwrap(), 2.0);
        assert!(matches!(j.inverse_conditional_cdf(0, &[], 0.0), Err(Error::Domain(_))));
        assert!(matches!(j.inverse_conditional_cdf(0, &[], 1.0001), Err(Error::Domain(_))));
        assert!(matches!(j.inverse_conditional_cdf(0, &[], f64::NAN), Err(Error::Domain(_))));
    }

    #[test]
    fn map_values_keeps_structure() {
        let j = small();
        let m = j.map_values(|_, v| 2.0 * v - 3.0).unwrap();
        assert_eq!(m.values(0), &[-1.0, 1.0]);
        assert_eq!(m.counts(), j.counts());
        assert_eq!(m.conditional_cdf(1, &[-1.0], -1.0).unwrap(), 0.5);
        assert!(j.map_values(|_, v| -v).is_err());
    }

    fn arb_rows() -> impl Strategy<Value = Vec<Vec<f64>>> {
        (1usize..4).prop_flat_map(|d| {
            proptest::collection::vec(
                proptest::collection::vec((0u8..5).prop_map(f64::from), d),
                1..60,
            )
        })
    }

    proptest! {
        #[test]
        fn counts_sum_to_total_and_round_trip(rows in arb_rows()) {
            let d = rows[0].len();
            let j = EmpiricalJoint::from_rows(rows.iter().map(Vec::as_slice), d).unwrap();
            prop_assert_eq!(j.counts().values().sum::<u64>(), rows.len() as u64);
            prop_assert!(j.counts().values().all(|&c| c >= 1));
            for row in &rows {
                for dim in 0..d {
                    let prefix = &row[..dim];
                    let u = j.conditional_cdf(dim, prefix, row[dim]).unwrap();
                    prop_assert_eq!(j.inverse_conditional_cdf(dim, prefix, u).unwrap(), row[dim]);
                    let vals = j.values(dim);
                    let at_max = j.conditional_cdf(dim, prefix, *vals.last().unwrap()).unwrap();
                    prop_assert_eq!(at_max, 1.0);
                    let mut last = 0.0;
                    for &x in vals {
                        let f = j.conditional_cdf(dim, prefix, x).unwrap();
                        prop_assert!(f >= last);
                        last = f;
                    }
                }
            }
        }
    }
}
