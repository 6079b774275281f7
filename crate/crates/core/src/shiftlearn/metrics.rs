use std::collections::BTreeMap;

use crate::error::{Error, Result};

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn check_lengths(predicted: &[f64], actual: &[f64]) -> Result<()> {
    if predicted.len() != actual.len() {
        return Err(Error::Shape {
            expected: actual.len(),
            got: predicted.len(),
        });
    }
    if actual.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(())
}

/// Mean prediction error as a percentage of the mean outcome.
pub fn relative_bias(predicted: &[f64], actual: &[f64]) -> Result<f64> {
    check_lengths(predicted, actual)?;
    let m = mean(actual);
    if m == 0.0 {
        return Err(Error::Domain("relative bias needs a non-zero mean outcome".into()));
    }
    Ok(100.0 * (mean(predicted) - m) / m)
}

/// Coefficient of determination; negative when worse than the mean.
pub fn r_squared(predicted: &[f64], actual: &[f64]) -> Result<f64> {
    check_lengths(predicted, actual)?;
    let m = mean(actual);
    let sst: f64 = actual.iter().map(|y| (y - m) * (y - m)).sum();
    if !(sst > 0.0) {
        return Err(Error::Domain("R² needs outcomes with positive variance".into()));
    }
    let sse: f64 = predicted.iter().zip(actual).map(|(p, y)| (y - p) * (y - p)).sum();
    Ok(1.0 - sse / sst)
}

/// `Σ_v min(p(v), q(v))` over the union of supports.
pub fn histogram_intersection<K: Ord>(p: &BTreeMap<K, f64>, q: &BTreeMap<K, f64>) -> f64 {
    p.iter()
        .filter_map(|(k, &pv)| q.get(k).map(|&qv| pv.min(qv)))
        .sum()
}

/// Normalized (optionally weighted) PMF of value tuples, keyed by the bit
/// patterns of the values.
pub fn tuple_pmf<'a>(
    rows: impl IntoIterator<Item = &'a [f64]>,
    weights: Option<&[f64]>,
) -> Result<BTreeMap<Vec<u64>, f64>> {
    let mut pmf: BTreeMap<Vec<u64>, f64> = BTreeMap::new();
    let mut total = 0.0;
    for (i, row) in rows.into_iter().enumerate() {
        let w = match weights {
            Some(ws) => *ws.get(i).ok_or(Error::Shape {
                expected: i + 1,
                got: ws.len(),
            })?,
            None => 1.0,
        };
        *pmf.entry(row.iter().map(|v| v.to_bits()).collect()).or_insert(0.0) += w;
        total += w;
    }
    if !(total > 0.0) {
        return Err(Error::Degenerate("histogram has no mass".into()));
    }
    pmf.values_mut().for_each(|v| *v /= total);
    Ok(pmf)
}
