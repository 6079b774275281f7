//! Goodness-of-fit tests and correlation coefficients used by the
//! evaluators and the test suites.

use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

/// Kolmogorov distribution tail `P(K > λ) = 2 Σ_{m≥1} (−1)^{m−1} e^{−2m²λ²}`.
fn kolmogorov_tail(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for m in 1..=100 {
        let term = (-2.0 * (m * m) as f64 * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-17 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// One-sample Kolmogorov–Smirnov test against Uniform(0, 1).
///
/// Returns the statistic `D` and an asymptotic p-value with Stephens'
/// small-sample correction.
pub fn ks_uniform(samples: &[f64]) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in xs.iter().enumerate() {
        let f = x.clamp(0.0, 1.0);
        d = d.max((i + 1) as f64 / n - f).max(f - i as f64 / n);
    }
    let sn = n.sqrt();
    Ok((d, kolmogorov_tail((sn + 0.12 + 0.11 / sn) * d)))
}

/// Pearson chi-square goodness-of-fit test of `observed` counts against
/// cell probabilities `expected` (summing to one). Returns the statistic
/// and its p-value with `cells − 1` degrees of freedom.
pub fn chi_square_gof(observed: &[u64], expected: &[f64]) -> Result<(f64, f64)> {
    if observed.len() != expected.len() {
        return Err(Error::Shape {
            expected: expected.len(),
            got: observed.len(),
        });
    }
    if observed.len() < 2 {
        return Err(Error::Domain("chi-square test needs at least two cells".into()));
    }
    let total: u64 = observed.iter().sum();
    let mut stat = 0.0;
    for (&o, &p) in observed.iter().zip(expected) {
        if !(p > 0.0) {
            return Err(Error::Domain("expected probabilities must be positive".into()));
        }
        let e = p * total as f64;
        stat += (o as f64 - e) * (o as f64 - e) / e;
    }
    let dist = ChiSquared::new((observed.len() - 1) as f64)
        .map_err(|e| Error::Internal(format!("chi-square distribution: {e}")))?;
    Ok((stat, dist.sf(stat)))
}

/// Pearson correlation coefficient.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape {
            expected: a.len(),
            got: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(Error::Domain("correlation needs at least two points".into()));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::Domain("correlation of a constant sequence".into()));
    }
    Ok(sab / (saa * sbb).sqrt())
}

/// Ranks starting at 1, ties sharing their average rank.
fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&i, &j| xs[i].total_cmp(&xs[j]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation (Pearson correlation of average ranks).
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    pearson(&average_ranks(a), &average_ranks(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kolmogorov_tail_reference() {
        // P(K > 1.36) ≈ 0.049, P(K > 1.63) ≈ 0.010
        assert!((kolmogorov_tail(1.36) - 0.0494).abs() < 5e-4);
        assert!((kolmogorov_tail(1.6276) - 0.01).abs() < 2e-4);
    }

    #[test]
    fn ks_on_an_even_grid_passes_and_on_a_skewed_sample_fails() {
        let grid: Vec<f64> = (1..=1000).map(|i| (i as f64 - 0.5) / 1000.0).collect();
        assert!(ks_uniform(&grid).unwrap().1 > 0.99);
        let skew: Vec<f64> = grid.iter().map(|u| u * u).collect();
        assert!(ks_uniform(&skew).unwrap().1 < 1e-6);
    }

    #[test]
    fn chi_square_reference() {
        let (stat, p) = chi_square_gof(&[50, 50], &[0.5, 0.5]).unwrap();
        assert_eq!(stat, 0.0);
        assert!((p - 1.0).abs() < 1e-12);
        // χ²₁ = 3.841 at p = 0.05
        let (_, p) = chi_square_gof(&[60, 40], &[0.5, 0.5]).unwrap();
        assert!((p - 0.0455).abs() < 1e-3);
    }

    #[test]
    fn rank_correlation() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [1.0, 4.0, 9.0, 16.0];
        assert!((spearman(&a, &b).unwrap() - 1.0).abs() < 1e-15);
        assert!(pearson(&a, &b).unwrap() < 1.0);
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0]), vec![2.5, 1.0, 2.5]);
    }
}
