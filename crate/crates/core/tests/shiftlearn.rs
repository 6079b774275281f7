use std::collections::BTreeMap;

use dpanon_core::dataset::{build_empirical_joint, Column, ColumnKind, DataTable};
use dpanon_core::rng::substream;
use dpanon_core::shiftlearn::{
    fit_regression, histogram_intersection, logistic_weights, nonparametric_weights, r_squared, relative_bias,
    transfer_weights, weighted_least_squares, Coding, LogisticOptions, TransferSpec,
};
use dpanon_core::stats::spearman;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;

fn table(rows: Vec<Vec<f64>>, y: Vec<f64>) -> DataTable {
    let d = rows[0].len();
    DataTable::new(
        rows,
        y,
        (0..d).map(|j| Column::new(format!("x{j}"), ColumnKind::Ordinal)).collect(),
        "y",
        None,
    )
    .unwrap()
}

/// Solves the 2×2 weighted normal equations by Cramer's rule.
fn normal_equations_2(x: &[f64], y: &[f64], w: &[f64]) -> (f64, f64) {
    let s = |f: &dyn Fn(usize) -> f64| (0..x.len()).map(|i| w[i] * f(i)).sum::<f64>();
    let (a, b, c) = (s(&|_| 1.0), s(&|i| x[i]), s(&|i| x[i] * x[i]));
    let (r0, r1) = (s(&|i| y[i]), s(&|i| x[i] * y[i]));
    let det = a * c - b * b;
    ((r0 * c - b * r1) / det, (a * r1 - b * r0) / det)
}

#[test]
fn three_point_weighted_fit() {
    let x = [0.0, 1.0, 2.0];
    let y = [1.0, 2.0, 4.0];
    let w = [1.0, 1.0, 2.0];
    let design = DMatrix::from_fn(3, 2, |i, j| if j == 0 { 1.0 } else { x[i] });
    let beta = weighted_least_squares(&design, &y, &w, 0.0).unwrap();
    let (b0, b1) = normal_equations_2(&x, &y, &w);
    assert!((beta[0] - b0).abs() < 1e-8 && (beta[1] - b1).abs() < 1e-8, "{beta:?} vs {b0}, {b1}");
}

#[test]
fn unit_weights_reduce_to_ordinary_least_squares() {
    let mut rng = substream(0, 60, 0);
    let x: Vec<f64> = (0..40).map(|_| rng.random_range(0.0..5.0)).collect();
    let y: Vec<f64> = x.iter().map(|v| 2.0 - 0.5 * v + rng.random_range(-1.0..1.0)).collect();
    let design = DMatrix::from_fn(40, 2, |i, j| if j == 0 { 1.0 } else { x[i] });
    let beta = weighted_least_squares(&design, &y, &[1.0; 40], 0.0).unwrap();
    let (b0, b1) = normal_equations_2(&x, &y, &[1.0; 40]);
    assert!((beta[0] - b0).abs() < 1e-10 && (beta[1] - b1).abs() < 1e-10);
}

#[test]
fn rank_deficient_design_is_degenerate() {
    let design = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0]);
    assert!(weighted_least_squares(&design, &[1.0, 2.0, 3.0], &[1.0; 3], 0.0).is_err());
    assert!(weighted_least_squares(&design, &[1.0, 2.0, 3.0], &[-1.0, 1.0, 1.0], 0.0).is_err());
}

#[test]
fn dummy_and_numeric_codings_fit_and_predict() {
    let rows: Vec<Vec<f64>> = (0..60).map(|i| vec![(i % 3) as f64 + 1.0]).collect();
    let y: Vec<f64> = rows.iter().map(|r| [0.0, 5.0, 7.0][r[0] as usize - 1]).collect();
    let t = table(rows, y.clone());
    let dummy = fit_regression(&t, Coding::Dummy, &[1.0; 60], 0.0).unwrap();
    let (pred, warnings) = dummy.predict(&t).unwrap();
    assert!(warnings.is_empty());
    assert!(pred.iter().zip(&y).all(|(a, b)| (a - b).abs() < 1e-9));
    let numeric = fit_regression(&t, Coding::Numeric, &[1.0; 60], 0.0).unwrap();
    assert_eq!(numeric.coefficients.len(), 2);
    let unseen = table(vec![vec![9.0]], vec![0.0]);
    let (_, warnings) = dummy.predict(&unseen).unwrap();
    assert_eq!(warnings.len(), 1);
}

#[test]
fn logistic_weights_increase_toward_the_target() {
    let mut rng = substream(1, 61, 0);
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for _ in 0..400 {
        features.push(vec![rng.random_range(0.0..1.0)]);
        labels.push(false);
    }
    for _ in 0..400 {
        let u: f64 = rng.random_range(0.0..1.0);
        features.push(vec![u.sqrt()]);
        labels.push(true);
    }
    let fit = logistic_weights(&features, &labels, LogisticOptions::default()).unwrap();
    assert!(fit.converged);
    assert!(fit.coefficients[1] > 0.0);
    let mut pairs: Vec<(f64, f64)> = features[..400].iter().map(|f| f[0]).zip(fit.weights.weights.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    assert!(pairs.windows(2).all(|p| p[1].1 >= p[0].1));
    let mean = fit.weights.weights.iter().sum::<f64>() / 400.0;
    assert!((mean - 1.0).abs() < 1e-12);
}

#[test]
fn logistic_and_nonparametric_agree_on_ranking() {
    let mut rng = substream(2, 62, 0);
    let src: Vec<Vec<f64>> = (0..3000).map(|_| vec![f64::from(rng.random_range(0..6u8))]).collect();
    let tgt: Vec<Vec<f64>> = (0..3000)
        .map(|_| {
            let a: u8 = rng.random_range(0..6);
            let b: u8 = rng.random_range(0..6);
            vec![f64::from(a.max(b))]
        })
        .collect();
    let source = table(src.clone(), vec![0.0; 3000]);
    let target = table(tgt.clone(), vec![0.0; 3000]);
    let np = nonparametric_weights(&build_empirical_joint(&source), &build_empirical_joint(&target))
        .unwrap()
        .per_record(&source, true)
        .unwrap();
    let mut features = src;
    features.extend(tgt);
    let labels: Vec<bool> = (0..6000).map(|i| i >= 3000).collect();
    let lr = logistic_weights(&features, &labels, LogisticOptions::default()).unwrap();
    let rho = spearman(&np.weights, &lr.weights.weights).unwrap();
    assert!(rho > 0.9, "rho = {rho}");
}

#[test]
fn perfect_separation_is_reported() {
    let features = vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0]];
    let labels = vec![false, false, true, true];
    assert!(logistic_weights(&features, &labels, LogisticOptions::default()).is_err());
}

#[test]
fn disjoint_tasks_get_inverse_prior_weights() {
    let rows = vec![vec![0.0], vec![1.0], vec![1.0], vec![2.0], vec![3.0], vec![3.0], vec![2.0], vec![3.0]];
    let y = vec![0.0, 1.0, 1.0, 2.0, 3.0, 3.0, 2.0, 3.0];
    let tasks = vec![0, 0, 0, 1, 1, 1, 1, 1];
    let train = table(rows.clone(), y.clone());
    let mut targets = BTreeMap::new();
    targets.insert(0, build_empirical_joint(&train.select(&[0, 1, 2]).unwrap()));
    targets.insert(1, build_empirical_joint(&train.select(&[3, 4, 5, 6, 7]).unwrap()));
    let spec = TransferSpec::new(train, tasks.clone(), targets).unwrap();
    let priors = spec.priors();
    assert!((priors.values().sum::<f64>() - 1.0).abs() < 1e-15);
    for t in [0, 1] {
        let w = transfer_weights(&spec, t).unwrap();
        for (i, &wi) in w.weights.iter().enumerate() {
            let expected = if tasks[i] == t { 1.0 / priors[&t] } else { 0.0 };
            assert!((wi - expected).abs() < 1e-12, "task {t} record {i}: {wi}");
        }
    }
}

#[test]
fn identical_tasks_give_unit_weights() {
    let base: Vec<(f64, f64)> = vec![(0.0, 1.0), (1.0, 2.0), (1.0, 2.0), (2.0, 0.5)];
    let mut rows = Vec::new();
    let mut y = Vec::new();
    let mut tasks = Vec::new();
    for t in 0..3 {
        for &(x, r) in &base {
            rows.push(vec![x]);
            y.push(r);
            tasks.push(t);
        }
    }
    let train = table(rows, y);
    let law = build_empirical_joint(&train.select(&[0, 1, 2, 3]).unwrap());
    let targets = (0..3).map(|t| (t, law.clone())).collect();
    let spec = TransferSpec::new(train, tasks, targets).unwrap();
    for t in 0..3 {
        let w = transfer_weights(&spec, t).unwrap();
        assert!(w.weights.iter().all(|wi| (wi - 1.0).abs() < 1e-12), "{:?}", w.weights);
    }
}

#[test]
fn metrics_on_known_inputs() {
    assert!((relative_bias(&[2.0, 4.0], &[1.0, 3.0]).unwrap() - 50.0).abs() < 1e-12);
    assert_eq!(r_squared(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 1.0);
    assert!(relative_bias(&[1.0], &[0.0]).is_err());
    let p: BTreeMap<u8, f64> = [(0, 0.5), (1, 0.5)].into();
    let q: BTreeMap<u8, f64> = [(1, 0.25), (2, 0.75)].into();
    assert_eq!(histogram_intersection(&p, &q), 0.25);
    assert_eq!(histogram_intersection(&p, &p), 1.0);
}

proptest! {
    #[test]
    fn reweighting_identity(
        src in proptest::collection::vec(0u8..5, 5..60),
        tgt_idx in proptest::collection::vec(any::<prop::sample::Index>(), 1..40),
        g in proptest::collection::vec(-10.0f64..10.0, 5),
    ) {
        // targets drawn from the source support
        let tgt: Vec<u8> = tgt_idx.iter().map(|ix| src[ix.index(src.len())]).collect();
        let source = table(src.iter().map(|&v| vec![f64::from(v)]).collect(), vec![0.0; src.len()]);
        let target = table(tgt.iter().map(|&v| vec![f64::from(v)]).collect(), vec![0.0; tgt.len()]);
        let sw = nonparametric_weights(&build_empirical_joint(&source), &build_empirical_joint(&target)).unwrap();
        prop_assert_eq!(sw.unsupported_target, 0);
        let w = sw.per_record(&source, false).unwrap();
        let lhs: f64 = src.iter().zip(&w.weights).map(|(&v, wi)| wi * g[v as usize]).sum::<f64>() / src.len() as f64;
        let rhs: f64 = tgt.iter().map(|&v| g[v as usize]).sum::<f64>() / tgt.len() as f64;
        prop_assert!((lhs - rhs).abs() < 1e-9 * (1.0 + rhs.abs()));
    }
}
