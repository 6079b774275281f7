use dpanon_core::dataset::{build_empirical_joint, Column, ColumnKind, DataTable};
use dpanon_core::dither::{build_cell_partition, merge_cells_1d, sample_intra_cluster, GaussianDither, DEFAULT_ALPHA};
use dpanon_core::kmember::{greedy_k_member, ClusterModel};
use dpanon_core::rng::substream;
use dpanon_core::rosenblatt::{
    conditional_params, forward_cell_uniform, forward_gaussian, inverse_empirical, inverse_empirical_indexed,
    UniformVector,
};
use dpanon_core::stats::{chi_square_gof, ks_uniform};
use proptest::prelude::*;

fn table(rows: Vec<Vec<f64>>) -> DataTable {
    let d = rows[0].len();
    let n = rows.len();
    DataTable::new(
        rows,
        vec![0.0; n],
        (0..d).map(|j| Column::new(format!("x{j}"), ColumnKind::Ordinal)).collect(),
        "y",
        None,
    )
    .unwrap()
}

#[test]
fn cell_uniforms_pass_ks_per_coordinate() {
    let t = table((0..90).map(|i| vec![(i % 5) as f64, ((i / 5) % 3) as f64, ((i * 11) % 4) as f64]).collect());
    let joint = build_empirical_joint(&t);
    let model = greedy_k_member(&t, 9, 1.0, 4).unwrap();
    let p = build_cell_partition(&joint, &model).unwrap();
    let mut us = vec![Vec::new(); 3];
    for rep in 0..60 {
        for i in 0..t.n() {
            let s = sample_intra_cluster(i, &model, &p, &mut substream(rep, 50, i as u64)).unwrap();
            let u = forward_cell_uniform(&s, &p, &joint).unwrap();
            for j in 0..3 {
                us[j].push(u.u[j]);
            }
        }
    }
    for (j, col) in us.iter().enumerate() {
        let (_, pval) = ks_uniform(col).unwrap();
        assert!(pval > 0.001, "coordinate {j}: p = {pval}");
    }
}

#[test]
fn inverse_recovers_the_released_distribution() {
    // forward then inverse maps each draw back to a value of the joint,
    // with frequencies matching the joint
    let t = table((0..40).map(|i| vec![(i % 4) as f64, ((i * 3) % 5) as f64]).collect());
    let joint = build_empirical_joint(&t);
    let model = greedy_k_member(&t, 5, 1.0, 0).unwrap();
    let p = build_cell_partition(&joint, &model).unwrap();
    let cells: Vec<_> = joint.counts().keys().cloned().collect();
    let mut observed = vec![0u64; cells.len()];
    let reps = 250;
    for rep in 0..reps {
        for i in 0..t.n() {
            let s = sample_intra_cluster(i, &model, &p, &mut substream(rep, 51, i as u64)).unwrap();
            let u = forward_cell_uniform(&s, &p, &joint).unwrap();
            let v = inverse_empirical_indexed(&u, &joint).unwrap();
            observed[cells.binary_search(&v).unwrap()] += 1;
        }
    }
    let expected: Vec<f64> = cells.iter().map(|c| joint.count(c) as f64 / t.n() as f64).collect();
    let (_, pval) = chi_square_gof(&observed, &expected).unwrap();
    assert!(pval > 0.001, "p = {pval}");
}

#[test]
fn merged_cells_keep_uniformity() {
    let t = table([0.0, 0.0, 1.0, 2.0, 2.0, 3.0, 4.0, 4.0, 5.0].iter().map(|&v| vec![v]).collect());
    let joint = build_empirical_joint(&t);
    let model = ClusterModel::from_assignment(&t, vec![0, 0, 0, 1, 1, 1, 2, 2, 2], 3, 1.0).unwrap();
    let p = merge_cells_1d(&build_cell_partition(&joint, &model).unwrap(), &model).unwrap();
    let mut us = Vec::new();
    for rep in 0..3000 {
        for i in 0..t.n() {
            let s = sample_intra_cluster(i, &model, &p, &mut substream(rep, 52, i as u64)).unwrap();
            us.push(forward_cell_uniform(&s, &p, &joint).unwrap().u[0]);
        }
    }
    let bins = 10;
    let mut observed = vec![0u64; bins];
    for u in &us {
        observed[((u * bins as f64).ceil() as usize).clamp(1, bins) - 1] += 1;
    }
    let expected = vec![1.0 / bins as f64; bins];
    let (_, pval) = chi_square_gof(&observed, &expected).unwrap();
    assert!(pval > 0.001, "p = {pval}");
}

#[test]
fn gaussian_forward_is_uniform() {
    let t = table((0..60).map(|i| vec![(i % 6) as f64, ((i * 7) % 4) as f64]).collect());
    let model = greedy_k_member(&t, 10, 1.0, 2).unwrap();
    let g = GaussianDither::new(&model, DEFAULT_ALPHA).unwrap();
    let mut us = vec![Vec::new(); 2];
    for rep in 0..80 {
        for i in 0..t.n() {
            let s = g.sample(i, &mut substream(rep, 53, i as u64)).unwrap();
            let u = forward_gaussian(&s, &g).unwrap();
            us[0].push(u.u[0]);
            us[1].push(u.u[1]);
        }
    }
    for col in &us {
        assert!(ks_uniform(col).unwrap().1 > 0.001);
    }
}

#[test]
fn conditional_params_match_schur_complement() {
    let lambda = nalgebra::DMatrix::from_row_slice(2, 2, &[2.0, 0.6, 0.6, 1.0]);
    let (mu, var) = conditional_params(&lambda, &[1.0, -1.0], 1, &[2.0]).unwrap();
    assert!((mu - (-1.0 + 0.6 / 2.0 * 1.0)).abs() < 1e-14);
    assert!((var - (1.0 - 0.36 / 2.0)).abs() < 1e-14);
    let (mu0, var0) = conditional_params(&lambda, &[1.0, -1.0], 0, &[]).unwrap();
    assert!((mu0 - 1.0).abs() < 1e-14 && (var0 - 2.0).abs() < 1e-14);
}

#[test]
fn uniform_vector_rejects_zero() {
    assert!(UniformVector::new(vec![0.0], 0).is_err());
    assert!(UniformVector::new(vec![1.0], 0).is_ok());
    assert!(UniformVector::new(vec![1.5], 0).is_err());
}

proptest! {
    #[test]
    fn inverse_lands_in_the_support(
        rows in proptest::collection::vec(proptest::collection::vec(0u8..4, 2), 1..30),
        u in proptest::collection::vec(1e-12f64..=1.0, 2),
    ) {
        let t = table(rows.iter().map(|r| r.iter().map(|&v| f64::from(v)).collect()).collect());
        let joint = build_empirical_joint(&t);
        let v = inverse_empirical(&UniformVector::new(u, 0).unwrap(), &joint).unwrap();
        prop_assert!(t.rows().any(|r| r == v.as_slice()));
    }
}
