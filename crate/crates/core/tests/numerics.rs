mod common;

use mixdp_core::numerics::{
    gaussian_sample, quantile_nearest_rank, rank_epsilon, std_normal_cdf, thin_svd, Matrix,
    RngStream,
};
use proptest::prelude::*;

use common::phi_quad;

#[test]
fn normal_cdf_matches_quadrature() {
    assert_eq!(std_normal_cdf(0.0), 0.5);
    assert!((std_normal_cdf(0.5) - 0.6914624613).abs() < 1e-10);
    assert!((std_normal_cdf(0.5) - phi_quad(0.5)).abs() < 1e-13);
    let tail = std_normal_cdf(-8.0);
    assert!((tail - 6.22096e-16).abs() < 1e-20);
    assert!(((tail - phi_quad(-8.0)) / tail).abs() < 1e-8);
    for k in -80..=80 {
        let x = k as f64 * 0.1;
        assert!((std_normal_cdf(x) - phi_quad(x)).abs() < 1e-13, "x = {x}");
    }
}

#[test]
fn normal_cdf_symmetry() {
    for k in -400..=400 {
        let x = k as f64 * 0.025;
        assert!((std_normal_cdf(x) + std_normal_cdf(-x) - 1.0).abs() < 1e-12);
    }
}

#[test]
fn distinct_streams_are_uncorrelated() {
    let a = gaussian_sample(&RngStream::new(17, 0), 100_000, 1.0).unwrap();
    let b = gaussian_sample(&RngStream::new(17, 1), 100_000, 1.0).unwrap();
    let c = gaussian_sample(&RngStream::new(17, 0).substream(1), 100_000, 1.0).unwrap();
    let corr = |u: &[f64], v: &[f64]| {
        let n = u.len() as f64;
        let (mu, mv) = (u.iter().sum::<f64>() / n, v.iter().sum::<f64>() / n);
        let cov: f64 = u.iter().zip(v).map(|(x, y)| (x - mu) * (y - mv)).sum();
        let su: f64 = u.iter().map(|x| (x - mu).powi(2)).sum::<f64>().sqrt();
        let sv: f64 = v.iter().map(|y| (y - mv).powi(2)).sum::<f64>().sqrt();
        cov / (su * sv)
    };
    assert!(corr(&a, &b).abs() < 0.01);
    assert!(corr(&a, &c).abs() < 0.01);
    assert!(corr(&b, &c).abs() < 0.01);
}

#[test]
fn rank_examples() {
    assert_eq!(rank_epsilon(&Matrix::identity(4), 1e-10).unwrap(), 4);
    let u: Vec<f64> = (0..10).map(|i| i as f64 + 1.0).collect();
    let outer = Matrix::from_fn(10, 10, |i, j| u[i] * (j as f64 - 4.5));
    assert_eq!(rank_epsilon(&outer, 1e-10).unwrap(), 1);
    let g = gaussian_sample(&RngStream::new(3, 9), 50 * 1000, 1.0).unwrap();
    let wide = Matrix::new(50, 1000, g).unwrap();
    assert_eq!(rank_epsilon(&wide, 1e-10).unwrap(), 50);
    // Smallest singular value of the wide matrix is far from zero.
    let s = thin_svd(&wide).s;
    assert!(s[49] > 1e-3 * s[0]);
}

#[test]
fn diagonal_svd() {
    let a = Matrix::new(2, 2, vec![0.0, 2.0, 3.0, 0.0]).unwrap();
    let svd = thin_svd(&a);
    assert!((svd.s[0] - 3.0).abs() < 1e-14 && (svd.s[1] - 2.0).abs() < 1e-14);
    for i in 0..2 {
        for j in 0..2 {
            let v = svd.u.get(i, j).abs();
            assert!(v < 1e-14 || (v - 1.0).abs() < 1e-14);
        }
    }
}

fn orthonormality_error(m: &Matrix) -> f64 {
    let g = m.transpose().matmul(m).unwrap();
    let mut worst: f64 = 0.0;
    for i in 0..g.rows() {
        for j in 0..g.cols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g.get(i, j) - target).abs());
        }
    }
    worst
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn svd_reconstructs_and_is_orthonormal(rows in 1usize..200, cols in 1usize..50, seed in any::<u64>()) {
        let data = gaussian_sample(&RngStream::new(seed, 0), rows * cols, 1.0).unwrap();
        let a = Matrix::new(rows, cols, data).unwrap();
        let svd = thin_svd(&a);
        let diff = Matrix::new(rows, cols, mixdp_core::numerics::sub(svd.reconstruct().data(), a.data())).unwrap();
        prop_assert!(diff.frobenius_norm() <= 1e-8 * a.frobenius_norm().max(1e-300));
        prop_assert!(orthonormality_error(&svd.u) <= 1e-10);
        prop_assert!(orthonormality_error(&svd.v) <= 1e-10);
        prop_assert!(svd.s.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn quantile_returns_an_element(values in prop::collection::vec(-1e6f64..1e6, 1..200), q in 0.001f64..=1.0) {
        let v = quantile_nearest_rank(&values, q).unwrap();
        prop_assert!(values.contains(&v));
        let mut sorted = values.clone();
        sorted.sort_by(f64::total_cmp);
        let rank = (q * values.len() as f64 - 1e-9).ceil().max(1.0) as usize;
        prop_assert_eq!(v, sorted[rank - 1]);
    }
}
