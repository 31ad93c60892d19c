//! Sandwich covariance against closed-form and bootstrap oracles.

use ivqr_core::qr::{fit_qr, qr_covariance, Bandwidth, RegressionProblem};
use ivqr_core::stats::{mean, norm_pdf};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

#[test]
fn median_variance_matches_asymptotic_formula() {
    let n = 10_000;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let y = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let prob = RegressionProblem::new(DMatrix::from_element(n, 1, 1.0), y, 0.5).unwrap();
    let fit = fit_qr(&prob).unwrap();
    let cov = qr_covariance(&fit, &prob, Bandwidth::HallSheather).unwrap();
    let target = 0.25 / (n as f64 * norm_pdf(0.0).powi(2));
    let rel = (cov[(0, 0)] - target).abs() / target;
    assert!(rel < 0.15, "variance {} vs {target} (rel {rel})", cov[(0, 0)]);
}

#[test]
fn slope_variance_matches_bootstrap() {
    let n = 500;
    let tau = 0.5;
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let x = DMatrix::from_fn(n, 2, |_, j| if j == 0 { 1.0 } else { rng.sample::<f64, _>(StandardNormal) });
    let y = DVector::from_fn(n, |i, _| 1.0 + 2.0 * x[(i, 1)] + rng.sample::<f64, _>(StandardNormal));
    let prob = RegressionProblem::new(x.clone(), y.clone(), tau).unwrap();
    let fit = fit_qr(&prob).unwrap();
    let cov = qr_covariance(&fit, &prob, Bandwidth::HallSheather).unwrap();

    let slopes: Vec<f64> = (0..500)
        .map(|_| {
            let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            let xb = DMatrix::from_fn(n, 2, |i, j| x[(rows[i], j)]);
            let yb = DVector::from_fn(n, |i, _| y[rows[i]]);
            fit_qr(&RegressionProblem::new(xb, yb, tau).unwrap()).unwrap().coefficients[1]
        })
        .collect();
    let m = mean(&slopes);
    let boot_var = slopes.iter().map(|s| (s - m).powi(2)).sum::<f64>() / (slopes.len() - 1) as f64;
    let rel = (cov[(1, 1)] - boot_var).abs() / boot_var;
    assert!(rel < 0.25, "sandwich {} vs bootstrap {boot_var} (rel {rel})", cov[(1, 1)]);
}

#[test]
fn covariance_is_symmetric_with_nonnegative_diagonal() {
    let n = 300;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = DMatrix::from_fn(n, 3, |_, j| if j == 0 { 1.0 } else { rng.sample::<f64, _>(StandardNormal) });
    let y = DVector::from_fn(n, |i, _| x[(i, 1)] - x[(i, 2)] + rng.sample::<f64, _>(StandardNormal));
    for &tau in &[0.1, 0.5, 0.9] {
        let prob = RegressionProblem::new(x.clone(), y.clone(), tau).unwrap();
        let fit = fit_qr(&prob).unwrap();
        let cov = qr_covariance(&fit, &prob, Bandwidth::HallSheather).unwrap();
        assert_eq!(cov, cov.transpose());
        assert!(cov.diagonal().iter().all(|&v| v >= 0.0));
        assert!(cov.symmetric_eigenvalues().iter().all(|&v| v >= -1e-12));
    }
}
