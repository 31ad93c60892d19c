//! Kernel sandwich covariance for quantile regression coefficients.

use nalgebra::DMatrix;

use super::{QrFit, RegressionProblem};
use crate::error::{Error, Result};
use crate::stats::{norm_pdf, norm_quantile, robust_scale};

/// Reciprocal-condition threshold below which the density-weighted Gram is rejected.
const H_RCOND_MIN: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bandwidth {
    /// Hall–Sheather rule at level `tau` (95% coverage constant), mapped to the
    /// residual scale with `min(sd, IQR/1.34)`.
    HallSheather,
    /// Explicit bandwidth on the residual scale.
    Fixed(f64),
}

/// Hall–Sheather bandwidth in probability units.
pub fn hall_sheather(n: usize, tau: f64) -> f64 {
    let z = norm_quantile(0.975);
    let x = norm_quantile(tau);
    let f = norm_pdf(x);
    (n as f64).powf(-1.0 / 3.0) * z.powf(2.0 / 3.0) * (1.5 * f * f / (2.0 * x * x + 1.0)).powf(1.0 / 3.0)
}

fn residual_bandwidth(fit: &QrFit, problem: &RegressionProblem) -> f64 {
    let tau = problem.tau();
    let h = hall_sheather(problem.n(), tau)
        .min(0.5 * tau)
        .min(0.5 * (1.0 - tau));
    let mut kappa = robust_scale(fit.residuals.as_slice());
    if kappa <= 0.0 {
        kappa = 1e-8 * (1.0 + problem.response().amax());
    }
    kappa * (norm_quantile(tau + h) - norm_quantile(tau - h))
}

/// `tau (1 - tau) H^{-1} J H^{-1} / n` with `J = X'X / n` and
/// `H = sum_i phi(r_i / h) x_i x_i' / (n h)`.
pub fn qr_covariance(fit: &QrFit, problem: &RegressionProblem, bandwidth: Bandwidth) -> Result<DMatrix<f64>> {
    let x = problem.design();
    let (n, p) = x.shape();
    if fit.residuals.len() != n || fit.coefficients.len() != p {
        return Err(Error::Dimension("fit does not belong to this problem".into()));
    }
    let h = match bandwidth {
        Bandwidth::HallSheather => residual_bandwidth(fit, problem),
        Bandwidth::Fixed(h) if h > 0.0 && h.is_finite() => h,
        Bandwidth::Fixed(h) => return Err(Error::Domain(format!("bandwidth must be positive, got {h}"))),
    };

    let nf = n as f64;
    let weights: Vec<f64> = fit.residuals.iter().map(|r| norm_pdf(r / h) / h).collect();
    let mut hm = DMatrix::zeros(p, p);
    let mut jm = DMatrix::zeros(p, p);
    for j in 0..p {
        for k in 0..=j {
            let (mut sh, mut sj) = (0.0, 0.0);
            for i in 0..n {
                let xx = x[(i, j)] * x[(i, k)];
                sh += weights[i] * xx;
                sj += xx;
            }
            hm[(j, k)] = sh / nf;
            hm[(k, j)] = sh / nf;
            jm[(j, k)] = sj / nf;
            jm[(k, j)] = sj / nf;
        }
    }

    let eig = hm.clone().symmetric_eigen().eigenvalues;
    let (lo, hi) = (eig.min(), eig.max());
    if !(hi > 0.0) || lo <= H_RCOND_MIN * hi {
        return Err(Error::NearSingularCovariance(format!(
            "density-weighted Gram has eigenvalue range [{lo:e}, {hi:e}] (bandwidth {h:e})"
        )));
    }
    let hinv = hm
        .try_inverse()
        .ok_or_else(|| Error::NearSingularCovariance("density-weighted Gram is not invertible".into()))?;
    let tau = problem.tau();
    let cov = &hinv * jm * &hinv * (tau * (1.0 - tau) / nf);
    Ok((&cov + cov.transpose()) * 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qr::fit_qr;
    use nalgebra::DVector;

    #[test]
    fn hall_sheather_shrinks_with_n() {
        let a = hall_sheather(100, 0.5);
        let b = hall_sheather(800, 0.5);
        assert!((a / b - 2.0).abs() < 1e-12);
    }

    #[test]
    fn covariance_is_deterministic_and_symmetric() {
        let n = 200;
        let x = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { (i as f64 * 0.37).sin() });
        let y = DVector::from_fn(n, |i, _| (i as f64 * 1.3).cos() + 0.5 * (i as f64 * 0.37).sin());
        let prob = RegressionProblem::new(x, y, 0.4).unwrap();
        let fit = fit_qr(&prob).unwrap();
        let a = qr_covariance(&fit, &prob, Bandwidth::HallSheather).unwrap();
        let b = qr_covariance(&fit, &prob, Bandwidth::HallSheather).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, a.transpose());
        assert!(a[(0, 0)] > 0.0 && a[(1, 1)] > 0.0);
    }

    #[test]
    fn tiny_fixed_bandwidth_is_near_singular() {
        // even-n median: no residual is zero, so every kernel weight underflows
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let prob = RegressionProblem::new(DMatrix::from_element(6, 1, 1.0), y, 0.5).unwrap();
        let fit = fit_qr(&prob).unwrap();
        let err = qr_covariance(&fit, &prob, Bandwidth::Fixed(1e-3)).unwrap_err();
        assert!(matches!(err, Error::NearSingularCovariance(_)));
    }
}
