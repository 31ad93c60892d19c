//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use ivqr_core::qr::check_loss;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Minimum check loss over all basic solutions `b = X_h^{-1} y_h`.
///
/// The LP optimum is attained at one of these, so this is an exact oracle.
pub fn brute_force_objective(x: &DMatrix<f64>, y: &DVector<f64>, tau: f64) -> f64 {
    let (n, p) = x.shape();
    let mut best = f64::INFINITY;
    let mut subset = Vec::with_capacity(p);
    fn visit(
        start: usize,
        n: usize,
        p: usize,
        subset: &mut Vec<usize>,
        f: &mut dyn FnMut(&[usize]),
    ) {
        if subset.len() == p {
            f(subset);
            return;
        }
        for i in start..n {
            subset.push(i);
            visit(i + 1, n, p, subset, f);
            subset.pop();
        }
    }
    visit(0, n, p, &mut subset, &mut |h| {
        let xh = DMatrix::from_fn(p, p, |a, j| x[(h[a], j)]);
        if xh.determinant().abs() < 1e-12 {
            return;
        }
        let yh = DVector::from_iterator(p, h.iter().map(|&i| y[i]));
        let b = xh.lu().solve(&yh).unwrap();
        let obj: f64 = (y - x * b).iter().map(|&u| check_loss(u, tau).unwrap()).sum();
        best = best.min(obj);
    });
    best
}

pub fn random_problem(rng: &mut ChaCha8Rng, n: usize, p: usize, ties: bool) -> (DMatrix<f64>, DVector<f64>) {
    let x = DMatrix::from_fn(n, p, |_, j| {
        if j == 0 {
            1.0
        } else {
            let v: f64 = rng.sample(StandardNormal);
            if ties {
                v.round()
            } else {
                v
            }
        }
    });
    let y = DVector::from_fn(n, |i, _| {
        let e: f64 = rng.sample(StandardNormal);
        let v = 0.5 + if p > 1 { 1.5 * x[(i, 1)] } else { 0.0 } + e;
        if ties {
            v.round()
        } else {
            v
        }
    });
    (x, y)
}


/// `Gamma(k / 2)` for small `k`, from `Gamma(1/2) = sqrt(pi)` and `Gamma(1) = 1`.
fn half_gamma(k: u32) -> f64 {
    let mut g = if k % 2 == 0 { 1.0 } else { std::f64::consts::PI.sqrt() };
    let mut a = if k % 2 == 0 { 1.0 } else { 0.5 };
    while a < k as f64 / 2.0 - 1e-12 {
        g *= a;
        a += 1.0;
    }
    g
}

/// Chi-square CDF by composite Simpson integration of the density after the
/// substitution `x = t^2`, which removes the singularity at zero for `k = 1`.
pub fn chi2_cdf_by_quadrature(k: u32, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let norm = 2f64.powf(k as f64 / 2.0) * half_gamma(k);
    let g = |t: f64| 2.0 * t.powi(k as i32 - 1) * (-t * t / 2.0).exp() / norm;
    let upper = x.sqrt();
    let m = 20_000;
    let h = upper / m as f64;
    let mut s = g(0.0) + g(upper);
    for i in 1..m {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * g(i as f64 * h);
    }
    s * h / 3.0
}

/// Quantile of [`chi2_cdf_by_quadrature`] by bisection.
pub fn chi2_quantile_by_quadrature(k: u32, p: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, 1.0);
    while chi2_cdf_by_quadrature(k, hi) < p {
        hi *= 2.0;
    }
    while hi - lo > 1e-11 {
        let mid = 0.5 * (lo + hi);
        if chi2_cdf_by_quadrature(k, mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

use std::sync::Arc;

use ivqr_core::ident::{AnalyticCell, Cell, DiscreteMomentSystem};

/// Binary `D`, `Z` system with `N(mean, 1)` cells where the probability is positive.
pub fn normal_binary_system(probs: [[f64; 2]; 2], means: [[f64; 2]; 2], tau: f64) -> DiscreteMomentSystem {
    let cells = (0..2)
        .map(|z| {
            (0..2)
                .map(|d| (probs[z][d] > 0.0).then(|| Arc::new(AnalyticCell::normal(means[z][d], 1.0)) as Cell))
                .collect()
        })
        .collect();
    let p = DMatrix::from_fn(2, 2, |z, d| probs[z][d]);
    DiscreteMomentSystem::analytic(vec![0.0, 1.0], vec![0.0, 1.0], p, cells, tau).unwrap()
}

/// Cell means placing the `tau`-quantile of every cell at `q_d`, so `Pi(q) = 0`.
pub fn centred_means(q: [f64; 2], tau: f64) -> [[f64; 2]; 2] {
    let shift = ivqr_core::stats::norm_quantile(tau);
    let m = [q[0] - shift, q[1] - shift];
    [m, m]
}

/// Nobody treated at `Z = 0`; 60% treated at `Z = 1`.
pub fn one_sided_noncompliance(q: [f64; 2], tau: f64) -> DiscreteMomentSystem {
    normal_binary_system([[1.0, 0.0], [0.4, 0.6]], centred_means(q, tau), tau)
}

/// Identical rows: the instrument carries no information about `(Y, D)`.
pub fn independent_instrument(q: [f64; 2], tau: f64) -> DiscreteMomentSystem {
    normal_binary_system([[0.5, 0.5], [0.5, 0.5]], centred_means(q, tau), tau)
}

/// Hand-coded determinants of the projected Jacobian on the four face types
/// of the binary box-half-plane region: the polygon itself, the horizontal
/// and vertical edges, and the 45-degree edge.
pub fn half_plane_face_formulas(j: &DMatrix<f64>) -> [f64; 4] {
    let (j00, j01, j10, j11) = (j[(0, 0)], j[(0, 1)], j[(1, 0)], j[(1, 1)]);
    [j00 * j11 - j01 * j10, j00, j11, (j00 + j01 + j10 + j11) / 2.0]
}
