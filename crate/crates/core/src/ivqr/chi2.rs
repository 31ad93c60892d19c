//! Chi-square distribution function and its inverse.

use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

const EPS: f64 = 1e-16;
const MAX_TERMS: usize = 10_000;
const QUANTILE_TOL: f64 = 1e-10;

/// Regularized lower incomplete gamma `P(a, x)`.
///
/// Series for `x < a + 1`, Lentz continued fraction for the upper tail otherwise.
pub fn regularized_gamma_p(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x.is_infinite() {
        return 1.0;
    }
    let log_prefactor = a * x.ln() - x - ln_gamma(a);
    if x < a + 1.0 {
        let mut term = 1.0 / a;
        let mut sum = term;
        let mut ap = a;
        for _ in 0..MAX_TERMS {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if term.abs() < sum.abs() * EPS {
                break;
            }
        }
        (sum.ln() + log_prefactor).exp().min(1.0)
    } else {
        let tiny = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..MAX_TERMS {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if (delta - 1.0).abs() < EPS {
                break;
            }
        }
        (1.0 - (h.ln() + log_prefactor).exp()).max(0.0)
    }
}

pub fn chi_square_cdf(df: u32, x: f64) -> Result<f64> {
    if df == 0 {
        return Err(Error::Domain("degrees of freedom must be at least 1".into()));
    }
    if x.is_nan() {
        return Err(Error::Domain("chi-square argument is NaN".into()));
    }
    Ok(regularized_gamma_p(df as f64 / 2.0, x / 2.0))
}

/// Inverse chi-square CDF by bracketing and bisection to absolute tolerance `1e-10`.
pub fn chi_square_quantile(df: u32, prob: f64) -> Result<f64> {
    if df == 0 {
        return Err(Error::Domain("degrees of freedom must be at least 1".into()));
    }
    if !(prob > 0.0 && prob < 1.0) {
        return Err(Error::Domain(format!("probability must lie in (0, 1), got {prob}")));
    }
    let cdf = |x: f64| regularized_gamma_p(df as f64 / 2.0, x / 2.0);
    let mut lo = 0.0;
    let mut hi = (df as f64).max(1.0);
    while cdf(hi) < prob {
        lo = hi;
        hi *= 2.0;
    }
    while hi - lo > QUANTILE_TOL * hi.max(1.0) * 1e-2 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if cdf(mid) < prob {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
