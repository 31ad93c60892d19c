//! Chi-square quantiles against numerical integration of the density.

mod common;

use common::chi2_quantile_by_quadrature;
use ivqr_core::ivqr::{chi_square_cdf, chi_square_quantile};

#[test]
fn quantiles_match_quadrature_oracle() {
    for &(df, p, printed) in &[(1, 0.95, 3.84146), (2, 0.95, 5.99146)] {
        let q = chi_square_quantile(df, p).unwrap();
        assert!((q - chi2_quantile_by_quadrature(df, p)).abs() < 1e-6);
        assert!((q - printed).abs() < 1e-5);
    }
    for df in [3, 5] {
        for p in [0.9, 0.99] {
            let q = chi_square_quantile(df, p).unwrap();
            assert!((q - chi2_quantile_by_quadrature(df, p)).abs() < 1e-6, "df {df} p {p}");
        }
    }
}

#[test]
fn two_degrees_closed_form() {
    assert!((chi_square_quantile(2, 0.95).unwrap() + 2.0 * 0.05f64.ln()).abs() < 1e-10);
}

#[test]
fn cdf_inverts_quantile() {
    for df in [1, 2, 3, 5, 10] {
        for k in 1..10 {
            let q = k as f64 / 10.0;
            let x = chi_square_quantile(df, q).unwrap();
            assert!((chi_square_cdf(df, x).unwrap() - q).abs() < 1e-9);
        }
    }
}

#[test]
fn domain_errors() {
    assert!(chi_square_quantile(0, 0.5).is_err());
    assert!(chi_square_quantile(1, 1.0).is_err());
    assert!(chi_square_quantile(1, -0.1).is_err());
}
