use nalgebra::{DMatrix, DVector};

use super::{AlphaGrid, LinearIvqrSpec};
use crate::data::QuantileDataset;
use crate::error::{Error, Result};

/// Grid points used by [`default_grid`] for a single endogenous coefficient.
pub const DEFAULT_GRID_POINTS: usize = 201;
/// Points per axis for two endogenous coefficients (51 x 51 product grid).
const DEFAULT_GRID_POINTS_2D: usize = 51;
/// Half-width of the default grid in estimated standard errors.
const DEFAULT_GRID_HALF_WIDTH_SE: f64 = 5.0;

/// Two-stage least-squares fit of `Y` on `(D, 1, X)` instrumented by `(Z, 1, X)`.
#[derive(Debug, Clone)]
pub struct TslsFit {
    pub alpha: Vec<f64>,
    /// Intercept first, then exogenous coefficients.
    pub beta: Vec<f64>,
    /// Homoskedastic standard errors of `alpha`.
    pub alpha_se: Vec<f64>,
}

pub fn tsls(data: &QuantileDataset, spec: &LinearIvqrSpec) -> Result<TslsFit> {
    spec.validate(data)?;
    let n = data.n();
    let k_d = spec.endogenous.len();
    let exog: Vec<&[f64]> = spec.exogenous.iter().map(|&c| data.column(c)).collect();
    let regressors: Vec<&[f64]> = spec.endogenous.iter().map(|&c| data.column(c)).collect();
    let instruments: Vec<&[f64]> = spec.instruments.iter().map(|&c| data.column(c)).collect();

    let with_exog = |lead: &[&[f64]]| {
        DMatrix::from_fn(n, lead.len() + 1 + exog.len(), |i, j| {
            if j < lead.len() {
                lead[j][i]
            } else if j == lead.len() {
                1.0
            } else {
                exog[j - lead.len() - 1][i]
            }
        })
    };
    let x = with_exog(&regressors);
    let w = with_exog(&instruments);
    let y = DVector::from_column_slice(data.y());

    let singular = || Error::SingularDesign("two-stage least squares normal equations are singular".into());
    let wtw = (w.transpose() * &w).cholesky().ok_or_else(singular)?;
    // first stage fitted values P_W X
    let x_hat = &w * wtw.solve(&(w.transpose() * &x));
    let xhx = (x_hat.transpose() * &x_hat).cholesky().ok_or_else(singular)?;
    let coef = xhx.solve(&(x_hat.transpose() * &y));

    let resid = &y - &x * &coef;
    let dof = n.saturating_sub(x.ncols()).max(1) as f64;
    let sigma2 = resid.norm_squared() / dof;
    let cov = xhx.inverse() * sigma2;

    Ok(TslsFit {
        alpha: coef.rows(0, k_d).iter().copied().collect(),
        beta: coef.rows(k_d, coef.len() - k_d).iter().copied().collect(),
        alpha_se: (0..k_d).map(|j| cov[(j, j)].max(0.0).sqrt()).collect(),
    })
}

/// Grid centred at the 2SLS estimate, spanning five standard errors each way.
///
/// When the standard error is not finite or negligible next to the centre
/// (an exact fit) the half-width falls back to `max(1, |centre|)`.
pub fn default_grid(data: &QuantileDataset, spec: &LinearIvqrSpec) -> Result<AlphaGrid> {
    let fit = tsls(data, spec)?;
    let points = if fit.alpha.len() == 1 {
        DEFAULT_GRID_POINTS
    } else {
        DEFAULT_GRID_POINTS_2D
    };
    let axes = fit
        .alpha
        .iter()
        .zip(&fit.alpha_se)
        .map(|(&c, &se)| {
            let c = if c.is_finite() { c } else { 0.0 };
            let half = DEFAULT_GRID_HALF_WIDTH_SE * se;
            let half = if half.is_finite() && half > 1e-8 * c.abs().max(1.0) {
                half
            } else {
                c.abs().max(1.0)
            };
            let step = 2.0 * half / (points - 1) as f64;
            (0..points).map(|k| c - half + k as f64 * step).collect()
        })
        .collect();
    AlphaGrid::from_axes(axes)
}
