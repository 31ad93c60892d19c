//! Inverse quantile regression for `q(D, X, tau) = D'alpha(tau) + X'beta(tau)`.
//!
//! For each candidate `alpha_j` on a grid, the ordinary quantile regression of
//! `Y - D'alpha_j` on `(1, X, Z)` is fitted and the instruments' coefficients
//! are summarised by the Wald statistic `W_n = gamma' A^{-1} gamma`, with `A`
//! the instrument block of the kernel sandwich covariance. The point estimate
//! minimises `W_n` over the grid; sub-level sets of `W_n` at chi-square
//! critical values are confidence regions that stay valid without strong
//! identification.

mod chi2;
mod grid;
mod region;
mod subsample;
mod tsls;

pub use chi2::{chi_square_cdf, chi_square_quantile, regularized_gamma_p};
pub use grid::{AlphaGrid, MAX_ENDOGENOUS};
pub use region::{robust_confidence_region, ConfidenceRegion};
pub use subsample::{default_block_size, variance_by_subsampling, SubsampleVariance};
pub use tsls::{default_grid, tsls, TslsFit, DEFAULT_GRID_POINTS};

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::data::{ColumnRoles, QuantileDataset};
use crate::error::{Error, Result};
use crate::qr::{check_design_rank, check_tau, fit_full_rank, qr_covariance, Bandwidth, RegressionProblem};

/// Column roles for a linear IVQR model at one quantile level.
///
/// The intercept is implicit and always part of the exogenous block.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearIvqrSpec {
    pub endogenous: Vec<usize>,
    pub exogenous: Vec<usize>,
    pub instruments: Vec<usize>,
    pub tau: f64,
}

impl LinearIvqrSpec {
    pub fn from_roles(roles: &ColumnRoles, tau: f64) -> Self {
        Self {
            endogenous: roles.d.clone(),
            exogenous: roles.x.clone(),
            instruments: roles.z.clone(),
            tau,
        }
    }

    pub fn validate(&self, data: &QuantileDataset) -> Result<()> {
        check_tau(self.tau)?;
        if self.endogenous.is_empty() {
            return Err(Error::Domain("at least one endogenous column is required".into()));
        }
        if self.endogenous.len() > MAX_ENDOGENOUS {
            return Err(Error::Domain(format!(
                "at most {MAX_ENDOGENOUS} endogenous columns are supported by grid search, got {}",
                self.endogenous.len()
            )));
        }
        if self.instruments.len() < self.endogenous.len() {
            return Err(Error::Domain(format!(
                "order condition fails: {} instruments for {} endogenous columns",
                self.instruments.len(),
                self.endogenous.len()
            )));
        }
        let y = data.roles().y;
        let mut seen = BTreeSet::new();
        for &c in self.endogenous.iter().chain(&self.exogenous).chain(&self.instruments) {
            if c >= data.columns().len() {
                return Err(Error::Domain(format!("column index {c} out of range")));
            }
            if c == y || !seen.insert(c) {
                return Err(Error::Domain(format!(
                    "column `{}` appears in more than one role",
                    data.names()[c]
                )));
            }
        }
        let p = 1 + self.exogenous.len() + self.instruments.len();
        if data.n() <= p + 1 {
            return Err(Error::Dimension(format!(
                "need more than {} observations for {p} regressors, got {}",
                p + 1,
                data.n()
            )));
        }
        Ok(())
    }

    fn n_exog(&self) -> usize {
        1 + self.exogenous.len()
    }
}

/// `[1, X, Z]` design shared by every grid point.
pub(crate) fn auxiliary_design(data: &QuantileDataset, spec: &LinearIvqrSpec) -> DMatrix<f64> {
    let n = data.n();
    let cols: Vec<&[f64]> = spec
        .exogenous
        .iter()
        .chain(&spec.instruments)
        .map(|&c| data.column(c))
        .collect();
    DMatrix::from_fn(n, 1 + cols.len(), |i, j| if j == 0 { 1.0 } else { cols[j - 1][i] })
}

/// Why a grid point was excluded from the profile minimisation.
#[derive(Debug, Clone, PartialEq)]
pub struct InvalidPoint {
    pub index: usize,
    pub reason: String,
}

/// Wald profile over an alpha grid.
///
/// `betas`, `gammas` and `wald` are `None` exactly at invalid points; every
/// present Wald value is finite and non-negative.
#[derive(Debug, Clone)]
pub struct IqrProfile {
    pub tau: f64,
    /// Number of instruments, the chi-square degrees of freedom of `W_n`.
    pub df: u32,
    pub grid: AlphaGrid,
    pub betas: Vec<Option<Vec<f64>>>,
    pub gammas: Vec<Option<Vec<f64>>>,
    pub wald: Vec<Option<f64>>,
    pub invalid: Vec<InvalidPoint>,
}

impl IqrProfile {
    /// A profile assembled from precomputed Wald values (coefficients left empty).
    pub fn from_wald(grid: AlphaGrid, wald: Vec<Option<f64>>, df: u32, tau: f64) -> Result<Self> {
        if wald.len() != grid.len() {
            return Err(Error::Dimension(format!(
                "{} Wald values for {} grid points",
                wald.len(),
                grid.len()
            )));
        }
        if wald.iter().flatten().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Domain("Wald values must be finite and non-negative".into()));
        }
        let invalid = wald
            .iter()
            .enumerate()
            .filter(|(_, w)| w.is_none())
            .map(|(index, _)| InvalidPoint {
                index,
                reason: "not supplied".into(),
            })
            .collect();
        let coef = wald.iter().map(|w| w.map(|_| Vec::new())).collect::<Vec<_>>();
        Ok(Self {
            tau,
            df,
            grid,
            betas: coef.clone(),
            gammas: coef,
            wald,
            invalid,
        })
    }

    pub fn len(&self) -> usize {
        self.wald.len()
    }

    pub fn is_empty(&self) -> bool {
        self.wald.is_empty()
    }

    pub fn alpha(&self, index: usize) -> Vec<f64> {
        self.grid.point(index)
    }
}

struct PointFit {
    beta: Vec<f64>,
    gamma: Vec<f64>,
    wald: f64,
}

fn fit_point(
    design: &DMatrix<f64>,
    y: &[f64],
    d_cols: &[&[f64]],
    alpha: &[f64],
    n_exog: usize,
    tau: f64,
) -> Result<PointFit> {
    let n = y.len();
    let response = DVector::from_fn(n, |i, _| {
        y[i] - d_cols
            .iter()
            .zip(alpha)
            .map(|(d, a)| d[i] * a)
            .sum::<f64>()
    });
    let problem = RegressionProblem::new(design.clone(), response, tau)?;
    let fit = fit_full_rank(&problem)?;
    let cov = qr_covariance(&fit, &problem, Bandwidth::HallSheather)?;
    let p = design.ncols();
    let k = p - n_exog;
    let gamma = fit.coefficients.rows(n_exog, k).into_owned();
    let a = cov.view((n_exog, n_exog), (k, k)).into_owned();
    let chol = a.cholesky().ok_or_else(|| {
        Error::NearSingularCovariance("instrument covariance block is not positive definite".into())
    })?;
    let wald = gamma.dot(&chol.solve(&gamma));
    if !wald.is_finite() || wald < 0.0 {
        return Err(Error::NearSingularCovariance(format!("Wald statistic {wald} is not usable")));
    }
    Ok(PointFit {
        beta: fit.coefficients.rows(0, n_exog).iter().copied().collect(),
        gamma: gamma.iter().copied().collect(),
        wald,
    })
}

/// Fits the auxiliary quantile regression at every grid point.
///
/// Grid points whose fit or covariance fails are flagged in
/// [`IqrProfile::invalid`] instead of aborting. Points are evaluated in
/// parallel and merged in grid order.
pub fn build_profile(data: &QuantileDataset, spec: &LinearIvqrSpec, grid: &AlphaGrid) -> Result<IqrProfile> {
    spec.validate(data)?;
    if grid.dims() != spec.endogenous.len() {
        return Err(Error::Dimension(format!(
            "grid has {} axes for {} endogenous columns",
            grid.dims(),
            spec.endogenous.len()
        )));
    }
    let design = auxiliary_design(data, spec);
    // rank problems are a property of the design, not of a grid point
    check_design_rank(&design)?;

    let y = data.y();
    let d_cols: Vec<&[f64]> = spec.endogenous.iter().map(|&c| data.column(c)).collect();
    let n_exog = spec.n_exog();
    let results: Vec<Result<PointFit>> = (0..grid.len())
        .into_par_iter()
        .map(|j| fit_point(&design, y, &d_cols, &grid.point(j), n_exog, spec.tau))
        .collect();

    let mut profile = IqrProfile {
        tau: spec.tau,
        df: spec.instruments.len() as u32,
        grid: grid.clone(),
        betas: Vec::with_capacity(grid.len()),
        gammas: Vec::with_capacity(grid.len()),
        wald: Vec::with_capacity(grid.len()),
        invalid: Vec::new(),
    };
    for (index, r) in results.into_iter().enumerate() {
        match r {
            Ok(pf) => {
                profile.betas.push(Some(pf.beta));
                profile.gammas.push(Some(pf.gamma));
                profile.wald.push(Some(pf.wald));
            }
            Err(e) => {
                profile.betas.push(None);
                profile.gammas.push(None);
                profile.wald.push(None);
                profile.invalid.push(InvalidPoint {
                    index,
                    reason: e.to_string(),
                });
            }
        }
    }
    Ok(profile)
}

/// Grid-search point estimate, optionally carrying a confidence region.
#[derive(Debug, Clone)]
pub struct IvqrEstimate {
    pub tau: f64,
    pub alpha_hat: Vec<f64>,
    /// Intercept first, then the exogenous coefficients.
    pub beta_hat: Vec<f64>,
    pub wald_min: f64,
    pub argmin_index: usize,
    pub grid_resolution: f64,
    /// The minimiser sits on the edge of the grid; the truth may lie outside it.
    pub boundary_warning: bool,
    /// Grid-local minima of `W_n` below the chi-square median.
    pub local_minima: Vec<Vec<f64>>,
    pub ci: Option<ConfidenceRegion>,
}

impl IvqrEstimate {
    pub fn with_region(mut self, region: ConfidenceRegion) -> Self {
        self.ci = Some(region);
        self
    }
}

/// Grid argmin of the Wald profile; ties go to the lexicographically smallest alpha.
pub fn estimate(profile: &IqrProfile) -> Result<IvqrEstimate> {
    let mut best: Option<(usize, f64)> = None;
    for (j, w) in profile.wald.iter().enumerate() {
        let Some(w) = *w else { continue };
        // grid order is lexicographic, so the first strict minimum wins ties
        if best.is_none_or(|(_, bw)| w < bw) {
            best = Some((j, w));
        }
    }
    let (argmin_index, wald_min) =
        best.ok_or_else(|| Error::EstimationFailed("every grid point of the profile is invalid".into()))?;

    let median_threshold = chi_square_quantile(profile.df.max(1), 0.5)?;
    let local_minima = (0..profile.len())
        .filter(|&j| match profile.wald[j] {
            Some(w) if w <= median_threshold => profile
                .grid
                .neighbors(j)
                .iter()
                .all(|&k| profile.wald[k].is_none_or(|wk| wk >= w)),
            _ => false,
        })
        .map(|j| profile.alpha(j))
        .collect();

    Ok(IvqrEstimate {
        tau: profile.tau,
        alpha_hat: profile.alpha(argmin_index),
        beta_hat: profile.betas[argmin_index].clone().unwrap_or_default(),
        wald_min,
        argmin_index,
        grid_resolution: profile.grid.resolution(),
        boundary_warning: profile.grid.len() > 1 && profile.grid.is_edge(argmin_index),
        local_minima,
        ci: None,
    })
}
