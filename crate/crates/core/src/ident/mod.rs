//! Identification diagnostics for a discrete treatment `D` and instrument `Z`.
//!
//! With `D` taking `l` values and `Z` taking `r >= l` values, candidate
//! quantiles `y = (y_1, ..., y_l)` are judged by the moment map
//! `Pi(y)_z = P[Y <= y_D | Z = z] - tau` and its Jacobian
//! `dPi(y)[z, d] = f_Y(y_d | D = d, Z = z) P[D = d | Z = z]`.
//!
//! A [`DiscreteMomentSystem`] is either estimated from data (empirical CDFs and
//! Gaussian kernel densities per cell) or built in analytic mode from exact
//! population functionals, so that identification properties can be checked
//! without sampling noise.

mod checks;
mod polytope;
mod scan;
mod univalence;

pub use checks::{local_rank_check, local_rank_of, mlr_check, ConditionSummary, LocalRankReport, MlrReport, MlrVerdict};
pub use polytope::{projected_determinant, Face, ParameterPolytope};
pub use scan::{
    default_epsilon, identification_region_scan, inequality_region_scan, IndexFamily, InequalityScanReport,
    ScanGrid, ScanRegion, StepFunction,
};
pub use univalence::{global_univalence_check, FaceSummary, PermutationChoice, UnivalenceReport, MAX_SEARCH_INSTRUMENTS};

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::data::QuantileDataset;
use crate::error::{Error, Result};
use crate::qr::check_tau;
use crate::stats::{mean, norm_pdf, robust_scale};

/// Most distinct values a column may take and still be treated as discrete.
pub const MAX_DISCRETE_LEVELS: usize = 10;
/// Default minimum number of observations in every populated `(d, z)` cell.
pub const DEFAULT_MIN_CELL: usize = 20;
/// Most distinct outcome values for the discrete-outcome (inequality) mode.
const MAX_OUTCOME_LEVELS: usize = 20;
/// Kernel contributions beyond this many bandwidths are dropped.
const KERNEL_CUTOFF: f64 = 8.0;

/// Conditional law of `Y` within one `(d, z)` cell.
pub trait CellDistribution: Send + Sync {
    /// `P[Y <= y]`.
    fn cdf(&self, y: f64) -> f64;
    /// `P[Y < y]`; equal to [`cdf`](Self::cdf) for continuous laws.
    fn cdf_below(&self, y: f64) -> f64 {
        self.cdf(y)
    }
    fn density(&self, y: f64) -> f64;
}

/// Within-cell empirical CDF plus Gaussian kernel density.
#[derive(Debug, Clone)]
pub struct EmpiricalCell {
    sorted: Vec<f64>,
    bandwidth: f64,
}

/// Bandwidth of the within-cell kernel density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelBandwidth {
    /// `0.9 min(sd, IQR / 1.34) m^{-1/5}` per cell.
    Silverman,
    Fixed(f64),
}

impl EmpiricalCell {
    pub fn new(mut samples: Vec<f64>, bandwidth: KernelBandwidth) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyCell("cannot build a cell distribution from no samples".into()));
        }
        samples.sort_by(f64::total_cmp);
        let h = match bandwidth {
            KernelBandwidth::Fixed(h) if h > 0.0 && h.is_finite() => h,
            KernelBandwidth::Fixed(h) => return Err(Error::Domain(format!("kernel bandwidth must be positive, got {h}"))),
            KernelBandwidth::Silverman => silverman(&samples),
        };
        Ok(Self {
            sorted: samples,
            bandwidth: h,
        })
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }
}

/// Silverman's rule; a point mass gets `1e-2 max(1, |mean|)` so the density stays proper.
fn silverman(samples: &[f64]) -> f64 {
    let spread = robust_scale(samples);
    if spread > 0.0 {
        0.9 * spread * (samples.len() as f64).powf(-0.2)
    } else {
        1e-2 * mean(samples).abs().max(1.0)
    }
}

impl CellDistribution for EmpiricalCell {
    fn cdf(&self, y: f64) -> f64 {
        self.sorted.partition_point(|&v| v <= y) as f64 / self.sorted.len() as f64
    }

    fn cdf_below(&self, y: f64) -> f64 {
        self.sorted.partition_point(|&v| v < y) as f64 / self.sorted.len() as f64
    }

    fn density(&self, y: f64) -> f64 {
        let h = self.bandwidth;
        let lo = self.sorted.partition_point(|&v| v < y - KERNEL_CUTOFF * h);
        let hi = self.sorted.partition_point(|&v| v <= y + KERNEL_CUTOFF * h);
        let s: f64 = self.sorted[lo..hi].iter().map(|&v| norm_pdf((y - v) / h)).sum();
        s / (self.sorted.len() as f64 * h)
    }
}

pub type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Exact population law given by closures (continuous: `cdf_below = cdf`).
#[derive(Clone)]
pub struct AnalyticCell {
    pub cdf: RealFn,
    pub density: RealFn,
}

impl AnalyticCell {
    pub fn new(cdf: impl Fn(f64) -> f64 + Send + Sync + 'static, density: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            cdf: Arc::new(cdf),
            density: Arc::new(density),
        }
    }

    /// `N(mean, sd^2)`.
    pub fn normal(mean: f64, sd: f64) -> Self {
        Self::new(
            move |y| crate::stats::norm_cdf((y - mean) / sd),
            move |y| norm_pdf((y - mean) / sd) / sd,
        )
    }

    /// Uniform on `[lo, hi]`.
    pub fn uniform(lo: f64, hi: f64) -> Self {
        Self::new(
            move |y| ((y - lo) / (hi - lo)).clamp(0.0, 1.0),
            move |y| if (lo..=hi).contains(&y) { 1.0 / (hi - lo) } else { 0.0 },
        )
    }
}

impl fmt::Debug for AnalyticCell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("AnalyticCell")
    }
}

impl CellDistribution for AnalyticCell {
    fn cdf(&self, y: f64) -> f64 {
        (self.cdf)(y)
    }

    fn density(&self, y: f64) -> f64 {
        (self.density)(y).max(0.0)
    }
}

pub type Cell = Arc<dyn CellDistribution>;

/// Cell probabilities and conditional outcome laws backing `Pi(y)` and `dPi(y)`.
#[derive(Clone)]
pub struct DiscreteMomentSystem {
    d_support: Vec<f64>,
    z_support: Vec<f64>,
    /// `r x l`, entry `(z, d)` is `P[D = d | Z = z]`.
    cell_probs: DMatrix<f64>,
    /// `cells[z][d]`, `None` outside the support (probability zero).
    cells: Vec<Vec<Option<Cell>>>,
    tau: f64,
    /// Sample size and per-instrument-value counts; `None` in analytic mode.
    z_counts: Option<Vec<usize>>,
    /// Sorted outcome support when `Y` is discrete.
    y_support: Option<Vec<f64>>,
}

impl fmt::Debug for DiscreteMomentSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DiscreteMomentSystem")
            .field("d_support", &self.d_support)
            .field("z_support", &self.z_support)
            .field("cell_probs", &self.cell_probs)
            .field("tau", &self.tau)
            .field("z_counts", &self.z_counts)
            .field("y_support", &self.y_support)
            .finish_non_exhaustive()
    }
}

impl DiscreteMomentSystem {
    /// Builds a system from exact population functionals.
    ///
    /// Rows of `cell_probs` must sum to 1 within 1e-9 and every cell with
    /// positive probability needs a distribution.
    pub fn analytic(
        d_support: Vec<f64>,
        z_support: Vec<f64>,
        cell_probs: DMatrix<f64>,
        cells: Vec<Vec<Option<Cell>>>,
        tau: f64,
    ) -> Result<Self> {
        check_tau(tau)?;
        let (l, r) = (d_support.len(), z_support.len());
        if l == 0 || l > r {
            return Err(Error::Domain(format!("need 1 <= l <= r, got l = {l}, r = {r}")));
        }
        if cell_probs.shape() != (r, l) || cells.len() != r || cells.iter().any(|row| row.len() != l) {
            return Err(Error::Dimension(format!("cell probabilities and cells must be {r} x {l}")));
        }
        for z in 0..r {
            let row = cell_probs.row(z);
            if row.iter().any(|p| !(0.0..=1.0).contains(p)) || (row.sum() - 1.0).abs() > 1e-9 {
                return Err(Error::Domain(format!("row {z} of cell probabilities is not a distribution")));
            }
            for d in 0..l {
                if cell_probs[(z, d)] > 0.0 && cells[z][d].is_none() {
                    return Err(Error::Domain(format!("cell (z = {z}, d = {d}) has positive probability but no law")));
                }
            }
        }
        Ok(Self {
            d_support,
            z_support,
            cell_probs,
            cells,
            tau,
            z_counts: None,
            y_support: None,
        })
    }

    /// Marks the outcome as discrete with the given support (analytic discrete-outcome systems).
    pub fn with_outcome_support(mut self, mut support: Vec<f64>) -> Self {
        support.sort_by(f64::total_cmp);
        support.dedup();
        self.y_support = Some(support);
        self
    }

    pub fn l(&self) -> usize {
        self.d_support.len()
    }

    pub fn r(&self) -> usize {
        self.z_support.len()
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn d_support(&self) -> &[f64] {
        &self.d_support
    }

    pub fn z_support(&self) -> &[f64] {
        &self.z_support
    }

    pub fn cell_probs(&self) -> &DMatrix<f64> {
        &self.cell_probs
    }

    pub fn cell(&self, z: usize, d: usize) -> Option<&Cell> {
        self.cells[z][d].as_ref()
    }

    pub fn is_analytic(&self) -> bool {
        self.z_counts.is_none()
    }

    /// Observations per instrument value (estimated systems only).
    pub fn z_counts(&self) -> Option<&[usize]> {
        self.z_counts.as_deref()
    }

    pub fn y_support(&self) -> Option<&[f64]> {
        self.y_support.as_deref()
    }

    fn check_len(&self, y: &[f64]) -> Result<()> {
        if y.len() != self.l() {
            return Err(Error::Dimension(format!(
                "candidate has {} entries, expected one per treatment value ({})",
                y.len(),
                self.l()
            )));
        }
        Ok(())
    }

    /// `Pi(y)_z = sum_d P[Y <= y_d | d, z] P[d | z] - tau`.
    pub fn moment_vector(&self, y: &[f64]) -> Result<DVector<f64>> {
        self.check_len(y)?;
        Ok(DVector::from_fn(self.r(), |z, _| {
            (0..self.l())
                .filter_map(|d| self.cells[z][d].as_ref().map(|c| c.cdf(y[d]) * self.cell_probs[(z, d)]))
                .sum::<f64>()
                - self.tau
        }))
    }

    /// `dPi(y)[z, d] = f(y_d | d, z) P[d | z]`, zero outside the support.
    pub fn jacobian(&self, y: &[f64]) -> Result<DMatrix<f64>> {
        self.check_len(y)?;
        Ok(DMatrix::from_fn(self.r(), self.l(), |z, d| match &self.cells[z][d] {
            Some(c) if self.cell_probs[(z, d)] > 0.0 => c.density(y[d]) * self.cell_probs[(z, d)],
            _ => 0.0,
        }))
    }

    pub(crate) fn jacobians(&self, points: &[Vec<f64>]) -> Result<Vec<DMatrix<f64>>> {
        points.par_iter().map(|y| self.jacobian(y)).collect()
    }
}

/// Plug-in moment system from data with discrete `D` and `Z` (one column each).
///
/// Cell probabilities are empirical frequencies, so every row sums to one.
/// Cells with no observations are outside the support; populated cells with
/// fewer than `min_cell` observations are an error.
pub fn estimate_moment_system(
    data: &QuantileDataset,
    tau: f64,
    bandwidth: KernelBandwidth,
    min_cell: usize,
) -> Result<DiscreteMomentSystem> {
    check_tau(tau)?;
    let roles = data.roles();
    if roles.d.len() != 1 || roles.z.len() != 1 {
        return Err(Error::Domain(format!(
            "identification diagnostics need exactly one treatment and one instrument column, got {} and {}",
            roles.d.len(),
            roles.z.len()
        )));
    }
    let discrete = |c: usize| {
        data.support(c, MAX_DISCRETE_LEVELS).ok_or_else(|| Error::NotDiscrete {
            column: data.names()[c].clone(),
            levels: data.support(c, usize::MAX).map_or(0, |s| s.len()),
            limit: MAX_DISCRETE_LEVELS,
        })
    };
    let d_support = discrete(roles.d[0])?;
    let z_support = discrete(roles.z[0])?;
    let (l, r) = (d_support.len(), z_support.len());
    if l > r {
        return Err(Error::Domain(format!(
            "treatment takes {l} values but the instrument only {r}; need l <= r"
        )));
    }

    let (dc, zc, y) = (data.column(roles.d[0]), data.column(roles.z[0]), data.y());
    let mut samples = vec![vec![Vec::new(); l]; r];
    for i in 0..data.n() {
        let d = d_support.binary_search_by(|v| v.total_cmp(&dc[i])).expect("in support");
        let z = z_support.binary_search_by(|v| v.total_cmp(&zc[i])).expect("in support");
        samples[z][d].push(y[i]);
    }
    let z_counts: Vec<usize> = samples.iter().map(|row| row.iter().map(Vec::len).sum()).collect();
    let mut cell_probs = DMatrix::zeros(r, l);
    let mut cells: Vec<Vec<Option<Cell>>> = Vec::with_capacity(r);
    for (z, row) in samples.into_iter().enumerate() {
        let mut out = Vec::with_capacity(l);
        for (d, s) in row.into_iter().enumerate() {
            let count = s.len();
            if count > 0 && count < min_cell {
                return Err(Error::InsufficientCellData {
                    d: d_support[d],
                    z: z_support[z],
                    count,
                    required: min_cell,
                });
            }
            cell_probs[(z, d)] = count as f64 / z_counts[z] as f64;
            out.push(if count == 0 {
                None
            } else {
                Some(Arc::new(EmpiricalCell::new(s, bandwidth)?) as Cell)
            });
        }
        cells.push(out);
    }
    let y_support = data.support(roles.y, MAX_OUTCOME_LEVELS);
    Ok(DiscreteMomentSystem {
        d_support,
        z_support,
        cell_probs,
        cells,
        tau,
        z_counts: Some(z_counts),
        y_support,
    })
}
