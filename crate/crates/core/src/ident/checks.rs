use nalgebra::DMatrix;
use serde::Serialize;

use super::{DiscreteMomentSystem, ParameterPolytope};
use crate::error::{Error, Result};

/// Singular values at or below this fraction of the largest count as zero.
const RANK_TOL: f64 = 1e-8;
/// Margin required for the strict inequalities of the likelihood-ratio conditions.
const STRICT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalRankReport {
    pub rank: usize,
    pub singular_values: Vec<f64>,
    pub min_singular_value: f64,
    pub pass: bool,
}

/// Numerical rank of an `r x l` Jacobian; passes iff the rank is `l`.
pub fn local_rank_of(jacobian: &DMatrix<f64>) -> LocalRankReport {
    let mut sv: Vec<f64> = jacobian.clone().singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    let max = sv.first().copied().unwrap_or(0.0);
    let rank = if max > 0.0 {
        sv.iter().filter(|&&s| s > RANK_TOL * max).count()
    } else {
        0
    };
    LocalRankReport {
        rank,
        min_singular_value: sv.last().copied().unwrap_or(0.0),
        pass: rank == jacobian.ncols(),
        singular_values: sv,
    }
}

/// Local full-rank condition of the moment map at `y`.
pub fn local_rank_check(sys: &DiscreteMomentSystem, y: &[f64]) -> Result<LocalRankReport> {
    Ok(local_rank_of(&sys.jacobian(y)?))
}

/// Outcome of one pair of likelihood-ratio conditions over the grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionSummary {
    /// Cross-product inequality held at every grid point.
    pub ratio_holds: bool,
    /// Diagonal entries were positive at every grid point.
    pub positivity_holds: bool,
    pub holds: bool,
    /// Smallest of the ratio margin and the two diagonal entries, over the grid.
    pub worst_margin: f64,
    pub worst_point: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MlrVerdict {
    /// The inequality with `Z = 1` favouring `D = 1` holds with positive diagonal.
    Primary,
    /// The row-swapped pair holds.
    Swapped,
    Both,
    Neither,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MlrReport {
    pub points_evaluated: usize,
    /// `J11 J00 > J01 J10` together with `J11 > 0`, `J00 > 0`.
    pub primary: ConditionSummary,
    /// `J01 J10 > J11 J00` together with `J01 > 0`, `J10 > 0`.
    pub swapped: ConditionSummary,
    pub verdict: MlrVerdict,
    /// `J01 J10 = 0` at every point, so the primary ratio condition is automatic
    /// whenever the diagonal is positive (e.g. nobody treated at `Z = 0`).
    pub rhs_identically_zero: bool,
}

fn summarize(points: &[Vec<f64>], margins: &[(f64, f64, f64)]) -> ConditionSummary {
    let mut worst = f64::INFINITY;
    let mut worst_point = Vec::new();
    let mut ratio_holds = true;
    let mut positivity_holds = true;
    for (p, &(ratio, a, b)) in points.iter().zip(margins) {
        ratio_holds &= ratio > STRICT_TOL;
        positivity_holds &= a > STRICT_TOL && b > STRICT_TOL;
        let m = ratio.min(a).min(b);
        if m < worst {
            worst = m;
            worst_point = p.clone();
        }
    }
    ConditionSummary {
        ratio_holds,
        positivity_holds,
        holds: ratio_holds && positivity_holds,
        worst_margin: worst,
        worst_point,
    }
}

/// Monotone likelihood-ratio sufficient conditions for the binary case.
///
/// With `J = dPi(y)` indexed `[z, d]`, the primary pair requires
/// `J11 J00 > J01 J10` and `J11, J00 > 0` at every grid point of the region;
/// the swapped pair exchanges the instrument rows.
pub fn mlr_check(sys: &DiscreteMomentSystem, region: &ParameterPolytope, grid_step: f64) -> Result<MlrReport> {
    if sys.l() != 2 || sys.r() != 2 {
        return Err(Error::Domain(format!(
            "likelihood-ratio conditions need a binary treatment and instrument, got l = {}, r = {}",
            sys.l(),
            sys.r()
        )));
    }
    if region.dim() != 2 {
        return Err(Error::Dimension("region must be two-dimensional".into()));
    }
    let points = region.grid_points(grid_step)?;
    let jacs = sys.jacobians(&points)?;
    let primary: Vec<_> = jacs
        .iter()
        .map(|j| (j[(1, 1)] * j[(0, 0)] - j[(0, 1)] * j[(1, 0)], j[(1, 1)], j[(0, 0)]))
        .collect();
    let swapped: Vec<_> = jacs
        .iter()
        .map(|j| (j[(0, 1)] * j[(1, 0)] - j[(1, 1)] * j[(0, 0)], j[(0, 1)], j[(1, 0)]))
        .collect();
    let rhs_identically_zero = jacs.iter().all(|j| j[(0, 1)] * j[(1, 0)] == 0.0);
    let primary = summarize(&points, &primary);
    let swapped = summarize(&points, &swapped);
    let verdict = match (primary.holds, swapped.holds) {
        (true, true) => MlrVerdict::Both,
        (true, false) => MlrVerdict::Primary,
        (false, true) => MlrVerdict::Swapped,
        (false, false) => MlrVerdict::Neither,
    };
    Ok(MlrReport {
        points_evaluated: points.len(),
        primary,
        swapped,
        verdict,
        rhs_identically_zero,
    })
}
