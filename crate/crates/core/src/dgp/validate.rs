use serde::Serialize;

use super::SimulatedDataset;
use crate::error::{Error, Result};
use crate::qr::check_tau;
use crate::stats::sorted_quantile;

/// Largest number of distinct instrument values treated as discrete cells.
const MAX_DISCRETE_CELLS: usize = 50;

/// How observations are grouped by the (first) instrument.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ZBinning {
    /// One cell per distinct instrument value.
    Discrete,
    /// `k` equal-frequency bins.
    Quantile(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellDeviation {
    pub tau: f64,
    pub cell: usize,
    /// Instrument range `[lo, hi]` of the cell.
    pub z_range: (f64, f64),
    pub count: usize,
    /// `|P_n[Y <= q(D, X, tau) | cell] - tau|`.
    pub deviation: f64,
    /// `3 / sqrt(count)`.
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentConditionReport {
    pub cells: Vec<CellDeviation>,
    pub max_abs_deviation: f64,
    pub pass: bool,
}

fn assign_cells(z: &[f64], binning: ZBinning) -> Result<Vec<usize>> {
    match binning {
        ZBinning::Discrete => {
            let mut support = z.to_vec();
            support.sort_by(f64::total_cmp);
            support.dedup();
            if support.len() > MAX_DISCRETE_CELLS {
                return Err(Error::NotDiscrete {
                    column: "instrument".into(),
                    levels: support.len(),
                    limit: MAX_DISCRETE_CELLS,
                });
            }
            Ok(z.iter()
                .map(|v| support.binary_search_by(|s| s.total_cmp(v)).expect("value from support"))
                .collect())
        }
        ZBinning::Quantile(k) => {
            if k == 0 {
                return Err(Error::Domain("need at least one instrument bin".into()));
            }
            let mut sorted = z.to_vec();
            sorted.sort_by(f64::total_cmp);
            let cuts: Vec<f64> = (1..k).map(|j| sorted_quantile(&sorted, j as f64 / k as f64)).collect();
            Ok(z.iter().map(|v| cuts.partition_point(|c| c < v)).collect())
        }
    }
}

/// Empirical check of `P[Y <= q(D, X, tau) | Z] = tau` in every instrument cell.
///
/// Passes iff every deviation is at most `3 / sqrt(cell size)`.
pub fn validate_moment_condition(sim: &SimulatedDataset, tau_grid: &[f64], binning: ZBinning) -> Result<MomentConditionReport> {
    for &t in tau_grid {
        check_tau(t)?;
    }
    let data = &sim.data;
    let z_col = *data
        .roles()
        .z
        .first()
        .ok_or_else(|| Error::Domain("dataset has no instrument column".into()))?;
    let z = data.column(z_col);
    let cell_of = assign_cells(z, binning)?;
    let n_cells = match binning {
        ZBinning::Quantile(k) => k,
        ZBinning::Discrete => cell_of.iter().max().map_or(0, |m| m + 1),
    };
    let mut members = vec![Vec::new(); n_cells];
    for (i, &c) in cell_of.iter().enumerate() {
        members[c].push(i);
    }
    if let Some(c) = members.iter().position(Vec::is_empty) {
        return Err(Error::EmptyCell(format!("instrument cell {c} has no observations")));
    }

    let y = data.y();
    let mut cells = Vec::with_capacity(tau_grid.len() * n_cells);
    for &tau in tau_grid {
        for (c, rows) in members.iter().enumerate() {
            let below = rows
                .iter()
                .filter(|&&i| y[i] <= sim.structural_quantile(i, tau))
                .count();
            let count = rows.len();
            let (lo, hi) = rows
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| (lo.min(z[i]), hi.max(z[i])));
            cells.push(CellDeviation {
                tau,
                cell: c,
                z_range: (lo, hi),
                count,
                deviation: (below as f64 / count as f64 - tau).abs(),
                bound: 3.0 / (count as f64).sqrt(),
            });
        }
    }
    let max_abs_deviation = cells.iter().map(|c| c.deviation).fold(0.0, f64::max);
    let pass = cells.iter().all(|c| c.deviation <= c.bound);
    Ok(MomentConditionReport {
        cells,
        max_abs_deviation,
        pass,
    })
}
