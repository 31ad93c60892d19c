use std::collections::VecDeque;

use super::{chi_square_quantile, IqrProfile};
use crate::error::{Error, Result};

/// Sub-level set `{alpha : W_n(alpha) <= c}` of a Wald profile on its grid.
///
/// Empty, disconnected and full-grid regions are all legitimate outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceRegion {
    pub level: f64,
    pub df: u32,
    pub threshold: f64,
    pub indices: Vec<usize>,
    pub points: Vec<Vec<f64>>,
    /// Share of *all* grid points (invalid ones included) inside the region.
    pub grid_fraction: f64,
    /// Number of axis-connected components.
    pub components: usize,
    /// `points.len()` times the grid cell volume (length in one dimension).
    pub volume: f64,
}

impl ConfidenceRegion {
    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn is_connected(&self) -> bool {
        self.components <= 1
    }

    pub fn contains_index(&self, index: usize) -> bool {
        self.indices.binary_search(&index).is_ok()
    }
}

/// Inverts the Wald profile at chi-square level `level` with `dim(Z)` degrees of freedom.
pub fn robust_confidence_region(profile: &IqrProfile, level: f64) -> Result<ConfidenceRegion> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Domain(format!("level must lie in (0, 1), got {level}")));
    }
    let threshold = chi_square_quantile(profile.df, level)?;
    let indices: Vec<usize> = profile
        .wald
        .iter()
        .enumerate()
        .filter(|(_, w)| w.is_some_and(|w| w <= threshold))
        .map(|(j, _)| j)
        .collect();

    let mut inside = vec![false; profile.len()];
    for &j in &indices {
        inside[j] = true;
    }
    let mut seen = vec![false; profile.len()];
    let mut components = 0;
    for &start in &indices {
        if seen[start] {
            continue;
        }
        components += 1;
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(j) = queue.pop_front() {
            for k in profile.grid.neighbors(j) {
                if inside[k] && !seen[k] {
                    seen[k] = true;
                    queue.push_back(k);
                }
            }
        }
    }

    Ok(ConfidenceRegion {
        level,
        df: profile.df,
        threshold,
        points: indices.iter().map(|&j| profile.alpha(j)).collect(),
        grid_fraction: indices.len() as f64 / profile.len() as f64,
        components,
        volume: indices.len() as f64 * profile.grid.cell_volume(),
        indices,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ivqr::AlphaGrid;

    fn profile(w: &[f64]) -> IqrProfile {
        let grid = AlphaGrid::from_axes(vec![(0..w.len()).map(|i| i as f64).collect()]).unwrap();
        IqrProfile::from_wald(grid, w.iter().map(|&v| Some(v)).collect(), 1, 0.5).unwrap()
    }

    #[test]
    fn middle_three_points_at_95() {
        let r = robust_confidence_region(&profile(&[10.0, 2.0, 1.0, 2.0, 10.0]), 0.95).unwrap();
        assert!((r.threshold - 3.841_458_820_694_124).abs() < 1e-6);
        assert_eq!(r.indices, vec![1, 2, 3]);
        assert!(r.is_connected());
        assert_eq!(r.volume, 3.0);
    }

    #[test]
    fn disconnected_and_empty_regions_are_results() {
        let r = robust_confidence_region(&profile(&[1.0, 9.0, 1.0]), 0.95).unwrap();
        assert_eq!(r.components, 2);
        let r = robust_confidence_region(&profile(&[9.0, 9.0]), 0.95).unwrap();
        assert!(r.is_empty());
        let r = robust_confidence_region(&profile(&[0.1, 0.2]), 0.95).unwrap();
        assert_eq!(r.grid_fraction, 1.0);
    }

    #[test]
    fn level_outside_unit_interval_rejected() {
        assert!(robust_confidence_region(&profile(&[1.0]), 1.0).is_err());
        assert!(robust_confidence_region(&profile(&[1.0]), 0.0).is_err());
    }
}
