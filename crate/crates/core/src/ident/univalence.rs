use nalgebra::DMatrix;
use serde::Serialize;

use super::{projected_determinant, DiscreteMomentSystem, ParameterPolytope};
use crate::error::{Error, Result};

/// Determinants must exceed this to count as strictly positive.
const DET_TOL: f64 = 1e-10;
/// Largest instrument support for which all `l`-permutations are searched.
pub const MAX_SEARCH_INSTRUMENTS: usize = 6;

/// Which instrument rows form the square system `Pi_m`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PermutationChoice {
    /// Try every ordered choice of `l` distinct rows, lexicographically, stopping at the first pass.
    Search,
    /// Use these 0-based instrument indices.
    Fixed(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FaceSummary {
    pub dim: usize,
    /// Basis vectors of the face subspace (one inner vector per basis column).
    pub basis: Vec<Vec<f64>>,
    pub points: usize,
    pub min_determinant: f64,
    pub argmin: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnivalenceReport {
    pub pass: bool,
    /// Passing permutation, or the one with the largest worst-case determinant when none passes.
    pub permutation: Vec<usize>,
    pub permutations_tried: usize,
    pub tolerance: f64,
    /// Per-face minima for `permutation`.
    pub faces: Vec<FaceSummary>,
}

fn permutations(r: usize, l: usize) -> Vec<Vec<usize>> {
    fn extend(r: usize, l: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == l {
            out.push(cur.clone());
            return;
        }
        for i in 0..r {
            if !cur.contains(&i) {
                cur.push(i);
                extend(r, l, cur, out);
                cur.pop();
            }
        }
    }
    let mut out = Vec::new();
    extend(r, l, &mut Vec::with_capacity(l), &mut out);
    out
}

/// Face-projected determinant condition for global univalence of `y -> Pi_m(y)`.
///
/// For every face `F` of the region (the region itself included) with
/// spanning subspace `L`, evaluates `det(B' dPi_m(y) B)` for an orthonormal
/// basis `B` of `L` at grid points of `F`. The check passes iff for some
/// permutation `m` all of these determinants are strictly positive.
pub fn global_univalence_check(
    sys: &DiscreteMomentSystem,
    region: &ParameterPolytope,
    grid_step: f64,
    choice: PermutationChoice,
) -> Result<UnivalenceReport> {
    let (l, r) = (sys.l(), sys.r());
    if region.dim() != l {
        return Err(Error::Dimension(format!("region has dimension {} but l = {l}", region.dim())));
    }
    if l > 2 && !matches!(region, ParameterPolytope::Box { .. }) {
        return Err(Error::UnsupportedShape("regions beyond two dimensions must be axis-aligned boxes".into()));
    }
    let candidates = match choice {
        PermutationChoice::Search => {
            if r > MAX_SEARCH_INSTRUMENTS {
                return Err(Error::Domain(format!(
                    "permutation search is limited to r <= {MAX_SEARCH_INSTRUMENTS} instrument values (got {r}); fix a permutation instead"
                )));
            }
            permutations(r, l)
        }
        PermutationChoice::Fixed(m) => {
            let distinct = m.iter().enumerate().all(|(i, a)| !m[..i].contains(a));
            if m.len() != l || !distinct || m.iter().any(|&i| i >= r) {
                return Err(Error::Domain(format!(
                    "permutation must list {l} distinct instrument indices below {r}, got {m:?}"
                )));
            }
            vec![m]
        }
    };

    let faces = region.faces(grid_step)?;
    // Jacobians are shared across permutations
    let jacs: Vec<Vec<DMatrix<f64>>> = faces
        .iter()
        .map(|f| sys.jacobians(&f.points))
        .collect::<Result<_>>()?;

    let mut best: Option<(f64, Vec<usize>, Vec<FaceSummary>)> = None;
    let mut tried = 0;
    for m in candidates {
        tried += 1;
        let summaries: Vec<FaceSummary> = faces
            .iter()
            .zip(&jacs)
            .map(|(face, js)| {
                let mut min = f64::INFINITY;
                let mut argmin = Vec::new();
                for (p, j) in face.points.iter().zip(js) {
                    let jm = j.select_rows(m.iter());
                    let det = projected_determinant(&jm, &face.basis);
                    if det < min || argmin.is_empty() {
                        min = det;
                        argmin = p.clone();
                    }
                }
                FaceSummary {
                    dim: face.dim,
                    basis: face.basis.column_iter().map(|c| c.iter().copied().collect()).collect(),
                    points: face.points.len(),
                    min_determinant: min,
                    argmin,
                }
            })
            .collect();
        let worst = summaries.iter().map(|s| s.min_determinant).fold(f64::INFINITY, f64::min);
        let passed = worst > DET_TOL;
        if best.as_ref().is_none_or(|(w, _, _)| worst > *w) {
            best = Some((worst, m, summaries));
        }
        if passed {
            break;
        }
    }
    let (worst, permutation, faces) = best.expect("at least one permutation");
    Ok(UnivalenceReport {
        pass: worst > DET_TOL,
        permutation,
        permutations_tried: tried,
        tolerance: DET_TOL,
        faces,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn permutation_count() {
        assert_eq!(permutations(3, 2).len(), 6);
        assert_eq!(permutations(6, 3).len(), 120);
        assert_eq!(permutations(3, 2)[0], vec![0, 1]);
    }
}
