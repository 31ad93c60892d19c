use crate::error::{Error, Result};

/// Largest supported number of endogenous coefficients searched jointly.
pub const MAX_ENDOGENOUS: usize = 2;

/// Product grid of candidate endogenous coefficients.
///
/// Points are enumerated in lexicographic order with the first axis varying
/// slowest, so index order and lexicographic order coincide.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaGrid {
    axes: Vec<Vec<f64>>,
}

impl AlphaGrid {
    pub fn from_axes(axes: Vec<Vec<f64>>) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::Domain("grid needs at least one axis".into()));
        }
        if axes.len() > MAX_ENDOGENOUS {
            return Err(Error::Domain(format!(
                "grid search supports at most {MAX_ENDOGENOUS} endogenous coefficients, got {}",
                axes.len()
            )));
        }
        for (k, axis) in axes.iter().enumerate() {
            if axis.is_empty() {
                return Err(Error::Domain(format!("grid axis {k} is empty")));
            }
            if axis.iter().any(|v| !v.is_finite()) || axis.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::Domain(format!(
                    "grid axis {k} must be finite and strictly increasing"
                )));
            }
        }
        Ok(Self { axes })
    }

    /// Evenly spaced axes `min, min + step, ..., max` (endpoints included up to rounding).
    pub fn uniform(min: &[f64], max: &[f64], step: &[f64]) -> Result<Self> {
        if min.len() != max.len() || min.len() != step.len() {
            return Err(Error::Dimension("grid min/max/step lengths differ".into()));
        }
        let axes = min
            .iter()
            .zip(max)
            .zip(step)
            .map(|((&lo, &hi), &h)| {
                if !(h > 0.0) || !h.is_finite() {
                    return Err(Error::Domain(format!("grid step must be positive, got {h}")));
                }
                if !(hi >= lo) {
                    return Err(Error::Domain(format!("grid max {hi} below min {lo}")));
                }
                let count = ((hi - lo) / h + 1e-9).floor() as usize + 1;
                Ok((0..count).map(|k| lo + k as f64 * h).collect())
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_axes(axes)
    }

    pub fn dims(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Vec<f64>] {
        &self.axes
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(Vec::len).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Per-axis position of a flat index.
    pub fn unravel(&self, mut index: usize) -> Vec<usize> {
        let mut pos = vec![0; self.dims()];
        for k in (0..self.dims()).rev() {
            let m = self.axes[k].len();
            pos[k] = index % m;
            index /= m;
        }
        pos
    }

    fn ravel(&self, pos: &[usize]) -> usize {
        pos.iter()
            .zip(&self.axes)
            .fold(0, |acc, (&p, axis)| acc * axis.len() + p)
    }

    pub fn point(&self, index: usize) -> Vec<f64> {
        self.unravel(index)
            .iter()
            .zip(&self.axes)
            .map(|(&p, axis)| axis[p])
            .collect()
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }

    /// Largest spacing between adjacent values on any axis (0 for singleton axes).
    pub fn resolution(&self) -> f64 {
        self.axes
            .iter()
            .flat_map(|a| a.windows(2).map(|w| w[1] - w[0]))
            .fold(0.0, f64::max)
    }

    /// Volume element per point: product of the mean spacing on each non-degenerate axis.
    pub fn cell_volume(&self) -> f64 {
        self.axes
            .iter()
            .filter(|a| a.len() > 1)
            .map(|a| (a[a.len() - 1] - a[0]) / (a.len() - 1) as f64)
            .product()
    }

    pub fn is_edge(&self, index: usize) -> bool {
        self.unravel(index)
            .iter()
            .zip(&self.axes)
            .any(|(&p, axis)| axis.len() > 1 && (p == 0 || p + 1 == axis.len()))
    }

    /// Axis-aligned neighbours (up to two per axis).
    pub fn neighbors(&self, index: usize) -> Vec<usize> {
        let pos = self.unravel(index);
        let mut out = Vec::with_capacity(2 * self.dims());
        for k in 0..self.dims() {
            if pos[k] > 0 {
                let mut q = pos.clone();
                q[k] -= 1;
                out.push(self.ravel(&q));
            }
            if pos[k] + 1 < self.axes[k].len() {
                let mut q = pos.clone();
                q[k] += 1;
                out.push(self.ravel(&q));
            }
        }
        out
    }
}
