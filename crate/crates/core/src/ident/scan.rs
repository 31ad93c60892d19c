use rayon::prelude::*;
use serde::Serialize;

use super::DiscreteMomentSystem;
use crate::error::{Error, Result};

/// Scan tolerance used for analytic systems, where there is no sampling noise.
const ANALYTIC_EPSILON: f64 = 1e-8;
/// Upper bound on candidate-times-constraint evaluations in the inequality scan.
const MAX_INEQUALITY_WORK: f64 = 5e8;

/// Sampling-noise scale `2 sqrt(log(r n) / n_min)` with `n_min` the smallest
/// instrument cell; a tiny fixed tolerance for analytic systems.
pub fn default_epsilon(sys: &DiscreteMomentSystem) -> f64 {
    match sys.z_counts() {
        None => ANALYTIC_EPSILON,
        Some(counts) => {
            let n: usize = counts.iter().sum();
            let n_min = counts.iter().copied().min().unwrap_or(1).max(1);
            2.0 * ((sys.r() as f64 * n as f64).ln() / n_min as f64).sqrt()
        }
    }
}

/// Product grid over candidate quantile vectors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanGrid {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub step: f64,
}

impl ScanGrid {
    /// `2 half_steps + 1` points per axis centred on `center`.
    pub fn centered(center: &[f64], half_steps: usize, step: f64) -> Self {
        let w = half_steps as f64 * step;
        Self {
            lower: center.iter().map(|c| c - w).collect(),
            upper: center.iter().map(|c| c + w).collect(),
            step,
        }
    }

    fn axes(&self) -> Result<Vec<Vec<f64>>> {
        if self.lower.len() != self.upper.len() || self.lower.is_empty() {
            return Err(Error::Dimension("scan grid bounds must be nonempty and of equal length".into()));
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::Domain(format!("scan grid step must be positive, got {}", self.step)));
        }
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(&lo, &hi)| {
                if !(hi >= lo) || !lo.is_finite() || !hi.is_finite() {
                    return Err(Error::Domain(format!("scan grid bounds [{lo}, {hi}] are invalid")));
                }
                let count = ((hi - lo) / self.step + 1e-9).floor() as usize + 1;
                Ok((0..count).map(|k| lo + k as f64 * self.step).collect())
            })
            .collect()
    }

    pub fn len(&self) -> Result<usize> {
        Ok(self.axes()?.iter().map(Vec::len).product())
    }
}

/// Grid points whose moment vector is within `epsilon` of zero in sup norm.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanRegion {
    pub epsilon: f64,
    pub grid_points: usize,
    pub points: Vec<Vec<f64>>,
}

impl ScanRegion {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Largest sup-norm distance between two points of the region.
    pub fn diameter(&self) -> f64 {
        let Some(first) = self.points.first() else {
            return 0.0;
        };
        (0..first.len())
            .map(|k| {
                let (lo, hi) = self
                    .points
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p[k]), hi.max(p[k])));
                hi - lo
            })
            .fold(0.0, f64::max)
    }
}

/// Empirical identification region `{y : ||Pi(y)||_inf <= epsilon}` on a grid.
///
/// `epsilon` defaults to [`default_epsilon`]. An empty region is a valid
/// result and flags misspecification.
pub fn identification_region_scan(
    sys: &DiscreteMomentSystem,
    grid: &ScanGrid,
    epsilon: Option<f64>,
) -> Result<ScanRegion> {
    let axes = grid.axes()?;
    if axes.len() != sys.l() {
        return Err(Error::Dimension(format!("scan grid has {} axes, expected {}", axes.len(), sys.l())));
    }
    let epsilon = epsilon.unwrap_or_else(|| default_epsilon(sys));
    if !(epsilon >= 0.0) {
        return Err(Error::Domain(format!("scan tolerance must be nonnegative, got {epsilon}")));
    }
    let total: usize = axes.iter().map(Vec::len).product();
    let point = |mut idx: usize| {
        let mut p = vec![0.0; axes.len()];
        for k in (0..axes.len()).rev() {
            p[k] = axes[k][idx % axes[k].len()];
            idx /= axes[k].len();
        }
        p
    };
    let points: Vec<Vec<f64>> = (0..total)
        .into_par_iter()
        .filter_map(|i| {
            let y = point(i);
            let pi = sys.moment_vector(&y).ok()?;
            (pi.amax() <= epsilon).then_some(y)
        })
        .collect();
    Ok(ScanRegion {
        epsilon,
        grid_points: total,
        points,
    })
}

/// Non-decreasing step function `u -> values[k]` for `thresholds[k-1] < u <= thresholds[k]`
/// (with implicit end thresholds 0 and 1).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepFunction {
    pub values: Vec<f64>,
    pub thresholds: Vec<f64>,
}

impl StepFunction {
    fn edge(&self, k: usize) -> f64 {
        if k == 0 {
            0.0
        } else if k > self.thresholds.len() {
            1.0
        } else {
            self.thresholds[k - 1]
        }
    }

    /// Value at rank `u` in `(0, 1)`.
    pub fn eval(&self, u: f64) -> f64 {
        let k = self.thresholds.partition_point(|&t| t < u);
        self.values[k]
    }

    /// Indices of values attained on `[a, b] ∩ (0, 1)`.
    fn image(&self, a: f64, b: f64, out: &mut [bool]) {
        let last = self.values.len() - 1;
        for (k, hit) in out.iter_mut().enumerate() {
            let (lo, hi) = (self.edge(k), self.edge(k + 1));
            let nonempty = hi > lo;
            let meets = if k == last { b > lo && a < 1.0 } else { a <= hi && b > lo };
            *hit |= nonempty && meets;
        }
    }
}

/// Family of closed index sets `I` (each a union of disjoint closed intervals).
#[derive(Debug, Clone, PartialEq)]
pub enum IndexFamily {
    /// Intervals on the threshold grid plus unions of two separated such intervals.
    Default,
    Intervals,
    Custom(Vec<Vec<(f64, f64)>>),
}

fn lebesgue(set: &[(f64, f64)]) -> f64 {
    let mut v: Vec<(f64, f64)> = set.iter().map(|&(a, b)| (a.max(0.0), b.min(1.0))).filter(|(a, b)| b > a).collect();
    v.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut total = 0.0;
    let mut cur: Option<(f64, f64)> = None;
    for (a, b) in v {
        match cur {
            Some((ca, cb)) if a <= cb => cur = Some((ca, cb.max(b))),
            Some((ca, cb)) => {
                total += cb - ca;
                cur = Some((a, b));
            }
            None => cur = Some((a, b)),
        }
    }
    total + cur.map_or(0.0, |(a, b)| b - a)
}

impl IndexFamily {
    fn sets(&self, grid: &[f64]) -> Vec<Vec<(f64, f64)>> {
        let intervals: Vec<(f64, f64)> = (0..grid.len())
            .flat_map(|i| (i + 1..grid.len()).map(move |j| (grid[i], grid[j])))
            .collect();
        match self {
            IndexFamily::Custom(sets) => sets.clone(),
            IndexFamily::Intervals => intervals.into_iter().map(|i| vec![i]).collect(),
            IndexFamily::Default => {
                let mut sets: Vec<Vec<(f64, f64)>> = intervals.iter().map(|&i| vec![i]).collect();
                for &(a1, b1) in &intervals {
                    for &(a2, b2) in &intervals {
                        if b1 < a2 {
                            sets.push(vec![(a1, b1), (a2, b2)]);
                        }
                    }
                }
                sets
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InequalityScanReport {
    pub tau_step: f64,
    pub family_size: usize,
    pub slack: f64,
    pub candidates_total: usize,
    /// Surviving candidates, one step function per treatment value.
    pub survivors: Vec<Vec<StepFunction>>,
}

impl InequalityScanReport {
    pub fn contains(&self, candidate: &[StepFunction]) -> bool {
        self.survivors.iter().any(|s| {
            s.iter().zip(candidate).all(|(a, b)| {
                a.values == b.values
                    && a.thresholds.len() == b.thresholds.len()
                    && a.thresholds.iter().zip(&b.thresholds).all(|(x, y)| (x - y).abs() < 1e-9)
            })
        })
    }
}

/// Non-decreasing threshold vectors of length `k` drawn from `grid`.
fn threshold_vectors(grid: &[f64], k: usize) -> Vec<Vec<f64>> {
    fn rec(grid: &[f64], k: usize, start: usize, cur: &mut Vec<f64>, out: &mut Vec<Vec<f64>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..grid.len() {
            cur.push(grid[i]);
            rec(grid, k, i, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(grid, k, 0, &mut Vec::new(), &mut out);
    out
}

/// Inequality-based identification region for a discrete outcome.
///
/// Candidates are non-decreasing step functions `m(d, .)` onto the outcome
/// support with jumps on the grid `0, tau_step, ..., 1`. A candidate is kept
/// when `Leb(I) <= P[Y in m(D, I) | Z = z] + slack` for every index set `I`
/// of the family and every instrument value `z`.
pub fn inequality_region_scan(
    sys: &DiscreteMomentSystem,
    tau_step: f64,
    family: &IndexFamily,
    slack: Option<f64>,
) -> Result<InequalityScanReport> {
    let support = sys
        .y_support()
        .ok_or_else(|| Error::Domain("inequality scan needs a discrete outcome".into()))?
        .to_vec();
    if !(tau_step > 0.0 && tau_step <= 0.5) {
        return Err(Error::Domain(format!("threshold grid step must lie in (0, 0.5], got {tau_step}")));
    }
    let g = (1.0 / tau_step).round() as usize;
    let grid: Vec<f64> = (0..=g).map(|k| (k as f64 * tau_step).min(1.0)).collect();
    let sets = family.sets(&grid);
    let slack = slack.unwrap_or_else(|| default_epsilon(sys));
    let (l, r, kv) = (sys.l(), sys.r(), support.len());

    let per_arm = threshold_vectors(&grid, kv - 1);
    let candidates = (per_arm.len() as f64).powi(l as i32);
    if candidates * sets.len() as f64 * r as f64 > MAX_INEQUALITY_WORK {
        return Err(Error::Domain(format!(
            "{candidates} candidates against {} index sets is too large; use a coarser threshold grid",
            sets.len()
        )));
    }

    // pmf[z][d][k] = P[D = d | z] P[Y = v_k | d, z]
    let pmf: Vec<Vec<Vec<f64>>> = (0..r)
        .map(|z| {
            (0..l)
                .map(|d| match sys.cell(z, d) {
                    Some(c) => support
                        .iter()
                        .map(|&v| sys.cell_probs()[(z, d)] * (c.cdf(v) - c.cdf_below(v)))
                        .collect(),
                    None => vec![0.0; kv],
                })
                .collect()
        })
        .collect();
    let lebs: Vec<f64> = sets.iter().map(|s| lebesgue(s)).collect();

    let total = per_arm.len().pow(l as u32);
    let survivors: Vec<Vec<StepFunction>> = (0..total)
        .into_par_iter()
        .filter_map(|mut idx| {
            let mut cand = Vec::with_capacity(l);
            for _ in 0..l {
                cand.push(StepFunction {
                    values: support.clone(),
                    thresholds: per_arm[idx % per_arm.len()].clone(),
                });
                idx /= per_arm.len();
            }
            let mut hit = vec![vec![false; kv]; l];
            for (set, &leb) in sets.iter().zip(&lebs) {
                for (d, f) in cand.iter().enumerate() {
                    hit[d].iter_mut().for_each(|h| *h = false);
                    for &(a, b) in set {
                        f.image(a, b, &mut hit[d]);
                    }
                }
                for row in &pmf {
                    let mass: f64 = (0..l)
                        .map(|d| (0..kv).filter(|&k| hit[d][k]).map(|k| row[d][k]).sum::<f64>())
                        .sum();
                    if leb > mass + slack {
                        return None;
                    }
                }
            }
            Some(cand)
        })
        .collect();

    Ok(InequalityScanReport {
        tau_step,
        family_size: sets.len(),
        slack,
        candidates_total: total,
        survivors,
    })
}
