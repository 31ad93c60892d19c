//! Frisch–Newton primal-dual interior point for the check-loss LP.
//!
//! The LP solved is the bounded-variable dual of quantile regression:
//!
//! ```text
//!   max  y'a   s.t.  X'a = (1 - tau) X'1,   0 <= a <= 1
//! ```
//!
//! whose equality multipliers are the negated regression coefficients.
//! Primal and dual feasibility are maintained exactly from the start, so the
//! Newton steps only drive complementarity, with a Mehrotra corrector.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub(crate) const GAP_TOL: f64 = 1e-9;
pub(crate) const MAX_ITER: usize = 200;

const STEP_DAMPING: f64 = 0.99995;
const SMALL: f64 = 1e-6;

#[derive(Debug, Clone)]
pub(crate) struct IpmSolution {
    pub coefficients: DVector<f64>,
    pub iterations: usize,
}

/// Column-major `n x p` design with helpers for the two products the solver needs.
struct Design<'a> {
    data: &'a [f64],
    n: usize,
    p: usize,
}

impl Design<'_> {
    fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.n..(j + 1) * self.n]
    }

    /// `X' v`
    fn t_mul(&self, v: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.p,
            (0..self.p).map(|j| self.col(j).iter().zip(v).map(|(a, b)| a * b).sum()),
        )
    }

    /// `X w`
    fn mul(&self, w: &DVector<f64>, out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for j in 0..self.p {
            let wj = w[j];
            for (o, x) in out.iter_mut().zip(self.col(j)) {
                *o += wj * x;
            }
        }
    }

    /// `X' diag(q) X`
    fn weighted_gram(&self, q: &[f64]) -> DMatrix<f64> {
        let mut g = DMatrix::zeros(self.p, self.p);
        for j in 0..self.p {
            let cj = self.col(j);
            for k in 0..=j {
                let ck = self.col(k);
                let s: f64 = (0..self.n).map(|i| q[i] * cj[i] * ck[i]).sum();
                g[(j, k)] = s;
                g[(k, j)] = s;
            }
        }
        g
    }
}

fn solve_spd(m: DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    if let Some(ch) = m.clone().cholesky() {
        return Some(ch.solve(rhs));
    }
    m.lu().solve(rhs)
}

/// Newton system solve. Near the optimum most weights `q` collapse towards
/// zero and the weighted Gram matrix can lose rank numerically; a ridge
/// relative to its diagonal restores a usable direction.
fn solve_newton(m: DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    if let Some(v) = solve_spd(m.clone(), rhs).filter(|v| v.iter().all(|e| e.is_finite())) {
        return Some(v);
    }
    let scale = m.diagonal().amax();
    if !(scale.is_finite() && scale > 0.0) {
        return None;
    }
    let mut ridged = m;
    for j in 0..ridged.nrows() {
        ridged[(j, j)] += 1e-10 * scale;
    }
    ridged.cholesky().map(|ch| ch.solve(rhs))
}

/// Largest step in `[0, inf)` keeping `v + t dv >= 0`.
fn max_step(v: &[f64], dv: &[f64]) -> f64 {
    v.iter()
        .zip(dv)
        .filter(|(_, d)| **d < 0.0)
        .map(|(x, d)| -x / d)
        .fold(1e20, f64::min)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn solve(design: &DMatrix<f64>, response: &DVector<f64>, tau: f64) -> Result<IpmSolution> {
    let (n, p) = design.shape();
    let a = Design {
        data: design.as_slice(),
        n,
        p,
    };
    let c: Vec<f64> = response.iter().map(|v| -v).collect();

    // primal (x, s) with x + s = 1
    let mut x = vec![1.0 - tau; n];
    let mut s = vec![tau; n];
    let b = a.t_mul(&x);

    // dual start from least squares so that c - A'y = z - w holds exactly
    let gram = a.weighted_gram(&vec![1.0; n]);
    let mut y = solve_spd(gram, &a.t_mul(&c))
        .ok_or_else(|| Error::SingularDesign("X'X is not invertible".into()))?;
    let mut xy = vec![0.0; n];
    a.mul(&y, &mut xy);
    let mut z = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let r = c[i] - xy[i];
        if r.abs() < SMALL {
            z[i] = r.max(0.0) + SMALL;
            w[i] = (-r).max(0.0) + SMALL;
        } else {
            z[i] = r.max(0.0);
            w[i] = (-r).max(0.0);
        }
    }

    let gap_of = |x: &[f64], y: &DVector<f64>, w: &[f64]| dot(&c, x) - b.dot(y) + w.iter().sum::<f64>();
    let mut gap = gap_of(&x, &y, &w);

    let mut q = vec![0.0; n];
    let mut r = vec![0.0; n];
    let mut qr = vec![0.0; n];
    let mut dx = vec![0.0; n];
    let mut ds = vec![0.0; n];
    let mut dz = vec![0.0; n];
    let mut dw = vec![0.0; n];
    let mut ady = vec![0.0; n];
    let mut ix = vec![0.0; n];
    let mut is = vec![0.0; n];
    let mut corr = vec![0.0; n];
    let mut cross_x = vec![0.0; n];
    let mut cross_s = vec![0.0; n];

    let mut it = 0;
    while gap > GAP_TOL * (1.0 + dot(&c, &x).abs()) {
        if it >= MAX_ITER {
            return Err(Error::Convergence {
                iterations: it,
                gap,
            });
        }
        it += 1;

        // slices of known length n let the loops below run without bounds checks
        {
            let (x, s, z, w) = (&x[..n], &s[..n], &z[..n], &w[..n]);
            let (ix, is, q, r, qr) = (&mut ix[..n], &mut is[..n], &mut q[..n], &mut r[..n], &mut qr[..n]);
            for i in 0..n {
                ix[i] = 1.0 / x[i];
                is[i] = 1.0 / s[i];
                q[i] = 1.0 / (z[i] * ix[i] + w[i] * is[i]);
                r[i] = z[i] - w[i];
                qr[i] = q[i] * r[i];
            }
        }
        let aqa = a.weighted_gram(&q);
        let rhs = a.t_mul(&qr);

        // affine predictor
        let Some(dy) = solve_newton(aqa.clone(), &rhs) else {
            // no usable direction left: hand the current iterate to crossover
            if it > 1 {
                break;
            }
            return Err(Error::SingularDesign("normal equations became singular".into()));
        };
        a.mul(&dy, &mut ady);
        {
            let (z, w, ix, is, q, r, ady) = (&z[..n], &w[..n], &ix[..n], &is[..n], &q[..n], &r[..n], &ady[..n]);
            let (dx, ds, dz, dw) = (&mut dx[..n], &mut ds[..n], &mut dz[..n], &mut dw[..n]);
            for i in 0..n {
                dx[i] = q[i] * (ady[i] - r[i]);
                ds[i] = -dx[i];
                dz[i] = -z[i] * (dx[i] * ix[i] + 1.0);
                dw[i] = -w[i] * (ds[i] * is[i] + 1.0);
            }
        }
        let mut fp = (STEP_DAMPING * max_step(&x, &dx).min(max_step(&s, &ds))).min(1.0);
        let mut fd = (STEP_DAMPING * max_step(&w, &dw).min(max_step(&z, &dz))).min(1.0);
        let mut dy = dy;

        if fp.min(fd) < 1.0 {
            // Mehrotra corrector with centring parameter from the predicted gap
            let mu0 = dot(&z, &x) + dot(&w, &s);
            let g: f64 = {
                let (x, s, z, w) = (&x[..n], &s[..n], &z[..n], &w[..n]);
                let (dx, ds, dz, dw) = (&dx[..n], &ds[..n], &dz[..n], &dw[..n]);
                (0..n)
                    .map(|i| (z[i] + fd * dz[i]) * (x[i] + fp * dx[i]) + (w[i] + fd * dw[i]) * (s[i] + fp * ds[i]))
                    .sum()
            };
            let mu = mu0 * (g / mu0).powi(3) / (2.0 * n as f64);

            {
                let (ix, is, q, r) = (&ix[..n], &is[..n], &q[..n], &r[..n]);
                let (dx, ds, dz, dw) = (&dx[..n], &ds[..n], &dz[..n], &dw[..n]);
                let (corr, cross_x, cross_s) = (&mut corr[..n], &mut cross_x[..n], &mut cross_s[..n]);
                for i in 0..n {
                    cross_x[i] = dx[i] * dz[i];
                    cross_s[i] = ds[i] * dw[i];
                    let xi = mu * (ix[i] - is[i]);
                    corr[i] = q[i] * (r[i] - xi + cross_x[i] * ix[i] - cross_s[i] * is[i]);
                }
            }
            let rhs = a.t_mul(&corr);
            let Some(corrected) = solve_newton(aqa, &rhs) else {
                if it > 1 {
                    break;
                }
                return Err(Error::SingularDesign("normal equations became singular".into()));
            };
            dy = corrected;
            a.mul(&dy, &mut ady);
            {
                let (z, w, ix, is, q, r, ady) = (&z[..n], &w[..n], &ix[..n], &is[..n], &q[..n], &r[..n], &ady[..n]);
                let (cross_x, cross_s) = (&cross_x[..n], &cross_s[..n]);
                let (dx, ds, dz, dw) = (&mut dx[..n], &mut ds[..n], &mut dz[..n], &mut dw[..n]);
                for i in 0..n {
                    let xi = mu * (ix[i] - is[i]);
                    dx[i] = q[i] * (ady[i] + xi - r[i] - cross_x[i] * ix[i] + cross_s[i] * is[i]);
                    ds[i] = -dx[i];
                    dz[i] = (mu - z[i] * dx[i] - cross_x[i]) * ix[i] - z[i];
                    dw[i] = (mu - w[i] * ds[i] - cross_s[i]) * is[i] - w[i];
                }
            }
            fp = (STEP_DAMPING * max_step(&x, &dx).min(max_step(&s, &ds))).min(1.0);
            fd = (STEP_DAMPING * max_step(&w, &dw).min(max_step(&z, &dz))).min(1.0);
        }

        {
            let (dx, ds, dz, dw) = (&dx[..n], &ds[..n], &dz[..n], &dw[..n]);
            let (x, s, z, w) = (&mut x[..n], &mut s[..n], &mut z[..n], &mut w[..n]);
            for i in 0..n {
                x[i] += fp * dx[i];
                s[i] += fp * ds[i];
                z[i] += fd * dz[i];
                w[i] += fd * dw[i];
            }
        }
        y += fd * dy;
        gap = gap_of(&x, &y, &w);
    }

    Ok(IpmSolution {
        coefficients: -y,
        iterations: it,
    })
}
