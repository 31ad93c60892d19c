//! Exogenous linear quantile regression.
//!
//! [`fit_qr`] minimises the total check loss with a primal-dual interior
//! point method and then tries to move onto an optimal vertex. When that
//! vertex is the unique minimiser it is returned exactly; when the minimiser
//! set is a face, the interior-point limit is kept instead.

mod covariance;
mod ipm;

pub use covariance::{hall_sheather, qr_covariance, Bandwidth};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative tolerance used when deciding whether the design has full column rank.
const RANK_TOL: f64 = 1e-10;
/// Slack on the vertex optimality conditions.
const VERTEX_TOL: f64 = 1e-8;

pub(crate) fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("tau must lie in (0, 1), got {tau}")))
    }
}

/// The check function `u (tau - 1{u < 0})`.
pub fn check_loss(u: f64, tau: f64) -> Result<f64> {
    check_tau(tau)?;
    Ok(rho(u, tau))
}

#[inline]
pub(crate) fn rho(u: f64, tau: f64) -> f64 {
    if u < 0.0 {
        u * (tau - 1.0)
    } else {
        u * tau
    }
}

/// A quantile regression of `response` on the columns of `design` at level `tau`.
#[derive(Debug, Clone)]
pub struct RegressionProblem {
    design: DMatrix<f64>,
    response: DVector<f64>,
    tau: f64,
}

impl RegressionProblem {
    /// Validates shapes, finiteness and `tau`. Rank is checked by [`fit_qr`].
    pub fn new(design: DMatrix<f64>, response: DVector<f64>, tau: f64) -> Result<Self> {
        check_tau(tau)?;
        let (n, p) = design.shape();
        if response.len() != n {
            return Err(Error::Dimension(format!(
                "design has {n} rows but response has {}",
                response.len()
            )));
        }
        if p == 0 {
            return Err(Error::Dimension("design has no columns".into()));
        }
        if n < p + 1 {
            return Err(Error::Dimension(format!("need at least {} rows for {p} columns, got {n}", p + 1)));
        }
        if design.iter().chain(response.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Domain("design and response must be finite".into()));
        }
        Ok(Self {
            design,
            response,
            tau,
        })
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.design
    }

    pub fn response(&self) -> &DVector<f64> {
        &self.response
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn n(&self) -> usize {
        self.design.nrows()
    }

    pub fn p(&self) -> usize {
        self.design.ncols()
    }

    /// Total check loss at the coefficient vector `b`.
    pub fn objective_at(&self, b: &DVector<f64>) -> f64 {
        (&self.response - &self.design * b)
            .iter()
            .map(|&u| rho(u, self.tau))
            .sum()
    }
}

/// How the reported coefficients were obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolutionKind {
    /// Unique minimiser at an LP vertex; `p` residuals are exactly zero.
    Vertex,
    /// Non-unique minimiser (a face); the interior-point limit is reported.
    InteriorLimit,
}

#[derive(Debug, Clone)]
pub struct QrFit {
    pub coefficients: DVector<f64>,
    pub residuals: DVector<f64>,
    /// Sum of check losses over `residuals`.
    pub objective: f64,
    pub iterations: usize,
    pub kind: SolutionKind,
}

impl QrFit {
    pub fn negative_residuals(&self) -> usize {
        self.residuals.iter().filter(|&&r| r < 0.0).count()
    }

    pub fn nonpositive_residuals(&self) -> usize {
        self.residuals.iter().filter(|&&r| r <= 0.0).count()
    }
}

pub(crate) fn check_design_rank(design: &DMatrix<f64>) -> Result<()> {
    let p = design.ncols();
    // scale columns so the test is invariant to units
    let mut scaled = design.clone();
    for j in 0..p {
        let norm = scaled.column(j).norm();
        if norm == 0.0 {
            return Err(Error::SingularDesign(format!("column {j} is identically zero")));
        }
        scaled.column_mut(j).scale_mut(1.0 / norm);
    }
    let sv = scaled.singular_values();
    let max = sv.max();
    let min = sv.min();
    if min <= RANK_TOL * max {
        return Err(Error::SingularDesign(format!(
            "design is rank deficient (singular value ratio {:e})",
            min / max
        )));
    }
    Ok(())
}

/// Fits the `tau`-quantile regression.
///
/// Deterministic for identical inputs. Errors on a rank-deficient design or
/// when the interior point does not reach the duality-gap tolerance.
pub fn fit_qr(problem: &RegressionProblem) -> Result<QrFit> {
    check_design_rank(&problem.design)?;
    fit_full_rank(problem)
}

/// [`fit_qr`] for callers that already checked the design rank.
pub(crate) fn fit_full_rank(problem: &RegressionProblem) -> Result<QrFit> {
    let sol = ipm::solve(&problem.design, &problem.response, problem.tau)?;
    let ipm_residuals = &problem.response - &problem.design * &sol.coefficients;

    if let Some((coef, residuals)) = vertex_solution(problem, &ipm_residuals) {
        let objective = residuals.iter().map(|&u| rho(u, problem.tau)).sum();
        return Ok(QrFit {
            coefficients: coef,
            residuals,
            objective,
            iterations: sol.iterations,
            kind: SolutionKind::Vertex,
        });
    }

    // Face of minimisers: snap residuals that vanish along the whole face.
    let scale = 1.0 + problem.response.amax();
    let residuals = ipm_residuals.map(|r| if r.abs() <= 1e-7 * scale { 0.0 } else { r });
    let objective = residuals.iter().map(|&u| rho(u, problem.tau)).sum();
    Ok(QrFit {
        coefficients: sol.coefficients,
        residuals,
        objective,
        iterations: sol.iterations,
        kind: SolutionKind::InteriorLimit,
    })
}

/// Picks the `p` observations closest to the fitted hyperplane, interpolates
/// them, and accepts that basic solution only if it is the unique optimum.
fn vertex_solution(
    problem: &RegressionProblem,
    residuals: &DVector<f64>,
) -> Option<(DVector<f64>, DVector<f64>)> {
    let x = &problem.design;
    let (n, p) = x.shape();
    let tau = problem.tau;

    let closer = |a: &usize, b: &usize| residuals[*a].abs().total_cmp(&residuals[*b].abs()).then(a.cmp(b));
    let mut order: Vec<usize> = (0..n).collect();
    // the basis almost always comes from the few smallest residuals, so the
    // rest is only sorted when those turn out to be dependent
    let head = (4 * p).min(n);
    if head < n {
        order.select_nth_unstable_by(head, closer);
    }
    order[..head].sort_unstable_by(closer);

    // greedy independent rows via Gram-Schmidt
    let mut basis: Vec<usize> = Vec::with_capacity(p);
    let mut ortho: Vec<DVector<f64>> = Vec::with_capacity(p);
    for pass in 0..2 {
        let range = if pass == 0 { 0..head } else { head..n };
        if pass == 1 {
            if basis.len() == p {
                break;
            }
            order[head..].sort_unstable_by(closer);
        }
        for &i in &order[range] {
            if basis.len() == p {
                break;
            }
            let row = x.row(i).transpose();
            let norm0 = row.norm();
            if norm0 == 0.0 {
                continue;
            }
            let mut v = row;
            for u in &ortho {
                let c = u.dot(&v);
                v -= u * c;
            }
            let nv = v.norm();
            if nv > 1e-8 * norm0 {
                ortho.push(v / nv);
                basis.push(i);
            }
        }
    }
    if basis.len() < p {
        return None;
    }

    let xh = DMatrix::from_fn(p, p, |a, j| x[(basis[a], j)]);
    let yh = DVector::from_iterator(p, basis.iter().map(|&i| problem.response[i]));
    let lu = xh.clone().lu();
    let coef = lu.solve(&yh)?;
    let mut res = &problem.response - x * &coef;
    let mut in_basis = vec![false; n];
    for &i in &basis {
        res[i] = 0.0;
        in_basis[i] = true;
    }

    // xi' = sum_{i not in h} psi(r_i) x_i' X_h^{-1}; optimal iff -tau <= xi <= 1 - tau
    let mut g = DVector::zeros(p);
    for i in (0..n).filter(|&i| !in_basis[i]) {
        let psi = if res[i] < 0.0 { tau - 1.0 } else { tau };
        for j in 0..p {
            g[j] += psi * x[(i, j)];
        }
    }
    let xi = xh.transpose().lu().solve(&g)?;
    let unique = xi
        .iter()
        .all(|&v| v > -tau + VERTEX_TOL && v < 1.0 - tau - VERTEX_TOL);
    if unique {
        Some((coef, res))
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn intercept_only(y: &[f64], tau: f64) -> RegressionProblem {
        RegressionProblem::new(
            DMatrix::from_element(y.len(), 1, 1.0),
            DVector::from_column_slice(y),
            tau,
        )
        .unwrap()
    }

    #[test]
    fn check_loss_values() {
        assert_eq!(check_loss(2.0, 0.5).unwrap(), 1.0);
        assert_eq!(check_loss(-1.0, 0.25).unwrap(), 0.75);
        assert_eq!(check_loss(0.0, 0.9).unwrap(), 0.0);
    }

    #[test]
    fn check_loss_rejects_bad_tau() {
        assert!(matches!(check_loss(1.0, 0.0), Err(Error::Domain(_))));
        assert!(matches!(check_loss(1.0, 1.0), Err(Error::Domain(_))));
        assert!(matches!(check_loss(1.0, f64::NAN), Err(Error::Domain(_))));
    }

    #[test]
    fn median_of_three() {
        let fit = fit_qr(&intercept_only(&[1.0, 2.0, 3.0], 0.5)).unwrap();
        assert_eq!(fit.kind, SolutionKind::Vertex);
        assert!((fit.coefficients[0] - 2.0).abs() < 1e-12);
        assert!((fit.objective - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lower_quartile_of_five() {
        let fit = fit_qr(&intercept_only(&[3.0, 1.0, 5.0, 2.0, 4.0], 0.25)).unwrap();
        assert!((fit.coefficients[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn even_median_reports_objective_on_face() {
        let prob = intercept_only(&[1.0, 2.0, 3.0, 4.0], 0.5);
        let fit = fit_qr(&prob).unwrap();
        assert_eq!(fit.kind, SolutionKind::InteriorLimit);
        // any point in [2, 3] is optimal with objective 2
        assert!((fit.objective - 2.0).abs() < 1e-7);
        assert!(fit.coefficients[0] >= 2.0 - 1e-7 && fit.coefficients[0] <= 3.0 + 1e-7);
    }

    #[test]
    fn rank_deficient_design_is_rejected() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0, 1.0, 2.0]);
        let prob = RegressionProblem::new(x, DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]), 0.5).unwrap();
        assert!(matches!(fit_qr(&prob), Err(Error::SingularDesign(_))));
    }

    #[test]
    fn too_few_rows_is_rejected() {
        let x = DMatrix::from_element(2, 2, 1.0);
        assert!(matches!(
            RegressionProblem::new(x, DVector::zeros(2), 0.5),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn exact_fit_through_line() {
        let x = DMatrix::from_fn(6, 2, |i, j| if j == 0 { 1.0 } else { i as f64 });
        let y = DVector::from_fn(6, |i, _| 1.5 + 0.5 * i as f64);
        let fit = fit_qr(&RegressionProblem::new(x, y, 0.3).unwrap()).unwrap();
        assert!((fit.coefficients[0] - 1.5).abs() < 1e-8);
        assert!((fit.coefficients[1] - 0.5).abs() < 1e-8);
        assert!(fit.objective < 1e-8);
    }
}
