use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Open01, StandardNormal};
use rayon::prelude::*;

use super::{check_grid, default_tau_grid, nondecreasing_on_grid, observation_rng, GroundTruth, Latent, SimulatedDataset};
use crate::data::QuantileDataset;
use crate::error::{Error, Result};

/// Tolerance on log price for the equilibrium root search.
const ROOT_TOL: f64 = 1e-10;

pub type QuantileCurve = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InstrumentDist {
    Uniform { lo: f64, hi: f64 },
    Normal { mean: f64, sd: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SupplyNoise {
    None,
    Uniform { half_width: f64 },
    Normal { sd: f64 },
}

/// Log-linear supply `ln Q = s0 + s1 ln p + s2 z + e`, strictly increasing in `p` when `s1 > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupplyCurve {
    pub s0: f64,
    pub s1: f64,
    pub s2: f64,
}

/// Cobb-Douglas demand with non-separable error, `Y_p = exp(beta(U) + alpha(U) ln p)`,
/// cleared against a shifted supply curve.
///
/// The market price solves `supply(p, Z, e) = demand(p, U)`; with demand
/// decreasing and supply increasing in `p` the solution is unique and is
/// found by bisection on log price inside `log_price_range`.
#[derive(Clone)]
pub struct DemandDgp {
    pub alpha: QuantileCurve,
    pub beta: QuantileCurve,
    pub supply: SupplyCurve,
    pub instrument: InstrumentDist,
    pub noise: SupplyNoise,
    /// Log prices over which demand must be monotone in the rank; equilibria outside it are errors.
    pub log_price_range: (f64, f64),
}

impl fmt::Debug for DemandDgp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DemandDgp")
            .field("supply", &self.supply)
            .field("instrument", &self.instrument)
            .field("noise", &self.noise)
            .field("log_price_range", &self.log_price_range)
            .finish_non_exhaustive()
    }
}

impl DemandDgp {
    /// Elasticity `alpha(t) = -2 + 1.5 t` running from -2 to -0.5, intercept
    /// `beta(t) = 5 + 2 (t - 0.5)`, supply `ln Q = ln p + 3 z + e` with
    /// `Z ~ U(-1, 1)` and `e ~ U(-0.5, 0.5)`.
    pub fn calibrated() -> Self {
        Self::linear(-2.0, 1.5, 5.0, 2.0)
    }

    /// `alpha(t) = a0 + a1 t`, `beta(t) = b0 + b1 (t - 0.5)` with the calibrated supply side.
    pub fn linear(a0: f64, a1: f64, b0: f64, b1: f64) -> Self {
        Self {
            alpha: Arc::new(move |t| a0 + a1 * t),
            beta: Arc::new(move |t| b0 + b1 * (t - 0.5)),
            supply: SupplyCurve {
                s0: 0.0,
                s1: 1.0,
                s2: 3.0,
            },
            instrument: InstrumentDist::Uniform { lo: -1.0, hi: 1.0 },
            noise: SupplyNoise::Uniform { half_width: 0.5 },
            log_price_range: (-1.0, 8.0),
        }
    }

    pub fn log_demand(&self, log_price: f64, tau: f64) -> f64 {
        (self.beta)(tau) + (self.alpha)(tau) * log_price
    }

    /// Checks downward-sloping demand, upward-sloping supply and monotonicity
    /// of the demand quantile in the rank over the configured price range.
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.log_price_range;
        if !(lo.is_finite() && hi.is_finite() && hi > lo) {
            return Err(Error::InvalidDgp("log price range must be finite and increasing".into()));
        }
        if !(self.supply.s1 > 0.0) {
            return Err(Error::InvalidDgp("supply must be strictly increasing in price (s1 > 0)".into()));
        }
        let taus = check_grid();
        if let Some(t) = taus.iter().find(|&&t| !((self.alpha)(t) < 0.0)) {
            return Err(Error::InvalidDgp(format!("demand elasticity must be negative, alpha({t}) >= 0")));
        }
        for k in 0..=100 {
            let lp = lo + (hi - lo) * k as f64 / 100.0;
            if !nondecreasing_on_grid(&taus, |t| self.log_demand(lp, t)) {
                return Err(Error::InvalidDgp(format!(
                    "demand quantile decreases in the rank at log price {lp}"
                )));
            }
        }
        Ok(())
    }

    /// Log price clearing the market for rank `u`, instrument `z` and supply shock `e`.
    pub fn equilibrium_log_price(&self, u: f64, z: f64, e: f64) -> Option<f64> {
        let s = self.supply;
        // excess supply, strictly increasing in log price
        let g = |lp: f64| s.s0 + s.s1 * lp + s.s2 * z + e - self.log_demand(lp, u);
        let (mut lo, mut hi) = self.log_price_range;
        if !(g(lo) <= 0.0 && g(hi) >= 0.0) {
            return None;
        }
        while hi - lo > ROOT_TOL {
            let mid = 0.5 * (lo + hi);
            if g(mid) <= 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Some(0.5 * (lo + hi))
    }

    /// Columns `y`, `p`, `log_y`, `log_p`, `z`; roles are set for the log-scale
    /// regression of `log_y` on `log_p` instrumented by `z`.
    pub fn simulate(&self, n: usize, seed: u64) -> Result<SimulatedDataset> {
        self.validate()?;
        let draws: Vec<Option<[f64; 4]>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut rng = observation_rng(seed, i);
                let u: f64 = rng.sample(Open01);
                let z = match self.instrument {
                    InstrumentDist::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
                    InstrumentDist::Normal { mean, sd } => mean + sd * rng.sample::<f64, _>(StandardNormal),
                };
                let e = match self.noise {
                    SupplyNoise::None => 0.0,
                    SupplyNoise::Uniform { half_width } => half_width * (2.0 * rng.random::<f64>() - 1.0),
                    SupplyNoise::Normal { sd } => sd * rng.sample::<f64, _>(StandardNormal),
                };
                let lp = self.equilibrium_log_price(u, z, e)?;
                Some([self.log_demand(lp, u), lp, z, u])
            })
            .collect();
        let mut rows = Vec::with_capacity(n);
        for (observation, d) in draws.into_iter().enumerate() {
            rows.push(d.ok_or(Error::Equilibrium { observation })?);
        }

        let col = |k: usize| rows.iter().map(|r| r[k]).collect::<Vec<f64>>();
        let log_y = col(0);
        let log_p = col(1);
        let columns = vec![
            ("y".to_string(), log_y.iter().map(|v| v.exp()).collect()),
            ("p".to_string(), log_p.iter().map(|v| v.exp()).collect()),
            ("log_y".to_string(), log_y),
            ("log_p".to_string(), log_p),
            ("z".to_string(), col(2)),
        ];
        let data = QuantileDataset::from_named(columns, "log_y", &["log_p"], &[], &["z"])?;

        let taus = default_tau_grid();
        let curves = BTreeMap::from([
            ("alpha".to_string(), taus.iter().map(|&t| (self.alpha)(t)).collect()),
            ("beta".to_string(), taus.iter().map(|&t| (self.beta)(t)).collect()),
        ]);
        let params = BTreeMap::from([
            ("s0".to_string(), self.supply.s0),
            ("s1".to_string(), self.supply.s1),
            ("s2".to_string(), self.supply.s2),
        ]);
        let truth = GroundTruth {
            model: "demand".into(),
            tau_grid: taus,
            curves,
            params,
        };
        let me = self.clone();
        let lp_col = data.roles().d[0];
        let quantile = Arc::new(move |ds: &QuantileDataset, row: usize, tau: f64| me.log_demand(ds.column(lp_col)[row], tau));
        let latent = Latent {
            u: col(3),
            ..Latent::default()
        };
        Ok(SimulatedDataset::new(data, truth, seed, latent, quantile))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn root_search_matches_closed_form() {
        let g = DemandDgp::calibrated();
        for &(u, z, e) in &[(0.1, -0.9, 0.3), (0.5, 0.0, 0.0), (0.95, 0.8, -0.4)] {
            let a = (g.alpha)(u);
            let b = (g.beta)(u);
            let s = g.supply;
            let exact = (b - s.s0 - s.s2 * z - e) / (s.s1 - a);
            let lp = g.equilibrium_log_price(u, z, e).unwrap();
            assert!((lp - exact).abs() < 1e-9, "{lp} vs {exact}");
        }
    }

    #[test]
    fn no_bracket_is_an_equilibrium_error() {
        let mut g = DemandDgp::calibrated();
        g.log_price_range = (5.0, 8.0);
        assert!(matches!(g.simulate(100, 1), Err(Error::Equilibrium { .. })));
    }

    #[test]
    fn upward_sloping_demand_rejected() {
        let g = DemandDgp::linear(0.5, 0.0, 5.0, 1.0);
        assert!(matches!(g.validate(), Err(Error::InvalidDgp(_))));
    }

    #[test]
    fn degenerate_demand_gives_exact_log_relation() {
        let mut g = DemandDgp::linear(-1.0, 0.0, 0.0, 0.0);
        g.noise = SupplyNoise::None;
        g.supply.s0 = -2.0;
        let s = g.simulate(200, 5).unwrap();
        let lp = s.data.column(s.data.column_index("log_p").unwrap());
        for (ly, lp) in s.data.y().iter().zip(lp) {
            assert_eq!(*ly, -lp);
        }
    }
}
