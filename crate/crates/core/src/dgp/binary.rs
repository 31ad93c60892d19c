use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::{default_tau_grid, observation_rng, GroundTruth, Latent, SimulatedDataset};
use crate::data::QuantileDataset;
use crate::error::{Error, Result};
use crate::stats::{norm_cdf, norm_pdf, norm_quantile};

/// How the potential ranks `U_0`, `U_1` relate to the selection unobservable `V`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RankMode {
    /// One common noise draw: `U_0 = U_1 = F(V + eta)`.
    Invariant { eta_sd: f64 },
    /// Independent noise per arm: `U_d = F(V + eta_d)`, `eta_d` iid normal.
    SimilarSlippage { eta_sd: f64 },
    /// `eta_d = d M`: the treated rank absorbs a match effect, breaking similarity.
    ViolatedMatch { match_sd: f64 },
}

/// Distribution of the selection unobservable `V`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LatentDist {
    Normal { sd: f64 },
    Uniform { half_width: f64 },
}

/// Outcome quantile function per treatment arm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OutcomeModel {
    /// `q(d, t) = mu[d] + sigma[d] Phi^{-1}(t)`.
    Gaussian { mu: [f64; 2], sigma: [f64; 2] },
    /// `Y = 1{U_d > 1 - theta[d]}`, i.e. `q(d, t) = 1{t > 1 - theta[d]}`.
    Bernoulli { theta: [f64; 2] },
}

impl OutcomeModel {
    pub fn quantile(&self, d: usize, tau: f64) -> f64 {
        match *self {
            OutcomeModel::Gaussian { mu, sigma } => mu[d] + sigma[d] * norm_quantile(tau),
            OutcomeModel::Bernoulli { theta } => {
                if tau > 1.0 - theta[d] {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Binary treatment chosen by a threshold rule `D = 1{c0 + cz Z + cv V > 0}`
/// with a discrete instrument `Z`.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryTreatmentDgp {
    pub mode: RankMode,
    pub v_dist: LatentDist,
    pub z_support: Vec<f64>,
    pub z_probs: Vec<f64>,
    pub c0: f64,
    pub cz: f64,
    pub cv: f64,
    pub outcome: OutcomeModel,
}

impl Default for BinaryTreatmentDgp {
    /// Rank invariance, `V ~ N(0, 1)`, balanced binary `Z`,
    /// `P[D = 1 | Z] = (0.2, 0.7)` and `q(d, t) = d + Phi^{-1}(t)`.
    fn default() -> Self {
        let c0 = norm_quantile(0.2);
        Self {
            mode: RankMode::Invariant { eta_sd: 1.0 },
            v_dist: LatentDist::Normal { sd: 1.0 },
            z_support: vec![0.0, 1.0],
            z_probs: vec![0.5, 0.5],
            c0,
            cz: norm_quantile(0.7) - c0,
            cv: 1.0,
            outcome: OutcomeModel::Gaussian {
                mu: [0.0, 1.0],
                sigma: [1.0, 1.0],
            },
        }
    }
}

/// CDF of `V + eta` with `eta ~ N(0, s^2)` independent of `V`, kept inside
/// the open unit interval so that outcome quantiles stay finite.
fn sum_cdf(v: LatentDist, s: f64, x: f64) -> f64 {
    sum_cdf_raw(v, s, x).clamp(1e-300, 1.0 - f64::EPSILON / 2.0)
}

fn sum_cdf_raw(v: LatentDist, s: f64, x: f64) -> f64 {
    match v {
        LatentDist::Normal { sd } => {
            let total = (sd * sd + s * s).sqrt();
            if total == 0.0 {
                return if x >= 0.0 { 1.0 } else { 0.0 };
            }
            norm_cdf(x / total)
        }
        LatentDist::Uniform { half_width: w } => {
            if s == 0.0 {
                return ((x + w) / (2.0 * w)).clamp(0.0, 1.0);
            }
            // (1 / 2w) int_{-w}^{w} Phi((x - v) / s) dv, via G(t) = t Phi(t) + phi(t)
            let g = |t: f64| t * norm_cdf(t) + norm_pdf(t);
            (s * (g((x + w) / s) - g((x - w) / s)) / (2.0 * w)).clamp(0.0, 1.0)
        }
    }
}

impl BinaryTreatmentDgp {
    pub fn validate(&self) -> Result<()> {
        if self.z_support.is_empty() || self.z_support.len() != self.z_probs.len() {
            return Err(Error::InvalidDgp("z support and probabilities must be nonempty and of equal length".into()));
        }
        let total: f64 = self.z_probs.iter().sum();
        if self.z_probs.iter().any(|p| !(*p >= 0.0)) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidDgp("z probabilities must be nonnegative and sum to 1".into()));
        }
        let scale_ok = match self.v_dist {
            LatentDist::Normal { sd } => sd > 0.0,
            LatentDist::Uniform { half_width } => half_width > 0.0,
        };
        let noise_ok = match self.mode {
            RankMode::Invariant { eta_sd } | RankMode::SimilarSlippage { eta_sd } => eta_sd >= 0.0,
            RankMode::ViolatedMatch { match_sd } => match_sd >= 0.0,
        };
        if !scale_ok || !noise_ok {
            return Err(Error::InvalidDgp("latent scales must be positive and noise scales nonnegative".into()));
        }
        match self.outcome {
            OutcomeModel::Gaussian { sigma, .. } if sigma.iter().any(|s| !(*s > 0.0)) => {
                Err(Error::InvalidDgp("outcome scales must be positive".into()))
            }
            OutcomeModel::Bernoulli { theta } if theta.iter().any(|t| !(0.0..=1.0).contains(t)) => {
                Err(Error::InvalidDgp("Bernoulli success probabilities must lie in [0, 1]".into()))
            }
            _ => Ok(()),
        }
    }

    /// Population `P[D = 1 | Z = z]` for each support point.
    pub fn treatment_probabilities(&self) -> Vec<f64> {
        self.z_support
            .iter()
            .map(|&z| {
                let index = self.c0 + self.cz * z;
                if self.cv == 0.0 {
                    return if index > 0.0 { 1.0 } else { 0.0 };
                }
                // P[cv V > -index]
                let t = -index / self.cv;
                let below = match self.v_dist {
                    LatentDist::Normal { sd } => norm_cdf(t / sd),
                    LatentDist::Uniform { half_width: w } => ((t + w) / (2.0 * w)).clamp(0.0, 1.0),
                };
                if self.cv > 0.0 {
                    1.0 - below
                } else {
                    below
                }
            })
            .collect()
    }

    /// Columns `y`, `d`, `z`. Latent records hold `V`, `U_0`, `U_1` and the realised `U_D`.
    pub fn simulate(&self, n: usize, seed: u64) -> Result<SimulatedDataset> {
        self.validate()?;
        let rows: Vec<[f64; 6]> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut rng = observation_rng(seed, i);
                let v = match self.v_dist {
                    LatentDist::Normal { sd } => sd * rng.sample::<f64, _>(StandardNormal),
                    LatentDist::Uniform { half_width } => half_width * (2.0 * rng.random::<f64>() - 1.0),
                };
                let draw = rng.random::<f64>();
                let mut acc = 0.0;
                let mut z = *self.z_support.last().expect("validated support");
                for (zv, p) in self.z_support.iter().zip(&self.z_probs) {
                    acc += p;
                    if draw < acc {
                        z = *zv;
                        break;
                    }
                }
                let e0: f64 = rng.sample(StandardNormal);
                let e1: f64 = rng.sample(StandardNormal);
                let (u0, u1) = match self.mode {
                    RankMode::Invariant { eta_sd } => {
                        let u = sum_cdf(self.v_dist, eta_sd, v + eta_sd * e0);
                        (u, u)
                    }
                    RankMode::SimilarSlippage { eta_sd } => (
                        sum_cdf(self.v_dist, eta_sd, v + eta_sd * e0),
                        sum_cdf(self.v_dist, eta_sd, v + eta_sd * e1),
                    ),
                    RankMode::ViolatedMatch { match_sd } => (
                        sum_cdf(self.v_dist, 0.0, v),
                        sum_cdf(self.v_dist, match_sd, v + match_sd * e1),
                    ),
                };
                let d = usize::from(self.c0 + self.cz * z + self.cv * v > 0.0);
                let u = if d == 1 { u1 } else { u0 };
                let y = match self.outcome {
                    OutcomeModel::Gaussian { .. } => self.outcome.quantile(d, u),
                    OutcomeModel::Bernoulli { theta } => f64::from(u8::from(u > 1.0 - theta[d])),
                };
                [y, d as f64, z, v, u0, u1]
            })
            .collect();

        let col = |k: usize| rows.iter().map(|r| r[k]).collect::<Vec<f64>>();
        let columns = vec![("y".to_string(), col(0)), ("d".to_string(), col(1)), ("z".to_string(), col(2))];
        let data = QuantileDataset::from_named(columns, "y", &["d"], &[], &["z"])?;

        let taus = default_tau_grid();
        let curves = BTreeMap::from([
            ("q_d0".to_string(), taus.iter().map(|&t| self.outcome.quantile(0, t)).collect()),
            ("q_d1".to_string(), taus.iter().map(|&t| self.outcome.quantile(1, t)).collect()),
        ]);
        let (mode, noise) = match self.mode {
            RankMode::Invariant { eta_sd } => (0.0, eta_sd),
            RankMode::SimilarSlippage { eta_sd } => (1.0, eta_sd),
            RankMode::ViolatedMatch { match_sd } => (2.0, match_sd),
        };
        let mut params = BTreeMap::from([
            ("rank_mode".to_string(), mode),
            ("noise_sd".to_string(), noise),
            ("c0".to_string(), self.c0),
            ("cz".to_string(), self.cz),
            ("cv".to_string(), self.cv),
        ]);
        for (z, p) in self.z_support.iter().zip(self.treatment_probabilities()) {
            params.insert(format!("p_treated_given_z={z}"), p);
        }
        let truth = GroundTruth {
            model: "binary".into(),
            tau_grid: taus,
            curves,
            params,
        };

        let outcome = self.outcome;
        let d_col = data.roles().d[0];
        let quantile = Arc::new(move |ds: &QuantileDataset, row: usize, tau: f64| {
            outcome.quantile(usize::from(ds.column(d_col)[row] > 0.5), tau)
        });
        let u0 = col(4);
        let u1 = col(5);
        let d = col(1);
        let latent = Latent {
            u: d.iter()
                .zip(u0.iter().zip(&u1))
                .map(|(&d, (&a, &b))| if d > 0.5 { b } else { a })
                .collect(),
            u_arms: Some((u0, u1)),
            v: Some(col(3)),
        };
        Ok(SimulatedDataset::new(data, truth, seed, latent, quantile))
    }
}
