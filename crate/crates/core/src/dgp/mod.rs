//! Seeded data-generating processes with known structural quantile functions.
//!
//! Every generator draws observation `i` from its own ChaCha stream of the
//! seed, so datasets are bit-identical across runs and thread counts. Each
//! simulation carries a serialisable [`GroundTruth`] table and the true
//! quantile function, which [`validate_moment_condition`] uses to check the moment
//! restriction `P[Y <= q(D, X, tau) | Z] = tau` empirically.

mod binary;
mod demand;
mod location_scale;
mod validate;

pub use binary::{BinaryTreatmentDgp, LatentDist, OutcomeModel, RankMode};
pub use demand::{DemandDgp, InstrumentDist, SupplyCurve, SupplyNoise};
pub use location_scale::LocationScaleDgp;
pub use validate::{validate_moment_condition, CellDeviation, MomentConditionReport, ZBinning};

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::QuantileDataset;

/// The random stream of observation `index` under `seed`.
pub(crate) fn observation_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// `0.05, 0.10, ..., 0.95`.
pub fn default_tau_grid() -> Vec<f64> {
    (1..20).map(|k| k as f64 / 20.0).collect()
}

/// Ground-truth curves tabulated on a quantile grid, plus scalar parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub model: String,
    pub tau_grid: Vec<f64>,
    /// Named curves, each evaluated on `tau_grid` (e.g. `alpha`, `beta`, `q_d0`).
    pub curves: BTreeMap<String, Vec<f64>>,
    pub params: BTreeMap<String, f64>,
}

/// Unobservables of a simulation, kept for diagnostics but not written with the data.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Latent {
    /// Rank of the realised outcome, `U_D`.
    pub u: Vec<f64>,
    /// Potential ranks `(U_0, U_1)` for binary treatments.
    pub u_arms: Option<(Vec<f64>, Vec<f64>)>,
    /// Selection unobservable.
    pub v: Option<Vec<f64>>,
}

/// `q(row, tau)`: true conditional quantile for the covariates of a row.
pub type StructuralQuantile = Arc<dyn Fn(&QuantileDataset, usize, f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct SimulatedDataset {
    pub data: QuantileDataset,
    pub truth: GroundTruth,
    pub seed: u64,
    pub latent: Latent,
    quantile: StructuralQuantile,
}

impl fmt::Debug for SimulatedDataset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SimulatedDataset")
            .field("n", &self.data.n())
            .field("model", &self.truth.model)
            .field("seed", &self.seed)
            .finish()
    }
}

impl SimulatedDataset {
    pub fn new(
        data: QuantileDataset,
        truth: GroundTruth,
        seed: u64,
        latent: Latent,
        quantile: StructuralQuantile,
    ) -> Self {
        Self {
            data,
            truth,
            seed,
            latent,
            quantile,
        }
    }

    /// True `tau`-quantile of the outcome given the treatment and covariates of `row`.
    pub fn structural_quantile(&self, row: usize, tau: f64) -> f64 {
        (self.quantile)(&self.data, row, tau)
    }
}

/// Checks that `tau -> q(tau)` is non-decreasing on `taus` for every function in `family`.
pub(crate) fn nondecreasing_on_grid(taus: &[f64], q: impl Fn(f64) -> f64) -> bool {
    taus.windows(2).all(|w| q(w[1]) >= q(w[0]))
}

/// Dense quantile grid used for monotonicity checks at construction.
pub(crate) fn check_grid() -> Vec<f64> {
    (1..100).map(|k| k as f64 / 100.0).collect()
}
