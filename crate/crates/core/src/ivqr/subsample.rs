use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{build_profile, estimate, AlphaGrid, LinearIvqrSpec};
use crate::data::QuantileDataset;
use crate::error::{Error, Result};

/// Fewest subsamples accepted by [`variance_by_subsampling`].
pub const MIN_REPLICATIONS: usize = 50;
/// Largest tolerated share of failed subsample estimates.
const MAX_FAILURE_SHARE: f64 = 0.2;

/// Subsampling covariance of the stacked estimate `(alpha, beta)`.
#[derive(Debug, Clone)]
pub struct SubsampleVariance {
    /// Full-sample `(alpha, beta)` the subsample estimates are centred on.
    pub center: Vec<f64>,
    pub covariance: DMatrix<f64>,
    pub std_errors: Vec<f64>,
    pub block_size: usize,
    pub replications: usize,
    pub failed: usize,
}

/// `max(50, ceil(n / 5))`, capped below `n`.
pub fn default_block_size(n: usize) -> usize {
    n.div_ceil(5).max(50).min(n.saturating_sub(1))
}

fn stacked(est: &super::IvqrEstimate) -> Vec<f64> {
    est.alpha_hat.iter().chain(&est.beta_hat).copied().collect()
}

/// Covariance of the grid estimate by subsampling without replacement.
///
/// Each replication draws `block_size` rows from its own ChaCha stream of
/// `seed`, so the result does not depend on thread scheduling. The empirical
/// covariance of the subsample estimates around the full-sample estimate is
/// rescaled by `block_size / n`.
pub fn variance_by_subsampling(
    data: &QuantileDataset,
    spec: &LinearIvqrSpec,
    grid: &AlphaGrid,
    block_size: usize,
    replications: usize,
    seed: u64,
) -> Result<SubsampleVariance> {
    let n = data.n();
    if replications < MIN_REPLICATIONS {
        return Err(Error::Domain(format!(
            "subsampling needs at least {MIN_REPLICATIONS} replications, got {replications}"
        )));
    }
    let p = 1 + spec.exogenous.len() + spec.instruments.len();
    if block_size >= n || block_size <= p + 1 {
        return Err(Error::Domain(format!(
            "block size must lie strictly between {} and n = {n}, got {block_size}",
            p + 1
        )));
    }
    let center = stacked(&estimate(&build_profile(data, spec, grid)?)?);

    let draws: Vec<Option<Vec<f64>>> = (0..replications)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            let mut rows = sample(&mut rng, n, block_size).into_vec();
            rows.sort_unstable();
            let sub = data.select_rows(&rows);
            build_profile(&sub, spec, grid)
                .and_then(|prof| estimate(&prof))
                .ok()
                .map(|e| stacked(&e))
        })
        .collect();

    let ok: Vec<&Vec<f64>> = draws.iter().flatten().collect();
    let failed = replications - ok.len();
    if failed as f64 > MAX_FAILURE_SHARE * replications as f64 {
        return Err(Error::UnreliableVariance {
            failed,
            total: replications,
        });
    }

    let k = center.len();
    let c = DVector::from_column_slice(&center);
    let mut cov = DMatrix::zeros(k, k);
    for theta in &ok {
        let dev = DVector::from_column_slice(theta) - &c;
        cov += &dev * dev.transpose();
    }
    cov *= block_size as f64 / (n as f64 * ok.len() as f64);
    Ok(SubsampleVariance {
        std_errors: (0..k).map(|j| cov[(j, j)].sqrt()).collect(),
        center,
        covariance: cov,
        block_size,
        replications,
        failed,
    })
}
