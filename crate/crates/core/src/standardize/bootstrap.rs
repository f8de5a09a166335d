//! Nonparametric bootstrap of the full fit-and-standardise pipeline.

use super::{
    standardize, Population, Result, StandardizeError, StandardizeRequest, StandardizedSeries,
};
use crate::dataset::SurvivalFrame;
use crate::fpm::{fit, FpmFit, ModelSpec};
use crate::simulate::bootstrap_indices;
use log::warn;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct BootstrapSummary {
    pub reps: usize,
    /// Replicates where a refit failed; they are left out.
    pub failed: usize,
    /// Point estimates on the original data (no delta method).
    pub estimates: StandardizedSeries,
    /// Bootstrap standard error per row of `estimates`.
    pub se: Vec<f64>,
}

/// Resamples rows with replacement, refits every model from `specs`, and
/// standardises each replicate. Replicate `r` uses seed `seed + r`, so the
/// result does not depend on the thread count.
pub fn bootstrap_se(
    specs: &[ModelSpec],
    frame: &SurvivalFrame,
    request: &StandardizeRequest,
    reps: usize,
    seed: u64,
) -> Result<BootstrapSummary> {
    if request.population != Population::All {
        return Err(StandardizeError::InvalidRequest(
            "bootstrap needs the marginal (all rows) population".into(),
        ));
    }
    if reps < 2 {
        return Err(StandardizeError::InvalidRequest(
            "bootstrap needs at least 2 replicates".into(),
        ));
    }
    let mut req = request.clone();
    req.delta_method = false;
    let fits: Vec<FpmFit> = specs
        .iter()
        .map(|s| fit(s, frame))
        .collect::<std::result::Result<_, _>>()?;
    let refs: Vec<&FpmFit> = fits.iter().collect();
    let estimates = standardize(&refs, frame, &req)?;

    let draws: Vec<Option<Vec<f64>>> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(r as u64));
            let sample = frame.select_rows(&bootstrap_indices(frame.n_rows(), &mut rng));
            let fits: Vec<FpmFit> = match specs.iter().map(|s| fit(s, &sample)).collect() {
                Ok(f) => f,
                Err(e) => {
                    warn!("bootstrap replicate {r}: {e}");
                    return None;
                }
            };
            let refs: Vec<&FpmFit> = fits.iter().collect();
            match standardize(&refs, &sample, &req) {
                Ok(s) => Some(s.rows.iter().map(|row| row.estimate).collect()),
                Err(e) => {
                    warn!("bootstrap replicate {r}: {e}");
                    None
                }
            }
        })
        .collect();
    let ok: Vec<Vec<f64>> = draws.iter().flatten().cloned().collect();
    let failed = reps - ok.len();
    if ok.len() < 2 {
        return Err(StandardizeError::InvalidRequest(
            "fewer than 2 bootstrap replicates succeeded".into(),
        ));
    }
    let m = ok.len() as f64;
    let se = (0..estimates.rows.len())
        .map(|i| {
            let mean = ok.iter().map(|d| d[i]).sum::<f64>() / m;
            (ok.iter().map(|d| (d[i] - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt()
        })
        .collect();
    Ok(BootstrapSummary {
        reps,
        failed,
        estimates,
        se,
    })
}
