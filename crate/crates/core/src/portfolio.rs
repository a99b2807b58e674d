//! Bootstrap evaluation of equally weighted portfolios of per-stock profit
//! differences.
//!
//! Each resample draws `portfolio_size` distinct stocks from the pool and
//! averages their `X` values. Resample `r` uses its own ChaCha stream
//! `(seed, r)`, so results do not depend on how resamples are spread across
//! threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub portfolio_size: usize,
    pub n_resamples: usize,
    pub seed: u64,
    /// Per-stock `X` values in percentage points.
    pub pool: Vec<f64>,
}

impl BootstrapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.portfolio_size == 0 {
            return Err(Error::InvalidConfig(
                "portfolio size must be positive".into(),
            ));
        }
        if self.portfolio_size > self.pool.len() {
            return Err(Error::InvalidConfig(format!(
                "portfolio of {} stocks cannot be drawn from a pool of {}",
                self.portfolio_size,
                self.pool.len()
            )));
        }
        if self.n_resamples == 0 {
            return Err(Error::InvalidConfig("need at least one resample".into()));
        }
        if self.pool.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidConfig("pool values must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapReport {
    /// Mean of the resampled portfolio means, in percentage points.
    pub expected_x: f64,
    /// Fraction of resamples whose portfolio mean is `>= 0`.
    pub prob_nonnegative: f64,
    /// Resampled portfolio means, ascending.
    pub samples: Vec<f64>,
}

/// Equal-width histogram over `[min, max]` of the resample means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `bins + 1` edges.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

fn resample_mean(config: &BootstrapConfig, r: usize, pivot: f64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(r as u64);
    let members = rand::seq::index::sample(&mut rng, config.pool.len(), config.portfolio_size);
    // Summing offsets from a pivot keeps constant pools exact.
    let offset: f64 = members.iter().map(|i| config.pool[i] - pivot).sum();
    pivot + offset / config.portfolio_size as f64
}

/// Runs the bootstrap, in parallel when the `parallel` feature is enabled.
pub fn bootstrap(config: &BootstrapConfig) -> Result<BootstrapReport> {
    config.validate()?;
    let pivot = config.pool[0];

    #[cfg(feature = "parallel")]
    let mut samples: Vec<f64> = {
        use rayon::prelude::*;
        (0..config.n_resamples)
            .into_par_iter()
            .map(|r| resample_mean(config, r, pivot))
            .collect()
    };
    #[cfg(not(feature = "parallel"))]
    let mut samples: Vec<f64> = (0..config.n_resamples)
        .map(|r| resample_mean(config, r, pivot))
        .collect();

    let offset: f64 = samples.iter().map(|s| s - pivot).sum();
    let expected_x = pivot + offset / samples.len() as f64;
    let nonneg = samples.iter().filter(|&&s| s >= 0.0).count();
    samples.sort_by(f64::total_cmp);
    Ok(BootstrapReport {
        expected_x,
        prob_nonnegative: nonneg as f64 / config.n_resamples as f64,
        samples,
    })
}

/// Bins the resample means. A degenerate sample lands in the first bin.
pub fn histogram(report: &BootstrapReport, bins: usize) -> Result<Histogram> {
    if bins < 1 {
        return Err(Error::InvalidConfig(
            "histogram needs at least one bin".into(),
        ));
    }
    let (lo, hi) = match (report.samples.first(), report.samples.last()) {
        (Some(&lo), Some(&hi)) => (lo, hi),
        _ => return Err(Error::InvalidConfig("empty bootstrap sample".into())),
    };
    let width = (hi - lo) / bins as f64;
    let edges = (0..=bins)
        .map(|k| if k == bins { hi } else { lo + width * k as f64 })
        .collect();
    let mut counts = vec![0usize; bins];
    for &s in &report.samples {
        let k = if width > 0.0 {
            (((s - lo) / width) as usize).min(bins - 1)
        } else {
            0
        };
        counts[k] += 1;
    }
    Ok(Histogram { edges, counts })
}
