//! MAP parameter estimation by expectation-maximization under Dirichlet
//! priors on `u`, `v` and each column of `W`, with a flat prior on sigma.
//!
//! M-step closed forms (Lagrange stationarity of `Q + ln p(theta)` on each
//! simplex):
//!
//! ```text
//! u_m    ∝ sum_n gamma_1(m, n)                + k^u_m  - 1
//! v_n    ∝ sum_m gamma_T(m, n)                + k^v_n  - 1
//! w_im   ∝ sum_t sum_n xi_t(i, m, n)          + k^W_im - 1   (normalized over i)
//! sigma² = sum_t sum_{m,n} gamma_t(m, n) (y_t - ln(b_n (1 + a_m)))² / T
//! ```
//!
//! `PE*` is drawn once per series, so its expected count is a single posterior
//! marginal rather than a sum over time.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::inference::{self, PosteriorBundle};
use crate::model::{validate_params, ModelParams, StateGrids};

/// Lower clamp on the fitted noise variance.
pub const MIN_VARIANCE: f64 = 1e-12;

/// Default mean dwell time (in observations) encoded by [`PriorSpec::persistent`].
pub const DEFAULT_MEAN_DWELL: f64 = 20.0;

/// Default pseudo-observation budget per transition column.
pub const DEFAULT_PRIOR_STRENGTH: f64 = 50.0;

/// Dirichlet pseudo-counts. Every count must be at least 1.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorSpec {
    pub initial_pe_counts: Array1<f64>,
    /// Column `m` parameterizes the Dirichlet on `W[.., m]`.
    pub transition_counts: Array2<f64>,
    pub initial_z_counts: Array1<f64>,
}

impl PriorSpec {
    pub fn new(
        initial_pe_counts: Array1<f64>,
        transition_counts: Array2<f64>,
        initial_z_counts: Array1<f64>,
    ) -> Result<Self> {
        let m = initial_z_counts.len();
        if transition_counts.dim() != (m, m) {
            return Err(Error::InvalidPrior(format!(
                "transition counts are {:?}, expected {m}x{m}",
                transition_counts.dim()
            )));
        }
        let all = initial_pe_counts
            .iter()
            .chain(transition_counts.iter())
            .chain(initial_z_counts.iter());
        for &k in all {
            if !(k >= 1.0 && k.is_finite()) {
                return Err(Error::InvalidPrior(format!("pseudo-count {k} is below 1")));
            }
        }
        Ok(PriorSpec {
            initial_pe_counts,
            transition_counts,
            initial_z_counts,
        })
    }

    /// All pseudo-counts equal to 1: the MAP estimate is the ML estimate.
    pub fn flat(m: usize, n: usize) -> Self {
        PriorSpec {
            initial_pe_counts: Array1::ones(n),
            transition_counts: Array2::ones((m, m)),
            initial_z_counts: Array1::ones(m),
        }
    }

    /// Flat on `u` and `v`; persistence prior on `W` whose mode stays on the
    /// diagonal with probability `1 - 1/mean_dwell` and spreads the rest
    /// evenly over the other levels. `strength` is the number of
    /// pseudo-transitions added to each column.
    pub fn persistent(m: usize, n: usize, mean_dwell: f64, strength: f64) -> Result<Self> {
        if !(mean_dwell >= 1.0 && mean_dwell.is_finite()) {
            return Err(Error::InvalidPrior(format!(
                "mean dwell {mean_dwell} must be >= 1"
            )));
        }
        if !(strength >= 0.0 && strength.is_finite()) {
            return Err(Error::InvalidPrior(format!(
                "prior strength {strength} must be >= 0"
            )));
        }
        let stay = 1.0 - 1.0 / mean_dwell;
        let transition_counts = if m == 1 {
            Array2::from_elem((1, 1), 1.0 + strength)
        } else {
            let off = (1.0 - stay) / (m - 1) as f64;
            Array2::from_shape_fn((m, m), |(i, k)| {
                1.0 + strength * if i == k { stay } else { off }
            })
        };
        PriorSpec::new(Array1::ones(n), transition_counts, Array1::ones(m))
    }

    pub fn check_dims(&self, grids: &StateGrids) -> Result<()> {
        let (m, n) = (grids.z_len(), grids.pe_len());
        if self.initial_z_counts.len() != m
            || self.transition_counts.dim() != (m, m)
            || self.initial_pe_counts.len() != n
        {
            return Err(Error::InvalidPrior(format!(
                "prior shaped for M={}, N={} but grids have M={m}, N={n}",
                self.initial_z_counts.len(),
                self.initial_pe_counts.len()
            )));
        }
        Ok(())
    }
}

/// Log Dirichlet density including its normalizer; `-inf` outside the support.
fn log_dirichlet(x: ArrayView1<f64>, k: ArrayView1<f64>) -> f64 {
    let norm = ln_gamma(k.sum()) - k.iter().map(|&ki| ln_gamma(ki)).sum::<f64>();
    let mut kernel = 0.0;
    for (&xi, &ki) in x.iter().zip(k) {
        if ki == 1.0 {
            continue;
        }
        if xi <= 0.0 {
            return f64::NEG_INFINITY;
        }
        kernel += (ki - 1.0) * xi.ln();
    }
    norm + kernel
}

/// `ln p(theta)`: Dirichlet terms for `v`, `u` and every column of `W`.
pub fn log_prior(params: &ModelParams, prior: &PriorSpec) -> f64 {
    let mut lp = log_dirichlet(params.initial_pe.view(), prior.initial_pe_counts.view())
        + log_dirichlet(params.initial_z.view(), prior.initial_z_counts.view());
    for (w, k) in params
        .transition
        .columns()
        .into_iter()
        .zip(prior.transition_counts.columns())
    {
        lp += log_dirichlet(w, k);
    }
    lp
}

/// `ln p(y | theta) + ln p(theta)`. Returns `-inf` when `theta` lies outside
/// the prior's support.
pub fn log_posterior(
    y: &[f64],
    params: &ModelParams,
    grids: &StateGrids,
    prior: &PriorSpec,
) -> Result<f64> {
    prior.check_dims(grids)?;
    let lp = log_prior(params, prior);
    if lp == f64::NEG_INFINITY {
        return Ok(lp);
    }
    Ok(inference::filter(y, params, grids)?.log_likelihood() + lp)
}

/// Sufficient statistics from one forward-backward sweep.
#[derive(Debug, Clone)]
pub struct EStep {
    pub posterior: PosteriorBundle,
    /// `sum_t sum_n xi_t(i, m, n)` indexed `[i, m]`.
    pub transition_counts: Array2<f64>,
}

impl EStep {
    pub fn log_likelihood(&self) -> f64 {
        self.posterior.log_likelihood()
    }
}

pub fn e_step(y: &[f64], params: &ModelParams, grids: &StateGrids) -> Result<EStep> {
    let sweep = inference::sweep(y, params, grids)?;
    let transition_counts = inference::expected_transitions(&sweep, params);
    Ok(EStep {
        posterior: sweep.bundle,
        transition_counts,
    })
}

/// Closed-form maximizer of `Q(theta; theta_j) + ln p(theta)`.
///
/// A transition column whose numerators are all zero (a level with no
/// posterior mass and a flat prior) leaves `Q + ln p` constant in that column;
/// the previous column is kept.
pub fn m_step(
    y: &[f64],
    grids: &StateGrids,
    prior: &PriorSpec,
    stats: &EStep,
    previous: &ModelParams,
) -> ModelParams {
    let gamma = &stats.posterior.smoothed;

    let u_counts = gamma[0].sum_axis(Axis(1)) + &prior.initial_z_counts - 1.0;
    let initial_z = normalized(u_counts).unwrap_or_else(|| previous.initial_z.clone());

    let v_counts = gamma[gamma.len() - 1].sum_axis(Axis(0)) + &prior.initial_pe_counts - 1.0;
    let initial_pe = normalized(v_counts).unwrap_or_else(|| previous.initial_pe.clone());

    let mut transition = &stats.transition_counts + &prior.transition_counts - 1.0;
    for (mut col, prev) in transition
        .columns_mut()
        .into_iter()
        .zip(previous.transition.columns())
    {
        let total = col.sum();
        if total > 0.0 {
            col /= total;
        } else {
            col.assign(&prev);
        }
    }

    let means = grids.log_means();
    let mut sse = 0.0;
    for (g, &obs) in gamma.iter().zip(y) {
        sse += g
            .iter()
            .zip(means.iter())
            .map(|(&w, &mu)| w * (obs - mu) * (obs - mu))
            .sum::<f64>();
    }
    let mut variance = sse / y.len() as f64;
    if !(variance >= MIN_VARIANCE) {
        log::warn!("fitted noise variance {variance:e} clamped to {MIN_VARIANCE:e}");
        variance = MIN_VARIANCE;
    }

    ModelParams {
        transition,
        initial_z,
        initial_pe,
        sigma: variance.sqrt(),
    }
}

fn normalized(mut v: Array1<f64>) -> Option<Array1<f64>> {
    let total = v.sum();
    if total > 0.0 {
        v /= total;
        Some(v)
    } else {
        None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmConfig {
    pub max_iters: usize,
    /// Relative change in log-posterior below which EM stops.
    pub tol: f64,
    /// Additional runs from random starting points.
    pub n_restarts: usize,
    pub seed: u64,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig {
            max_iters: 500,
            tol: 1e-8,
            n_restarts: 5,
            seed: 0,
        }
    }
}

impl EmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters < 1 {
            return Err(Error::InvalidConfig("max_iters must be at least 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        Ok(())
    }
}

/// Where EM starts.
#[derive(Debug, Clone)]
pub enum Init {
    Params(ModelParams),
    /// `u`, `v` and `W` columns from their priors; sigma from the spread of
    /// first differences of `y`.
    Random,
}

/// Result of [`em_fit`]: the best run's log-posterior path and final iterate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmTrace {
    /// Log-posterior at each evaluated iterate.
    pub log_posterior: Vec<f64>,
    pub params: ModelParams,
    pub converged: bool,
    pub iterations: usize,
    /// Which run produced this trace (0 is the supplied or first random start).
    pub restart: usize,
}

impl EmTrace {
    pub fn final_log_posterior(&self) -> f64 {
        *self.log_posterior.last().expect("at least one iteration")
    }
}

/// One evaluated iterate, passed to the observer of [`em_fit_observed`].
#[derive(Debug)]
pub struct IterationRecord<'a> {
    pub restart: usize,
    pub iteration: usize,
    pub log_posterior: f64,
    pub params: &'a ModelParams,
}

/// Draws a starting point as described on [`Init::Random`].
pub fn random_init<R: Rng>(
    y: &[f64],
    grids: &StateGrids,
    prior: &PriorSpec,
    rng: &mut R,
) -> ModelParams {
    let initial_z = dirichlet_draw(prior.initial_z_counts.view(), rng);
    let initial_pe = dirichlet_draw(prior.initial_pe_counts.view(), rng);
    let m = grids.z_len();
    let mut transition = Array2::zeros((m, m));
    for (mut col, k) in transition
        .columns_mut()
        .into_iter()
        .zip(prior.transition_counts.columns())
    {
        col.assign(&dirichlet_draw(k, rng));
    }
    ModelParams {
        transition,
        initial_z,
        initial_pe,
        sigma: difference_spread(y),
    }
}

fn dirichlet_draw<R: Rng>(k: ArrayView1<f64>, rng: &mut R) -> Array1<f64> {
    let mut x: Array1<f64> = k
        .iter()
        .map(|&ki| {
            Gamma::new(ki, 1.0)
                .expect("pseudo-counts are >= 1")
                .sample(rng)
        })
        .collect();
    let total = x.sum();
    if total > 0.0 {
        x /= total;
        // Renormalizing can leave a few ulps of slack; fold it into the largest entry.
        let slack = 1.0 - x.sum();
        let top = x
            .iter()
            .enumerate()
            .fold(0, |best, (i, &v)| if v > x[best] { i } else { best });
        x[top] += slack;
        x
    } else {
        Array1::from_elem(k.len(), 1.0 / k.len() as f64)
    }
}

/// Standard deviation of `y_t - y_{t-1}`, floored at 1e-4.
fn difference_spread(y: &[f64]) -> f64 {
    if y.len() < 2 {
        return 0.05;
    }
    let diffs: Vec<f64> = y.windows(2).map(|w| w[1] - w[0]).collect();
    let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / diffs.len() as f64;
    var.sqrt().max(1e-4)
}

/// Runs MAP-EM, returning the best of `1 + n_restarts` runs.
pub fn em_fit(
    y: &[f64],
    grids: &StateGrids,
    prior: &PriorSpec,
    init: Init,
    config: &EmConfig,
) -> Result<EmTrace> {
    em_fit_observed(y, grids, prior, init, config, |_| {})
}

/// [`em_fit`] with a callback invoked after every E-step.
pub fn em_fit_observed(
    y: &[f64],
    grids: &StateGrids,
    prior: &PriorSpec,
    init: Init,
    config: &EmConfig,
    mut observer: impl FnMut(&IterationRecord<'_>),
) -> Result<EmTrace> {
    config.validate()?;
    prior.check_dims(grids)?;
    if y.len() < 2 {
        return Err(Error::InvalidObservations(format!(
            "EM needs at least 2 observations, got {}",
            y.len()
        )));
    }
    let mut best: Option<EmTrace> = None;
    for restart in 0..=config.n_restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(restart as u64);
        let start = match (&init, restart) {
            (Init::Params(p), 0) => {
                validate_params(p, grids)?;
                p.clone()
            }
            _ => random_init(y, grids, prior, &mut rng),
        };
        let trace = run_em(y, grids, prior, start, config, restart, &mut observer)?;
        let better = best
            .as_ref()
            .is_none_or(|b| trace.final_log_posterior() > b.final_log_posterior());
        if better {
            best = Some(trace);
        }
    }
    Ok(best.expect("at least one run"))
}

fn run_em(
    y: &[f64],
    grids: &StateGrids,
    prior: &PriorSpec,
    start: ModelParams,
    config: &EmConfig,
    restart: usize,
    observer: &mut impl FnMut(&IterationRecord<'_>),
) -> Result<EmTrace> {
    let mut params = start;
    let mut trace = Vec::new();
    let mut converged = false;
    for iteration in 0..config.max_iters {
        let stats = e_step(y, &params, grids)?;
        let lp = stats.log_likelihood() + log_prior(&params, prior);
        observer(&IterationRecord {
            restart,
            iteration,
            log_posterior: lp,
            params: &params,
        });
        if let Some(&prev) = trace.last() {
            let change: f64 = lp - prev;
            if change.abs() <= config.tol * f64::abs(prev).max(1.0) {
                trace.push(lp);
                converged = true;
                break;
            }
        }
        trace.push(lp);
        if iteration + 1 == config.max_iters {
            break;
        }
        params = m_step(y, grids, prior, &stats, &params);
    }
    Ok(EmTrace {
        iterations: trace.len(),
        log_posterior: trace,
        params,
        converged,
        restart,
    })
}
