//! The demo operations as plain functions from JSON request to JSON response,
//! so they run and test natively.

use chrono::NaiveDate;
use pe_dbn::inference::{filtered_z_estimate, map_pe, smooth, ForwardFilter};
use pe_dbn::learning::{
    em_fit, EmConfig, Init, PriorSpec, DEFAULT_MEAN_DWELL, DEFAULT_PRIOR_STRENGTH,
};
use pe_dbn::market_data::trading_days;
use pe_dbn::model::generate_series;
use pe_dbn::portfolio::{bootstrap, histogram, BootstrapConfig};
use pe_dbn::trading::{
    buy_and_hold, compare, run_strategy, Action, Outcome, StrategyConfig, Variant,
};
use pe_dbn::{ModelParams, ObservationSeries, StateGrids};
use serde::{Deserialize, Serialize};

fn parse<'a, T: Deserialize<'a>>(request: &'a str) -> Result<T, String> {
    serde_json::from_str(request).map_err(|e| format!("bad request: {e}"))
}

fn respond<T: Serialize>(value: &T) -> Result<String, String> {
    serde_json::to_string(value).map_err(|e| e.to_string())
}

fn demo_start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2015, 1, 5).expect("valid date")
}

#[derive(Debug, Deserialize)]
#[serde(default)]
pub struct SimulateRequest {
    pub seed: u64,
    pub days: usize,
    pub sigma: f64,
    pub stay: f64,
    pub z_levels: Vec<f64>,
    pub pe_levels: Vec<f64>,
}

impl Default for SimulateRequest {
    fn default() -> Self {
        SimulateRequest {
            seed: 1,
            days: 750,
            sigma: 0.02,
            stay: 0.98,
            z_levels: vec![-0.15, 0.0, 0.15],
            pe_levels: vec![8.0, 11.0, 15.0, 20.0, 27.0],
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SimulateResponse {
    pub observed_pe: Vec<f64>,
    /// Generating mispricing value on each date.
    pub hidden_z: Vec<f64>,
    pub true_pe_star: f64,
    /// MAP fundamental PE under the fitted model.
    pub pe_star: f64,
    pub pe_levels: Vec<f64>,
    pub pe_posterior: Vec<f64>,
    /// `PE* (1 + z_t)` with the filtered mispricing mode at each date.
    pub filtered_baseline: Vec<f64>,
    pub fitted_sigma: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Simulates a series with unit earnings, fits the model on the generating
/// grids and returns the PE* posterior and the filtered baseline.
pub fn simulate_and_filter(request: &str) -> Result<String, String> {
    let req: SimulateRequest = parse(request)?;
    if req.days < 2 || req.days > 5000 {
        return Err("days must be between 2 and 5000".into());
    }
    let grids = StateGrids::new(req.z_levels, req.pe_levels).map_err(|e| e.to_string())?;
    let (m, n) = (grids.z_len(), grids.pe_len());
    let truth = ModelParams::persistent(m, n, req.stay, req.sigma);
    let dates = trading_days(demo_start(), req.days);
    let (series, hidden) = generate_series(&truth, &grids, &dates, &vec![1.0; req.days], req.seed)
        .map_err(|e| e.to_string())?;

    let prior = PriorSpec::persistent(m, n, DEFAULT_MEAN_DWELL, DEFAULT_PRIOR_STRENGTH)
        .map_err(|e| e.to_string())?;
    let config = EmConfig {
        max_iters: 300,
        tol: 1e-8,
        n_restarts: 2,
        seed: req.seed,
    };
    let fit =
        em_fit(series.y(), &grids, &prior, Init::Random, &config).map_err(|e| e.to_string())?;
    let bundle = smooth(series.y(), &fit.params, &grids).map_err(|e| e.to_string())?;
    let pe = map_pe(&bundle, &grids);

    let mut filter = ForwardFilter::new(&fit.params, &grids).map_err(|e| e.to_string())?;
    let mut filtered_baseline = Vec::with_capacity(series.len());
    for &y in series.y() {
        let a = filter.step(y).map_err(|e| e.to_string())?;
        filtered_baseline.push(pe.value * (1.0 + filtered_z_estimate(a, &grids).value));
    }

    respond(&SimulateResponse {
        observed_pe: series.observed_pe(),
        hidden_z: hidden
            .z_indices
            .iter()
            .map(|&k| grids.z_values()[k])
            .collect(),
        true_pe_star: grids.pe_values()[hidden.pe_index],
        pe_star: pe.value,
        pe_levels: grids.pe_values().to_vec(),
        pe_posterior: pe.marginal,
        filtered_baseline,
        fitted_sigma: fit.params.sigma,
        converged: fit.converged,
        iterations: fit.iterations,
    })
}

#[derive(Debug, Deserialize)]
pub struct BacktestRequest {
    pub observed_pe: Vec<f64>,
    pub pe_star: f64,
    #[serde(default)]
    pub filtered_baseline: Vec<f64>,
    pub variant: Variant,
    pub threshold_pct: f64,
    #[serde(default = "default_commission")]
    pub commission: f64,
}

fn default_commission() -> f64 {
    pe_dbn::trading::DEFAULT_COMMISSION
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Marker {
    pub t: usize,
    pub action: Action,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct BacktestResponse {
    pub markers: Vec<Marker>,
    pub baseline: Vec<f64>,
    pub profit_pct: f64,
    pub benchmark_pct: f64,
    pub x: f64,
    pub outcome: Outcome,
}

/// Runs one band strategy on a unit-earnings PE path against buy-and-hold.
pub fn backtest(request: &str) -> Result<String, String> {
    let req: BacktestRequest = parse(request)?;
    let len = req.observed_pe.len();
    let dates = trading_days(demo_start(), len);
    let series = ObservationSeries::new(dates, req.observed_pe.clone(), vec![1.0; len])
        .map_err(|e| e.to_string())?;
    let baseline = match req.variant {
        Variant::LongTerm => vec![req.pe_star; len],
        Variant::MediumTerm => {
            if req.filtered_baseline.len() != len {
                return Err(
                    "medium-term backtest needs one filtered baseline value per date".into(),
                );
            }
            req.filtered_baseline.clone()
        }
    };
    let mut config = StrategyConfig::new(req.variant, req.threshold_pct / 100.0);
    config.commission = req.commission;
    let run = run_strategy(&series, &baseline, &config).map_err(|e| e.to_string())?;
    let bench = buy_and_hold(series.prices(), &config).map_err(|e| e.to_string())?;
    let cmp = compare(run.profit_pct, bench.profit_pct);
    let markers = run
        .ledger
        .entries
        .iter()
        .enumerate()
        .filter(|(_, e)| e.action != Action::Hold)
        .map(|(t, e)| Marker {
            t,
            action: e.action,
        })
        .collect();
    respond(&BacktestResponse {
        markers,
        baseline,
        profit_pct: run.profit_pct,
        benchmark_pct: bench.profit_pct,
        x: cmp.x,
        outcome: cmp.outcome,
    })
}

#[derive(Debug, Deserialize)]
pub struct HistogramRequest {
    pub pool: Vec<f64>,
    pub portfolio_size: usize,
    pub n_resamples: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_bins")]
    pub bins: usize,
}

fn default_bins() -> usize {
    30
}

#[derive(Debug, Serialize, Deserialize)]
pub struct HistogramResponse {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub expected_x: f64,
    pub prob_nonnegative: f64,
}

/// Bootstraps equally weighted portfolios from `pool` and bins the means.
pub fn bootstrap_histogram(request: &str) -> Result<String, String> {
    let req: HistogramRequest = parse(request)?;
    if req.n_resamples > 1_000_000 {
        return Err("at most 1000000 resamples".into());
    }
    let report = bootstrap(&BootstrapConfig {
        portfolio_size: req.portfolio_size,
        n_resamples: req.n_resamples,
        seed: req.seed,
        pool: req.pool,
    })
    .map_err(|e| e.to_string())?;
    let h = histogram(&report, req.bins).map_err(|e| e.to_string())?;
    respond(&HistogramResponse {
        edges: h.edges,
        counts: h.counts,
        expected_x: report.expected_x,
        prob_nonnegative: report.prob_nonnegative,
    })
}
