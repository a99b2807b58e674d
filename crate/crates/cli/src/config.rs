//! Run configuration: a flat `key = value` file, command-line overrides and
//! built-in defaults, resolved in that order of precedence (flag, file,
//! default).
//!
//! ```text
//! # comments run to the end of the line
//! seed = 7
//! long_thresholds = 5, 10, 15, 20
//! z_levels = auto
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::NaiveDate;
use pe_dbn::learning::{EmConfig, PriorSpec};
use pe_dbn::StateGrids;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// One configuration key.
pub struct KeySpec {
    pub key: &'static str,
    /// Long flag name, without the leading dashes.
    pub flag: &'static str,
    pub default: &'static str,
    pub help: &'static str,
}

const fn key(
    key: &'static str,
    flag: &'static str,
    default: &'static str,
    help: &'static str,
) -> KeySpec {
    KeySpec {
        key,
        flag,
        default,
        help,
    }
}

/// Every recognised key, in the order they are documented.
pub const KEYS: &[KeySpec] = &[
    key(
        "seed",
        "seed",
        "0",
        "Global seed for generation, EM restarts and bootstrap draws",
    ),
    key(
        "data_dir",
        "data",
        "data",
        "Directory holding universe.csv and per-symbol price/earnings CSVs",
    ),
    key(
        "out_dir",
        "out",
        "out",
        "Directory for outputs; backtest and bootstrap also read earlier outputs here",
    ),
    key(
        "symbols",
        "symbols",
        "",
        "Comma-separated symbols to process; empty means every row of universe.csv",
    ),
    key(
        "n_instruments",
        "n-instruments",
        "30",
        "generate: number of synthetic instruments",
    ),
    key(
        "markets",
        "markets",
        "SET,US",
        "generate: market labels assigned to instruments in rotation",
    ),
    key(
        "gen_start",
        "gen-start",
        "2010-01-04",
        "generate: first trading date",
    ),
    key(
        "gen_days",
        "gen-days",
        "1260",
        "generate: number of weekday trading dates",
    ),
    key(
        "gen_sigma",
        "gen-sigma",
        "0.02",
        "generate: short-term noise standard deviation",
    ),
    key(
        "gen_stay",
        "gen-stay",
        "0.98",
        "generate: probability of keeping the same mispricing level",
    ),
    key(
        "gen_z_levels",
        "gen-z-levels",
        "-0.15,0,0.15",
        "generate: mispricing levels",
    ),
    key(
        "gen_pe_levels",
        "gen-pe-levels",
        "8,11,15,20,27",
        "generate: fundamental PE levels, drawn uniformly",
    ),
    key(
        "gen_quarterly_earnings",
        "gen-quarterly-earnings",
        "0.5",
        "generate: first quarterly earnings figure",
    ),
    key(
        "gen_earnings_drift",
        "gen-earnings-drift",
        "0.01",
        "generate: mean quarterly log growth of earnings",
    ),
    key(
        "gen_earnings_vol",
        "gen-earnings-vol",
        "0.03",
        "generate: standard deviation of quarterly log growth",
    ),
    key(
        "train_years",
        "train-years",
        "3",
        "Training window length in years from the first usable date",
    ),
    key(
        "train_end",
        "train-end",
        "",
        "Last training date (YYYY-MM-DD); overrides train_years when set",
    ),
    key(
        "z_levels",
        "z-levels",
        "auto",
        "Mispricing grid: `auto` or a comma-separated list",
    ),
    key(
        "pe_levels",
        "pe-levels",
        "auto",
        "Fundamental PE grid: `auto` or a comma-separated list",
    ),
    key(
        "z_count",
        "z-count",
        "7",
        "auto grid: number of mispricing levels",
    ),
    key(
        "z_half_width",
        "z-half-width",
        "0.3",
        "auto grid: mispricing levels span [-w, w]",
    ),
    key(
        "pe_count",
        "pe-count",
        "15",
        "auto grid: number of PE levels over the 5th..95th percentile",
    ),
    key(
        "prior",
        "prior",
        "persistent",
        "Transition prior: `persistent` or `flat`",
    ),
    key(
        "prior_mean_dwell",
        "prior-mean-dwell",
        "20",
        "persistent prior: expected days at one mispricing level",
    ),
    key(
        "prior_strength",
        "prior-strength",
        "50",
        "persistent prior: pseudo-transitions per column",
    ),
    key("max_iters", "max-iters", "500", "EM iterations per run"),
    key("tol", "tol", "1e-8", "EM relative log-posterior tolerance"),
    key(
        "n_restarts",
        "n-restarts",
        "5",
        "EM runs from random starts in addition to the first",
    ),
    key(
        "long_thresholds",
        "long-thresholds",
        "5,10,15,20",
        "Long-term band thresholds in percent",
    ),
    key(
        "medium_thresholds",
        "medium-thresholds",
        "3,5,7,10",
        "Medium-term band thresholds in percent",
    ),
    key(
        "commission",
        "commission",
        "0.9987",
        "Fraction of value kept after each trade",
    ),
    key(
        "initial_cash",
        "initial-cash",
        "100",
        "Starting cash per simulation",
    ),
    key("charts", "charts", "true", "backtest: write SVG charts"),
    key(
        "n_resamples",
        "n-resamples",
        "10000",
        "bootstrap: resamples per cell",
    ),
    key(
        "portfolio_size",
        "portfolio-size",
        "15",
        "bootstrap: stocks per portfolio for the pooled section",
    ),
    key(
        "market_portfolio_size",
        "market-portfolio-size",
        "7",
        "bootstrap: stocks per portfolio within one market",
    ),
    key(
        "histograms",
        "histograms",
        "true",
        "bootstrap: write SVG histograms",
    ),
    key(
        "histogram_bins",
        "histogram-bins",
        "30",
        "bootstrap: histogram bins",
    ),
];

pub fn spec(name: &str) -> Option<&'static KeySpec> {
    KEYS.iter().find(|k| k.key == name)
}

/// A documented config file with every key at its default.
pub fn template() -> String {
    let mut out = String::new();
    for k in KEYS {
        let _ = writeln!(out, "# {}", k.help);
        let _ = writeln!(out, "{} = {}\n", k.key, k.default);
    }
    out
}

/// Parses the flat config format into raw values.
pub fn parse_file(text: &str, path: &Path) -> Result<BTreeMap<String, String>, CliError> {
    let mut out = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let at = |msg: String| CliError::Usage(format!("{}:{}: {msg}", path.display(), lineno + 1));
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| at(format!("expected `key = value`, found `{line}`")))?;
        let k = k.trim();
        if spec(k).is_none() {
            return Err(at(format!("unknown key `{k}`")));
        }
        if out.insert(k.to_string(), v.trim().to_string()).is_some() {
            return Err(at(format!("key `{k}` set twice")));
        }
    }
    Ok(out)
}

/// Grid choice: data-driven or explicit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridChoice {
    Auto,
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorKind {
    Persistent,
    Flat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub n_instruments: usize,
    pub markets: Vec<String>,
    pub start: NaiveDate,
    pub days: usize,
    pub sigma: f64,
    pub stay: f64,
    pub z_levels: Vec<f64>,
    pub pe_levels: Vec<f64>,
    pub quarterly_earnings: f64,
    pub earnings_drift: f64,
    pub earnings_vol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub train_years: u32,
    pub train_end: Option<NaiveDate>,
    pub z_levels: GridChoice,
    pub pe_levels: GridChoice,
    pub z_count: usize,
    pub z_half_width: f64,
    pub pe_count: usize,
    pub prior: PriorKind,
    pub prior_mean_dwell: f64,
    pub prior_strength: f64,
    pub max_iters: usize,
    pub tol: f64,
    pub n_restarts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradingConfig {
    /// Percent.
    pub long_thresholds: Vec<f64>,
    /// Percent.
    pub medium_thresholds: Vec<f64>,
    pub commission: f64,
    pub initial_cash: f64,
    pub charts: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortfolioConfig {
    pub n_resamples: usize,
    pub portfolio_size: usize,
    pub market_portfolio_size: usize,
    pub histograms: bool,
    pub histogram_bins: usize,
}

/// Fully resolved configuration. Directories are left out of serialized
/// reports so that runs in different locations produce identical files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(skip)]
    pub data_dir: PathBuf,
    #[serde(skip)]
    pub out_dir: PathBuf,
    pub symbols: Vec<String>,
    pub generator: GeneratorConfig,
    pub model: ModelConfig,
    pub trading: TradingConfig,
    pub portfolio: PortfolioConfig,
}

struct Resolver {
    values: BTreeMap<String, String>,
}

impl Resolver {
    fn raw(&self, k: &str) -> &str {
        match self.values.get(k) {
            Some(v) => v,
            None => spec(k).expect("key is registered").default,
        }
    }

    fn bad(&self, k: &str, why: impl std::fmt::Display) -> CliError {
        CliError::Usage(format!("invalid value `{}` for `{k}`: {why}", self.raw(k)))
    }

    fn get<T: FromStr>(&self, k: &str) -> Result<T, CliError>
    where
        T::Err: std::fmt::Display,
    {
        self.raw(k).trim().parse().map_err(|e| self.bad(k, e))
    }

    fn list<T: FromStr>(&self, k: &str) -> Result<Vec<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        let raw = self.raw(k).trim();
        if raw.is_empty() {
            return Ok(Vec::new());
        }
        raw.split(',')
            .map(|s| s.trim().parse().map_err(|e| self.bad(k, e)))
            .collect()
    }

    fn grid(&self, k: &str) -> Result<GridChoice, CliError> {
        if self.raw(k).trim().eq_ignore_ascii_case("auto") {
            Ok(GridChoice::Auto)
        } else {
            Ok(GridChoice::Explicit(self.list(k)?))
        }
    }

    fn date(&self, k: &str) -> Result<Option<NaiveDate>, CliError> {
        let raw = self.raw(k).trim();
        if raw.is_empty() {
            return Ok(None);
        }
        NaiveDate::parse_from_str(raw, "%Y-%m-%d")
            .map(Some)
            .map_err(|e| self.bad(k, e))
    }
}

impl RunConfig {
    /// Resolves defaults, then the file values, then the overrides.
    pub fn resolve(
        file: BTreeMap<String, String>,
        overrides: BTreeMap<String, String>,
    ) -> Result<Self, CliError> {
        let mut values = file;
        values.extend(overrides);
        let r = Resolver { values };
        let prior = match r.raw("prior").trim() {
            "persistent" => PriorKind::Persistent,
            "flat" => PriorKind::Flat,
            _ => return Err(r.bad("prior", "expected `persistent` or `flat`")),
        };
        let cfg = RunConfig {
            seed: r.get("seed")?,
            data_dir: PathBuf::from(r.raw("data_dir")),
            out_dir: PathBuf::from(r.raw("out_dir")),
            symbols: r.list("symbols")?,
            generator: GeneratorConfig {
                n_instruments: r.get("n_instruments")?,
                markets: r.list("markets")?,
                start: r
                    .date("gen_start")?
                    .ok_or_else(|| r.bad("gen_start", "a start date is required"))?,
                days: r.get("gen_days")?,
                sigma: r.get("gen_sigma")?,
                stay: r.get("gen_stay")?,
                z_levels: r.list("gen_z_levels")?,
                pe_levels: r.list("gen_pe_levels")?,
                quarterly_earnings: r.get("gen_quarterly_earnings")?,
                earnings_drift: r.get("gen_earnings_drift")?,
                earnings_vol: r.get("gen_earnings_vol")?,
            },
            model: ModelConfig {
                train_years: r.get("train_years")?,
                train_end: r.date("train_end")?,
                z_levels: r.grid("z_levels")?,
                pe_levels: r.grid("pe_levels")?,
                z_count: r.get("z_count")?,
                z_half_width: r.get("z_half_width")?,
                pe_count: r.get("pe_count")?,
                prior,
                prior_mean_dwell: r.get("prior_mean_dwell")?,
                prior_strength: r.get("prior_strength")?,
                max_iters: r.get("max_iters")?,
                tol: r.get("tol")?,
                n_restarts: r.get("n_restarts")?,
            },
            trading: TradingConfig {
                long_thresholds: r.list("long_thresholds")?,
                medium_thresholds: r.list("medium_thresholds")?,
                commission: r.get("commission")?,
                initial_cash: r.get("initial_cash")?,
                charts: r.get("charts")?,
            },
            portfolio: PortfolioConfig {
                n_resamples: r.get("n_resamples")?,
                portfolio_size: r.get("portfolio_size")?,
                market_portfolio_size: r.get("market_portfolio_size")?,
                histograms: r.get("histograms")?,
                histogram_bins: r.get("histogram_bins")?,
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let usage = |msg: String| Err(CliError::Usage(msg));
        let g = &self.generator;
        if g.markets.is_empty() {
            return usage("markets must list at least one label".into());
        }
        if g.days < 2 {
            return usage("gen_days must be at least 2".into());
        }
        if !(g.sigma > 0.0) || !(0.0..=1.0).contains(&g.stay) {
            return usage("gen_sigma must be positive and gen_stay in [0, 1]".into());
        }
        StateGrids::new(g.z_levels.clone(), g.pe_levels.clone())?;
        if !(g.quarterly_earnings > 0.0) || !(g.earnings_vol >= 0.0) {
            return usage(
                "gen_quarterly_earnings must be positive and gen_earnings_vol non-negative".into(),
            );
        }
        let m = &self.model;
        if m.train_years == 0 && m.train_end.is_none() {
            return usage("train_years must be positive".into());
        }
        self.em_config(0).validate()?;
        if m.z_count == 0 || m.pe_count == 0 || !(m.z_half_width > 0.0 && m.z_half_width < 1.0) {
            return usage(
                "z_count and pe_count must be positive and z_half_width in (0, 1)".into(),
            );
        }
        if let GridChoice::Explicit(z) = &m.z_levels {
            StateGrids::new(z.clone(), vec![1.0])?;
        }
        if let GridChoice::Explicit(pe) = &m.pe_levels {
            StateGrids::new(vec![0.0], pe.clone())?;
        }
        if m.prior == PriorKind::Persistent {
            PriorSpec::persistent(2, 1, m.prior_mean_dwell, m.prior_strength)?;
        }
        let t = &self.trading;
        if t.long_thresholds.is_empty() || t.medium_thresholds.is_empty() {
            return usage("threshold lists must not be empty".into());
        }
        for pct in t.long_thresholds.iter().chain(&t.medium_thresholds) {
            let mut sc = pe_dbn::trading::StrategyConfig::new(
                pe_dbn::trading::Variant::LongTerm,
                pct / 100.0,
            );
            sc.commission = t.commission;
            sc.initial_cash = t.initial_cash;
            sc.validate()?;
        }
        let p = &self.portfolio;
        if p.n_resamples == 0
            || p.portfolio_size == 0
            || p.market_portfolio_size == 0
            || p.histogram_bins == 0
        {
            return usage("bootstrap sizes and histogram_bins must be positive".into());
        }
        Ok(())
    }

    /// EM settings with the given seed.
    pub fn em_config(&self, seed: u64) -> EmConfig {
        EmConfig {
            max_iters: self.model.max_iters,
            tol: self.model.tol,
            n_restarts: self.model.n_restarts,
            seed,
        }
    }
}
