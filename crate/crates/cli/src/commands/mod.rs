pub mod backtest;
pub mod bootstrap;
pub mod generate;
pub mod train;

use std::path::Path;

use chrono::{Months, NaiveDate};
use pe_dbn::market_data::{
    build_observations, load_earnings_csv, load_price_csv, ttm_earnings, SplitSpec,
};
use pe_dbn::ObservationSeries;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::universe;

pub(crate) fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

/// Last training date: `train_end` when configured, otherwise the day before
/// the first usable date plus `train_years`.
fn train_end(cfg: &RunConfig, first: NaiveDate) -> Result<NaiveDate, CliError> {
    if let Some(d) = cfg.model.train_end {
        return Ok(d);
    }
    first
        .checked_add_months(Months::new(12 * cfg.model.train_years))
        .and_then(|d| d.pred_opt())
        .ok_or_else(|| CliError::Usage("train_years runs past the calendar".into()))
}

/// Reads a symbol's files and splits them into training and test windows.
/// `fixed_end` pins the split, for reusing the one stored in a model file.
pub(crate) fn load_split(
    cfg: &RunConfig,
    symbol: &str,
    fixed_end: Option<NaiveDate>,
) -> Result<(ObservationSeries, ObservationSeries), CliError> {
    let prices = load_price_csv(universe::prices_path(&cfg.data_dir, symbol))?;
    let earnings = load_earnings_csv(universe::earnings_path(&cfg.data_dir, symbol))?;
    let ttm = ttm_earnings(&earnings, &prices.dates)?;
    let end = match fixed_end {
        Some(d) => d,
        None => train_end(cfg, ttm.dates[0])?,
    };
    let (train, test) = build_observations(&prices, &ttm, SplitSpec { train_end: end })
        .map_err(|e| CliError::Data(format!("{symbol}: {e}")))?;
    Ok((train, test))
}

/// Short label for file names, e.g. `long_term_7.5`.
pub(crate) fn cell_label(variant: pe_dbn::trading::Variant, pct: f64) -> String {
    format!("{variant}_{pct}")
}
