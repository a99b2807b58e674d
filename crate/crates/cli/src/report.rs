//! On-disk report schemas and their text renderings.
//!
//! All JSON files carry `schema` and `version` fields, the global seed and the
//! resolved configuration (without directories). Numbers are written in
//! shortest round-trip form and collections in a fixed order, so reruns with
//! the same seed produce identical bytes.

use std::fmt::Write as _;
use std::path::Path;

use chrono::NaiveDate;
use pe_dbn::trading::{BenchmarkRun, LedgerEntry, Outcome, Variant};
use pe_dbn::{ModelParams, StateGrids};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;
pub const MODEL_SCHEMA: &str = "pe-dbn.model";
pub const TRUTH_SCHEMA: &str = "pe-dbn.truth";
pub const BACKTEST_SCHEMA: &str = "pe-dbn.backtest";
pub const PROFIT_TABLE_SCHEMA: &str = "pe-dbn.profit-table";
pub const PORTFOLIO_SCHEMA: &str = "pe-dbn.portfolio";

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::io(path, e))?;
    text.push('\n');
    write_text(path, &text)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn check_schema(path: &Path, found: &str, version: u32, expected: &str) -> Result<(), CliError> {
    if found != expected || version != SCHEMA_VERSION {
        return Err(CliError::Data(format!(
            "{}: expected schema {expected} v{SCHEMA_VERSION}, found {found} v{version}",
            path.display()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub observations: usize,
}

/// Generator output recorded next to the synthetic data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TruthFile {
    pub schema: String,
    pub version: u32,
    pub symbol: String,
    pub market: String,
    pub seed: u64,
    pub grids: StateGrids,
    pub params: ModelParams,
    pub pe_star_index: usize,
    pub pe_star: f64,
    /// Mispricing level index on each trading date.
    pub z_indices: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub converged: bool,
    pub iterations: usize,
    pub restart: usize,
    pub final_log_posterior: f64,
    pub log_posterior: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeStar {
    pub index: usize,
    pub value: f64,
    pub marginal: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub schema: String,
    pub version: u32,
    pub symbol: String,
    pub market: String,
    pub seed: u64,
    /// Seed handed to EM for this symbol.
    pub fit_seed: u64,
    pub config: RunConfig,
    pub grids: StateGrids,
    pub params: ModelParams,
    pub fit: FitSummary,
    pub pe_star: PeStar,
    pub train: Window,
}

impl ModelFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let m: ModelFile = read_json(path)?;
        check_schema(path, &m.schema, m.version, MODEL_SCHEMA)?;
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub variant: Variant,
    pub threshold_pct: f64,
    pub profit_pct: f64,
    pub outcome: Outcome,
    /// Strategy minus benchmark, in percentage points.
    pub x: f64,
    pub trades: usize,
    pub ledger: Vec<LedgerEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BacktestReport {
    pub schema: String,
    pub version: u32,
    pub symbol: String,
    pub market: String,
    pub seed: u64,
    pub config: RunConfig,
    pub pe_star: f64,
    pub test: Window,
    pub benchmark: BenchmarkRun,
    pub cells: Vec<CellReport>,
}

impl BacktestReport {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let r: BacktestReport = read_json(path)?;
        check_schema(path, &r.schema, r.version, BACKTEST_SCHEMA)?;
        Ok(r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub variant: Variant,
    pub threshold_pct: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub win: usize,
    pub draw: usize,
    pub lose: usize,
}

impl Tally {
    pub fn add(&mut self, outcome: Outcome) {
        match outcome {
            Outcome::Win => self.win += 1,
            Outcome::Draw => self.draw += 1,
            Outcome::Lose => self.lose += 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfitRow {
    pub symbol: String,
    pub market: String,
    /// Percent profit per column.
    pub profits: Vec<f64>,
    pub benchmark: f64,
}

/// Per-symbol percent profits by threshold cell, with a win/draw/lose row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProfitTable {
    pub schema: String,
    pub version: u32,
    pub seed: u64,
    pub config: RunConfig,
    pub columns: Vec<Column>,
    pub rows: Vec<ProfitRow>,
    pub tallies: Vec<Tally>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortfolioCell {
    pub variant: Variant,
    pub threshold_pct: f64,
    pub expected_x: f64,
    pub prob_nonnegative: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortfolioSection {
    pub name: String,
    pub portfolio_size: usize,
    pub pool_size: usize,
    pub cells: Vec<PortfolioCell>,
}

/// Bootstrap results per market and for the pooled universe.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PortfolioReport {
    pub schema: String,
    pub version: u32,
    pub seed: u64,
    pub config: RunConfig,
    pub n_resamples: usize,
    pub sections: Vec<PortfolioSection>,
}

fn column_label(c: &Column) -> String {
    let tag = match c.variant {
        Variant::LongTerm => "L",
        Variant::MediumTerm => "M",
    };
    format!("{tag}{}%", c.threshold_pct)
}

const WIDTH: usize = 9;

/// Plain-text profit table: one row per symbol, long-term then medium-term
/// threshold columns, buy-and-hold last, and a W/D/L row.
pub fn profit_table_text(t: &ProfitTable) -> String {
    let sym_width = t
        .rows
        .iter()
        .map(|r| r.symbol.len())
        .max()
        .unwrap_or(0)
        .max(6);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "Profit (%) on the test window. L = long-term, M = medium-term threshold."
    );
    let _ = write!(out, "{:<sym_width$}", "symbol");
    for c in &t.columns {
        let _ = write!(out, " {:>WIDTH$}", column_label(c));
    }
    let _ = writeln!(out, " {:>WIDTH$}", "B&H");
    for r in &t.rows {
        let _ = write!(out, "{:<sym_width$}", r.symbol);
        for p in &r.profits {
            let _ = write!(out, " {:>WIDTH$.2}", p);
        }
        let _ = writeln!(out, " {:>WIDTH$.2}", r.benchmark);
    }
    let _ = write!(out, "{:<sym_width$}", "W/D/L");
    for tally in &t.tallies {
        let _ = write!(
            out,
            " {:>WIDTH$}",
            format!("{}/{}/{}", tally.win, tally.draw, tally.lose)
        );
    }
    let _ = writeln!(out, " {:>WIDTH$}", "");
    out
}

/// Plain-text portfolio table: `E[X]` and `Pr(X>=0)` rows per section.
pub fn portfolio_text(r: &PortfolioReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "Portfolio-level profit difference X (strategy - buy-and-hold, percentage points), {} resamples.",
        r.n_resamples
    );
    for s in &r.sections {
        let _ = writeln!(
            out,
            "\n[{}] portfolios of {} drawn from {} stocks",
            s.name, s.portfolio_size, s.pool_size
        );
        let _ = write!(out, "{:<9}", "");
        for c in &s.cells {
            let col = Column {
                variant: c.variant,
                threshold_pct: c.threshold_pct,
            };
            let _ = write!(out, " {:>WIDTH$}", column_label(&col));
        }
        let _ = writeln!(out);
        let _ = write!(out, "{:<9}", "E[X]");
        for c in &s.cells {
            let _ = write!(out, " {:>WIDTH$.2}", c.expected_x);
        }
        let _ = writeln!(out);
        let _ = write!(out, "{:<9}", "Pr(X>=0)");
        for c in &s.cells {
            let _ = write!(out, " {:>WIDTH$.3}", c.prob_nonnegative);
        }
        let _ = writeln!(out);
    }
    out
}
