//! Runs every threshold cell and the buy-and-hold benchmark on each
//! instrument's test window.
//!
//! The medium-term baseline uses the filtered mispricing mode at each test
//! date, from a forward filter that runs through the training window and then
//! continues causally into the test window.

use pe_dbn::inference::{filtered_z_estimate, ForwardFilter};
use pe_dbn::model::validate_params;
use pe_dbn::trading::{
    baseline_series, buy_and_hold, compare, run_strategy, StrategyConfig, Variant,
};
use rayon::prelude::*;

use super::{cell_label, ensure_dir, load_split};
use crate::config::RunConfig;
use crate::error::CliError;
use crate::report::{
    write_json, write_text, BacktestReport, CellReport, Column, ModelFile, ProfitRow, ProfitTable,
    Tally, Window, BACKTEST_SCHEMA, PROFIT_TABLE_SCHEMA, SCHEMA_VERSION,
};
use crate::svg;
use crate::universe::{self, Instrument};

pub const TABLE_JSON: &str = "profits.json";
pub const TABLE_TEXT: &str = "profits.txt";

/// Threshold cells in report order: long-term first, then medium-term.
pub fn columns(cfg: &RunConfig) -> Vec<Column> {
    let long = cfg.trading.long_thresholds.iter().map(|&t| Column {
        variant: Variant::LongTerm,
        threshold_pct: t,
    });
    let medium = cfg.trading.medium_thresholds.iter().map(|&t| Column {
        variant: Variant::MediumTerm,
        threshold_pct: t,
    });
    long.chain(medium).collect()
}

pub fn run(cfg: &RunConfig) -> Result<(), CliError> {
    let instruments = universe::selected(cfg)?;
    ensure_dir(&cfg.out_dir)?;
    let reports: Vec<Result<BacktestReport, CliError>> = instruments
        .par_iter()
        .map(|inst| backtest_one(cfg, inst))
        .collect();
    let reports = reports.into_iter().collect::<Result<Vec<_>, _>>()?;

    let cols = columns(cfg);
    let mut tallies = vec![Tally::default(); cols.len()];
    let rows = reports
        .iter()
        .map(|r| {
            for (tally, cell) in tallies.iter_mut().zip(&r.cells) {
                tally.add(cell.outcome);
            }
            ProfitRow {
                symbol: r.symbol.clone(),
                market: r.market.clone(),
                profits: r.cells.iter().map(|c| c.profit_pct).collect(),
                benchmark: r.benchmark.profit_pct,
            }
        })
        .collect();
    let table = ProfitTable {
        schema: PROFIT_TABLE_SCHEMA.into(),
        version: SCHEMA_VERSION,
        seed: cfg.seed,
        config: cfg.clone(),
        columns: cols,
        rows,
        tallies,
    };
    write_json(&cfg.out_dir.join(TABLE_JSON), &table)?;
    write_text(
        &cfg.out_dir.join(TABLE_TEXT),
        &crate::report::profit_table_text(&table),
    )
}

fn backtest_one(cfg: &RunConfig, inst: &Instrument) -> Result<BacktestReport, CliError> {
    let model_path = universe::model_path(&cfg.out_dir, &inst.symbol);
    let model = ModelFile::load(&model_path)?;
    if model.symbol != inst.symbol {
        return Err(CliError::Data(format!(
            "{}: model is for {}, expected {}",
            model_path.display(),
            model.symbol,
            inst.symbol
        )));
    }
    validate_params(&model.params, &model.grids)
        .map_err(|e| CliError::Data(format!("{}: {e}", model_path.display())))?;
    let (train, test) = load_split(cfg, &inst.symbol, Some(model.train.end))?;

    let mut filter = ForwardFilter::new(&model.params, &model.grids)?;
    for &y in train.y() {
        filter.step(y)?;
    }
    let mut z_hat = Vec::with_capacity(test.len());
    for &y in test.y() {
        let a = filter.step(y)?;
        z_hat.push(filtered_z_estimate(a, &model.grids).value);
    }

    let pe_star = model.pe_star.value;
    let strategy = |variant, pct: f64| {
        let mut sc = StrategyConfig::new(variant, pct / 100.0);
        sc.commission = cfg.trading.commission;
        sc.initial_cash = cfg.trading.initial_cash;
        sc
    };
    let benchmark = buy_and_hold(test.prices(), &strategy(Variant::LongTerm, 10.0))?;

    let mut cells = Vec::new();
    for col in columns(cfg) {
        let sc = strategy(col.variant, col.threshold_pct);
        let z = (col.variant == Variant::MediumTerm).then_some(z_hat.as_slice());
        let baseline = baseline_series(col.variant, pe_star, z, test.len())?;
        let run = run_strategy(&test, &baseline, &sc)?;
        let cmp = compare(run.profit_pct, benchmark.profit_pct);
        if cfg.trading.charts {
            let title = format!(
                "{} {} threshold {}%",
                inst.symbol, col.variant, col.threshold_pct
            );
            let chart =
                svg::trade_chart(&title, &run.ledger.entries, test.earnings(), sc.threshold);
            let name = format!(
                "{}_{}.svg",
                inst.symbol,
                cell_label(col.variant, col.threshold_pct)
            );
            write_text(&cfg.out_dir.join(name), &chart)?;
        }
        cells.push(CellReport {
            variant: col.variant,
            threshold_pct: col.threshold_pct,
            profit_pct: run.profit_pct,
            outcome: cmp.outcome,
            x: cmp.x,
            trades: run.ledger.trade_count(),
            ledger: run.ledger.entries,
        });
    }

    let report = BacktestReport {
        schema: BACKTEST_SCHEMA.into(),
        version: SCHEMA_VERSION,
        symbol: inst.symbol.clone(),
        market: inst.market.clone(),
        seed: cfg.seed,
        config: cfg.clone(),
        pe_star,
        test: Window {
            start: test.dates()[0],
            end: *test.dates().last().expect("test window is non-empty"),
            observations: test.len(),
        },
        benchmark,
        cells,
    };
    write_json(
        &universe::backtest_path(&cfg.out_dir, &inst.symbol),
        &report,
    )?;
    Ok(report)
}
