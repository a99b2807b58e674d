//! Portfolio-level bootstrap of per-stock profit differences, per market and
//! pooled.

use pe_dbn::portfolio::{bootstrap, histogram, BootstrapConfig};

use super::{backtest::columns, cell_label, ensure_dir};
use crate::config::RunConfig;
use crate::error::CliError;
use crate::report::{
    portfolio_text, write_json, write_text, BacktestReport, PortfolioCell, PortfolioReport,
    PortfolioSection, PORTFOLIO_SCHEMA, SCHEMA_VERSION,
};
use crate::svg;
use crate::universe::{self, derive_seed};

pub const REPORT_JSON: &str = "portfolio.json";
pub const REPORT_TEXT: &str = "portfolio.txt";
pub const POOLED: &str = "pooled";

pub fn run(cfg: &RunConfig) -> Result<(), CliError> {
    let instruments = universe::selected(cfg)?;
    ensure_dir(&cfg.out_dir)?;
    let reports = instruments
        .iter()
        .map(|inst| BacktestReport::load(&universe::backtest_path(&cfg.out_dir, &inst.symbol)))
        .collect::<Result<Vec<_>, _>>()?;

    let cols = columns(cfg);
    // x[s][c]: stock s, column c
    let mut x = Vec::with_capacity(reports.len());
    for r in &reports {
        let row = cols
            .iter()
            .map(|c| {
                r.cells
                    .iter()
                    .find(|cell| cell.variant == c.variant && cell.threshold_pct == c.threshold_pct)
                    .map(|cell| cell.x)
                    .ok_or_else(|| {
                        CliError::Data(format!(
                            "{}: no {} {}% cell in its backtest report; rerun backtest",
                            r.symbol, c.variant, c.threshold_pct
                        ))
                    })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        x.push(row);
    }

    let mut markets: Vec<&str> = Vec::new();
    for r in &reports {
        if !markets.contains(&r.market.as_str()) {
            markets.push(&r.market);
        }
    }
    let mut groups: Vec<(String, usize, Vec<usize>)> = markets
        .iter()
        .map(|m| {
            let members = (0..reports.len())
                .filter(|&s| reports[s].market == *m)
                .collect();
            (m.to_string(), cfg.portfolio.market_portfolio_size, members)
        })
        .collect();
    groups.push((
        POOLED.into(),
        cfg.portfolio.portfolio_size,
        (0..reports.len()).collect(),
    ));

    let mut sections = Vec::new();
    for (name, size, members) in groups {
        if members.len() < size {
            return Err(CliError::Usage(format!(
                "section {name}: portfolios of {size} need at least {size} stocks, found {}",
                members.len()
            )));
        }
        let mut cells = Vec::new();
        for (c, col) in cols.iter().enumerate() {
            let label = cell_label(col.variant, col.threshold_pct);
            let seed = derive_seed(cfg.seed, &format!("{name}/{label}"));
            let bc = BootstrapConfig {
                portfolio_size: size,
                n_resamples: cfg.portfolio.n_resamples,
                seed,
                pool: members.iter().map(|&s| x[s][c]).collect(),
            };
            let rep = bootstrap(&bc)?;
            if cfg.portfolio.histograms {
                let h = histogram(&rep, cfg.portfolio.histogram_bins)?;
                let title = format!(
                    "{name}: {} {}%, E[X] = {:.2}",
                    col.variant, col.threshold_pct, rep.expected_x
                );
                write_text(
                    &cfg.out_dir.join(format!("hist_{name}_{label}.svg")),
                    &svg::histogram_chart(&title, &h),
                )?;
            }
            cells.push(PortfolioCell {
                variant: col.variant,
                threshold_pct: col.threshold_pct,
                expected_x: rep.expected_x,
                prob_nonnegative: rep.prob_nonnegative,
                seed,
            });
        }
        sections.push(PortfolioSection {
            name,
            portfolio_size: size,
            pool_size: members.len(),
            cells,
        });
    }

    let report = PortfolioReport {
        schema: PORTFOLIO_SCHEMA.into(),
        version: SCHEMA_VERSION,
        seed: cfg.seed,
        config: cfg.clone(),
        n_resamples: cfg.portfolio.n_resamples,
        sections,
    };
    write_json(&cfg.out_dir.join(REPORT_JSON), &report)?;
    write_text(&cfg.out_dir.join(REPORT_TEXT), &portfolio_text(&report))
}
