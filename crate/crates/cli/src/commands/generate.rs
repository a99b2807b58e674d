//! Synthetic universe: quarterly earnings follow a log random walk, prices
//! follow the model on the resulting trailing-twelve-month earnings.

use chrono::Months;
use pe_dbn::market_data::{
    trading_days, ttm_earnings, write_earnings_csv, write_price_csv, PriceSeries, QuarterlyEarnings,
};
use pe_dbn::model::generate_series;
use pe_dbn::{ModelParams, StateGrids};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::ensure_dir;
use crate::config::RunConfig;
use crate::error::CliError;
use crate::report::{write_json, TruthFile, SCHEMA_VERSION, TRUTH_SCHEMA};
use crate::universe::{self, derive_seed, Instrument};

pub fn symbol_name(k: usize) -> String {
    format!("SYN{:03}", k + 1)
}

pub fn run(cfg: &RunConfig) -> Result<(), CliError> {
    let g = &cfg.generator;
    let out = &cfg.out_dir;
    ensure_dir(out)?;
    let instruments: Vec<Instrument> = (0..g.n_instruments)
        .map(|k| Instrument {
            symbol: symbol_name(k),
            market: g.markets[k % g.markets.len()].clone(),
        })
        .collect();
    let results: Vec<Result<(), CliError>> = instruments
        .par_iter()
        .map(|inst| generate_one(cfg, inst))
        .collect();
    results.into_iter().collect::<Result<Vec<()>, _>>()?;
    universe::write_universe(&out.join(universe::UNIVERSE_FILE), &instruments)?;
    log::info!(
        "wrote {} instruments to {}",
        instruments.len(),
        out.display()
    );
    Ok(())
}

fn generate_one(cfg: &RunConfig, inst: &Instrument) -> Result<(), CliError> {
    let g = &cfg.generator;
    let seed = derive_seed(cfg.seed, &inst.symbol);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dates = trading_days(g.start, g.days);
    let last = *dates.last().expect("gen_days >= 2");

    // Four reports precede the first trading date so E_t exists from day one.
    let growth = Normal::new(g.earnings_drift, g.earnings_vol)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let mut report_dates = Vec::new();
    let mut values = Vec::new();
    let mut q = g.quarterly_earnings;
    let first_report = g.start - Months::new(12);
    for k in 0.. {
        let d = first_report + Months::new(3 * k);
        if d > last {
            break;
        }
        report_dates.push(d);
        values.push(q);
        q *= growth.sample(&mut rng).exp();
    }
    let quarterly = QuarterlyEarnings {
        report_dates,
        values,
    };
    let ttm = ttm_earnings(&quarterly, &dates)?;

    let grids = StateGrids::new(g.z_levels.clone(), g.pe_levels.clone())?;
    let params = ModelParams::persistent(grids.z_len(), grids.pe_len(), g.stay, g.sigma);
    let (series, truth) =
        generate_series(&params, &grids, &ttm.dates, &ttm.values, rng.next_u64())?;

    let prices = PriceSeries {
        dates: series.dates().to_vec(),
        closes: series.prices().to_vec(),
    };
    write_price_csv(universe::prices_path(&cfg.out_dir, &inst.symbol), &prices)?;
    write_earnings_csv(
        universe::earnings_path(&cfg.out_dir, &inst.symbol),
        &quarterly,
    )?;
    let file = TruthFile {
        schema: TRUTH_SCHEMA.into(),
        version: SCHEMA_VERSION,
        symbol: inst.symbol.clone(),
        market: inst.market.clone(),
        seed: cfg.seed,
        pe_star: grids.pe_values()[truth.pe_index],
        pe_star_index: truth.pe_index,
        z_indices: truth.z_indices,
        grids,
        params,
    };
    write_json(&universe::truth_path(&cfg.out_dir, &inst.symbol), &file)
}
