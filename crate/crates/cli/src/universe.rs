//! The instrument list (`universe.csv`, columns `symbol,market`) and the
//! per-symbol file names.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instrument {
    pub symbol: String,
    pub market: String,
}

pub const UNIVERSE_FILE: &str = "universe.csv";

pub fn prices_path(dir: &Path, symbol: &str) -> PathBuf {
    dir.join(format!("{symbol}_prices.csv"))
}

pub fn earnings_path(dir: &Path, symbol: &str) -> PathBuf {
    dir.join(format!("{symbol}_earnings.csv"))
}

pub fn truth_path(dir: &Path, symbol: &str) -> PathBuf {
    dir.join(format!("{symbol}_truth.json"))
}

pub fn model_path(dir: &Path, symbol: &str) -> PathBuf {
    dir.join(format!("{symbol}.model.json"))
}

pub fn backtest_path(dir: &Path, symbol: &str) -> PathBuf {
    dir.join(format!("{symbol}.backtest.json"))
}

pub fn write_universe(path: &Path, instruments: &[Instrument]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::io(path, e))?;
    for inst in instruments {
        w.serialize(inst).map_err(|e| CliError::io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn read_universe(path: &Path) -> Result<Vec<Instrument>, CliError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::io(path, e))?;
    let mut out = Vec::new();
    for row in r.deserialize() {
        let inst: Instrument = row.map_err(|e| CliError::io(path, e))?;
        out.push(inst);
    }
    Ok(out)
}

/// Instruments selected by the configuration: the `symbols` key if set,
/// otherwise every row of the universe file. Symbols not in the universe file
/// get the market label `-`.
pub fn selected(cfg: &RunConfig) -> Result<Vec<Instrument>, CliError> {
    let path = cfg.data_dir.join(UNIVERSE_FILE);
    let universe = if path.exists() {
        read_universe(&path)?
    } else if cfg.symbols.is_empty() {
        return Err(CliError::Data(format!(
            "{} not found and no symbols configured",
            path.display()
        )));
    } else {
        Vec::new()
    };
    if cfg.symbols.is_empty() {
        if universe.is_empty() {
            return Err(CliError::Data(format!(
                "{} lists no instruments",
                path.display()
            )));
        }
        return Ok(universe);
    }
    Ok(cfg
        .symbols
        .iter()
        .map(|s| {
            universe
                .iter()
                .find(|i| &i.symbol == s)
                .cloned()
                .unwrap_or(Instrument {
                    symbol: s.clone(),
                    market: "-".into(),
                })
        })
        .collect())
}

/// A stable per-label seed: FNV-1a of `label` mixed into `seed`.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    seed ^ h
}
