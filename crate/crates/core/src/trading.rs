//! PE-band trading against a fundamental baseline, and the buy-and-hold
//! benchmark.
//!
//! At each date exactly one case applies:
//!
//! 1. observed PE `<= A_t (1 - Tr)` while holding cash: buy with all cash,
//!    `N = C I / P_t`;
//! 2. observed PE `>= A_t (1 + Tr)` while holding shares: sell everything,
//!    `I = C P_t N`;
//! 3. otherwise carry the position.
//!
//! The baseline `A_t` is `PE*` for the long-term variant and `PE* (1 + z_t)`
//! for the medium-term variant. Open positions are marked to market at the
//! last close without commission, for both the strategy and the benchmark.

use std::fmt;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ObservationSeries;

/// Fraction of value kept after paying commission on a trade.
pub const DEFAULT_COMMISSION: f64 = 0.9987;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    LongTerm,
    MediumTerm,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::LongTerm => "long_term",
            Variant::MediumTerm => "medium_term",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrategyConfig {
    pub variant: Variant,
    /// Band half-width `Tr` as a fraction in (0, 1).
    pub threshold: f64,
    pub commission: f64,
    pub initial_cash: f64,
}

impl StrategyConfig {
    pub fn new(variant: Variant, threshold: f64) -> Self {
        StrategyConfig {
            variant,
            threshold,
            commission: DEFAULT_COMMISSION,
            initial_cash: 100.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "threshold {} not in (0, 1)",
                self.threshold
            )));
        }
        if !(self.commission > 0.0 && self.commission <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "commission factor {} not in (0, 1]",
                self.commission
            )));
        }
        if !(self.initial_cash > 0.0 && self.initial_cash.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "initial cash {} must be positive",
                self.initial_cash
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Buy,
    Sell,
    Hold,
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Action::Buy => "buy",
            Action::Sell => "sell",
            Action::Hold => "hold",
        })
    }
}

/// One date of a simulation. `cash` and `shares` are the position after the
/// action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub date: NaiveDate,
    pub action: Action,
    pub price: f64,
    pub baseline: f64,
    pub cash: f64,
    pub shares: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeLedger {
    pub initial_cash: f64,
    pub entries: Vec<LedgerEntry>,
}

impl TradeLedger {
    pub fn actions(&self) -> Vec<Action> {
        self.entries.iter().map(|e| e.action).collect()
    }

    /// Number of buys plus sells.
    pub fn trade_count(&self) -> usize {
        self.entries
            .iter()
            .filter(|e| e.action != Action::Hold)
            .count()
    }

    /// Cash plus shares at the last close, minus the initial cash.
    pub fn profit(&self) -> f64 {
        match self.entries.last() {
            Some(e) => e.cash + e.price * e.shares - self.initial_cash,
            None => 0.0,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("date,action,price,baseline,cash,shares\n");
        for e in &self.entries {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                e.date.format("%Y-%m-%d"),
                e.action,
                e.price,
                e.baseline,
                e.cash,
                e.shares
            ));
        }
        out
    }
}

/// Position between dates.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Position {
    cash: f64,
    shares: f64,
}

impl Position {
    fn apply(self, action: Action, price: f64, commission: f64) -> Position {
        match action {
            Action::Buy => Position {
                cash: 0.0,
                shares: commission * self.cash / price,
            },
            Action::Sell => Position {
                cash: commission * price * self.shares,
                shares: 0.0,
            },
            Action::Hold => self,
        }
    }
}

/// `A_t` for each of `len` dates.
pub fn baseline_series(
    variant: Variant,
    pe_star: f64,
    z_estimates: Option<&[f64]>,
    len: usize,
) -> Result<Vec<f64>> {
    match variant {
        Variant::LongTerm => Ok(vec![pe_star; len]),
        Variant::MediumTerm => {
            let z = z_estimates.ok_or_else(|| {
                Error::InvalidConfig("medium-term baseline needs filtered z estimates".into())
            })?;
            if z.len() != len {
                return Err(Error::InvalidConfig(format!(
                    "{} z estimates for {len} dates",
                    z.len()
                )));
            }
            Ok(z.iter().map(|z| pe_star * (1.0 + z)).collect())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyRun {
    pub ledger: TradeLedger,
    pub profit: f64,
    pub profit_pct: f64,
}

/// Simulates the band strategy over a test window.
pub fn run_strategy(
    series: &ObservationSeries,
    baseline: &[f64],
    config: &StrategyConfig,
) -> Result<StrategyRun> {
    config.validate()?;
    if baseline.len() != series.len() {
        return Err(Error::InvalidConfig(format!(
            "baseline has {} values for {} dates",
            baseline.len(),
            series.len()
        )));
    }
    if series.is_empty() {
        return Err(Error::EmptyPartition("test window"));
    }
    let tr = config.threshold;
    let mut pos = Position {
        cash: config.initial_cash,
        shares: 0.0,
    };
    let mut entries = Vec::with_capacity(series.len());
    for t in 0..series.len() {
        let price = series.prices()[t];
        let pe = price / series.earnings()[t];
        let a = baseline[t];
        let action = if pe <= a * (1.0 - tr) && pos.cash > 0.0 {
            Action::Buy
        } else if pe >= a * (1.0 + tr) && pos.cash == 0.0 {
            Action::Sell
        } else {
            Action::Hold
        };
        pos = pos.apply(action, price, config.commission);
        entries.push(LedgerEntry {
            date: series.dates()[t],
            action,
            price,
            baseline: a,
            cash: pos.cash,
            shares: pos.shares,
        });
    }
    let ledger = TradeLedger {
        initial_cash: config.initial_cash,
        entries,
    };
    let profit = ledger.profit();
    Ok(StrategyRun {
        profit,
        profit_pct: 100.0 * profit / config.initial_cash,
        ledger,
    })
}

/// Re-executes a fixed action sequence and returns its profit.
pub fn replay(actions: &[Action], prices: &[f64], commission: f64, initial_cash: f64) -> f64 {
    let mut pos = Position {
        cash: initial_cash,
        shares: 0.0,
    };
    for (&a, &p) in actions.iter().zip(prices) {
        pos = pos.apply(a, p, commission);
    }
    match prices.last() {
        Some(last) => pos.cash + last * pos.shares - initial_cash,
        None => 0.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRun {
    pub shares: f64,
    pub profit: f64,
    pub profit_pct: f64,
}

/// Buy with all cash at the first close and hold to the last.
pub fn buy_and_hold(prices: &[f64], config: &StrategyConfig) -> Result<BenchmarkRun> {
    let (first, last) = match (prices.first(), prices.last()) {
        (Some(f), Some(l)) => (*f, *l),
        _ => return Err(Error::EmptyPartition("test window")),
    };
    let start = Position {
        cash: config.initial_cash,
        shares: 0.0,
    }
    .apply(Action::Buy, first, config.commission);
    let profit = 0.0 + last * start.shares - config.initial_cash;
    Ok(BenchmarkRun {
        shares: start.shares,
        profit,
        profit_pct: 100.0 * profit / config.initial_cash,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Win,
    Draw,
    Lose,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub outcome: Outcome,
    /// Strategy percent profit minus benchmark percent profit.
    pub x: f64,
}

/// Win/draw/lose of a strategy against the benchmark, from percent profits on
/// the same window and initial cash.
pub fn compare(strategy_pct: f64, benchmark_pct: f64) -> Comparison {
    let outcome = if strategy_pct > benchmark_pct {
        Outcome::Win
    } else if strategy_pct == benchmark_pct {
        Outcome::Draw
    } else {
        Outcome::Lose
    };
    Comparison {
        outcome,
        x: strategy_pct - benchmark_pct,
    }
}
