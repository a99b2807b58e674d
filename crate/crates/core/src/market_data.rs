//! Price and quarterly-earnings ingestion, trailing-twelve-month earnings and
//! the train/test split.
//!
//! File formats (UTF-8, LF or CRLF, ISO-8601 dates):
//!
//! ```text
//! date,close
//! 2012-01-03,41.25
//!
//! report_date,quarterly_earnings
//! 2011-11-10,0.61
//! ```
//!
//! Earnings dates must be the dates the figures became public. A quarter
//! counts towards `E_t` from its report date onwards.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{Datelike, Days, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ObservationSeries;

/// Daily closing prices, ascending by date.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSeries {
    pub dates: Vec<NaiveDate>,
    pub closes: Vec<f64>,
}

/// Quarterly earnings keyed by report date, ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuarterlyEarnings {
    pub report_dates: Vec<NaiveDate>,
    pub values: Vec<f64>,
}

/// Trailing-twelve-month earnings on trading dates.
#[derive(Debug, Clone, PartialEq)]
pub struct TtmSeries {
    pub dates: Vec<NaiveDate>,
    pub values: Vec<f64>,
    /// Leading trading dates dropped for lack of four reported quarters.
    pub trimmed: usize,
}

/// Training covers dates up to and including `train_end`; the rest is test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_end: NaiveDate,
}

const PRICE_HEADER: [&str; 2] = ["date", "close"];
const EARNINGS_HEADER: [&str; 2] = ["report_date", "quarterly_earnings"];

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_error(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Reads a two-column dated CSV, returning rows sorted by date.
fn read_dated_pairs<R: Read>(
    reader: R,
    path: &Path,
    header: [&str; 2],
) -> Result<Vec<(NaiveDate, f64, u64)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let found = rdr
        .headers()
        .map_err(|e| parse_error(path, 1, e.to_string()))?
        .clone();
    if found.len() != 2 || found.get(0) != Some(header[0]) || found.get(1) != Some(header[1]) {
        return Err(parse_error(
            path,
            1,
            format!(
                "expected header `{},{}`, found `{}`",
                header[0],
                header[1],
                found.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_error(path, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 2 {
            return Err(parse_error(
                path,
                line,
                format!("expected 2 fields, found {}", record.len()),
            ));
        }
        let date = NaiveDate::parse_from_str(&record[0], "%Y-%m-%d")
            .map_err(|e| parse_error(path, line, format!("bad date `{}`: {e}", &record[0])))?;
        let value: f64 = record[1]
            .parse()
            .map_err(|e| parse_error(path, line, format!("bad number `{}`: {e}", &record[1])))?;
        if !value.is_finite() {
            return Err(parse_error(
                path,
                line,
                format!("non-finite value `{}`", &record[1]),
            ));
        }
        rows.push((date, value, line));
    }
    rows.sort_by_key(|r| r.0);
    if let Some(w) = rows.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(parse_error(
            path,
            w[1].2.max(w[0].2),
            format!("duplicate date {}", w[0].0),
        ));
    }
    Ok(rows)
}

pub fn read_price_csv<R: Read>(reader: R, path: &Path) -> Result<PriceSeries> {
    let rows = read_dated_pairs(reader, path, PRICE_HEADER)?;
    if let Some(r) = rows.iter().find(|r| r.1 <= 0.0) {
        return Err(parse_error(
            path,
            r.2,
            format!("non-positive price {}", r.1),
        ));
    }
    Ok(PriceSeries {
        dates: rows.iter().map(|r| r.0).collect(),
        closes: rows.iter().map(|r| r.1).collect(),
    })
}

pub fn load_price_csv(path: impl AsRef<Path>) -> Result<PriceSeries> {
    let path = path.as_ref();
    read_price_csv(open(path)?, path)
}

pub fn read_earnings_csv<R: Read>(reader: R, path: &Path) -> Result<QuarterlyEarnings> {
    let rows = read_dated_pairs(reader, path, EARNINGS_HEADER)?;
    Ok(QuarterlyEarnings {
        report_dates: rows.iter().map(|r| r.0).collect(),
        values: rows.iter().map(|r| r.1).collect(),
    })
}

pub fn load_earnings_csv(path: impl AsRef<Path>) -> Result<QuarterlyEarnings> {
    let path = path.as_ref();
    read_earnings_csv(open(path)?, path)
}

fn write_pairs(path: &Path, header: [&str; 2], dates: &[NaiveDate], values: &[f64]) -> Result<()> {
    let io = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = String::with_capacity(dates.len() * 24);
    out.push_str(&header.join(","));
    out.push('\n');
    for (d, v) in dates.iter().zip(values) {
        // `{}` on f64 prints the shortest string that parses back exactly
        out.push_str(&format!("{},{}\n", d.format("%Y-%m-%d"), v));
    }
    let mut f = File::create(path).map_err(io)?;
    f.write_all(out.as_bytes()).map_err(io)
}

pub fn write_price_csv(path: impl AsRef<Path>, prices: &PriceSeries) -> Result<()> {
    write_pairs(path.as_ref(), PRICE_HEADER, &prices.dates, &prices.closes)
}

pub fn write_earnings_csv(path: impl AsRef<Path>, earnings: &QuarterlyEarnings) -> Result<()> {
    write_pairs(
        path.as_ref(),
        EARNINGS_HEADER,
        &earnings.report_dates,
        &earnings.values,
    )
}

/// `E_t` = sum of the four most recent quarters reported on or before `t`.
///
/// Trading dates with fewer than four prior reports are dropped from the
/// front. Any non-positive `E_t` on a usable date rejects the instrument.
pub fn ttm_earnings(
    quarterly: &QuarterlyEarnings,
    trading_dates: &[NaiveDate],
) -> Result<TtmSeries> {
    if quarterly.report_dates.len() != quarterly.values.len() {
        return Err(Error::Earnings(
            "report dates and values differ in length".into(),
        ));
    }
    if quarterly.report_dates.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Earnings(
            "report dates must be strictly increasing".into(),
        ));
    }
    let mut dates = Vec::with_capacity(trading_dates.len());
    let mut values = Vec::with_capacity(trading_dates.len());
    let mut trimmed = 0;
    for &t in trading_dates {
        let reported = quarterly.report_dates.partition_point(|d| *d <= t);
        if reported < 4 {
            if dates.is_empty() {
                trimmed += 1;
                continue;
            }
            return Err(Error::Earnings(format!(
                "trading dates not ascending at {t}"
            )));
        }
        let e: f64 = quarterly.values[reported - 4..reported].iter().sum();
        if e <= 0.0 {
            return Err(Error::Earnings(format!(
                "trailing earnings {e} on {t} are not positive; the model requires positive earnings"
            )));
        }
        dates.push(t);
        values.push(e);
    }
    if trimmed > 0 {
        log::warn!("dropped {trimmed} leading trading dates with fewer than 4 reported quarters");
    }
    if dates.is_empty() {
        return Err(Error::Earnings(
            "no trading date has four reported quarters".into(),
        ));
    }
    Ok(TtmSeries {
        dates,
        values,
        trimmed,
    })
}

/// Observations on dates present in both series, split at `split.train_end`.
pub fn build_observations(
    prices: &PriceSeries,
    ttm: &TtmSeries,
    split: SplitSpec,
) -> Result<(ObservationSeries, ObservationSeries)> {
    let full = align(prices, ttm)?;
    let (train, test) = full.split_after(split.train_end);
    if train.is_empty() {
        return Err(Error::EmptyPartition("training window"));
    }
    if test.is_empty() {
        return Err(Error::EmptyPartition("test window"));
    }
    Ok((train, test))
}

/// Joins prices and TTM earnings on common dates.
pub fn align(prices: &PriceSeries, ttm: &TtmSeries) -> Result<ObservationSeries> {
    let (mut dates, mut p, mut e) = (Vec::new(), Vec::new(), Vec::new());
    let mut k = 0;
    for (d, close) in prices.dates.iter().zip(&prices.closes) {
        while k < ttm.dates.len() && ttm.dates[k] < *d {
            k += 1;
        }
        if k < ttm.dates.len() && ttm.dates[k] == *d {
            dates.push(*d);
            p.push(*close);
            e.push(ttm.values[k]);
        }
    }
    ObservationSeries::new(dates, p, e)
}

/// `count` consecutive weekdays starting on or after `start`.
pub fn trading_days(start: NaiveDate, count: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(count);
    let mut d = start;
    while out.len() < count {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d = d + Days::new(1);
    }
    out
}
