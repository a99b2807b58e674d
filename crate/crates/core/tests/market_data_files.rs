use chrono::NaiveDate;
use pe_dbn::market_data::{
    build_observations, load_earnings_csv, load_price_csv, trading_days, ttm_earnings,
    write_earnings_csv, write_price_csv, PriceSeries, QuarterlyEarnings, SplitSpec,
};
use pe_dbn::Error;
use proptest::prelude::*;

fn start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2011, 3, 1).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn price_file_round_trips(closes in prop::collection::vec(1e-3f64..1e6, 1..300)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        let prices = PriceSeries { dates: trading_days(start(), closes.len()), closes };
        write_price_csv(&path, &prices).unwrap();
        prop_assert_eq!(load_price_csv(&path).unwrap(), prices);
    }

    #[test]
    fn earnings_file_round_trips(values in prop::collection::vec(-50.0f64..50.0, 1..40)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.csv");
        let report_dates = (0..values.len()).map(|q| start() + chrono::Months::new(3 * q as u32)).collect();
        let earnings = QuarterlyEarnings { report_dates, values };
        write_earnings_csv(&path, &earnings).unwrap();
        prop_assert_eq!(load_earnings_csv(&path).unwrap(), earnings);
    }
}

#[test]
fn pipeline_from_files_to_observations() {
    let dir = tempfile::tempdir().unwrap();
    let dates = trading_days(start(), 400);
    let prices = PriceSeries {
        closes: (0..400).map(|k| 20.0 + (k as f64 * 0.1).sin()).collect(),
        dates: dates.clone(),
    };
    let earnings = QuarterlyEarnings {
        report_dates: (0..8)
            .map(|q| start() - chrono::Months::new(12) + chrono::Months::new(3 * q))
            .collect(),
        values: vec![0.5, 0.5, 0.5, 0.5, 0.6, 0.6, 0.6, 0.6],
    };
    write_price_csv(dir.path().join("p.csv"), &prices).unwrap();
    write_earnings_csv(dir.path().join("e.csv"), &earnings).unwrap();
    let prices = load_price_csv(dir.path().join("p.csv")).unwrap();
    let earnings = load_earnings_csv(dir.path().join("e.csv")).unwrap();
    let ttm = ttm_earnings(&earnings, &prices.dates).unwrap();
    let split = SplitSpec {
        train_end: dates[199],
    };
    let (train, test) = build_observations(&prices, &ttm, split).unwrap();
    assert_eq!(train.len() + test.len(), 400 - ttm.trimmed);
    assert!(train.dates().last().unwrap() <= &split.train_end);
    assert!(test.dates()[0] > split.train_end);
    for (p, e) in train.prices().iter().zip(train.earnings()) {
        assert!(*p > 0.0 && *e > 0.0);
    }
}

#[test]
fn missing_file_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    match load_price_csv(dir.path().join("absent.csv")) {
        Err(Error::Io { .. }) => {}
        other => panic!("expected io error, got {other:?}"),
    }
}

#[test]
fn malformed_row_reports_its_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.csv");
    std::fs::write(&path, "date,close\n2012-01-03,10\n2012-01-04,abc\n").unwrap();
    match load_price_csv(&path) {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
        other => panic!("expected parse error, got {other:?}"),
    }
}
