//! Self-contained SVG charts: trading signals over the observed PE and price
//! paths, and bootstrap histograms.

use std::fmt::Write as _;

use pe_dbn::portfolio::Histogram;
use pe_dbn::trading::{Action, LedgerEntry};

const W: f64 = 900.0;
const PANEL_H: f64 = 220.0;
const MARGIN: f64 = 50.0;

struct Scale {
    lo: f64,
    hi: f64,
    top: f64,
    height: f64,
}

impl Scale {
    fn new(values: impl Iterator<Item = f64>, top: f64, height: f64) -> Self {
        let (mut lo, mut hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| {
            (l.min(v), h.max(v))
        });
        if !(hi > lo) {
            lo -= 1.0;
            hi += 1.0;
        }
        let pad = 0.05 * (hi - lo);
        Scale {
            lo: lo - pad,
            hi: hi + pad,
            top,
            height,
        }
    }

    fn y(&self, v: f64) -> f64 {
        self.top + self.height * (self.hi - v) / (self.hi - self.lo)
    }
}

fn x_at(t: usize, len: usize) -> f64 {
    let span = W - 2.0 * MARGIN;
    MARGIN
        + if len > 1 {
            span * t as f64 / (len - 1) as f64
        } else {
            span / 2.0
        }
}

fn polyline(out: &mut String, points: impl Iterator<Item = (f64, f64)>, style: &str) {
    let pts: Vec<String> = points.map(|(x, y)| format!("{x:.1},{y:.1}")).collect();
    let _ = writeln!(
        out,
        r#"<polyline fill="none" {style} points="{}"/>"#,
        pts.join(" ")
    );
}

fn axis_labels(out: &mut String, s: &Scale, label: &str) {
    let _ = writeln!(
        out,
        r##"<rect x="{MARGIN}" y="{:.1}" width="{:.1}" height="{:.1}" fill="none" stroke="#999"/>"##,
        s.top,
        W - 2.0 * MARGIN,
        s.height
    );
    let _ = writeln!(
        out,
        r#"<text x="4" y="{:.1}" font-size="11">{:.2}</text>"#,
        s.top + 10.0,
        s.hi
    );
    let _ = writeln!(
        out,
        r#"<text x="4" y="{:.1}" font-size="11">{:.2}</text>"#,
        s.top + s.height,
        s.lo
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" font-size="12">{label}</text>"#,
        MARGIN + 4.0,
        s.top + 14.0
    );
}

fn markers(out: &mut String, entries: &[LedgerEntry], y_of: impl Fn(usize) -> f64) {
    for (t, e) in entries.iter().enumerate() {
        let (x, y) = (x_at(t, entries.len()), y_of(t));
        match e.action {
            Action::Buy => {
                let _ = writeln!(
                    out,
                    r#"<circle cx="{x:.1}" cy="{y:.1}" r="5" fill="none" stroke="green" stroke-width="2"/>"#
                );
            }
            Action::Sell => {
                let _ = writeln!(
                    out,
                    r#"<path d="M{:.1},{:.1} L{:.1},{:.1} M{:.1},{:.1} L{:.1},{:.1}" stroke="black" stroke-width="2"/>"#,
                    x - 5.0,
                    y - 5.0,
                    x + 5.0,
                    y + 5.0,
                    x - 5.0,
                    y + 5.0,
                    x + 5.0,
                    y - 5.0
                );
            }
            Action::Hold => {}
        }
    }
}

/// Observed PE with the baseline and its band on top, price below. Buys are
/// green circles and sells black crosses.
pub fn trade_chart(
    title: &str,
    entries: &[LedgerEntry],
    earnings: &[f64],
    threshold: f64,
) -> String {
    let len = entries.len();
    let pe: Vec<f64> = entries
        .iter()
        .zip(earnings)
        .map(|(e, q)| e.price / q)
        .collect();
    let upper: Vec<f64> = entries
        .iter()
        .map(|e| e.baseline * (1.0 + threshold))
        .collect();
    let lower: Vec<f64> = entries
        .iter()
        .map(|e| e.baseline * (1.0 - threshold))
        .collect();
    let top = Scale::new(
        pe.iter().chain(&upper).chain(&lower).copied(),
        MARGIN,
        PANEL_H,
    );
    let bottom = Scale::new(
        entries.iter().map(|e| e.price),
        2.0 * MARGIN + PANEL_H,
        PANEL_H,
    );
    let height = 3.0 * MARGIN + 2.0 * PANEL_H;

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{height}" viewBox="0 0 {W} {height}">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{MARGIN}" y="30" font-size="15">{}</text>"#,
        escape(title)
    );
    axis_labels(&mut out, &top, "observed PE, baseline and band");
    axis_labels(&mut out, &bottom, "price");
    polyline(
        &mut out,
        (0..len).map(|t| (x_at(t, len), top.y(pe[t]))),
        r##"stroke="#1f77b4""##,
    );
    polyline(
        &mut out,
        entries
            .iter()
            .enumerate()
            .map(|(t, e)| (x_at(t, len), top.y(e.baseline))),
        r##"stroke="#d62728""##,
    );
    for band in [&upper, &lower] {
        polyline(
            &mut out,
            band.iter()
                .enumerate()
                .map(|(t, v)| (x_at(t, len), top.y(*v))),
            r##"stroke="#d62728" stroke-dasharray="4 3""##,
        );
    }
    polyline(
        &mut out,
        entries
            .iter()
            .enumerate()
            .map(|(t, e)| (x_at(t, len), bottom.y(e.price))),
        r##"stroke="#555""##,
    );
    markers(&mut out, entries, |t| top.y(pe[t]));
    markers(&mut out, entries, |t| bottom.y(entries[t].price));
    out.push_str("</svg>\n");
    out
}

/// Bar chart of bootstrap resample means with a marker at zero.
pub fn histogram_chart(title: &str, h: &Histogram) -> String {
    let height = 2.0 * MARGIN + PANEL_H;
    let max = h.counts.iter().copied().max().unwrap_or(0).max(1) as f64;
    let (lo, hi) = (h.edges[0], h.edges[h.edges.len() - 1]);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let x_of = |v: f64| MARGIN + (W - 2.0 * MARGIN) * (v - lo) / span;
    let bar_w = (W - 2.0 * MARGIN) / h.counts.len() as f64;

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{height}" viewBox="0 0 {W} {height}">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{MARGIN}" y="30" font-size="15">{}</text>"#,
        escape(title)
    );
    for (k, &c) in h.counts.iter().enumerate() {
        let bh = PANEL_H * c as f64 / max;
        let _ = writeln!(
            out,
            r##"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{bh:.1}" fill="#4c78a8" stroke="white"/>"##,
            MARGIN + bar_w * k as f64,
            MARGIN + PANEL_H - bh,
            bar_w
        );
    }
    if lo <= 0.0 && 0.0 <= hi {
        let x = x_of(0.0);
        let _ = writeln!(
            out,
            r#"<line x1="{x:.1}" y1="{MARGIN}" x2="{x:.1}" y2="{:.1}" stroke="black" stroke-dasharray="4 3"/>"#,
            MARGIN + PANEL_H
        );
    }
    let base = MARGIN + PANEL_H + 16.0;
    let _ = writeln!(
        out,
        r#"<text x="{MARGIN}" y="{base}" font-size="11">{lo:.2}</text>"#
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{base}" font-size="11" text-anchor="end">{hi:.2}</text>"#,
        W - MARGIN
    );
    out.push_str("</svg>\n");
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}
