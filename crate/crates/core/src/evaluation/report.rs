use std::io::{Read, Write};

use serde::Serialize;

use super::backtest::SkipSummary;
use super::gof::{mean_abs_deviation_pp, GofScores};
use super::grid::{ranked_by, GridResult, Measure};
use crate::error::{Error, Result};
use crate::refclass::{ClassParams, Method, DEFAULT_MIN_CLASS};

pub const RESULTS_HEADER: [&str; 15] = [
    "predictor",
    "window",
    "size",
    "method",
    "horizon",
    "m",
    "delta_q",
    "delta_q_rank",
    "ks",
    "ks_rank",
    "cvm",
    "cvm_rank",
    "skipped_small",
    "skipped_window",
    "skipped_missing",
];

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_err(e: csv::Error) -> Error {
    Error::Grid(e.to_string())
}

/// Writes grid results in the fixed results-file layout, in the given order.
pub fn write_results_csv<W: Write>(results: &[GridResult], writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(RESULTS_HEADER).map_err(csv_err)?;
    for r in results {
        let p = &r.params;
        let s = &r.scores;
        out.write_record([
            p.predictor.to_string(),
            p.window.to_string(),
            fmt_opt(p.size),
            p.method.to_string(),
            p.horizon.to_string(),
            r.m.to_string(),
            fmt_opt(s.delta_q),
            s.delta_q_rank.to_string(),
            fmt_opt(s.ks),
            s.ks_rank.to_string(),
            fmt_opt(s.cvm),
            s.cvm_rank.to_string(),
            r.skips.small.to_string(),
            r.skips.window.to_string(),
            r.skips.missing.to_string(),
        ])
        .map_err(csv_err)?;
    }
    out.flush().map_err(|e| Error::Grid(e.to_string()))
}

/// Parses a results file written by [`write_results_csv`].
pub fn read_results_csv<R: Read>(reader: R) -> Result<Vec<GridResult>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(csv_err)?.clone();
    if headers.iter().ne(RESULTS_HEADER.iter().copied()) {
        return Err(Error::Grid(format!(
            "unexpected results header {:?}",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row.map_err(csv_err)?;
        let line = i + 2;
        let bad = |col: &str| Error::Grid(format!("results row {line}: bad {col}"));
        let field = |k: usize| row.get(k).unwrap_or("");
        let num = |k: usize| -> Result<Option<f64>> {
            let s = field(k);
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| bad(RESULTS_HEADER[k]))
            }
        };
        let int = |k: usize| -> Result<u64> { field(k).parse().map_err(|_| bad(RESULTS_HEADER[k])) };
        let method: Method = field(3).parse()?;
        let params = ClassParams {
            predictor: field(0).parse()?,
            window: int(1)? as u32,
            size: num(2)?,
            method,
            horizon: int(4)? as u32,
            min_class: DEFAULT_MIN_CLASS,
            exclude_self: false,
        };
        out.push(GridResult {
            params,
            m: int(5)? as usize,
            skips: SkipSummary {
                small: int(12)?,
                window: int(13)?,
                missing: int(14)?,
            },
            lookahead_violations: 0,
            scores: GofScores {
                delta_q: num(6)?,
                delta_q_rank: int(7)? as usize,
                ks: num(8)?,
                ks_rank: int(9)? as usize,
                cvm: num(10)?,
                cvm_rank: int(11)? as usize,
            },
        });
    }
    Ok(out)
}

/// One line of the ranking report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankRow {
    pub horizon: u32,
    pub predictor: String,
    pub label: String,
    pub method: Method,
    pub window: u32,
    pub size: Option<f64>,
    pub m: usize,
    pub delta_q: Option<f64>,
    pub delta_q_rank: usize,
    pub ks: Option<f64>,
    pub ks_rank: usize,
    pub cvm: Option<f64>,
    pub cvm_rank: usize,
    /// `delta_q / 9` in percentage points.
    pub mean_abs_dev_pp: Option<f64>,
}

impl RankRow {
    pub fn from_result(r: &GridResult) -> Self {
        RankRow {
            horizon: r.params.horizon,
            predictor: r.params.predictor.to_string(),
            label: match r.params.method {
                Method::Mauboussin => "sales (Mauboussin)".to_string(),
                _ => r.params.predictor.label(),
            },
            method: r.params.method,
            window: r.params.window,
            size: r.params.size,
            m: r.m,
            delta_q: r.scores.delta_q,
            delta_q_rank: r.scores.delta_q_rank,
            ks: r.scores.ks,
            ks_rank: r.scores.ks_rank,
            cvm: r.scores.cvm,
            cvm_rank: r.scores.cvm_rank,
            mean_abs_dev_pp: r.scores.delta_q.map(mean_abs_deviation_pp),
        }
    }

    /// Ranked rows per horizon, best first, optionally the top `top` of each.
    pub fn report(results: &[GridResult], by: Measure, top: Option<usize>) -> Vec<RankRow> {
        let sorted = ranked_by(results, by);
        let mut out = Vec::new();
        let mut current = None;
        let mut taken = 0;
        for r in &sorted {
            if current != Some(r.params.horizon) {
                current = Some(r.params.horizon);
                taken = 0;
            }
            if top.is_some_and(|t| taken >= t) {
                continue;
            }
            taken += 1;
            out.push(RankRow::from_result(r));
        }
        out
    }
}

/// CSV form of the ranking report, including the derived per-level deviation.
pub fn write_rank_report<W: Write>(rows: &[RankRow], writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record([
        "horizon",
        "predictor",
        "label",
        "method",
        "window",
        "size",
        "m",
        "delta_q",
        "delta_q_rank",
        "ks",
        "ks_rank",
        "cvm",
        "cvm_rank",
        "mean_abs_dev_pp",
    ])
    .map_err(csv_err)?;
    for r in rows {
        out.write_record([
            r.horizon.to_string(),
            r.predictor.clone(),
            r.label.clone(),
            r.method.to_string(),
            r.window.to_string(),
            fmt_opt(r.size),
            r.m.to_string(),
            fmt_opt(r.delta_q),
            r.delta_q_rank.to_string(),
            fmt_opt(r.ks),
            r.ks_rank.to_string(),
            fmt_opt(r.cvm),
            r.cvm_rank.to_string(),
            r.mean_abs_dev_pp.map(|v| format!("{v:.2}")).unwrap_or_default(),
        ])
        .map_err(csv_err)?;
    }
    out.flush().map_err(|e| Error::Grid(e.to_string()))
}
