//! Predictor variables and forward growth outcomes per firm-year record.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::forecast::quantile_sorted;
use crate::panel::Panel;

/// Longest look-back for the k-year predictors.
pub const MAX_LOOKBACK: u8 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PredictorId {
    TotalAssets,
    OperatingMargin,
    Sales,
    ShareholderEquity,
    MajorGroup,
    IndustryGroup,
    Beta,
    PbRatio,
    PeRatio,
    /// Compound annual sales growth over the past k years, in %.
    PastSalesCagr(u8),
    /// Operating margin change over the past k years, in pp per year.
    OpMarginDelta(u8),
}

impl PredictorId {
    pub fn past_sales_cagr(k: u8) -> Result<Self> {
        check_lookback(k)?;
        Ok(PredictorId::PastSalesCagr(k))
    }

    pub fn op_margin_delta(k: u8) -> Result<Self> {
        check_lookback(k)?;
        Ok(PredictorId::OpMarginDelta(k))
    }

    /// Every predictor of the summary table, in its row order.
    pub fn all() -> Vec<PredictorId> {
        use PredictorId::*;
        let mut out = vec![
            TotalAssets,
            OperatingMargin,
            Sales,
            ShareholderEquity,
            MajorGroup,
            IndustryGroup,
            Beta,
            PbRatio,
            PeRatio,
        ];
        out.extend((1..=MAX_LOOKBACK).map(PastSalesCagr));
        out.extend((1..=MAX_LOOKBACK).map(OpMarginDelta));
        out
    }

    /// The 27 numeric predictors usable by the similarity selector.
    pub fn numeric() -> Vec<PredictorId> {
        PredictorId::all()
            .into_iter()
            .filter(|p| !p.is_categorical())
            .collect()
    }

    pub fn is_categorical(self) -> bool {
        matches!(self, PredictorId::MajorGroup | PredictorId::IndustryGroup)
    }

    fn column(self) -> usize {
        use PredictorId::*;
        match self {
            TotalAssets => 0,
            OperatingMargin => 1,
            Sales => 2,
            ShareholderEquity => 3,
            MajorGroup => 4,
            IndustryGroup => 5,
            Beta => 6,
            PbRatio => 7,
            PeRatio => 8,
            PastSalesCagr(k) => 8 + k as usize,
            OpMarginDelta(k) => 18 + k as usize,
        }
    }

    /// Human-readable label as used in report tables.
    pub fn label(self) -> String {
        use PredictorId::*;
        match self {
            TotalAssets => "total assets".into(),
            OperatingMargin => "operating margin".into(),
            Sales => "sales".into(),
            ShareholderEquity => "shareholder equity".into(),
            MajorGroup => "major group".into(),
            IndustryGroup => "industry group".into(),
            Beta => "beta".into(),
            PbRatio => "price-to-book ratio".into(),
            PeRatio => "price-to-earnings ratio".into(),
            PastSalesCagr(k) => format!("past {k}-year sales CAGR"),
            OpMarginDelta(k) => format!("{k}-year operating margin delta"),
        }
    }
}

fn check_lookback(k: u8) -> Result<()> {
    if (1..=MAX_LOOKBACK).contains(&k) {
        Ok(())
    } else {
        Err(Error::InvalidParams(format!(
            "look-back {k} outside 1..={MAX_LOOKBACK}"
        )))
    }
}

impl fmt::Display for PredictorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use PredictorId::*;
        match self {
            TotalAssets => f.write_str("total_assets"),
            OperatingMargin => f.write_str("operating_margin"),
            Sales => f.write_str("sales"),
            ShareholderEquity => f.write_str("shareholder_equity"),
            MajorGroup => f.write_str("major_group"),
            IndustryGroup => f.write_str("industry_group"),
            Beta => f.write_str("beta"),
            PbRatio => f.write_str("pb_ratio"),
            PeRatio => f.write_str("pe_ratio"),
            PastSalesCagr(k) => write!(f, "sales_cagr_{k}"),
            OpMarginDelta(k) => write!(f, "op_margin_delta_{k}"),
        }
    }
}

impl FromStr for PredictorId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        use PredictorId::*;
        let unknown = || Error::UnknownPredictor(s.to_string());
        let parse_k = |rest: &str| -> Result<u8> {
            let k: u8 = rest.parse().map_err(|_| unknown())?;
            check_lookback(k).map_err(|_| unknown())?;
            Ok(k)
        };
        Ok(match s {
            "total_assets" => TotalAssets,
            "operating_margin" => OperatingMargin,
            "sales" => Sales,
            "shareholder_equity" => ShareholderEquity,
            "major_group" => MajorGroup,
            "industry_group" => IndustryGroup,
            "beta" => Beta,
            "pb_ratio" => PbRatio,
            "pe_ratio" => PeRatio,
            _ => {
                if let Some(rest) = s.strip_prefix("sales_cagr_") {
                    PastSalesCagr(parse_k(rest)?)
                } else if let Some(rest) = s.strip_prefix("op_margin_delta_") {
                    OpMarginDelta(parse_k(rest)?)
                } else {
                    return Err(unknown());
                }
            }
        })
    }
}

impl Serialize for PredictorId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> serde::Deserialize<'de> for PredictorId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PredictorValue {
    Numeric(f64),
    Group(u16),
    Missing,
}

/// First two SIC digits.
pub fn major_group(sic: u16) -> u16 {
    sic / 100
}

/// First three SIC digits.
pub fn industry_group(sic: u16) -> u16 {
    sic / 10
}

/// EBIT over sales in %; missing when either input is missing or sales is 0.
pub fn operating_margin(ebit: Option<f64>, sales: Option<f64>) -> Option<f64> {
    match (ebit, sales) {
        (Some(e), Some(s)) if s != 0.0 => Some(100.0 * e / s),
        _ => None,
    }
}

/// Compound annual growth in % from `start` to `end` over `years` years.
/// Missing when `start <= 0`; a zero `end` gives exactly -100.
pub fn cagr(start: f64, end: f64, years: u32) -> Option<f64> {
    if start.is_nan() || start <= 0.0 || years == 0 {
        return None;
    }
    let ratio = end / start;
    let growth = if years == 1 {
        ratio
    } else {
        ratio.powf(1.0 / years as f64)
    };
    Some(100.0 * (growth - 1.0))
}

fn record_margin(panel: &Panel, idx: usize) -> Option<f64> {
    let r = panel.record(idx);
    operating_margin(r.ebit, r.sales)
}

fn growth_between(panel: &Panel, from: usize, to: usize, years: u32) -> Option<f64> {
    cagr(panel.record(from).sales?, panel.record(to).sales?, years)
}

pub(crate) fn past_cagr_at(panel: &Panel, idx: usize, k: u8) -> Option<f64> {
    let earlier = panel.shifted(idx, -(k as i32))?;
    growth_between(panel, earlier, idx, k as u32)
}

pub(crate) fn forward_cagr_at(panel: &Panel, idx: usize, h: u32) -> Option<f64> {
    let later = panel.shifted(idx, h as i32)?;
    growth_between(panel, idx, later, h)
}

pub(crate) fn margin_delta_at(panel: &Panel, idx: usize, k: u8) -> Option<f64> {
    let earlier = panel.shifted(idx, -(k as i32))?;
    let now = record_margin(panel, idx)?;
    let then = record_margin(panel, earlier)?;
    Some((now - then) / k as f64)
}

fn locate(panel: &Panel, firm: &str, year: i32) -> Option<usize> {
    panel.find(panel.firm_index(firm)?, year)
}

/// Sales CAGR of `firm` from `t - k` to `t`, in %.
pub fn past_sales_cagr(panel: &Panel, firm: &str, t: i32, k: u8) -> Option<f64> {
    past_cagr_at(panel, locate(panel, firm, t)?, k)
}

/// Sales CAGR of `firm` from `t` to `t + h`, in %.
pub fn forward_sales_cagr(panel: &Panel, firm: &str, t: i32, h: u32) -> Option<f64> {
    forward_cagr_at(panel, locate(panel, firm, t)?, h)
}

/// `(margin_t - margin_{t-k}) / k`, percentage points per year.
pub fn op_margin_delta(panel: &Panel, firm: &str, t: i32, k: u8) -> Option<f64> {
    margin_delta_at(panel, locate(panel, firm, t)?, k)
}

#[derive(Debug, Clone)]
enum Column {
    Numeric(Vec<Option<f64>>),
    Group(Vec<Option<u16>>),
}

/// All predictor values, one column per [`PredictorId`], aligned with the
/// panel's record order.
#[derive(Debug, Clone)]
pub struct PredictorTable {
    columns: Vec<Column>,
    len: usize,
}

impl PredictorTable {
    pub fn build(panel: &Panel) -> Self {
        let ids = PredictorId::all();
        let columns = ids
            .par_iter()
            .map(|&id| materialize(panel, id))
            .collect();
        PredictorTable {
            columns,
            len: panel.len(),
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn value(&self, id: PredictorId, idx: usize) -> PredictorValue {
        match &self.columns[id.column()] {
            Column::Numeric(v) => v[idx].map_or(PredictorValue::Missing, PredictorValue::Numeric),
            Column::Group(v) => v[idx].map_or(PredictorValue::Missing, PredictorValue::Group),
        }
    }

    /// Sort key of a predictor value: the number itself, or the group code.
    pub fn key(&self, id: PredictorId, idx: usize) -> Option<f64> {
        match &self.columns[id.column()] {
            Column::Numeric(v) => v[idx],
            Column::Group(v) => v[idx].map(f64::from),
        }
    }

    pub fn missing_count(&self, id: PredictorId) -> usize {
        match &self.columns[id.column()] {
            Column::Numeric(v) => v.iter().filter(|x| x.is_none()).count(),
            Column::Group(v) => v.iter().filter(|x| x.is_none()).count(),
        }
    }
}

fn materialize(panel: &Panel, id: PredictorId) -> Column {
    use PredictorId::*;
    let n = panel.len();
    let numeric = |f: &(dyn Fn(usize) -> Option<f64> + Sync)| {
        Column::Numeric(
            (0..n)
                .into_par_iter()
                .map(|i| f(i).filter(|v| v.is_finite()))
                .collect(),
        )
    };
    match id {
        TotalAssets => numeric(&|i| panel.record(i).total_assets),
        OperatingMargin => numeric(&|i| record_margin(panel, i)),
        Sales => numeric(&|i| panel.record(i).sales),
        ShareholderEquity => numeric(&|i| panel.record(i).shareholder_equity),
        Beta => numeric(&|i| panel.record(i).beta),
        PbRatio => numeric(&|i| panel.record(i).pb_ratio),
        PeRatio => numeric(&|i| panel.record(i).pe_ratio),
        PastSalesCagr(k) => numeric(&|i| past_cagr_at(panel, i, k)),
        OpMarginDelta(k) => numeric(&|i| margin_delta_at(panel, i, k)),
        MajorGroup => Column::Group(panel.records().iter().map(|r| r.sic.map(major_group)).collect()),
        IndustryGroup => {
            Column::Group(panel.records().iter().map(|r| r.sic.map(industry_group)).collect())
        }
    }
}

/// Forward sales CAGR in % per horizon, aligned with the panel's records.
#[derive(Debug, Clone, Default)]
pub struct OutcomeTable {
    by_horizon: BTreeMap<u32, Vec<Option<f64>>>,
}

impl OutcomeTable {
    pub fn build(panel: &Panel, horizons: &[u32]) -> Self {
        let by_horizon = horizons
            .iter()
            .filter(|&&h| h > 0)
            .map(|&h| {
                let column = (0..panel.len())
                    .into_par_iter()
                    .map(|i| forward_cagr_at(panel, i, h))
                    .collect();
                (h, column)
            })
            .collect();
        OutcomeTable { by_horizon }
    }

    pub fn horizons(&self) -> impl Iterator<Item = u32> + '_ {
        self.by_horizon.keys().copied()
    }

    pub fn column(&self, h: u32) -> Result<&[Option<f64>]> {
        self.by_horizon
            .get(&h)
            .map(Vec::as_slice)
            .ok_or(Error::HorizonNotBuilt(h))
    }

    pub fn get(&self, h: u32, idx: usize) -> Option<f64> {
        self.by_horizon.get(&h).and_then(|c| c[idx])
    }
}

/// Panel plus its derived predictor and outcome tables; read-only once built.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub panel: Panel,
    pub predictors: PredictorTable,
    pub outcomes: OutcomeTable,
}

impl Dataset {
    pub fn new(panel: Panel, horizons: &[u32]) -> Self {
        let predictors = PredictorTable::build(&panel);
        let outcomes = OutcomeTable::build(&panel, horizons);
        Dataset {
            panel,
            predictors,
            outcomes,
        }
    }
}

/// One row of the predictor summary table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictorSummary {
    pub predictor: PredictorId,
    pub q025: Option<f64>,
    pub q25: Option<f64>,
    pub median: Option<f64>,
    pub mean: Option<f64>,
    pub q75: Option<f64>,
    pub q975: Option<f64>,
    pub missing: usize,
}

/// Quantiles, mean and missing counts per predictor. Group predictors are
/// summarised over group sizes (one value per distinct group).
pub fn summarize_predictors(table: &PredictorTable) -> Vec<PredictorSummary> {
    PredictorId::all()
        .into_iter()
        .map(|id| {
            let mut values: Vec<f64> = match &table.columns[id.column()] {
                Column::Numeric(v) => v.iter().flatten().copied().collect(),
                Column::Group(v) => {
                    let mut sizes: HashMap<u16, usize> = HashMap::new();
                    for code in v.iter().flatten() {
                        *sizes.entry(*code).or_default() += 1;
                    }
                    sizes.into_values().map(|s| s as f64).collect()
                }
            };
            values.sort_by(f64::total_cmp);
            let q = |level: f64| quantile_sorted(&values, level).ok();
            let mean = if values.is_empty() {
                None
            } else {
                Some(values.iter().sum::<f64>() / values.len() as f64)
            };
            PredictorSummary {
                predictor: id,
                q025: q(0.025),
                q25: q(0.25),
                median: q(0.5),
                mean,
                q75: q(0.75),
                q975: q(0.975),
                missing: table.missing_count(id),
            }
        })
        .collect()
}
