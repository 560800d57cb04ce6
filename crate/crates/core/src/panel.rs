//! Firm-year panel: CSV ingestion, CPI deflation, filtering and indexing.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PANEL_HEADER: [&str; 11] = [
    "firm_id",
    "fiscal_year",
    "fye_month",
    "sales",
    "ebit",
    "total_assets",
    "shareholder_equity",
    "sic",
    "beta",
    "pe_ratio",
    "pb_ratio",
];

pub const CPI_HEADER: [&str; 3] = ["year", "month", "cpi"];

const CACHE_FORMAT: &str = "refcast-panel";
const CACHE_VERSION: u32 = 1;

/// SIC range of financial and real-estate firms (divisions H: 6000-6799).
pub const FINANCIAL_SIC: std::ops::RangeInclusive<u16> = 6000..=6799;

/// One firm in one fiscal year. USD amounts are in millions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirmYearRecord {
    pub firm_id: String,
    pub fiscal_year: i32,
    #[serde(default = "default_fye_month")]
    pub fye_month: u8,
    pub sales: Option<f64>,
    pub ebit: Option<f64>,
    pub total_assets: Option<f64>,
    pub shareholder_equity: Option<f64>,
    pub sic: Option<u16>,
    pub beta: Option<f64>,
    pub pe_ratio: Option<f64>,
    pub pb_ratio: Option<f64>,
}

fn default_fye_month() -> u8 {
    12
}

impl FirmYearRecord {
    pub fn new(firm_id: impl Into<String>, fiscal_year: i32, sales: Option<f64>) -> Self {
        FirmYearRecord {
            firm_id: firm_id.into(),
            fiscal_year,
            fye_month: 12,
            sales,
            ebit: None,
            total_assets: None,
            shareholder_equity: None,
            sic: None,
            beta: None,
            pe_ratio: None,
            pb_ratio: None,
        }
    }

    fn deflate(&mut self, factor: f64) {
        for v in [
            &mut self.sales,
            &mut self.ebit,
            &mut self.total_assets,
            &mut self.shareholder_equity,
        ]
        .into_iter()
        .flatten()
        {
            *v /= factor;
        }
    }
}

/// Raw CSV row; `fye_month` may be empty.
#[derive(Debug, Deserialize)]
struct PanelRow {
    firm_id: String,
    fiscal_year: i32,
    fye_month: Option<u8>,
    sales: Option<f64>,
    ebit: Option<f64>,
    total_assets: Option<f64>,
    shareholder_equity: Option<f64>,
    sic: Option<u16>,
    beta: Option<f64>,
    pe_ratio: Option<f64>,
    pb_ratio: Option<f64>,
}

/// Monthly consumer price index, base 1982-1984 = 100.
#[derive(Debug, Clone, Default)]
pub struct CpiSeries {
    values: BTreeMap<(i32, u8), f64>,
}

impl CpiSeries {
    /// Builds a series, rejecting non-positive values and interior gaps.
    pub fn new(entries: impl IntoIterator<Item = ((i32, u8), f64)>) -> Result<Self> {
        let mut values = BTreeMap::new();
        for ((year, month), value) in entries {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::CpiNonPositive { year, month, value });
            }
            if !(1..=12).contains(&month) {
                return Err(Error::CpiGap { year, month });
            }
            values.insert((year, month), value);
        }
        let series = CpiSeries { values };
        if let (Some(&first), Some(&last)) =
            (series.values.keys().next(), series.values.keys().next_back())
        {
            let mut cur = first;
            while cur < last {
                if !series.values.contains_key(&cur) {
                    return Err(Error::CpiGap {
                        year: cur.0,
                        month: cur.1,
                    });
                }
                cur = next_month(cur);
            }
        }
        Ok(series)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
        check_header(path, &mut reader, &CPI_HEADER)?;
        let mut entries = Vec::new();
        for (i, row) in reader.records().enumerate() {
            let row_no = i + 2;
            let row = row.map_err(|e| malformed(path, row_no, e.to_string()))?;
            let parsed: (i32, u8, f64) = row
                .deserialize(None)
                .map_err(|e| malformed(path, row_no, e.to_string()))?;
            entries.push(((parsed.0, parsed.1), parsed.2));
        }
        CpiSeries::new(entries)
    }

    pub fn get(&self, year: i32, month: u8) -> Result<f64> {
        self.values
            .get(&(year, month))
            .copied()
            .ok_or(Error::CpiGap { year, month })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

fn next_month((year, month): (i32, u8)) -> (i32, u8) {
    if month == 12 {
        (year + 1, 1)
    } else {
        (year, month + 1)
    }
}

#[derive(Debug, Clone, Default)]
pub struct IngestOptions {
    /// Drop records with SIC 6000-6799 (financials and real estate).
    pub exclude_financial_sic: bool,
}

/// Row accounting produced by [`Panel::build`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct LoadReport {
    pub rows_read: usize,
    pub dropped_excluded_sic: usize,
    pub dropped_missing_sales: usize,
    pub dropped_singleton_rows: usize,
    pub rows_kept: usize,
    pub firms_kept: usize,
}

/// Immutable, indexed firm-year panel.
///
/// Records are stored sorted by `(firm_id, fiscal_year)`; firms are numbered in
/// lexicographic order of their id, so comparing firm indices is the same as
/// comparing ids.
#[derive(Debug, Clone)]
pub struct Panel {
    records: Vec<FirmYearRecord>,
    firm_ids: Vec<String>,
    firm_lookup: HashMap<String, u32>,
    firm_of: Vec<u32>,
    firm_ranges: Vec<Range<usize>>,
    by_year: BTreeMap<i32, Vec<usize>>,
    start_year: i32,
    end_year: i32,
}

#[derive(Serialize, Deserialize)]
struct CacheFile {
    format: String,
    version: u32,
    records: Vec<FirmYearRecord>,
}

impl Panel {
    /// Indexes records as given. Duplicated `(firm, year)` pairs are rejected;
    /// no filtering happens here (see [`Panel::build`]).
    pub fn new(mut records: Vec<FirmYearRecord>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::EmptyPanel);
        }
        records.sort_by(|a, b| {
            a.firm_id
                .cmp(&b.firm_id)
                .then(a.fiscal_year.cmp(&b.fiscal_year))
        });
        for pair in records.windows(2) {
            if pair[0].firm_id == pair[1].firm_id && pair[0].fiscal_year == pair[1].fiscal_year {
                return Err(Error::DuplicateRecord {
                    firm_id: pair[0].firm_id.clone(),
                    year: pair[0].fiscal_year,
                });
            }
        }

        let mut firm_ids = Vec::new();
        let mut firm_ranges: Vec<Range<usize>> = Vec::new();
        let mut firm_of = Vec::with_capacity(records.len());
        let mut by_year: BTreeMap<i32, Vec<usize>> = BTreeMap::new();
        for (idx, rec) in records.iter().enumerate() {
            if firm_ids.last() != Some(&rec.firm_id) {
                firm_ids.push(rec.firm_id.clone());
                firm_ranges.push(idx..idx);
            }
            firm_ranges.last_mut().unwrap().end = idx + 1;
            firm_of.push((firm_ids.len() - 1) as u32);
            by_year.entry(rec.fiscal_year).or_default().push(idx);
        }
        let firm_lookup = firm_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i as u32))
            .collect();
        let start_year = *by_year.keys().next().unwrap();
        let end_year = *by_year.keys().next_back().unwrap();

        Ok(Panel {
            records,
            firm_ids,
            firm_lookup,
            firm_of,
            firm_ranges,
            by_year,
            start_year,
            end_year,
        })
    }

    /// Applies the ingestion pipeline: optional SIC exclusion, duplicate check,
    /// removal of rows without sales, CPI deflation of USD fields and removal
    /// of firms with a single remaining observation.
    pub fn build(
        records: Vec<FirmYearRecord>,
        cpi: Option<&CpiSeries>,
        options: &IngestOptions,
    ) -> Result<(Self, LoadReport)> {
        let mut report = LoadReport {
            rows_read: records.len(),
            ..LoadReport::default()
        };

        let mut seen = HashMap::with_capacity(records.len());
        for rec in &records {
            if seen.insert((rec.firm_id.as_str(), rec.fiscal_year), ()).is_some() {
                return Err(Error::DuplicateRecord {
                    firm_id: rec.firm_id.clone(),
                    year: rec.fiscal_year,
                });
            }
        }
        drop(seen);

        let mut kept = Vec::with_capacity(records.len());
        for mut rec in records {
            if options.exclude_financial_sic && rec.sic.is_some_and(|s| FINANCIAL_SIC.contains(&s))
            {
                report.dropped_excluded_sic += 1;
                continue;
            }
            if rec.sales.is_none() {
                report.dropped_missing_sales += 1;
                continue;
            }
            if let Some(cpi) = cpi {
                let index = cpi.get(rec.fiscal_year, rec.fye_month)?;
                rec.deflate(index / 100.0);
            }
            kept.push(rec);
        }

        let mut counts: HashMap<String, usize> = HashMap::new();
        for rec in &kept {
            *counts.entry(rec.firm_id.clone()).or_default() += 1;
        }
        let before = kept.len();
        kept.retain(|rec| counts[&rec.firm_id] >= 2);
        report.dropped_singleton_rows = before - kept.len();

        let panel = Panel::new(kept)?;
        report.rows_kept = panel.len();
        report.firms_kept = panel.firm_count();
        Ok((panel, report))
    }

    /// Reads a panel CSV (and optionally a CPI CSV) and runs [`Panel::build`].
    pub fn load(
        panel_csv: &Path,
        cpi_csv: Option<&Path>,
        options: &IngestOptions,
    ) -> Result<(Self, LoadReport)> {
        let records = read_panel_csv(panel_csv)?;
        let cpi = cpi_csv.map(CpiSeries::load).transpose()?;
        Panel::build(records, cpi.as_ref(), options)
    }

    /// Opens either a serialized cache (written by [`Panel::write_cache`]) or a
    /// raw panel CSV, detected from the first non-blank byte.
    pub fn open(path: &Path, cpi_csv: Option<&Path>, options: &IngestOptions) -> Result<(Self, LoadReport)> {
        let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut head = [0u8; 64];
        let n = file.read(&mut head).map_err(|e| Error::io(path, e))?;
        let is_cache = head[..n]
            .iter()
            .find(|b| !b.is_ascii_whitespace())
            .is_some_and(|&b| b == b'{');
        if is_cache {
            let panel = Panel::read_cache(path)?;
            let report = LoadReport {
                rows_read: panel.len(),
                rows_kept: panel.len(),
                firms_kept: panel.firm_count(),
                ..LoadReport::default()
            };
            Ok((panel, report))
        } else {
            Panel::load(path, cpi_csv, options)
        }
    }

    pub fn write_cache<W: Write>(&self, writer: W) -> Result<()> {
        #[derive(Serialize)]
        struct CacheRef<'a> {
            format: &'a str,
            version: u32,
            records: &'a [FirmYearRecord],
        }
        serde_json::to_writer(
            writer,
            &CacheRef {
                format: CACHE_FORMAT,
                version: CACHE_VERSION,
                records: &self.records,
            },
        )
        .map_err(|e| Error::Cache {
            path: "<writer>".into(),
            message: e.to_string(),
        })
    }

    pub fn save_cache(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut writer = BufWriter::new(file);
        self.write_cache(&mut writer)?;
        writer.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_cache(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let cache: CacheFile =
            serde_json::from_reader(BufReader::new(file)).map_err(|e| Error::Cache {
                path: path.into(),
                message: e.to_string(),
            })?;
        if cache.format != CACHE_FORMAT || cache.version != CACHE_VERSION {
            return Err(Error::Cache {
                path: path.into(),
                message: format!(
                    "unsupported format {:?} version {} (expected {CACHE_FORMAT:?} version {CACHE_VERSION})",
                    cache.format, cache.version
                ),
            });
        }
        Panel::new(cache.records)
    }

    /// Writes the records in the standard panel CSV layout.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_panel_csv(&self.records, writer)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[FirmYearRecord] {
        &self.records
    }

    pub fn record(&self, idx: usize) -> &FirmYearRecord {
        &self.records[idx]
    }

    pub fn start_year(&self) -> i32 {
        self.start_year
    }

    pub fn end_year(&self) -> i32 {
        self.end_year
    }

    pub fn firm_count(&self) -> usize {
        self.firm_ids.len()
    }

    pub fn firm_id(&self, firm: u32) -> &str {
        &self.firm_ids[firm as usize]
    }

    pub fn firm_index(&self, firm_id: &str) -> Option<u32> {
        self.firm_lookup.get(firm_id).copied()
    }

    /// Firm index of the record at `idx`.
    pub fn firm_of(&self, idx: usize) -> u32 {
        self.firm_of[idx]
    }

    /// Record indices of one firm, ascending by year.
    pub fn firm_range(&self, firm: u32) -> Range<usize> {
        self.firm_ranges[firm as usize].clone()
    }

    pub fn find(&self, firm: u32, year: i32) -> Option<usize> {
        let range = self.firm_range(firm);
        let slice = &self.records[range.clone()];
        slice
            .binary_search_by_key(&year, |r| r.fiscal_year)
            .ok()
            .map(|i| range.start + i)
    }

    /// Record of the same firm `offset` years away from record `idx`.
    pub fn shifted(&self, idx: usize, offset: i32) -> Option<usize> {
        self.find(self.firm_of[idx], self.records[idx].fiscal_year + offset)
    }

    pub fn years(&self) -> impl Iterator<Item = i32> + '_ {
        self.by_year.keys().copied()
    }

    pub fn records_in_year(&self, year: i32) -> &[usize] {
        self.by_year.get(&year).map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Share of observations `(i, t)` with `t + h <= end_year` whose firm is still
/// observed at `t + h`.
pub fn survivorship_rate(panel: &Panel, horizon: u32) -> Result<f64> {
    if horizon == 0 {
        return Err(Error::InvalidParams("horizon must be at least 1".into()));
    }
    let h = horizon as i32;
    let mut eligible = 0usize;
    let mut survived = 0usize;
    for (idx, rec) in panel.records().iter().enumerate() {
        if rec.fiscal_year + h > panel.end_year() {
            continue;
        }
        eligible += 1;
        if panel.shifted(idx, h).is_some() {
            survived += 1;
        }
    }
    if eligible == 0 {
        return Err(Error::EmptyDenominator(format!(
            "no observation has t + {horizon} within the panel"
        )));
    }
    Ok(survived as f64 / eligible as f64)
}

fn malformed(path: &Path, row: usize, message: String) -> Error {
    Error::MalformedRow {
        path: path.into(),
        row,
        message,
    }
}

fn check_header<R: Read>(path: &Path, reader: &mut csv::Reader<R>, expected: &[&str]) -> Result<()> {
    let headers = reader
        .headers()
        .map_err(|e| malformed(path, 1, e.to_string()))?;
    if headers.iter().ne(expected.iter().copied()) {
        return Err(Error::BadHeader {
            path: path.into(),
            found: headers.iter().collect::<Vec<_>>().join(","),
            expected: expected.join(","),
        });
    }
    Ok(())
}

/// Parses a panel CSV. Row numbers in errors are 1-based file lines.
pub fn read_panel_csv(path: &Path) -> Result<Vec<FirmYearRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(BufReader::new(file));
    check_header(path, &mut reader, &PANEL_HEADER)?;
    let headers = reader.headers().unwrap().clone();

    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row_no = i + 2;
        let row = row.map_err(|e| malformed(path, row_no, e.to_string()))?;
        let raw: PanelRow = row
            .deserialize(Some(&headers))
            .map_err(|e| malformed(path, row_no, e.to_string()))?;
        records.push(validate_row(raw).map_err(|m| malformed(path, row_no, m))?);
    }
    Ok(records)
}

fn validate_row(raw: PanelRow) -> std::result::Result<FirmYearRecord, String> {
    if raw.firm_id.is_empty() {
        return Err("empty firm_id".into());
    }
    let fye_month = raw.fye_month.unwrap_or(12);
    if !(1..=12).contains(&fye_month) {
        return Err(format!("fye_month {fye_month} outside 1..=12"));
    }
    if let Some(sales) = raw.sales {
        if sales < 0.0 {
            return Err(format!("negative sales {sales}"));
        }
    }
    if let Some(sic) = raw.sic {
        if sic > 9999 {
            return Err(format!("sic {sic} is not a 4-digit code"));
        }
    }
    let values = [
        raw.sales,
        raw.ebit,
        raw.total_assets,
        raw.shareholder_equity,
        raw.beta,
        raw.pe_ratio,
        raw.pb_ratio,
    ];
    if values.iter().flatten().any(|v| !v.is_finite()) {
        return Err("non-finite numeric value".into());
    }
    Ok(FirmYearRecord {
        firm_id: raw.firm_id,
        fiscal_year: raw.fiscal_year,
        fye_month,
        sales: raw.sales,
        ebit: raw.ebit,
        total_assets: raw.total_assets,
        shareholder_equity: raw.shareholder_equity,
        sic: raw.sic,
        beta: raw.beta,
        pe_ratio: raw.pe_ratio,
        pb_ratio: raw.pb_ratio,
    })
}

pub fn write_panel_csv<W: Write>(records: &[FirmYearRecord], writer: W) -> Result<()> {
    let to_err = |e: csv::Error| Error::Cache {
        path: "<csv writer>".into(),
        message: e.to_string(),
    };
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(PANEL_HEADER).map_err(to_err)?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in records {
        out.write_record([
            r.firm_id.clone(),
            r.fiscal_year.to_string(),
            r.fye_month.to_string(),
            opt(r.sales),
            opt(r.ebit),
            opt(r.total_assets),
            opt(r.shareholder_equity),
            r.sic.map(|s| s.to_string()).unwrap_or_default(),
            opt(r.beta),
            opt(r.pe_ratio),
            opt(r.pb_ratio),
        ])
        .map_err(to_err)?;
    }
    out.flush().map_err(|e| Error::io("<csv writer>", e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(firm: &str, year: i32, sales: f64) -> FirmYearRecord {
        FirmYearRecord::new(firm, year, Some(sales))
    }

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    const HEADER: &str =
        "firm_id,fiscal_year,fye_month,sales,ebit,total_assets,shareholder_equity,sic,beta,pe_ratio,pb_ratio\n";

    #[test]
    fn deflates_by_fiscal_year_end_cpi() {
        let panel = write_tmp(&format!(
            "{HEADER}F1,2000,12,200,,,,,,,\nF1,2001,,100,10,,,2834,,,\n"
        ));
        let cpi = write_tmp("year,month,cpi\n2000,12,172.2\n2001,1,175\n2001,2,175\n2001,3,175\n2001,4,175\n2001,5,175\n2001,6,175\n2001,7,175\n2001,8,175\n2001,9,175\n2001,10,175\n2001,11,175\n2001,12,176\n");
        let (panel, report) =
            Panel::load(panel.path(), Some(cpi.path()), &IngestOptions::default()).unwrap();
        assert_eq!(report.rows_kept, 2);
        let sales = panel.record(0).sales.unwrap();
        assert!((sales - 116.144).abs() < 1e-3, "{sales}");
        assert!((sales - 200.0 / 1.722).abs() < 1e-12);
        let r1 = panel.record(1);
        assert_eq!(r1.fye_month, 12);
        assert!((r1.ebit.unwrap() - 10.0 / 1.76).abs() < 1e-12);
        assert_eq!(r1.sic, Some(2834));
    }

    #[test]
    fn single_observation_firms_are_dropped() {
        let records = vec![rec("A", 2000, 1.0), rec("A", 2001, 2.0), rec("B", 2000, 3.0)];
        let (panel, report) = Panel::build(records, None, &IngestOptions::default()).unwrap();
        assert_eq!(report.dropped_singleton_rows, 1);
        assert_eq!(panel.firm_count(), 1);
        assert!(panel.firm_index("B").is_none());
    }

    #[test]
    fn rows_without_sales_are_dropped_before_singleton_rule() {
        let records = vec![
            rec("A", 2000, 1.0),
            FirmYearRecord::new("A", 2001, None),
            rec("B", 2000, 1.0),
            rec("B", 2001, 1.0),
        ];
        let (panel, report) = Panel::build(records, None, &IngestOptions::default()).unwrap();
        assert_eq!(report.dropped_missing_sales, 1);
        assert_eq!(report.dropped_singleton_rows, 1);
        assert_eq!(panel.len(), 2);
    }

    #[test]
    fn duplicate_firm_year_is_a_hard_error() {
        let records = vec![rec("F1", 2000, 1.0), rec("F1", 2000, 2.0)];
        let err = Panel::build(records, None, &IngestOptions::default()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("F1") && msg.contains("2000"), "{msg}");
    }

    #[test]
    fn malformed_row_reports_line() {
        let f = write_tmp(&format!("{HEADER}F1,2000,12,abc,,,,,,,\n"));
        match read_panel_csv(f.path()) {
            Err(Error::MalformedRow { row, .. }) => assert_eq!(row, 2),
            other => panic!("unexpected {other:?}"),
        }
        let f = write_tmp(&format!("{HEADER}F1,2000,12,-5,,,,,,,\n"));
        assert!(matches!(read_panel_csv(f.path()), Err(Error::MalformedRow { row: 2, .. })));
    }

    #[test]
    fn wrong_header_rejected() {
        let f = write_tmp("firm,year\nF1,2000\n");
        assert!(matches!(read_panel_csv(f.path()), Err(Error::BadHeader { .. })));
    }

    #[test]
    fn cpi_gap_is_error() {
        assert!(matches!(
            CpiSeries::new([((2000, 1), 100.0), ((2000, 3), 101.0)]),
            Err(Error::CpiGap { year: 2000, month: 2 })
        ));
        let cpi = CpiSeries::new([((2000, 12), 100.0)]).unwrap();
        let records = vec![rec("A", 2000, 1.0), rec("A", 2001, 1.0)];
        assert!(matches!(
            Panel::build(records, Some(&cpi), &IngestOptions::default()),
            Err(Error::CpiGap { year: 2001, month: 12 })
        ));
        assert!(CpiSeries::new([((2000, 1), 0.0)]).is_err());
    }

    #[test]
    fn financial_sic_excluded_only_on_request() {
        let mut a = rec("A", 2000, 1.0);
        a.sic = Some(6021);
        let mut b = a.clone();
        b.fiscal_year = 2001;
        let records = vec![a, b];
        let (p, _) = Panel::build(records.clone(), None, &IngestOptions::default()).unwrap();
        assert_eq!(p.len(), 2);
        let opts = IngestOptions {
            exclude_financial_sic: true,
        };
        assert!(matches!(Panel::build(records, None, &opts), Err(Error::EmptyPanel)));
    }

    #[test]
    fn survivorship_full_panel() {
        let records = (0..3)
            .flat_map(|f| (2000..2005).map(move |y| rec(&format!("F{f}"), y, 1.0)))
            .collect();
        let panel = Panel::new(records).unwrap();
        assert_eq!(survivorship_rate(&panel, 1).unwrap(), 1.0);
        assert_eq!(survivorship_rate(&panel, 4).unwrap(), 1.0);
    }

    #[test]
    fn survivorship_two_of_three() {
        // Hand enumeration: eligible (t + 1 <= 2001) are the three 2000 rows,
        // of which F1 and F2 reappear in 2001.
        let records = vec![
            rec("F1", 2000, 1.0),
            rec("F1", 2001, 1.0),
            rec("F2", 2000, 1.0),
            rec("F2", 2001, 1.0),
            rec("F3", 2000, 1.0),
        ];
        let panel = Panel::new(records).unwrap();
        let rate = survivorship_rate(&panel, 1).unwrap();
        assert!((rate - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn survivorship_horizon_beyond_span() {
        let panel = Panel::new(vec![rec("A", 2000, 1.0), rec("A", 2001, 1.0)]).unwrap();
        assert!(matches!(survivorship_rate(&panel, 2), Err(Error::EmptyDenominator(_))));
    }

    #[test]
    fn indices_cover_every_record_once() {
        let records = vec![
            rec("b", 2001, 1.0),
            rec("a", 2000, 1.0),
            rec("b", 1999, 1.0),
            rec("a", 2003, 1.0),
        ];
        let panel = Panel::new(records).unwrap();
        let mut via_firm: Vec<usize> = (0..panel.firm_count() as u32)
            .flat_map(|f| panel.firm_range(f))
            .collect();
        let mut via_year: Vec<usize> = panel
            .years()
            .flat_map(|y| panel.records_in_year(y).to_vec())
            .collect();
        via_firm.sort();
        via_year.sort();
        assert_eq!(via_firm, (0..4).collect::<Vec<_>>());
        assert_eq!(via_year, via_firm);
        assert_eq!(panel.firm_id(0), "a");
        assert_eq!(panel.find(1, 2001), Some(3));
        assert_eq!(panel.start_year(), 1999);
        assert_eq!(panel.end_year(), 2003);
    }

    #[test]
    fn cache_round_trip_is_byte_identical() {
        let mut r = rec("A", 2000, 1.5);
        r.ebit = Some(0.1 + 0.2);
        let panel = Panel::new(vec![r, rec("A", 2001, 3.0)]).unwrap();
        let mut first = Vec::new();
        panel.write_cache(&mut first).unwrap();
        let f = write_tmp(std::str::from_utf8(&first).unwrap());
        let (back, _) = Panel::open(f.path(), None, &IngestOptions::default()).unwrap();
        let mut second = Vec::new();
        back.write_cache(&mut second).unwrap();
        assert_eq!(first, second);
        assert_eq!(back.records(), panel.records());
    }
}
