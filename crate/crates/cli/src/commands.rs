use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use refcast::evaluation::{
    decile_levels, predictor_influence, rank_results, ranked_by, read_results_csv, run_grid, write_rank_report,
    write_results_csv, RankRow,
};
use refcast::forecast::{BaseRateTable, Kde};
use refcast::panel::survivorship_rate;
use refcast::predictors::summarize_predictors;
use refcast::refclass::build_class;
use refcast::synth::{generate_panel, SynthSpec};
use refcast::{ClassParams, Dataset, GridSpec, IngestOptions, Method, Panel, PredictorId, ReferenceClass};
use serde::{Deserialize, Serialize};

use crate::args::*;
use crate::error::CliError;
use crate::output::{sink, write_json, write_manifest, write_rows};

/// Levels of the quantile forecast table.
const FORECAST_LEVELS: [f64; 11] = [0.01, 0.025, 0.05, 0.1, 0.25, 0.5, 0.75, 0.9, 0.95, 0.975, 0.99];

fn open_panel(args: &PanelArgs) -> Result<Panel, CliError> {
    let options = IngestOptions {
        exclude_financial_sic: args.exclude_sic,
    };
    let (panel, report) = Panel::open(&args.panel, args.cpi.as_deref(), &options)?;
    log::info!(
        "{}: {} rows kept of {}, {} firms",
        args.panel.display(),
        report.rows_kept,
        report.rows_read,
        report.firms_kept
    );
    Ok(panel)
}

fn inputs(args: &PanelArgs) -> Vec<&Path> {
    std::iter::once(args.panel.as_path()).chain(args.cpi.as_deref()).collect()
}

/// Writes through `body` to `--out` (or stdout) and adds the manifest for file outputs.
fn emit(
    out: Option<&Path>,
    cli: &Cli,
    command: &str,
    inputs: &[&Path],
    body: impl FnOnce(&mut dyn Write) -> Result<(), CliError>,
) -> Result<(), CliError> {
    let mut w = sink(out)?;
    body(&mut w)?;
    w.flush().map_err(CliError::write)?;
    drop(w);
    if let Some(path) = out {
        write_manifest(path, command, cli, inputs)?;
    }
    Ok(())
}

fn selection_params(sel: &SelectionArgs) -> Result<ClassParams, CliError> {
    let (h, w) = (sel.horizon, sel.window);
    let params = match sel.method {
        Method::Similarity => ClassParams::similarity(sel.predictor, h, w, sel.size),
        Method::Mauboussin => ClassParams::mauboussin(h, w),
        Method::MajorGroup => ClassParams::group(PredictorId::MajorGroup, h, w),
        Method::IndustryGroup => ClassParams::group(PredictorId::IndustryGroup, h, w),
    }
    .with_min_class(sel.min_class)
    .with_exclude_self(sel.exclude_self);
    params.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(params)
}

pub fn ingest(args: &IngestArgs, cli: &Cli) -> Result<(), CliError> {
    let options = IngestOptions {
        exclude_financial_sic: args.panel.exclude_sic,
    };
    let (panel, report) = Panel::open(&args.panel.panel, args.panel.cpi.as_deref(), &options)?;
    if panel.is_empty() {
        return Err(refcast::Error::EmptyPanel.into());
    }
    panel.save_cache(&args.out)?;
    write_manifest(&args.out, "ingest", cli, &inputs(&args.panel))?;

    eprintln!(
        "read {} rows; dropped {} excluded SIC, {} without sales, {} single-observation rows; kept {} rows of {} firms ({}..{})",
        report.rows_read,
        report.dropped_excluded_sic,
        report.dropped_missing_sales,
        report.dropped_singleton_rows,
        report.rows_kept,
        report.firms_kept,
        panel.start_year(),
        panel.end_year()
    );
    for h in [1, 3, 5, 10] {
        if let Ok(rate) = survivorship_rate(&panel, h) {
            eprintln!("survivorship h={h}: {:.2}%", 100.0 * rate);
        }
    }
    Ok(())
}

pub fn predictors(args: &PredictorsArgs, cli: &Cli) -> Result<(), CliError> {
    let data = Dataset::new(open_panel(&args.panel)?, &[]);
    let rows = summarize_predictors(&data.predictors);
    emit(args.output.out.as_deref(), cli, "predictors", &inputs(&args.panel), |w| match args.output.format {
        Format::Csv => write_rows(&rows, w),
        Format::Json => write_json(&rows, w),
    })
}

pub fn synth(args: &SynthArgs, cli: &Cli) -> Result<(), CliError> {
    let mut spec = if args.independent {
        SynthSpec::independent(args.seed)
    } else {
        SynthSpec {
            seed: args.seed,
            ..SynthSpec::default()
        }
    };
    spec.n_firms = args.firms;
    spec.n_years = args.years;
    spec.start_year = args.start_year;
    if let Some(d) = args.drift {
        spec.margin_drift = d;
    }
    if let Some(r) = args.death_rate {
        spec.death_rate = r;
    }
    spec.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let out = generate_panel(&spec, &[])?;
    emit(args.out.as_deref(), cli, "synth", &[], |w| {
        out.dataset.panel.write_csv(w).map_err(CliError::from)
    })
}

fn grid_spec(args: &BacktestArgs) -> Result<GridSpec, CliError> {
    let mut spec = if args.grid == "default" {
        GridSpec::default()
    } else {
        let path = Path::new(&args.grid);
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        GridSpec::from_toml(&text)?
    };
    if let Some(h) = &args.horizons {
        if h.is_empty() || h.contains(&0) {
            return Err(CliError::Usage("--horizons needs positive integers".into()));
        }
        spec.horizons = h.clone();
    }
    if let Some(m) = args.min_class {
        spec.min_class = m;
        for p in &mut spec.extra {
            p.min_class = m;
        }
    }
    if args.exclude_self {
        spec.exclude_self = true;
        for p in &mut spec.extra {
            p.exclude_self = true;
        }
    }
    Ok(spec)
}

pub fn backtest(args: &BacktestArgs, cli: &Cli) -> Result<(), CliError> {
    let spec = grid_spec(args)?;
    let (combos, dups) = spec.combinations()?;
    if dups > 0 {
        eprintln!("warning: {dups} duplicate grid entries ignored");
    }
    log::info!("{} combinations", combos.len());
    let data = Dataset::new(open_panel(&args.panel)?, &spec.required_horizons());
    let results = run_grid(&data, &spec)?;

    let mut sources = inputs(&args.panel);
    if args.grid != "default" {
        sources.push(Path::new(&args.grid));
    }
    emit(args.output.out.as_deref(), cli, "backtest", &sources, |w| match args.output.format {
        Format::Csv => write_results_csv(&results, w).map_err(CliError::from),
        Format::Json => write_json(&results, w),
    })
}

fn read_results(path: &Path) -> Result<Vec<refcast::GridResult>, CliError> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    read_results_csv(file).map_err(|e| match e {
        refcast::Error::Grid(msg) => refcast::Error::Grid(format!("{}: {msg}", path.display())).into(),
        other => other.into(),
    })
}

pub fn rank(args: &RankArgs, cli: &Cli) -> Result<(), CliError> {
    let mut results = read_results(&args.results)?;
    if results.is_empty() {
        return Err(refcast::Error::Grid(format!("{}: no result rows", args.results.display())).into());
    }
    rank_results(&mut results);
    let rows = RankRow::report(&results, args.by, args.top);
    emit(args.output.out.as_deref(), cli, "rank", &[&args.results], |w| match args.output.format {
        Format::Csv => write_rank_report(&rows, w).map_err(CliError::from),
        Format::Json => write_json(&rows, w),
    })
}

#[derive(Debug, Serialize)]
struct MemberRow<'a> {
    firm_id: &'a str,
    year: i32,
    predictor_value: f64,
    outcome: f64,
}

fn member_rows<'a>(data: &'a Dataset, class: &ReferenceClass) -> Vec<MemberRow<'a>> {
    class
        .members
        .iter()
        .map(|m| MemberRow {
            firm_id: data.panel.firm_id(m.firm),
            year: m.year,
            predictor_value: m.value,
            outcome: m.outcome,
        })
        .collect()
}

pub fn class(args: &ClassArgs, cli: &Cli) -> Result<(), CliError> {
    let params = selection_params(&args.selection)?;
    let data = Dataset::new(open_panel(&args.panel)?, &[params.horizon]);
    let sources = inputs(&args.panel);
    let out = args.output.out.as_deref();

    if args.influence {
        let rows = predictor_influence(&data, &params, args.year, &decile_levels())?;
        return emit(out, cli, "class", &sources, |w| match args.output.format {
            Format::Csv => write_rows(&rows, w),
            Format::Json => write_json(&rows, w),
        });
    }

    let firm = args.firm.as_deref().ok_or_else(|| CliError::Usage("--firm is required".into()))?;
    let class = build_class(&data, firm, args.year, &params)?;
    let dist = class.distribution()?;
    eprintln!(
        "{} members, outcome median {:.2}%, window {}..{}",
        class.len(),
        dist.median(),
        params.window_start(args.year),
        params.window_end(args.year)
    );
    let rows = member_rows(&data, &class);
    emit(out, cli, "class", &sources, |w| match args.output.format {
        Format::Csv => write_rows(&rows, w),
        Format::Json => write_json(&rows, w),
    })
}

#[derive(Debug, Deserialize)]
struct Estimate {
    analyst_id: String,
    estimate_pct: f64,
}

fn read_estimates(path: &Path) -> Result<Vec<Estimate>, CliError> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers = rdr.headers().map_err(CliError::csv)?.clone();
    if headers.iter().ne(["analyst_id", "estimate_pct"]) {
        return Err(refcast::Error::BadHeader {
            path: path.to_path_buf(),
            found: headers.iter().collect::<Vec<_>>().join(","),
            expected: "analyst_id,estimate_pct".into(),
        }
        .into());
    }
    rdr.deserialize()
        .enumerate()
        .map(|(i, row)| {
            row.map_err(|e| {
                refcast::Error::MalformedRow {
                    path: path.to_path_buf(),
                    row: i + 2,
                    message: e.to_string(),
                }
                .into()
            })
        })
        .collect()
}

#[derive(Debug, Serialize)]
struct Placement {
    analyst_id: String,
    estimate_pct: f64,
    quantile: f64,
}

#[derive(Debug, Serialize)]
struct QuantileRow {
    level: f64,
    value: f64,
}

#[derive(Debug, Serialize)]
struct DensityRow {
    growth_pct: f64,
    density: f64,
}

#[derive(Debug, Serialize)]
struct ForecastJson<'a> {
    n: usize,
    quantiles: &'a [QuantileRow],
    placements: &'a [Placement],
    bandwidth: f64,
    density: &'a [DensityRow],
}

pub fn forecast(args: &ForecastArgs, cli: &Cli) -> Result<(), CliError> {
    if args.grid_points < 2 {
        return Err(CliError::Usage("--grid-points must be at least 2".into()));
    }
    let params = selection_params(&args.selection)?;
    let data = Dataset::new(open_panel(&args.panel)?, &[params.horizon]);
    let class = build_class(&data, &args.firm, args.year, &params)?;
    let dist = class.distribution()?;

    let quantiles: Vec<QuantileRow> = FORECAST_LEVELS
        .iter()
        .map(|&level| Ok(QuantileRow { level, value: dist.quantile(level)? }))
        .collect::<Result<_, refcast::Error>>()?;

    let estimates = match &args.estimates {
        Some(path) => read_estimates(path)?,
        None => Vec::new(),
    };
    let values: Vec<f64> = estimates.iter().map(|e| e.estimate_pct).collect();
    let placements: Vec<Placement> = estimates
        .into_iter()
        .zip(dist.place_estimates(&values))
        .map(|(e, (_, q))| Placement {
            analyst_id: e.analyst_id,
            estimate_pct: e.estimate_pct,
            quantile: q,
        })
        .collect();

    let kde = Kde::new(&dist)?;
    let h = kde.bandwidth();
    let outcomes = dist.outcomes();
    let lo = (outcomes[0] - 3.0 * h).max(refcast::forecast::GROWTH_FLOOR);
    let hi = outcomes[outcomes.len() - 1] + 3.0 * h;
    let step = (hi - lo) / (args.grid_points - 1) as f64;
    let density: Vec<DensityRow> = (0..args.grid_points)
        .map(|i| {
            let x = lo + step * i as f64;
            DensityRow {
                growth_pct: x,
                density: kde.density(x),
            }
        })
        .collect();

    let mut sources = inputs(&args.panel);
    if let Some(p) = &args.estimates {
        sources.push(p);
    }
    let out = args.output.out.as_deref();
    match args.output.format {
        Format::Json => emit(out, cli, "forecast", &sources, |w| {
            write_json(
                &ForecastJson {
                    n: dist.len(),
                    quantiles: &quantiles,
                    placements: &placements,
                    bandwidth: h,
                    density: &density,
                },
                w,
            )
        }),
        Format::Csv => {
            emit(out, cli, "forecast", &sources, |w| {
                if args.estimates.is_some() {
                    write_rows(&placements, w)
                } else {
                    write_rows(&quantiles, w)
                }
            })?;
            let density_path: Option<PathBuf> = args.density_out.clone().or_else(|| {
                out.map(|p| {
                    let mut name = p.file_name().unwrap_or_default().to_os_string();
                    name.push(".density.csv");
                    p.with_file_name(name)
                })
            });
            match density_path {
                Some(p) => emit(Some(&p), cli, "forecast", &sources, |w| write_rows(&density, w)),
                None => {
                    log::info!("density grid not written; pass --density-out or --out");
                    Ok(())
                }
            }
        }
    }
}

fn best_params(results: &[refcast::GridResult], args: &BaseratesArgs, h: u32) -> Result<ClassParams, CliError> {
    ranked_by(results, args.by)
        .into_iter()
        .find(|r| r.params.horizon == h && r.m > 0)
        .map(|r| r.params.with_min_class(args.min_class))
        .ok_or_else(|| refcast::Error::Grid(format!("no scored result for horizon {h}")).into())
}

#[derive(Debug, Serialize)]
struct BaseRateColumn {
    horizon: u32,
    benchmark: bool,
    params: ClassParams,
    table: Option<BaseRateTable>,
}

fn column_for(data: &Dataset, args: &BaseratesArgs, params: ClassParams, benchmark: bool) -> Result<BaseRateColumn, CliError> {
    let table = match build_class(data, &args.firm, args.year, &params) {
        Ok(class) => Some(class.distribution()?.base_rates(args.trim)?),
        Err(refcast::Error::Skipped(reason)) => {
            eprintln!(
                "warning: h={} {}: case skipped ({reason})",
                params.horizon,
                if benchmark { "Mauboussin" } else { "reference class" }
            );
            None
        }
        Err(e) => return Err(e.into()),
    };
    Ok(BaseRateColumn {
        horizon: params.horizon,
        benchmark,
        params,
        table,
    })
}

fn write_base_rates(columns: &[BaseRateColumn], w: &mut dyn Write) -> Result<(), CliError> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["cagr_pct".to_string()];
    for c in columns {
        header.push(format!("{}-Yr{}", c.horizon, if c.benchmark { " MC" } else { "" }));
    }
    out.write_record(&header).map_err(CliError::csv)?;

    let cell = |c: &BaseRateColumn, f: &dyn Fn(&BaseRateTable) -> Option<f64>| {
        c.table.as_ref().and_then(f).map(|v| format!("{v:.2}")).unwrap_or_default()
    };
    let mut write = |label: String, cells: Vec<String>| {
        out.write_record(std::iter::once(label).chain(cells)).map_err(CliError::csv)
    };
    for (i, label) in BaseRateTable::bucket_labels().into_iter().enumerate() {
        write(label, columns.iter().map(|c| cell(c, &|t| Some(t.shares[i]))).collect())?;
    }
    write("mean".into(), columns.iter().map(|c| cell(c, &|t| Some(t.trimmed_mean))).collect())?;
    write("median".into(), columns.iter().map(|c| cell(c, &|t| Some(t.median))).collect())?;
    write("std".into(), columns.iter().map(|c| cell(c, &|t| t.trimmed_std)).collect())?;
    write("q0.025".into(), columns.iter().map(|c| cell(c, &|t| Some(t.q025))).collect())?;
    write("q0.975".into(), columns.iter().map(|c| cell(c, &|t| Some(t.q975))).collect())?;
    write(
        "n".into(),
        columns.iter().map(|c| c.table.as_ref().map(|t| t.n.to_string()).unwrap_or_default()).collect(),
    )?;
    write("predictor".into(), columns.iter().map(|c| c.params.predictor.to_string()).collect())?;
    write("window".into(), columns.iter().map(|c| c.params.window.to_string()).collect())?;
    write(
        "size".into(),
        columns.iter().map(|c| c.params.size.map(|s| s.to_string()).unwrap_or_default()).collect(),
    )?;
    out.flush().map_err(CliError::write)
}

pub fn baserates(args: &BaseratesArgs, cli: &Cli) -> Result<(), CliError> {
    if !(0.0..0.5).contains(&args.trim) {
        return Err(CliError::Usage("--trim must lie in [0, 0.5)".into()));
    }
    if args.horizons.is_empty() || args.horizons.contains(&0) {
        return Err(CliError::Usage("--horizons needs positive integers".into()));
    }
    let results = match &args.results {
        Some(path) => Some(read_results(path)?),
        None => None,
    };
    let data = Dataset::new(open_panel(&args.panel)?, &args.horizons);

    let mut columns = Vec::new();
    for &h in &args.horizons {
        let params = match &results {
            Some(r) => best_params(r, args, h)?,
            None => {
                let p = ClassParams::similarity(args.predictor, h, args.window, args.size).with_min_class(args.min_class);
                p.validate().map_err(|e| CliError::Usage(e.to_string()))?;
                p
            }
        };
        let benchmark = ClassParams::mauboussin(h, params.window).with_min_class(args.min_class);
        columns.push(column_for(&data, args, params, false)?);
        columns.push(column_for(&data, args, benchmark, true)?);
    }
    if columns.iter().all(|c| c.table.is_none()) {
        return Err(refcast::Error::InvalidParams(format!(
            "no horizon produced a class for {} in {}",
            args.firm, args.year
        ))
        .into());
    }

    let mut sources = inputs(&args.panel);
    if let Some(p) = &args.results {
        sources.push(p);
    }
    emit(args.output.out.as_deref(), cli, "baserates", &sources, |w| match args.output.format {
        Format::Csv => write_base_rates(&columns, w),
        Format::Json => write_json(&columns, w),
    })
}
