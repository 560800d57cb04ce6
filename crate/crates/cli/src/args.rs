use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use refcast::{Measure, Method, PredictorId};
use serde::Serialize;

#[derive(Debug, Parser, Serialize)]
#[command(name = "refcast", version, about = "Reference-class forecasts of firm sales growth")]
pub struct Cli {
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true, env = "REFCAST_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    /// Validate, deflate and cache a firm-year panel.
    Ingest(IngestArgs),
    /// Summary table of all predictor variables.
    Predictors(PredictorsArgs),
    /// Write a synthetic panel with a known growth mechanism.
    Synth(SynthArgs),
    /// Backtest a grid of combinations and score their PIT samples.
    Backtest(BacktestArgs),
    /// Rank a results file by one goodness-of-fit measure.
    Rank(RankArgs),
    /// Members of one case's reference class, or the predictor-influence table.
    Class(ClassArgs),
    /// Quantile forecast, analyst-estimate placement and density for one case.
    Forecast(ForecastArgs),
    /// Base-rate tables per horizon next to the Mauboussin benchmark.
    Baserates(BaseratesArgs),
}

#[derive(Debug, Clone, Copy, Default, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Args, Serialize)]
pub struct PanelArgs {
    /// Panel CSV or a cache written by `ingest`.
    #[arg(long)]
    pub panel: PathBuf,
    /// Monthly CPI CSV (`year,month,cpi`) used to deflate USD fields.
    #[arg(long)]
    pub cpi: Option<PathBuf>,
    /// Drop financial and real-estate firms (SIC 6000-6799).
    #[arg(long)]
    pub exclude_sic: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct OutputArgs {
    /// Output file; standard output when omitted (no manifest is written then).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Args, Serialize)]
pub struct IngestArgs {
    #[command(flatten)]
    pub panel: PanelArgs,
    /// Cache file to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct PredictorsArgs {
    #[command(flatten)]
    pub panel: PanelArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 2000)]
    pub firms: usize,
    #[arg(long, default_value_t = 50)]
    pub years: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value_t = 1970)]
    pub start_year: i32,
    /// Yearly drift of the common operating-margin mean, in pp.
    #[arg(long, allow_negative_numbers = true)]
    pub drift: Option<f64>,
    /// Yearly probability that a firm leaves the panel.
    #[arg(long)]
    pub death_rate: Option<f64>,
    /// Growth independent of every predictor.
    #[arg(long)]
    pub independent: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct BacktestArgs {
    #[command(flatten)]
    pub panel: PanelArgs,
    /// `default` or a TOML grid file.
    #[arg(long, default_value = "default")]
    pub grid: String,
    /// Comma-separated horizons, overriding the grid's.
    #[arg(long, value_delimiter = ',')]
    pub horizons: Option<Vec<u32>>,
    #[arg(long)]
    pub min_class: Option<usize>,
    /// Leave the case's own firm out of its candidate pool.
    #[arg(long)]
    pub exclude_self: bool,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct RankArgs {
    /// Results file written by `backtest`.
    #[arg(long)]
    pub results: PathBuf,
    #[arg(long, default_value = "delta_q", value_parser = parse_measure)]
    #[serde(serialize_with = "measure_str")]
    pub by: Measure,
    /// Rows kept per horizon.
    #[arg(long)]
    pub top: Option<usize>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct SelectionArgs {
    #[arg(long, value_parser = parse_predictor, default_value = "sales")]
    #[serde(serialize_with = "display_str")]
    pub predictor: PredictorId,
    #[arg(long, default_value_t = 1)]
    pub horizon: u32,
    #[arg(long, default_value_t = 30)]
    pub window: u32,
    /// Relative class size; similarity method only.
    #[arg(long, default_value_t = 0.05)]
    pub size: f64,
    #[arg(long, value_parser = parse_method, default_value = "similarity")]
    pub method: Method,
    #[arg(long, default_value_t = refcast::refclass::DEFAULT_MIN_CLASS)]
    pub min_class: usize,
    #[arg(long)]
    pub exclude_self: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct ClassArgs {
    #[command(flatten)]
    pub panel: PanelArgs,
    /// Required unless `--influence` is given.
    #[arg(long, required_unless_present = "influence")]
    pub firm: Option<String>,
    #[arg(long)]
    pub year: i32,
    #[command(flatten)]
    pub selection: SelectionArgs,
    /// Report class location and scale at the predictor's decile levels instead.
    #[arg(long)]
    pub influence: bool,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct ForecastArgs {
    #[command(flatten)]
    pub panel: PanelArgs,
    #[arg(long)]
    pub firm: String,
    #[arg(long)]
    pub year: i32,
    #[command(flatten)]
    pub selection: SelectionArgs,
    /// Analyst estimates CSV with header `analyst_id,estimate_pct`.
    #[arg(long)]
    pub estimates: Option<PathBuf>,
    /// Density grid CSV; defaults to `<out>.density.csv` when `--out` is set.
    #[arg(long)]
    pub density_out: Option<PathBuf>,
    #[arg(long, default_value_t = 201)]
    pub grid_points: usize,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct BaseratesArgs {
    #[command(flatten)]
    pub panel: PanelArgs,
    #[arg(long)]
    pub firm: String,
    #[arg(long)]
    pub year: i32,
    #[arg(long, value_delimiter = ',', default_values_t = [1, 3, 5, 10])]
    pub horizons: Vec<u32>,
    #[arg(long, value_parser = parse_predictor, default_value = "sales")]
    #[serde(serialize_with = "display_str")]
    pub predictor: PredictorId,
    #[arg(long, default_value_t = 30)]
    pub window: u32,
    #[arg(long, default_value_t = 0.05)]
    pub size: f64,
    /// Take each horizon's best combination from this results file instead.
    #[arg(long)]
    pub results: Option<PathBuf>,
    #[arg(long, default_value = "delta_q", value_parser = parse_measure)]
    #[serde(serialize_with = "measure_str")]
    pub by: Measure,
    #[arg(long, default_value_t = refcast::refclass::DEFAULT_MIN_CLASS)]
    pub min_class: usize,
    /// Trim fraction for mean and standard deviation.
    #[arg(long, default_value_t = refcast::forecast::DEFAULT_TRIM)]
    pub trim: f64,
    #[command(flatten)]
    pub output: OutputArgs,
}

fn parse_predictor(s: &str) -> Result<PredictorId, String> {
    s.parse().map_err(|e: refcast::Error| e.to_string())
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: refcast::Error| e.to_string())
}

fn parse_measure(s: &str) -> Result<Measure, String> {
    s.parse().map_err(|e: refcast::Error| e.to_string())
}

fn display_str<S: serde::Serializer, T: std::fmt::Display>(v: &T, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(v)
}

fn measure_str<S: serde::Serializer>(m: &Measure, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(match m {
        Measure::DeltaQ => "delta_q",
        Measure::Ks => "ks",
        Measure::Cvm => "cvm",
    })
}
