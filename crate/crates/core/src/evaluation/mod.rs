//! Calibration scoring of PIT samples and the backtest grid.

mod backtest;
mod gof;
mod grid;
mod report;

pub use backtest::{decile_levels, predictor_influence, run_backtest, InfluenceRow, PitSample, SkipCounts, SkipSummary};
pub use gof::{
    cvm_statistic, ks_statistic, mean_abs_deviation_pp, quantile_deviation, GofScores, QUANTILE_LEVELS,
};
pub use grid::{rank_results, ranked_by, run_grid, GridFile, GridResult, GridSpec, Measure};
pub use report::{read_results_csv, write_rank_report, write_results_csv, RankRow, RESULTS_HEADER};
