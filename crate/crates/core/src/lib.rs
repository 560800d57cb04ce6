//! Reference-class forecasting for firm-year panels.
//!
//! The crate builds per-case reference classes from historical firm-year
//! observations, turns each class into an empirical forecast distribution of
//! h-year sales growth, and scores predictor / hyper-parameter combinations by
//! how uniform their probability-integral-transform (PIT) samples are.
//!
//! Modules follow the pipeline order:
//!
//! * [`panel`] loads, deflates and indexes the firm-year panel.
//! * [`predictors`] materialises predictor variables and forward growth outcomes.
//! * [`refclass`] collects candidate pools and selects reference classes.
//! * [`forecast`] evaluates empirical distributions (PIT, quantiles, base rates, KDE).
//! * [`evaluation`] scores PIT samples and runs the backtest grid.
//! * [`synth`] generates synthetic panels with a known mechanism, plus test oracles.

pub mod error;
pub mod evaluation;
pub mod forecast;
pub mod panel;
pub mod predictors;
pub mod refclass;
pub mod synth;

/// Version of this library.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use error::{Error, Result};
pub use evaluation::{GofScores, GridResult, GridSpec, Measure, PitSample, SkipCounts};
pub use forecast::{BaseRateTable, EmpiricalDistribution};
pub use panel::{CpiSeries, FirmYearRecord, IngestOptions, LoadReport, Panel};
pub use predictors::{Dataset, OutcomeTable, PredictorId, PredictorTable, PredictorValue};
pub use synth::{generate_panel, oracle_class, Mechanism, SynthOutput, SynthSpec};
pub use refclass::{Candidate, CandidatePool, Case, ClassParams, Method, ReferenceClass, SkipReason};
