use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::backtest::{run_backtest, SkipSummary};
use super::gof::GofScores;
use crate::error::{Error, Result};
use crate::predictors::{Dataset, PredictorId};
use crate::refclass::{ClassParams, Method, DEFAULT_MIN_CLASS};

pub const DEFAULT_HORIZONS: [u32; 4] = [1, 3, 5, 10];
pub const DEFAULT_WINDOWS: [u32; 4] = [5, 10, 20, 30];
pub const DEFAULT_SIZES: [f64; 3] = [0.050, 0.025, 0.010];

/// Cross product of predictors, windows, sizes and horizons, plus the
/// benchmark methods and any explicitly listed combinations.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub horizons: Vec<u32>,
    pub windows: Vec<u32>,
    pub sizes: Vec<f64>,
    pub predictors: Vec<PredictorId>,
    pub benchmarks: Vec<Method>,
    pub min_class: usize,
    pub exclude_self: bool,
    pub extra: Vec<ClassParams>,
}

impl Default for GridSpec {
    /// 27 numeric predictors x 3 sizes x 4 windows, Mauboussin and both group
    /// benchmarks over 4 windows: 336 combinations per horizon.
    fn default() -> Self {
        GridSpec {
            horizons: DEFAULT_HORIZONS.to_vec(),
            windows: DEFAULT_WINDOWS.to_vec(),
            sizes: DEFAULT_SIZES.to_vec(),
            predictors: PredictorId::numeric(),
            benchmarks: vec![Method::Mauboussin, Method::MajorGroup, Method::IndustryGroup],
            min_class: DEFAULT_MIN_CLASS,
            exclude_self: false,
            extra: Vec::new(),
        }
    }
}

/// TOML form of a [`GridSpec`]; every key is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridFile {
    pub horizons: Option<Vec<u32>>,
    pub windows: Option<Vec<u32>>,
    pub sizes: Option<Vec<f64>>,
    pub predictors: Option<Vec<PredictorId>>,
    pub benchmarks: Option<Vec<Method>>,
    pub min_class: Option<usize>,
    pub exclude_self: Option<bool>,
    #[serde(default)]
    pub combination: Vec<ComboEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComboEntry {
    pub predictor: PredictorId,
    pub horizon: u32,
    pub window: u32,
    pub size: Option<f64>,
    #[serde(default = "default_method")]
    pub method: Method,
}

fn default_method() -> Method {
    Method::Similarity
}

impl GridSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let file: GridFile = toml::from_str(text).map_err(|e| Error::Grid(e.to_string()))?;
        let base = GridSpec::default();
        let min_class = file.min_class.unwrap_or(base.min_class);
        let exclude_self = file.exclude_self.unwrap_or(false);
        let extra = file
            .combination
            .into_iter()
            .map(|c| ClassParams {
                predictor: c.predictor,
                horizon: c.horizon,
                window: c.window,
                size: c.size,
                method: c.method,
                min_class,
                exclude_self,
            })
            .collect();
        Ok(GridSpec {
            horizons: file.horizons.unwrap_or(base.horizons),
            windows: file.windows.unwrap_or(base.windows),
            sizes: file.sizes.unwrap_or(base.sizes),
            predictors: file.predictors.unwrap_or(base.predictors),
            benchmarks: file.benchmarks.unwrap_or(base.benchmarks),
            min_class,
            exclude_self,
            extra,
        })
    }

    /// Enumerated combinations with duplicates removed, and the number of
    /// duplicates dropped.
    pub fn combinations(&self) -> Result<(Vec<ClassParams>, usize)> {
        let mut all = Vec::new();
        for &h in &self.horizons {
            for &predictor in &self.predictors {
                for &w in &self.windows {
                    for &c in &self.sizes {
                        all.push(ClassParams::similarity(predictor, h, w, c));
                    }
                }
            }
            for &method in &self.benchmarks {
                for &w in &self.windows {
                    all.push(match method {
                        Method::Mauboussin => ClassParams::mauboussin(h, w),
                        Method::MajorGroup => ClassParams::group(PredictorId::MajorGroup, h, w),
                        Method::IndustryGroup => ClassParams::group(PredictorId::IndustryGroup, h, w),
                        Method::Similarity => {
                            return Err(Error::Grid("similarity is not a benchmark".into()))
                        }
                    });
                }
            }
        }
        for p in &mut all {
            p.min_class = self.min_class;
            p.exclude_self = self.exclude_self;
        }
        all.extend(self.extra.iter().copied());

        let mut unique: Vec<ClassParams> = Vec::with_capacity(all.len());
        let mut duplicates = 0;
        for p in all {
            p.validate()?;
            if unique.iter().any(|u| u.order(&p) == Ordering::Equal) {
                log::warn!(
                    "duplicate grid entry {} h={} w={} size={:?} ({}) ignored",
                    p.predictor,
                    p.horizon,
                    p.window,
                    p.size,
                    p.method
                );
                duplicates += 1;
            } else {
                unique.push(p);
            }
        }
        Ok((unique, duplicates))
    }

    /// Outcome horizons the dataset must provide for this grid.
    pub fn required_horizons(&self) -> Vec<u32> {
        let mut hs: Vec<u32> = self
            .horizons
            .iter()
            .copied()
            .chain(self.extra.iter().map(|p| p.horizon))
            .collect();
        hs.sort_unstable();
        hs.dedup();
        hs
    }
}

/// Scored outcome of one combination.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridResult {
    pub params: ClassParams,
    pub m: usize,
    pub skips: SkipSummary,
    pub lookahead_violations: u64,
    pub scores: GofScores,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Measure {
    DeltaQ,
    Ks,
    Cvm,
}

impl Measure {
    pub const ALL: [Measure; 3] = [Measure::DeltaQ, Measure::Ks, Measure::Cvm];

    pub fn value(self, s: &GofScores) -> Option<f64> {
        match self {
            Measure::DeltaQ => s.delta_q,
            Measure::Ks => s.ks,
            Measure::Cvm => s.cvm,
        }
    }

    fn set_rank(self, s: &mut GofScores, rank: usize) {
        match self {
            Measure::DeltaQ => s.delta_q_rank = rank,
            Measure::Ks => s.ks_rank = rank,
            Measure::Cvm => s.cvm_rank = rank,
        }
    }
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Measure::DeltaQ => "delta_q",
            Measure::Ks => "ks",
            Measure::Cvm => "cvm",
        })
    }
}

impl FromStr for Measure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "delta_q" => Ok(Measure::DeltaQ),
            "ks" => Ok(Measure::Ks),
            "cvm" => Ok(Measure::Cvm),
            other => Err(Error::InvalidParams(format!(
                "unknown measure {other:?} (expected delta_q, ks or cvm)"
            ))),
        }
    }
}

/// Ascending, missing scores last.
fn cmp_score(a: Option<f64>, b: Option<f64>) -> Ordering {
    match (a, b) {
        (Some(x), Some(y)) => x.total_cmp(&y),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => Ordering::Equal,
    }
}

fn cmp_by(measure: Measure, a: &GridResult, b: &GridResult) -> Ordering {
    cmp_score(measure.value(&a.scores), measure.value(&b.scores))
        .then_with(|| cmp_score(a.scores.delta_q, b.scores.delta_q))
        .then_with(|| cmp_score(a.scores.ks, b.scores.ks))
        .then_with(|| cmp_score(a.scores.cvm, b.scores.cvm))
        .then_with(|| a.params.order(&b.params))
}

/// Assigns 1-based ranks per measure within each horizon.
pub fn rank_results(results: &mut [GridResult]) {
    let mut by_horizon: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, r) in results.iter().enumerate() {
        by_horizon.entry(r.params.horizon).or_default().push(i);
    }
    for idxs in by_horizon.values() {
        for measure in Measure::ALL {
            let mut order = idxs.clone();
            order.sort_by(|&a, &b| cmp_by(measure, &results[a], &results[b]));
            for (rank, &i) in order.iter().enumerate() {
                measure.set_rank(&mut results[i].scores, rank + 1);
            }
        }
    }
}

/// Results sorted by horizon, then ascending by `measure` with the
/// `(delta_q, ks, cvm, params)` tie-break.
pub fn ranked_by(results: &[GridResult], measure: Measure) -> Vec<GridResult> {
    let mut out = results.to_vec();
    out.sort_by(|a, b| {
        a.params
            .horizon
            .cmp(&b.params.horizon)
            .then_with(|| cmp_by(measure, a, b))
    });
    out
}

/// Runs every combination of `spec`, scores and ranks the PIT samples.
/// Output order follows the combination order, independent of scheduling.
pub fn run_grid(data: &Dataset, spec: &GridSpec) -> Result<Vec<GridResult>> {
    let (combos, _) = spec.combinations()?;
    let mut results: Vec<GridResult> = combos
        .par_iter()
        .map(|params| {
            let sample = run_backtest(data, params)?;
            Ok(GridResult {
                params: *params,
                m: sample.m(),
                skips: sample.skips.summary(),
                lookahead_violations: sample.lookahead_violations,
                scores: GofScores::of(&sample.values),
            })
        })
        .collect::<Result<_>>()?;
    rank_results(&mut results);
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn result(delta_q: f64, ks: f64, cvm: f64, window: u32) -> GridResult {
        GridResult {
            params: ClassParams::similarity(PredictorId::Sales, 1, window, 0.05),
            m: 100,
            skips: SkipSummary::default(),
            lookahead_violations: 0,
            scores: GofScores {
                delta_q: Some(delta_q),
                ks: Some(ks),
                cvm: Some(cvm),
                ..GofScores::default()
            },
        }
    }

    #[test]
    fn default_grid_has_336_per_horizon() {
        let spec = GridSpec::default();
        let (combos, dups) = spec.combinations().unwrap();
        assert_eq!(dups, 0);
        assert_eq!(combos.len(), 336 * 4);
        for h in DEFAULT_HORIZONS {
            let per: Vec<_> = combos.iter().filter(|c| c.horizon == h).collect();
            assert_eq!(per.len(), 336);
            assert_eq!(per.iter().filter(|c| c.method == Method::Similarity).count(), 324);
            assert_eq!(per.iter().filter(|c| c.method == Method::Mauboussin).count(), 4);
            assert_eq!(
                per.iter()
                    .filter(|c| matches!(c.method, Method::MajorGroup | Method::IndustryGroup))
                    .count(),
                8
            );
        }
    }

    #[test]
    fn restricted_grid_and_duplicates() {
        let text = r#"
            horizons = [1]
            windows = [5]
            sizes = [0.05]
            predictors = ["operating_margin"]
            benchmarks = []

            [[combination]]
            predictor = "operating_margin"
            horizon = 1
            window = 5
            size = 0.05
        "#;
        let spec = GridSpec::from_toml(text).unwrap();
        let (combos, dups) = spec.combinations().unwrap();
        assert_eq!(combos.len(), 1);
        assert_eq!(dups, 1);
        assert!(GridSpec::from_toml("bogus = 1").is_err());
        assert!(GridSpec::from_toml("predictors = [\"nope\"]").is_err());
    }

    #[test]
    fn ranks_follow_scores() {
        let mut rs = vec![result(0.2, 2.0, 2.0, 10), result(0.1, 3.0, 1.0, 5), result(0.3, 1.0, 3.0, 20)];
        rank_results(&mut rs);
        let dq: Vec<usize> = rs.iter().map(|r| r.scores.delta_q_rank).collect();
        let ks: Vec<usize> = rs.iter().map(|r| r.scores.ks_rank).collect();
        assert_eq!(dq, vec![2, 1, 3]);
        assert_eq!(ks, vec![2, 3, 1]);
        let sorted = ranked_by(&rs, Measure::Ks);
        assert_eq!(sorted[0].params.window, 20);
    }

    #[test]
    fn single_result_ranks_first() {
        let mut rs = vec![result(0.2, 2.0, 2.0, 10)];
        rank_results(&mut rs);
        let s = rs[0].scores;
        assert_eq!((s.delta_q_rank, s.ks_rank, s.cvm_rank), (1, 1, 1));
    }

    #[test]
    fn ties_break_on_secondary_measures() {
        let mut rs = vec![result(0.1, 2.0, 1.0, 10), result(0.1, 1.0, 1.0, 20), result(0.1, 1.0, 1.0, 5)];
        rank_results(&mut rs);
        let dq: Vec<usize> = rs.iter().map(|r| r.scores.delta_q_rank).collect();
        assert_eq!(dq, vec![3, 2, 1]);
    }

    #[test]
    fn unscored_rows_rank_last() {
        let mut empty = result(0.0, 0.0, 0.0, 30);
        empty.scores = GofScores::default();
        empty.m = 0;
        let mut rs = vec![empty, result(0.5, 5.0, 5.0, 5)];
        rank_results(&mut rs);
        assert_eq!(rs[0].scores.delta_q_rank, 2);
        assert_eq!(rs[1].scores.cvm_rank, 1);
    }
}
