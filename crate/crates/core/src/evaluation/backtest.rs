use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::forecast::{quantile_sorted, trimmed_mean, trimmed_std, DEFAULT_TRIM};
use crate::predictors::Dataset;
use crate::refclass::{
    gather_candidates, select_range, window_available, Candidate, Case, ClassParams, SkipReason,
};

/// Per-reason counts of initial cases that produced no PIT value.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SkipCounts {
    counts: [u64; 6],
}

impl SkipCounts {
    fn slot(reason: SkipReason) -> usize {
        SkipReason::ALL.iter().position(|&r| r == reason).unwrap()
    }

    pub fn add(&mut self, reason: SkipReason, n: u64) {
        self.counts[Self::slot(reason)] += n;
    }

    pub fn get(&self, reason: SkipReason) -> u64 {
        self.counts[Self::slot(reason)]
    }

    pub fn merge(&mut self, other: &SkipCounts) {
        for (a, b) in self.counts.iter_mut().zip(other.counts) {
            *a += b;
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Dominant reason, if any case was skipped.
    pub fn dominant(&self) -> Option<SkipReason> {
        SkipReason::ALL
            .into_iter()
            .filter(|&r| self.get(r) > 0)
            .max_by_key(|&r| self.get(r))
    }

    pub fn summary(&self) -> SkipSummary {
        use SkipReason::*;
        SkipSummary {
            small: self.get(ClassTooSmall) + self.get(NoCandidates),
            window: self.get(WindowStart) + self.get(BeyondHorizon),
            missing: self.get(PredictorMissing) + self.get(OutcomeMissing),
        }
    }
}

impl Serialize for SkipCounts {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut map = s.serialize_map(Some(6))?;
        for r in SkipReason::ALL {
            map.serialize_entry(r.as_str(), &self.get(r))?;
        }
        map.end()
    }
}

/// Skip counts folded into the three results-file columns.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct SkipSummary {
    pub small: u64,
    pub window: u64,
    pub missing: u64,
}

/// PIT values of one parameter combination over all admissible initial cases.
#[derive(Debug, Clone, Serialize)]
pub struct PitSample {
    pub params: ClassParams,
    pub values: Vec<f64>,
    pub skips: SkipCounts,
    /// Classes with a member whose outcome year `s + h` exceeds the case year.
    pub lookahead_violations: u64,
}

impl PitSample {
    pub fn m(&self) -> usize {
        self.values.len()
    }
}

#[derive(Default)]
struct YearPart {
    values: Vec<f64>,
    skips: SkipCounts,
    lookahead_violations: u64,
}

/// Evaluates every firm-year of the panel as an initial case.
///
/// Cases are processed per year in parallel; the pool of a year is built once
/// and shared by its cases. The merge is in year order, so the output does
/// not depend on the thread count.
pub fn run_backtest(data: &Dataset, params: &ClassParams) -> Result<PitSample> {
    params.validate()?;
    data.outcomes.column(params.horizon)?;
    let years: Vec<i32> = data.panel.years().collect();
    let parts: Vec<YearPart> = years
        .par_iter()
        .map(|&t| backtest_year(data, params, t))
        .collect::<Result<_>>()?;

    let mut sample = PitSample {
        params: *params,
        values: Vec::new(),
        skips: SkipCounts::default(),
        lookahead_violations: 0,
    };
    for part in parts {
        sample.values.extend(part.values);
        sample.skips.merge(&part.skips);
        sample.lookahead_violations += part.lookahead_violations;
    }
    Ok(sample)
}

fn backtest_year(data: &Dataset, params: &ClassParams, t: i32) -> Result<YearPart> {
    let mut part = YearPart::default();
    let cases = data.panel.records_in_year(t);
    if !window_available(data, params, t) {
        part.skips.add(SkipReason::WindowStart, cases.len() as u64);
        return Ok(part);
    }
    if t + params.horizon as i32 > data.panel.end_year() {
        part.skips.add(SkipReason::BeyondHorizon, cases.len() as u64);
        return Ok(part);
    }

    let outcomes = data.outcomes.column(params.horizon)?;
    let mut eligible = Vec::with_capacity(cases.len());
    for &idx in cases {
        let Some(realized) = outcomes[idx] else {
            part.skips.add(SkipReason::OutcomeMissing, 1);
            continue;
        };
        let Some(value) = data.predictors.key(params.predictor, idx) else {
            part.skips.add(SkipReason::PredictorMissing, 1);
            continue;
        };
        let case = Case {
            firm: Some(data.panel.firm_of(idx)),
            year: t,
            value,
        };
        eligible.push((case, realized));
    }
    if eligible.is_empty() {
        return Ok(part);
    }

    let mut pool = gather_candidates(data, params, t)?;
    pool.sort_by(Candidate::cmp_key);

    let mut own = Vec::new();
    for (case, realized) in eligible {
        let view: &[Candidate] = if params.exclude_self {
            own.clear();
            own.extend(pool.iter().filter(|c| Some(c.firm) != case.firm));
            &own
        } else {
            &pool
        };
        if view.is_empty() {
            part.skips.add(SkipReason::NoCandidates, 1);
            continue;
        }
        match select_range(view, &case, params) {
            Ok(range) => {
                let members = &view[range];
                let mut below = 0usize;
                let mut latest = i32::MIN;
                for m in members {
                    if m.outcome <= realized {
                        below += 1;
                    }
                    latest = latest.max(m.year);
                }
                if latest + params.horizon as i32 > t {
                    part.lookahead_violations += 1;
                }
                part.values.push(below as f64 / members.len() as f64);
            }
            Err(reason) => part.skips.add(reason, 1),
        }
    }
    Ok(part)
}

/// Location and scale of the class built around one artificial case.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InfluenceRow {
    pub level: f64,
    pub predictor_value: f64,
    pub n: usize,
    pub median: f64,
    pub trimmed_mean: f64,
    pub trimmed_std: f64,
}

/// Builds classes for artificial cases at the given quantile levels of the
/// predictor among the candidates of `year`, reporting median, trimmed mean
/// and trimmed standard deviation of each class.
pub fn predictor_influence(
    data: &Dataset,
    params: &ClassParams,
    year: i32,
    levels: &[f64],
) -> Result<Vec<InfluenceRow>> {
    params.validate()?;
    if !window_available(data, params, year) {
        return Err(Error::Skipped(SkipReason::WindowStart));
    }
    let mut pool = gather_candidates(data, params, year)?;
    if pool.is_empty() {
        return Err(Error::Skipped(SkipReason::NoCandidates));
    }
    pool.sort_by(Candidate::cmp_key);
    let values: Vec<f64> = pool.iter().map(|c| c.value).collect();

    levels
        .iter()
        .map(|&level| {
            let value = quantile_sorted(&values, level)?;
            let case = Case {
                firm: None,
                year,
                value,
            };
            let range = select_range(&pool, &case, params).map_err(Error::Skipped)?;
            let mut outcomes: Vec<f64> = pool[range].iter().map(|c| c.outcome).collect();
            outcomes.sort_by(f64::total_cmp);
            Ok(InfluenceRow {
                level,
                predictor_value: value,
                n: outcomes.len(),
                median: quantile_sorted(&outcomes, 0.5)?,
                trimmed_mean: trimmed_mean(&outcomes, DEFAULT_TRIM)?,
                trimmed_std: trimmed_std(&outcomes, DEFAULT_TRIM)?,
            })
        })
        .collect()
}

/// Nine decile levels 10%..90%.
pub fn decile_levels() -> Vec<f64> {
    (1..=9).map(|i| i as f64 / 10.0).collect()
}
