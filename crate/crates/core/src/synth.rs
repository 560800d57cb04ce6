//! Synthetic panels with a known mechanism, and brute-force test oracles.
//!
//! Each firm carries an operating margin that follows an AR(1) process around
//! a firm effect plus a common mean that may drift over calendar time. Next
//! year's sales growth is `g(margin) + sigma(margin) * eps` with `g`
//! piecewise-linear and `sigma` v-shaped, truncated at -99 %. Sales are
//! compounded from the drawn growth, so the one-year forward CAGR of the
//! panel reproduces every draw. Beta, P/E and P/B are independent noise.

use std::cmp::Ordering;
use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::{FirmYearRecord, IngestOptions, Panel};
use crate::predictors::Dataset;
use crate::refclass::{half_size, Candidate, Case, ClassParams, ReferenceClass, SkipReason};

/// Lowest growth the generator emits, in percent.
pub const GROWTH_TRUNCATION: f64 = -99.0;

const SIC_CODES: [u16; 8] = [1311, 2834, 2899, 3571, 3674, 4911, 5311, 7372];

/// Parameters of the synthetic panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub n_firms: usize,
    pub n_years: usize,
    pub start_year: i32,
    pub seed: u64,
    /// Common margin mean in the first year, percent.
    pub margin_mean: f64,
    /// Change of the common margin mean per calendar year, pp.
    pub margin_drift: f64,
    /// Standard deviation of the permanent firm effect.
    pub firm_spread: f64,
    /// AR(1) coefficient of the firm's margin deviation.
    pub persistence: f64,
    /// Innovation standard deviation of the AR(1) deviation.
    pub margin_noise: f64,
    /// Knots `(margin, expected growth)` of `g`, ascending in margin.
    pub growth_knots: Vec<(f64, f64)>,
    pub sigma_base: f64,
    pub sigma_slope: f64,
    pub sigma_center: f64,
    /// Yearly exit probability once a firm has two observations.
    pub death_rate: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_firms: 2000,
            n_years: 50,
            start_year: 1970,
            seed: 7,
            margin_mean: 2.0,
            margin_drift: 0.3,
            firm_spread: 6.0,
            persistence: 0.7,
            margin_noise: 3.0,
            growth_knots: vec![(-30.0, -12.0), (0.0, 1.0), (10.0, 5.0), (25.0, 10.0), (50.0, 15.0)],
            sigma_base: 6.0,
            sigma_slope: 0.4,
            sigma_center: 8.0,
            death_rate: 0.0,
        }
    }
}

impl SynthSpec {
    /// Growth independent of every predictor: `g = 0`, constant scale, no drift.
    pub fn independent(seed: u64) -> Self {
        SynthSpec {
            seed,
            margin_drift: 0.0,
            growth_knots: vec![(0.0, 0.0)],
            sigma_slope: 0.0,
            ..SynthSpec::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::DegenerateSpec(msg.to_string()));
        if self.n_firms == 0 {
            return bad("n_firms must be positive");
        }
        if self.n_years < 2 {
            return bad("n_years must be at least 2");
        }
        let reals = [
            self.margin_mean,
            self.margin_drift,
            self.firm_spread,
            self.persistence,
            self.margin_noise,
            self.sigma_base,
            self.sigma_slope,
            self.sigma_center,
            self.death_rate,
        ];
        if reals.iter().any(|v| !v.is_finite()) {
            return bad("parameters must be finite");
        }
        if self.firm_spread < 0.0 || self.margin_noise < 0.0 {
            return bad("standard deviations must be non-negative");
        }
        if self.persistence.abs() >= 1.0 {
            return bad("persistence must lie in (-1, 1)");
        }
        if self.sigma_base <= 0.0 || self.sigma_slope < 0.0 {
            return bad("sigma needs a positive base and a non-negative slope");
        }
        if !(0.0..1.0).contains(&self.death_rate) {
            return bad("death_rate must lie in [0, 1)");
        }
        if self.growth_knots.is_empty() {
            return bad("growth mechanism needs at least one knot");
        }
        if self.growth_knots.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return bad("growth knots must be finite");
        }
        for w in self.growth_knots.windows(2) {
            if w[1].0 <= w[0].0 {
                return bad("growth knots must be strictly ascending in margin");
            }
            if w[1].1 < w[0].1 {
                return bad("growth mechanism must be non-decreasing");
            }
        }
        Ok(())
    }

    pub fn mechanism(&self) -> Mechanism {
        Mechanism {
            knots: self.growth_knots.clone(),
            sigma_base: self.sigma_base,
            sigma_slope: self.sigma_slope,
            sigma_center: self.sigma_center,
        }
    }
}

/// The true one-year growth law given the operating margin.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Mechanism {
    knots: Vec<(f64, f64)>,
    sigma_base: f64,
    sigma_slope: f64,
    sigma_center: f64,
}

impl Mechanism {
    /// Expected growth before truncation; linear extrapolation beyond the end knots.
    pub fn location(&self, x: f64) -> f64 {
        let k = &self.knots;
        if k.len() == 1 {
            return k[0].1;
        }
        let i = k.partition_point(|&(kx, _)| kx < x).clamp(1, k.len() - 1);
        let ((x0, y0), (x1, y1)) = (k[i - 1], k[i]);
        y0 + (x - x0) * (y1 - y0) / (x1 - x0)
    }

    pub fn scale(&self, x: f64) -> f64 {
        self.sigma_base + self.sigma_slope * (x - self.sigma_center).abs()
    }

    /// `P(Y <= y | X = x)` including the truncation atom at -99.
    pub fn cdf(&self, x: f64, y: f64) -> f64 {
        if y < GROWTH_TRUNCATION {
            return 0.0;
        }
        let z = (y - self.location(x)) / self.scale(x);
        0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
    }

    fn draw<R: Rng>(&self, x: f64, rng: &mut R) -> f64 {
        let eps: f64 = StandardNormal.sample(rng);
        (self.location(x) + self.scale(x) * eps).max(GROWTH_TRUNCATION)
    }
}

/// A generated panel and what is known about how it was made.
#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub dataset: Dataset,
    /// Drawn one-year growth from each panel record, aligned with `panel.records()`.
    pub generated_growth: Vec<Option<f64>>,
    /// Operating margin that drove each draw, aligned the same way.
    pub generating_margin: Vec<f64>,
    pub truth: Mechanism,
}

impl SynthOutput {
    /// True conditional CDF at the realised growth for every record with a draw.
    pub fn true_pit(&self) -> Vec<f64> {
        self.generated_growth
            .iter()
            .zip(&self.generating_margin)
            .filter_map(|(y, &x)| y.map(|y| self.truth.cdf(x, y)))
            .collect()
    }
}

/// Generating margin and drawn one-year growth (none in a firm's last year), per record.
pub type Drivers = Vec<(f64, Option<f64>)>;

/// Raw records in firm order; deterministic in `spec.seed`.
pub fn generate_records(spec: &SynthSpec) -> Result<(Vec<FirmYearRecord>, Drivers)> {
    spec.validate()?;
    let mech = spec.mechanism();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let start_sales = LogNormal::new(100f64.ln(), 1.0).expect("finite lognormal");
    let multiple = LogNormal::new(0.0, 0.4).expect("finite lognormal");
    let stationary = spec.margin_noise / (1.0 - spec.persistence * spec.persistence).sqrt();
    let width = (spec.n_firms.max(2) - 1).to_string().len();

    let mut records = Vec::with_capacity(spec.n_firms * spec.n_years);
    let mut drivers = Vec::with_capacity(records.capacity());
    for i in 0..spec.n_firms {
        let firm_id = format!("S{i:0width$}");
        let effect = spec.firm_spread * std_normal.sample(&mut rng);
        let mut deviation = stationary * std_normal.sample(&mut rng);
        let mut sales: f64 = start_sales.sample(&mut rng);
        let sic = SIC_CODES[rng.random_range(0..SIC_CODES.len())];
        let turnover = multiple.sample(&mut rng);
        let equity_share = rng.random_range(0.2..0.6);

        for t in 0..spec.n_years {
            let year = spec.start_year + t as i32;
            let margin = spec.margin_mean + spec.margin_drift * t as f64 + effect + deviation;
            let assets = sales * turnover;
            let mut rec = FirmYearRecord::new(firm_id.clone(), year, Some(sales));
            rec.ebit = Some(margin * sales / 100.0);
            rec.total_assets = Some(assets);
            rec.shareholder_equity = Some(assets * equity_share);
            rec.sic = Some(sic);
            rec.beta = Some(1.0 + 0.3 * std_normal.sample(&mut rng));
            rec.pe_ratio = Some(15.0 * multiple.sample(&mut rng));
            rec.pb_ratio = Some(2.0 * multiple.sample(&mut rng));
            records.push(rec);

            let last = t + 1 == spec.n_years || (t >= 1 && rng.random::<f64>() < spec.death_rate);
            if last {
                drivers.push((margin, None));
                break;
            }
            let growth = mech.draw(margin, &mut rng);
            drivers.push((margin, Some(growth)));
            sales *= 1.0 + growth / 100.0;
            deviation = spec.persistence * deviation + spec.margin_noise * std_normal.sample(&mut rng);
        }
    }
    Ok((records, drivers))
}

/// Generates the panel and its derived tables for `horizons`.
pub fn generate_panel(spec: &SynthSpec, horizons: &[u32]) -> Result<SynthOutput> {
    let (records, drivers) = generate_records(spec)?;
    let mut by_key: HashMap<(String, i32), (f64, Option<f64>)> = records
        .iter()
        .zip(drivers)
        .map(|(r, d)| ((r.firm_id.clone(), r.fiscal_year), d))
        .collect();
    let (panel, _) = Panel::build(records, None, &IngestOptions::default())?;
    let (generating_margin, generated_growth) = panel
        .records()
        .iter()
        .map(|r| by_key.remove(&(r.firm_id.clone(), r.fiscal_year)).expect("record generated"))
        .unzip();
    Ok(SynthOutput {
        dataset: Dataset::new(panel, horizons),
        generated_growth,
        generating_margin,
        truth: spec.mechanism(),
    })
}

fn literal_order(a: (f64, i32, u32), b: (f64, i32, u32)) -> Ordering {
    match a.0.partial_cmp(&b.0) {
        Some(Ordering::Equal) | None => a.0.total_cmp(&b.0),
        Some(o) => o,
    }
    .then(a.1.cmp(&b.1))
    .then(a.2.cmp(&b.2))
}

/// Reference implementation of similarity selection for tests.
///
/// Re-sorts the pool, finds the case's rank by a linear scan and walks
/// outwards one entry at a time, taking up to `floor(cN/2)` entries on each
/// side and the shortfall of one side from the other.
pub fn oracle_class(
    entries: &[Candidate],
    case: &Case,
    params: &ClassParams,
) -> std::result::Result<ReferenceClass, SkipReason> {
    if entries.is_empty() {
        return Err(SkipReason::NoCandidates);
    }
    if !case.value.is_finite() {
        return Err(SkipReason::PredictorMissing);
    }
    let key = |c: &Candidate| (c.value, c.year, c.firm);
    let mut sorted = entries.to_vec();
    sorted.sort_by(|a, b| literal_order(key(a), key(b)));

    let case_key = (case.value, case.year, case.firm.unwrap_or(u32::MAX));
    let rank = sorted
        .iter()
        .filter(|c| literal_order(key(c), case_key) == Ordering::Less)
        .count();

    let half = half_size(params.size.unwrap_or(0.0), sorted.len());
    if half == 0 || 2 * half < params.min_class {
        return Err(SkipReason::ClassTooSmall);
    }

    let mut below: Vec<usize> = Vec::new();
    let mut above: Vec<usize> = Vec::new();
    let mut down = rank;
    let mut up = rank;
    while below.len() < half && down > 0 {
        down -= 1;
        below.push(down);
    }
    while above.len() < half && up < sorted.len() {
        above.push(up);
        up += 1;
    }
    while below.len() + above.len() < 2 * half {
        if up < sorted.len() {
            above.push(up);
            up += 1;
        } else if down > 0 {
            down -= 1;
            below.push(down);
        } else {
            break;
        }
    }

    let mut picked: Vec<usize> = below.into_iter().chain(above).collect();
    picked.sort_unstable();
    Ok(ReferenceClass {
        members: picked.into_iter().map(|i| sorted[i]).collect(),
        case: *case,
        params: *params,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::{quantile_deviation, run_backtest};
    use crate::predictors::PredictorId;
    use crate::refclass::{select_similarity_class, CandidatePool};
    use proptest::prelude::*;

    fn small(seed: u64) -> SynthSpec {
        SynthSpec {
            n_firms: 60,
            n_years: 12,
            seed,
            ..SynthSpec::default()
        }
    }

    #[test]
    fn same_seed_same_panel() {
        let a = generate_records(&small(3)).unwrap().0;
        let b = generate_records(&small(3)).unwrap().0;
        let c = generate_records(&small(4)).unwrap().0;
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn degenerate_specs_are_rejected() {
        let cases = [
            SynthSpec { n_firms: 0, ..small(1) },
            SynthSpec { n_years: 1, ..small(1) },
            SynthSpec { sigma_base: 0.0, ..small(1) },
            SynthSpec { persistence: 1.0, ..small(1) },
            SynthSpec { growth_knots: vec![], ..small(1) },
            SynthSpec { growth_knots: vec![(0.0, 5.0), (1.0, 4.0)], ..small(1) },
            SynthSpec { death_rate: 1.0, ..small(1) },
        ];
        for spec in cases {
            assert!(matches!(generate_panel(&spec, &[1]), Err(Error::DegenerateSpec(_))), "{spec:?}");
        }
    }

    #[test]
    fn panel_recovers_the_drawn_growth() {
        let out = generate_panel(&small(11), &[1]).unwrap();
        let col = out.dataset.outcomes.column(1).unwrap();
        let mut checked = 0;
        for (got, want) in col.iter().zip(&out.generated_growth) {
            match (got, want) {
                (Some(g), Some(w)) => {
                    assert!((g - w).abs() < 1e-9, "{g} vs {w}");
                    checked += 1;
                }
                (None, None) => {}
                other => panic!("availability mismatch {other:?}"),
            }
        }
        assert_eq!(checked, 60 * 11);
        for (idx, &x) in out.generating_margin.iter().enumerate() {
            let m = out.dataset.predictors.key(PredictorId::OperatingMargin, idx).unwrap();
            assert!((m - x).abs() < 1e-9);
        }
    }

    #[test]
    fn death_ends_firms_early_but_keeps_two_rows() {
        let spec = SynthSpec { death_rate: 0.2, ..small(5) };
        let out = generate_panel(&spec, &[1]).unwrap();
        let panel = &out.dataset.panel;
        assert!(panel.len() < 60 * 12);
        assert_eq!(panel.firm_count(), 60);
        for f in 0..panel.firm_count() as u32 {
            assert!(panel.firm_range(f).len() >= 2);
        }
    }

    #[test]
    fn mechanism_interpolates_and_extrapolates() {
        let m = SynthSpec::default().mechanism();
        assert!((m.location(5.0) - 3.0).abs() < 1e-12);
        assert!((m.location(-60.0) - (-25.0)).abs() < 1e-12);
        assert!((m.location(70.0) - (70.0 - 50.0) * 5.0 / 25.0 - 15.0).abs() < 1e-12);
        assert!((m.scale(8.0) - 6.0).abs() < 1e-12);
        assert!((m.cdf(5.0, 3.0) - 0.5).abs() < 1e-12);
        assert_eq!(m.cdf(5.0, -99.5), 0.0);
    }

    #[test]
    fn true_pit_is_uniform() {
        let spec = SynthSpec {
            n_firms: 1200,
            n_years: 50,
            seed: 21,
            ..SynthSpec::default()
        };
        let out = generate_panel(&spec, &[1]).unwrap();
        let pit = out.true_pit();
        assert!(pit.len() >= 50_000, "m = {}", pit.len());
        let dq = quantile_deviation(&pit).unwrap();
        assert!(dq < 0.02, "delta_q = {dq}");
    }

    #[test]
    fn independent_growth_gives_uniform_pit_for_any_predictor() {
        let spec = SynthSpec {
            n_firms: 400,
            n_years: 30,
            ..SynthSpec::independent(9)
        };
        let out = generate_panel(&spec, &[1]).unwrap();
        for predictor in [PredictorId::OperatingMargin, PredictorId::Beta] {
            let params = ClassParams::similarity(predictor, 1, 10, 0.05);
            let sample = run_backtest(&out.dataset, &params).unwrap();
            assert!(sample.m() > 5_000);
            let dq = quantile_deviation(&sample.values).unwrap();
            assert!(dq < 0.05, "{predictor}: delta_q = {dq}");
        }
    }

    #[test]
    fn class_medians_rise_with_the_case_margin() {
        let spec = SynthSpec {
            n_years: 40,
            seed: 2,
            ..SynthSpec::default()
        };
        let out = generate_panel(&spec, &[1]).unwrap();
        let params = ClassParams::similarity(PredictorId::OperatingMargin, 1, 30, 0.05);
        let rows = crate::evaluation::predictor_influence(
            &out.dataset,
            &params,
            2009,
            &crate::evaluation::decile_levels(),
        )
        .unwrap();
        for w in rows.windows(2) {
            assert!(w[1].median > w[0].median, "{rows:?}");
        }
        let stds: Vec<f64> = rows.iter().map(|r| r.trimmed_std).collect();
        let middle = stds[3..6].iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(stds[0] > middle && stds[8] > middle, "{stds:?}");
    }

    fn pool_and_case() -> impl Strategy<Value = (Vec<Candidate>, Case, f64, usize)> {
        (
            prop::collection::vec((0u8..30, 0i32..5, 0u32..40, -50.0f64..50.0), 1..400),
            prop_oneof![Just(-1.0f64), Just(31.0), 0.0f64..30.0, (0u8..30).prop_map(f64::from)],
            prop::option::of(0u32..40),
            prop_oneof![Just(0.01f64), Just(0.025), Just(0.05), Just(0.1), Just(0.3)],
            0usize..25,
        )
            .prop_map(|(raw, value, firm, size, min_class)| {
                let mut seen = std::collections::HashSet::new();
                let entries: Vec<Candidate> = raw
                    .into_iter()
                    .filter(|&(_, y, f, _)| seen.insert((y, f)))
                    .map(|(v, year, firm, outcome)| Candidate {
                        firm,
                        year: 2000 + year,
                        value: f64::from(v),
                        outcome,
                    })
                    .collect();
                let case = Case { firm, year: 2002, value };
                (entries, case, size, min_class)
            })
    }

    proptest! {
        #[test]
        fn oracle_matches_selector((entries, case, size, min_class) in pool_and_case()) {
            let params = ClassParams::similarity(PredictorId::Sales, 1, 5, size).with_min_class(min_class);
            let pool = CandidatePool::from_entries(entries.clone());
            let fast = select_similarity_class(&pool, &case, &params).map(|c| c.members);
            let slow = oracle_class(&entries, &case, &params).map(|c| c.members);
            prop_assert_eq!(fast, slow);
        }
    }
}
