use approx::assert_relative_eq;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use refcast::evaluation::{decile_levels, predictor_influence, run_backtest};
use refcast::{ClassParams, Dataset, FirmYearRecord, Panel, PredictorId, SkipReason};

/// `firms` firms over `years`, sales compounding by a random yearly rate and
/// beta set to the growth that follows, so beta predicts the outcome exactly.
fn panel(firms: usize, years: std::ops::RangeInclusive<i32>, seed: u64) -> Vec<FirmYearRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for f in 0..firms {
        let mut sales = 100.0;
        for year in years.clone() {
            let growth: f64 = rng.random_range(-30.0..40.0);
            let mut rec = FirmYearRecord::new(format!("F{f:03}"), year, Some(sales));
            rec.ebit = Some(sales * rng.random_range(-0.1..0.2));
            rec.beta = Some(growth);
            out.push(rec);
            sales *= 1.0 + growth / 100.0;
        }
    }
    out
}

fn dataset(records: Vec<FirmYearRecord>) -> Dataset {
    Dataset::new(Panel::new(records).unwrap(), &[1, 3])
}

#[test]
fn admissible_case_years_follow_window_and_horizon() {
    let data = dataset(panel(30, 1950..=2019, 1));
    let params = ClassParams::similarity(PredictorId::Sales, 1, 5, 0.5);
    let sample = run_backtest(&data, &params).unwrap();
    // 1950..=1954 lack a full window, 2019 has no realised outcome.
    assert_eq!(sample.skips.get(SkipReason::WindowStart), 30 * 5);
    assert_eq!(sample.skips.get(SkipReason::BeyondHorizon), 30);
    assert_eq!(sample.m(), 30 * (2018 - 1955 + 1));
    assert_eq!(sample.skips.total(), 30 * 6);
}

#[test]
fn tiny_panel_skips_for_small_classes() {
    let data = dataset(panel(5, 2000..=2010, 2));
    let params = ClassParams::similarity(PredictorId::Sales, 1, 3, 0.01);
    let sample = run_backtest(&data, &params).unwrap();
    assert_eq!(sample.m(), 0);
    assert_eq!(sample.skips.dominant(), Some(SkipReason::ClassTooSmall));
    assert_eq!(sample.skips.summary().small, sample.skips.get(SkipReason::ClassTooSmall));
}

#[test]
fn pit_sample_ignores_record_order_and_thread_count() {
    let records = panel(80, 1980..=2000, 3);
    let params = ClassParams::similarity(PredictorId::OperatingMargin, 1, 5, 0.1);
    let base = run_backtest(&dataset(records.clone()), &params).unwrap();

    let mut shuffled = records;
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(9));
    let data = dataset(shuffled);
    let reordered = run_backtest(&data, &params).unwrap();
    assert_eq!(base.values, reordered.values);
    assert_eq!(base.skips, reordered.skips);

    for threads in [1, 3, 8] {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        let again = pool.install(|| run_backtest(&data, &params)).unwrap();
        assert_eq!(base.values, again.values, "{threads} threads");
    }
}

#[test]
fn group_and_mauboussin_backtests_run() {
    let mut records = panel(60, 1990..=2005, 4);
    for r in &mut records {
        let f: u16 = r.firm_id[1..].parse().unwrap();
        r.sic = Some(if f.is_multiple_of(2) { 2834 } else { 2899 });
    }
    let data = dataset(records);
    let major = run_backtest(&data, &ClassParams::group(PredictorId::MajorGroup, 1, 5)).unwrap();
    let industry = run_backtest(&data, &ClassParams::group(PredictorId::IndustryGroup, 1, 5)).unwrap();
    assert!(major.m() > 0 && industry.m() > 0);
    assert_eq!(major.m(), industry.m());
    let maub = run_backtest(&data, &ClassParams::mauboussin(1, 5)).unwrap();
    assert!(maub.m() > 0);
    assert!(maub.values.iter().all(|p| (0.0..=1.0).contains(p)));
}

#[test]
fn influence_of_constant_outcomes_is_flat() {
    let mut records = Vec::new();
    for f in 0..40 {
        let mut sales = 50.0 + f as f64;
        for year in 2000..=2012 {
            let mut rec = FirmYearRecord::new(format!("C{f:02}"), year, Some(sales));
            rec.beta = Some(f as f64 + year as f64 / 100.0);
            records.push(rec);
            sales *= 1.05;
        }
    }
    let data = dataset(records);
    let params = ClassParams::similarity(PredictorId::Beta, 1, 10, 0.1);
    let rows = predictor_influence(&data, &params, 2012, &decile_levels()).unwrap();
    assert_eq!(rows.len(), 9);
    for r in rows {
        assert_relative_eq!(r.median, 5.0, epsilon = 1e-9);
        assert_relative_eq!(r.trimmed_mean, 5.0, epsilon = 1e-9);
        assert!(r.trimmed_std.abs() < 1e-9);
    }
}

#[test]
fn influence_medians_rise_when_outcome_equals_predictor() {
    let data = dataset(panel(100, 1990..=2005, 5));
    let params = ClassParams::similarity(PredictorId::Beta, 1, 10, 0.05);
    let rows = predictor_influence(&data, &params, 2005, &decile_levels()).unwrap();
    for w in rows.windows(2) {
        assert!(w[1].median > w[0].median);
        assert!(w[1].predictor_value >= w[0].predictor_value);
    }
}

#[test]
fn influence_needs_candidates() {
    let data = dataset(panel(10, 2000..=2004, 6));
    let params = ClassParams::similarity(PredictorId::Beta, 1, 10, 0.05);
    assert!(predictor_influence(&data, &params, 2004, &decile_levels()).is_err());
}
