use serde::Serialize;

use crate::error::{Error, Result};
use crate::forecast::quantile_sorted;

/// Quantile levels compared against the uniform distribution.
pub const QUANTILE_LEVELS: [f64; 9] = [0.01, 0.05, 0.10, 0.25, 0.50, 0.75, 0.90, 0.95, 0.99];

/// Goodness-of-fit scores of one combination and its ranks within a horizon.
/// Smaller is better for all three measures.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct GofScores {
    pub delta_q: Option<f64>,
    pub ks: Option<f64>,
    pub cvm: Option<f64>,
    pub delta_q_rank: usize,
    pub ks_rank: usize,
    pub cvm_rank: usize,
}

impl GofScores {
    /// Unranked scores of a PIT sample; measures that need more values stay `None`.
    pub fn of(values: &[f64]) -> Self {
        GofScores {
            delta_q: quantile_deviation(values).ok(),
            ks: ks_statistic(values).ok(),
            cvm: cvm_statistic(values).ok(),
            ..GofScores::default()
        }
    }
}

fn sorted_probabilities(values: &[f64], needed: usize) -> Result<Vec<f64>> {
    if values.len() < needed {
        return Err(Error::TooFewValues {
            needed,
            got: values.len(),
        });
    }
    if values.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::InvalidParams("PIT values must lie in [0, 1]".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted)
}

/// `sqrt(m) * sup |F_m(x) - x|` via the order-statistic form.
pub fn ks_statistic(values: &[f64]) -> Result<f64> {
    let p = sorted_probabilities(values, 1)?;
    let m = p.len() as f64;
    let d = p
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let i = i as f64;
            ((i + 1.0) / m - x).max(x - i / m)
        })
        .fold(0.0, f64::max);
    Ok(m.sqrt() * d)
}

/// `m * integral (F_m(x) - x)^2 dx` via `1/(12m) + sum (p_(i) - (2i-1)/(2m))^2`.
pub fn cvm_statistic(values: &[f64]) -> Result<f64> {
    let p = sorted_probabilities(values, 1)?;
    let m = p.len() as f64;
    let sum: f64 = p
        .iter()
        .enumerate()
        .map(|(i, &x)| (x - (2.0 * i as f64 + 1.0) / (2.0 * m)).powi(2))
        .sum();
    Ok(1.0 / (12.0 * m) + sum)
}

/// Sum over [`QUANTILE_LEVELS`] of `|quantile(p, level) - level|`.
pub fn quantile_deviation(values: &[f64]) -> Result<f64> {
    let p = sorted_probabilities(values, 2)?;
    QUANTILE_LEVELS
        .iter()
        .map(|&level| quantile_sorted(&p, level).map(|q| (q - level).abs()))
        .sum()
}

/// Average deviation per quantile level, in percentage points.
pub fn mean_abs_deviation_pp(delta_q: f64) -> f64 {
    100.0 * delta_q / QUANTILE_LEVELS.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ks_examples() {
        assert!((ks_statistic(&[0.5]).unwrap() - 0.5).abs() < 1e-15);
        let v = ks_statistic(&[0.1, 0.5, 0.9]).unwrap();
        assert!((v - 3f64.sqrt() * (0.7 / 3.0)).abs() < 1e-12);
        assert!((v - 0.4041).abs() < 1e-4);
        let m = 8;
        let mids: Vec<f64> = (0..m).map(|i| (2 * i + 1) as f64 / (2 * m) as f64).collect();
        let expected = (m as f64).sqrt() / (2 * m) as f64;
        assert!((ks_statistic(&mids).unwrap() - expected).abs() < 1e-12);
        assert!(ks_statistic(&[]).is_err());
    }

    #[test]
    fn cvm_examples() {
        assert!((cvm_statistic(&[0.5]).unwrap() - 1.0 / 12.0).abs() < 1e-15);
        assert!((cvm_statistic(&[0.25, 0.75]).unwrap() - 1.0 / 24.0).abs() < 1e-15);
        assert!(cvm_statistic(&[]).is_err());
    }

    #[test]
    fn quantile_deviation_examples() {
        assert!((quantile_deviation(&[0.5; 10]).unwrap() - 3.18).abs() < 1e-12);
        // Sample 0, 0.01, ..., 1: every listed level is an exact order statistic.
        let grid: Vec<f64> = (0..=100).map(|i| i as f64 / 100.0).collect();
        assert!(quantile_deviation(&grid).unwrap() < 1e-12);
        assert!(quantile_deviation(&[0.3]).is_err());
        assert!(quantile_deviation(&[0.3, 1.2]).is_err());
    }

    #[test]
    fn mean_deviation_in_percentage_points() {
        let pp = mean_abs_deviation_pp(0.0155);
        assert!((pp - 0.17).abs() < 0.005, "{pp}");
    }

    proptest! {
        #[test]
        fn score_bounds(values in prop::collection::vec(0.0f64..=1.0, 2..300)) {
            let m = values.len() as f64;
            let ks = ks_statistic(&values).unwrap();
            prop_assert!(ks >= 0.0 && ks / m.sqrt() <= 1.0 + 1e-12);
            prop_assert!(cvm_statistic(&values).unwrap() >= 1.0 / (12.0 * m) - 1e-15);
            let bound: f64 = QUANTILE_LEVELS.iter().map(|&l| l.max(1.0 - l)).sum();
            let dq = quantile_deviation(&values).unwrap();
            prop_assert!((0.0..=bound + 1e-12).contains(&dq));
        }
    }
}
