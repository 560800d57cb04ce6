//! Distributional outputs of a reference class: PIT values, quantiles,
//! trimmed moments, base-rate tables and kernel density curves.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};

/// Lower bound of any growth rate in %.
pub const GROWTH_FLOOR: f64 = -100.0;

/// Default trimming fraction for means and standard deviations.
pub const DEFAULT_TRIM: f64 = 0.025;

/// Right-closed bucket edges of the base-rate table, in %.
pub const BUCKET_EDGES: [f64; 15] = [
    -25.0, -20.0, -15.0, -10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0, 45.0,
];

/// Linear interpolation between order statistics of an ascending slice:
/// position `level * (n - 1)`.
pub fn quantile_sorted(sorted: &[f64], level: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&level) {
        return Err(Error::LevelOutOfRange(level));
    }
    let n = sorted.len();
    if n == 0 {
        return Err(Error::TooFewValues { needed: 1, got: 0 });
    }
    let pos = level * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let frac = pos - lo as f64;
    if lo + 1 >= n || frac == 0.0 {
        return Ok(sorted[lo.min(n - 1)]);
    }
    Ok(sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]))
}

/// Sorted outcome sample of a reference class.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalDistribution {
    outcomes: Vec<f64>,
}

impl EmpiricalDistribution {
    pub fn new(mut outcomes: Vec<f64>) -> Result<Self> {
        if outcomes.is_empty() {
            return Err(Error::TooFewValues { needed: 1, got: 0 });
        }
        if outcomes.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        if let Some(&v) = outcomes.iter().find(|&&v| v < GROWTH_FLOOR) {
            return Err(Error::BelowSupport(v));
        }
        outcomes.sort_by(f64::total_cmp);
        Ok(EmpiricalDistribution { outcomes })
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    pub fn outcomes(&self) -> &[f64] {
        &self.outcomes
    }

    /// Share of outcomes `<= realized`.
    pub fn pit(&self, realized: f64) -> f64 {
        let below = self.outcomes.partition_point(|&y| y <= realized);
        below as f64 / self.outcomes.len() as f64
    }

    pub fn quantile(&self, level: f64) -> Result<f64> {
        quantile_sorted(&self.outcomes, level)
    }

    pub fn median(&self) -> f64 {
        quantile_sorted(&self.outcomes, 0.5).expect("non-empty")
    }

    /// Each estimate paired with the share of outcomes at or below it.
    pub fn place_estimates(&self, estimates: &[f64]) -> Vec<(f64, f64)> {
        estimates.iter().map(|&e| (e, self.pit(e))).collect()
    }

    pub fn base_rates(&self, alpha: f64) -> Result<BaseRateTable> {
        BaseRateTable::from_distribution(self, alpha)
    }
}

fn trimmed_slice(values: &[f64], alpha: f64, needed: usize) -> Result<Vec<f64>> {
    if !(0.0..0.5).contains(&alpha) {
        return Err(Error::InvalidParams(format!("trim fraction {alpha} outside [0, 0.5)")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let cut = (alpha * sorted.len() as f64).floor() as usize;
    let kept = sorted.len().saturating_sub(2 * cut);
    if kept < needed {
        return Err(Error::TooFewValues { needed, got: kept });
    }
    Ok(sorted[cut..sorted.len() - cut].to_vec())
}

/// Mean after removing `floor(alpha * n)` values from each end.
pub fn trimmed_mean(values: &[f64], alpha: f64) -> Result<f64> {
    let kept = trimmed_slice(values, alpha, 1)?;
    Ok(kept.iter().sum::<f64>() / kept.len() as f64)
}

/// Sample standard deviation (n - 1 denominator) of the trimmed vector.
pub fn trimmed_std(values: &[f64], alpha: f64) -> Result<f64> {
    let kept = trimmed_slice(values, alpha, 2)?;
    Ok(sample_std(&kept))
}

fn sample_std(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    (ss / (n - 1.0)).sqrt()
}

/// Bucketed growth distribution with location, scale and tail quantiles.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BaseRateTable {
    /// Shares in % over the 16 buckets `(-inf,-25], (-25,-20], ..., (40,45], (45,inf)`.
    pub shares: [f64; 16],
    pub n: usize,
    pub trim: f64,
    pub trimmed_mean: f64,
    pub median: f64,
    /// Missing when fewer than two values survive trimming.
    pub trimmed_std: Option<f64>,
    pub q025: f64,
    pub q975: f64,
}

impl BaseRateTable {
    pub fn from_distribution(dist: &EmpiricalDistribution, alpha: f64) -> Result<Self> {
        let values = dist.outcomes();
        let mut counts = [0usize; 16];
        for &v in values {
            counts[bucket_of(v)] += 1;
        }
        let n = values.len();
        let shares = counts.map(|c| 100.0 * c as f64 / n as f64);
        Ok(BaseRateTable {
            shares,
            n,
            trim: alpha,
            trimmed_mean: trimmed_mean(values, alpha)?,
            median: dist.median(),
            trimmed_std: trimmed_std(values, alpha).ok(),
            q025: dist.quantile(0.025)?,
            q975: dist.quantile(0.975)?,
        })
    }

    /// Row labels of the bucket section.
    pub fn bucket_labels() -> Vec<String> {
        let mut labels = vec![format!("<= {}", BUCKET_EDGES[0])];
        for w in BUCKET_EDGES.windows(2) {
            labels.push(format!("]{},{}]", w[0], w[1]));
        }
        labels.push(format!("> {}", BUCKET_EDGES[BUCKET_EDGES.len() - 1]));
        labels
    }
}

/// Index of the right-closed bucket containing `v`.
pub fn bucket_of(v: f64) -> usize {
    BUCKET_EDGES.partition_point(|&edge| edge < v)
}

/// Gaussian kernel density on `[-100, inf)` with reflection at the boundary.
#[derive(Debug, Clone)]
pub struct Kde {
    sample: Vec<f64>,
    bandwidth: f64,
}

/// Silverman's rule: `0.9 * min(sd, IQR / 1.34) * n^(-1/5)`. When one of the
/// spreads is zero the other is used; both zero yields zero.
pub fn silverman_bandwidth(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n < 2 {
        return 0.0;
    }
    let sd = sample_std(sorted);
    let iqr = quantile_sorted(sorted, 0.75).unwrap() - quantile_sorted(sorted, 0.25).unwrap();
    let spread = match (sd > 0.0, iqr > 0.0) {
        (true, true) => sd.min(iqr / 1.34),
        (true, false) => sd,
        (false, true) => iqr / 1.34,
        (false, false) => 0.0,
    };
    0.9 * spread * (n as f64).powf(-0.2)
}

fn gaussian(u: f64) -> f64 {
    (-0.5 * u * u).exp() / (2.0 * PI).sqrt()
}

impl Kde {
    pub fn new(dist: &EmpiricalDistribution) -> Result<Self> {
        let sample = dist.outcomes().to_vec();
        if sample.len() < 2 {
            return Err(Error::TooFewValues {
                needed: 2,
                got: sample.len(),
            });
        }
        let bandwidth = silverman_bandwidth(&sample);
        if bandwidth.is_nan() || bandwidth <= 0.0 {
            return Err(Error::ZeroBandwidth);
        }
        Ok(Kde { sample, bandwidth })
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    /// Plain Gaussian KDE, ignoring the support bound.
    pub fn raw_density(&self, x: f64) -> f64 {
        let h = self.bandwidth;
        self.sample.iter().map(|&xi| gaussian((x - xi) / h)).sum::<f64>()
            / (self.sample.len() as f64 * h)
    }

    /// Reflected density: zero below -100, integrates to one above it.
    pub fn density(&self, x: f64) -> f64 {
        if x < GROWTH_FLOOR {
            return 0.0;
        }
        let h = self.bandwidth;
        let mirror = 2.0 * GROWTH_FLOOR;
        self.sample
            .iter()
            .map(|&xi| gaussian((x - xi) / h) + gaussian((x - (mirror - xi)) / h))
            .sum::<f64>()
            / (self.sample.len() as f64 * h)
    }
}

/// Reflected Gaussian KDE evaluated on `grid`.
pub fn kde_density(dist: &EmpiricalDistribution, grid: &[f64]) -> Result<Vec<f64>> {
    let kde = Kde::new(dist)?;
    Ok(grid.iter().map(|&x| kde.density(x)).collect())
}
