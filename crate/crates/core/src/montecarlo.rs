//! Seeded Monte Carlo plumbing: substreams, summary statistics, empirical
//! CDFs and Kolmogorov–Smirnov distances.

use serde::Serialize;

use crate::distributions::{mix64, RngStream, GOLDEN_GAMMA};
use crate::error::{domain, Result};

/// Quantile levels reported by [`summarize`].
pub const DEFAULT_QUANTILE_LEVELS: [f64; 9] = [0.01, 0.05, 0.1, 0.25, 0.5, 0.75, 0.9, 0.95, 0.99];

/// Seed of substream `index` under `master_seed`.
pub fn derive_seed(master_seed: u64, index: u64) -> u64 {
    mix64(master_seed ^ GOLDEN_GAMMA.wrapping_mul(index))
}

/// Independent reproducible stream for work item `index`.
pub fn substream(master_seed: u64, index: u64) -> RngStream {
    RngStream::from_seed(derive_seed(master_seed, index))
}

/// Pairwise (cascade) summation.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const LEAF: usize = 64;
    if values.len() <= LEAF {
        values.iter().sum()
    } else {
        let (a, b) = values.split_at(values.len() / 2);
        pairwise_sum(a) + pairwise_sum(b)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QuantilePoint {
    pub level: f64,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MCSummary {
    pub n_samples: usize,
    pub mean: f64,
    /// Unbiased (divisor n − 1).
    pub variance: f64,
    pub std_error_mean: f64,
    /// `√((m₄ − s⁴(n−3)/(n−1)) / n)` with `m₄` the fourth central sample moment.
    pub std_error_variance: f64,
    pub quantiles: Vec<QuantilePoint>,
}

impl MCSummary {
    pub fn quantile(&self, level: f64) -> Option<f64> {
        self.quantiles
            .iter()
            .find(|q| q.level == level)
            .map(|q| q.value)
    }
}

pub fn summarize(values: &[f64]) -> Result<MCSummary> {
    summarize_with_levels(values, &DEFAULT_QUANTILE_LEVELS)
}

pub fn summarize_with_levels(values: &[f64], levels: &[f64]) -> Result<MCSummary> {
    let n = values.len();
    if n < 2 {
        return domain(format!("summary needs at least 2 samples, got {n}"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return domain("summary over non-finite samples");
    }
    let nf = n as f64;
    let mean = pairwise_sum(values) / nf;
    let dev2: Vec<f64> = values.iter().map(|v| (v - mean).powi(2)).collect();
    let variance = pairwise_sum(&dev2) / (nf - 1.0);
    let dev4: Vec<f64> = dev2.iter().map(|d| d * d).collect();
    let m4 = pairwise_sum(&dev4) / nf;
    let var_of_var = (m4 - variance * variance * (nf - 3.0) / (nf - 1.0)) / nf;

    let dist = EmpiricalDistribution::new(values.to_vec())?;
    let quantiles = levels
        .iter()
        .map(|&level| {
            Ok(QuantilePoint {
                level,
                value: dist.quantile(level)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(MCSummary {
        n_samples: n,
        mean,
        variance,
        std_error_mean: (variance / nf).sqrt(),
        std_error_variance: var_of_var.max(0.0).sqrt(),
        quantiles,
    })
}

/// Sorted sample supporting ECDF, quantile and KS queries.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalDistribution {
    sorted: Vec<f64>,
}

impl EmpiricalDistribution {
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return domain("empirical distribution needs at least one value");
        }
        if values.iter().any(|v| !v.is_finite()) {
            return domain("empirical distribution over non-finite values");
        }
        values.sort_by(f64::total_cmp);
        Ok(Self { sorted: values })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn sorted_values(&self) -> &[f64] {
        &self.sorted
    }

    /// Fraction of values `≤ x`.
    pub fn ecdf(&self, x: f64) -> f64 {
        self.sorted.partition_point(|&v| v <= x) as f64 / self.sorted.len() as f64
    }

    /// Fraction of values strictly above `x`.
    pub fn exceedance(&self, x: f64) -> f64 {
        let above = self.sorted.len() - self.sorted.partition_point(|&v| v <= x);
        above as f64 / self.sorted.len() as f64
    }

    /// Order statistic at rank `p(n−1)+1`, linearly interpolated.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&p) {
            return domain(format!("quantile level must lie in [0, 1], got {p}"));
        }
        let pos = p * (self.sorted.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = (lo + 1).min(self.sorted.len() - 1);
        let frac = pos - lo as f64;
        Ok(self.sorted[lo] + frac * (self.sorted[hi] - self.sorted[lo]))
    }

    /// Two-sided KS distance to a continuous reference CDF.
    pub fn ks_statistic(&self, mut cdf: impl FnMut(f64) -> f64) -> f64 {
        let n = self.sorted.len() as f64;
        self.sorted
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = cdf(x);
                let above = (i + 1) as f64 / n - f;
                let below = f - i as f64 / n;
                above.abs().max(below.abs())
            })
            .fold(0.0, f64::max)
    }
}

/// Free-function form of [`EmpiricalDistribution::ecdf`].
pub fn ecdf(dist: &EmpiricalDistribution, x: f64) -> f64 {
    dist.ecdf(x)
}

/// Free-function form of [`EmpiricalDistribution::ks_statistic`].
pub fn ks_statistic(dist: &EmpiricalDistribution, cdf: impl FnMut(f64) -> f64) -> f64 {
    dist.ks_statistic(cdf)
}
