//! Rank correlation and descriptive statistics.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("undefined correlation: {0} input is constant")]
    Constant(&'static str),
    #[error("non-finite value in input")]
    NonFinite,
    #[error("exact p-values are limited to n <= {max}, got {got}")]
    ExactTooLarge { max: usize, got: usize },
    #[error("empty input")]
    Empty,
    #[error("bucket width must be positive and finite")]
    BadBucketWidth,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub coefficient: f64,
    pub p_value: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PValueMethod {
    /// Student t approximation with n - 2 degrees of freedom.
    #[default]
    TApprox,
    /// Full permutation distribution; n <= [`MAX_EXACT_N`].
    Exact,
}

pub const MAX_EXACT_N: usize = 10;

/// 1-based ranks; tied values share the mean of the ranks they span.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let rank = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)
}

/// Two-sided p-value of a correlation coefficient under the t approximation.
pub fn t_approx_p_value(rho: f64, n: usize) -> f64 {
    let df = (n - 2) as f64;
    let denom = (1.0 - rho) * (1.0 + rho);
    if denom <= 0.0 {
        return 0.0;
    }
    let t = rho * (df / denom).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("df >= 1");
    (2.0 * dist.sf(t.abs())).clamp(0.0, 1.0)
}

fn check(x: &[f64], y: &[f64]) -> Result<(), StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 3 {
        return Err(StatsError::TooFewSamples {
            needed: 3,
            got: x.len(),
        });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    if x.iter().all(|v| *v == x[0]) {
        return Err(StatsError::Constant("first"));
    }
    if y.iter().all(|v| *v == y[0]) {
        return Err(StatsError::Constant("second"));
    }
    Ok(())
}

pub fn spearman(x: &[f64], y: &[f64]) -> Result<CorrelationResult, StatsError> {
    spearman_with(x, y, PValueMethod::TApprox)
}

pub fn spearman_with(
    x: &[f64],
    y: &[f64],
    method: PValueMethod,
) -> Result<CorrelationResult, StatsError> {
    check(x, y)?;
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    let rho = pearson(&rx, &ry);
    let p_value = match method {
        PValueMethod::TApprox => t_approx_p_value(rho, x.len()),
        PValueMethod::Exact => exact_p_value(&rx, &ry, rho)?,
    };
    Ok(CorrelationResult {
        coefficient: rho,
        p_value,
        n: x.len(),
    })
}

/// Share of permutations of `ry` whose |rho| reaches the observed |rho|.
fn exact_p_value(rx: &[f64], ry: &[f64], rho: f64) -> Result<f64, StatsError> {
    let n = rx.len();
    if n > MAX_EXACT_N {
        return Err(StatsError::ExactTooLarge {
            max: MAX_EXACT_N,
            got: n,
        });
    }
    let target = rho.abs() - 1e-12;
    let mut perm = ry.to_vec();
    let mut hits = 0u64;
    let mut total = 0u64;
    // Heap's algorithm, iterative.
    let mut c = vec![0usize; n];
    let mut visit = |p: &[f64]| {
        total += 1;
        if pearson(rx, p).abs() >= target {
            hits += 1;
        }
    };
    visit(&perm);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            visit(&perm);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    Ok(hits as f64 / total as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bucket {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Descriptive {
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    pub histogram: Vec<Bucket>,
}

/// Buckets `[k*w, (k+1)*w)` from the bucket holding `start` through the one holding `end`.
pub fn histogram(
    values: &[f64],
    width: f64,
    start: f64,
    end: f64,
) -> Result<Vec<Bucket>, StatsError> {
    if !(width.is_finite() && width > 0.0) {
        return Err(StatsError::BadBucketWidth);
    }
    let first = (start / width).floor() as i64;
    let last = (end / width).floor() as i64;
    let mut buckets: Vec<Bucket> = (first..=last)
        .map(|k| Bucket {
            lower: k as f64 * width,
            upper: (k + 1) as f64 * width,
            count: 0,
        })
        .collect();
    for v in values {
        let k = (v / width).floor() as i64;
        if (first..=last).contains(&k) {
            buckets[(k - first) as usize].count += 1;
        }
    }
    Ok(buckets)
}

pub fn descriptive(values: &[f64], bucket_width: f64) -> Result<Descriptive, StatsError> {
    if values.is_empty() {
        return Err(StatsError::Empty);
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    };
    let histogram = histogram(values, bucket_width, sorted[0], sorted[n - 1])?;
    Ok(Descriptive {
        n,
        mean,
        median,
        histogram,
    })
}
