//! Small statistics toolkit: least squares, Kolmogorov–Smirnov, binomial
//! intervals, bootstrap.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope (0 for two points).
    pub slope_stderr: f64,
    pub r_squared: f64,
}

/// Ordinary least squares `y = slope·x + intercept`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<LinearFit> {
    if xs.len() != ys.len() {
        return Err(Error::Spec("linear fit needs equally many x and y values".into()));
    }
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return Err(Error::Domain("linear fit needs at least two points".into()));
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::Domain("linear fit needs at least two distinct x values".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs.iter().zip(ys).map(|(x, y)| (y - slope * x - intercept).powi(2)).sum();
    let slope_stderr = if xs.len() > 2 { (sse / (n - 2.0) / sxx).sqrt() } else { 0.0 };
    let r_squared = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    Ok(LinearFit {
        slope,
        intercept,
        slope_stderr,
        r_squared,
    })
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

pub fn median(xs: &[f64]) -> Option<f64> {
    quantile(xs, 0.5)
}

/// Linear-interpolation quantile (type 7).
pub fn quantile(xs: &[f64], p: f64) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let h = (v.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    Some(v[lo] + (h - lo as f64) * (v[hi] - v[lo]))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
}

impl KsResult {
    /// Asymptotic critical value at significance `alpha`.
    pub fn critical_value(&self, alpha: f64) -> f64 {
        ks_critical_value(self.n, alpha)
    }

    pub fn passes(&self, alpha: f64) -> bool {
        self.p_value > alpha
    }
}

/// `Q_KS(λ) = 2 Σ_{k≥1} (-1)^{k-1} exp(-2k²λ²)`.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=200 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-18 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// `c(α)/√n` with `Q_KS(c) = α`, solved by bisection.
pub fn ks_critical_value(n: usize, alpha: f64) -> f64 {
    let (mut lo, mut hi) = (0.2, 5.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if kolmogorov_survival(mid) > alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi) / (n as f64).sqrt()
}

/// One-sample KS test of `samples` against a continuous CDF, with the
/// Stephens small-sample correction of the asymptotic p-value.
pub fn ks_one_sample(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<KsResult> {
    if samples.is_empty() {
        return Err(Error::Insufficient("KS test needs at least one sample".into()));
    }
    let mut v = samples.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in v.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / n).max((i as f64 + 1.0) / n - f);
    }
    let sqrt_n = n.sqrt();
    let p_value = kolmogorov_survival((sqrt_n + 0.12 + 0.11 / sqrt_n) * d);
    Ok(KsResult {
        statistic: d,
        p_value,
        n: v.len(),
    })
}

/// CDF of a density given by cell averages on a uniform periodic grid,
/// piecewise linear inside each cell. Coordinates are cell centers
/// `x_j = x0 + j·dx`; cell `j` covers `[x_j - dx/2, x_j + dx/2)`.
#[derive(Debug, Clone)]
pub struct HistogramCdf {
    x_start: f64,
    dx: f64,
    cumulative: Vec<f64>,
}

impl HistogramCdf {
    pub fn new(first_center: f64, dx: f64, weights: &[f64]) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || weights.iter().any(|w| *w < 0.0) {
            return Err(Error::Domain("histogram weights must be non-negative with positive total".into()));
        }
        let mut cumulative = Vec::with_capacity(weights.len() + 1);
        let mut acc = 0.0;
        cumulative.push(0.0);
        for w in weights {
            acc += w / total;
            cumulative.push(acc);
        }
        Ok(HistogramCdf {
            x_start: first_center - 0.5 * dx,
            dx,
            cumulative,
        })
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let u = (x - self.x_start) / self.dx;
        let n = self.cumulative.len() - 1;
        if u <= 0.0 {
            return 0.0;
        }
        if u >= n as f64 {
            return 1.0;
        }
        let j = u.floor() as usize;
        let f = u - j as f64;
        self.cumulative[j] + f * (self.cumulative[j + 1] - self.cumulative[j])
    }
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(successes: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let nf = n as f64;
    let p = successes as f64 / nf;
    let denom = 1.0 + z * z / nf;
    let center = (p + z * z / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z * z / (4.0 * nf * nf)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Binomial standard deviation of a frequency at true probability `p`.
pub fn binomial_sigma(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapInterval {
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
    pub standard_error: f64,
    pub level: f64,
}

impl BootstrapInterval {
    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }
}

/// Basic (reverse-percentile) bootstrap interval `[2θ̂ - q_{1-α/2}, 2θ̂ - q_{α/2}]`
/// for a statistic of two independent samples.
pub fn bootstrap_two_sample<T, R: Rng>(
    a: &[T],
    b: &[T],
    statistic: impl Fn(&[&T], &[&T]) -> f64,
    resamples: usize,
    level: f64,
    rng: &mut R,
) -> Result<BootstrapInterval> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Insufficient("bootstrap needs non-empty samples".into()));
    }
    let full_a: Vec<&T> = a.iter().collect();
    let full_b: Vec<&T> = b.iter().collect();
    let estimate = statistic(&full_a, &full_b);
    let mut replicates = Vec::with_capacity(resamples);
    let mut ra = Vec::with_capacity(a.len());
    let mut rb = Vec::with_capacity(b.len());
    for _ in 0..resamples {
        ra.clear();
        rb.clear();
        ra.extend((0..a.len()).map(|_| &a[rng.random_range(0..a.len())]));
        rb.extend((0..b.len()).map(|_| &b[rng.random_range(0..b.len())]));
        replicates.push(statistic(&ra, &rb));
    }
    let alpha = 1.0 - level;
    let q_lo = quantile(&replicates, alpha / 2.0).unwrap_or(estimate);
    let q_hi = quantile(&replicates, 1.0 - alpha / 2.0).unwrap_or(estimate);
    let standard_error = if replicates.len() > 1 { variance(&replicates).sqrt() } else { 0.0 };
    Ok(BootstrapInterval {
        estimate,
        lower: 2.0 * estimate - q_hi,
        upper: 2.0 * estimate - q_lo,
        standard_error,
        level,
    })
}

/// Two-sample permutation p-value of `statistic` (larger is more extreme).
pub fn permutation_p_value<T: Clone, R: Rng>(
    a: &[T],
    b: &[T],
    statistic: impl Fn(&[&T], &[&T]) -> f64,
    permutations: usize,
    rng: &mut R,
) -> f64 {
    use rand::seq::SliceRandom;
    let pooled: Vec<&T> = a.iter().chain(b).collect();
    let observed = statistic(&pooled[..a.len()], &pooled[a.len()..]);
    let mut shuffled = pooled.clone();
    let mut extreme = 0usize;
    for _ in 0..permutations {
        shuffled.shuffle(rng);
        if statistic(&shuffled[..a.len()], &shuffled[a.len()..]) >= observed {
            extreme += 1;
        }
    }
    (extreme + 1) as f64 / (permutations + 1) as f64
}
