//! Streaming statistics used by the Monte Carlo estimators.

/// Log of the mean of `exp(v)` with a delta-method standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogMeanExp {
    pub log_mean: f64,
    /// Standard error of `log_mean`, i.e. `sd(w) / (mean(w) √n)` for `w = exp(v)`.
    pub std_error: f64,
    pub n: usize,
}

/// `log Σ exp(v)` with a running maximum. Returns `-inf` for an empty slice.
pub fn logsumexp(values: &[f64]) -> f64 {
    let mut max = f64::NEG_INFINITY;
    let mut acc = 0.0;
    for &v in values {
        if v == f64::NEG_INFINITY {
            continue;
        }
        if v > max {
            acc = acc * (max - v).exp() + 1.0;
            max = v;
        } else {
            acc += (v - max).exp();
        }
    }
    if max == f64::NEG_INFINITY {
        f64::NEG_INFINITY
    } else {
        max + acc.ln()
    }
}

pub fn log_mean_exp(values: &[f64]) -> LogMeanExp {
    let n = values.len();
    let lse = logsumexp(values);
    let log_mean = lse - (n as f64).ln();
    if n < 2 || !log_mean.is_finite() {
        return LogMeanExp { log_mean, std_error: 0.0, n };
    }
    // Weights relative to the mean: w_i / mean(w), which has mean exactly 1.
    let mut sq = 0.0;
    for &v in values {
        let r = (v - log_mean).exp();
        sq += (r - 1.0) * (r - 1.0);
    }
    let sd_rel = (sq / (n as f64 - 1.0)).sqrt();
    LogMeanExp { log_mean, std_error: sd_rel / (n as f64).sqrt(), n }
}

/// Effective sample size `(Σw)² / Σw²` of log-weights.
pub fn effective_sample_size(log_weights: &[f64]) -> f64 {
    let lse = logsumexp(log_weights);
    let lse2 = logsumexp(&log_weights.iter().map(|v| 2.0 * v).collect::<Vec<_>>());
    (2.0 * lse - lse2).exp()
}

/// Welford running mean and variance.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Welford {
    pub n: u64,
    pub mean: f64,
    m2: f64,
}

impl Welford {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    /// Unbiased sample variance; zero for fewer than two observations.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn std_error_of_mean(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }
}

impl FromIterator<f64> for Welford {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut w = Welford::new();
        for x in iter {
            w.push(x);
        }
        w
    }
}

/// Sample variance with its delete-one jackknife standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceEstimate {
    pub mean: f64,
    pub variance: f64,
    pub std_error: f64,
}

pub fn jackknife_variance(samples: &[f64]) -> VarianceEstimate {
    let stats: Welford = samples.iter().copied().collect();
    let n = samples.len();
    let (mean, s2) = (stats.mean, stats.variance());
    if n < 3 {
        return VarianceEstimate { mean, variance: s2, std_error: f64::INFINITY };
    }
    let nf = n as f64;
    // Leave-one-out variances in closed form, accumulated with Welford again.
    let loo: Welford = samples
        .iter()
        .map(|x| ((nf - 1.0) * s2 - nf / (nf - 1.0) * (x - mean).powi(2)) / (nf - 2.0))
        .collect();
    let spread = loo.variance() * (nf - 1.0) / nf * (nf - 1.0);
    VarianceEstimate { mean, variance: s2, std_error: spread.sqrt() }
}

/// Standard error of the mean of a correlated series via non-overlapping batch means.
pub fn batch_means_se(series: &[f64], n_batches: usize) -> f64 {
    let n_batches = n_batches.max(2);
    let batch = series.len() / n_batches;
    if batch == 0 {
        return f64::INFINITY;
    }
    let means: Welford = series
        .chunks_exact(batch)
        .take(n_batches)
        .map(|c| c.iter().sum::<f64>() / batch as f64)
        .collect();
    means.std_error_of_mean()
}
