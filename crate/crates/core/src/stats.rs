//! Small, order-deterministic statistics helpers.

/// Pairwise (fan-in 2) summation. The reduction tree depends only on the
/// slice length, so the result is reproducible regardless of how the inputs
/// were produced.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const LEAF: usize = 8;
    if values.len() <= LEAF {
        let mut acc = 0.0;
        for v in values {
            acc += v;
        }
        return acc;
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Running mean / variance (Welford). Averaging a constant yields the
/// constant exactly.
#[derive(Debug, Clone, Copy, Default)]
pub struct Welford {
    count: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, value: f64) {
        self.count += 1;
        let delta = value - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (value - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance; NaN for fewer than two samples.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            f64::NAN
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    /// Standard error of the mean assuming independent samples.
    pub fn std_error(&self) -> f64 {
        (self.variance() / self.count as f64).sqrt()
    }
}

impl FromIterator<f64> for Welford {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut w = Welford::new();
        for v in iter {
            w.push(v);
        }
        w
    }
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().copied().collect::<Welford>().mean()
}

/// Standard error of the mean of `values`; NaN when `values.len() < 2`.
pub fn std_error(values: &[f64]) -> f64 {
    values.iter().copied().collect::<Welford>().std_error()
}

/// Batch-means standard error of the mean for an autocorrelated series.
pub fn batch_means_std_error(values: &[f64], batches: usize) -> f64 {
    let batches = batches.max(2).min(values.len());
    if batches < 2 {
        return f64::NAN;
    }
    let size = values.len() / batches;
    let means: Vec<f64> = (0..batches)
        .map(|b| mean(&values[b * size..(b + 1) * size]))
        .collect();
    std_error(&means)
}

/// `log((1/n) * sum(exp(w)))` computed stably.
pub fn log_mean_exp(log_values: &[f64]) -> f64 {
    let max = log_values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let shifted: Vec<f64> = log_values.iter().map(|w| (w - max).exp()).collect();
    max + pairwise_sum(&shifted).ln() - (log_values.len() as f64).ln()
}
