//! Scripted studies: weak convergence of the slow marginal and of the
//! filter as `epsilon -> 0`, mean-one checks of the likelihood functional,
//! and a Kalman–Bucy oracle for the linear Gaussian case.
//!
//! Every study is a pure function of its inputs and root seed; work is
//! split into independent jobs whose results are collected in job order.

mod convergence;
mod kalman;
mod martingale;
mod signal;

pub use convergence::{filter_convergence_study, ConvergenceReport, ConvergenceSettings, EpsilonResult, PsiGap};
pub use kalman::{kalman_bucy, kalman_comparison, stationary_variance, LinearGaussian, OracleResult};
pub use martingale::{martingale_check, poisson_likelihood_mean, MartingaleReport};
pub use signal::{signal_convergence_study, SignalStudy};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sde::{FastMode, StepScheme};

/// Two-sample Kolmogorov–Smirnov statistic `sup |F_a - F_b|`.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("KS statistic needs two non-empty samples"));
    }
    if a.iter().chain(b).any(|v| v.is_nan()) {
        return Err(Error::invalid("KS statistic of a sample containing NaN"));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

/// Two-sample KS critical value `c(alpha) sqrt((n + m) / (n m))` at the 1%
/// level.
pub fn ks_critical_1pct(n: usize, m: usize) -> f64 {
    1.628 * ((n + m) as f64 / (n * m) as f64).sqrt()
}

/// How the step sizes follow `epsilon`: the slow step is fixed and the fast
/// step is `min(dt_slow, epsilon / 10)` (rounded down to a divisor) in Euler
/// mode, `dt_slow` for exact OU sampling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DtRule {
    pub dt_slow: f64,
    pub fast_mode: FastMode,
}

impl DtRule {
    pub fn scheme(&self, epsilon: f64) -> Result<StepScheme> {
        StepScheme::for_epsilon(self.dt_slow, epsilon, self.fast_mode)
    }
}
