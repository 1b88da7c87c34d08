//! Ergodic averaging of the slow coefficients against the invariant law of
//! the frozen fast process, and the resulting homogenized model.

mod factor;
mod homogenized;

pub use factor::{factor_diffusion, recompose, symmetrize};
pub use homogenized::{
    build_homogenized, AveragingParams, HomogenizationMode, HomogenizedModel, Lattice, Provenance,
};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::Args;
use crate::models::{ObservationModel, SlowFastModel};
use crate::noise::RngStream;
use crate::sde::{FastMode, FrozenFastStepper};
use crate::stats::{batch_means_std_error, Welford};

/// Minimum number of retained samples of an empirical invariant measure.
pub const MIN_SAMPLES: usize = 1000;

const SE_BATCHES: usize = 20;
const STATIONARITY_SES: f64 = 4.0;

/// Post-burn-in, stride-thinned states of the frozen fast process.
#[derive(Debug, Clone, Serialize)]
pub struct EmpiricalMeasure {
    pub samples: Vec<Vec<f64>>,
    pub burn_in_used: f64,
    pub thinning_stride: usize,
    pub frozen_x: Vec<f64>,
    pub dt: f64,
    /// Stationarity diagnostics that failed; empty when the run looks
    /// stationary.
    pub warnings: Vec<String>,
}

impl EmpiricalMeasure {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Coordinate `i` of every sample.
    pub fn coordinate(&self, i: usize) -> Vec<f64> {
        self.samples.iter().map(|s| s[i]).collect()
    }
}

/// Runs the frozen fast process at `x` for `burn_in`, then keeps every
/// `stride`-th state until `n_samples` are collected.
#[allow(clippy::too_many_arguments)]
pub fn estimate_invariant_measure(
    model: &SlowFastModel,
    x: &[f64],
    burn_in: f64,
    n_samples: usize,
    stride: usize,
    dt: f64,
    mode: FastMode,
    stream: &mut RngStream,
) -> Result<EmpiricalMeasure> {
    if !(burn_in >= 0.0 && burn_in.is_finite()) {
        return Err(Error::invalid(format!("burn-in must be non-negative, got {burn_in}")));
    }
    if n_samples < MIN_SAMPLES {
        return Err(Error::invalid(format!(
            "need at least {MIN_SAMPLES} samples, got {n_samples}"
        )));
    }
    if stride == 0 {
        return Err(Error::invalid("stride must be positive"));
    }
    let mut stepper = FrozenFastStepper::new(model, x, dt, mode)?;
    let mut z = model.z0.clone();
    let burn_steps = (burn_in / dt).ceil() as usize;
    let mut step = 0usize;
    for _ in 0..burn_steps {
        stepper.step(step as f64 * dt, &mut z, stream)?;
        step += 1;
    }
    let mut samples = Vec::with_capacity(n_samples);
    while samples.len() < n_samples {
        for _ in 0..stride {
            stepper.step(step as f64 * dt, &mut z, stream)?;
            step += 1;
        }
        samples.push(z.clone());
    }
    let mut measure = EmpiricalMeasure {
        samples,
        burn_in_used: burn_steps as f64 * dt,
        thinning_stride: stride,
        frozen_x: x.to_vec(),
        dt,
        warnings: Vec::new(),
    };
    measure.warnings = stationarity_warnings(&measure);
    Ok(measure)
}

/// Compares first- and second-half means of each coordinate; a gap of
/// four combined standard errors or more yields a warning.
fn stationarity_warnings(measure: &EmpiricalMeasure) -> Vec<String> {
    let m = measure.samples.first().map_or(0, Vec::len);
    let half = measure.len() / 2;
    let mut warnings = Vec::new();
    for i in 0..m {
        let coord = measure.coordinate(i);
        let (a, b) = coord.split_at(half);
        let (ma, mb) = (crate::stats::mean(a), crate::stats::mean(b));
        let se = batch_means_std_error(a, SE_BATCHES).hypot(batch_means_std_error(b, SE_BATCHES));
        let gap = (ma - mb).abs();
        if gap > 0.0 && !(gap < STATIONARITY_SES * se) {
            warnings.push(format!(
                "coordinate {i}: half-sample means {ma:.6} and {mb:.6} differ by {:.2} standard errors",
                gap / se
            ));
        }
    }
    warnings
}

/// Averages of `b1`, `sigma1 sigma1^T` and `h` at one slow state, with
/// batch-means standard errors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AveragedCoefficients {
    pub x: Vec<f64>,
    pub bbar1: Vec<f64>,
    /// Row-major `n x n`, symmetrized.
    pub abar: Vec<f64>,
    pub hbar: Vec<f64>,
    pub bbar1_se: Vec<f64>,
    pub abar_se: Vec<f64>,
    pub hbar_se: Vec<f64>,
}

/// Sample averages over `measure`. Averaging a `z`-free integrand
/// reproduces it exactly.
pub fn average_coefficients(
    model: &SlowFastModel,
    obs: &ObservationModel,
    x: &[f64],
    measure: &EmpiricalMeasure,
) -> Result<AveragedCoefficients> {
    let (n, m, l, d) = (model.n, model.m, model.l, obs.d);
    if x.len() != n {
        return Err(Error::invalid(format!("x has {} components, expected {n}", x.len())));
    }
    if measure.frozen_x != x {
        return Err(Error::invalid("empirical measure was estimated at a different x"));
    }
    if measure.samples.iter().any(|s| s.len() != m) {
        return Err(Error::invalid(format!("fast samples must have {m} components")));
    }
    let count = measure.len();
    let mut b_vals = vec![Vec::with_capacity(count); n];
    let mut a_vals = vec![Vec::with_capacity(count); n * n];
    let mut h_vals = vec![Vec::with_capacity(count); d];
    let (mut b, mut s, mut h) = (vec![0.0; n], vec![0.0; n * l], vec![0.0; d]);
    for z in &measure.samples {
        let args = Args::new(0.0, x, z, &[]);
        model.b1.eval(&args, &mut b);
        model.sigma1.eval(&args, &mut s);
        obs.h.eval(&args, &mut h);
        for (vals, v) in b_vals.iter_mut().zip(&b) {
            vals.push(*v);
        }
        for i in 0..n {
            for j in 0..n {
                let aij: f64 = (0..l).map(|c| s[i * l + c] * s[j * l + c]).sum();
                a_vals[i * n + j].push(aij);
            }
        }
        for (vals, v) in h_vals.iter_mut().zip(&h) {
            vals.push(*v);
        }
    }
    let summarize = |vals: &[Vec<f64>]| -> (Vec<f64>, Vec<f64>) {
        vals.iter()
            .map(|v| {
                let w: Welford = v.iter().copied().collect();
                (w.mean(), batch_means_std_error(v, SE_BATCHES))
            })
            .unzip()
    };
    let (bbar1, bbar1_se) = summarize(&b_vals);
    let (abar_raw, abar_se) = summarize(&a_vals);
    let (hbar, hbar_se) = summarize(&h_vals);
    Ok(AveragedCoefficients {
        x: x.to_vec(),
        bbar1,
        abar: symmetrize(&abar_raw, n)?,
        hbar,
        bbar1_se,
        abar_se,
        hbar_se,
    })
}

#[cfg(test)]
mod tests;
