use rayon::prelude::*;
use serde::Serialize;

use super::DtRule;
use crate::averaging::{build_homogenized, HomogenizationMode};
use crate::error::{Error, Result};
use crate::expr::Args;
use crate::filter::{log_weight_increment, run_filter, FilterConfig, FilterDynamics};
use crate::models::ModelPreset;
use crate::noise::derive_seed;
use crate::sde::{simulate_full, ObservationRecord, ObservationStreams, PathStreams};
use crate::stats::{mean, std_error};

const REFERENCE_TAG: u64 = 0x0072_6566;
const SIGNAL_TAG: u64 = 0x0073_6967;
const PHYSICAL_TAG: u64 = 0x7068_7973;

#[derive(Debug, Clone, Serialize)]
pub struct MartingaleReport {
    pub runs: usize,
    /// `E[Lambda_T]` under the reference measure, where observations are
    /// independent of the signal.
    pub lambda_mean: f64,
    pub lambda_se: f64,
    /// `E[1 / Lambda_T]` under the physical measure, with `Lambda` taken
    /// along the true signal path.
    pub inverse_mean: f64,
    pub inverse_se: f64,
    /// Largest `1 / rho_T(1)` of single-particle homogenized filters on the
    /// reference observations; `None` when no homogenized model exists.
    pub max_inverse_rho0: Option<f64>,
}

/// Monte Carlo check that the likelihood functional is a mean-one
/// martingale, in both directions of the change of measure.
///
/// Reference runs pair an independent signal path (a one-particle filter
/// without resampling) with an observation record sampled under the
/// reference measure. Physical runs simulate `(X, Z, Y)` and evaluate
/// `1 / Lambda_T` along the simulated path.
pub fn martingale_check(
    preset: &ModelPreset,
    epsilon: f64,
    n_runs: usize,
    horizon: f64,
    dt_rule: DtRule,
    seed: u64,
) -> Result<MartingaleReport> {
    if n_runs == 0 || n_runs > u32::MAX as usize {
        return Err(Error::invalid("martingale check needs a positive run count"));
    }
    let model = preset.clone().with_epsilon(epsilon);
    let sf = &model.slow_fast;
    let obs = &model.observation;
    let scheme = dt_rule.scheme(epsilon)?;
    let dt = scheme.dt_slow;
    let full = FilterDynamics::Full { model: sf, obs, scheme };
    let hmodel = build_homogenized(preset, HomogenizationMode::ClosedForm, None).ok();
    let reference_seed = derive_seed(seed, &[REFERENCE_TAG]);
    let physical_seed = derive_seed(seed, &[PHYSICAL_TAG]);

    let runs = (0..n_runs)
        .into_par_iter()
        .map(|r| {
            let mut streams = ObservationStreams::new(reference_seed, r as u32);
            let record = ObservationRecord::sample_reference(obs, horizon, dt, &mut streams)?;
            let config = FilterConfig {
                particles: 1,
                ess_fraction: 1.0,
                root_seed: derive_seed(seed, &[SIGNAL_TAG, r as u64]),
                resample: false,
            };
            let lambda = run_filter(&full, &record, &[], &config)?.log_rho1.last().unwrap().exp();
            let inverse_rho0 = match &hmodel {
                Some(h) => {
                    let dynamics = FilterDynamics::Homogenized { model: h, scheme };
                    Some((-run_filter(&dynamics, &record, &[], &config)?.log_rho1.last().unwrap()).exp())
                }
                None => None,
            };

            let path = simulate_full(sf, obs, horizon, &scheme, &mut PathStreams::new(physical_seed, r as u32))?;
            let record = path.observation_record();
            let mut hbuf = vec![0.0; obs.d];
            let mut log_lambda = 0.0;
            for k in 0..path.steps() {
                let t = path.times[k];
                obs.h.eval(&Args::new(t, &path.x[k], &path.z[k], &[]), &mut hbuf);
                log_lambda += log_weight_increment(
                    &hbuf,
                    &record.bbar_increments[k],
                    dt,
                    &record.small_marks[k],
                    obs,
                    &path.x[k],
                    t,
                )?;
            }
            Ok((lambda, (-log_lambda).exp(), inverse_rho0))
        })
        .collect::<Result<Vec<_>>>()?;

    let lambdas: Vec<f64> = runs.iter().map(|r| r.0).collect();
    let inverses: Vec<f64> = runs.iter().map(|r| r.1).collect();
    let max_inverse_rho0 = hmodel
        .as_ref()
        .map(|_| runs.iter().filter_map(|r| r.2).fold(0.0, f64::max));
    Ok(MartingaleReport {
        runs: n_runs,
        lambda_mean: mean(&lambdas),
        lambda_se: std_error(&lambdas),
        inverse_mean: mean(&inverses),
        inverse_se: std_error(&inverses),
        max_inverse_rho0,
    })
}

/// `E[Lambda_T]` for `h = 0`, constant intensity `lambda` and small-jump
/// rate `rate`, by summing over the Poisson jump count `J`:
/// `Lambda_T = lambda^J exp((1 - lambda) rate T)`.
pub fn poisson_likelihood_mean(lambda: f64, rate: f64, horizon: f64) -> f64 {
    let mu = rate * horizon;
    let mut term = (-mu).exp();
    let mut total = 0.0;
    let mut k = 0u32;
    while k < 10 || term > 1e-18 * total {
        total += term * lambda.powi(k as i32);
        k += 1;
        term *= mu / k as f64;
    }
    total * ((1.0 - lambda) * mu).exp()
}
