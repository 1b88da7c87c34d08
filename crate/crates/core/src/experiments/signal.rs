use rayon::prelude::*;
use serde::Serialize;

use super::{ks_statistic, DtRule};
use crate::averaging::{build_homogenized, HomogenizationMode, HomogenizedModel};
use crate::error::{Error, Result};
use crate::models::ModelPreset;
use crate::noise::derive_seed;
use crate::sde::{simulate_signal_endpoint, HomogenizedStepper, SignalStreams};

/// Seed tag of the homogenized sample, so that it is independent of the
/// `epsilon`-paths.
const HOMOGENIZED_TAG: u64 = 0x686f_6d6f;

#[derive(Debug, Clone, Serialize)]
pub struct SignalStudy {
    pub epsilons: Vec<f64>,
    /// Max over slow coordinates of the KS distance between `X^eps_T` and
    /// `X^0_T`, per epsilon.
    pub ks: Vec<f64>,
    pub n_paths: usize,
    pub horizon: f64,
    pub dt_rule: DtRule,
    pub seed: u64,
}

/// Endpoints `X^0_T` of `n_paths` homogenized paths.
pub(crate) fn homogenized_endpoints(
    hmodel: &HomogenizedModel,
    n_paths: usize,
    horizon: f64,
    dt: f64,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let steps = crate::sde::grid_steps(horizon, dt)?;
    (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let mut streams = SignalStreams::new(seed, i as u32);
            let mut stepper = HomogenizedStepper::new(hmodel, dt, 1)?;
            let mut x = hmodel.slow().x0.clone();
            for k in 0..steps {
                stepper.step(k, k as f64 * dt, &mut x, &mut streams, None)?;
            }
            Ok(x)
        })
        .collect()
}

/// Max over coordinates of the KS distance between two vector samples.
pub(crate) fn max_coordinate_ks(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64> {
    let n = a.first().map_or(0, Vec::len);
    let mut worst: f64 = 0.0;
    for c in 0..n {
        let ca: Vec<f64> = a.iter().map(|v| v[c]).collect();
        let cb: Vec<f64> = b.iter().map(|v| v[c]).collect();
        worst = worst.max(ks_statistic(&ca, &cb)?);
    }
    Ok(worst)
}

/// KS distance between the one-point marginals of `X^eps_T` and `X^0_T`
/// for each epsilon.
///
/// The `epsilon`-paths share their noise across epsilons (path `i` uses the
/// same streams for every epsilon), so the trend in epsilon is not masked
/// by independent sampling noise. The homogenized sample is drawn once,
/// from an independent seed.
pub fn signal_convergence_study(
    preset: &ModelPreset,
    epsilons: &[f64],
    n_paths: usize,
    horizon: f64,
    dt_rule: DtRule,
    seed: u64,
) -> Result<SignalStudy> {
    if epsilons.is_empty() || n_paths == 0 {
        return Err(Error::invalid("signal study needs epsilons and at least one path"));
    }
    if n_paths > u32::MAX as usize {
        return Err(Error::invalid("too many paths"));
    }
    let hmodel = build_homogenized(preset, HomogenizationMode::ClosedForm, None)?;
    let x0 = homogenized_endpoints(
        &hmodel,
        n_paths,
        horizon,
        dt_rule.dt_slow,
        derive_seed(seed, &[HOMOGENIZED_TAG]),
    )?;
    let mut ks = Vec::with_capacity(epsilons.len());
    for &eps in epsilons {
        let model = preset.slow_fast.clone().with_epsilon(eps);
        let scheme = dt_rule.scheme(eps)?;
        let xe = (0..n_paths)
            .into_par_iter()
            .map(|i| {
                simulate_signal_endpoint(&model, horizon, &scheme, &mut SignalStreams::new(seed, i as u32))
            })
            .collect::<Result<Vec<_>>>()?;
        ks.push(max_coordinate_ks(&xe, &x0)?);
    }
    Ok(SignalStudy {
        epsilons: epsilons.to_vec(),
        ks,
        n_paths,
        horizon,
        dt_rule,
        seed,
    })
}
