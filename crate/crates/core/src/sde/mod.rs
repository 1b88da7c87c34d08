//! Euler–Maruyama time stepping of the full slow-fast system with its
//! observation, of the frozen fast process, and of the homogenized slow
//! process.
//!
//! All schemes are multirate: the fast variable substeps within each slow
//! step while X is held at its left value, and jumps (slow, observation)
//! are applied with coefficients at the left state of the slow step.

mod path;
mod scheme;
mod step;
mod streams;

pub use path::{
    format_value, FastPath, JointPath, JumpLog, LoggedJump, ObservationRecord, SlowPath,
};
pub use scheme::{grid_steps, FastMode, StepScheme};
pub use step::{exact_ou_step, FrozenFastStepper, FullStepper, HomogenizedStepper};
pub use streams::{ObservationStreams, PathStreams, SignalNoise, SignalStreams};

use crate::averaging::HomogenizedModel;
use crate::error::{Error, Result};
use crate::expr::Args;
use crate::models::{ObservationModel, SlowFastModel};
use crate::noise::{fill_gaussian, sample_poisson_jumps, thinning_decisions, RngStream};

/// Simulates `(X, Z, Y)` on `[0, horizon]` with the given streams.
pub fn simulate_full(
    model: &SlowFastModel,
    obs: &ObservationModel,
    horizon: f64,
    scheme: &StepScheme,
    streams: &mut PathStreams,
) -> Result<JointPath> {
    model.validate()?;
    obs.validate(model.n, model.m)?;
    let steps = scheme.steps_for(horizon)?;
    let dt = scheme.dt_slow;
    let d = obs.d;
    let mut stepper = FullStepper::new(model, scheme)?;

    let mut x = model.x0.clone();
    let mut z = model.z0.clone();
    let mut y = vec![0.0; d];
    let mut path = JointPath {
        scheme: *scheme,
        times: Vec::with_capacity(steps + 1),
        x: Vec::with_capacity(steps + 1),
        z: Vec::with_capacity(steps + 1),
        y: Vec::with_capacity(steps + 1),
        jumps: JumpLog::default(),
        bbar_increments: Vec::with_capacity(steps),
    };
    path.times.push(0.0);
    path.x.push(x.clone());
    path.z.push(z.clone());
    path.y.push(y.clone());

    let mut h_int = vec![0.0; d];
    let mut db = vec![0.0; d];
    let mut comp = vec![0.0; d];
    let mut scratch = vec![0.0; d];
    let mut x_left = vec![0.0; model.n];
    for k in 0..steps {
        let t = k as f64 * dt;
        x_left.copy_from_slice(&x);
        h_int.iter_mut().for_each(|v| *v = 0.0);
        stepper.step(
            k,
            t,
            &mut x,
            &mut z,
            &mut streams.signal,
            Some((&obs.h, &mut h_int)),
            Some(&mut path.jumps),
        )?;

        let ostreams = &mut streams.observation;
        fill_gaussian(&mut ostreams.brownian, dt.sqrt(), &mut db);
        let bbar: Vec<f64> = h_int.iter().zip(&db).map(|(h, b)| h + b).collect();
        for (yi, inc) in y.iter_mut().zip(&bbar) {
            *yi += inc;
        }
        path.bbar_increments.push(bbar);

        obs.small_jump_compensator(t, &x_left, &mut comp, &mut scratch);
        for (yi, c) in y.iter_mut().zip(&comp) {
            *yi -= dt * c;
        }
        for small in [true, false] {
            let spec = if small { &obs.nu3_small } else { &obs.nu3_large };
            if spec.is_null() {
                continue;
            }
            let mut events = sample_poisson_jumps(&mut ostreams.jumps, spec, dt, 1.0)?;
            for e in events.iter_mut() {
                e.time += t;
            }
            let keep = thinning_decisions(
                &events,
                |s, xs, u| obs.lambda.eval(s, xs, u),
                |_| x_left.as_slice(),
                &mut ostreams.thinning,
            )?;
            for (e, accepted) in events.iter().zip(keep) {
                if !accepted {
                    path.jumps.rejected_observation += 1;
                    continue;
                }
                let kernel = if small { &obs.f3 } else { &obs.g3 };
                let delta = kernel.eval_vec(&Args::new(e.time, &[], &[], &[e.mark]));
                for (yi, v) in y.iter_mut().zip(&delta) {
                    *yi += v;
                }
                let entry = LoggedJump {
                    step: k,
                    time: e.time,
                    mark: e.mark,
                    delta,
                };
                if small {
                    path.jumps.observation_small.push(entry);
                } else {
                    path.jumps.observation_large.push(entry);
                }
            }
        }
        if !y.iter().all(|v| v.is_finite()) {
            return Err(Error::IntegrationFailure {
                time: t + dt,
                detail: format!("non-finite observation {y:?}"),
            });
        }

        path.times.push((k + 1) as f64 * dt);
        path.x.push(x.clone());
        path.z.push(z.clone());
        path.y.push(y.clone());
    }
    Ok(path)
}

/// `X^eps_T` only: the signal part of [`simulate_full`] without storing the
/// path or generating observations.
pub fn simulate_signal_endpoint(
    model: &SlowFastModel,
    horizon: f64,
    scheme: &StepScheme,
    streams: &mut SignalStreams,
) -> Result<Vec<f64>> {
    let steps = scheme.steps_for(horizon)?;
    let mut stepper = FullStepper::new(model, scheme)?;
    let mut x = model.x0.clone();
    let mut z = model.z0.clone();
    for k in 0..steps {
        let t = k as f64 * scheme.dt_slow;
        stepper.step(k, t, &mut x, &mut z, streams, None, None)?;
    }
    Ok(x)
}

/// Path of the fast process with the slow state frozen at `x`.
pub fn simulate_frozen_fast(
    model: &SlowFastModel,
    x: &[f64],
    z_init: &[f64],
    horizon: f64,
    dt: f64,
    stream: &mut RngStream,
    mode: FastMode,
) -> Result<FastPath> {
    if z_init.len() != model.m {
        return Err(Error::invalid(format!(
            "initial fast state has {} components, expected {}",
            z_init.len(),
            model.m
        )));
    }
    let steps = grid_steps(horizon, dt)?;
    let mut stepper = FrozenFastStepper::new(model, x, dt, mode)?;
    let mut z = z_init.to_vec();
    let mut path = FastPath {
        times: vec![0.0],
        z: vec![z.clone()],
    };
    for k in 0..steps {
        stepper.step(k as f64 * dt, &mut z, stream)?;
        path.times.push((k + 1) as f64 * dt);
        path.z.push(z.clone());
    }
    Ok(path)
}

/// Euler–Maruyama path of the homogenized slow process from the model's
/// initial state.
pub fn simulate_homogenized(
    hmodel: &HomogenizedModel,
    horizon: f64,
    dt: f64,
    stream: &mut RngStream,
) -> Result<SlowPath> {
    let steps = grid_steps(horizon, dt)?;
    let mut stepper = HomogenizedStepper::new(hmodel, dt, 1)?;
    let mut x = hmodel.slow().x0.clone();
    let mut path = SlowPath {
        times: vec![0.0],
        x: vec![x.clone()],
    };
    for k in 0..steps {
        stepper.step(k, k as f64 * dt, &mut x, stream, None)?;
        path.times.push((k + 1) as f64 * dt);
        path.x.push(x.clone());
    }
    Ok(path)
}

#[cfg(test)]
mod tests;
