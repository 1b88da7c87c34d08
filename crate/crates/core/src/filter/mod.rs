//! Particle approximation of the unnormalized filter `rho_t` and the
//! normalized filter `pi_t = rho_t(psi) / rho_t(1)`, for the full slow-fast
//! signal and for its homogenized version.
//!
//! Particles evolve under the reference measure, where the signal does not
//! see the observation. Each particle carries the log of its likelihood
//! functional: the Brownian part `∫ h dBbar - ½ ∫ |h|^2 dt` plus, for the
//! small observation jumps, `Σ log lambda` over the observed marks and
//! `∫ (1 - lambda) nu3(du) dt`. Large observation jumps carry no weight.

mod psi;
mod resample;

pub use psi::{parse_psi_list, Psi, MOLLIFIER_WIDTH, POLY_CLIP};
pub use resample::{effective_sample_size, normalized_weights, systematic_resample};

use std::io::{self, Write};

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::averaging::HomogenizedModel;
use crate::error::{Error, Result};
use crate::expr::Args;
use crate::models::{ObservationModel, SlowFastModel};
use crate::noise::{derive_seed, RngStream};
use crate::sde::{format_value, FullStepper, HomogenizedStepper, ObservationRecord, SignalStreams, StepScheme};
use crate::stats::{log_mean_exp, pairwise_sum};

/// Tag mixed into the seed of the resampling offsets.
const RESAMPLE_TAG: u64 = 0x7265_7361_6d70;

/// Log-likelihood increment over one step:
/// `h·dYcont - ½|h|^2 dt + Σ log lambda(t_j, x, u_j) + dt ∫ (1 - lambda(t, x, u)) nu3(du)`.
///
/// `jump_marks` holds the `(time, mark)` of small observation jumps in the
/// step. Intensities outside `(0, 1]` are model violations.
pub fn log_weight_increment(
    h_val: &[f64],
    dycont: &[f64],
    dt: f64,
    jump_marks: &[(f64, f64)],
    obs: &ObservationModel,
    x: &[f64],
    t: f64,
) -> Result<f64> {
    let mut inc = 0.0;
    let mut h2 = 0.0;
    for (h, dy) in h_val.iter().zip(dycont) {
        inc += h * dy;
        h2 += h * h;
    }
    inc -= 0.5 * h2 * dt;
    for &(tj, u) in jump_marks {
        let lam = obs.lambda.eval(tj, x, u);
        if !(lam > 0.0 && lam <= 1.0) {
            return Err(Error::ModelViolation {
                what: format!("observation intensity {lam} outside (0,1]"),
                point: format!("t={tj}, x={x:?}, u={u}"),
            });
        }
        inc += lam.ln();
    }
    Ok(inc + dt * obs.lambda_deficit(t, x))
}

/// One weighted particle. `z` is present for the full-model filter only.
#[derive(Debug, Clone)]
pub struct Particle {
    pub x: Vec<f64>,
    pub z: Option<Vec<f64>>,
    pub log_weight: f64,
    pub streams: SignalStreams,
}

#[derive(Debug, Clone)]
pub struct ParticleEnsemble {
    pub particles: Vec<Particle>,
    pub time: f64,
    pub resample_count: u64,
    pub ess_history: Vec<f64>,
    root_seed: u64,
}

/// Point estimates from an ensemble.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub rho_psi: f64,
    pub rho_1: f64,
    pub pi: f64,
}

impl ParticleEnsemble {
    /// `count` unit-weight particles at `(x0, z0)`; particle `i` draws from
    /// the signal streams `(root_seed, i)`.
    pub fn new(count: usize, x0: &[f64], z0: Option<&[f64]>, root_seed: u64) -> Result<Self> {
        if count == 0 || count > u32::MAX as usize {
            return Err(Error::invalid(format!("particle count {count} out of range")));
        }
        let particles = (0..count)
            .map(|i| Particle {
                x: x0.to_vec(),
                z: z0.map(<[f64]>::to_vec),
                log_weight: 0.0,
                streams: SignalStreams::new(root_seed, i as u32),
            })
            .collect();
        Ok(Self {
            particles,
            time: 0.0,
            resample_count: 0,
            ess_history: Vec::new(),
            root_seed,
        })
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn log_weights(&self) -> Vec<f64> {
        self.particles.iter().map(|p| p.log_weight).collect()
    }

    /// `log rho(1) = log((1/N) Σ e^{w_i})`.
    pub fn log_rho1(&self) -> f64 {
        log_mean_exp(&self.log_weights())
    }

    pub fn ess(&self) -> f64 {
        effective_sample_size(&self.log_weights())
    }

    /// `rho(psi)`, `rho(1)` and `pi(psi)`; `pi` is clipped into the range
    /// of `psi` to absorb rounding.
    pub fn estimate(&self, psi: &Psi) -> Estimate {
        let lw = self.log_weights();
        let max = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert!(max.is_finite(), "particle log-weights must stay finite");
        let w: Vec<f64> = lw.iter().map(|v| (v - max).exp()).collect();
        let weighted: Vec<f64> = self
            .particles
            .iter()
            .zip(&w)
            .map(|(p, w)| psi.eval(&p.x) * w)
            .collect();
        let (num, den) = (pairwise_sum(&weighted), pairwise_sum(&w));
        let scale = max.exp() / self.len() as f64;
        let (lo, hi) = psi.bounds();
        Estimate {
            rho_psi: num * scale,
            rho_1: den * scale,
            pi: (num / den).clamp(lo, hi),
        }
    }

    /// Systematic resampling; every offspring gets log-weight `log rho(1)`
    /// and fresh streams derived from `(root_seed, resample generation,
    /// index)`. Returns the relative change of `rho(1)`.
    pub fn resample(&mut self) -> f64 {
        let lw = self.log_weights();
        let before = log_mean_exp(&lw);
        let n = self.len();
        self.resample_count += 1;
        let mut offset_stream =
            RngStream::new(derive_seed(self.root_seed, &[RESAMPLE_TAG, self.resample_count]), 0);
        let offset = offset_stream.random::<f64>() / n as f64;
        let ancestors = systematic_resample(&normalized_weights(&lw), n, offset);
        let generation = self.resample_count;
        let root = self.root_seed;
        self.particles = ancestors
            .iter()
            .enumerate()
            .map(|(i, &a)| {
                let src = &self.particles[a];
                Particle {
                    x: src.x.clone(),
                    z: src.z.clone(),
                    log_weight: before,
                    streams: SignalStreams::regenerated(root, generation, i as u32),
                }
            })
            .collect();
        let after = self.log_rho1();
        (after - before).exp_m1().abs()
    }
}

/// Signal dynamics driving the particles.
#[derive(Debug, Clone, Copy)]
pub enum FilterDynamics<'a> {
    Full {
        model: &'a SlowFastModel,
        obs: &'a ObservationModel,
        scheme: StepScheme,
    },
    /// The homogenized slow process; `scheme` fixes the step and the
    /// substep grid on which the Brownian increments are drawn.
    Homogenized {
        model: &'a HomogenizedModel,
        scheme: StepScheme,
    },
}

impl FilterDynamics<'_> {
    fn scheme(&self) -> &StepScheme {
        match self {
            FilterDynamics::Full { scheme, .. } | FilterDynamics::Homogenized { scheme, .. } => scheme,
        }
    }

    fn observation(&self) -> &ObservationModel {
        match self {
            FilterDynamics::Full { obs, .. } => obs,
            FilterDynamics::Homogenized { model, .. } => model.observation(),
        }
    }

    fn initial_ensemble(&self, count: usize, seed: u64) -> Result<ParticleEnsemble> {
        match self {
            FilterDynamics::Full { model, .. } => {
                ParticleEnsemble::new(count, &model.x0, Some(&model.z0), seed)
            }
            FilterDynamics::Homogenized { model, .. } => {
                ParticleEnsemble::new(count, &model.slow().x0, None, seed)
            }
        }
    }
}

enum Stepper<'a> {
    Full(FullStepper<'a>),
    Homogenized(HomogenizedStepper<'a>),
}

impl<'a> Stepper<'a> {
    fn new(dynamics: &FilterDynamics<'a>) -> Result<Self> {
        Ok(match *dynamics {
            FilterDynamics::Full { model, scheme, .. } => Stepper::Full(FullStepper::new(model, &scheme)?),
            FilterDynamics::Homogenized { model, scheme } => Stepper::Homogenized(
                HomogenizedStepper::new(model, scheme.dt_slow, scheme.substeps())?,
            ),
        })
    }

    fn advance(&mut self, step: usize, t: f64, p: &mut Particle) -> Result<()> {
        match self {
            Stepper::Full(s) => {
                let z = p.z.as_mut().expect("full-model particles carry a fast state");
                s.step(step, t, &mut p.x, z, &mut p.streams, None, None)
            }
            Stepper::Homogenized(s) => s.step(step, t, &mut p.x, &mut p.streams, None),
        }
    }
}

/// Advances every particle by one step of the dynamics; weights are left
/// unchanged.
pub fn propagate(ensemble: &mut ParticleEnsemble, dynamics: &FilterDynamics<'_>, step: usize) -> Result<()> {
    let t = ensemble.time;
    ensemble
        .particles
        .par_iter_mut()
        .map_init(|| Stepper::new(dynamics), |stepper, p| match stepper {
            Ok(s) => s.advance(step, t, p),
            Err(e) => Err(e.clone()),
        })
        .collect::<Result<()>>()?;
    ensemble.time = t + dynamics.scheme().dt_slow;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct FilterConfig {
    pub particles: usize,
    /// Resample when `ESS < ess_fraction * N`.
    pub ess_fraction: f64,
    pub root_seed: u64,
    /// Disables resampling altogether (for likelihood checks).
    pub resample: bool,
}

impl FilterConfig {
    pub fn new(particles: usize, root_seed: u64) -> Self {
        Self {
            particles,
            ess_fraction: 0.5,
            root_seed,
            resample: true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct FilterDiagnostics {
    pub min_log_rho1: f64,
    /// Largest relative change of `rho(1)` caused by a resampling.
    pub max_resample_mass_error: f64,
    pub resample_count: u64,
}

/// Filter estimates on the observation grid, including `t = 0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FilterOutput {
    pub times: Vec<f64>,
    pub psi: Vec<Psi>,
    /// `pi[j][k]`: estimate of `pi_{t_k}(psi_j)`.
    pub pi: Vec<Vec<f64>>,
    pub rho1: Vec<f64>,
    pub log_rho1: Vec<f64>,
    /// ESS before any resampling at each time.
    pub ess: Vec<f64>,
    pub resample_times: Vec<f64>,
    pub diagnostics: FilterDiagnostics,
}

impl FilterOutput {
    pub fn final_pi(&self, j: usize) -> f64 {
        *self.pi[j].last().unwrap()
    }

    /// CSV with header `t,pi_<psi>...,rho1,ess`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let mut header = vec!["t".to_string()];
        header.extend(self.psi.iter().map(|p| format!("pi_{p}")));
        header.push("rho1".into());
        header.push("ess".into());
        // Names like indicator(0,1) contain commas; quote them.
        let header: Vec<String> = header
            .into_iter()
            .map(|h| if h.contains(',') { format!("\"{h}\"") } else { h })
            .collect();
        writeln!(w, "{}", header.join(","))?;
        for k in 0..self.times.len() {
            let mut row = vec![format_value(self.times[k])];
            row.extend(self.pi.iter().map(|s| format_value(s[k])));
            row.push(format_value(self.rho1[k]));
            row.push(format_value(self.ess[k]));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Runs the particle filter over `record`: at each step every particle is
/// weighted with its left state and then propagated; the ensemble is
/// resampled when its ESS drops below the threshold.
pub fn run_filter(
    dynamics: &FilterDynamics<'_>,
    record: &ObservationRecord,
    psis: &[Psi],
    config: &FilterConfig,
) -> Result<FilterOutput> {
    let scheme = *dynamics.scheme();
    record.check_grid(scheme.dt_slow)?;
    if !(config.ess_fraction > 0.0 && config.ess_fraction <= 1.0) {
        return Err(Error::invalid(format!(
            "ESS fraction must lie in (0,1], got {}",
            config.ess_fraction
        )));
    }
    let obs = dynamics.observation();
    if record.bbar_increments.iter().any(|b| b.len() != obs.d) {
        return Err(Error::invalid("observation increments do not match the observation dimension"));
    }
    let dt = scheme.dt_slow;
    let mut ensemble = dynamics.initial_ensemble(config.particles, config.root_seed)?;
    let n = ensemble.len();

    let mut out = FilterOutput {
        times: vec![0.0],
        psi: psis.to_vec(),
        pi: psis.iter().map(|p| vec![ensemble.estimate(p).pi]).collect(),
        rho1: vec![1.0],
        log_rho1: vec![0.0],
        ess: vec![n as f64],
        resample_times: Vec::new(),
        diagnostics: FilterDiagnostics::default(),
    };

    for k in 0..record.steps() {
        let t = k as f64 * dt;
        let dy = &record.bbar_increments[k];
        let marks = &record.small_marks[k];
        ensemble
            .particles
            .par_iter_mut()
            .map_init(
                || (Stepper::new(dynamics), vec![0.0; obs.d]),
                |(stepper, hbuf), p| {
                    match dynamics {
                        FilterDynamics::Full { obs, .. } => {
                            let z = p.z.as_deref().expect("full-model particles carry a fast state");
                            obs.h.eval(&Args::new(t, &p.x, z, &[]), hbuf);
                        }
                        FilterDynamics::Homogenized { model, .. } => model.hbar(&p.x, hbuf)?,
                    }
                    p.log_weight += log_weight_increment(hbuf, dy, dt, marks, obs, &p.x, t)?;
                    match stepper {
                        Ok(s) => s.advance(k, t, p),
                        Err(e) => Err(e.clone()),
                    }
                },
            )
            .collect::<Result<()>>()?;
        ensemble.time = (k + 1) as f64 * dt;

        let log_rho1 = ensemble.log_rho1();
        if !log_rho1.is_finite() {
            return Err(Error::IntegrationFailure {
                time: ensemble.time,
                detail: "unnormalized filter mass is not finite".into(),
            });
        }
        let ess = ensemble.ess();
        ensemble.ess_history.push(ess);
        out.times.push(ensemble.time);
        for (series, p) in out.pi.iter_mut().zip(psis) {
            series.push(ensemble.estimate(p).pi);
        }
        out.log_rho1.push(log_rho1);
        out.rho1.push(log_rho1.exp());
        out.ess.push(ess);

        let is_last = k + 1 == record.steps();
        if config.resample && !is_last && ess < config.ess_fraction * n as f64 {
            let err = ensemble.resample();
            out.diagnostics.max_resample_mass_error = out.diagnostics.max_resample_mass_error.max(err);
            out.resample_times.push(ensemble.time);
        }
    }
    out.diagnostics.min_log_rho1 = out.log_rho1.iter().copied().fold(f64::INFINITY, f64::min);
    out.diagnostics.resample_count = ensemble.resample_count;
    Ok(out)
}
