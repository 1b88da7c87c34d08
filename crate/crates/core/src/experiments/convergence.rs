use std::io::{self, Write};

use rayon::prelude::*;
use serde::Serialize;

use super::martingale::martingale_check;
use super::signal::{homogenized_endpoints, max_coordinate_ks};
use super::{ks_statistic, DtRule};
use crate::averaging::{build_homogenized, HomogenizationMode};
use crate::error::{Error, Result};
use crate::filter::{run_filter, FilterConfig, FilterDynamics, Psi};
use crate::models::ModelPreset;
use crate::noise::derive_seed;
use crate::sde::{format_value, simulate_full, PathStreams};
use crate::stats::{mean, std_error};

const OBSERVATION_TAG: u64 = 0x006f_6273;
const PARTICLE_TAG: u64 = 0x7061_7274;
const SIGNAL_TAG: u64 = 0x7369_676e;
const MARTINGALE_TAG: u64 = 0x6d61_7274;

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceSettings {
    /// Strictly decreasing.
    pub epsilons: Vec<f64>,
    pub replications: usize,
    pub particles: usize,
    pub psis: Vec<Psi>,
    pub horizon: f64,
    pub dt_rule: DtRule,
    pub seed: u64,
    pub ess_fraction: f64,
    /// Runs of the reference-measure likelihood check per epsilon.
    pub martingale_runs: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct PsiGap {
    pub psi: Psi,
    /// Mean over replications of `|pi^eps_T(psi) - pi^0_T(psi)|` on a
    /// shared observation path.
    pub mean_gap: f64,
    pub gap_se: f64,
    /// KS distance between the replication samples of `pi^eps_T(psi)` and
    /// `pi^0_T(psi)`.
    pub ks_pi: f64,
    pub pi_full: Vec<f64>,
    pub pi_homogenized: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EpsilonResult {
    pub epsilon: f64,
    pub gaps: Vec<PsiGap>,
    /// KS distance between `X^eps_T` of the observed paths and an
    /// independent sample of `X^0_T`.
    pub ks_signal: f64,
    pub martingale_mean: f64,
    pub martingale_se: f64,
    pub resamples_full: u64,
    pub resamples_homogenized: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceReport {
    pub settings: ConvergenceSettings,
    pub per_eps: Vec<EpsilonResult>,
    /// Set when fewer than two replications make standard errors undefined.
    pub insufficient_replications: bool,
}

impl ConvergenceReport {
    /// Mean gaps of test function `j`, one per epsilon.
    pub fn mean_gaps(&self, j: usize) -> Vec<f64> {
        self.per_eps.iter().map(|e| e.gaps[j].mean_gap).collect()
    }

    pub fn gap_ses(&self, j: usize) -> Vec<f64> {
        self.per_eps.iter().map(|e| e.gaps[j].gap_se).collect()
    }

    pub fn ks_pi(&self, j: usize) -> Vec<f64> {
        self.per_eps.iter().map(|e| e.gaps[j].ks_pi).collect()
    }

    /// One row per (epsilon, psi):
    /// `epsilon,psi,mean_gap,gap_se,ks_pi,ks_signal,martingale_mean,martingale_se`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "epsilon,psi,mean_gap,gap_se,ks_pi,ks_signal,martingale_mean,martingale_se")?;
        for e in &self.per_eps {
            for g in &e.gaps {
                writeln!(
                    w,
                    "{},\"{}\",{},{},{},{},{},{}",
                    format_value(e.epsilon),
                    g.psi,
                    format_value(g.mean_gap),
                    format_value(g.gap_se),
                    format_value(g.ks_pi),
                    format_value(e.ks_signal),
                    format_value(e.martingale_mean),
                    format_value(e.martingale_se),
                )?;
            }
        }
        Ok(())
    }

    /// Per-replication terminal estimates:
    /// `epsilon,replication,psi,pi_full,pi_homogenized`.
    pub fn write_replications_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "epsilon,replication,psi,pi_full,pi_homogenized")?;
        for e in &self.per_eps {
            for g in &e.gaps {
                for (r, (a, b)) in g.pi_full.iter().zip(&g.pi_homogenized).enumerate() {
                    writeln!(
                        w,
                        "{},{r},\"{}\",{},{}",
                        format_value(e.epsilon),
                        g.psi,
                        format_value(*a),
                        format_value(*b)
                    )?;
                }
            }
        }
        Ok(())
    }
}

struct Replication {
    pi_full: Vec<f64>,
    pi_homogenized: Vec<f64>,
    x_final: Vec<f64>,
    resamples_full: u64,
    resamples_homogenized: u64,
}

/// For each epsilon and replication: simulate one `(X, Z, Y)` path of the
/// epsilon-model, run the full and the homogenized filter on the same
/// observation, and compare their terminal estimates.
///
/// Replication `r` uses the same observation-path streams and particle
/// streams for every epsilon, and the two filters of a replication share
/// their particle streams.
pub fn filter_convergence_study(preset: &ModelPreset, settings: &ConvergenceSettings) -> Result<ConvergenceReport> {
    let s = settings;
    if s.epsilons.is_empty() || s.epsilons.windows(2).any(|w| !(w[0] > w[1])) {
        return Err(Error::invalid("epsilons must be non-empty and strictly decreasing"));
    }
    if s.epsilons.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::invalid("epsilons must be positive"));
    }
    if s.replications == 0 || s.replications > u32::MAX as usize {
        return Err(Error::invalid("replications must be positive"));
    }
    let hmodel = build_homogenized(preset, HomogenizationMode::ClosedForm, None)?;
    let observation_seed = derive_seed(s.seed, &[OBSERVATION_TAG]);
    let x0_sample = homogenized_endpoints(
        &hmodel,
        s.replications,
        s.horizon,
        s.dt_rule.dt_slow,
        derive_seed(s.seed, &[SIGNAL_TAG]),
    )?;

    let mut per_eps = Vec::with_capacity(s.epsilons.len());
    for &eps in &s.epsilons {
        let model = preset.clone().with_epsilon(eps);
        let scheme = s.dt_rule.scheme(eps)?;
        let full = FilterDynamics::Full {
            model: &model.slow_fast,
            obs: &model.observation,
            scheme,
        };
        let homogenized = FilterDynamics::Homogenized {
            model: &hmodel,
            scheme,
        };
        let reps = (0..s.replications)
            .into_par_iter()
            .map(|r| {
                let path = simulate_full(
                    &model.slow_fast,
                    &model.observation,
                    s.horizon,
                    &scheme,
                    &mut PathStreams::new(observation_seed, r as u32),
                )?;
                let record = path.observation_record();
                let config = FilterConfig {
                    particles: s.particles,
                    ess_fraction: s.ess_fraction,
                    root_seed: derive_seed(s.seed, &[PARTICLE_TAG, r as u64]),
                    resample: true,
                };
                let a = run_filter(&full, &record, &s.psis, &config)?;
                let b = run_filter(&homogenized, &record, &s.psis, &config)?;
                Ok(Replication {
                    pi_full: (0..s.psis.len()).map(|j| a.final_pi(j)).collect(),
                    pi_homogenized: (0..s.psis.len()).map(|j| b.final_pi(j)).collect(),
                    x_final: path.final_x().to_vec(),
                    resamples_full: a.diagnostics.resample_count,
                    resamples_homogenized: b.diagnostics.resample_count,
                })
            })
            .collect::<Result<Vec<_>>>()?;

        let gaps = s
            .psis
            .iter()
            .enumerate()
            .map(|(j, psi)| {
                let pi_full: Vec<f64> = reps.iter().map(|r| r.pi_full[j]).collect();
                let pi_homogenized: Vec<f64> = reps.iter().map(|r| r.pi_homogenized[j]).collect();
                let gap: Vec<f64> = pi_full.iter().zip(&pi_homogenized).map(|(a, b)| (a - b).abs()).collect();
                Ok(PsiGap {
                    psi: *psi,
                    mean_gap: mean(&gap),
                    gap_se: std_error(&gap),
                    ks_pi: ks_statistic(&pi_full, &pi_homogenized)?,
                    pi_full,
                    pi_homogenized,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let xe: Vec<Vec<f64>> = reps.iter().map(|r| r.x_final.clone()).collect();
        let mart = martingale_check(
            &model,
            eps,
            s.martingale_runs,
            s.horizon,
            s.dt_rule,
            derive_seed(s.seed, &[MARTINGALE_TAG]),
        )?;
        per_eps.push(EpsilonResult {
            epsilon: eps,
            gaps,
            ks_signal: max_coordinate_ks(&xe, &x0_sample)?,
            martingale_mean: mart.lambda_mean,
            martingale_se: mart.lambda_se,
            resamples_full: reps.iter().map(|r| r.resamples_full).sum(),
            resamples_homogenized: reps.iter().map(|r| r.resamples_homogenized).sum(),
        });
    }
    Ok(ConvergenceReport {
        settings: s.clone(),
        per_eps,
        insufficient_replications: s.replications < 2,
    })
}
