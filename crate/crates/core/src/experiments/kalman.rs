use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::Args;
use crate::filter::{run_filter, FilterConfig, FilterDynamics, Psi};
use crate::models::ModelPreset;
use crate::noise::derive_seed;
use crate::sde::{simulate_full, FastMode, PathStreams, StepScheme};

const PATH_TAG: u64 = 0x6b61_6c70;
const PARTICLE_TAG: u64 = 0x6b61_6c66;

/// Scalar signal `dx = (-a x + c) dt + sigma dV` observed as
/// `dY = x dt + dB`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearGaussian {
    pub a: f64,
    pub c: f64,
    pub sigma: f64,
    pub x0: f64,
}

impl LinearGaussian {
    /// Reads the coefficients off a preset, rejecting anything that is not
    /// a scalar jump-free linear-Gaussian model with `h(x) = x`. Linearity
    /// is checked by evaluating the coefficients on a probe grid.
    pub fn from_preset(preset: &ModelPreset) -> Result<Self> {
        let sf = &preset.slow_fast;
        let obs = &preset.observation;
        if sf.n != 1 || sf.l != 1 || obs.d != 1 {
            return Err(Error::invalid("Kalman oracle needs a scalar signal and observation"));
        }
        if sf.has_slow_jumps() || obs.has_jumps() {
            return Err(Error::invalid("Kalman oracle needs a model without jumps"));
        }
        let z = vec![0.0; sf.m];
        let eval = |f: &crate::models::Field, x: f64, z: &[f64]| f.eval_vec(&Args::new(0.0, &[x], z, &[]))[0];
        let c = eval(&sf.b1, 0.0, &z);
        let a = c - eval(&sf.b1, 1.0, &z);
        let sigma = eval(&sf.sigma1, 0.0, &z);
        let zs: Vec<Vec<f64>> = [-2.0, 0.5, 3.0].iter().map(|&v| vec![v; sf.m]).collect();
        for &x in &[-3.0f64, -0.7, 0.0, 1.3, 4.0] {
            for z in &zs {
                let scale = 1.0 + a.abs() * x.abs() + c.abs();
                if (eval(&sf.b1, x, z) - (-a * x + c)).abs() > 1e-10 * scale {
                    return Err(Error::invalid(format!("drift is not affine in x (probe x={x})")));
                }
                if (eval(&sf.sigma1, x, z) - sigma).abs() > 1e-10 * (1.0 + sigma.abs()) {
                    return Err(Error::invalid(format!("diffusion is not constant (probe x={x})")));
                }
                if (eval(&obs.h, x, z) - x).abs() > 1e-10 * (1.0 + x.abs()) {
                    return Err(Error::invalid(format!("sensor is not h(x) = x (probe x={x})")));
                }
            }
        }
        Ok(Self {
            a,
            c,
            sigma: sigma.abs(),
            x0: sf.x0[0],
        })
    }
}

/// Positive root of `-2 a P + sigma^2 - P^2 = 0`.
pub fn stationary_variance(a: f64, sigma: f64) -> f64 {
    -a + (a * a + sigma * sigma).sqrt()
}

/// Euler discretization of the Kalman–Bucy equations driven by the
/// observation increments `dy`, starting from mean `m0` and variance `p0`.
/// Returns mean and variance series of length `dy.len() + 1`.
pub fn kalman_bucy(model: &LinearGaussian, dy: &[f64], dt: f64, m0: f64, p0: f64) -> (Vec<f64>, Vec<f64>) {
    let LinearGaussian { a, c, sigma, .. } = *model;
    let mut m = vec![m0];
    let mut p = vec![p0];
    for &d in dy {
        let (mk, pk) = (*m.last().unwrap(), *p.last().unwrap());
        m.push(mk + (-a * mk + c) * dt + pk * (d - mk * dt));
        p.push(pk + (-2.0 * a * pk + sigma * sigma - pk * pk) * dt);
    }
    (m, p)
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleResult {
    pub times: Vec<f64>,
    pub oracle_mean: Vec<f64>,
    /// Starts at 0: the signal starts at a known point.
    pub oracle_variance: Vec<f64>,
    pub filter_mean: Vec<f64>,
    /// Root mean square difference of the two mean series over the grid.
    pub rmse: f64,
}

/// Simulates one observation path of a linear-Gaussian preset and compares
/// the particle filter mean with the Kalman–Bucy mean on that path.
pub fn kalman_comparison(
    preset: &ModelPreset,
    particles: usize,
    horizon: f64,
    dt: f64,
    seed: u64,
) -> Result<OracleResult> {
    let lg = LinearGaussian::from_preset(preset)?;
    let sf = &preset.slow_fast;
    let obs = &preset.observation;
    // The fast component does not enter the coefficients; sample it exactly
    // so the grid is independent of epsilon.
    let mode = if sf.exact_ou_sigma.is_some() {
        FastMode::ExactOu
    } else {
        FastMode::Euler
    };
    let scheme = StepScheme::for_epsilon(dt, sf.epsilon, mode)?;
    let path = simulate_full(sf, obs, horizon, &scheme, &mut PathStreams::new(derive_seed(seed, &[PATH_TAG]), 0))?;
    let record = path.observation_record();
    let dy: Vec<f64> = record.bbar_increments.iter().map(|v| v[0]).collect();
    let (oracle_mean, oracle_variance) = kalman_bucy(&lg, &dy, dt, lg.x0, 0.0);

    let dynamics = FilterDynamics::Full { model: sf, obs, scheme };
    let config = FilterConfig::new(particles, derive_seed(seed, &[PARTICLE_TAG]));
    let out = run_filter(&dynamics, &record, &[Psi::Poly { c0: 0.0, c1: 1.0, c2: 0.0 }], &config)?;
    let filter_mean = out.pi[0].clone();
    let sq: Vec<f64> = filter_mean
        .iter()
        .zip(&oracle_mean)
        .map(|(f, o)| (f - o) * (f - o))
        .collect();
    let rmse = crate::stats::mean(&sq).sqrt();
    Ok(OracleResult {
        times: out.times,
        oracle_mean,
        oracle_variance,
        filter_mean,
        rmse,
    })
}
