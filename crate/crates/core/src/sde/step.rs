use super::path::{JumpLog, LoggedJump};
use super::scheme::{FastMode, StepScheme};
use super::streams::SignalNoise;
use crate::averaging::HomogenizedModel;
use crate::error::{Error, Result};
use crate::expr::Args;
use crate::models::{Field, SlowFastModel};
use crate::noise::{standard_normal, RngStream};

/// One exact draw from the OU transition `z e^{-dt} + N(0, s^2 (1 - e^{-2dt}) / 2)`.
pub fn exact_ou_step(z: f64, dt: f64, sigma2: f64, stream: &mut RngStream) -> f64 {
    let decay = (-dt).exp();
    let sd = sigma2.abs() * (-(-2.0 * dt).exp_m1() / 2.0).sqrt();
    z * decay + sd * standard_normal(stream)
}

/// `(decay, sd)` of the OU transition over `dt` in fast time.
fn ou_coefficients(sigma: f64, dt: f64) -> (f64, f64) {
    ((-dt).exp(), sigma.abs() * (-(-2.0 * dt).exp_m1() / 2.0).sqrt())
}

fn check_finite(t: f64, what: &str, v: &[f64]) -> Result<()> {
    if v.iter().all(|a| a.is_finite()) {
        Ok(())
    } else {
        Err(Error::IntegrationFailure {
            time: t,
            detail: format!("non-finite {what} state {v:?}"),
        })
    }
}

/// `out += m * v` for a row-major `out.len() x v.len()` matrix.
#[inline]
fn add_mat_vec(out: &mut [f64], m: &[f64], v: &[f64]) {
    let cols = v.len();
    for (i, o) in out.iter_mut().enumerate() {
        let row = &m[i * cols..(i + 1) * cols];
        *o += row.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// Compensated slow jumps over `(t, t + dt]`, with `f1` evaluated at the
/// left state `x_left`.
#[allow(clippy::too_many_arguments)]
fn apply_slow_jumps(
    model: &SlowFastModel,
    step: usize,
    t: f64,
    dt: f64,
    x_left: &[f64],
    x: &mut [f64],
    noise: &mut impl SignalNoise,
    log: Option<&mut JumpLog>,
    buf: &mut [f64],
    scratch: &mut [f64],
) -> Result<()> {
    if !model.has_slow_jumps() {
        return Ok(());
    }
    let events = noise.slow_jumps(&model.nu1, dt)?;
    model.slow_jump_compensator(x_left, buf, scratch);
    for (xi, c) in x.iter_mut().zip(buf.iter()) {
        *xi -= dt * c;
    }
    let mut log = log;
    for e in events {
        model.f1.eval(&Args::new(t + e.time, x_left, &[], &[e.mark]), buf);
        for (xi, b) in x.iter_mut().zip(buf.iter()) {
            *xi += b;
        }
        if let Some(log) = log.as_deref_mut() {
            log.slow.push(LoggedJump {
                step,
                time: t + e.time,
                mark: e.mark,
                delta: buf.to_vec(),
            });
        }
    }
    Ok(())
}

/// Advances `(X, Z)` of the full system by one slow step.
///
/// The fast variable takes `dt_slow / dt_fast` substeps with X frozen at its
/// left value; X accumulates `b1(x_left, z_j) dt_fast + sigma1(x_left, z_j) dV_j`
/// over the substeps and then receives its compensated jumps.
pub struct FullStepper<'a> {
    model: &'a SlowFastModel,
    substeps: usize,
    dt_fast: f64,
    dt_slow: f64,
    ou: Option<(f64, f64)>,
    x_left: Vec<f64>,
    z_left: Vec<f64>,
    dx: Vec<f64>,
    dz: Vec<f64>,
    b1: Vec<f64>,
    s1: Vec<f64>,
    dv: Vec<f64>,
    b2: Vec<f64>,
    s2: Vec<f64>,
    dw: Vec<f64>,
    hbuf: Vec<f64>,
    buf_n: Vec<f64>,
    scratch_n: Vec<f64>,
    buf_m: Vec<f64>,
    scratch_m: Vec<f64>,
}

impl<'a> FullStepper<'a> {
    pub fn new(model: &'a SlowFastModel, scheme: &StepScheme) -> Result<Self> {
        scheme.check_stiffness(model.epsilon)?;
        let ou = match scheme.fast_mode {
            FastMode::Euler => None,
            FastMode::ExactOu => {
                let sigma = model.exact_ou_sigma.ok_or_else(|| {
                    Error::invalid("exact OU fast mode needs a model with an OU fast process")
                })?;
                Some(ou_coefficients(sigma, scheme.dt_fast / model.epsilon))
            }
        };
        let (n, m, l) = (model.n, model.m, model.l);
        Ok(Self {
            model,
            substeps: scheme.substeps(),
            dt_fast: scheme.dt_fast,
            dt_slow: scheme.dt_slow,
            ou,
            x_left: vec![0.0; n],
            z_left: vec![0.0; m],
            dx: vec![0.0; n],
            dz: vec![0.0; m],
            b1: vec![0.0; n],
            s1: vec![0.0; n * l],
            dv: vec![0.0; l],
            b2: vec![0.0; m],
            s2: vec![0.0; m * m],
            dw: vec![0.0; m],
            hbuf: Vec::new(),
            buf_n: vec![0.0; n],
            scratch_n: vec![0.0; n],
            buf_m: vec![0.0; m],
            scratch_m: vec![0.0; m],
        })
    }

    /// State at the start of the last step.
    pub fn x_left(&self) -> &[f64] {
        &self.x_left
    }

    /// Step `step` from `t` to `t + dt_slow`. When `h_integral` is given,
    /// `∫ h(x_left, z) dt` over the step is added to it.
    #[allow(clippy::too_many_arguments)]
    pub fn step(
        &mut self,
        step: usize,
        t: f64,
        x: &mut [f64],
        z: &mut [f64],
        noise: &mut impl SignalNoise,
        h_integral: Option<(&Field, &mut [f64])>,
        mut log: Option<&mut JumpLog>,
    ) -> Result<()> {
        let model = self.model;
        let eps = model.epsilon;
        let df = self.dt_fast;
        let sqrt_df = df.sqrt();
        self.x_left.copy_from_slice(x);
        self.dx.iter_mut().for_each(|v| *v = 0.0);
        let mut h_integral = h_integral;
        if let Some((h, _)) = &h_integral {
            self.hbuf.resize(h.dim(), 0.0);
        }

        for j in 0..self.substeps {
            let tj = t + j as f64 * df;
            {
                let args = Args::new(tj, &self.x_left, z, &[]);
                model.b1.eval(&args, &mut self.b1);
                model.sigma1.eval(&args, &mut self.s1);
                if let Some((h, acc)) = h_integral.as_mut() {
                    h.eval(&args, &mut self.hbuf);
                    for (a, v) in acc.iter_mut().zip(&self.hbuf) {
                        *a += v * df;
                    }
                }
            }
            noise.slow_gauss(sqrt_df, &mut self.dv);
            for (d, b) in self.dx.iter_mut().zip(&self.b1) {
                *d += b * df;
            }
            add_mat_vec(&mut self.dx, &self.s1, &self.dv);

            match self.ou {
                Some((decay, sd)) => {
                    noise.fast_gauss(1.0, &mut self.dw);
                    for (zi, w) in z.iter_mut().zip(&self.dw) {
                        *zi = *zi * decay + sd * w;
                    }
                }
                None => self.euler_fast_substep(step, tj, z, noise, log.as_deref_mut(), eps)?,
            }
        }

        for (xi, d) in x.iter_mut().zip(&self.dx) {
            *xi += d;
        }
        apply_slow_jumps(
            model,
            step,
            t,
            self.dt_slow,
            &self.x_left,
            x,
            noise,
            log,
            &mut self.buf_n,
            &mut self.scratch_n,
        )?;
        let t_end = t + self.dt_slow;
        check_finite(t_end, "slow", x)?;
        check_finite(t_end, "fast", z)
    }

    fn euler_fast_substep(
        &mut self,
        step: usize,
        tj: f64,
        z: &mut [f64],
        noise: &mut impl SignalNoise,
        log: Option<&mut JumpLog>,
        eps: f64,
    ) -> Result<()> {
        let model = self.model;
        let df = self.dt_fast;
        self.z_left.copy_from_slice(z);
        let args = Args::new(tj, &self.x_left, &self.z_left, &[]);
        model.b2.eval(&args, &mut self.b2);
        model.sigma2.eval(&args, &mut self.s2);
        noise.fast_gauss(df.sqrt(), &mut self.dw);
        for (d, b) in self.dz.iter_mut().zip(&self.b2) {
            *d = b * df / eps;
        }
        let inv_sqrt_eps = 1.0 / eps.sqrt();
        self.dw.iter_mut().for_each(|w| *w *= inv_sqrt_eps);
        add_mat_vec(&mut self.dz, &self.s2, &self.dw);

        if model.has_fast_jumps() {
            let events = noise.fast_jumps(&model.nu2, df, 1.0 / eps)?;
            model.fast_jump_compensator(&self.x_left, &self.z_left, &mut self.buf_m, &mut self.scratch_m);
            for (d, c) in self.dz.iter_mut().zip(&self.buf_m) {
                *d -= c * df / eps;
            }
            let mut log = log;
            for e in events {
                let te = tj + e.time;
                model
                    .f2
                    .eval(&Args::new(te, &self.x_left, &self.z_left, &[e.mark]), &mut self.buf_m);
                for (d, b) in self.dz.iter_mut().zip(&self.buf_m) {
                    *d += b;
                }
                if let Some(log) = log.as_deref_mut() {
                    log.fast.push(LoggedJump {
                        step,
                        time: te,
                        mark: e.mark,
                        delta: self.buf_m.clone(),
                    });
                }
            }
        }
        for (zi, d) in z.iter_mut().zip(&self.dz) {
            *zi += d;
        }
        Ok(())
    }
}

/// Advances the homogenized slow process by one slow step.
///
/// The Brownian increment is drawn as a sum over `substeps` pieces so that
/// it coincides with the one a full stepper on the same grid and streams
/// would use (when the slow noise dimension equals the state dimension).
pub struct HomogenizedStepper<'a> {
    model: &'a HomogenizedModel,
    substeps: usize,
    dt: f64,
    x_left: Vec<f64>,
    bbar: Vec<f64>,
    sigma: Vec<f64>,
    dv: Vec<f64>,
    piece: Vec<f64>,
    buf: Vec<f64>,
    scratch: Vec<f64>,
}

impl<'a> HomogenizedStepper<'a> {
    pub fn new(model: &'a HomogenizedModel, dt: f64, substeps: usize) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) || substeps == 0 {
            return Err(Error::invalid(format!(
                "homogenized step needs dt > 0 and substeps >= 1, got dt={dt}, substeps={substeps}"
            )));
        }
        let n = model.n();
        Ok(Self {
            model,
            substeps,
            dt,
            x_left: vec![0.0; n],
            bbar: vec![0.0; n],
            sigma: vec![0.0; n * n],
            dv: vec![0.0; n],
            piece: vec![0.0; n],
            buf: vec![0.0; n],
            scratch: vec![0.0; n],
        })
    }

    pub fn step(
        &mut self,
        step: usize,
        t: f64,
        x: &mut [f64],
        noise: &mut impl SignalNoise,
        log: Option<&mut JumpLog>,
    ) -> Result<()> {
        self.x_left.copy_from_slice(x);
        self.model.bbar1(&self.x_left, &mut self.bbar)?;
        self.model.sigmabar1(&self.x_left, &mut self.sigma)?;
        let piece_sd = (self.dt / self.substeps as f64).sqrt();
        self.dv.iter_mut().for_each(|v| *v = 0.0);
        for _ in 0..self.substeps {
            noise.slow_gauss(piece_sd, &mut self.piece);
            for (v, p) in self.dv.iter_mut().zip(&self.piece) {
                *v += p;
            }
        }
        for (xi, b) in x.iter_mut().zip(&self.bbar) {
            *xi += b * self.dt;
        }
        add_mat_vec(x, &self.sigma, &self.dv);
        apply_slow_jumps(
            self.model.slow(),
            step,
            t,
            self.dt,
            &self.x_left,
            x,
            noise,
            log,
            &mut self.buf,
            &mut self.scratch,
        )?;
        check_finite(t + self.dt, "slow", x)
    }
}

/// Steps the fast process with the slow state frozen, at its natural
/// (unaccelerated) rate.
pub struct FrozenFastStepper<'a> {
    model: &'a SlowFastModel,
    x: Vec<f64>,
    dt: f64,
    ou: Option<(f64, f64)>,
    z_left: Vec<f64>,
    b2: Vec<f64>,
    s2: Vec<f64>,
    dw: Vec<f64>,
    dz: Vec<f64>,
    buf: Vec<f64>,
    scratch: Vec<f64>,
}

impl<'a> FrozenFastStepper<'a> {
    pub fn new(model: &'a SlowFastModel, x: &[f64], dt: f64, mode: FastMode) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::invalid(format!("dt must be positive, got {dt}")));
        }
        if x.len() != model.n {
            return Err(Error::invalid(format!(
                "frozen slow state has {} components, expected {}",
                x.len(),
                model.n
            )));
        }
        let ou = match mode {
            FastMode::Euler => None,
            FastMode::ExactOu => {
                let sigma = model.exact_ou_sigma.ok_or_else(|| {
                    Error::invalid("exact OU fast mode needs a model with an OU fast process")
                })?;
                Some(ou_coefficients(sigma, dt))
            }
        };
        let m = model.m;
        Ok(Self {
            model,
            x: x.to_vec(),
            dt,
            ou,
            z_left: vec![0.0; m],
            b2: vec![0.0; m],
            s2: vec![0.0; m * m],
            dw: vec![0.0; m],
            dz: vec![0.0; m],
            buf: vec![0.0; m],
            scratch: vec![0.0; m],
        })
    }

    pub fn step(&mut self, t: f64, z: &mut [f64], stream: &mut RngStream) -> Result<()> {
        let model = self.model;
        let dt = self.dt;
        if let Some((decay, sd)) = self.ou {
            stream.fast_gauss(1.0, &mut self.dw);
            for (zi, w) in z.iter_mut().zip(&self.dw) {
                *zi = *zi * decay + sd * w;
            }
            return check_finite(t + dt, "fast", z);
        }
        self.z_left.copy_from_slice(z);
        let args = Args::new(t, &self.x, &self.z_left, &[]);
        model.b2.eval(&args, &mut self.b2);
        model.sigma2.eval(&args, &mut self.s2);
        stream.fast_gauss(dt.sqrt(), &mut self.dw);
        for (d, b) in self.dz.iter_mut().zip(&self.b2) {
            *d = b * dt;
        }
        add_mat_vec(&mut self.dz, &self.s2, &self.dw);
        if model.has_fast_jumps() {
            let events = stream.fast_jumps(&model.nu2, dt, 1.0)?;
            model.fast_jump_compensator(&self.x, &self.z_left, &mut self.buf, &mut self.scratch);
            for (d, c) in self.dz.iter_mut().zip(&self.buf) {
                *d -= c * dt;
            }
            for e in events {
                model
                    .f2
                    .eval(&Args::new(t + e.time, &self.x, &self.z_left, &[e.mark]), &mut self.buf);
                for (d, b) in self.dz.iter_mut().zip(&self.buf) {
                    *d += b;
                }
            }
        }
        for (zi, d) in z.iter_mut().zip(&self.dz) {
            *zi += d;
        }
        check_finite(t + dt, "fast", z)
    }
}
