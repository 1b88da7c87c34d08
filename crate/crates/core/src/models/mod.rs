//! Declarative description of the slow-fast signal, its jump-contaminated
//! observation, and built-in presets.

mod config;
mod presets;
mod validate;

pub use config::{
    ClosedFormConfig, IntensityConfig, LipschitzConfig, ModelConfig, ObservationConfig,
    PresetConfig,
};
pub use presets::{build_example6, build_linear_gaussian, Example6Params};
pub use validate::{validate_assumptions, validate_assumptions_with, CheckResult, ValidationOptions, ValidationReport};

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::expr::{Args, Expr};
use crate::noise::{LevyMeasureSpec, Region};

pub type NativeFn = Arc<dyn Fn(&Args<'_>, &mut [f64]) + Send + Sync>;
pub type NativeIntensity = Arc<dyn Fn(f64, &[f64], f64) -> f64 + Send + Sync>;

/// A vector (or row-major matrix) valued coefficient.
#[derive(Clone)]
pub enum Field {
    Expr(Vec<Expr>),
    Native { dim: usize, f: NativeFn },
}

impl fmt::Debug for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Field::Expr(e) => f.debug_list().entries(e.iter().map(|e| e.source())).finish(),
            Field::Native { dim, .. } => write!(f, "Native(dim={dim})"),
        }
    }
}

impl Field {
    pub fn parse(sources: &[&str]) -> Result<Self> {
        Ok(Field::Expr(
            sources.iter().map(|s| s.parse()).collect::<Result<_>>()?,
        ))
    }

    pub fn constant(values: &[f64]) -> Self {
        Field::Expr(values.iter().map(|&v| Expr::constant(v)).collect())
    }

    pub fn zero(dim: usize) -> Self {
        Field::constant(&vec![0.0; dim])
    }

    pub fn native(dim: usize, f: impl Fn(&Args<'_>, &mut [f64]) + Send + Sync + 'static) -> Self {
        Field::Native { dim, f: Arc::new(f) }
    }

    pub fn dim(&self) -> usize {
        match self {
            Field::Expr(e) => e.len(),
            Field::Native { dim, .. } => *dim,
        }
    }

    #[inline]
    pub fn eval(&self, args: &Args<'_>, out: &mut [f64]) {
        match self {
            Field::Expr(exprs) => {
                for (o, e) in out.iter_mut().zip(exprs) {
                    *o = e.eval(args);
                }
            }
            Field::Native { f, .. } => f(args, out),
        }
    }

    pub fn eval_vec(&self, args: &Args<'_>) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.eval(args, &mut out);
        out
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Field::Expr(e) if e.iter().all(Expr::is_zero))
    }

    /// Conservatively true for native callbacks.
    pub fn uses_z(&self) -> bool {
        match self {
            Field::Expr(e) => e.iter().any(Expr::uses_z),
            Field::Native { .. } => true,
        }
    }

    pub fn exprs(&self) -> Option<&[Expr]> {
        match self {
            Field::Expr(e) => Some(e),
            Field::Native { .. } => None,
        }
    }

    fn check(&self, name: &str, dim: usize, n: usize, m: usize, k: usize) -> Result<()> {
        if self.dim() != dim {
            return Err(Error::invalid(format!(
                "{name} has {} components, expected {dim}",
                self.dim()
            )));
        }
        if let Field::Expr(exprs) = self {
            for e in exprs {
                let (mx, mz, mu) = e.max_indices();
                let over = |m: Option<usize>, lim: usize| m.is_some_and(|i| i >= lim);
                if over(mx, n) || over(mz, m) || over(mu, k) {
                    return Err(Error::invalid(format!(
                        "{name}: `{}` indexes outside the state dimensions",
                        e.source()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// The observation-jump thinning intensity lambda(t, x, u).
#[derive(Clone)]
pub enum Intensity {
    Constant(f64),
    /// `c0 + (c1 - c0) / (1 + exp(-a * x[0]))`.
    Logistic { c0: f64, c1: f64, a: f64 },
    Native(NativeIntensity),
}

impl fmt::Debug for Intensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Intensity::Constant(c) => write!(f, "Constant({c})"),
            Intensity::Logistic { c0, c1, a } => write!(f, "Logistic({c0}, {c1}, {a})"),
            Intensity::Native(_) => write!(f, "Native"),
        }
    }
}

impl Intensity {
    #[inline]
    pub fn eval(&self, t: f64, x: &[f64], u: f64) -> f64 {
        match self {
            Intensity::Constant(c) => *c,
            Intensity::Logistic { c0, c1, a } => c0 + (c1 - c0) / (1.0 + (-a * x[0]).exp()),
            Intensity::Native(f) => f(t, x, u),
        }
    }

    pub fn as_constant(&self) -> Option<f64> {
        match self {
            Intensity::Constant(c) => Some(*c),
            _ => None,
        }
    }
}

/// Optional Lipschitz / growth constants used by assumption sampling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzBounds {
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
}

/// Coefficients, jump measures, scale parameter and initial state of the
/// slow-fast system. Matrices are row-major.
#[derive(Debug, Clone)]
pub struct SlowFastModel {
    pub n: usize,
    pub m: usize,
    pub l: usize,
    pub epsilon: f64,
    pub x0: Vec<f64>,
    pub z0: Vec<f64>,
    /// (x, z) -> R^n
    pub b1: Field,
    /// (x, z) -> R^{n x l}
    pub sigma1: Field,
    /// (x, u) -> R^n
    pub f1: Field,
    /// (x, z) -> R^m
    pub b2: Field,
    /// (x, z) -> R^{m x m}
    pub sigma2: Field,
    /// (x, z, u) -> R^m
    pub f2: Field,
    pub nu1: LevyMeasureSpec,
    pub nu2: LevyMeasureSpec,
    pub bounds: Option<LipschitzBounds>,
    /// Set when the fast part is `dz = -z dt + s dW` with scalar `s`
    /// (times identity) and no jumps; enables exact transition sampling.
    pub exact_ou_sigma: Option<f64>,
}

impl SlowFastModel {
    pub fn validate(&self) -> Result<()> {
        let (n, m, l) = (self.n, self.m, self.l);
        if n == 0 || m == 0 || l == 0 {
            return Err(Error::invalid("dimensions n, m, l must be positive"));
        }
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(Error::invalid(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if self.x0.len() != n || self.z0.len() != m {
            return Err(Error::invalid("initial state dimensions do not match n, m"));
        }
        self.b1.check("b1", n, n, m, 0)?;
        self.sigma1.check("sigma1", n * l, n, m, 0)?;
        self.f1.check("f1", n, n, 0, 1)?;
        self.b2.check("b2", m, n, m, 0)?;
        self.sigma2.check("sigma2", m * m, n, m, 0)?;
        self.f2.check("f2", m, n, m, 1)?;
        if self.exact_ou_sigma.is_some() && !(self.f2.is_zero() || self.nu2.is_null()) {
            return Err(Error::invalid("exact OU fast mode requires a jump-free fast process"));
        }
        Ok(())
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn has_slow_jumps(&self) -> bool {
        !self.nu1.is_null() && !self.f1.is_zero()
    }

    pub fn has_fast_jumps(&self) -> bool {
        !self.nu2.is_null() && !self.f2.is_zero()
    }

    /// `out = ∫ f1(x, u) nu1(du)`.
    pub fn slow_jump_compensator(&self, x: &[f64], out: &mut [f64], scratch: &mut [f64]) {
        if !self.has_slow_jumps() {
            out.iter_mut().for_each(|o| *o = 0.0);
            return;
        }
        self.nu1.integrate_into(out, scratch, |u, s| {
            self.f1.eval(&Args::new(0.0, x, &[], &[u]), s)
        });
    }

    /// `out = ∫ f2(x, z, u) nu2(du)`.
    pub fn fast_jump_compensator(&self, x: &[f64], z: &[f64], out: &mut [f64], scratch: &mut [f64]) {
        if !self.has_fast_jumps() {
            out.iter_mut().for_each(|o| *o = 0.0);
            return;
        }
        self.nu2.integrate_into(out, scratch, |u, s| {
            self.f2.eval(&Args::new(0.0, x, z, &[u]), s)
        });
    }
}

/// Sensor function, observation-jump kernels and thinning intensity.
#[derive(Debug, Clone)]
pub struct ObservationModel {
    pub d: usize,
    /// (x, z) -> R^d, bounded by `h_bound` in Euclidean norm.
    pub h: Field,
    pub h_bound: f64,
    /// (t, u) -> R^d on the small-jump region.
    pub f3: Field,
    /// (t, u) -> R^d on the large-jump region.
    pub g3: Field,
    pub lambda: Intensity,
    pub lambda_lower: f64,
    /// Small-jump region is `{|u| < u3_radius}`.
    pub u3_radius: f64,
    pub nu3_small: LevyMeasureSpec,
    pub nu3_large: LevyMeasureSpec,
}

impl ObservationModel {
    pub fn validate(&self, n: usize, m: usize) -> Result<()> {
        if self.d == 0 {
            return Err(Error::invalid("observation dimension must be positive"));
        }
        self.h.check("h", self.d, n, m, 0)?;
        self.f3.check("f3", self.d, 0, 0, 1)?;
        self.g3.check("g3", self.d, 0, 0, 1)?;
        if self.nu3_small.region() != Region::U3 || self.nu3_large.region() != Region::U3Complement {
            return Err(Error::invalid("nu3 parts must be declared on U3 and its complement"));
        }
        if !(self.lambda_lower > 0.0 && self.lambda_lower <= 1.0) {
            return Err(Error::invalid(format!(
                "lambda lower bound must lie in (0,1], got {}",
                self.lambda_lower
            )));
        }
        Ok(())
    }

    pub fn has_jumps(&self) -> bool {
        !self.nu3_small.is_null() || !self.nu3_large.is_null()
    }

    /// `∫_{U3} f3(t,u) lambda(t,x,u) nu3(du)`: the compensator drift of the
    /// small observation jumps under the physical measure.
    pub fn small_jump_compensator(&self, t: f64, x: &[f64], out: &mut [f64], scratch: &mut [f64]) {
        if self.nu3_small.is_null() || self.f3.is_zero() {
            out.iter_mut().for_each(|o| *o = 0.0);
            return;
        }
        self.nu3_small.integrate_into(out, scratch, |u, s| {
            self.f3.eval(&Args::new(t, &[], &[], &[u]), s);
            let lam = self.lambda.eval(t, x, u);
            s.iter_mut().for_each(|v| *v *= lam);
        });
    }

    /// `∫_{U3} (1 - lambda(t,x,u)) nu3(du)`.
    pub fn lambda_deficit(&self, t: f64, x: &[f64]) -> f64 {
        if self.nu3_small.is_null() {
            return 0.0;
        }
        match self.lambda.as_constant() {
            Some(c) => (1.0 - c) * self.nu3_small.total_intensity(),
            None => self.nu3_small.integrate(|u| 1.0 - self.lambda.eval(t, x, u)),
        }
    }
}

/// Known analytic facts about a preset, used as oracles and as the
/// closed-form homogenized model.
#[derive(Debug, Clone)]
pub struct ClosedForm {
    pub invariant_mean: Vec<f64>,
    /// Per-coordinate invariant variance of the frozen fast process.
    pub invariant_variance: Vec<f64>,
    /// Diffusion scale of the OU fast transition `z e^{-t} + N(0, s^2 (1-e^{-2t})/2)`.
    pub ou_sigma: Option<f64>,
    pub bbar1: Field,
    pub abar: Field,
    pub hbar: Field,
}

impl ClosedForm {
    pub fn transition_mean(&self, z0: f64, t: f64) -> f64 {
        z0 * (-t).exp()
    }

    pub fn transition_variance(&self, t: f64) -> Option<f64> {
        self.ou_sigma
            .map(|s| s * s * (1.0 - (-2.0 * t).exp()) / 2.0)
    }
}

#[derive(Debug, Clone)]
pub struct ModelPreset {
    pub name: String,
    pub slow_fast: SlowFastModel,
    pub observation: ObservationModel,
    pub closed_form: Option<ClosedForm>,
}

impl ModelPreset {
    pub fn validate(&self) -> Result<()> {
        self.slow_fast.validate()?;
        self.observation.validate(self.slow_fast.n, self.slow_fast.m)?;
        if let Some(cf) = &self.closed_form {
            let (n, m) = (self.slow_fast.n, self.slow_fast.m);
            cf.bbar1.check("closed_form.bbar1", n, n, 0, 0)?;
            cf.abar.check("closed_form.abar", n * n, n, 0, 0)?;
            cf.hbar.check("closed_form.hbar", self.observation.d, n, 0, 0)?;
            if cf.invariant_mean.len() != m || cf.invariant_variance.len() != m {
                return Err(Error::invalid("closed_form invariant moments must have m entries"));
            }
        }
        Ok(())
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.slow_fast.epsilon = epsilon;
        self
    }

    /// Looks up a built-in preset by name with default parameters.
    pub fn builtin(name: &str) -> Result<Self> {
        match name {
            "example6" => build_example6(Example6Params::default()),
            "linear" => build_linear_gaussian(1.0, 0.5, 1.0, 0.0),
            other => Err(Error::config("preset", format!("unknown preset `{other}`"))),
        }
    }
}
