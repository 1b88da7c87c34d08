use super::{ClosedForm, Field, Intensity, LipschitzBounds, ModelPreset, ObservationModel, SlowFastModel};
use crate::error::{Error, Result};
use crate::noise::{LevyMeasureSpec, MarkSampler, Region};

/// Parameters of the scalar OU-driven example: slow drift `sin z`, fast OU
/// `dz = -z/eps dt + sigma2/sqrt(eps) dW`, sensor `arctan x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Example6Params {
    pub sigma1: f64,
    pub sigma2: f64,
    pub x0: f64,
    pub z0: f64,
    pub lambda_const: f64,
    pub epsilon: f64,
    /// nu3 mass on the small-jump region `{|u| < 1}`; marks uniform on (-0.9, 0.9).
    pub small_jump_rate: f64,
    /// nu3 mass on the large-jump region; marks uniform on [1, 2).
    pub large_jump_rate: f64,
}

impl Default for Example6Params {
    fn default() -> Self {
        Self {
            sigma1: 1.0,
            sigma2: std::f64::consts::SQRT_2,
            x0: 0.0,
            z0: 0.0,
            lambda_const: 0.7,
            epsilon: 0.1,
            small_jump_rate: 1.0,
            large_jump_rate: 0.2,
        }
    }
}

pub fn build_example6(p: Example6Params) -> Result<ModelPreset> {
    if p.sigma1 == 0.0 || p.sigma2 == 0.0 || !p.sigma1.is_finite() || !p.sigma2.is_finite() {
        return Err(Error::invalid("sigma1 and sigma2 must be finite and nonzero"));
    }
    if !(p.lambda_const > 0.0 && p.lambda_const < 1.0) {
        return Err(Error::invalid(format!(
            "lambda_const must lie in (0,1), got {}",
            p.lambda_const
        )));
    }
    let s1 = p.sigma1;
    let s2 = p.sigma2;
    let slow_fast = SlowFastModel {
        n: 1,
        m: 1,
        l: 1,
        epsilon: p.epsilon,
        x0: vec![p.x0],
        z0: vec![p.z0],
        b1: Field::parse(&["sin(z[0])"])?,
        sigma1: Field::constant(&[s1]),
        f1: Field::zero(1),
        b2: Field::parse(&["-z[0]"])?,
        sigma2: Field::constant(&[s2]),
        f2: Field::zero(1),
        nu1: LevyMeasureSpec::zero(Region::U1),
        nu2: LevyMeasureSpec::zero(Region::U2),
        // sin and -z are 1-Lipschitz; |sin z|^2 + s1^2 <= 1 + s1^2.
        bounds: Some(LipschitzBounds {
            l1: 2.0,
            l2: 2.0 + s1 * s1,
            l3: 2.0,
        }),
        exact_ou_sigma: Some(s2),
    };
    let observation = ObservationModel {
        d: 1,
        h: Field::parse(&["arctan(x[0])"])?,
        h_bound: std::f64::consts::FRAC_PI_2,
        f3: Field::parse(&["u[0]"])?,
        g3: Field::parse(&["u[0]"])?,
        lambda: Intensity::Constant(p.lambda_const),
        lambda_lower: p.lambda_const,
        u3_radius: 1.0,
        nu3_small: LevyMeasureSpec::new(
            p.small_jump_rate,
            MarkSampler::Uniform { a: -0.9, b: 0.9 },
            Region::U3,
        )?,
        nu3_large: LevyMeasureSpec::new(
            p.large_jump_rate,
            MarkSampler::Uniform { a: 1.0, b: 2.0 },
            Region::U3Complement,
        )?,
    };
    let closed_form = ClosedForm {
        invariant_mean: vec![0.0],
        invariant_variance: vec![s2 * s2 / 2.0],
        ou_sigma: Some(s2),
        // sin is odd and the invariant law is centred Gaussian.
        bbar1: Field::zero(1),
        abar: Field::constant(&[s1 * s1]),
        hbar: Field::parse(&["arctan(x[0])"])?,
    };
    let preset = ModelPreset {
        name: "example6".into(),
        slow_fast,
        observation,
        closed_form: Some(closed_form),
    };
    preset.validate()?;
    Ok(preset)
}

/// Scalar linear-Gaussian signal `dx = (-a x + c) dt + sigma dV` observed
/// through `h(x) = x` with unit noise and no jumps anywhere. The fast
/// component is a decoupled unit OU process.
pub fn build_linear_gaussian(a: f64, c: f64, sigma: f64, x0: f64) -> Result<ModelPreset> {
    let drift = format!("-{a:?} * x[0] + {c:?}");
    let slow_fast = SlowFastModel {
        n: 1,
        m: 1,
        l: 1,
        epsilon: 1.0,
        x0: vec![x0],
        z0: vec![0.0],
        b1: Field::parse(&[&drift])?,
        sigma1: Field::constant(&[sigma]),
        f1: Field::zero(1),
        b2: Field::parse(&["-z[0]"])?,
        sigma2: Field::constant(&[1.0]),
        f2: Field::zero(1),
        nu1: LevyMeasureSpec::zero(Region::U1),
        nu2: LevyMeasureSpec::zero(Region::U2),
        bounds: None,
        exact_ou_sigma: Some(1.0),
    };
    let observation = ObservationModel {
        d: 1,
        h: Field::parse(&["x[0]"])?,
        h_bound: f64::INFINITY,
        f3: Field::zero(1),
        g3: Field::zero(1),
        lambda: Intensity::Constant(1.0),
        lambda_lower: 1.0,
        u3_radius: 1.0,
        nu3_small: LevyMeasureSpec::zero(Region::U3),
        nu3_large: LevyMeasureSpec::zero(Region::U3Complement),
    };
    let closed_form = ClosedForm {
        invariant_mean: vec![0.0],
        invariant_variance: vec![0.5],
        ou_sigma: Some(1.0),
        bbar1: Field::parse(&[&drift])?,
        abar: Field::constant(&[sigma * sigma]),
        hbar: Field::parse(&["x[0]"])?,
    };
    let preset = ModelPreset {
        name: "linear".into(),
        slow_fast,
        observation,
        closed_form: Some(closed_form),
    };
    preset.validate()?;
    Ok(preset)
}
