//! JSON schema for models. Unknown keys are rejected at every level.

use serde::{Deserialize, Serialize};

use super::{
    ClosedForm, Field, Intensity, LipschitzBounds, ModelPreset, ObservationModel, SlowFastModel,
};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::noise::LevyMeasureSpec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LipschitzConfig {
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClosedFormConfig {
    pub invariant_mean: Vec<f64>,
    pub invariant_variance: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ou_sigma: Option<f64>,
    pub bbar1: Vec<Expr>,
    pub abar: Vec<Expr>,
    pub hbar: Vec<Expr>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub n: usize,
    pub m: usize,
    pub l: usize,
    pub epsilon: f64,
    pub x0: Vec<f64>,
    pub z0: Vec<f64>,
    pub b1: Vec<Expr>,
    /// Row-major n x l.
    pub sigma1: Vec<Expr>,
    pub f1: Vec<Expr>,
    pub b2: Vec<Expr>,
    /// Row-major m x m.
    pub sigma2: Vec<Expr>,
    pub f2: Vec<Expr>,
    pub nu1: LevyMeasureSpec,
    pub nu2: LevyMeasureSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<LipschitzConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exact_ou_sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub closed_form: Option<ClosedFormConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogisticParams {
    pub c0: f64,
    pub c1: f64,
    pub a: f64,
}

/// `0.7` or `{"logistic": {"c0": 0.1, "c1": 0.9, "a": 1.0}}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum IntensityConfig {
    Constant(f64),
    Logistic { logistic: LogisticParams },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationConfig {
    pub d: usize,
    pub h: Vec<Expr>,
    /// Declared sup-norm bound of h; absent means unbounded.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_bound: Option<f64>,
    pub f3: Vec<Expr>,
    pub g3: Vec<Expr>,
    pub lambda: IntensityConfig,
    pub lambda_lower: f64,
    pub u3_radius: f64,
    pub nu3_small: LevyMeasureSpec,
    pub nu3_large: LevyMeasureSpec,
}

/// The `model` and `observation` sections of a run config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PresetConfig {
    pub model: ModelConfig,
    pub observation: ObservationConfig,
}

fn exprs_of(field: &Field, key: &str) -> Result<Vec<Expr>> {
    field
        .exprs()
        .map(<[Expr]>::to_vec)
        .ok_or_else(|| Error::config(key, "native callbacks cannot be serialized"))
}

impl ModelPreset {
    pub fn to_config(&self) -> Result<PresetConfig> {
        let sf = &self.slow_fast;
        let ob = &self.observation;
        let closed_form = match &self.closed_form {
            Some(cf) => Some(ClosedFormConfig {
                invariant_mean: cf.invariant_mean.clone(),
                invariant_variance: cf.invariant_variance.clone(),
                ou_sigma: cf.ou_sigma,
                bbar1: exprs_of(&cf.bbar1, "model.closed_form.bbar1")?,
                abar: exprs_of(&cf.abar, "model.closed_form.abar")?,
                hbar: exprs_of(&cf.hbar, "model.closed_form.hbar")?,
            }),
            None => None,
        };
        let model = ModelConfig {
            name: Some(self.name.clone()),
            n: sf.n,
            m: sf.m,
            l: sf.l,
            epsilon: sf.epsilon,
            x0: sf.x0.clone(),
            z0: sf.z0.clone(),
            b1: exprs_of(&sf.b1, "model.b1")?,
            sigma1: exprs_of(&sf.sigma1, "model.sigma1")?,
            f1: exprs_of(&sf.f1, "model.f1")?,
            b2: exprs_of(&sf.b2, "model.b2")?,
            sigma2: exprs_of(&sf.sigma2, "model.sigma2")?,
            f2: exprs_of(&sf.f2, "model.f2")?,
            nu1: sf.nu1.clone(),
            nu2: sf.nu2.clone(),
            bounds: sf.bounds.map(|b| LipschitzConfig {
                l1: b.l1,
                l2: b.l2,
                l3: b.l3,
            }),
            exact_ou_sigma: sf.exact_ou_sigma,
            closed_form,
        };
        let lambda = match &ob.lambda {
            Intensity::Constant(c) => IntensityConfig::Constant(*c),
            Intensity::Logistic { c0, c1, a } => IntensityConfig::Logistic {
                logistic: LogisticParams {
                    c0: *c0,
                    c1: *c1,
                    a: *a,
                },
            },
            Intensity::Native(_) => {
                return Err(Error::config(
                    "observation.lambda",
                    "native callbacks cannot be serialized",
                ))
            }
        };
        let observation = ObservationConfig {
            d: ob.d,
            h: exprs_of(&ob.h, "observation.h")?,
            h_bound: ob.h_bound.is_finite().then_some(ob.h_bound),
            f3: exprs_of(&ob.f3, "observation.f3")?,
            g3: exprs_of(&ob.g3, "observation.g3")?,
            lambda,
            lambda_lower: ob.lambda_lower,
            u3_radius: ob.u3_radius,
            nu3_small: ob.nu3_small.clone(),
            nu3_large: ob.nu3_large.clone(),
        };
        Ok(PresetConfig { model, observation })
    }
}

impl PresetConfig {
    pub fn build(&self) -> Result<ModelPreset> {
        let mc = &self.model;
        let oc = &self.observation;
        let slow_fast = SlowFastModel {
            n: mc.n,
            m: mc.m,
            l: mc.l,
            epsilon: mc.epsilon,
            x0: mc.x0.clone(),
            z0: mc.z0.clone(),
            b1: Field::Expr(mc.b1.clone()),
            sigma1: Field::Expr(mc.sigma1.clone()),
            f1: Field::Expr(mc.f1.clone()),
            b2: Field::Expr(mc.b2.clone()),
            sigma2: Field::Expr(mc.sigma2.clone()),
            f2: Field::Expr(mc.f2.clone()),
            nu1: mc.nu1.clone(),
            nu2: mc.nu2.clone(),
            bounds: mc.bounds.map(|b| LipschitzBounds {
                l1: b.l1,
                l2: b.l2,
                l3: b.l3,
            }),
            exact_ou_sigma: mc.exact_ou_sigma,
        };
        slow_fast
            .validate()
            .map_err(|e| Error::config("model", e.to_string()))?;
        let lambda = match oc.lambda {
            IntensityConfig::Constant(c) => Intensity::Constant(c),
            IntensityConfig::Logistic { logistic: p } => Intensity::Logistic {
                c0: p.c0,
                c1: p.c1,
                a: p.a,
            },
        };
        let observation = ObservationModel {
            d: oc.d,
            h: Field::Expr(oc.h.clone()),
            h_bound: oc.h_bound.unwrap_or(f64::INFINITY),
            f3: Field::Expr(oc.f3.clone()),
            g3: Field::Expr(oc.g3.clone()),
            lambda,
            lambda_lower: oc.lambda_lower,
            u3_radius: oc.u3_radius,
            nu3_small: oc.nu3_small.clone(),
            nu3_large: oc.nu3_large.clone(),
        };
        observation
            .validate(mc.n, mc.m)
            .map_err(|e| Error::config("observation", e.to_string()))?;
        let closed_form = mc.closed_form.as_ref().map(|cf| ClosedForm {
            invariant_mean: cf.invariant_mean.clone(),
            invariant_variance: cf.invariant_variance.clone(),
            ou_sigma: cf.ou_sigma,
            bbar1: Field::Expr(cf.bbar1.clone()),
            abar: Field::Expr(cf.abar.clone()),
            hbar: Field::Expr(cf.hbar.clone()),
        });
        let preset = ModelPreset {
            name: mc.name.clone().unwrap_or_else(|| "custom".into()),
            slow_fast,
            observation,
            closed_form,
        };
        preset
            .validate()
            .map_err(|e| Error::config("model.closed_form", e.to_string()))?;
        Ok(preset)
    }
}
