//! Run configuration: the model (a preset name or inline sections) plus the
//! numerical parameters of a run. Unknown keys are rejected everywhere.

use serde::{Deserialize, Serialize};

use levyfilter::averaging::AveragingParams;
use levyfilter::filter::{parse_psi_list, Psi};
use levyfilter::models::{ModelConfig, ModelPreset, ObservationConfig, PresetConfig};
use levyfilter::sde::FastMode;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observation: Option<ObservationConfig>,
    #[serde(default)]
    pub run: RunParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunParams {
    pub seed: u64,
    pub horizon: f64,
    pub dt: f64,
    /// Defaults to exact OU sampling when the model declares it possible.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fast_mode: Option<FastMode>,
    /// Overrides the model's epsilon for `simulate` and `filter`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    pub epsilons: Vec<f64>,
    pub particles: usize,
    pub replications: usize,
    pub psi: Vec<String>,
    pub ess_fraction: f64,
    pub martingale_runs: usize,
    /// Filter with the homogenized dynamics instead of the full model.
    pub homogenized: bool,
    pub averaging: AveragingParams,
    /// Frozen slow state for `average`; defaults to the model's x0.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x: Option<Vec<f64>>,
    pub validation_samples: usize,
}

impl Default for RunParams {
    fn default() -> Self {
        Self {
            seed: 0,
            horizon: 1.0,
            dt: 0.01,
            fast_mode: None,
            epsilon: None,
            epsilons: vec![0.5, 0.1, 0.02],
            particles: 1000,
            replications: 20,
            psi: vec!["tanh".into()],
            ess_fraction: 0.5,
            martingale_runs: 200,
            homogenized: false,
            averaging: AveragingParams::default(),
            x: None,
            validation_samples: 10_000,
        }
    }
}

impl RunConfig {
    /// Parses JSON, reporting the path of the offending key on failure.
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            CliError::Config {
                key: path,
                message: e.into_inner().to_string(),
            }
        })
    }

    pub fn preset(&self) -> Result<ModelPreset, CliError> {
        match (&self.preset, &self.model, &self.observation) {
            (Some(_), Some(_), _) | (Some(_), _, Some(_)) => Err(CliError::config(
                "preset",
                "give either a preset name or inline model/observation sections, not both",
            )),
            (Some(name), None, None) => Ok(ModelPreset::builtin(name)?),
            (None, Some(model), Some(observation)) => Ok(PresetConfig {
                model: model.clone(),
                observation: observation.clone(),
            }
            .build()?),
            (None, Some(_), None) => Err(CliError::config("observation", "missing observation section")),
            (None, None, Some(_)) => Err(CliError::config("model", "missing model section")),
            (None, None, None) => Err(CliError::config("preset", "no model given (use --preset or --config)")),
        }
    }

    pub fn psis(&self) -> Result<Vec<Psi>, CliError> {
        let list = self
            .run
            .psi
            .iter()
            .map(|p| parse_psi_list(p))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CliError::config("run.psi", e.to_string()))?;
        let out: Vec<Psi> = list.into_iter().flatten().collect();
        if out.is_empty() {
            return Err(CliError::config("run.psi", "at least one test function is required"));
        }
        Ok(out)
    }

    pub fn fast_mode(&self, preset: &ModelPreset) -> FastMode {
        self.run.fast_mode.unwrap_or(if preset.slow_fast.exact_ou_sigma.is_some() {
            FastMode::ExactOu
        } else {
            FastMode::Euler
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_run_key_is_named() {
        let err = RunConfig::from_json(r#"{"preset": "example6", "run": {"horizn": 1.0}}"#).unwrap_err();
        match err {
            CliError::Config { key, message } => {
                assert_eq!(key, "run.horizn");
                assert!(message.contains("horizn"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn inline_model_round_trips_through_json() {
        let p = ModelPreset::builtin("example6").unwrap().to_config().unwrap();
        let cfg = RunConfig {
            preset: None,
            model: Some(p.model),
            observation: Some(p.observation),
            run: RunParams::default(),
        };
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let back = RunConfig::from_json(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.preset().unwrap().name, "example6");
    }

    #[test]
    fn preset_and_inline_model_conflict() {
        let p = ModelPreset::builtin("linear").unwrap().to_config().unwrap();
        let cfg = RunConfig {
            preset: Some("linear".into()),
            model: Some(p.model),
            observation: None,
            run: RunParams::default(),
        };
        assert!(matches!(cfg.preset(), Err(CliError::Config { .. })));
    }
}
