//! The JSON run configuration shared by the command-line tools. Every key is
//! optional; unknown keys are rejected and parse errors name the offending
//! path.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::augment::AugmentConfig;
use crate::camera::PerspectiveCamera;
use crate::error::{Error, Result};
use crate::fit::{LossWeights, DEFAULT_TOL};
use crate::optim::AdamConfig;
use crate::render::RenderParams;
use crate::synth::GeneratorConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSettings {
    pub max_steps: usize,
    pub tol: f64,
    /// Weight of the bone-length prior in 3D fits; 0 disables it.
    pub bone_prior_weight: f64,
    /// Seed for `--init-noise`.
    pub seed: u64,
}

impl Default for FitSettings {
    fn default() -> Self {
        Self {
            max_steps: 2000,
            tol: DEFAULT_TOL,
            bone_prior_weight: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    pub render: RenderParams,
    pub camera: PerspectiveCamera,
    pub augment: AugmentConfig,
    /// Starting point for `adam`: "pretrain" (the fitting default) or "e2e".
    pub adam_preset: String,
    /// Field-wise overrides on top of the preset.
    pub adam: AdamOverrides,
    pub loss_weights: LossWeights,
    pub generator: GeneratorConfig,
    pub fit: FitSettings,
}

impl Default for CliConfig {
    fn default() -> Self {
        Self {
            render: RenderParams::default(),
            camera: PerspectiveCamera::default(),
            augment: AugmentConfig::default(),
            adam_preset: "pretrain".into(),
            adam: AdamOverrides::default(),
            loss_weights: LossWeights::default(),
            generator: GeneratorConfig::default(),
            fit: FitSettings::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamOverrides {
    pub lr: Option<f64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub epsilon: Option<f64>,
    pub clip_norm: Option<f64>,
    pub lr_decay: Option<f64>,
    pub steps_per_epoch: Option<u64>,
}

impl CliConfig {
    pub fn from_json(text: &str, source: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::InvalidParam(format!("{source}: at `{path}`: {}", e.into_inner()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, &path.display().to_string())
    }

    pub fn adam(&self) -> Result<AdamConfig> {
        let mut a = AdamConfig::preset(&self.adam_preset).ok_or_else(|| {
            Error::InvalidParam(format!(
                "unknown adam_preset {:?} (expected \"pretrain\" or \"e2e\")",
                self.adam_preset
            ))
        })?;
        let o = &self.adam;
        a.lr = o.lr.unwrap_or(a.lr);
        a.beta1 = o.beta1.unwrap_or(a.beta1);
        a.beta2 = o.beta2.unwrap_or(a.beta2);
        a.epsilon = o.epsilon.unwrap_or(a.epsilon);
        a.clip_norm = o.clip_norm.unwrap_or(a.clip_norm);
        a.lr_decay = o.lr_decay.unwrap_or(a.lr_decay);
        a.steps_per_epoch = o.steps_per_epoch.unwrap_or(a.steps_per_epoch);
        a.validate()?;
        Ok(a)
    }

    pub fn validate(&self) -> Result<()> {
        self.render.validate()?;
        self.camera.validate()?;
        self.augment.validate()?;
        self.adam()?;
        self.loss_weights.validate()?;
        if !(self.fit.tol >= 0.0) || !(self.fit.bone_prior_weight >= 0.0) {
            return Err(Error::InvalidParam(
                "fit.tol and fit.bone_prior_weight must be >= 0".into(),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_all_defaults() {
        let cfg = CliConfig::from_json("{}", "t").unwrap();
        assert_eq!(cfg, CliConfig::default());
        assert_eq!(cfg.adam().unwrap(), AdamConfig::pretrain());
        assert_eq!(cfg.loss_weights.w_rec_sk, 1000.0);
    }

    #[test]
    fn overrides_apply() {
        let cfg = CliConfig::from_json(
            r#"{"adam_preset": "e2e", "adam": {"lr": 0.001}, "render": {"gamma": 100}}"#,
            "t",
        )
        .unwrap();
        let a = cfg.adam().unwrap();
        assert_eq!((a.lr, a.beta1), (0.001, 0.5));
        assert_eq!(cfg.render.gamma, 100.0);
        assert_eq!(cfg.render.width, 128);
    }

    #[test]
    fn unknown_key_names_its_path() {
        let err = CliConfig::from_json(r#"{"render": {"gama": 1}}"#, "cfg.json").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("render.gama"), "{msg}");
        assert!(msg.contains("cfg.json"), "{msg}");
        let err = CliConfig::from_json(r#"{"generator": {"depth_range": [1, "x"]}}"#, "c")
            .unwrap_err()
            .to_string();
        assert!(err.contains("generator.depth_range[1]"), "{err}");
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(CliConfig::from_json(r#"{"adam_preset": "sgd"}"#, "t").is_err());
        assert!(CliConfig::from_json(r#"{"adam": {"beta1": 1.5}}"#, "t").is_err());
        assert!(CliConfig::from_json(r#"{"render": {"gamma": -1}}"#, "t").is_err());
    }
}
