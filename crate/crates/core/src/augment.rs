//! Crop augmentation on 2D keypoints and the shared augmentation config.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pose::Pose2D;
use crate::rng::SplitMix64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    /// Multiplicative scale about the image center.
    pub crop_scale_range: [f64; 2],
    /// Maximum absolute offset per axis, normalized units.
    pub crop_offset_range: f64,
    /// Per-bone length multiplier.
    pub limb_scale_range: [f64; 2],
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            crop_scale_range: [0.7, 1.3],
            crop_offset_range: 0.15,
            limb_scale_range: [0.8, 1.2],
            seed: 0,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, [lo, hi]) in [
            ("crop_scale_range", self.crop_scale_range),
            ("limb_scale_range", self.limb_scale_range),
        ] {
            if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
                return Err(Error::InvalidParam(format!(
                    "{name} must satisfy 0 < lo <= hi, got [{lo}, {hi}]"
                )));
            }
        }
        if !(self.crop_offset_range >= 0.0 && self.crop_offset_range.is_finite()) {
            return Err(Error::InvalidParam(format!(
                "crop_offset_range must be >= 0, got {}",
                self.crop_offset_range
            )));
        }
        Ok(())
    }
}

/// The affine map `p' = s (p - c) + c + o` with `c = (0.5, 0.5)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CropTransform {
    pub scale: f64,
    pub offset: [f64; 2],
}

impl CropTransform {
    pub fn apply(&self, pose: &Pose2D) -> Pose2D {
        Pose2D {
            keypoints: pose
                .keypoints
                .iter()
                .map(|p| {
                    [
                        self.scale * (p[0] - 0.5) + 0.5 + self.offset[0],
                        self.scale * (p[1] - 0.5) + 0.5 + self.offset[1],
                    ]
                })
                .collect(),
        }
    }

    pub fn invert(&self, pose: &Pose2D) -> Pose2D {
        Pose2D {
            keypoints: pose
                .keypoints
                .iter()
                .map(|p| {
                    [
                        (p[0] - 0.5 - self.offset[0]) / self.scale + 0.5,
                        (p[1] - 0.5 - self.offset[1]) / self.scale + 0.5,
                    ]
                })
                .collect(),
        }
    }
}

/// Draws a scale and an offset and applies them; the returned transform
/// records both so the crop can be undone.
pub fn random_crop_transform(
    pose: &Pose2D,
    cfg: &AugmentConfig,
    rng: &mut SplitMix64,
) -> Result<(Pose2D, CropTransform)> {
    cfg.validate()?;
    let [lo, hi] = cfg.crop_scale_range;
    let scale = rng.range(lo, hi);
    let r = cfg.crop_offset_range;
    let offset = [rng.range(-r, r), rng.range(-r, r)];
    let t = CropTransform { scale, offset };
    Ok((t.apply(pose), t))
}
