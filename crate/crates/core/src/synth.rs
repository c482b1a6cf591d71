//! Seeded procedural datasets: random joint rotations and limb lengths, FK,
//! framing inside the image, projection, and optional rendered targets.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::AugmentConfig;
use crate::camera::{project, PerspectiveCamera};
use crate::error::{Error, Result};
use crate::kinematics::{forward_kinematics, sample_limb_scales, RestPose};
use crate::pose::{write_pose_records, Pose2D, Pose3D, PoseRecord};
use crate::render::{render, RenderParams, SkeletonImage};
use crate::rng::SplitMix64;
use crate::rotation::{axis_angle, matrix_to_rot6d};
use crate::skim::encode_skim;
use crate::topology::SkeletonTopology;

/// Keypoints of every sample project inside `[MARGIN, 1 - MARGIN]^2`.
pub const MARGIN: f64 = 0.05;
const FRAMING_TRIES: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub seed: u64,
    pub count: usize,
    /// JSON file holding a [`RestPose`]; the built-in human A-pose if unset.
    pub rest_pose: Option<String>,
    /// Maximum axis-angle rotation per limb joint, degrees.
    pub limb_limit_deg: f64,
    /// Maximum axis-angle rotation for joints listed in `spine_joints`.
    pub spine_limit_deg: f64,
    pub spine_joints: Vec<String>,
    /// Extra rotation of the root about the vertical axis, uniform in
    /// `[-root_yaw_deg, root_yaw_deg]`.
    pub root_yaw_deg: f64,
    /// Root depth in meters.
    pub depth_range: [f64; 2],
    pub augment: AugmentConfig,
    pub camera: PerspectiveCamera,
    pub render: RenderParams,
    pub layout: String,
    pub emit_targets: bool,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            count: 100,
            rest_pose: None,
            limb_limit_deg: 60.0,
            spine_limit_deg: 20.0,
            spine_joints: ["pelvis", "spine", "thorax", "neck"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            root_yaw_deg: 30.0,
            depth_range: [2.5, 4.5],
            augment: AugmentConfig::default(),
            camera: PerspectiveCamera::default(),
            render: RenderParams::default(),
            layout: "5ch".into(),
            emit_targets: true,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::InvalidParam("count must be >= 1".into()));
        }
        for (name, v) in [
            ("limb_limit_deg", self.limb_limit_deg),
            ("spine_limit_deg", self.spine_limit_deg),
            ("root_yaw_deg", self.root_yaw_deg),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidParam(format!("{name} must be >= 0, got {v}")));
            }
        }
        let [lo, hi] = self.depth_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::InvalidParam(format!(
                "depth_range must satisfy 0 < lo <= hi, got [{lo}, {hi}]"
            )));
        }
        self.augment.validate()?;
        self.camera.validate()?;
        self.render.validate()
    }

    pub fn rest(&self, topo: &SkeletonTopology) -> Result<RestPose> {
        match &self.rest_pose {
            None => RestPose::canonical_human(topo),
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                serde_json::from_str(&text).map_err(|e| Error::json(path.clone(), e))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub index: usize,
    pub pose3d: Pose3D,
    pub pose2d: Pose2D,
    pub target: Option<SkeletonImage>,
}

impl Sample {
    pub fn record(&self) -> PoseRecord {
        PoseRecord::new(self.index as u64, &self.pose2d).with_3d(&self.pose3d)
    }
}

fn in_frame(p: &Pose2D) -> bool {
    p.keypoints
        .iter()
        .all(|k| k.iter().all(|v| (MARGIN..=1.0 - MARGIN).contains(v)))
}

/// One sample from its own stream `SplitMix64::stream(seed, index)`.
pub fn generate_sample(
    cfg: &GeneratorConfig,
    topo: &SkeletonTopology,
    rest: &RestPose,
    index: usize,
) -> Result<Sample> {
    let mut rng = SplitMix64::stream(cfg.seed, index as u64);
    let n = topo.joint_count();

    let mut rotations = Vec::with_capacity(n);
    for k in 0..n {
        let spine = cfg.spine_joints.iter().any(|j| *j == topo.joints[k]);
        let limit = if spine { cfg.spine_limit_deg } else { cfg.limb_limit_deg };
        let axis = rng.unit_vector3();
        let mut m = axis_angle(axis, rng.range(0.0, limit).to_radians());
        if topo.parents[k].is_none() {
            let yaw = rng.range(-cfg.root_yaw_deg, cfg.root_yaw_deg).to_radians();
            m = axis_angle([0.0, 1.0, 0.0], yaw) * m;
        }
        rotations.push(matrix_to_rot6d(&m)?);
    }

    let scales = sample_limb_scales(topo, cfg.augment.limb_scale_range, &mut rng);
    let scaled = RestPose {
        offsets: rest
            .offsets
            .iter()
            .zip(&scales)
            .map(|(o, s)| [o[0] * s, o[1] * s, o[2] * s])
            .collect(),
    };
    let relative = forward_kinematics(topo, &scaled, &rotations, [0.0; 3])?;

    // center the bounding box on the optical axis
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in &relative.positions {
        for a in 0..2 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    let center = [-(lo[0] + hi[0]) / 2.0, -(lo[1] + hi[1]) / 2.0];
    let place = |depth: f64| -> Result<(Pose3D, Pose2D)> {
        let positions = relative
            .positions
            .iter()
            .map(|p| [p[0] + center[0], p[1] + center[1], p[2] + depth])
            .collect();
        let p3 = Pose3D::new(positions, relative.orientations.clone())?;
        let p2 = project(&p3, &cfg.camera)?;
        Ok((p3, p2))
    };

    let mut framed = None;
    for _ in 0..FRAMING_TRIES {
        let depth = rng.range(cfg.depth_range[0], cfg.depth_range[1]);
        if let Ok((p3, p2)) = place(depth) {
            if in_frame(&p2) {
                framed = Some((p3, p2));
                break;
            }
        }
    }
    if framed.is_none() {
        // push the subject back until it fits
        let mut depth = cfg.depth_range[1];
        for _ in 0..100 {
            if let Ok((p3, p2)) = place(depth) {
                if in_frame(&p2) {
                    framed = Some((p3, p2));
                    break;
                }
            }
            depth *= 1.25;
        }
    }
    let (pose3d, pose2d) = framed.ok_or(Error::Framing { index })?;

    let target = if cfg.emit_targets {
        Some(render(&pose2d, topo, &cfg.layout, &cfg.render)?)
    } else {
        None
    };
    Ok(Sample {
        index,
        pose3d,
        pose2d,
        target,
    })
}

/// Generates `cfg.count` samples in parallel; the output does not depend on
/// the thread count.
pub fn generate(cfg: &GeneratorConfig, topo: &SkeletonTopology) -> Result<Vec<Sample>> {
    cfg.validate()?;
    topo.ensure_valid()?;
    topo.topological_order()?;
    if cfg.emit_targets {
        topo.layout(&cfg.layout)?;
    }
    let rest = cfg.rest(topo)?;
    if rest.offsets.len() != topo.joint_count() {
        return Err(Error::SizeMismatch {
            what: "rest offsets",
            expected: topo.joint_count(),
            found: rest.offsets.len(),
        });
    }
    (0..cfg.count)
        .into_par_iter()
        .map(|i| generate_sample(cfg, topo, &rest, i))
        .collect()
}

/// Writes `poses.jsonl`, `targets/NNNNNN.skim` (when targets were rendered)
/// and `manifest.json` into `dir`.
pub fn write_dataset(dir: impl AsRef<Path>, cfg: &GeneratorConfig, samples: &[Sample]) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let records: Vec<PoseRecord> = samples.iter().map(Sample::record).collect();
    let mut buf = Vec::new();
    write_pose_records(&mut buf, &records).expect("writing to memory");
    let poses = dir.join("poses.jsonl");
    std::fs::write(&poses, buf).map_err(|e| Error::io(&poses, e))?;

    if samples.iter().any(|s| s.target.is_some()) {
        let tdir = dir.join("targets");
        std::fs::create_dir_all(&tdir).map_err(|e| Error::io(&tdir, e))?;
        for s in samples {
            if let Some(t) = &s.target {
                let path = tdir.join(format!("{:06}.skim", s.index));
                std::fs::write(&path, encode_skim(t)).map_err(|e| Error::io(&path, e))?;
            }
        }
    }

    let manifest = serde_json::json!({
        "seed": cfg.seed,
        "count": cfg.count,
        "config": cfg,
    });
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::default_human_topology;

    #[test]
    fn zero_limits_give_rest_pose() {
        let t = default_human_topology();
        let cfg = GeneratorConfig {
            count: 5,
            limb_limit_deg: 0.0,
            spine_limit_deg: 0.0,
            root_yaw_deg: 0.0,
            augment: AugmentConfig {
                limb_scale_range: [1.0, 1.0],
                ..Default::default()
            },
            emit_targets: false,
            ..Default::default()
        };
        let rest = cfg.rest(&t).unwrap();
        let samples = generate(&cfg, &t).unwrap();
        let mut depths = Vec::new();
        for s in &samples {
            let b = crate::kinematics::bone_vectors(&s.pose3d, &t);
            for k in 1..17 {
                for a in 0..3 {
                    assert!((b[k][a] - rest.offsets[k][a]).abs() < 1e-12);
                }
            }
            depths.push(s.pose3d.positions[0][2]);
        }
        depths.dedup();
        assert!(depths.len() > 1);
    }

    #[test]
    fn deterministic_and_framed() {
        let t = default_human_topology();
        let cfg = GeneratorConfig {
            count: 40,
            seed: 3,
            ..Default::default()
        };
        let a = generate(&cfg, &t).unwrap();
        let b = generate(&cfg, &t).unwrap();
        assert_eq!(a, b);
        for s in &a {
            assert!(in_frame(&s.pose2d));
            assert_eq!(s.pose2d, project(&s.pose3d, &cfg.camera).unwrap());
            let img = render(&s.pose2d, &t, "5ch", &cfg.render).unwrap();
            assert_eq!(s.target.as_ref().unwrap(), &img);
        }
    }

    #[test]
    fn fallback_pushes_back() {
        let t = default_human_topology();
        let cfg = GeneratorConfig {
            count: 3,
            depth_range: [0.3, 0.4],
            emit_targets: false,
            ..Default::default()
        };
        let samples = generate(&cfg, &t).unwrap();
        for s in &samples {
            assert!(in_frame(&s.pose2d));
            assert!(s.pose3d.positions[0][2] > 0.4);
        }
    }

    #[test]
    fn config_validation() {
        let t = default_human_topology();
        let bad = GeneratorConfig {
            count: 0,
            ..Default::default()
        };
        assert!(generate(&bad, &t).is_err());
        let bad = GeneratorConfig {
            depth_range: [3.0, 2.0],
            ..Default::default()
        };
        assert!(generate(&bad, &t).is_err());
    }
}
