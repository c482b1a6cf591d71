//! Forward kinematics over the topology's parent tree, plus 3D limb-length
//! randomization.

use nalgebra::{Matrix3, Vector3};

use crate::augment::AugmentConfig;
use crate::error::{Error, Result};
use crate::pose::{Pose3D, Rotation6D};
use crate::rng::SplitMix64;
use crate::rotation::{matrix_to_rot6d, rot6d_to_matrix};
use crate::topology::{SkeletonTopology, HUMAN_JOINTS};

/// Per-joint offsets from the parent joint, in the parent's frame at rest
/// (meters, camera convention: X right, Y down, Z away from the viewer).
/// The root's entry is ignored.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RestPose {
    pub offsets: Vec<[f64; 3]>,
}

impl RestPose {
    /// A standing A-pose for [`default_human_topology`](crate::topology::default_human_topology),
    /// facing the camera (the subject's right side is at negative X).
    pub fn canonical_human(topo: &SkeletonTopology) -> Result<Self> {
        let table: [(&str, [f64; 3]); 17] = [
            ("pelvis", [0.0, 0.0, 0.0]),
            ("right_hip", [-0.12, 0.05, 0.0]),
            ("right_knee", [0.0, 0.44, 0.0]),
            ("right_ankle", [0.0, 0.42, 0.0]),
            ("left_hip", [0.12, 0.05, 0.0]),
            ("left_knee", [0.0, 0.44, 0.0]),
            ("left_ankle", [0.0, 0.42, 0.0]),
            ("spine", [0.0, -0.23, 0.0]),
            ("thorax", [0.0, -0.25, 0.0]),
            ("neck", [0.0, -0.10, 0.0]),
            ("head", [0.0, -0.14, 0.0]),
            ("left_shoulder", [0.17, 0.02, 0.0]),
            ("left_elbow", [0.12, 0.25, 0.0]),
            ("left_wrist", [0.10, 0.23, 0.0]),
            ("right_shoulder", [-0.17, 0.02, 0.0]),
            ("right_elbow", [-0.12, 0.25, 0.0]),
            ("right_wrist", [-0.10, 0.23, 0.0]),
        ];
        debug_assert!(table.iter().zip(HUMAN_JOINTS).all(|(a, b)| a.0 == b));
        let mut offsets = Vec::with_capacity(topo.joint_count());
        for name in &topo.joints {
            let entry = table.iter().find(|(n, _)| n == name).ok_or_else(|| {
                Error::InvalidParam(format!("no canonical rest offset for joint {name:?}"))
            })?;
            offsets.push(entry.1);
        }
        Ok(Self { offsets })
    }

    /// Bone lengths `|offset|` per joint (0 for the root).
    pub fn bone_lengths(&self, topo: &SkeletonTopology) -> Vec<f64> {
        self.offsets
            .iter()
            .zip(&topo.parents)
            .map(|(o, p)| if p.is_some() { Vector3::from(*o).norm() } else { 0.0 })
            .collect()
    }
}

/// Places `root_position`, then walks the tree: each joint sits at its
/// parent's position plus the parent's global rotation applied to its rest
/// offset. Local rotations compose down the tree; the output orientations
/// are the accumulated globals.
pub fn forward_kinematics(
    topo: &SkeletonTopology,
    rest: &RestPose,
    rotations: &[Rotation6D],
    root_position: [f64; 3],
) -> Result<Pose3D> {
    let n = topo.joint_count();
    if rest.offsets.len() != n {
        return Err(Error::SizeMismatch {
            what: "rest offsets",
            expected: n,
            found: rest.offsets.len(),
        });
    }
    if rotations.len() != n {
        return Err(Error::SizeMismatch {
            what: "joint rotations",
            expected: n,
            found: rotations.len(),
        });
    }
    let locals = rotations
        .iter()
        .map(rot6d_to_matrix)
        .collect::<Result<Vec<_>>>()?;
    let order = topo.topological_order()?;
    let mut globals = vec![Matrix3::identity(); n];
    let mut positions = vec![Vector3::zeros(); n];
    for &k in &order {
        match topo.parents[k] {
            None => {
                globals[k] = locals[k];
                positions[k] = Vector3::from(root_position);
            }
            Some(p) => {
                globals[k] = globals[p] * locals[k];
                positions[k] = positions[p] + globals[p] * Vector3::from(rest.offsets[k]);
            }
        }
    }
    let orientations = globals
        .iter()
        .map(matrix_to_rot6d)
        .collect::<Result<Vec<_>>>()?;
    Pose3D::new(positions.iter().map(|v| [v.x, v.y, v.z]).collect(), orientations)
}

/// One length multiplier per joint (1 for the root). Mirrored bones, paired
/// through the flip map, share the sample drawn for the lower joint index.
pub fn sample_limb_scales(
    topo: &SkeletonTopology,
    range: [f64; 2],
    rng: &mut SplitMix64,
) -> Vec<f64> {
    let n = topo.joint_count();
    let mut scales = vec![1.0; n];
    for k in 0..n {
        if topo.parents[k].is_none() {
            continue;
        }
        let mirror = topo.flip_map.get(k).copied().unwrap_or(k);
        scales[k] = if mirror < k && topo.parents[mirror].is_some() {
            scales[mirror]
        } else {
            rng.range(range[0], range[1])
        };
    }
    scales
}

/// Scales every bone by a random factor from `cfg.limb_scale_range`,
/// keeping bone directions and the root position. Descendants move rigidly
/// with their parent; orientations are unchanged.
pub fn randomize_limb_lengths(
    pose: &Pose3D,
    topo: &SkeletonTopology,
    cfg: &AugmentConfig,
    rng: &mut SplitMix64,
) -> Result<Pose3D> {
    cfg.validate()?;
    pose.check_matches(topo)?;
    let order = topo.topological_order()?;
    let scales = sample_limb_scales(topo, cfg.limb_scale_range, rng);
    let mut out = pose.positions.clone();
    for &k in &order {
        if let Some(p) = topo.parents[k] {
            let s = scales[k];
            let old = pose.positions[k];
            let par = pose.positions[p];
            out[k] = [
                out[p][0] + s * (old[0] - par[0]),
                out[p][1] + s * (old[1] - par[1]),
                out[p][2] + s * (old[2] - par[2]),
            ];
        }
    }
    Pose3D::new(out, pose.orientations.clone())
}

/// Bone vectors `position[k] - position[parent(k)]` (zero for the root).
pub fn bone_vectors(pose: &Pose3D, topo: &SkeletonTopology) -> Vec<[f64; 3]> {
    topo.parents
        .iter()
        .enumerate()
        .map(|(k, p)| match p {
            Some(p) => {
                let (a, b) = (pose.positions[k], pose.positions[*p]);
                [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
            }
            None => [0.0; 3],
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rotation::axis_angle;
    use crate::topology::default_human_topology;

    fn identity_rotations(n: usize) -> Vec<Rotation6D> {
        vec![Rotation6D::IDENTITY; n]
    }

    fn random_rotations(n: usize, rng: &mut SplitMix64) -> Vec<Rotation6D> {
        (0..n)
            .map(|_| {
                let m = axis_angle(rng.unit_vector3(), rng.range(-3.0, 3.0));
                matrix_to_rot6d(&m).unwrap()
            })
            .collect()
    }

    #[test]
    fn identity_rotations_translate_rest_pose() {
        let t = default_human_topology();
        let rest = RestPose::canonical_human(&t).unwrap();
        let root = [0.3, -0.1, 3.0];
        let pose = forward_kinematics(&t, &rest, &identity_rotations(17), root).unwrap();
        // accumulate offsets along parent chains
        for k in 0..17 {
            let mut expect = root;
            let mut j = k;
            while let Some(p) = t.parents[j] {
                for a in 0..3 {
                    expect[a] += rest.offsets[j][a];
                }
                j = p;
            }
            for a in 0..3 {
                assert!((pose.positions[k][a] - expect[a]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn two_bone_chain_quarter_turn() {
        let mut t = SkeletonTopology {
            joints: vec!["a".into(), "b".into(), "c".into()],
            edges: vec![(0, 1), (1, 2)],
            parents: vec![None, Some(0), Some(1)],
            flip_map: vec![0, 1, 2],
            channel_layouts: Default::default(),
        };
        t.channel_layouts.insert("1ch".into(), vec![0, 0]);
        let rest = RestPose {
            offsets: vec![[0.0; 3], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]],
        };
        let mut rots = identity_rotations(3);
        rots[0] = matrix_to_rot6d(&axis_angle([0.0, 0.0, 1.0], std::f64::consts::FRAC_PI_2)).unwrap();
        let pose = forward_kinematics(&t, &rest, &rots, [1.0, 1.0, 5.0]).unwrap();
        // +x bones turn to +y
        let expect = [[1.0, 1.0, 5.0], [1.0, 2.0, 5.0], [1.0, 4.0, 5.0]];
        for k in 0..3 {
            for a in 0..3 {
                assert!((pose.positions[k][a] - expect[k][a]).abs() < 1e-15);
            }
        }
        // a second quarter turn at the middle joint bends the last bone to -x
        rots[1] = rots[0];
        let pose = forward_kinematics(&t, &rest, &rots, [0.0, 0.0, 5.0]).unwrap();
        assert!((pose.positions[2][0] + 2.0).abs() < 1e-15);
        assert!((pose.positions[2][1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn fk_preserves_bone_lengths() {
        let t = default_human_topology();
        let rest = RestPose::canonical_human(&t).unwrap();
        let lengths = rest.bone_lengths(&t);
        let mut rng = SplitMix64::new(11);
        for _ in 0..100 {
            let rots = random_rotations(17, &mut rng);
            let pose = forward_kinematics(&t, &rest, &rots, [0.0, 0.0, 3.0]).unwrap();
            for (k, b) in bone_vectors(&pose, &t).iter().enumerate() {
                let len = Vector3::from(*b).norm();
                assert!((len - lengths[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn fk_rejects_forest() {
        let mut t = default_human_topology();
        t.parents[7] = None;
        let rest = RestPose::canonical_human(&default_human_topology()).unwrap();
        assert!(matches!(
            forward_kinematics(&t, &rest, &identity_rotations(17), [0.0, 0.0, 3.0]),
            Err(Error::NotATree(_))
        ));
    }

    fn posed(seed: u64) -> (SkeletonTopology, Pose3D) {
        let t = default_human_topology();
        let rest = RestPose::canonical_human(&t).unwrap();
        let mut rng = SplitMix64::new(seed);
        let rots: Vec<Rotation6D> = (0..17)
            .map(|_| matrix_to_rot6d(&axis_angle(rng.unit_vector3(), rng.range(-0.5, 0.5))).unwrap())
            .collect();
        let pose = forward_kinematics(&t, &rest, &rots, [0.1, 0.0, 3.5]).unwrap();
        (t, pose)
    }

    #[test]
    fn unit_limb_range_is_identity() {
        let (t, pose) = posed(1);
        let cfg = AugmentConfig {
            limb_scale_range: [1.0, 1.0],
            ..Default::default()
        };
        let out = randomize_limb_lengths(&pose, &t, &cfg, &mut SplitMix64::new(5)).unwrap();
        for (a, b) in out.positions.iter().zip(&pose.positions) {
            for i in 0..3 {
                assert!((a[i] - b[i]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn half_range_halves_bones_and_keeps_directions() {
        let (t, pose) = posed(2);
        let cfg = AugmentConfig {
            limb_scale_range: [0.5, 0.5],
            ..Default::default()
        };
        let out = randomize_limb_lengths(&pose, &t, &cfg, &mut SplitMix64::new(5)).unwrap();
        assert_eq!(out.positions[0], pose.positions[0]);
        let before = bone_vectors(&pose, &t);
        let after = bone_vectors(&out, &t);
        for k in 1..17 {
            let (b, a) = (Vector3::from(before[k]), Vector3::from(after[k]));
            assert!((a.norm() - 0.5 * b.norm()).abs() < 1e-12);
            assert!((a.dot(&b) / (a.norm() * b.norm()) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn mirrored_bones_share_scale() {
        let t = default_human_topology();
        let rest = RestPose::canonical_human(&t).unwrap();
        let pose = forward_kinematics(&t, &rest, &identity_rotations(17), [0.0, 0.0, 3.0]).unwrap();
        let cfg = AugmentConfig::default();
        let (lk, rk) = (t.joint_index("left_knee").unwrap(), t.joint_index("right_knee").unwrap());
        for seed in 0..100 {
            let out = randomize_limb_lengths(&pose, &t, &cfg, &mut SplitMix64::new(seed)).unwrap();
            let b = bone_vectors(&out, &t);
            let (l, r) = (Vector3::from(b[lk]).norm(), Vector3::from(b[rk]).norm());
            assert!((l - r).abs() < 1e-12, "seed {seed}: {l} vs {r}");
        }
    }

    #[test]
    fn limb_randomization_is_seeded() {
        let (t, pose) = posed(3);
        let cfg = AugmentConfig::default();
        let a = randomize_limb_lengths(&pose, &t, &cfg, &mut SplitMix64::new(9)).unwrap();
        let b = randomize_limb_lengths(&pose, &t, &cfg, &mut SplitMix64::new(9)).unwrap();
        assert_eq!(a, b);
    }
}
