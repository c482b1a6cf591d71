//! 2D and 3D poses, the 6D rotation container and the JSON-lines pose file
//! format.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::topology::SkeletonTopology;

/// Tolerance for the non-degeneracy checks on [`Rotation6D`].
pub const ROT6D_EPS: f64 = 1e-9;

/// Keypoints in normalized image coordinates: x is a fraction of the image
/// width, y a fraction of the height, origin at the top-left corner.
#[derive(Debug, Clone, PartialEq)]
pub struct Pose2D {
    pub keypoints: Vec<[f64; 2]>,
}

impl Pose2D {
    pub fn new(keypoints: Vec<[f64; 2]>) -> Result<Self> {
        if let Some(k) = keypoints.iter().position(|p| !p.iter().all(|v| v.is_finite())) {
            return Err(Error::NonFinite(format!("keypoint {k}")));
        }
        Ok(Self { keypoints })
    }

    pub fn len(&self) -> usize {
        self.keypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keypoints.is_empty()
    }

    pub fn check_matches(&self, topo: &SkeletonTopology) -> Result<()> {
        check_count("pose keypoints", topo.joint_count(), self.len())
    }

    /// Flattened `[x0, y0, x1, y1, ...]`.
    pub fn to_flat(&self) -> Vec<f64> {
        self.keypoints.iter().flat_map(|p| p.iter().copied()).collect()
    }

    pub fn from_flat(flat: &[f64]) -> Self {
        Self {
            keypoints: flat.chunks_exact(2).map(|c| [c[0], c[1]]).collect(),
        }
    }
}

/// Camera-space joint positions (meters, Z forward, Y down) and per-joint
/// global orientations.
#[derive(Debug, Clone, PartialEq)]
pub struct Pose3D {
    pub positions: Vec<[f64; 3]>,
    pub orientations: Vec<Rotation6D>,
}

impl Pose3D {
    pub fn new(positions: Vec<[f64; 3]>, orientations: Vec<Rotation6D>) -> Result<Self> {
        check_count("pose orientations", positions.len(), orientations.len())?;
        if let Some(k) = positions.iter().position(|p| !p.iter().all(|v| v.is_finite())) {
            return Err(Error::NonFinite(format!("position {k}")));
        }
        Ok(Self {
            positions,
            orientations,
        })
    }

    /// Positions with identity orientations.
    pub fn from_positions(positions: Vec<[f64; 3]>) -> Result<Self> {
        let n = positions.len();
        Self::new(positions, vec![Rotation6D::IDENTITY; n])
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn check_matches(&self, topo: &SkeletonTopology) -> Result<()> {
        check_count("pose positions", topo.joint_count(), self.positions.len())?;
        check_count("pose orientations", topo.joint_count(), self.orientations.len())
    }
}

/// First two columns `(a1, a2)` of a rotation matrix, stored as
/// `[a1x, a1y, a1z, a2x, a2y, a2z]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation6D([f64; 6]);

impl Rotation6D {
    pub const IDENTITY: Rotation6D = Rotation6D([1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);

    /// Rejects vectors that Gram-Schmidt cannot orthonormalize: a zero first
    /// column or a second column parallel to it.
    pub fn new(values: [f64; 6]) -> Result<Self> {
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("6D rotation".into()));
        }
        let a1 = [values[0], values[1], values[2]];
        let a2 = [values[3], values[4], values[5]];
        let n1 = norm3(a1);
        let n2 = norm3(a2);
        if n1 < ROT6D_EPS {
            return Err(Error::DegenerateRotation("first column has zero length"));
        }
        if n2 < ROT6D_EPS || norm3(cross3(a1, a2)) < ROT6D_EPS * n1 * n2 {
            return Err(Error::DegenerateRotation("second column parallel to the first"));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> [f64; 6] {
        self.0
    }

    pub fn first(&self) -> [f64; 3] {
        [self.0[0], self.0[1], self.0[2]]
    }

    pub fn second(&self) -> [f64; 3] {
        [self.0[3], self.0[4], self.0[5]]
    }
}

pub(crate) fn norm3(a: [f64; 3]) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

pub(crate) fn cross3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn check_count(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::SizeMismatch {
            what,
            expected,
            found,
        })
    }
}

/// Swaps left/right labels: keypoint `k` takes the coordinates of
/// `flip_map[k]`. Coordinates are not mirrored.
pub fn flip_pose(pose: &Pose2D, topo: &SkeletonTopology) -> Result<Pose2D> {
    pose.check_matches(topo)?;
    check_count("flip map", pose.len(), topo.flip_map.len())?;
    Ok(Pose2D {
        keypoints: topo.flip_map.iter().map(|&f| pose.keypoints[f]).collect(),
    })
}

/// One line of a pose file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseRecord {
    pub frame: u64,
    #[serde(default)]
    pub activity: Option<String>,
    pub kp2d: Vec<[f64; 2]>,
    #[serde(default)]
    pub pos3d: Option<Vec<[f64; 3]>>,
    #[serde(default)]
    pub rot6d: Option<Vec<[f64; 6]>>,
}

impl PoseRecord {
    pub fn new(frame: u64, pose2d: &Pose2D) -> Self {
        Self {
            frame,
            activity: None,
            kp2d: pose2d.keypoints.clone(),
            pos3d: None,
            rot6d: None,
        }
    }

    pub fn with_3d(mut self, pose3d: &Pose3D) -> Self {
        self.pos3d = Some(pose3d.positions.clone());
        self.rot6d = Some(pose3d.orientations.iter().map(Rotation6D::values).collect());
        self
    }

    pub fn pose2d(&self) -> Result<Pose2D> {
        Pose2D::new(self.kp2d.clone())
    }

    /// The 3D pose, if the record carries positions. Missing orientations
    /// default to identity.
    pub fn pose3d(&self) -> Result<Option<Pose3D>> {
        let Some(pos) = &self.pos3d else {
            return Ok(None);
        };
        match &self.rot6d {
            None => Pose3D::from_positions(pos.clone()).map(Some),
            Some(rot) => {
                let rot = rot
                    .iter()
                    .map(|r| Rotation6D::new(*r))
                    .collect::<Result<Vec<_>>>()?;
                Pose3D::new(pos.clone(), rot).map(Some)
            }
        }
    }
}

pub fn write_pose_records<W: Write>(mut out: W, records: &[PoseRecord]) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn pose_records_to_string(records: &[PoseRecord]) -> String {
    let mut buf = Vec::new();
    write_pose_records(&mut buf, records).expect("writing to memory");
    String::from_utf8(buf).expect("json is utf-8")
}

pub fn parse_pose_records<R: BufRead>(input: R, source: &str) -> Result<Vec<PoseRecord>> {
    let mut out = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::io(source, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: PoseRecord = serde_json::from_str(&line)
            .map_err(|e| Error::json(format!("{source}:{}", n + 1), e))?;
        out.push(rec);
    }
    Ok(out)
}

pub fn read_pose_file(path: impl AsRef<Path>) -> Result<Vec<PoseRecord>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_pose_records(std::io::BufReader::new(file), &path.display().to_string())
}

pub fn write_pose_file(path: impl AsRef<Path>, records: &[PoseRecord]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, pose_records_to_string(records)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::default_human_topology;
    use proptest::prelude::*;

    fn sample_pose(n: usize) -> Pose2D {
        Pose2D::new((0..n).map(|k| [0.1 + 0.03 * k as f64, 0.9 - 0.05 * k as f64]).collect())
            .unwrap()
    }

    #[test]
    fn flip_swaps_wrists() {
        let t = default_human_topology();
        let mut p = sample_pose(17);
        let lw = t.joint_index("left_wrist").unwrap();
        let rw = t.joint_index("right_wrist").unwrap();
        p.keypoints[lw] = [0.2, 0.5];
        p.keypoints[rw] = [0.8, 0.5];
        let f = flip_pose(&p, &t).unwrap();
        assert_eq!(f.keypoints[lw], [0.8, 0.5]);
        assert_eq!(f.keypoints[rw], [0.2, 0.5]);
        assert_eq!(flip_pose(&f, &t).unwrap(), p);
    }

    #[test]
    fn symmetric_labels_are_fixed_point() {
        let t = default_human_topology();
        // every left/right pair shares its coordinates
        let kp: Vec<[f64; 2]> = (0..17)
            .map(|k| {
                let m = k.min(t.flip_map[k]) as f64;
                [0.1 + 0.04 * m, 0.2 + 0.03 * m]
            })
            .collect();
        let p = Pose2D::new(kp).unwrap();
        assert_eq!(flip_pose(&p, &t).unwrap(), p);
    }

    #[test]
    fn flip_size_mismatch() {
        let t = default_human_topology();
        assert!(matches!(
            flip_pose(&sample_pose(5), &t),
            Err(Error::SizeMismatch { .. })
        ));
    }

    #[test]
    fn rot6d_construction() {
        assert!(Rotation6D::new([1.0, 0.0, 0.0, 0.0, 1.0, 0.0]).is_ok());
        assert!(Rotation6D::new([0.0; 6]).is_err());
        assert!(Rotation6D::new([1.0, 0.0, 0.0, 2.0, 0.0, 0.0]).is_err());
        assert!(Rotation6D::new([1.0, 0.0, 0.0, f64::NAN, 1.0, 0.0]).is_err());
        assert!(Pose2D::new(vec![[f64::INFINITY, 0.0]]).is_err());
    }

    #[test]
    fn record_defaults_and_unknown_keys() {
        let r = parse_pose_records(r#"{"frame": 3, "kp2d": [[0.5, 0.5]]}"#.as_bytes(), "x")
            .unwrap();
        assert_eq!(r[0].frame, 3);
        assert!(r[0].pos3d.is_none());
        let bad = parse_pose_records(r#"{"frame": 3, "kp2d": [], "bogus": 1}"#.as_bytes(), "x");
        assert!(bad.is_err());
    }

    #[test]
    fn record_with_3d_round_trip() {
        let p3 = Pose3D::from_positions(vec![[0.1, -0.2, 3.0], [0.0, 0.0, 2.5]]).unwrap();
        let p2 = Pose2D::new(vec![[0.5, 0.4], [0.5, 0.5]]).unwrap();
        let rec = PoseRecord::new(7, &p2).with_3d(&p3);
        let text = pose_records_to_string(&[rec.clone()]);
        let back = parse_pose_records(text.as_bytes(), "x").unwrap();
        assert_eq!(back[0], rec);
        assert_eq!(back[0].pose3d().unwrap().unwrap(), p3);
        assert!(text.starts_with(r#"{"frame":7,"activity":null,"kp2d":"#));
    }

    proptest! {
        #[test]
        fn flip_preserves_coordinate_multiset(
            kp in proptest::collection::vec((-1.0f64..2.0, -1.0f64..2.0), 17)
        ) {
            let t = default_human_topology();
            let p = Pose2D::new(kp.iter().map(|&(x, y)| [x, y]).collect()).unwrap();
            let f = flip_pose(&p, &t).unwrap();
            let key = |v: &[f64; 2]| (v[0].to_bits(), v[1].to_bits());
            let mut a: Vec<_> = p.keypoints.iter().map(key).collect();
            let mut b: Vec<_> = f.keypoints.iter().map(key).collect();
            a.sort();
            b.sort();
            prop_assert_eq!(a, b);
            prop_assert_eq!(flip_pose(&f, &t).unwrap(), p);
        }

        #[test]
        fn pose_records_are_byte_stable(
            kp in proptest::collection::vec((-1.0f64..2.0, -1.0f64..2.0), 1..20),
            frame in 0u64..1_000_000,
        ) {
            let p = Pose2D::new(kp.iter().map(|&(x, y)| [x, y]).collect()).unwrap();
            let mut rec = PoseRecord::new(frame, &p);
            rec.activity = Some("walking".into());
            let text = pose_records_to_string(&[rec.clone()]);
            let back = parse_pose_records(text.as_bytes(), "x").unwrap();
            prop_assert_eq!(&back[0], &rec);
            prop_assert_eq!(pose_records_to_string(&back), text);
        }
    }
}
