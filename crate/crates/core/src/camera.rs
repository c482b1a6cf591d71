//! Pinhole projection with the principal point at the image center.
//!
//! `x = 0.5 + f X / Z`, `y = 0.5 + f (W / H) Y / Z`, with
//! `f = 0.5 / tan(fov / 2)`: x is normalized by the width, y by the height,
//! and pixels are square.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pose::{Pose2D, Pose3D};

/// Smallest depth accepted by [`project`].
pub const MIN_DEPTH: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerspectiveCamera {
    /// Horizontal field of view in degrees.
    pub fov_deg: f64,
    pub width: usize,
    pub height: usize,
}

impl Default for PerspectiveCamera {
    fn default() -> Self {
        Self {
            fov_deg: 62.0,
            width: 128,
            height: 128,
        }
    }
}

impl PerspectiveCamera {
    pub fn new(fov_deg: f64, width: usize, height: usize) -> Result<Self> {
        let c = Self {
            fov_deg,
            width,
            height,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fov_deg > 0.0 && self.fov_deg < 180.0) {
            return Err(Error::InvalidParam(format!(
                "fov_deg must be in (0, 180), got {}",
                self.fov_deg
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidParam("camera size must be positive".into()));
        }
        Ok(())
    }

    /// Focal length in units of the image width.
    pub fn focal(&self) -> f64 {
        0.5 / (self.fov_deg.to_radians() * 0.5).tan()
    }

    fn focal_xy(&self) -> (f64, f64) {
        let f = self.focal();
        (f, f * self.width as f64 / self.height as f64)
    }

    pub fn project_point(&self, p: [f64; 3]) -> [f64; 2] {
        let (fx, fy) = self.focal_xy();
        [0.5 + fx * p[0] / p[2], 0.5 + fy * p[1] / p[2]]
    }

    /// Rows `d(x, y) / d(X, Y, Z)`.
    pub fn project_jacobian(&self, p: [f64; 3]) -> [[f64; 3]; 2] {
        let (fx, fy) = self.focal_xy();
        let iz = 1.0 / p[2];
        [
            [fx * iz, 0.0, -fx * p[0] * iz * iz],
            [0.0, fy * iz, -fy * p[1] * iz * iz],
        ]
    }

    /// Moves `dL/d(x, y)` back to `dL/d(X, Y, Z)`.
    pub fn pull_back(&self, p: [f64; 3], g: [f64; 2]) -> [f64; 3] {
        let j = self.project_jacobian(p);
        [
            j[0][0] * g[0] + j[1][0] * g[1],
            j[0][1] * g[0] + j[1][1] * g[1],
            j[0][2] * g[0] + j[1][2] * g[1],
        ]
    }
}

/// Projects every joint; fails on the first joint with `Z <= 1e-6`.
pub fn project(pose: &Pose3D, cam: &PerspectiveCamera) -> Result<Pose2D> {
    cam.validate()?;
    let mut out = Vec::with_capacity(pose.len());
    for (k, &p) in pose.positions.iter().enumerate() {
        if !(p[2] > MIN_DEPTH) {
            return Err(Error::BehindCamera { joint: k, z: p[2] });
        }
        out.push(cam.project_point(p));
    }
    Pose2D::new(out)
}
