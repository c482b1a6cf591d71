//! Analytic multi-channel skeleton images and their gradients.
//!
//! Each pixel of channel `c` stores `exp(-gamma * d2)` where `d2` is the
//! squared distance from the pixel center to the nearest limb segment
//! assigned to `c`. Distances are measured in normalized image coordinates
//! (x as a fraction of the width, y of the height), sampled at pixel centers
//! `((col + 0.5) / W, (row + 0.5) / H)`.
//!
//! Gradients use the envelope rule: the nearest segment and the clamped
//! foot parameter `t*` are held fixed, which is exact wherever the nearest
//! segment is unique. Ties go to the lowest edge index.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::pose::Pose2D;
use crate::topology::SkeletonTopology;

pub const DEFAULT_GAMMA: f64 = 250.0;
pub const DEFAULT_RESOLUTION: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderParams {
    /// Sharpness, in 1 / (normalized distance)^2.
    pub gamma: f64,
    pub width: usize,
    pub height: usize,
}

impl Default for RenderParams {
    fn default() -> Self {
        Self {
            gamma: DEFAULT_GAMMA,
            width: DEFAULT_RESOLUTION,
            height: DEFAULT_RESOLUTION,
        }
    }
}

impl RenderParams {
    pub fn new(gamma: f64, width: usize, height: usize) -> Result<Self> {
        let p = Self {
            gamma,
            width,
            height,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidParam(format!("gamma must be > 0, got {}", self.gamma)));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidParam(format!(
                "image size must be positive, got {}x{}",
                self.width, self.height
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn pixel_center(&self, row: usize, col: usize) -> [f64; 2] {
        [
            (col as f64 + 0.5) / self.width as f64,
            (row as f64 + 0.5) / self.height as f64,
        ]
    }
}

/// `C` planes of `W x H` intensities, planar and row-major within a plane.
#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonImage {
    pub layout: String,
    pub channels: usize,
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl SkeletonImage {
    pub fn zeros(layout: impl Into<String>, channels: usize, width: usize, height: usize) -> Self {
        Self {
            layout: layout.into(),
            channels,
            width,
            height,
            data: vec![0.0; channels * width * height],
        }
    }

    #[inline]
    pub fn index(&self, channel: usize, row: usize, col: usize) -> usize {
        (channel * self.height + row) * self.width + col
    }

    #[inline]
    pub fn get(&self, channel: usize, row: usize, col: usize) -> f64 {
        self.data[self.index(channel, row, col)]
    }

    pub fn plane(&self, channel: usize) -> &[f64] {
        let n = self.width * self.height;
        &self.data[channel * n..(channel + 1) * n]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Per-pixel maximum over channels, as a one-channel image.
    pub fn max_over_channels(&self) -> SkeletonImage {
        let n = self.width * self.height;
        let mut out = SkeletonImage::zeros(self.layout.clone(), 1, self.width, self.height);
        for (i, v) in out.data.iter_mut().enumerate() {
            *v = (0..self.channels).map(|c| self.data[c * n + i]).fold(0.0, f64::max);
        }
        out
    }

    fn check_shape(&self, channels: usize, params: &RenderParams) -> Result<()> {
        if self.channels != channels || self.width != params.width || self.height != params.height
        {
            return Err(Error::InvalidParam(format!(
                "image is {}x{}x{}, expected {}x{}x{}",
                self.channels, self.width, self.height, channels, params.width, params.height
            )));
        }
        if self.data.len() != channels * params.width * params.height {
            return Err(Error::SizeMismatch {
                what: "image data",
                expected: channels * params.width * params.height,
                found: self.data.len(),
            });
        }
        Ok(())
    }
}

/// Per-keypoint `(dL/dx, dL/dy)` in normalized coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderGradient {
    pub keypoints: Vec<[f64; 2]>,
}

impl RenderGradient {
    pub fn zeros(n: usize) -> Self {
        Self {
            keypoints: vec![[0.0; 2]; n],
        }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.keypoints.iter().flat_map(|g| g.iter().copied()).collect()
    }

    fn add(&mut self, other: &[[f64; 2]]) {
        for (a, b) in self.keypoints.iter_mut().zip(other) {
            a[0] += b[0];
            a[1] += b[1];
        }
    }
}

/// Squared distance from `u` to segment `[a, b]` and the clamped foot
/// parameter. A zero-length segment is treated as the point `a` with `t = 0`.
#[inline]
pub fn point_segment_sq_distance(u: [f64; 2], a: [f64; 2], b: [f64; 2]) -> (f64, f64) {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let au = [u[0] - a[0], u[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if len2 > 0.0 {
        ((au[0] * ab[0] + au[1] * ab[1]) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let dx = au[0] - t * ab[0];
    let dy = au[1] - t * ab[1];
    (dx * dx + dy * dy, t)
}

/// A limb segment prepared for the per-pixel loops.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Segment {
    pub i: usize,
    pub j: usize,
    pub a: [f64; 2],
    pub b: [f64; 2],
}

/// Nearest segment of one channel at one pixel.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Nearest {
    pub d2: f64,
    pub t: f64,
    /// Position in the channel's segment list.
    pub slot: usize,
}

#[inline]
pub(crate) fn nearest(u: [f64; 2], segments: &[Segment]) -> Option<Nearest> {
    let mut best: Option<Nearest> = None;
    for (slot, s) in segments.iter().enumerate() {
        let (d2, t) = point_segment_sq_distance(u, s.a, s.b);
        // strict comparison keeps the lowest edge index on ties
        if best.is_none_or(|b| d2 < b.d2) {
            best = Some(Nearest { d2, t, slot });
        }
    }
    best
}

/// Validated render setup: segments grouped by channel.
pub(crate) struct Scene {
    pub channels: Vec<Vec<Segment>>,
    pub keypoints: usize,
}

impl Scene {
    pub fn new(
        pose: &Pose2D,
        topo: &SkeletonTopology,
        layout: &str,
        params: &RenderParams,
    ) -> Result<Self> {
        params.validate()?;
        pose.check_matches(topo)?;
        let assign = topo.layout(layout)?;
        if assign.len() != topo.edges.len() {
            return Err(Error::SizeMismatch {
                what: "layout channel entries",
                expected: topo.edges.len(),
                found: assign.len(),
            });
        }
        if let Some(k) = pose
            .keypoints
            .iter()
            .position(|p| !p[0].is_finite() || !p[1].is_finite())
        {
            return Err(Error::NonFinite(format!("keypoint {k}")));
        }
        let n_channels = topo.channel_count(layout)?;
        let mut channels = vec![Vec::new(); n_channels];
        for (edge, (&(i, j), &c)) in topo.edges.iter().zip(assign).enumerate() {
            if i >= pose.len() || j >= pose.len() {
                return Err(Error::InvalidParam(format!("edge {edge} out of range")));
            }
            channels[c].push(Segment {
                i,
                j,
                a: pose.keypoints[i],
                b: pose.keypoints[j],
            });
        }
        Ok(Self {
            channels,
            keypoints: pose.len(),
        })
    }
}

/// Renders `pose` into a `C x W x H` skeleton image.
pub fn render(
    pose: &Pose2D,
    topo: &SkeletonTopology,
    layout: &str,
    params: &RenderParams,
) -> Result<SkeletonImage> {
    let scene = Scene::new(pose, topo, layout, params)?;
    let (w, h) = (params.width, params.height);
    let mut img = SkeletonImage::zeros(layout, scene.channels.len(), w, h);
    img.data
        .par_chunks_mut(w)
        .enumerate()
        .for_each(|(chunk, row_out)| {
            let (c, row) = (chunk / h, chunk % h);
            let segments = &scene.channels[c];
            for (col, out) in row_out.iter_mut().enumerate() {
                *out = match nearest(params.pixel_center(row, col), segments) {
                    Some(n) => (-params.gamma * n.d2).exp(),
                    None => 0.0,
                };
            }
        });
    Ok(img)
}

/// Accumulates the envelope gradient of one row of one channel into `grad`,
/// with `weight(col, y)` giving dL/dy for the pixel.
#[inline]
fn accumulate_row<F>(
    params: &RenderParams,
    segments: &[Segment],
    row: usize,
    grad: &mut [[f64; 2]],
    mut weight: F,
) where
    F: FnMut(usize, f64) -> f64,
{
    for col in 0..params.width {
        let u = params.pixel_center(row, col);
        let Some(n) = nearest(u, segments) else {
            weight(col, 0.0);
            continue;
        };
        let y = (-params.gamma * n.d2).exp();
        let w = weight(col, y);
        if w == 0.0 || y == 0.0 {
            continue;
        }
        let s = &segments[n.slot];
        let q = [
            (1.0 - n.t) * s.a[0] + n.t * s.b[0],
            (1.0 - n.t) * s.a[1] + n.t * s.b[1],
        ];
        let k = 2.0 * params.gamma * y * w;
        let r = [(u[0] - q[0]) * k, (u[1] - q[1]) * k];
        grad[s.i][0] += (1.0 - n.t) * r[0];
        grad[s.i][1] += (1.0 - n.t) * r[1];
        grad[s.j][0] += n.t * r[0];
        grad[s.j][1] += n.t * r[1];
    }
}

/// Sums per-(channel,row) partial gradients in a fixed order, so the result
/// does not depend on the thread schedule.
fn reduce_rows<F>(scene: &Scene, params: &RenderParams, per_row: F) -> RenderGradient
where
    F: Fn(usize, usize, &mut [[f64; 2]]) + Sync,
{
    let h = params.height;
    let partials: Vec<Vec<[f64; 2]>> = (0..scene.channels.len() * h)
        .into_par_iter()
        .map(|chunk| {
            let mut g = vec![[0.0; 2]; scene.keypoints];
            per_row(chunk / h, chunk % h, &mut g);
            g
        })
        .collect();
    let mut grad = RenderGradient::zeros(scene.keypoints);
    for p in &partials {
        grad.add(p);
    }
    grad
}

/// Pulls a per-pixel upstream gradient `dL/dy` (same shape as the rendered
/// image) back onto the keypoints.
pub fn render_backward(
    pose: &Pose2D,
    topo: &SkeletonTopology,
    layout: &str,
    params: &RenderParams,
    upstream: &SkeletonImage,
) -> Result<RenderGradient> {
    let scene = Scene::new(pose, topo, layout, params)?;
    upstream.check_shape(scene.channels.len(), params)?;
    Ok(reduce_rows(&scene, params, |c, row, g| {
        let base = upstream.index(c, row, 0);
        let up = &upstream.data[base..base + params.width];
        accumulate_row(params, &scene.channels[c], row, g, |col, _| up[col]);
    }))
}

/// Mean squared difference between `render(pose)` and `target` over all
/// `C * W * H` entries, and its exact gradient.
pub fn render_loss_and_grad(
    pose: &Pose2D,
    target: &SkeletonImage,
    topo: &SkeletonTopology,
    layout: &str,
    params: &RenderParams,
) -> Result<(f64, RenderGradient)> {
    let scene = Scene::new(pose, topo, layout, params)?;
    target.check_shape(scene.channels.len(), params)?;
    let count = target.data.len() as f64;
    let h = params.height;
    let w = params.width;

    // one pass per (channel, row): squared-error sum and gradient partial,
    // both reduced in a fixed order afterwards
    let partials: Vec<(f64, Vec<[f64; 2]>)> = (0..scene.channels.len() * h)
        .into_par_iter()
        .map(|chunk| {
            let (c, row) = (chunk / h, chunk % h);
            let tgt = &target.data[chunk * w..(chunk + 1) * w];
            let mut sum = 0.0;
            let mut g = vec![[0.0; 2]; scene.keypoints];
            accumulate_row(params, &scene.channels[c], row, &mut g, |col, y| {
                let r = y - tgt[col];
                sum += r * r;
                2.0 * r / count
            });
            (sum, g)
        })
        .collect();
    let mut loss = 0.0;
    let mut grad = RenderGradient::zeros(scene.keypoints);
    for (sum, g) in &partials {
        loss += sum;
        grad.add(g);
    }
    let loss = loss / count;
    Ok((loss, grad))
}
