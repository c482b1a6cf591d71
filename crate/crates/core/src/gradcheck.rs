//! Finite-difference checks of every analytic gradient in the crate: the
//! renderer, the camera Jacobian and the supervised pose loss.

use std::fmt;

use serde::Serialize;

use crate::camera::PerspectiveCamera;
use crate::error::Result;
use crate::fit::{supervised_pose_loss, LossWeights};
use crate::pose::{Pose2D, Pose3D, Rotation6D};
use crate::render::{
    point_segment_sq_distance, render, render_backward, RenderParams, SkeletonImage,
};
use crate::rng::SplitMix64;
use crate::topology::{default_human_topology, SkeletonTopology};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradcheckConfig {
    /// Probes per (resolution, layout) pair for the renderer, and per
    /// component for the others.
    pub samples: usize,
    pub seed: u64,
    /// Central-difference step.
    pub h: f64,
    pub threshold: f64,
    /// Fraction of checked coordinates that must fall under `threshold`.
    pub min_pass_fraction: f64,
    /// Pixels whose two nearest limbs (with distinct foot points) differ by
    /// less than this in squared distance are skipped.
    pub tie_gap: f64,
    /// Denominator floor of the relative error.
    pub floor: f64,
    pub resolutions: Vec<usize>,
    pub layouts: Vec<String>,
    /// Negative control: perturbs the analytic render gradient.
    pub inject_fault: bool,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            samples: 200,
            seed: 0,
            h: 1e-5,
            threshold: 1e-3,
            min_pass_fraction: 0.99,
            tie_gap: 1e-4,
            floor: 1e-6,
            resolutions: vec![16, 128],
            layouts: vec!["1ch".into(), "3ch".into(), "5ch".into()],
            inject_fault: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComponentReport {
    pub name: String,
    pub probes: usize,
    pub excluded: usize,
    pub coordinates: usize,
    pub under_threshold: usize,
    pub max_rel_err: f64,
}

impl ComponentReport {
    pub fn new(name: &str) -> Self {
        Self {
            name: name.into(),
            probes: 0,
            excluded: 0,
            coordinates: 0,
            under_threshold: 0,
            max_rel_err: 0.0,
        }
    }

    fn record(&mut self, err: f64, threshold: f64) {
        self.coordinates += 1;
        if err < threshold {
            self.under_threshold += 1;
        }
        self.max_rel_err = self.max_rel_err.max(err);
    }

    pub fn pass_fraction(&self) -> f64 {
        if self.coordinates == 0 {
            return 0.0;
        }
        self.under_threshold as f64 / self.coordinates as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradcheckReport {
    pub threshold: f64,
    pub min_pass_fraction: f64,
    pub components: Vec<ComponentReport>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.components
            .iter()
            .all(|c| c.coordinates > 0 && c.pass_fraction() >= self.min_pass_fraction)
    }
}

impl fmt::Display for GradcheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<12} {:>7} {:>9} {:>11} {:>10} {:>12}",
            "component", "probes", "excluded", "coordinates", "pass", "max_rel_err"
        )?;
        for c in &self.components {
            writeln!(
                f,
                "{:<12} {:>7} {:>9} {:>11} {:>9.2}% {:>12.3e}",
                c.name,
                c.probes,
                c.excluded,
                c.coordinates,
                100.0 * c.pass_fraction(),
                c.max_rel_err
            )?;
        }
        write!(
            f,
            "{} (threshold {:e}, required pass fraction {})",
            if self.passed() { "PASS" } else { "FAIL" },
            self.threshold,
            self.min_pass_fraction
        )
    }
}

pub fn rel_err(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Nearest and second-nearest squared distances among the limbs of one
/// channel, skipping runner-ups that share the nearest foot point (limbs
/// meeting at a joint).
fn tie_gap(u: [f64; 2], pose: &Pose2D, topo: &SkeletonTopology, edges: &[usize]) -> f64 {
    let feet: Vec<(f64, [f64; 2])> = edges
        .iter()
        .map(|&e| {
            let (i, j) = topo.edges[e];
            let (a, b) = (pose.keypoints[i], pose.keypoints[j]);
            let (d2, t) = point_segment_sq_distance(u, a, b);
            (d2, [(1.0 - t) * a[0] + t * b[0], (1.0 - t) * a[1] + t * b[1]])
        })
        .collect();
    let Some(best) = feet.iter().min_by(|a, b| a.0.total_cmp(&b.0)) else {
        return f64::INFINITY;
    };
    feet.iter()
        .filter(|(_, q)| (q[0] - best.1[0]).abs() + (q[1] - best.1[1]).abs() > 1e-9)
        .map(|(d2, _)| d2 - best.0)
        .fold(f64::INFINITY, f64::min)
}

fn random_pose(n: usize, rng: &mut SplitMix64) -> Pose2D {
    Pose2D {
        keypoints: (0..n)
            .map(|_| [rng.range(0.15, 0.85), rng.range(0.15, 0.85)])
            .collect(),
    }
}

/// Checks `render_backward` with a one-hot upstream against central
/// differences of `render` at random pixels near the skeleton.
pub fn check_render(
    cfg: &GradcheckConfig,
    topo: &SkeletonTopology,
    report: &mut ComponentReport,
) -> Result<()> {
    let mut rng = SplitMix64::new(cfg.seed);
    for &res in &cfg.resolutions {
        let params = RenderParams::new(250.0, res, res)?;
        for layout in &cfg.layouts {
            let assign = topo.layout(layout)?.to_vec();
            let channels = topo.channel_count(layout)?;
            for _ in 0..cfg.samples {
                report.probes += 1;
                let pose = random_pose(topo.joint_count(), &mut rng);
                // a pixel within ~0.08 of a random limb
                let e = (rng.next_u64() % topo.edges.len() as u64) as usize;
                let (i, j) = topo.edges[e];
                let t = rng.uniform();
                let (a, b) = (pose.keypoints[i], pose.keypoints[j]);
                let x = (1.0 - t) * a[0] + t * b[0] + rng.range(-0.08, 0.08);
                let y = (1.0 - t) * a[1] + t * b[1] + rng.range(-0.08, 0.08);
                let col = ((x * res as f64) as usize).min(res - 1);
                let row = ((y * res as f64) as usize).min(res - 1);
                let c = assign[e];
                let u = params.pixel_center(row, col);
                let edges: Vec<usize> = (0..topo.edges.len()).filter(|&k| assign[k] == c).collect();
                if tie_gap(u, &pose, topo, &edges) < cfg.tie_gap {
                    report.excluded += 1;
                    continue;
                }

                let mut upstream = SkeletonImage::zeros(layout.as_str(), channels, res, res);
                let idx = upstream.index(c, row, col);
                upstream.data[idx] = 1.0;
                let mut grad = render_backward(&pose, topo, layout, &params, &upstream)?;
                if cfg.inject_fault {
                    for g in grad.keypoints.iter_mut() {
                        g[0] = g[0] * 1.01 + 1e-3;
                    }
                }
                let mut involved = vec![i, j];
                involved.extend(edges.iter().flat_map(|&k| [topo.edges[k].0, topo.edges[k].1]));
                involved.sort_unstable();
                involved.dedup();
                for k in involved {
                    for axis in 0..2 {
                        let mut plus = pose.clone();
                        let mut minus = pose.clone();
                        plus.keypoints[k][axis] += cfg.h;
                        minus.keypoints[k][axis] -= cfg.h;
                        let fp = render(&plus, topo, layout, &params)?.data[idx];
                        let fm = render(&minus, topo, layout, &params)?.data[idx];
                        let numeric = (fp - fm) / (2.0 * cfg.h);
                        let err = rel_err(grad.keypoints[k][axis], numeric, cfg.floor);
                        report.record(err, cfg.threshold);
                    }
                }
            }
        }
    }
    Ok(())
}

/// Checks the camera Jacobian at random points in front of the camera.
pub fn check_projection(cfg: &GradcheckConfig, report: &mut ComponentReport) -> Result<()> {
    let mut rng = SplitMix64::stream(cfg.seed, 1);
    let cam = PerspectiveCamera::default();
    for _ in 0..cfg.samples {
        report.probes += 1;
        let z = rng.range(1.0, 6.0);
        let p = [rng.range(-1.0, 1.0), rng.range(-1.0, 1.0), z];
        let jac = cam.project_jacobian(p);
        for axis in 0..3 {
            // step relative to depth keeps the quotient well conditioned
            let h = cfg.h * z;
            let mut plus = p;
            let mut minus = p;
            plus[axis] += h;
            minus[axis] -= h;
            let (fp, fm) = (cam.project_point(plus), cam.project_point(minus));
            for out in 0..2 {
                let numeric = (fp[out] - fm[out]) / (2.0 * h);
                report.record(rel_err(jac[out][axis], numeric, cfg.floor), cfg.threshold);
            }
        }
    }
    Ok(())
}

/// Checks the supervised pose loss gradient on random pose pairs.
pub fn check_supervised(cfg: &GradcheckConfig, report: &mut ComponentReport) -> Result<()> {
    let mut rng = SplitMix64::stream(cfg.seed, 2);
    let weights = LossWeights::default();
    let n = 17;
    let random_pose3d = |rng: &mut SplitMix64| -> Result<Pose3D> {
        let positions = (0..n).map(|_| [rng.gaussian(), rng.gaussian(), rng.gaussian()]).collect();
        let orientations = (0..n)
            .map(|_| {
                let v = [0.0; 6].map(|_| rng.gaussian());
                Rotation6D::new(v).unwrap_or(Rotation6D::IDENTITY)
            })
            .collect();
        Pose3D::new(positions, orientations)
    };
    for _ in 0..cfg.samples {
        report.probes += 1;
        let pred = random_pose3d(&mut rng)?;
        let gt = random_pose3d(&mut rng)?;
        let (_, grad) = supervised_pose_loss(&pred, &gt, &weights)?;
        let k = (rng.next_u64() % n as u64) as usize;
        let loss_at = |p: &Pose3D| supervised_pose_loss(p, &gt, &weights).map(|r| r.0);
        for axis in 0..3 {
            let mut plus = pred.clone();
            let mut minus = pred.clone();
            plus.positions[k][axis] += cfg.h;
            minus.positions[k][axis] -= cfg.h;
            let numeric = (loss_at(&plus)? - loss_at(&minus)?) / (2.0 * cfg.h);
            report.record(rel_err(grad.positions[k][axis], numeric, cfg.floor), cfg.threshold);
        }
        for axis in 0..6 {
            let shifted = |d: f64| -> Result<Pose3D> {
                let mut p = pred.clone();
                let mut v = p.orientations[k].values();
                v[axis] += d;
                p.orientations[k] = Rotation6D::new(v)?;
                Ok(p)
            };
            let numeric =
                (loss_at(&shifted(cfg.h)?)? - loss_at(&shifted(-cfg.h)?)?) / (2.0 * cfg.h);
            report.record(rel_err(grad.orientations[k][axis], numeric, cfg.floor), cfg.threshold);
        }
    }
    Ok(())
}

/// Runs all three components on the default human topology.
pub fn run(cfg: &GradcheckConfig) -> Result<GradcheckReport> {
    let topo = default_human_topology();
    let mut render_report = ComponentReport::new("render");
    check_render(cfg, &topo, &mut render_report)?;
    let mut projection = ComponentReport::new("projection");
    check_projection(cfg, &mut projection)?;
    let mut supervised = ComponentReport::new("supervised");
    check_supervised(cfg, &mut supervised)?;
    Ok(GradcheckReport {
        threshold: cfg.threshold,
        min_pass_fraction: cfg.min_pass_fraction,
        components: vec![render_report, projection, supervised],
    })
}
