//! Analysis-by-synthesis pose fitting: render a candidate pose, compare it to
//! the target skeleton image, and follow the analytic gradient with Adam.

use serde::{Deserialize, Serialize};

use crate::camera::{project, PerspectiveCamera};
use crate::error::{Error, Result};
use crate::optim::{adam_step, AdamConfig, AdamState};
use crate::pose::{Pose2D, Pose3D, PoseRecord};
use crate::render::{render_loss_and_grad, RenderParams, SkeletonImage};
use crate::topology::SkeletonTopology;

/// Loss-term weights of the training recipe.
///
/// Only `w_rec_sk`, `w_rec_sk_proj`, `w_pos` and `w_orient` are consumed
/// here; the synthetic-supervision and adversarial weights are carried so a
/// config file can hold the complete table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub w_sk: f64,
    pub w_pos_2d: f64,
    pub w_pos_3d: f64,
    pub w_orient_3d: f64,
    pub w_rec_sk: f64,
    pub w_rec_sk_proj: f64,
    pub w_pos: f64,
    pub w_orient: f64,
    pub w_disc_sk: f64,
    pub w_perc_img: f64,
    pub w_disc_img: f64,
    pub w_disc_img_fm: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            w_sk: 100.0,
            w_pos_2d: 100.0,
            w_pos_3d: 100.0,
            w_orient_3d: 10.0,
            w_rec_sk: 1000.0,
            w_rec_sk_proj: 1000.0,
            w_pos: 10.0,
            w_orient: 1.0,
            w_disc_sk: 10.0,
            w_perc_img: 10.0,
            w_disc_img: 1.0,
            w_disc_img_fm: 10.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.w_sk,
            self.w_pos_2d,
            self.w_pos_3d,
            self.w_orient_3d,
            self.w_rec_sk,
            self.w_rec_sk_proj,
            self.w_pos,
            self.w_orient,
            self.w_disc_sk,
            self.w_perc_img,
            self.w_disc_img,
            self.w_disc_img_fm,
        ];
        if all.iter().all(|w| *w >= 0.0 && w.is_finite()) {
            Ok(())
        } else {
            Err(Error::InvalidParam("loss weights must be finite and >= 0".into()))
        }
    }

    /// Every weight multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            w_sk: self.w_sk * factor,
            w_pos_2d: self.w_pos_2d * factor,
            w_pos_3d: self.w_pos_3d * factor,
            w_orient_3d: self.w_orient_3d * factor,
            w_rec_sk: self.w_rec_sk * factor,
            w_rec_sk_proj: self.w_rec_sk_proj * factor,
            w_pos: self.w_pos * factor,
            w_orient: self.w_orient * factor,
            w_disc_sk: self.w_disc_sk * factor,
            w_perc_img: self.w_perc_img * factor,
            w_disc_img: self.w_disc_img * factor,
            w_disc_img_fm: self.w_disc_img_fm * factor,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitMode {
    Fit2d,
    Fit3d,
}

impl FitMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            FitMode::Fit2d => "fit2d",
            FitMode::Fit3d => "fit3d",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FitInit {
    Pose2D(Pose2D),
    Pose3D(Pose3D),
}

/// Soft constraint pulling each bone toward a reference length:
/// `weight * mean_k (|bone_k| - length_k)^2` over non-root joints.
#[derive(Debug, Clone, PartialEq)]
pub struct BonePrior {
    /// Reference length per joint; the root's entry is ignored.
    pub lengths: Vec<f64>,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitProblem {
    pub mode: FitMode,
    pub target: SkeletonImage,
    pub topology: SkeletonTopology,
    pub layout: String,
    pub render: RenderParams,
    /// Used by `Fit3d` only.
    pub camera: PerspectiveCamera,
    pub init: FitInit,
    pub bone_prior: Option<BonePrior>,
    pub weights: LossWeights,
    pub max_steps: usize,
    /// Converged once the loss varies by less than this over 10 steps.
    pub tol: f64,
}

pub const DEFAULT_TOL: f64 = 1e-10;
pub const CONVERGENCE_WINDOW: usize = 10;

impl FitProblem {
    pub fn fit2d(
        target: SkeletonImage,
        topology: SkeletonTopology,
        render: RenderParams,
        init: Pose2D,
    ) -> Self {
        Self {
            mode: FitMode::Fit2d,
            layout: target.layout.clone(),
            target,
            topology,
            render,
            camera: PerspectiveCamera::default(),
            init: FitInit::Pose2D(init),
            bone_prior: None,
            weights: LossWeights::default(),
            max_steps: 2000,
            tol: DEFAULT_TOL,
        }
    }

    pub fn fit3d(
        target: SkeletonImage,
        topology: SkeletonTopology,
        render: RenderParams,
        camera: PerspectiveCamera,
        init: Pose3D,
    ) -> Self {
        Self {
            mode: FitMode::Fit3d,
            camera,
            init: FitInit::Pose3D(init),
            ..Self::fit2d(target, topology, render, Pose2D { keypoints: vec![] })
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.topology.ensure_valid()?;
        self.render.validate()?;
        self.weights.validate()?;
        let channels = self.topology.channel_count(&self.layout)?;
        if self.target.channels != channels
            || self.target.width != self.render.width
            || self.target.height != self.render.height
            || self.target.data.len() != channels * self.render.width * self.render.height
        {
            return Err(Error::InvalidParam(format!(
                "target is {}x{}x{}, layout {} at {}x{} needs {}x{}x{}",
                self.target.channels,
                self.target.width,
                self.target.height,
                self.layout,
                self.render.width,
                self.render.height,
                channels,
                self.render.width,
                self.render.height
            )));
        }
        match (&self.mode, &self.init) {
            (FitMode::Fit2d, FitInit::Pose2D(p)) => p.check_matches(&self.topology)?,
            (FitMode::Fit3d, FitInit::Pose3D(p)) => {
                self.camera.validate()?;
                p.check_matches(&self.topology)?;
                if let Some(prior) = &self.bone_prior {
                    if prior.lengths.len() != self.topology.joint_count() {
                        return Err(Error::SizeMismatch {
                            what: "bone prior lengths",
                            expected: self.topology.joint_count(),
                            found: prior.lengths.len(),
                        });
                    }
                    if !(prior.weight >= 0.0) {
                        return Err(Error::InvalidParam("bone prior weight must be >= 0".into()));
                    }
                }
            }
            (mode, _) => {
                return Err(Error::InvalidParam(format!(
                    "initial pose does not match mode {}",
                    mode.as_str()
                )))
            }
        }
        if !(self.tol >= 0.0) {
            return Err(Error::InvalidParam("tol must be >= 0".into()));
        }
        Ok(())
    }

    fn initial_params(&self) -> Vec<f64> {
        match &self.init {
            FitInit::Pose2D(p) => p.to_flat(),
            FitInit::Pose3D(p) => p.positions.iter().flat_map(|v| v.iter().copied()).collect(),
        }
    }

    /// Loss and gradient at a flat parameter vector: `[x, y]` per joint for
    /// `Fit2d`, `[X, Y, Z]` per joint for `Fit3d`.
    pub fn objective(&self, params: &[f64]) -> Result<(f64, Vec<f64>)> {
        match self.mode {
            FitMode::Fit2d => {
                let pose = Pose2D::from_flat(params);
                let (mse, g) = render_loss_and_grad(
                    &pose,
                    &self.target,
                    &self.topology,
                    &self.layout,
                    &self.render,
                )?;
                let w = self.weights.w_rec_sk;
                Ok((w * mse, g.to_flat().iter().map(|v| w * v).collect()))
            }
            FitMode::Fit3d => self.objective3d(params),
        }
    }

    fn objective3d(&self, params: &[f64]) -> Result<(f64, Vec<f64>)> {
        let positions: Vec<[f64; 3]> = params.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
        let pose3d = Pose3D::from_positions(positions.clone())?;
        let pose2d = project(&pose3d, &self.camera)?;
        let (mse, g2) = render_loss_and_grad(
            &pose2d,
            &self.target,
            &self.topology,
            &self.layout,
            &self.render,
        )?;
        let w = self.weights.w_rec_sk_proj;
        let mut loss = w * mse;
        let mut grad = vec![0.0; params.len()];
        for (k, (&p, g)) in positions.iter().zip(&g2.keypoints).enumerate() {
            let back = self.camera.pull_back(p, [w * g[0], w * g[1]]);
            grad[3 * k..3 * k + 3].copy_from_slice(&back);
        }
        if let Some(prior) = &self.bone_prior {
            let (l, g) = bone_prior_loss(&positions, &self.topology, prior);
            loss += l;
            for (a, b) in grad.iter_mut().zip(g.iter().flat_map(|v| v.iter())) {
                *a += b;
            }
        }
        Ok((loss, grad))
    }

    fn pose_from_params(&self, params: &[f64]) -> Result<(Pose2D, Option<Pose3D>)> {
        match &self.init {
            FitInit::Pose2D(_) => Ok((Pose2D::new(Pose2D::from_flat(params).keypoints)?, None)),
            FitInit::Pose3D(init) => {
                let positions = params.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
                let p3 = Pose3D::new(positions, init.orientations.clone())?;
                let p2 = project(&p3, &self.camera)?;
                Ok((p2, Some(p3)))
            }
        }
    }
}

/// Bone-length penalty and its gradient per joint position.
pub fn bone_prior_loss(
    positions: &[[f64; 3]],
    topo: &SkeletonTopology,
    prior: &BonePrior,
) -> (f64, Vec<[f64; 3]>) {
    let bones: Vec<(usize, usize)> = topo
        .parents
        .iter()
        .enumerate()
        .filter_map(|(k, p)| p.map(|p| (k, p)))
        .collect();
    let mut grad = vec![[0.0; 3]; positions.len()];
    if bones.is_empty() || prior.weight == 0.0 {
        return (0.0, grad);
    }
    let scale = prior.weight / bones.len() as f64;
    let mut loss = 0.0;
    for &(k, p) in &bones {
        let d = [
            positions[k][0] - positions[p][0],
            positions[k][1] - positions[p][1],
            positions[k][2] - positions[p][2],
        ];
        let len = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
        let r = len - prior.lengths[k];
        loss += scale * r * r;
        if len > 0.0 {
            let c = 2.0 * scale * r / len;
            for a in 0..3 {
                grad[k][a] += c * d[a];
                grad[p][a] -= c * d[a];
            }
        }
    }
    (loss, grad)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxSteps,
    Diverged,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::Converged => "converged",
            Termination::MaxSteps => "max_steps",
            Termination::Diverged => "diverged",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub mode: FitMode,
    /// Fitted keypoints (the reprojection for `Fit3d`).
    pub pose2d: Pose2D,
    pub pose3d: Option<Pose3D>,
    /// Loss before each update, plus the loss of the returned pose.
    pub loss_curve: Vec<f64>,
    pub steps: usize,
    pub termination: Termination,
    /// Reason for `Diverged`.
    pub message: Option<String>,
}

impl FitResult {
    pub fn final_loss(&self) -> f64 {
        *self.loss_curve.last().expect("loss curve is never empty")
    }

    pub fn pose_record(&self) -> PoseRecord {
        let rec = PoseRecord::new(0, &self.pose2d);
        match &self.pose3d {
            Some(p) => rec.with_3d(p),
            None => rec,
        }
    }

    pub fn to_json(&self) -> String {
        let value = serde_json::json!({
            "mode": self.mode.as_str(),
            "steps": self.steps,
            "termination": self.termination.as_str(),
            "final_loss": self.final_loss(),
            "loss_curve": self.loss_curve,
            "pose": self.pose_record(),
        });
        serde_json::to_string_pretty(&value).expect("fit result serializes")
    }

    pub fn loss_csv(&self) -> String {
        let mut out = String::from("step,loss\n");
        for (i, l) in self.loss_curve.iter().enumerate() {
            out.push_str(&format!("{i},{l:e}\n"));
        }
        out
    }
}

fn window_converged(curve: &[f64], tol: f64) -> bool {
    if curve.len() <= CONVERGENCE_WINDOW {
        return false;
    }
    let w = &curve[curve.len() - CONVERGENCE_WINDOW - 1..];
    let (lo, hi) = w
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    hi - lo < tol
}

/// Runs Adam on the problem's objective until the loss settles, the step
/// budget is spent, or the iterate stops being finite or projectable.
///
/// Divergence is reported through [`Termination::Diverged`] with the last
/// finite iterate as the pose.
pub fn fit(problem: &FitProblem, adam: &AdamConfig) -> Result<FitResult> {
    problem.validate()?;
    adam.validate()?;
    let mut params = problem.initial_params();
    let (mut loss, mut grad) = problem.objective(&params)?;
    if !loss.is_finite() {
        return Err(Error::NonFinite("initial loss".into()));
    }
    let mut state = AdamState::new(params.len());
    let mut curve = vec![loss];
    let mut good = params.clone();
    let mut steps = 0;
    let mut message = None;

    let termination = loop {
        // a loss already under tol cannot drop by more than tol
        if loss < problem.tol || window_converged(&curve, problem.tol) {
            break Termination::Converged;
        }
        if steps >= problem.max_steps {
            break Termination::MaxSteps;
        }
        if let Err(e) = adam_step(&mut state, &mut params, &grad, adam) {
            message = Some(e.to_string());
            break Termination::Diverged;
        }
        steps += 1;
        match problem.objective(&params) {
            Ok((l, g)) if l.is_finite() => {
                loss = l;
                grad = g;
            }
            Ok((l, _)) => {
                message = Some(format!("loss became {l} at step {steps}"));
                break Termination::Diverged;
            }
            Err(e) => {
                message = Some(format!("step {steps}: {e}"));
                break Termination::Diverged;
            }
        }
        curve.push(loss);
        good.clone_from(&params);
    };

    let (pose2d, pose3d) = problem.pose_from_params(&good)?;
    Ok(FitResult {
        mode: problem.mode,
        pose2d,
        pose3d,
        loss_curve: curve,
        steps,
        termination,
        message,
    })
}

/// Gradient of [`supervised_pose_loss`] with respect to the prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct Pose3DGrad {
    pub positions: Vec<[f64; 3]>,
    pub orientations: Vec<[f64; 6]>,
}

/// `w_pos * mean_k |dpos_k|^2 + w_orient * mean_k |drot6d_k|^2`.
pub fn supervised_pose_loss(
    pred: &Pose3D,
    gt: &Pose3D,
    weights: &LossWeights,
) -> Result<(f64, Pose3DGrad)> {
    let n = gt.len();
    for (what, found) in [
        ("predicted positions", pred.positions.len()),
        ("predicted orientations", pred.orientations.len()),
        ("ground-truth orientations", gt.orientations.len()),
    ] {
        if found != n {
            return Err(Error::SizeMismatch {
                what,
                expected: n,
                found,
            });
        }
    }
    if n == 0 {
        return Err(Error::Empty("pose"));
    }
    let inv = 1.0 / n as f64;
    let mut loss = 0.0;
    let mut gp = vec![[0.0; 3]; n];
    let mut go = vec![[0.0; 6]; n];
    for k in 0..n {
        for a in 0..3 {
            let d = pred.positions[k][a] - gt.positions[k][a];
            loss += weights.w_pos * inv * d * d;
            gp[k][a] = 2.0 * weights.w_pos * inv * d;
        }
        let (p, g) = (pred.orientations[k].values(), gt.orientations[k].values());
        for a in 0..6 {
            let d = p[a] - g[a];
            loss += weights.w_orient * inv * d * d;
            go[k][a] = 2.0 * weights.w_orient * inv * d;
        }
    }
    Ok((
        loss,
        Pose3DGrad {
            positions: gp,
            orientations: go,
        },
    ))
}
