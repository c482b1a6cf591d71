//! Fits 3D joint positions through the camera to a 2D skeleton image, with
//! a bone-length prior holding the limbs at their known lengths.

use skelfit::camera::PerspectiveCamera;
use skelfit::fit::{fit, BonePrior, FitProblem};
use skelfit::kinematics::bone_vectors;
use skelfit::optim::AdamConfig;
use skelfit::pose::Pose3D;
use skelfit::render::RenderParams;
use skelfit::rng::SplitMix64;
use skelfit::synth::{generate_sample, GeneratorConfig};
use skelfit::topology::default_human_topology;

fn main() -> skelfit::Result<()> {
    let topo = default_human_topology();
    let cfg = GeneratorConfig::default();
    let sample = generate_sample(&cfg, &topo, &cfg.rest(&topo)?, 1)?;
    let camera = PerspectiveCamera::default();

    let mut rng = SplitMix64::new(2);
    let init = Pose3D::new(
        sample
            .pose3d
            .positions
            .iter()
            .map(|p| [p[0] + 0.02 * rng.gaussian(), p[1] + 0.02 * rng.gaussian(), p[2]])
            .collect(),
        sample.pose3d.orientations.clone(),
    )?;
    let lengths = bone_vectors(&sample.pose3d, &topo)
        .iter()
        .map(|b| (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]).sqrt())
        .collect();

    let mut problem = FitProblem::fit3d(
        sample.target.clone().unwrap(),
        topo,
        RenderParams::default(),
        camera,
        init,
    );
    problem.bone_prior = Some(BonePrior { lengths, weight: 1.0 });
    // parameters are meters here
    let adam = AdamConfig { lr: 2e-3, ..AdamConfig::pretrain() };
    let result = fit(&problem, &adam)?;

    let reproj = result
        .pose2d
        .keypoints
        .iter()
        .zip(&sample.pose2d.keypoints)
        .map(|(a, b)| ((a[0] - b[0]) * 128.0).hypot((a[1] - b[1]) * 128.0))
        .sum::<f64>()
        / 17.0;
    println!(
        "{} after {} steps, final loss {:.3e}, reprojection error {reproj:.2} px",
        result.termination.as_str(),
        result.steps,
        result.final_loss()
    );
    Ok(())
}
