//! Recovers 2D keypoints from a rendered 5-channel target, starting from a
//! perturbed copy of the true pose.

use skelfit::fit::{fit, FitProblem};
use skelfit::optim::AdamConfig;
use skelfit::pose::Pose2D;
use skelfit::render::RenderParams;
use skelfit::rng::SplitMix64;
use skelfit::synth::{generate_sample, GeneratorConfig};
use skelfit::topology::default_human_topology;

fn main() -> skelfit::Result<()> {
    let topo = default_human_topology();
    let cfg = GeneratorConfig::default();
    let sample = generate_sample(&cfg, &topo, &cfg.rest(&topo)?, 3)?;
    let params = RenderParams::default();

    let mut rng = SplitMix64::new(1);
    let init = Pose2D::new(
        sample
            .pose2d
            .keypoints
            .iter()
            .map(|k| [k[0] + 0.02 * rng.gaussian(), k[1] + 0.02 * rng.gaussian()])
            .collect(),
    )?;
    let problem = FitProblem::fit2d(sample.target.clone().unwrap(), topo, params, init.clone());
    let result = fit(&problem, &AdamConfig::pretrain())?;

    let err = |p: &Pose2D| {
        p.keypoints
            .iter()
            .zip(&sample.pose2d.keypoints)
            .map(|(a, b)| ((a[0] - b[0]) * 128.0).hypot((a[1] - b[1]) * 128.0))
            .sum::<f64>()
            / 17.0
    };
    println!(
        "{} after {} steps: loss {:.3e} -> {:.3e}, mean error {:.2} px -> {:.2} px",
        result.termination.as_str(),
        result.steps,
        result.loss_curve[0],
        result.final_loss(),
        err(&init),
        err(&result.pose2d)
    );
    Ok(())
}
