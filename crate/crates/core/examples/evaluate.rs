//! Scores noisy predictions, some with swapped left/right labels, and prints
//! the per-activity CSV report under both flip policies.

use skelfit::metrics::{aggregate, evaluate_records, report_csv_with, CsvOptions};
use skelfit::pose::{flip_pose, Pose2D, PoseRecord};
use skelfit::rng::SplitMix64;
use skelfit::synth::{generate, GeneratorConfig};
use skelfit::topology::default_human_topology;

fn main() -> skelfit::Result<()> {
    let topo = default_human_topology();
    let cfg = GeneratorConfig {
        count: 40,
        emit_targets: false,
        ..Default::default()
    };
    let mut rng = SplitMix64::new(9);
    let (mut gt, mut pred) = (Vec::new(), Vec::new());
    for s in generate(&cfg, &topo)? {
        let mut g = s.record();
        g.activity = Some(["Directions", "Greeting"][s.index % 2].to_string());
        let mut p = Pose2D::new(
            s.pose2d
                .keypoints
                .iter()
                .map(|k| [k[0] + 0.01 * rng.gaussian(), k[1] + 0.01 * rng.gaussian()])
                .collect(),
        )?;
        if s.index % 4 == 0 {
            p = flip_pose(&p, &topo)?;
        }
        pred.push(PoseRecord::new(g.frame, &p));
        gt.push(g);
    }
    let frames = evaluate_records(&pred, &gt, &topo, 128, 128)?;
    let report = aggregate(&frames)?;
    let opts = CsvOptions { rms: true, ..Default::default() };
    print!("{}", report_csv_with(&report, opts));
    Ok(())
}
