//! Shows why a single-channel skeleton image cannot tell left from right:
//! swapping the left/right labels leaves the 1-channel render unchanged but
//! moves limbs between channels of the 5-channel render.

use skelfit::pose::flip_pose;
use skelfit::render::{render, RenderParams, SkeletonImage};
use skelfit::synth::{generate, GeneratorConfig};
use skelfit::topology::default_human_topology;

fn max_diff(a: &SkeletonImage, b: &SkeletonImage) -> f64 {
    a.data.iter().zip(&b.data).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn main() -> skelfit::Result<()> {
    let topo = default_human_topology();
    let cfg = GeneratorConfig {
        count: 5,
        emit_targets: false,
        ..Default::default()
    };
    let params = RenderParams::default();
    println!("sample  1ch max|d|  3ch max|d|  5ch max|d|");
    for s in generate(&cfg, &topo)? {
        let flipped = flip_pose(&s.pose2d, &topo)?;
        let d = |layout| -> skelfit::Result<f64> {
            Ok(max_diff(
                &render(&s.pose2d, &topo, layout, &params)?,
                &render(&flipped, &topo, layout, &params)?,
            ))
        };
        println!("{:>6}  {:>10.2e}  {:>10.2e}  {:>10.3}", s.index, d("1ch")?, d("3ch")?, d("5ch")?);
    }
    Ok(())
}
