//! Renders a synthetic pose in all three channel layouts and writes a SKIM
//! file plus PNGs for each.
//!
//! cargo run --example render_skeleton -- [out_dir]

use skelfit::render::{render, RenderParams};
use skelfit::skim::{write_pngs, write_skim};
use skelfit::synth::{generate_sample, GeneratorConfig};
use skelfit::topology::default_human_topology;

fn main() -> skelfit::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "render_out".into());
    std::fs::create_dir_all(&out).map_err(|e| skelfit::Error::io(&out, e))?;

    let topo = default_human_topology();
    let cfg = GeneratorConfig::default();
    let sample = generate_sample(&cfg, &topo, &cfg.rest(&topo)?, 0)?;
    let params = RenderParams::default();

    for layout in ["1ch", "3ch", "5ch"] {
        let img = render(&sample.pose2d, &topo, layout, &params)?;
        let path = format!("{out}/{layout}.skim");
        write_skim(&path, &img)?;
        let pngs = write_pngs(&out, layout, &img)?;
        let peak = img.data.iter().cloned().fold(0.0, f64::max);
        println!("{layout}: {} channels, peak {peak:.3}, {} PNGs", img.channels, pngs.len());
    }
    Ok(())
}
