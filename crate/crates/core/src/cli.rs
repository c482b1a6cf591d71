//! The `skelfit` command line: render, fit, eval, synth and gradcheck.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 invalid input, 3 fit divergence,
//! 4 failed check.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::CliConfig;
use crate::error::{Error, Result};
use crate::fit::{fit, BonePrior, FitProblem, Termination};
use crate::gradcheck::{self, GradcheckConfig};
use crate::kinematics::bone_vectors;
use crate::metrics::{aggregate, evaluate_records, report_csv_with, CsvOptions};
use crate::pose::{read_pose_file, write_pose_file, Pose2D, Pose3D, PoseRecord};
use crate::render::render;
use crate::rng::SplitMix64;
use crate::skim::{read_skim, write_pngs, write_skim};
use crate::synth::{generate, write_dataset};
use crate::topology::{default_human_topology, SkeletonTopology};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;
pub const EXIT_CHECK_FAILED: i32 = 4;

fn version_text() -> &'static str {
    concat!(
        env!("CARGO_PKG_VERSION"),
        " (skim format 1, pose jsonl format 1)"
    )
}

#[derive(Debug, Parser)]
#[command(name = "skelfit", version = version_text(), about = "Skeleton-image rendering and pose fitting")]
pub struct Cli {
    /// Worker threads (default: available cores). Outputs do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON run configuration; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Skeleton topology JSON (default: the built-in 17-joint human).
    #[arg(long)]
    pub topology: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render one pose record into a SKIM file and optional PNGs.
    Render {
        pose_file: PathBuf,
        #[arg(long, default_value = "5ch")]
        layout: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        png_dir: Option<PathBuf>,
        /// Record to render, by position in the file.
        #[arg(long, default_value_t = 0)]
        index: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Recover a pose from a target skeleton image.
    Fit {
        target: PathBuf,
        #[arg(long, value_enum, default_value = "fit2d")]
        mode: ModeArg,
        /// Initial pose (first record; 3D data required for fit3d).
        #[arg(long)]
        init: PathBuf,
        /// Gaussian noise added to the initial pose: normalized image units
        /// for fit2d, meters for fit3d.
        #[arg(long)]
        init_noise: Option<f64>,
        /// Channel layout of the target (default: inferred from its channel count).
        #[arg(long)]
        layout: Option<String>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        max_steps: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// FitResult JSON (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        pose_out: Option<PathBuf>,
        #[arg(long)]
        loss_csv: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Score predictions against ground truth, per activity.
    Eval {
        pred: PathBuf,
        gt: PathBuf,
        #[arg(long, value_enum, default_value = "both")]
        policy: PolicyArg,
        /// Adds root-mean-square columns.
        #[arg(long)]
        rms: bool,
        /// CSV destination (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Generate a synthetic dataset.
    Synth {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        count: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Finite-difference check of all analytic gradients.
    Gradcheck {
        /// Probes per resolution and layout.
        #[arg(long, default_value_t = 200)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Corrupts the render gradient; the check must then fail.
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Fit2d,
    Fit3d,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolicyArg {
    Both,
    IgnoreFlip,
    ConsiderFlip,
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io { .. } | Error::Image(_) => EXIT_IO,
        Error::Diverged { .. } => EXIT_DIVERGED,
        _ => EXIT_INVALID,
    }
}

fn load_common(common: &Common) -> Result<(CliConfig, SkeletonTopology)> {
    let cfg = match &common.config {
        Some(p) => CliConfig::load(p)?,
        None => CliConfig::default(),
    };
    let topo = match &common.topology {
        Some(p) => SkeletonTopology::load(p)?,
        None => default_human_topology(),
    };
    topo.ensure_valid()?;
    Ok((cfg, topo))
}

fn write_text(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::io(p, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn first_record(path: &Path, index: usize) -> Result<PoseRecord> {
    let records = read_pose_file(path)?;
    let n = records.len();
    records.into_iter().nth(index).ok_or_else(|| {
        Error::InvalidParam(format!("{}: record {index} requested, file has {n}", path.display()))
    })
}

fn cmd_render(
    pose_file: &Path,
    layout: &str,
    out: &Path,
    png_dir: Option<&Path>,
    index: usize,
    common: &Common,
) -> Result<i32> {
    let (cfg, topo) = load_common(common)?;
    let pose = first_record(pose_file, index)?.pose2d()?;
    let img = render(&pose, &topo, layout, &cfg.render)?;
    write_skim(out, &img)?;
    if let Some(dir) = png_dir {
        let stem = out
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "render".into());
        write_pngs(dir, &stem, &img)?;
    }
    Ok(EXIT_OK)
}

#[allow(clippy::too_many_arguments)]
fn cmd_fit(
    target: &Path,
    mode: ModeArg,
    init: &Path,
    init_noise: Option<f64>,
    layout: Option<&str>,
    lr: Option<f64>,
    max_steps: Option<usize>,
    seed: Option<u64>,
    out: Option<&Path>,
    pose_out: Option<&Path>,
    loss_csv: Option<&Path>,
    common: &Common,
) -> Result<i32> {
    let (mut cfg, topo) = load_common(common)?;
    if let Some(lr) = lr {
        cfg.adam.lr = Some(lr);
    }
    if let Some(s) = max_steps {
        cfg.fit.max_steps = s;
    }
    if let Some(s) = seed {
        cfg.fit.seed = s;
    }
    let adam = cfg.adam()?;

    let mut img = read_skim(target)?;
    let layout = match layout {
        Some(l) => l.to_string(),
        None => topo
            .layout_for_channels(img.channels)
            .ok_or_else(|| {
                Error::InvalidParam(format!(
                    "no layout with {} channels; pass --layout",
                    img.channels
                ))
            })?
            .to_string(),
    };
    img.layout = layout.clone();
    let mut render_params = cfg.render;
    render_params.width = img.width;
    render_params.height = img.height;

    let record = first_record(init, 0)?;
    let sigma = init_noise.unwrap_or(0.0);
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidParam(format!("--init-noise must be >= 0, got {sigma}")));
    }
    let mut rng = SplitMix64::new(cfg.fit.seed);
    let mut problem = match mode {
        ModeArg::Fit2d => {
            let p = record.pose2d()?;
            let noisy = Pose2D::new(
                p.keypoints
                    .iter()
                    .map(|k| [k[0] + sigma * rng.gaussian(), k[1] + sigma * rng.gaussian()])
                    .collect(),
            )?;
            FitProblem::fit2d(img, topo, render_params, noisy)
        }
        ModeArg::Fit3d => {
            let p = record.pose3d()?.ok_or_else(|| {
                Error::InvalidParam(format!("{}: fit3d needs pos3d in the init record", init.display()))
            })?;
            let lengths = bone_vectors(&p, &topo)
                .iter()
                .map(|b| (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]).sqrt())
                .collect();
            let noisy = Pose3D::new(
                p.positions
                    .iter()
                    .map(|v| {
                        [
                            v[0] + sigma * rng.gaussian(),
                            v[1] + sigma * rng.gaussian(),
                            v[2] + sigma * rng.gaussian(),
                        ]
                    })
                    .collect(),
                p.orientations.clone(),
            )?;
            let mut prob = FitProblem::fit3d(img, topo, render_params, cfg.camera, noisy);
            if cfg.fit.bone_prior_weight > 0.0 {
                prob.bone_prior = Some(BonePrior {
                    lengths,
                    weight: cfg.fit.bone_prior_weight,
                });
            }
            prob
        }
    };
    problem.layout = layout;
    problem.weights = cfg.loss_weights;
    problem.max_steps = cfg.fit.max_steps;
    problem.tol = cfg.fit.tol;

    let result = fit(&problem, &adam)?;
    write_text(out, &(result.to_json() + "\n"))?;
    if let Some(p) = pose_out {
        write_pose_file(p, &[result.pose_record()])?;
    }
    if let Some(p) = loss_csv {
        std::fs::write(p, result.loss_csv()).map_err(|e| Error::io(p, e))?;
    }
    if result.termination == Termination::Diverged {
        eprintln!(
            "fit diverged: {}",
            result.message.as_deref().unwrap_or("non-finite loss")
        );
        return Ok(EXIT_DIVERGED);
    }
    Ok(EXIT_OK)
}

fn cmd_eval(
    pred: &Path,
    gt: &Path,
    policy: PolicyArg,
    rms: bool,
    out: Option<&Path>,
    common: &Common,
) -> Result<i32> {
    let (cfg, topo) = load_common(common)?;
    let pred = read_pose_file(pred)?;
    let gt = read_pose_file(gt)?;
    let frames = evaluate_records(&pred, &gt, &topo, cfg.render.width, cfg.render.height)?;
    let report = aggregate(&frames)?;
    let opts = CsvOptions {
        ignore_flip: policy != PolicyArg::ConsiderFlip,
        consider_flip: policy != PolicyArg::IgnoreFlip,
        rms,
    };
    write_text(out, &report_csv_with(&report, opts))?;
    Ok(EXIT_OK)
}

fn cmd_synth(
    out_dir: &Path,
    seed: Option<u64>,
    count: Option<usize>,
    common: &Common,
) -> Result<i32> {
    let (cfg, topo) = load_common(common)?;
    let mut gen = cfg.generator.clone();
    if let Some(s) = seed {
        gen.seed = s;
    }
    if let Some(c) = count {
        gen.count = c;
    }
    let samples = generate(&gen, &topo)?;
    write_dataset(out_dir, &gen, &samples)?;
    Ok(EXIT_OK)
}

fn cmd_gradcheck(samples: usize, seed: u64, inject_fault: bool) -> Result<i32> {
    let report = gradcheck::run(&GradcheckConfig {
        samples,
        seed,
        inject_fault,
        ..Default::default()
    })?;
    println!("{report}");
    Ok(if report.passed() {
        EXIT_OK
    } else {
        EXIT_CHECK_FAILED
    })
}

pub fn execute(cli: &Cli) -> Result<i32> {
    match &cli.command {
        Command::Render {
            pose_file,
            layout,
            out,
            png_dir,
            index,
            common,
        } => cmd_render(pose_file, layout, out, png_dir.as_deref(), *index, common),
        Command::Fit {
            target,
            mode,
            init,
            init_noise,
            layout,
            lr,
            max_steps,
            seed,
            out,
            pose_out,
            loss_csv,
            common,
        } => cmd_fit(
            target,
            *mode,
            init,
            *init_noise,
            layout.as_deref(),
            *lr,
            *max_steps,
            *seed,
            out.as_deref(),
            pose_out.as_deref(),
            loss_csv.as_deref(),
            common,
        ),
        Command::Eval {
            pred,
            gt,
            policy,
            rms,
            out,
            common,
        } => cmd_eval(pred, gt, *policy, *rms, out.as_deref(), common),
        Command::Synth {
            out_dir,
            seed,
            count,
            common,
        } => cmd_synth(out_dir, *seed, *count, common),
        Command::Gradcheck {
            samples,
            seed,
            inject_fault,
        } => cmd_gradcheck(*samples, *seed, *inject_fault),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be >= 1");
            return EXIT_INVALID;
        }
        // fails only if a pool already exists, which keeps its size
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
