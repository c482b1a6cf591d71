//! 2D keypoint error metrics in squared pixels, with and without forgiving
//! left/right label flips, aggregated per activity.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::pose::{flip_pose, Pose2D, PoseRecord};
use crate::topology::SkeletonTopology;

/// Label used for the pooled row.
pub const ALL: &str = "all";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlipPolicy {
    /// Per frame, the smaller of the prediction's error and the error of its
    /// label-flipped copy.
    IgnoreFlip,
    /// The prediction's error as is.
    ConsiderFlip,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameError {
    pub frame: u64,
    pub activity: Option<String>,
    /// Squared pixel distance per keypoint (0 for masked keypoints).
    pub per_keypoint: Vec<f64>,
    /// Mean over visible keypoints.
    pub score: f64,
    /// Same score for the label-flipped prediction.
    pub flipped_score: f64,
}

impl FrameError {
    pub fn policy_score(&self, policy: FlipPolicy) -> f64 {
        match policy {
            FlipPolicy::ConsiderFlip => self.score,
            FlipPolicy::IgnoreFlip => self.score.min(self.flipped_score),
        }
    }
}

fn squared_pixel_errors(pred: &Pose2D, gt: &Pose2D, width: f64, height: f64) -> Vec<f64> {
    pred.keypoints
        .iter()
        .zip(&gt.keypoints)
        .map(|(p, g)| {
            let dx = (p[0] - g[0]) * width;
            let dy = (p[1] - g[1]) * height;
            dx * dx + dy * dy
        })
        .collect()
}

/// Per-keypoint squared pixel error at `width x height`, all keypoints
/// visible.
pub fn frame_error(
    pred: &Pose2D,
    gt: &Pose2D,
    topo: &SkeletonTopology,
    width: usize,
    height: usize,
) -> Result<FrameError> {
    frame_error_masked(pred, gt, topo, width, height, None)
}

/// As [`frame_error`], averaging only over keypoints where `visible` is true.
pub fn frame_error_masked(
    pred: &Pose2D,
    gt: &Pose2D,
    topo: &SkeletonTopology,
    width: usize,
    height: usize,
    visible: Option<&[bool]>,
) -> Result<FrameError> {
    pred.check_matches(topo)?;
    gt.check_matches(topo)?;
    let n = gt.len();
    let mask: Vec<bool> = match visible {
        Some(m) if m.len() != n => {
            return Err(Error::SizeMismatch {
                what: "visibility mask",
                expected: n,
                found: m.len(),
            })
        }
        Some(m) => m.to_vec(),
        None => vec![true; n],
    };
    let count = mask.iter().filter(|v| **v).count();
    if count == 0 {
        return Err(Error::Empty("visible keypoints"));
    }
    let (w, h) = (width as f64, height as f64);
    let mean = |errs: &[f64]| {
        errs.iter()
            .zip(&mask)
            .filter(|(_, v)| **v)
            .map(|(e, _)| *e)
            .sum::<f64>()
            / count as f64
    };
    let mut per_keypoint = squared_pixel_errors(pred, gt, w, h);
    for (e, v) in per_keypoint.iter_mut().zip(&mask) {
        if !v {
            *e = 0.0;
        }
    }
    let flipped = squared_pixel_errors(&flip_pose(pred, topo)?, gt, w, h);
    Ok(FrameError {
        frame: 0,
        activity: None,
        score: mean(&per_keypoint),
        flipped_score: mean(&flipped),
        per_keypoint,
    })
}

/// Mean and median of per-frame scores.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub median: f64,
}

impl Summary {
    /// Values are sorted before summing, so the result does not depend on
    /// input order. An even count takes the mean of the two central values.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let mean = v.iter().sum::<f64>() / n as f64;
        let median = if n % 2 == 1 {
            v[n / 2]
        } else {
            0.5 * (v[n / 2 - 1] + v[n / 2])
        };
        Some(Self { mean, median })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReportRow {
    pub ignore_flip: Summary,
    pub consider_flip: Summary,
    pub frames: usize,
}

impl ReportRow {
    fn of(frames: &[&FrameError]) -> Option<Self> {
        let ignore: Vec<f64> = frames.iter().map(|f| f.policy_score(FlipPolicy::IgnoreFlip)).collect();
        let consider: Vec<f64> =
            frames.iter().map(|f| f.policy_score(FlipPolicy::ConsiderFlip)).collect();
        Some(Self {
            ignore_flip: Summary::of(&ignore)?,
            consider_flip: Summary::of(&consider)?,
            frames: frames.len(),
        })
    }

    pub fn summary(&self, policy: FlipPolicy) -> Summary {
        match policy {
            FlipPolicy::IgnoreFlip => self.ignore_flip,
            FlipPolicy::ConsiderFlip => self.consider_flip,
        }
    }
}

/// Per-activity rows plus the pooled `all` row. Frames without an activity
/// only contribute to `all`.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub activities: BTreeMap<String, ReportRow>,
    pub all: ReportRow,
}

impl EvalReport {
    pub fn row(&self, activity: &str) -> Option<&ReportRow> {
        if activity == ALL {
            Some(&self.all)
        } else {
            self.activities.get(activity)
        }
    }

    /// Rows in output order: activities sorted, then `all`.
    pub fn rows(&self) -> impl Iterator<Item = (&str, &ReportRow)> {
        self.activities
            .iter()
            .map(|(k, v)| (k.as_str(), v))
            .chain(std::iter::once((ALL, &self.all)))
    }
}

pub fn aggregate(frames: &[FrameError]) -> Result<EvalReport> {
    if frames.is_empty() {
        return Err(Error::Empty("frame errors"));
    }
    let mut groups: BTreeMap<&str, Vec<&FrameError>> = BTreeMap::new();
    for f in frames {
        if let Some(a) = &f.activity {
            groups.entry(a.as_str()).or_default().push(f);
        }
    }
    let all: Vec<&FrameError> = frames.iter().collect();
    Ok(EvalReport {
        activities: groups
            .into_iter()
            .map(|(k, v)| (k.to_string(), ReportRow::of(&v).expect("group is non-empty")))
            .collect(),
        all: ReportRow::of(&all).expect("frames are non-empty"),
    })
}

/// Which columns [`report_csv`] writes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CsvOptions {
    pub ignore_flip: bool,
    pub consider_flip: bool,
    /// Adds `rms_*` columns: square roots of the means, in pixels.
    pub rms: bool,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self {
            ignore_flip: true,
            consider_flip: true,
            rms: false,
        }
    }
}

pub fn report_csv(report: &EvalReport) -> String {
    report_csv_with(report, CsvOptions::default())
}

/// Fixed two-decimal CSV, one row per activity and a final `all` row.
pub fn report_csv_with(report: &EvalReport, opts: CsvOptions) -> String {
    let mut policies = Vec::new();
    if opts.ignore_flip {
        policies.push(("ignore", FlipPolicy::IgnoreFlip));
    }
    if opts.consider_flip {
        policies.push(("consider", FlipPolicy::ConsiderFlip));
    }
    let mut out = String::from("activity");
    for (name, _) in &policies {
        write!(out, ",mean_{name},median_{name}").unwrap();
    }
    if opts.rms {
        for (name, _) in &policies {
            write!(out, ",rms_{name}").unwrap();
        }
    }
    out.push_str(",frames\n");
    for (activity, row) in report.rows() {
        out.push_str(activity);
        for (_, p) in &policies {
            let s = row.summary(*p);
            write!(out, ",{:.2},{:.2}", s.mean, s.median).unwrap();
        }
        if opts.rms {
            for (_, p) in &policies {
                write!(out, ",{:.2}", row.summary(*p).mean.sqrt()).unwrap();
            }
        }
        writeln!(out, ",{}", row.frames).unwrap();
    }
    out
}

/// One parsed CSV line: activity, named numeric columns, frame count.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub activity: String,
    pub values: BTreeMap<String, f64>,
    pub frames: usize,
}

pub fn parse_report_csv(text: &str) -> Result<Vec<CsvRow>> {
    let bad = |m: String| Error::InvalidParam(format!("report csv: {m}"));
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().ok_or_else(|| bad("missing header".into()))?.split(',').collect();
    if header.first() != Some(&"activity") || header.last() != Some(&"frames") {
        return Err(bad(format!("unexpected header {header:?}")));
    }
    let mut rows = Vec::new();
    for (n, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != header.len() {
            return Err(bad(format!("line {}: {} cells", n + 2, cells.len())));
        }
        let mut values = BTreeMap::new();
        for (name, cell) in header[1..header.len() - 1].iter().zip(&cells[1..cells.len() - 1]) {
            let v: f64 = cell.parse().map_err(|_| bad(format!("line {}: {cell:?}", n + 2)))?;
            values.insert(name.to_string(), v);
        }
        let frames = cells[cells.len() - 1]
            .parse()
            .map_err(|_| bad(format!("line {}: frame count", n + 2)))?;
        rows.push(CsvRow {
            activity: cells[0].to_string(),
            values,
            frames,
        });
    }
    Ok(rows)
}

/// Pairs prediction and ground-truth records by frame id and scores each
/// ground-truth frame. The activity label comes from the ground truth.
pub fn evaluate_records(
    pred: &[PoseRecord],
    gt: &[PoseRecord],
    topo: &SkeletonTopology,
    width: usize,
    height: usize,
) -> Result<Vec<FrameError>> {
    let by_frame: HashMap<u64, &PoseRecord> = pred.iter().map(|r| (r.frame, r)).collect();
    if by_frame.len() != pred.len() {
        return Err(Error::InvalidParam("duplicate frame ids in predictions".into()));
    }
    gt.iter()
        .map(|g| {
            let p = by_frame.get(&g.frame).ok_or_else(|| {
                Error::InvalidParam(format!("no prediction for frame {}", g.frame))
            })?;
            let mut fe = frame_error(&p.pose2d()?, &g.pose2d()?, topo, width, height)?;
            fe.frame = g.frame;
            fe.activity = g.activity.clone().or_else(|| p.activity.clone());
            Ok(fe)
        })
        .collect()
}
