//! Localization metrics, per-scene evaluation records, summary reports and
//! the ablation harness.
//!
//! Errors are metric: a map-grid pose error is converted to meters with the
//! scene's map cell size (`meters_per_pixel · stride`). Lateral and
//! longitudinal components are taken relative to the ground-truth heading,
//! and recall thresholds are inclusive.

use std::fmt::Write as _;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{LocalizerConfig, StageConfig};
use crate::grid::Grid2D;
use crate::losses::{pose_nll_with_floor, skeleton_bce_with_eps, LossReport};
use crate::pipeline::{encode_map, encode_scan, localize_encoded, Localization};
use crate::synth::Scene;
use crate::{pose_error, Error, PointCloud, Pose, Result};

/// Distance thresholds of the recall tables, meters.
pub const DISTANCE_THRESHOLDS: [f64; 3] = [1.0, 3.0, 5.0];
/// Angle thresholds of the recall tables, degrees.
pub const ANGLE_THRESHOLDS: [f64; 3] = [1.0, 3.0, 5.0];

/// Absolute lateral and longitudinal error in meters: the error vector
/// `pred − gt` projected onto the ground-truth heading (longitudinal) and its
/// perpendicular (lateral).
pub fn decompose_error(pred: &Pose, gt: &Pose, cell_size: f64) -> (f64, f64) {
    let du = (pred.u() - gt.u()) * cell_size;
    let dv = (pred.v() - gt.v()) * cell_size;
    let (s, c) = gt.theta().sin_cos();
    let long = du * c + dv * s;
    let lat = -du * s + dv * c;
    (lat.abs(), long.abs())
}

/// Percentage of `errors` at or below each threshold.
pub fn recall_at(errors: &[f64], thresholds: &[f64]) -> Result<Vec<f64>> {
    if errors.is_empty() {
        return Err(Error::invalid("recall needs at least one error"));
    }
    let n = errors.len() as f64;
    Ok(thresholds
        .iter()
        .map(|&t| 100.0 * errors.iter().filter(|&&e| e <= t).count() as f64 / n)
        .collect())
}

/// Outcome of localizing one scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalRecord {
    pub scene_id: String,
    pub pred_u: f64,
    pub pred_v: f64,
    pub pred_theta: f64,
    pub gt_u: f64,
    pub gt_v: f64,
    pub gt_theta: f64,
    pub loc_err_m: f64,
    pub lat_err_m: f64,
    pub long_err_m: f64,
    pub ori_err_deg: f64,
    pub s_pred: f64,
    pub s_gt: f64,
    /// Negative log-likelihood of the ground-truth hypothesis.
    pub nll: f64,
    /// Coverage-masked BCE of the map skeleton against the projected scan.
    pub skeleton_bce: f64,
    /// Wall time of the localization. Kept out of the results file so that
    /// file stays byte-identical across runs.
    #[serde(skip)]
    pub runtime_ms: f64,
}

impl EvalRecord {
    /// Builds a record from a pose estimate, computing the error columns.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        scene_id: impl Into<String>,
        pred: &Pose,
        gt: &Pose,
        cell_size: f64,
        s_pred: f64,
        s_gt: f64,
        nll: f64,
        skeleton_bce: f64,
        runtime_ms: f64,
    ) -> Result<Self> {
        let (loc, ori) = pose_error(pred, gt, cell_size)?;
        let (lat, long) = decompose_error(pred, gt, cell_size);
        Ok(EvalRecord {
            scene_id: scene_id.into(),
            pred_u: pred.u(),
            pred_v: pred.v(),
            pred_theta: pred.theta(),
            gt_u: gt.u(),
            gt_v: gt.v(),
            gt_theta: gt.theta(),
            loc_err_m: loc,
            lat_err_m: lat,
            long_err_m: long,
            ori_err_deg: ori,
            s_pred,
            s_gt,
            nll,
            skeleton_bce,
            runtime_ms,
        })
    }
}

/// Writes records as CSV with a header row.
pub fn write_records<W: Write>(records: &[EvalRecord], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in records {
        wr.serialize(r).map_err(|e| Error::invalid(e.to_string()))?;
    }
    wr.flush().map_err(|e| Error::invalid(e.to_string()))
}

/// Parses the CSV written by [`write_records`]. Every value must be finite.
pub fn read_records<R: Read>(r: R) -> Result<Vec<EvalRecord>> {
    let mut rd = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for (i, row) in rd.deserialize::<EvalRecord>().enumerate() {
        let rec = row.map_err(|e| Error::format("results", format!("row {}: {e}", i + 1)))?;
        let values = [
            rec.pred_u,
            rec.pred_v,
            rec.pred_theta,
            rec.gt_u,
            rec.gt_v,
            rec.gt_theta,
            rec.loc_err_m,
            rec.lat_err_m,
            rec.long_err_m,
            rec.ori_err_deg,
            rec.s_pred,
            rec.s_gt,
            rec.nll,
            rec.skeleton_bce,
        ];
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::format("results", format!("row {}: non-finite value", i + 1)));
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn read_records_file(path: &Path) -> Result<Vec<EvalRecord>> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_records(f).map_err(|e| match e {
        Error::InputFormat { reason, .. } => Error::format(path.display().to_string(), reason),
        other => other,
    })
}

/// Writes `scene_id,runtime_ms` rows.
pub fn write_timings<W: Write>(records: &[EvalRecord], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["scene_id", "runtime_ms"]).map_err(|e| Error::invalid(e.to_string()))?;
    for r in records {
        wr.write_record([r.scene_id.as_str(), &format!("{:.3}", r.runtime_ms)])
            .map_err(|e| Error::invalid(e.to_string()))?;
    }
    wr.flush().map_err(|e| Error::invalid(e.to_string()))
}

/// Recall percentages at [`DISTANCE_THRESHOLDS`] or [`ANGLE_THRESHOLDS`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Recall {
    pub at_1: f64,
    pub at_3: f64,
    pub at_5: f64,
}

impl Recall {
    fn of(errors: &[f64], thresholds: &[f64; 3]) -> Result<Self> {
        let r = recall_at(errors, thresholds)?;
        Ok(Recall {
            at_1: r[0],
            at_3: r[1],
            at_5: r[2],
        })
    }
}

/// Aggregate metrics over a set of records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Report {
    pub scenes: usize,
    pub lateral_recall: Recall,
    pub longitudinal_recall: Recall,
    pub location_recall: Recall,
    pub orientation_recall: Recall,
    pub mean_loc_err_m: f64,
    pub mean_ori_err_deg: f64,
    pub mean_scale_abs_err: f64,
    /// Mean NLL, scale MSE and mean skeleton BCE.
    pub losses: LossReport,
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

/// Summarizes records into recall tables and averages.
pub fn summarize(records: &[EvalRecord]) -> Result<Report> {
    if records.is_empty() {
        return Err(Error::invalid("cannot summarize zero records"));
    }
    let col = |f: fn(&EvalRecord) -> f64| records.iter().map(f).collect::<Vec<_>>();
    let loc = col(|r| r.loc_err_m);
    let ori = col(|r| r.ori_err_deg);
    let scale_mse = mean(records.iter().map(|r| (r.s_pred - r.s_gt).powi(2)));
    Ok(Report {
        scenes: records.len(),
        lateral_recall: Recall::of(&col(|r| r.lat_err_m), &DISTANCE_THRESHOLDS)?,
        longitudinal_recall: Recall::of(&col(|r| r.long_err_m), &DISTANCE_THRESHOLDS)?,
        location_recall: Recall::of(&loc, &DISTANCE_THRESHOLDS)?,
        orientation_recall: Recall::of(&ori, &ANGLE_THRESHOLDS)?,
        mean_loc_err_m: mean(loc.iter().copied()),
        mean_ori_err_deg: mean(ori.iter().copied()),
        mean_scale_abs_err: mean(records.iter().map(|r| (r.s_pred - r.s_gt).abs())),
        losses: LossReport::new(
            mean(records.iter().map(|r| r.nll)),
            scale_mse,
            mean(records.iter().map(|r| r.skeleton_bce)),
        ),
    })
}

impl Report {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self).map_err(|e| Error::invalid(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        serde_json::from_slice(bytes).map_err(|e| Error::format("report", e.to_string()))
    }

    /// Aligned text table: lateral, longitudinal, location and orientation
    /// recalls followed by the average errors.
    pub fn to_table(&self) -> String {
        let heads = [
            "Lat R@1m", "Lat R@3m", "Lat R@5m", "Long R@1m", "Long R@3m", "Long R@5m", "Loc R@1m", "Loc R@3m", "Loc R@5m",
            "Ori R@1°", "Ori R@3°", "Ori R@5°", "Avg Loc m", "Avg Ori °",
        ];
        let mut vals = Vec::new();
        for r in [
            &self.lateral_recall,
            &self.longitudinal_recall,
            &self.location_recall,
            &self.orientation_recall,
        ] {
            vals.extend([r.at_1, r.at_3, r.at_5].map(|v| format!("{v:.2}")));
        }
        vals.push(format!("{:.3}", self.mean_loc_err_m));
        vals.push(format!("{:.3}", self.mean_ori_err_deg));
        let widths: Vec<usize> = heads
            .iter()
            .zip(&vals)
            .map(|(h, v)| h.chars().count().max(v.len()))
            .collect();
        let mut out = String::new();
        let line = |cells: Vec<String>| {
            cells
                .iter()
                .zip(&widths)
                .map(|(c, &w)| format!("{c:>w$}"))
                .collect::<Vec<_>>()
                .join("  ")
        };
        let _ = writeln!(out, "{}", line(heads.iter().map(|h| h.to_string()).collect()));
        let _ = writeln!(out, "{}", line(vals));
        let _ = writeln!(
            out,
            "scenes {}  mean |S_pred - S_gt| {:.4}  NLL {:.4}  scale MSE {:.4}  skeleton BCE {:.4}",
            self.scenes, self.mean_scale_abs_err, self.losses.nll, self.losses.scale_mse, self.losses.skeleton_bce
        );
        out
    }
}

/// Cells of the `side × side` map grid that the scan observed: a cell is
/// covered when it lies no farther from the sensor than the farthest return
/// in its 1° azimuth bin. `pose` is the sensor pose in map-grid cells and
/// `cell_size` the map cell spacing in meters.
pub fn coverage_mask(scan: &PointCloud, pose: &Pose, cell_size: f64, side: usize, max_range: f64) -> Result<Grid2D> {
    const BINS: usize = 360;
    let mut reach = [f64::NEG_INFINITY; BINS];
    let bin_of = |x: f64, y: f64| {
        let a = y.atan2(x).rem_euclid(std::f64::consts::TAU);
        ((a / std::f64::consts::TAU * BINS as f64) as usize).min(BINS - 1)
    };
    for p in scan.points() {
        let (x, y) = (p[0] as f64, p[1] as f64);
        let r = x.hypot(y);
        if r < max_range {
            let b = bin_of(x, y);
            reach[b] = reach[b].max(r);
        }
    }
    let (s, c) = pose.theta().sin_cos();
    let mut out = Grid2D::zeros(side, side, 1)?;
    for row in 0..side {
        for col in 0..side {
            let du = (col as f64 - pose.u()) * cell_size;
            let dv = (row as f64 - pose.v()) * cell_size;
            let (x, y) = (c * du + s * dv, -s * du + c * dv);
            if x.hypot(y) <= reach[bin_of(x, y)] + 0.5 * cell_size {
                out.set(row, col, 0, 1.0);
            }
        }
    }
    Ok(out)
}

/// Ground-truth skeleton pooled to the map grid: a cell is on when any of
/// its `stride × stride` pixels is.
pub fn pool_gt_skeleton(gt: &Grid2D, stride: usize) -> Result<Grid2D> {
    if stride == 0 || gt.height() % stride != 0 || gt.width() % stride != 0 {
        return Err(Error::invalid(format!(
            "skeleton {}x{} is not divisible by stride {stride}",
            gt.height(),
            gt.width()
        )));
    }
    let (h, w) = (gt.height() / stride, gt.width() / stride);
    let mut out = Grid2D::zeros(h, w, 1)?;
    for r in 0..gt.height() {
        for c in 0..gt.width() {
            if gt.get(r, c, 0) != 0.0 {
                out.set(r / stride, c / stride, 0, 1.0);
            }
        }
    }
    Ok(out)
}

/// Localizes one scene and scores the result against its ground truth.
pub fn evaluate_scene(scene: &Scene, scene_id: &str, cfg: &LocalizerConfig, prob_floor: f64, bce_eps: f64) -> Result<EvalRecord> {
    let start = std::time::Instant::now();
    let scan = encode_scan(&scene.scan, cfg, scene.seed())?;
    let map = encode_map(&scene.patch, cfg)?;
    let loc: Localization = localize_encoded(&scan, &map, cfg)?;
    let runtime_ms = start.elapsed().as_secs_f64() * 1e3;

    let stride = cfg.encoder.map_stride;
    let gt = scene.gt_grid_pose(stride);
    let cell_size = scene.meta.meters_per_pixel * stride as f64;
    let s_gt = scene.gt_scale_ratio(stride, cfg.voxel.pillar_size[0]);
    let nll = pose_nll_with_floor(&loc.probability, &gt, prob_floor)?;
    let target = pool_gt_skeleton(&scene.gt_skeleton, stride)?;
    let coverage = coverage_mask(&scene.scan, &gt, cell_size, map.skeleton.height(), cfg.encoder.max_return_range)?;
    let bce = if coverage.values().iter().any(|&v| v != 0.0) {
        skeleton_bce_with_eps(&map.skeleton, &target, &coverage, bce_eps)?
    } else {
        0.0
    };
    EvalRecord::new(scene_id, &loc.pose, &gt, cell_size, loc.scale.scale, s_gt, nll, bce, runtime_ms)
}

/// One line of an ablation matrix; omitted toggles default to on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationRow {
    pub name: String,
    #[serde(default = "on")]
    pub feature_matching: bool,
    #[serde(default = "on")]
    pub skeleton_matching: bool,
    #[serde(default = "on")]
    pub scale_alignment: bool,
    #[serde(default = "on")]
    pub scale_augmentation: bool,
}

fn on() -> bool {
    true
}

impl AblationRow {
    pub fn stages(&self) -> StageConfig {
        StageConfig {
            feature_matching: self.feature_matching,
            skeleton_matching: self.skeleton_matching,
            scale_alignment: self.scale_alignment,
            scale_augmentation: self.scale_augmentation,
        }
    }
}

/// Ablation matrix file: a TOML array of `[[row]]` tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationMatrix {
    pub row: Vec<AblationRow>,
}

impl AblationMatrix {
    pub fn from_toml(text: &str) -> Result<Self> {
        let m: AblationMatrix = toml::from_str(text).map_err(|e| Error::format("ablation matrix", e.to_string()))?;
        if m.row.is_empty() {
            return Err(Error::invalid("ablation matrix has no rows"));
        }
        let mut names: Vec<&str> = m.row.iter().map(|r| r.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("ablation row names must be unique"));
        }
        if let Some(bad) = m.row.iter().find(|r| !valid_row_name(&r.name)) {
            return Err(Error::invalid(format!(
                "ablation row name {:?} must be non-empty and use only letters, digits, '-' and '_'",
                bad.name
            )));
        }
        Ok(m)
    }
}

fn valid_row_name(name: &str) -> bool {
    !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

/// Evaluates every scene under every row and summarizes each row. Scenes
/// are processed in parallel; results keep the input order.
pub fn run_ablation(
    scenes: &[(String, Scene)],
    rows: &[AblationRow],
    base: &LocalizerConfig,
    prob_floor: f64,
    bce_eps: f64,
) -> Result<Vec<(String, Report)>> {
    for row in rows {
        row.stages()
            .validate()
            .map_err(|e| Error::invalid(format!("ablation row '{}': {e}", row.name)))?;
    }
    rows.iter()
        .map(|row| {
            let mut cfg = base.clone();
            cfg.stages = row.stages();
            let records = scenes
                .par_iter()
                .map(|(id, s)| evaluate_scene(s, id, &cfg, prob_floor, bce_eps))
                .collect::<Result<Vec<_>>>()?;
            Ok((row.name.clone(), summarize(&records)?))
        })
        .collect()
}
