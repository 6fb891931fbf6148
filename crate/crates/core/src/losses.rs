//! Scalar evaluations of the composite localization loss: pose negative
//! log-likelihood, scale MSE and coverage-masked skeleton BCE. Used as
//! diagnostics in evaluation reports.

use serde::{Deserialize, Serialize};

use crate::grid::{Grid2D, SkeletonMask};
use crate::matcher::ProbabilityVolume;
use crate::{Error, Pose, Result};

/// Lower clamp for probabilities inside the pose NLL.
pub const PROB_FLOOR: f64 = 1e-30;
/// Clamp for skeleton probabilities inside the BCE.
pub const BCE_EPS: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub nll: f64,
    pub scale_mse: f64,
    pub skeleton_bce: f64,
    pub total: f64,
}

impl LossReport {
    pub fn new(nll: f64, scale_mse: f64, skeleton_bce: f64) -> Self {
        LossReport {
            nll,
            scale_mse,
            skeleton_bce,
            total: nll + scale_mse + skeleton_bce,
        }
    }
}

/// `-log P` at the hypothesis nearest to the ground-truth pose.
pub fn pose_nll(p: &ProbabilityVolume, gt: &Pose) -> Result<f64> {
    pose_nll_with_floor(p, gt, PROB_FLOOR)
}

pub fn pose_nll_with_floor(p: &ProbabilityVolume, gt: &Pose, floor: f64) -> Result<f64> {
    if !(floor > 0.0 && floor < 1.0) {
        return Err(Error::invalid(format!("probability floor must lie in (0, 1), got {floor}")));
    }
    let idx = p.snap(gt)?;
    Ok(-p.probs()[idx].max(floor).ln())
}

/// Mean squared difference between predicted and ground-truth scales.
pub fn scale_loss(pred: &[f64], gt: &[f64]) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(Error::invalid(format!(
            "scale batches differ in length: {} vs {}",
            pred.len(),
            gt.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::invalid("scale batch is empty"));
    }
    let sum: f64 = pred.iter().zip(gt).map(|(p, g)| (p - g) * (p - g)).sum();
    Ok(sum / pred.len() as f64)
}

fn binary_plane(g: &Grid2D, what: &str) -> Result<Vec<bool>> {
    if g.channels() != 1 {
        return Err(Error::invalid(format!("{what} must have one channel, got {}", g.channels())));
    }
    g.values()
        .iter()
        .map(|&v| match v {
            0.0 => Ok(false),
            1.0 => Ok(true),
            _ => Err(Error::invalid(format!("{what} must be binary, found {v}"))),
        })
        .collect()
}

/// Binary cross-entropy of the skeleton probabilities against a binary
/// target, averaged over covered cells only.
pub fn skeleton_bce(pred: &SkeletonMask, gt_mask: &Grid2D, coverage: &Grid2D) -> Result<f64> {
    skeleton_bce_with_eps(pred, gt_mask, coverage, BCE_EPS)
}

pub fn skeleton_bce_with_eps(pred: &SkeletonMask, gt_mask: &Grid2D, coverage: &Grid2D, eps: f64) -> Result<f64> {
    if !(eps > 0.0 && eps < 0.5) {
        return Err(Error::invalid(format!("BCE clamp must lie in (0, 0.5), got {eps}")));
    }
    for (g, what) in [(gt_mask, "ground-truth mask"), (coverage, "coverage mask")] {
        if g.height() != pred.height() || g.width() != pred.width() {
            return Err(Error::invalid(format!(
                "{what} is {}x{}, prediction is {}x{}",
                g.height(),
                g.width(),
                pred.height(),
                pred.width()
            )));
        }
    }
    let y = binary_plane(gt_mask, "ground-truth mask")?;
    let cov = binary_plane(coverage, "coverage mask")?;
    let q = pred.probabilities();
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in 0..q.len() {
        if !cov[i] {
            continue;
        }
        let qi = q[i].clamp(eps, 1.0 - eps);
        sum -= if y[i] { qi.ln() } else { (1.0 - qi).ln() };
        count += 1;
    }
    if count == 0 {
        return Err(Error::invalid("coverage mask is empty"));
    }
    Ok(sum / count as f64)
}
