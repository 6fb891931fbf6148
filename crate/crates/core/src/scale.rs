//! Scale estimation between the BEV and map grids, and nearest-neighbor
//! rescaling of BEV operands.
//!
//! `S` is the ratio of map cell spacing to BEV cell spacing: `S > 1` means a
//! map cell covers more ground, so BEV content is shrunk towards the grid
//! center; `S < 1` enlarges the central part of the BEV grid.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::grid::{Grid2D, SkeletonMask, SKELETON_EPS};
use crate::matcher::score_volume;
use crate::{Error, Result};

/// Geometrically spaced candidate scales.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleBins {
    values: Vec<f64>,
}

/// `values[i] = s_min · (s_max / s_min)^(i / (n - 1))`.
pub fn make_bins(s_min: f64, s_max: f64, n: usize) -> Result<ScaleBins> {
    if !(s_min.is_finite() && s_max.is_finite() && s_min > 0.0 && s_min < s_max) {
        return Err(Error::invalid(format!("scale range [{s_min}, {s_max}] must satisfy 0 < min < max")));
    }
    if n < 2 {
        return Err(Error::invalid(format!("need at least 2 scale bins, got {n}")));
    }
    let ratio = s_max / s_min;
    let mut values: Vec<f64> = (0..n)
        .map(|i| s_min * ratio.powf(i as f64 / (n - 1) as f64))
        .collect();
    values[0] = s_min;
    values[n - 1] = s_max;
    Ok(ScaleBins { values })
}

impl ScaleBins {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Ratio between consecutive bins.
    pub fn step_ratio(&self) -> f64 {
        let n = self.values.len();
        (self.values[n - 1] / self.values[0]).powf(1.0 / (n - 1) as f64)
    }

    /// Index of the bin closest to `s` in log space.
    pub fn nearest(&self, s: f64) -> usize {
        let ls = s.ln();
        let mut best = 0;
        for (i, v) in self.values.iter().enumerate() {
            if (v.ln() - ls).abs() < (self.values[best].ln() - ls).abs() {
                best = i;
            }
        }
        best
    }
}

/// Softmax-weighted scale estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleEstimate {
    /// Bin weights, a probability vector.
    pub weights: Vec<f64>,
    /// Raw per-bin scores the weights were computed from.
    pub scores: Vec<f64>,
    /// `Σ wᵢ sᵢ`.
    pub scale: f64,
    /// Set when the skeletons carried no usable structure and the weights
    /// fell back to uniform.
    pub low_confidence: bool,
}

impl ScaleEstimate {
    /// Weights `softmax(scores / temperature)` over `bins`.
    pub fn from_scores(bins: &ScaleBins, scores: Vec<f64>, temperature: f64) -> Result<Self> {
        if !(temperature.is_finite() && temperature > 0.0) {
            return Err(Error::invalid(format!("temperature must be positive, got {temperature}")));
        }
        if scores.len() != bins.len() {
            return Err(Error::invalid(format!(
                "{} scores for {} scale bins",
                scores.len(),
                bins.len()
            )));
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::invalid("scale scores must be finite"));
        }
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut weights: Vec<f64> = scores.iter().map(|s| ((s - max) / temperature).exp()).collect();
        let z: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= z);
        let scale = weighted_scale(bins, &weights);
        Ok(ScaleEstimate {
            weights,
            scores,
            scale,
            low_confidence: false,
        })
    }

    fn uniform(bins: &ScaleBins) -> Self {
        let n = bins.len();
        let weights = vec![1.0 / n as f64; n];
        ScaleEstimate {
            scale: weighted_scale(bins, &weights),
            weights,
            scores: vec![0.0; n],
            low_confidence: true,
        }
    }

    /// Index of the largest weight (lowest index on ties).
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &w) in self.weights.iter().enumerate() {
            if w > self.weights[best] {
                best = i;
            }
        }
        best
    }
}

fn weighted_scale(bins: &ScaleBins, weights: &[f64]) -> f64 {
    let s: f64 = bins.values.iter().zip(weights).map(|(v, w)| v * w).sum();
    // keep S inside the bin hull despite round-off in the weighted sum
    s.clamp(bins.values[0], bins.values[bins.len() - 1])
}

fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor() as usize
}

/// Nearest-neighbor source index for output cell `i` when resampling `src`
/// cells onto `dst` cells.
fn nn_index(i: usize, src: usize, dst: usize) -> usize {
    (((i as f64 + 0.5) * src as f64 / dst as f64).floor() as usize).min(src - 1)
}

/// Rescales BEV content by `S` without changing the grid size: `S > 1`
/// shrinks the whole grid into a centered `round(H/S)` window surrounded by
/// zeros, `S < 1` enlarges the central `round(H·S)` window to fill the grid.
pub fn rescale_bev(f: &Grid2D, s: f64) -> Result<Grid2D> {
    rescale(f, s, Shrink::Nearest)
}

/// [`rescale_bev`] for skeleton indicators: identical geometry, but a shrunk
/// cell takes the maximum over its whole source footprint instead of one
/// nearest sample. Nearest-neighbor shrinking keeps a one-cell-wide line
/// only when it happens to fall on a sampled row or column, so at `S = 4`
/// three quarters of the skeleton would vanish; max-pooling is also how the
/// map skeleton is brought to its cell resolution.
pub fn rescale_skeleton(f: &Grid2D, s: f64) -> Result<Grid2D> {
    rescale(f, s, Shrink::Max)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Shrink {
    Nearest,
    Max,
}

fn rescale(f: &Grid2D, s: f64, shrink: Shrink) -> Result<Grid2D> {
    if !(s.is_finite() && s > 0.0) {
        return Err(Error::invalid(format!("scale must be positive, got {s}")));
    }
    if !f.is_square() {
        return Err(Error::invalid(format!(
            "rescaling needs a square grid, got {}x{}",
            f.height(),
            f.width()
        )));
    }
    if s == 1.0 {
        return Ok(f.clone());
    }
    let n = f.height();
    let ch = f.channels();
    let mut out = Grid2D::zeros(n, n, ch)?.with_cell_size(f.cell_size());
    if s > 1.0 {
        let m = round_half_up(n as f64 / s);
        if m < 1 {
            return Err(Error::DegenerateScale { scale: s });
        }
        let o = (n - m) / 2;
        for r in 0..m {
            for c in 0..m {
                match shrink {
                    Shrink::Nearest => {
                        let (sr, sc) = (nn_index(r, n, m), nn_index(c, n, m));
                        out.cell_mut(o + r, o + c).copy_from_slice(f.cell(sr, sc));
                    }
                    Shrink::Max => {
                        let (rows, cols) = (footprint(r, n, m), footprint(c, n, m));
                        let cell = out.cell_mut(o + r, o + c);
                        cell.fill(f64::NEG_INFINITY);
                        for sr in rows {
                            for sc in cols.clone() {
                                for (d, v) in cell.iter_mut().zip(f.cell(sr, sc)) {
                                    *d = d.max(*v);
                                }
                            }
                        }
                    }
                }
            }
        }
    } else {
        let m = round_half_up(n as f64 * s).min(n);
        if m < 1 {
            return Err(Error::DegenerateScale { scale: s });
        }
        let o = (n - m) / 2;
        for r in 0..n {
            let sr = o + nn_index(r, m, n);
            for c in 0..n {
                let sc = o + nn_index(c, m, n);
                out.cell_mut(r, c).copy_from_slice(f.cell(sr, sc));
            }
        }
    }
    Ok(out)
}

/// Source cells `[floor(i·src/dst), ceil((i+1)·src/dst))` covered by output
/// cell `i` when shrinking `src` cells onto `dst < src` cells.
fn footprint(i: usize, src: usize, dst: usize) -> std::ops::Range<usize> {
    let lo = i * src / dst;
    let hi = ((i + 1) * src).div_ceil(dst).min(src);
    lo..hi.max(lo + 1)
}

/// Scores every scale bin by skeleton correlation and softmax-weights them.
///
/// For bin `sᵢ` the BEV skeleton is rescaled by `sᵢ` ([`rescale_skeleton`]),
/// center-cropped to the map grid, and matched against the map skeleton
/// (channel 1 only) over `coarse_rotations` rotations and all translations.
/// The bin score is how far the best overlap count `o` stands above chance:
///
/// ```text
/// cᵢ = (o − B·ρ) / sqrt(B·ρ·(1 − ρ))
/// ```
///
/// with `B` the rescaled BEV skeleton mass and `ρ` the fraction of map cells
/// on the skeleton. Raw overlap favors the bin with the largest `B`; a plain
/// matched fraction `o / B` favors the smallest, where a handful of cells
/// land on skeleton somewhere by luck. Measuring the excess over the
/// binomial expectation keeps bins of very different mass comparable.
pub fn score_scales(
    f_bev_s: &SkeletonMask,
    f_map_s: &SkeletonMask,
    bins: &ScaleBins,
    coarse_rotations: usize,
    temperature: f64,
) -> Result<ScaleEstimate> {
    if coarse_rotations == 0 {
        return Err(Error::invalid("coarse rotation count must be positive"));
    }
    if !(temperature.is_finite() && temperature > 0.0) {
        return Err(Error::invalid(format!("temperature must be positive, got {temperature}")));
    }
    if f_bev_s.is_blank() || f_map_s.is_blank() {
        return Ok(ScaleEstimate::uniform(bins));
    }
    let map1 = f_map_s.grid().select_channel(1);
    let side = map1.height().min(map1.width());
    let bev1 = f_bev_s.grid().select_channel(1);
    let n_cells = (map1.height() * map1.width()) as f64;
    let rho = map1.values().iter().sum::<f64>() / n_cells;
    let var_m = (map1.values().iter().map(|v| v * v).sum::<f64>() / n_cells - rho * rho).max(0.0);

    let scores: Vec<f64> = bins
        .values
        .par_iter()
        .map(|&s| -> Result<f64> {
            let mut scaled = rescale_skeleton(&bev1, s)?;
            if scaled.height() > side {
                scaled = scaled.center_crop(side)?;
            }
            let mass: f64 = scaled.values().iter().sum();
            let spread = mass * var_m;
            if mass <= SKELETON_EPS || spread <= 0.0 {
                return Ok(0.0);
            }
            let vol = score_volume(&map1, &scaled, coarse_rotations)?;
            let overlap = vol.max() * (scaled.height() * scaled.width()) as f64;
            Ok((overlap - mass * rho) / spread.sqrt())
        })
        .collect::<Result<_>>()?;
    ScaleEstimate::from_scores(bins, scores, temperature)
}
