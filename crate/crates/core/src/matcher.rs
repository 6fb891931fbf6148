//! Exhaustive rotation × translation template matching.
//!
//! For each of `n_rot` rotations the BEV operand is rotated about its center
//! and linearly cross-correlated against the map operand with zero-padded
//! real FFTs; channel products are summed in the frequency domain, so each
//! rotation costs one forward transform per channel and a single inverse.
//!
//! Entry `(i, a, b)` of a score volume is
//! `(1 / XY) Σ_p map(η(p)) · rot_i(bev)(p)` where the BEV anchor cell
//! `((H-1)/2, (W-1)/2)` (integer division) lands on map cell `(a, b)`.
//! For even-sized BEV grids the geometric center sits half a cell past the
//! anchor; the volume carries that `center_offset` so poses come out in
//! map-grid coordinates of the BEV center.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use rayon::prelude::*;

use crate::fft::Plan2d;
use crate::geometry::wrap_finite;
use crate::grid::{Grid2D, SkeletonMask};
use crate::{Error, Pose, Result};

/// Largest map side accepted by [`brute_force_score_volume`].
pub const BRUTE_FORCE_MAX_SIDE: usize = 64;

/// Rotation angle for slice `i` of `n`: `-π + 2πi/n`.
pub fn rotation_angle(i: usize, n: usize) -> f64 {
    -PI + TAU * i as f64 / n as f64
}

pub fn rotation_angles(n: usize) -> Vec<f64> {
    (0..n).map(|i| rotation_angle(i, n)).collect()
}

/// Nearest rotation slice for a heading, with wraparound.
pub fn rotation_index(theta: f64, n: usize) -> usize {
    let k = ((theta + PI) * n as f64 / TAU).round() as i64;
    k.rem_euclid(n as i64) as usize
}

/// Exact lattice rotation by `k` quarter turns: one quarter turn sends cell
/// `(i, j)` to `(j, H-1-i)`.
fn quarter_turns(f: &Grid2D, k: i64) -> Grid2D {
    let k = k.rem_euclid(4);
    if k == 0 {
        return f.clone();
    }
    let n = f.height();
    let ch = f.channels();
    let mut out = Grid2D::zeros(n, n, ch).expect("non-empty source").with_cell_size(f.cell_size());
    for r in 0..n {
        for c in 0..n {
            let (sr, sc) = match k {
                1 => (n - 1 - c, r),
                2 => (n - 1 - r, n - 1 - c),
                _ => (c, n - 1 - r),
            };
            out.cell_mut(r, c).copy_from_slice(f.cell(sr, sc));
        }
    }
    out
}

/// Inverse-mapped nearest-neighbor rotation by `alpha`; sources outside the
/// grid read as zero.
fn rotate_nn(f: &Grid2D, alpha: f64) -> Grid2D {
    if alpha == 0.0 {
        return f.clone();
    }
    let n = f.height();
    let ch = f.channels();
    let center = (n as f64 - 1.0) / 2.0;
    let (s, c) = alpha.sin_cos();
    let mut out = Grid2D::zeros(n, n, ch).expect("non-empty source").with_cell_size(f.cell_size());
    for r in 0..n {
        let y = r as f64 - center;
        for col in 0..n {
            let x = col as f64 - center;
            let sc = (center + (x * c + y * s)).round();
            let sr = (center + (y * c - x * s)).round();
            if sc < 0.0 || sr < 0.0 || sc >= n as f64 || sr >= n as f64 {
                continue;
            }
            out.cell_mut(r, col).copy_from_slice(f.cell(sr as usize, sc as usize));
        }
    }
    out
}

fn check_square(f: &Grid2D) -> Result<()> {
    if !f.is_square() {
        return Err(Error::invalid(format!(
            "rotation needs a square grid, got {}x{}",
            f.height(),
            f.width()
        )));
    }
    Ok(())
}

/// Rotates a square grid counterclockwise (in column/row coordinates) by
/// `theta` about its center. Multiples of π/2 are exact lattice
/// permutations; other angles are decomposed into quarter turns plus a
/// nearest-neighbor residual.
pub fn rotate_feature(f: &Grid2D, theta: f64) -> Result<Grid2D> {
    check_square(f)?;
    if !theta.is_finite() {
        return Err(Error::invalid("rotation angle must be finite"));
    }
    let mut k = (theta / FRAC_PI_2).floor() as i64;
    let mut alpha = theta - k as f64 * FRAC_PI_2;
    if alpha < 1e-12 {
        alpha = 0.0;
    } else if FRAC_PI_2 - alpha < 1e-12 {
        alpha = 0.0;
        k += 1;
    }
    Ok(quarter_turns(&rotate_nn(f, alpha), k))
}

/// Rotation for slice `i` of `n`. When `n` is a multiple of four the
/// quarter-turn part is taken from the index so that slices `n/4` apart are
/// exact lattice permutations of each other.
pub(crate) fn rotate_slice(f: &Grid2D, i: usize, n: usize) -> Grid2D {
    if n % 4 == 0 {
        let q = (n / 4) as i64;
        let t = i as i64 - (n / 2) as i64;
        let k = t.div_euclid(q);
        let j = t.rem_euclid(q);
        let alpha = TAU * j as f64 / n as f64;
        quarter_turns(&rotate_nn(f, alpha), k)
    } else {
        rotate_feature(f, rotation_angle(i, n)).expect("caller checked squareness")
    }
}

/// Correlation scores over `n_rot × H_m × W_m` pose hypotheses.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVolume {
    n_rot: usize,
    height: usize,
    width: usize,
    scores: Vec<f64>,
    angles: Vec<f64>,
    center_offset: (f64, f64),
}

impl ScoreVolume {
    /// Wraps raw scores laid out rotation-major, then row, then column.
    pub fn new(n_rot: usize, height: usize, width: usize, scores: Vec<f64>) -> Result<Self> {
        if n_rot == 0 || height == 0 || width == 0 {
            return Err(Error::invalid("score volume dimensions must be positive"));
        }
        if scores.len() != n_rot * height * width {
            return Err(Error::invalid(format!(
                "score volume {n_rot}x{height}x{width} needs {} entries, got {}",
                n_rot * height * width,
                scores.len()
            )));
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::invalid("score volume entries must be finite"));
        }
        Ok(ScoreVolume {
            n_rot,
            height,
            width,
            scores,
            angles: rotation_angles(n_rot),
            center_offset: (0.0, 0.0),
        })
    }

    pub fn zeros_like(other: &ScoreVolume) -> Self {
        ScoreVolume {
            scores: vec![0.0; other.scores.len()],
            ..other.clone()
        }
    }

    pub fn with_center_offset(mut self, offset: (f64, f64)) -> Self {
        self.center_offset = offset;
        self
    }

    pub fn n_rot(&self) -> usize {
        self.n_rot
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn rotation_angles(&self) -> &[f64] {
        &self.angles
    }

    /// `(row, column)` offset from a translation index to the BEV center.
    pub fn center_offset(&self) -> (f64, f64) {
        self.center_offset
    }

    pub fn get(&self, i: usize, row: usize, col: usize) -> f64 {
        self.scores[(i * self.height + row) * self.width + col]
    }

    pub fn slice(&self, i: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.scores[i * n..(i + 1) * n]
    }

    pub fn max(&self) -> f64 {
        self.scores.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Every score multiplied by `w`.
    pub fn scaled(mut self, w: f64) -> Self {
        self.scores.iter_mut().for_each(|s| *s *= w);
        self
    }

    fn same_shape(&self, other: &ScoreVolume) -> bool {
        self.n_rot == other.n_rot
            && self.height == other.height
            && self.width == other.width
            && self.angles == other.angles
            && self.center_offset == other.center_offset
    }
}

fn check_operands(map: &Grid2D, bev: &Grid2D, n_rot: usize) -> Result<()> {
    if n_rot == 0 {
        return Err(Error::invalid("n_rot must be positive"));
    }
    check_square(bev)?;
    if map.channels() != bev.channels() {
        return Err(Error::invalid(format!(
            "channel mismatch: map has {}, BEV has {}",
            map.channels(),
            bev.channels()
        )));
    }
    if bev.height() > map.height() || bev.width() > map.width() {
        return Err(Error::invalid(format!(
            "BEV grid {}x{} exceeds map grid {}x{}",
            bev.height(),
            bev.width(),
            map.height(),
            map.width()
        )));
    }
    Ok(())
}

fn anchor(n: usize) -> usize {
    (n - 1) / 2
}

fn center_offset_of(bev: &Grid2D) -> (f64, f64) {
    let off = |n: usize| (n as f64 - 1.0) / 2.0 - anchor(n) as f64;
    (off(bev.height()), off(bev.width()))
}

/// Feature score volume Ω via batched FFT cross-correlation.
pub fn score_volume(map: &Grid2D, bev: &Grid2D, n_rot: usize) -> Result<ScoreVolume> {
    check_operands(map, bev, n_rot)?;
    let (hm, wm) = (map.height(), map.width());
    let (hb, wb) = (bev.height(), bev.width());
    let ch = map.channels();
    let plan = Plan2d::new((hm + hb - 1).next_power_of_two(), (wm + wb - 1).next_power_of_two());

    let live: Vec<usize> = (0..ch)
        .filter(|&k| map.values().iter().skip(k).step_by(ch).any(|&v| v != 0.0))
        .collect();
    let map_spectra: Vec<_> = live
        .iter()
        .map(|&k| plan.forward_strided(map.values(), hm, wm, ch, k))
        .collect();

    let (ar, ac) = (anchor(hb), anchor(wb));
    let norm = 1.0 / (hb * wb) as f64;
    let (rows, cols) = (plan.rows(), plan.cols());
    let slices: Vec<Vec<f64>> = (0..n_rot)
        .into_par_iter()
        .map(|i| {
            let rotated = rotate_slice(bev, i, n_rot);
            let mut acc = vec![rustfft::num_complex::Complex::new(0.0, 0.0); plan.spectrum_len()];
            for (&k, ms) in live.iter().zip(&map_spectra) {
                if rotated.values().iter().skip(k).step_by(ch).all(|&v| v == 0.0) {
                    continue;
                }
                let bs = plan.forward_strided(rotated.values(), hb, wb, ch, k);
                for ((a, m), b) in acc.iter_mut().zip(ms).zip(&bs) {
                    *a += m * b.conj();
                }
            }
            let corr = plan.inverse(acc);
            let mut out = Vec::with_capacity(hm * wm);
            for a in 0..hm {
                let tr = (a + rows - ar) % rows;
                for b in 0..wm {
                    let tc = (b + cols - ac) % cols;
                    out.push(corr[tr * cols + tc] * norm);
                }
            }
            out
        })
        .collect();

    Ok(ScoreVolume {
        n_rot,
        height: hm,
        width: wm,
        scores: slices.concat(),
        angles: rotation_angles(n_rot),
        center_offset: center_offset_of(bev),
    })
}

/// Skeleton score volume Ψ: the same correlation on two-channel skeleton
/// operands.
pub fn skeleton_score_volume(map_s: &SkeletonMask, bev_scaled: &Grid2D, n_rot: usize) -> Result<ScoreVolume> {
    if bev_scaled.channels() != 2 {
        return Err(Error::invalid(format!(
            "skeleton operand must have 2 channels, got {}",
            bev_scaled.channels()
        )));
    }
    score_volume(map_s.grid(), bev_scaled, n_rot)
}

/// Direct nested-loop evaluation of the score volume; the reference the FFT
/// path is checked against.
pub fn brute_force_score_volume(map: &Grid2D, bev: &Grid2D, n_rot: usize) -> Result<ScoreVolume> {
    if map.height() > BRUTE_FORCE_MAX_SIDE || map.width() > BRUTE_FORCE_MAX_SIDE {
        return Err(Error::Guard(format!(
            "map grid {}x{} exceeds {BRUTE_FORCE_MAX_SIDE}",
            map.height(),
            map.width()
        )));
    }
    check_operands(map, bev, n_rot)?;
    let (hm, wm) = (map.height() as isize, map.width() as isize);
    let (hb, wb) = (bev.height(), bev.width());
    let (ar, ac) = (anchor(hb) as isize, anchor(wb) as isize);
    let ch = map.channels();
    let norm = 1.0 / (hb * wb) as f64;
    let mut scores = Vec::with_capacity(n_rot * (hm * wm) as usize);
    for i in 0..n_rot {
        let rotated = rotate_slice(bev, i, n_rot);
        for a in 0..hm {
            for b in 0..wm {
                let mut sum = 0.0;
                for r in 0..hb {
                    let mr = a + r as isize - ar;
                    if mr < 0 || mr >= hm {
                        continue;
                    }
                    for c in 0..wb {
                        let mc = b + c as isize - ac;
                        if mc < 0 || mc >= wm {
                            continue;
                        }
                        let mv = map.cell(mr as usize, mc as usize);
                        let bv = rotated.cell(r, c);
                        for k in 0..ch {
                            sum += mv[k] * bv[k];
                        }
                    }
                }
                scores.push(sum * norm);
            }
        }
    }
    Ok(ScoreVolume::new(n_rot, hm as usize, wm as usize, scores)?.with_center_offset(center_offset_of(bev)))
}

/// Normalized probabilities over the same pose hypotheses as a score volume.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVolume {
    n_rot: usize,
    height: usize,
    width: usize,
    probs: Vec<f64>,
    angles: Vec<f64>,
    center_offset: (f64, f64),
}

impl ProbabilityVolume {
    pub fn new(n_rot: usize, height: usize, width: usize, probs: Vec<f64>) -> Result<Self> {
        if n_rot == 0 || height == 0 || width == 0 || probs.len() != n_rot * height * width {
            return Err(Error::invalid("probability volume shape does not match its data"));
        }
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::invalid("probabilities must lie in [0, 1]"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-6 {
            return Err(Error::invalid(format!("probabilities sum to {total}, not 1")));
        }
        Ok(ProbabilityVolume {
            n_rot,
            height,
            width,
            probs,
            angles: rotation_angles(n_rot),
            center_offset: (0.0, 0.0),
        })
    }

    pub fn with_center_offset(mut self, offset: (f64, f64)) -> Self {
        self.center_offset = offset;
        self
    }

    pub fn n_rot(&self) -> usize {
        self.n_rot
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn rotation_angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn center_offset(&self) -> (f64, f64) {
        self.center_offset
    }

    pub fn get(&self, i: usize, row: usize, col: usize) -> f64 {
        self.probs[(i * self.height + row) * self.width + col]
    }

    /// Splits a linear index into `(rotation, row, column)`.
    pub fn unravel(&self, idx: usize) -> (usize, usize, usize) {
        let plane = self.height * self.width;
        (idx / plane, (idx % plane) / self.width, idx % self.width)
    }

    pub fn pose_at(&self, i: usize, row: usize, col: usize) -> Pose {
        Pose::new(
            col as f64 + self.center_offset.1,
            row as f64 + self.center_offset.0,
            self.angles[i],
        )
        .expect("finite grid coordinates")
    }

    /// Linear index of the hypothesis nearest to `pose`: position rounded to
    /// the nearest cell, heading to the nearest rotation slice (with
    /// wraparound).
    pub fn snap(&self, pose: &Pose) -> Result<usize> {
        let row = (pose.v() - self.center_offset.0).round();
        let col = (pose.u() - self.center_offset.1).round();
        if row < 0.0 || col < 0.0 || row >= self.height as f64 || col >= self.width as f64 {
            return Err(Error::invalid(format!(
                "pose ({:.2}, {:.2}) lies outside the {}x{} volume",
                pose.u(),
                pose.v(),
                self.width,
                self.height
            )));
        }
        let i = rotation_index(wrap_finite(pose.theta()), self.n_rot);
        Ok((i * self.height + row as usize) * self.width + col as usize)
    }

    /// Maximum over rotations for each translation, row-major.
    pub fn max_over_rotations(&self) -> Vec<f64> {
        let plane = self.height * self.width;
        let mut out = vec![0.0f64; plane];
        for chunk in self.probs.chunks_exact(plane) {
            for (o, &p) in out.iter_mut().zip(chunk) {
                *o = o.max(p);
            }
        }
        out
    }
}

/// `P = softmax(Ω + Ψ)` over every pose hypothesis, max-subtracted.
pub fn fuse_probability(omega: &ScoreVolume, psi: &ScoreVolume) -> Result<ProbabilityVolume> {
    if !omega.same_shape(psi) {
        return Err(Error::invalid(format!(
            "score volumes differ in shape: {}x{}x{} vs {}x{}x{}",
            omega.n_rot, omega.height, omega.width, psi.n_rot, psi.height, psi.width
        )));
    }
    let sum: Vec<f64> = omega.scores.iter().zip(&psi.scores).map(|(a, b)| a + b).collect();
    let max = sum.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut probs: Vec<f64> = sum.iter().map(|s| (s - max).exp()).collect();
    let z: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= z);
    Ok(ProbabilityVolume {
        n_rot: omega.n_rot,
        height: omega.height,
        width: omega.width,
        probs,
        angles: omega.angles.clone(),
        center_offset: omega.center_offset,
    })
}

/// Maximum-likelihood pose; ties go to the lowest linear index
/// (rotation-major, then row, then column). Returns the pose and its
/// probability.
pub fn estimate_pose(p: &ProbabilityVolume) -> (Pose, f64) {
    let mut best = 0;
    for (i, &v) in p.probs.iter().enumerate() {
        if v > p.probs[best] {
            best = i;
        }
    }
    let (i, r, c) = p.unravel(best);
    (p.pose_at(i, r, c), p.probs[best])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_grid(rng: &mut ChaCha8Rng, h: usize, w: usize, ch: usize) -> Grid2D {
        let v = (0..h * w * ch).map(|_| rng.random_range(-1.0..1.0)).collect();
        Grid2D::from_vec(h, w, ch, v).unwrap()
    }

    #[test]
    fn rotation_basics() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = random_grid(&mut rng, 7, 7, 2);
        assert_eq!(rotate_feature(&g, 0.0).unwrap(), g);
        let q = rotate_feature(&g, FRAC_PI_2).unwrap();
        for i in 0..7 {
            for j in 0..7 {
                assert_eq!(q.cell(j, 6 - i), g.cell(i, j));
            }
        }
        let mut r = g.clone();
        for _ in 0..4 {
            r = rotate_feature(&r, FRAC_PI_2).unwrap();
        }
        assert_eq!(r, g);
        assert!(rotate_feature(&random_grid(&mut rng, 3, 4, 1), 0.3).is_err());
    }

    #[test]
    fn general_rotation_matches_pose_convention() {
        // A single hot cell one column right of center should move towards +row
        // under a positive rotation.
        let mut g = Grid2D::zeros(21, 21, 1).unwrap();
        for r in 9..12 {
            for c in 14..17 {
                g.set(r, c, 0, 1.0);
            }
        }
        let r = rotate_feature(&g, 0.5).unwrap();
        let (u, v) = crate::apply_pose((5.0, 0.0), &Pose::new(10.0, 10.0, 0.5).unwrap());
        let (mut n, mut su, mut sv) = (0.0, 0.0, 0.0);
        for row in 0..21 {
            for col in 0..21 {
                if r.get(row, col, 0) == 1.0 {
                    n += 1.0;
                    su += col as f64;
                    sv += row as f64;
                }
            }
        }
        assert!(n >= 5.0);
        assert!((su / n - u).abs() < 0.75 && (sv / n - v).abs() < 0.75);
    }

    #[test]
    fn slice_rotation_agrees_with_angle_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = random_grid(&mut rng, 9, 9, 1);
        for n in [1usize, 3, 4, 8] {
            for i in 0..n {
                let a = rotate_slice(&g, i, n);
                let b = rotate_feature(&g, rotation_angle(i, n)).unwrap();
                assert_eq!(a, b, "slice {i} of {n}");
            }
        }
    }

    #[test]
    fn zero_bev_gives_zero_scores() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let map = random_grid(&mut rng, 16, 16, 2);
        let bev = Grid2D::zeros(8, 8, 2).unwrap();
        let s = score_volume(&map, &bev, 4).unwrap();
        assert!(s.scores().iter().all(|&v| v == 0.0));
        let b = brute_force_score_volume(&map, &bev, 4).unwrap();
        assert!(b.scores().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn operand_checks() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let map = random_grid(&mut rng, 16, 16, 2);
        assert!(score_volume(&map, &random_grid(&mut rng, 8, 8, 3), 4).is_err());
        assert!(score_volume(&map, &random_grid(&mut rng, 20, 20, 2), 4).is_err());
        let big = random_grid(&mut rng, 65, 65, 1);
        assert!(matches!(
            brute_force_score_volume(&big, &random_grid(&mut rng, 4, 4, 1), 1),
            Err(Error::Guard(_))
        ));
    }

    #[test]
    fn single_cell_bev_is_scaled_map() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let map = random_grid(&mut rng, 10, 12, 1);
        let bev = Grid2D::from_vec(1, 1, 1, vec![2.5]).unwrap();
        let b = brute_force_score_volume(&map, &bev, 3).unwrap();
        let f = score_volume(&map, &bev, 3).unwrap();
        for i in 0..3 {
            for a in 0..10 {
                for c in 0..12 {
                    assert_eq!(b.get(i, a, c), map.get(a, c, 0) * 2.5);
                    assert!((f.get(i, a, c) - map.get(a, c, 0) * 2.5).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn embedded_bev_peaks_at_center_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let bev = random_grid(&mut rng, 9, 9, 3);
        let mut map = Grid2D::zeros(25, 25, 3).unwrap();
        for r in 0..9 {
            for c in 0..9 {
                map.cell_mut(8 + r, 8 + c).copy_from_slice(bev.cell(r, c));
            }
        }
        let s = score_volume(&map, &bev, 4).unwrap();
        let best = s.scores().iter().copied().fold(f64::NEG_INFINITY, f64::max);
        // rotation index 2 of 4 is θ = 0; anchor 4 lands on map cell 12
        assert!((s.get(2, 12, 12) - best).abs() < 1e-12);
        let p = fuse_probability(&s, &ScoreVolume::zeros_like(&s)).unwrap();
        let (pose, _) = estimate_pose(&p);
        assert_eq!((pose.u(), pose.v(), pose.theta()), (12.0, 12.0, 0.0));
    }

    #[test]
    fn even_bev_reports_half_cell_center() {
        let bev = Grid2D::from_vec(2, 2, 1, vec![1.0; 4]).unwrap();
        let map = Grid2D::zeros(6, 6, 1).unwrap();
        let s = score_volume(&map, &bev, 1).unwrap();
        assert_eq!(s.center_offset(), (0.5, 0.5));
    }

    #[test]
    fn fuse_examples() {
        let omega = ScoreVolume::new(2, 2, 2, vec![3.0; 8]).unwrap();
        let psi = ScoreVolume::zeros_like(&omega);
        let p = fuse_probability(&omega, &psi).unwrap();
        assert!(p.probs().iter().all(|&v| (v - 0.125).abs() < 1e-15));

        let mut s = vec![0.0; 8];
        s[5] = 100.0;
        let p = fuse_probability(&ScoreVolume::new(2, 2, 2, s).unwrap(), &psi).unwrap();
        assert!(p.probs()[5] >= 1.0 - 1e-30);

        let other = ScoreVolume::new(1, 2, 2, vec![0.0; 4]).unwrap();
        assert!(fuse_probability(&omega, &other).is_err());
    }

    #[test]
    fn estimate_pose_examples() {
        let uniform = ProbabilityVolume::new(4, 8, 8, vec![1.0 / 256.0; 256]).unwrap();
        let (pose, conf) = estimate_pose(&uniform);
        assert_eq!((pose.u(), pose.v()), (0.0, 0.0));
        assert_eq!(pose.theta(), wrap_finite(rotation_angle(0, 4)));
        assert_eq!(conf, 1.0 / 256.0);

        let mut probs = vec![0.0; 256];
        probs[(2 * 8 + 5) * 8 + 7] = 1.0;
        let one_hot = ProbabilityVolume::new(4, 8, 8, probs).unwrap();
        let (pose, conf) = estimate_pose(&one_hot);
        assert_eq!((pose.u(), pose.v(), pose.theta()), (7.0, 5.0, rotation_angle(2, 4)));
        assert_eq!(conf, 1.0);
    }

    #[test]
    fn snap_wraps_heading() {
        let p = ProbabilityVolume::new(8, 4, 4, vec![1.0 / 128.0; 128]).unwrap();
        let near_pi = Pose::new(1.2, 2.9, PI - 0.01).unwrap();
        assert_eq!(p.snap(&near_pi).unwrap(), (3 * 4 + 1));
        assert!(p.snap(&Pose::new(4.6, 0.0, 0.0).unwrap()).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn fft_matches_brute_force(seed in any::<u64>(), n_rot in prop::sample::select(vec![1usize, 3, 4, 8])) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let hm = rng.random_range(6..20);
            let wm = rng.random_range(6..20);
            let hb = rng.random_range(1..=hm.min(wm));
            let map = random_grid(&mut rng, hm, wm, 2);
            let bev = random_grid(&mut rng, hb, hb, 2);
            let f = score_volume(&map, &bev, n_rot).unwrap();
            let b = brute_force_score_volume(&map, &bev, n_rot).unwrap();
            prop_assert_eq!(f.center_offset(), b.center_offset());
            for (x, y) in f.scores().iter().zip(b.scores()) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }

        #[test]
        fn quarter_turn_permutes_rotation_axis(seed in any::<u64>(), n_rot in prop::sample::select(vec![4usize, 8, 16])) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let map = random_grid(&mut rng, 14, 14, 2);
            let bev = random_grid(&mut rng, 7, 7, 2);
            let turned = rotate_feature(&bev, FRAC_PI_2).unwrap();
            let a = score_volume(&map, &bev, n_rot).unwrap();
            let b = score_volume(&map, &turned, n_rot).unwrap();
            let q = n_rot / 4;
            for i in 0..n_rot {
                prop_assert_eq!(b.slice(i), a.slice((i + q) % n_rot));
            }
        }

        #[test]
        fn translation_equivariance(seed in any::<u64>(), dr in -4isize..=4, dc in -4isize..=4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let bev = random_grid(&mut rng, 7, 7, 1);
            let embed = |or: isize, oc: isize| {
                let mut m = Grid2D::zeros(30, 30, 1).unwrap();
                for r in 0..7 {
                    for c in 0..7 {
                        m.set((or + r as isize) as usize, (oc + c as isize) as usize, 0, bev.get(r, c, 0));
                    }
                }
                m
            };
            let argmax = |s: &ScoreVolume| {
                let p = fuse_probability(s, &ScoreVolume::zeros_like(s)).unwrap();
                let (pose, _) = estimate_pose(&p);
                (pose.v(), pose.u())
            };
            let a = argmax(&score_volume(&embed(11, 11), &bev, 4).unwrap());
            let b = argmax(&score_volume(&embed(11 + dr, 11 + dc), &bev, 4).unwrap());
            prop_assert_eq!((b.0 - a.0, b.1 - a.1), (dr as f64, dc as f64));
        }
    }
}
