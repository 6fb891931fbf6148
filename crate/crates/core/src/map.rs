//! Overhead raster ingestion and handcrafted map features.

use std::f64::consts::PI;
use std::io::Cursor;
use std::path::Path;

use image::ImageFormat;

use crate::bev::standardize_channels;
use crate::grid::{Grid2D, SkeletonMask};
use crate::pgm::{self, Graymap};
use crate::thinning::{close3, zhang_suen};
use crate::{Error, Result};

pub const MAP_CHANNELS: usize = 8;

/// Square 8-bit overhead raster, grayscale or RGB. Ground sample distance is
/// deliberately not part of the type.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MapPatch {
    side: usize,
    channels: usize,
    pixels: Vec<u8>,
}

impl MapPatch {
    pub fn new(side: usize, channels: usize, pixels: Vec<u8>) -> Result<Self> {
        if side == 0 || !(channels == 1 || channels == 3) {
            return Err(Error::invalid(format!("map patch needs side > 0 and 1 or 3 channels, got {side}/{channels}")));
        }
        if pixels.len() != side * side * channels {
            return Err(Error::invalid(format!(
                "map patch {side}x{side}x{channels} needs {} bytes, got {}",
                side * side * channels,
                pixels.len()
            )));
        }
        Ok(MapPatch { side, channels, pixels })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    /// Rec. 601 luminance in `[0, 1]`, row-major.
    pub fn luminance(&self) -> Vec<f64> {
        match self.channels {
            1 => self.pixels.iter().map(|&p| p as f64 / 255.0).collect(),
            _ => self
                .pixels
                .chunks_exact(3)
                .map(|px| {
                    let num = 299 * px[0] as u32 + 587 * px[1] as u32 + 114 * px[2] as u32;
                    num as f64 / 255_000.0
                })
                .collect(),
        }
    }

    /// Decodes PNG or PGM bytes, detected by magic number.
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let (w, h, channels, pixels) = if bytes.starts_with(b"\x89PNG") {
            let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)
                .map_err(|e| Error::format("map", e.to_string()))?;
            let (w, h) = (img.width() as usize, img.height() as usize);
            if img.color().has_color() {
                (w, h, 3, img.into_rgb8().into_raw())
            } else {
                (w, h, 1, img.into_luma8().into_raw())
            }
        } else if bytes.starts_with(b"P5") || bytes.starts_with(b"P2") {
            let g = pgm::decode(bytes)?;
            (g.width, g.height, 1, g.pixels)
        } else {
            return Err(Error::format("map", "not a PNG or PGM image"));
        };
        if w != h {
            return Err(Error::format("map", format!("map patch must be square, got {w}x{h}")));
        }
        MapPatch::new(w, channels, pixels).map_err(|e| Error::format("map", e.to_string()))
    }

    pub fn to_png(&self) -> Result<Vec<u8>> {
        let color = if self.channels == 3 {
            image::ExtendedColorType::Rgb8
        } else {
            image::ExtendedColorType::L8
        };
        let mut out = Cursor::new(Vec::new());
        image::write_buffer_with_format(
            &mut out,
            &self.pixels,
            self.side as u32,
            self.side as u32,
            color,
            ImageFormat::Png,
        )
        .map_err(|e| Error::invalid(e.to_string()))?;
        Ok(out.into_inner())
    }

    pub fn to_pgm(&self) -> Vec<u8> {
        let pixels = self.luminance().iter().map(|l| (l * 255.0).round() as u8).collect();
        pgm::encode(&Graymap { width: self.side, height: self.side, pixels })
    }
}

/// Reads a PNG or PGM map patch from disk.
pub fn load_map(path: &Path) -> Result<MapPatch> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    MapPatch::decode(&bytes).map_err(|e| match e {
        Error::InputFormat { reason, .. } => Error::format(path.display().to_string(), reason),
        other => other,
    })
}

/// 3×3 Sobel gradients with replicated borders.
pub(crate) fn sobel(lum: &[f64], side: usize) -> (Vec<f64>, Vec<f64>) {
    let at = |r: isize, c: isize| {
        let r = r.clamp(0, side as isize - 1) as usize;
        let c = c.clamp(0, side as isize - 1) as usize;
        lum[r * side + c]
    };
    let mut gx = vec![0.0; side * side];
    let mut gy = vec![0.0; side * side];
    for r in 0..side as isize {
        for c in 0..side as isize {
            let i = r as usize * side + c as usize;
            gx[i] = (at(r - 1, c + 1) + 2.0 * at(r, c + 1) + at(r + 1, c + 1))
                - (at(r - 1, c - 1) + 2.0 * at(r, c - 1) + at(r + 1, c - 1));
            gy[i] = (at(r + 1, c - 1) + 2.0 * at(r + 1, c) + at(r + 1, c + 1))
                - (at(r - 1, c - 1) + 2.0 * at(r - 1, c) + at(r - 1, c + 1));
        }
    }
    (gx, gy)
}

/// Otsu's threshold over a 256-bin histogram. `None` when all values are
/// equal. Values strictly above the returned threshold are foreground.
pub fn otsu_threshold(values: &[f64]) -> Option<f64> {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if !(hi - lo > 1e-12 * hi.abs().max(1.0)) {
        return None;
    }
    const BINS: usize = 256;
    let width = (hi - lo) / BINS as f64;
    let mut hist = [0u64; BINS];
    for &v in values {
        let b = (((v - lo) / width) as usize).min(BINS - 1);
        hist[b] += 1;
    }
    let total = values.len() as f64;
    let sum_all: f64 = hist.iter().enumerate().map(|(i, &n)| i as f64 * n as f64).sum();
    let (mut w0, mut sum0) = (0.0, 0.0);
    let (mut best, mut best_k) = (-1.0, 0);
    for (k, &n) in hist.iter().enumerate().take(BINS - 1) {
        w0 += n as f64;
        sum0 += k as f64 * n as f64;
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let m0 = sum0 / w0;
        let m1 = (sum_all - sum0) / w1;
        let between = w0 * w1 * (m0 - m1) * (m0 - m1);
        if between > best {
            best = between;
            best_k = k;
        }
    }
    Some(lo + (best_k + 1) as f64 * width)
}

/// Unstandardized per-cell map statistics. Channel order: mean luminance,
/// luminance std, mean Sobel magnitude, edge energy oriented at 0°, 45°,
/// 90°, 135°, reserved zero.
pub fn map_raw_channels(m: &MapPatch, stride: usize, channels: usize) -> Result<Grid2D> {
    let d = m.side();
    if stride == 0 || d % stride != 0 {
        return Err(Error::invalid(format!("patch side {d} is not divisible by stride {stride}")));
    }
    if channels < MAP_CHANNELS {
        return Err(Error::invalid(format!("map encoder needs at least {MAP_CHANNELS} channels, got {channels}")));
    }
    let lum = m.luminance();
    let (gx, gy) = sobel(&lum, d);
    let n = d / stride;
    let mut out = Grid2D::zeros(n, n, channels)?;
    let area = (stride * stride) as f64;
    for r in 0..n {
        for c in 0..n {
            let mut acc = [0.0f64; 7];
            for y in r * stride..(r + 1) * stride {
                for x in c * stride..(c + 1) * stride {
                    let i = y * d + x;
                    let mag = gx[i].hypot(gy[i]);
                    acc[0] += lum[i];
                    acc[1] += lum[i] * lum[i];
                    acc[2] += mag;
                    if mag > 0.0 {
                        // edge direction is perpendicular to the gradient
                        let orient = (gy[i].atan2(gx[i]) + PI / 2.0).rem_euclid(PI);
                        let bin = ((orient / (PI / 4.0)).round() as usize) % 4;
                        acc[3 + bin] += mag;
                    }
                }
            }
            let mean = acc[0] / area;
            let cell = out.cell_mut(r, c);
            cell[0] = mean;
            cell[1] = (acc[1] / area - mean * mean).max(0.0).sqrt();
            cell[2] = acc[2] / area;
            for k in 0..4 {
                cell[3 + k] = acc[3 + k] / area;
            }
        }
    }
    Ok(out)
}

/// Standardized map feature grid, `side / stride` cells on a side.
pub fn map_features(m: &MapPatch, stride: usize, channels: usize) -> Result<Grid2D> {
    let mut g = map_raw_channels(m, stride, channels)?;
    standardize_channels(&mut g);
    Ok(g)
}

/// Border replicated around the edge raster before thinning, so structure
/// running off the patch is not eaten back from the patch edge.
const THIN_PAD: usize = 4;

/// Edge skeleton at pixel resolution: Sobel magnitude above Otsu's threshold,
/// closed with a 3×3 element and thinned.
pub fn edge_skeleton_pixels(m: &MapPatch) -> Vec<bool> {
    let d = m.side();
    let (gx, gy) = sobel(&m.luminance(), d);
    let mag: Vec<f64> = gx.iter().zip(&gy).map(|(x, y)| x.hypot(*y)).collect();
    let Some(t) = otsu_threshold(&mag) else {
        return vec![false; d * d];
    };
    let edges: Vec<bool> = mag.iter().map(|&v| v > t).collect();
    let closed = close3(&edges, d, d);
    let p = d + 2 * THIN_PAD;
    let mut padded = vec![false; p * p];
    for r in 0..p {
        let sr = r.saturating_sub(THIN_PAD).min(d - 1);
        for c in 0..p {
            let sc = c.saturating_sub(THIN_PAD).min(d - 1);
            padded[r * p + c] = closed[sr * d + sc];
        }
    }
    let thin = zhang_suen(&padded, p, p);
    let mut out = Vec::with_capacity(d * d);
    for r in 0..d {
        let row = (r + THIN_PAD) * p + THIN_PAD;
        out.extend_from_slice(&thin[row..row + d]);
    }
    out
}

/// Map skeleton mask at `side / stride` resolution (max-pooled).
pub fn map_skeleton(m: &MapPatch, stride: usize) -> Result<SkeletonMask> {
    let d = m.side();
    if stride == 0 || d % stride != 0 {
        return Err(Error::invalid(format!("patch side {d} is not divisible by stride {stride}")));
    }
    let px = edge_skeleton_pixels(m);
    let n = d / stride;
    let mut pooled = vec![false; n * n];
    for (i, _) in px.iter().enumerate().filter(|(_, &on)| on) {
        let (y, x) = (i / d, i % d);
        pooled[(y / stride) * n + x / stride] = true;
    }
    SkeletonMask::from_indicator(n, n, &pooled)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::SKELETON_EPS;

    fn gray(side: usize, f: impl Fn(usize, usize) -> u8) -> MapPatch {
        let px = (0..side * side).map(|i| f(i / side, i % side)).collect();
        MapPatch::new(side, 1, px).unwrap()
    }

    #[test]
    fn rec601_luminance_is_exact() {
        let red = MapPatch::new(1, 3, vec![255, 0, 0]).unwrap();
        assert_eq!(red.luminance(), vec![0.299]);
        let white = MapPatch::new(1, 3, vec![255, 255, 255]).unwrap();
        assert_eq!(white.luminance(), vec![1.0]);
    }

    #[test]
    fn png_decode_and_square_check() {
        let white = MapPatch::new(256, 3, vec![255; 256 * 256 * 3]).unwrap();
        let back = MapPatch::decode(&white.to_png().unwrap()).unwrap();
        assert!(back.luminance().iter().all(|&l| l == 1.0));
        assert_eq!(back.side(), 256);

        let mut buf = Cursor::new(Vec::new());
        image::write_buffer_with_format(&mut buf, &vec![0u8; 256 * 255], 256, 255, image::ExtendedColorType::L8, ImageFormat::Png).unwrap();
        assert!(matches!(MapPatch::decode(buf.get_ref()), Err(Error::InputFormat { .. })));
        assert!(MapPatch::decode(b"garbage").is_err());
    }

    #[test]
    fn pgm_decode_path() {
        let m = gray(4, |r, c| (r * 4 + c) as u8);
        assert_eq!(MapPatch::decode(&m.to_pgm()).unwrap(), m);
    }

    #[test]
    fn constant_image_has_no_edges() {
        let m = gray(32, |_, _| 90);
        let f = map_features(&m, 4, 8).unwrap();
        for k in 2..8 {
            assert!(f.channel(k).iter().all(|&v| v == 0.0), "channel {k}");
        }
        let s = map_skeleton(&m, 4).unwrap();
        assert!(s.probabilities().iter().all(|&p| p == SKELETON_EPS));
        assert_eq!(s.height(), 8);
    }

    #[test]
    fn vertical_step_puts_energy_in_90_degree_bin() {
        let m = gray(32, |_, c| if c < 16 { 20 } else { 220 });
        let raw = map_raw_channels(&m, 1, 8).unwrap();
        for r in 0..32 {
            for c in [15, 16] {
                let cell = raw.cell(r, c);
                assert!(cell[5] > 0.0);
                assert_eq!(cell[3], 0.0);
                assert_eq!(cell[4], 0.0);
                assert_eq!(cell[6], 0.0);
            }
        }
    }

    #[test]
    fn stride_one_keeps_dimensions_and_bad_stride_errors() {
        let m = gray(20, |r, c| ((r * 7 + c * 3) % 256) as u8);
        let f = map_features(&m, 1, 8).unwrap();
        assert_eq!((f.height(), f.width()), (20, 20));
        assert!(map_features(&m, 3, 8).is_err());
        assert!(map_skeleton(&m, 3).is_err());
        assert!(map_features(&m, 4, 7).is_err());
    }

    #[test]
    fn raw_features_translate_with_the_raster() {
        let base = |r: usize, c: usize| (((r * 13) ^ (c * 7)) % 251) as u8;
        let k = 3;
        let a = gray(40, base);
        let b = gray(40, |r, c| if c >= k { base(r, c - k) } else { base(r, 0) });
        let fa = map_raw_channels(&a, 1, 8).unwrap();
        let fb = map_raw_channels(&b, 1, 8).unwrap();
        for r in 1..39 {
            for c in 2..36 {
                assert_eq!(fa.cell(r, c), fb.cell(r, c + k));
            }
        }
    }

    #[test]
    fn otsu_splits_two_levels() {
        let vals: Vec<f64> = (0..100).map(|i| if i % 3 == 0 { 0.8 } else { 0.1 }).collect();
        let t = otsu_threshold(&vals).unwrap();
        assert!(0.1 <= t && t < 0.8);
        assert!(otsu_threshold(&[0.5; 10]).is_none());
    }

    #[test]
    fn thin_dark_line_skeleton_is_the_line() {
        let m = gray(32, |_, c| if c == 12 { 0 } else { 255 });
        let px = edge_skeleton_pixels(&m);
        for r in 0..32 {
            for c in 0..32 {
                assert_eq!(px[r * 32 + c], c == 12, "pixel ({r},{c})");
            }
        }
        let s = map_skeleton(&m, 1).unwrap();
        assert_eq!(s.indicator(), px);
    }
}
