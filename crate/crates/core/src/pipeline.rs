//! End-to-end localization of one scan inside one map patch.

use crate::bev::{bev_skeleton, encode_bev, voxelize, BevFeature};
use crate::config::LocalizerConfig;
use crate::grid::{Grid2D, SkeletonMask};
use crate::map::{map_features, map_skeleton, MapPatch};
use crate::matcher::{estimate_pose, fuse_probability, score_volume, ProbabilityVolume, ScoreVolume};
use crate::scale::{make_bins, rescale_bev, rescale_skeleton, score_scales, ScaleEstimate};
use crate::{Error, PointCloud, Pose, Result};

/// Map-side encodings, reusable across scans matched against the same patch.
#[derive(Debug, Clone)]
pub struct EncodedMap {
    pub features: Grid2D,
    pub skeleton: SkeletonMask,
}

pub fn encode_map(patch: &MapPatch, cfg: &LocalizerConfig) -> Result<EncodedMap> {
    Ok(EncodedMap {
        features: map_features(patch, cfg.encoder.map_stride, cfg.encoder.channels)?,
        skeleton: map_skeleton(patch, cfg.encoder.map_stride)?,
    })
}

/// Scan-side encodings.
#[derive(Debug, Clone)]
pub struct EncodedScan {
    pub bev: BevFeature,
    pub skeleton: SkeletonMask,
}

/// Drops returns at or beyond `max_range` horizontally.
pub fn filter_returns(cloud: &PointCloud, max_range: f64) -> PointCloud {
    let kept = cloud
        .points()
        .iter()
        .filter(|p| (p[0] as f64).hypot(p[1] as f64) < max_range)
        .copied()
        .collect();
    PointCloud::new(kept).expect("subset of a valid cloud")
}

pub fn encode_scan(scan: &PointCloud, cfg: &LocalizerConfig, seed: u64) -> Result<EncodedScan> {
    let cloud = filter_returns(scan, cfg.encoder.max_return_range);
    let pillars = voxelize(&cloud, &cfg.voxel, seed)?;
    let bev = encode_bev(&pillars, cfg.encoder.channels)?;
    let skeleton = bev_skeleton(&bev)?;
    Ok(EncodedScan { bev, skeleton })
}

/// Result of one localization.
#[derive(Debug, Clone)]
pub struct Localization {
    /// Estimated sensor pose in map-grid cells.
    pub pose: Pose,
    pub confidence: f64,
    pub scale: ScaleEstimate,
    pub probability: ProbabilityVolume,
}

impl Localization {
    /// Grayscale PNG of the maximum-over-rotations probability, linearly
    /// stretched so the most likely cell is white.
    pub fn heatmap_png(&self) -> Result<Vec<u8>> {
        let p = &self.probability;
        let plane = p.max_over_rotations();
        let peak = plane.iter().copied().fold(0.0, f64::max);
        let scale = if peak > 0.0 { 255.0 / peak } else { 0.0 };
        let pixels: Vec<u8> = plane.iter().map(|&v| (v * scale).round().clamp(0.0, 255.0) as u8).collect();
        let img = image::GrayImage::from_raw(p.width() as u32, p.height() as u32, pixels)
            .ok_or_else(|| Error::invalid("heatmap dimensions do not match the volume"))?;
        let mut out = std::io::Cursor::new(Vec::new());
        img.write_to(&mut out, image::ImageFormat::Png)
            .map_err(|e| Error::invalid(format!("cannot encode heatmap: {e}")))?;
        Ok(out.into_inner())
    }
}

/// Which matching operands feed the fusion, overriding the config toggles.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Full,
    FeatureOnly,
    SkeletonOnly,
}

fn fixed_unit_scale(cfg: &LocalizerConfig) -> Result<ScaleEstimate> {
    let bins = make_bins(cfg.scale.min, cfg.scale.max, cfg.scale.bins)?;
    let mut weights = vec![0.0; bins.len()];
    let unit = bins.nearest(1.0);
    weights[unit] = 1.0;
    Ok(ScaleEstimate {
        weights,
        scores: vec![0.0; bins.len()],
        scale: 1.0,
        low_confidence: false,
    })
}

fn window(g: &Grid2D, side: usize) -> Result<Grid2D> {
    if g.height() > side {
        g.center_crop(side)
    } else {
        Ok(g.clone())
    }
}

/// Skeleton score volume on the indicator channel, rescaled so a placement
/// that puts every BEV skeleton cell on map skeleton scores `weight`.
///
/// The two-channel form of [`crate::matcher::skeleton_score_volume`] also
/// rewards agreement on the background channel, which is largest wherever
/// the map has the least structure and drowns the line overlap; matching the
/// indicator channel alone scores only the structure both sides see.
pub fn skeleton_overlap_volume(map: &SkeletonMask, bev: &Grid2D, n_rot: usize, weight: f64) -> Result<ScoreVolume> {
    let b = bev.select_channel(1);
    let vol = score_volume(&map.grid().select_channel(1), &b, n_rot)?;
    let mass: f64 = b.values().iter().sum();
    if mass <= 0.0 {
        return Ok(ScoreVolume::zeros_like(&vol));
    }
    Ok(vol.scaled(weight * (b.height() * b.width()) as f64 / mass))
}

/// Runs scale estimation, both matching stages and fusion on pre-encoded
/// operands.
pub fn localize_encoded(scan: &EncodedScan, map: &EncodedMap, cfg: &LocalizerConfig) -> Result<Localization> {
    cfg.validate()?;
    let stages = &cfg.stages;
    let scale = if stages.scale_alignment {
        let bins = make_bins(cfg.scale.min, cfg.scale.max, cfg.scale.bins)?;
        score_scales(&scan.skeleton, &map.skeleton, &bins, cfg.scale.coarse_rotations, cfg.scale.temperature)?
    } else {
        fixed_unit_scale(cfg)?
    };
    let s = scale.scale;
    let side = cfg
        .matcher
        .bev_window
        .min(map.features.height())
        .min(map.features.width());
    let n_rot = cfg.matcher.n_rot;

    let omega = if stages.feature_matching {
        let f = if stages.scale_augmentation {
            rescale_bev(scan.bev.features(), s)?
        } else {
            scan.bev.features().clone()
        };
        Some(score_volume(&map.features, &window(&f, side)?, n_rot)?.scaled(cfg.matcher.feature_weight))
    } else {
        None
    };
    let psi = if stages.skeleton_matching {
        let f = rescale_skeleton(scan.skeleton.grid(), s)?;
        Some(skeleton_overlap_volume(&map.skeleton, &window(&f, side)?, n_rot, cfg.matcher.skeleton_weight)?)
    } else {
        None
    };
    let (omega, psi) = match (omega, psi) {
        (Some(o), Some(p)) => (o, p),
        (Some(o), None) => {
            let z = ScoreVolume::zeros_like(&o);
            (o, z)
        }
        (None, Some(p)) => (ScoreVolume::zeros_like(&p), p),
        (None, None) => return Err(Error::invalid("no matching stage enabled")),
    };
    let probability = fuse_probability(&omega, &psi)?;
    let (pose, confidence) = estimate_pose(&probability);
    Ok(Localization {
        pose,
        confidence,
        scale,
        probability,
    })
}

impl LocalizerConfig {
    /// Copy with the stage toggles forced by `stage`.
    pub fn with_stage(&self, stage: Stage) -> LocalizerConfig {
        let mut c = self.clone();
        match stage {
            Stage::Full => {}
            Stage::FeatureOnly => {
                c.stages.feature_matching = true;
                c.stages.skeleton_matching = false;
            }
            Stage::SkeletonOnly => {
                c.stages.feature_matching = false;
                c.stages.skeleton_matching = true;
            }
        }
        c
    }
}

/// Encodes both inputs and localizes the scan in the patch.
pub fn localize(scan: &PointCloud, patch: &MapPatch, cfg: &LocalizerConfig, seed: u64) -> Result<Localization> {
    let s = encode_scan(scan, cfg, seed)?;
    let m = encode_map(patch, cfg)?;
    localize_encoded(&s, &m, cfg)
}
