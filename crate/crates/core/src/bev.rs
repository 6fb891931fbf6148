//! Point cloud → pillar grid → bird's-eye-view feature grid and skeleton.
//!
//! The BEV grid is indexed `(row, column)` with the column following ego `x`
//! (forward) and the row following ego `y` (left). The ego origin sits at the
//! geometric grid center `((H-1)/2, (W-1)/2)` for the symmetric default range.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::grid::{Grid2D, SkeletonMask};
use crate::thinning::zhang_suen;
use crate::{Error, PointCloud, Result};

/// Number of handcrafted BEV channels.
pub const BEV_CHANNELS: usize = 8;

/// Variance floor used when standardizing feature channels.
pub const VARIANCE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VoxelConfig {
    pub pillar_size: [f64; 3],
    pub range_x: [f64; 2],
    pub range_y: [f64; 2],
    pub range_z: [f64; 2],
    pub max_points_per_voxel: usize,
}

impl Default for VoxelConfig {
    fn default() -> Self {
        VoxelConfig {
            pillar_size: [2.0, 2.0, 30.0],
            range_x: [-100.0, 100.0],
            range_y: [-100.0, 100.0],
            range_z: [-10.0, 20.0],
            max_points_per_voxel: 128,
        }
    }
}

impl VoxelConfig {
    pub fn validate(&self) -> Result<()> {
        let ranges = [self.range_x, self.range_y, self.range_z];
        for (axis, (r, &size)) in ranges.iter().zip(&self.pillar_size).enumerate() {
            if !(r[0].is_finite() && r[1].is_finite() && r[0] < r[1]) {
                return Err(Error::invalid(format!("voxel range on axis {axis} must satisfy min < max")));
            }
            if !(size.is_finite() && size > 0.0) {
                return Err(Error::invalid(format!("pillar size on axis {axis} must be positive")));
            }
            let cells = (r[1] - r[0]) / size;
            if (cells - cells.round()).abs() > 1e-9 * cells.max(1.0) {
                return Err(Error::invalid(format!(
                    "range on axis {axis} is not a whole number of {size} m cells"
                )));
            }
        }
        if self.max_points_per_voxel == 0 {
            return Err(Error::invalid("max_points_per_voxel must be positive"));
        }
        Ok(())
    }

    pub fn rows(&self) -> usize {
        ((self.range_y[1] - self.range_y[0]) / self.pillar_size[1]).round() as usize
    }

    pub fn cols(&self) -> usize {
        ((self.range_x[1] - self.range_x[0]) / self.pillar_size[0]).round() as usize
    }

    fn max_range(&self) -> f64 {
        [self.range_x[0], self.range_x[1], self.range_y[0], self.range_y[1]]
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Points bucketed into vertical pillars.
#[derive(Debug, Clone, PartialEq)]
pub struct PillarGrid {
    height: usize,
    width: usize,
    cell_size: f64,
    max_range: f64,
    origin: (f64, f64),
    pillars: Vec<Vec<[f32; 3]>>,
}

impl PillarGrid {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn pillar(&self, row: usize, col: usize) -> &[[f32; 3]] {
        &self.pillars[row * self.width + col]
    }

    pub fn total_points(&self) -> usize {
        self.pillars.iter().map(Vec::len).sum()
    }

    pub fn occupied(&self) -> usize {
        self.pillars.iter().filter(|p| !p.is_empty()).count()
    }
}

/// Buckets in-range points into pillars by floor division; out-of-range
/// points are dropped and over-full pillars are subsampled uniformly with a
/// generator seeded by `seed`.
pub fn voxelize(cloud: &PointCloud, cfg: &VoxelConfig, seed: u64) -> Result<PillarGrid> {
    cfg.validate()?;
    let (h, w) = (cfg.rows(), cfg.cols());
    let mut pillars = vec![Vec::new(); h * w];
    for p in cloud.points() {
        let (x, y, z) = (p[0] as f64, p[1] as f64, p[2] as f64);
        if !(x >= cfg.range_x[0] && x < cfg.range_x[1])
            || !(y >= cfg.range_y[0] && y < cfg.range_y[1])
            || !(z >= cfg.range_z[0] && z < cfg.range_z[1])
        {
            continue;
        }
        let col = (((x - cfg.range_x[0]) / cfg.pillar_size[0]).floor() as usize).min(w - 1);
        let row = (((y - cfg.range_y[0]) / cfg.pillar_size[1]).floor() as usize).min(h - 1);
        pillars[row * w + col].push(*p);
    }
    let cap = cfg.max_points_per_voxel;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for pillar in pillars.iter_mut().filter(|p| p.len() > cap) {
        let mut keep = sample(&mut rng, pillar.len(), cap).into_vec();
        keep.sort_unstable();
        *pillar = keep.into_iter().map(|i| pillar[i]).collect();
    }
    Ok(PillarGrid {
        height: h,
        width: w,
        cell_size: cfg.pillar_size[0],
        max_range: cfg.max_range(),
        origin: (cfg.range_x[0], cfg.range_y[0]),
        pillars,
    })
}

/// Standardized BEV feature channels plus the raw occupancy they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct BevFeature {
    features: Grid2D,
    occupancy: Vec<bool>,
}

impl BevFeature {
    pub fn features(&self) -> &Grid2D {
        &self.features
    }

    pub fn occupancy(&self) -> &[bool] {
        &self.occupancy
    }

    pub fn height(&self) -> usize {
        self.features.height()
    }

    pub fn width(&self) -> usize {
        self.features.width()
    }
}

/// Raw per-cell statistics, before standardization. Channel order:
/// occupancy, ln(1+count), min z, max z, mean z, z span, normalized radial
/// distance of the cell center, reserved zero.
pub fn bev_raw_channels(grid: &PillarGrid, channels: usize) -> Result<Grid2D> {
    if channels < BEV_CHANNELS {
        return Err(Error::invalid(format!(
            "BEV encoder needs at least {BEV_CHANNELS} channels, got {channels}"
        )));
    }
    let mut out = Grid2D::zeros(grid.height, grid.width, channels)?.with_cell_size(Some(grid.cell_size));
    for r in 0..grid.height {
        for c in 0..grid.width {
            let pts = grid.pillar(r, c);
            if pts.is_empty() {
                continue;
            }
            let n = pts.len() as f64;
            let (mut lo, mut hi, mut sum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
            for p in pts {
                let z = p[2] as f64;
                lo = lo.min(z);
                hi = hi.max(z);
                sum += z;
            }
            let cx = grid.origin.0 + (c as f64 + 0.5) * grid.cell_size;
            let cy = grid.origin.1 + (r as f64 + 0.5) * grid.cell_size;
            let cell = out.cell_mut(r, c);
            cell[0] = 1.0;
            cell[1] = n.ln_1p();
            cell[2] = lo;
            cell[3] = hi;
            cell[4] = sum / n;
            cell[5] = hi - lo;
            cell[6] = cx.hypot(cy) / grid.max_range;
        }
    }
    Ok(out)
}

/// Encodes a pillar grid into `channels` standardized feature channels.
///
/// Each channel is shifted and scaled to zero mean and unit variance, with
/// statistics taken over the whole grid so occupied cells stand out against
/// empty ground.
pub fn encode_bev(grid: &PillarGrid, channels: usize) -> Result<BevFeature> {
    let mut features = bev_raw_channels(grid, channels)?;
    let occupancy = grid.pillars.iter().map(|p| !p.is_empty()).collect();
    if grid.occupied() > 0 {
        standardize_channels(&mut features);
    }
    Ok(BevFeature { features, occupancy })
}

/// In-place per-channel standardization over all cells with the variance
/// floor applied.
pub(crate) fn standardize_channels(g: &mut Grid2D) {
    let ch = g.channels();
    let cells = g.height() * g.width();
    for k in 0..ch {
        let (mut sum, mut sq) = (0.0, 0.0);
        for v in g.values().iter().skip(k).step_by(ch) {
            sum += v;
            sq += v * v;
        }
        let mean = sum / cells as f64;
        let var = (sq / cells as f64 - mean * mean).max(VARIANCE_FLOOR);
        let inv = 1.0 / var.sqrt();
        for v in g.values_mut().iter_mut().skip(k).step_by(ch) {
            *v = (*v - mean) * inv;
        }
    }
}

/// Skeleton of the occupied cells: binarize occupancy, thin to a fixpoint and
/// soften into clamped probabilities.
pub fn bev_skeleton(f: &BevFeature) -> Result<SkeletonMask> {
    let thin = zhang_suen(&f.occupancy, f.height(), f.width());
    SkeletonMask::from_indicator(f.height(), f.width(), &thin)
}
