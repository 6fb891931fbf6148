//! Procedural Manhattan-grid towns rasterized at a fixed base resolution.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{rng_for, Stream, BASE_MPP};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TownParams {
    /// Side length of the square world, meters.
    pub world_size: f64,
    /// Distance between consecutive parallel road center lines, meters.
    pub road_pitch: [f64; 2],
    pub road_width: [f64; 2],
    /// Probability that a lot carries a building.
    pub building_density: f64,
    /// Lots are split until no side exceeds this, meters.
    pub max_lot_size: f64,
    /// Clearance between a lot boundary and its building, meters.
    pub setback: [f64; 2],
    pub building_height: [f64; 2],
}

impl Default for TownParams {
    fn default() -> Self {
        TownParams {
            world_size: 800.0,
            road_pitch: [45.0, 110.0],
            road_width: [8.0, 16.0],
            building_density: 0.85,
            max_lot_size: 32.0,
            setback: [1.5, 4.5],
            building_height: [4.0, 30.0],
        }
    }
}

fn check_range(name: &str, r: [f64; 2], min_allowed: f64) -> Result<()> {
    if !(r[0].is_finite() && r[1].is_finite() && r[0] >= min_allowed && r[0] <= r[1]) {
        return Err(Error::invalid(format!("{name} range {r:?} is invalid")));
    }
    Ok(())
}

impl TownParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.world_size.is_finite() && self.world_size >= 50.0 && self.world_size <= 20_000.0) {
            return Err(Error::invalid(format!("world size {} must lie in [50, 20000] m", self.world_size)));
        }
        check_range("road pitch", self.road_pitch, 1.0)?;
        check_range("road width", self.road_width, 1.0)?;
        check_range("setback", self.setback, 0.0)?;
        check_range("building height", self.building_height, f64::MIN_POSITIVE)?;
        if self.road_width[1] >= self.road_pitch[0] {
            return Err(Error::invalid("road width must be smaller than the road pitch"));
        }
        if !(0.0..=1.0).contains(&self.building_density) {
            return Err(Error::invalid(format!("building density {} must lie in [0, 1]", self.building_density)));
        }
        if !(self.max_lot_size.is_finite() && self.max_lot_size > 2.0 * self.setback[1] + 1.0) {
            return Err(Error::invalid("max lot size must exceed twice the largest setback"));
        }
        Ok(())
    }
}

/// Axis-aligned building footprint in world meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Building {
    pub min: [f64; 2],
    pub max: [f64; 2],
    pub height: f64,
    pub roof: [u8; 3],
}

/// A car-sized oriented rectangle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicObject {
    pub center: [f64; 2],
    /// Width and length, meters.
    pub size: [f64; 2],
    /// Direction of the length axis, radians.
    pub heading: f64,
    pub height: f64,
    pub color: [u8; 3],
}

impl DynamicObject {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (s, c) = self.heading.sin_cos();
        let dx = x - self.center[0];
        let dy = y - self.center[1];
        let along = dx * c + dy * s;
        let across = -dx * s + dy * c;
        along.abs() <= self.size[1] / 2.0 && across.abs() <= self.size[0] / 2.0
    }

    fn radius(&self) -> f64 {
        self.size[0].hypot(self.size[1]) / 2.0
    }
}

/// Road running along one axis: `axis == 0` is a vertical road at a fixed
/// x, `axis == 1` a horizontal road at a fixed y.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Road {
    pub axis: u8,
    pub center: f64,
    pub width: f64,
}

/// Rasterized town. Cell `(row, col)` covers world `x ∈ [col·r, (col+1)·r)`,
/// `y ∈ [row·r, (row+1)·r)` with `r` the base resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct TownMap {
    params: TownParams,
    side: usize,
    /// 0 for no building, otherwise building index + 1.
    building_id: Vec<u32>,
    road: Vec<bool>,
    buildings: Vec<Building>,
    roads: Vec<Road>,
    /// Objects present in both the map render and the scan.
    pub dynamic_objects: Vec<DynamicObject>,
}

/// Sparse raster of extra obstacles (cars) at base resolution.
#[derive(Debug, Default, Clone)]
pub(crate) struct Overlay {
    cells: std::collections::BTreeMap<(i64, i64), (f64, [u8; 3])>,
}

impl Overlay {
    pub(crate) fn from_objects<'a>(objects: impl IntoIterator<Item = &'a DynamicObject>) -> Self {
        let mut cells = std::collections::BTreeMap::new();
        for o in objects {
            let r = o.radius();
            let c0 = ((o.center[0] - r) / BASE_MPP).floor() as i64;
            let c1 = ((o.center[0] + r) / BASE_MPP).ceil() as i64;
            let r0 = ((o.center[1] - r) / BASE_MPP).floor() as i64;
            let r1 = ((o.center[1] + r) / BASE_MPP).ceil() as i64;
            for row in r0..=r1 {
                for col in c0..=c1 {
                    let x = (col as f64 + 0.5) * BASE_MPP;
                    let y = (row as f64 + 0.5) * BASE_MPP;
                    if o.contains(x, y) {
                        cells.insert((row, col), (o.height, o.color));
                    }
                }
            }
        }
        Overlay { cells }
    }

    fn get(&self, row: i64, col: i64) -> Option<(f64, [u8; 3])> {
        if self.cells.is_empty() {
            return None;
        }
        self.cells.get(&(row, col)).copied()
    }
}

pub(crate) const GROUND_RGB: [u8; 3] = [128, 132, 112];
pub(crate) const ROAD_RGB: [u8; 3] = [96, 96, 102];

impl TownMap {
    pub fn params(&self) -> &TownParams {
        &self.params
    }

    /// Cells per side.
    pub fn side(&self) -> usize {
        self.side
    }

    pub fn resolution(&self) -> f64 {
        BASE_MPP
    }

    pub fn world_size(&self) -> f64 {
        self.side as f64 * BASE_MPP
    }

    pub fn buildings(&self) -> &[Building] {
        &self.buildings
    }

    pub fn roads(&self) -> &[Road] {
        &self.roads
    }

    fn idx(&self, row: i64, col: i64) -> Option<usize> {
        let n = self.side as i64;
        (row >= 0 && col >= 0 && row < n && col < n).then(|| (row * n + col) as usize)
    }

    pub fn is_occupied(&self, row: i64, col: i64) -> bool {
        self.idx(row, col).is_some_and(|i| self.building_id[i] != 0)
    }

    pub fn is_road(&self, row: i64, col: i64) -> bool {
        self.idx(row, col).is_some_and(|i| self.road[i])
    }

    /// Building height of a cell, 0 when free.
    pub fn height(&self, row: i64, col: i64) -> f64 {
        match self.idx(row, col).map(|i| self.building_id[i]) {
            Some(id) if id != 0 => self.buildings[id as usize - 1].height,
            _ => 0.0,
        }
    }

    /// Occupancy raster, row-major.
    pub fn occupancy(&self) -> Vec<bool> {
        self.building_id.iter().map(|&id| id != 0).collect()
    }

    pub fn cell_of(x: f64, y: f64) -> (i64, i64) {
        ((y / BASE_MPP).floor() as i64, (x / BASE_MPP).floor() as i64)
    }

    /// Obstacle height at a cell including overlay objects.
    pub(crate) fn obstacle(&self, row: i64, col: i64, overlay: &Overlay) -> Option<f64> {
        let h = self.height(row, col);
        if h > 0.0 {
            return Some(h);
        }
        overlay.get(row, col).map(|(h, _)| h)
    }

    /// Top-down color of a cell including overlay objects.
    pub(crate) fn color(&self, row: i64, col: i64, overlay: &Overlay) -> [u8; 3] {
        let Some(i) = self.idx(row, col) else {
            return GROUND_RGB;
        };
        let id = self.building_id[i];
        if id != 0 {
            return self.buildings[id as usize - 1].roof;
        }
        if let Some((_, c)) = overlay.get(row, col) {
            return c;
        }
        if self.road[i] {
            ROAD_RGB
        } else {
            GROUND_RGB
        }
    }
}

fn uniform(rng: &mut ChaCha8Rng, r: [f64; 2]) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.random_range(r[0]..r[1])
    }
}

/// Road center lines along one axis.
fn road_lines(rng: &mut ChaCha8Rng, p: &TownParams, axis: u8) -> Vec<Road> {
    let mut roads = Vec::new();
    let mut c = rng.random_range(0.0..p.road_pitch[1].min(p.world_size));
    while c < p.world_size {
        roads.push(Road {
            axis,
            center: c,
            width: uniform(rng, p.road_width),
        });
        c += uniform(rng, p.road_pitch);
    }
    roads
}

/// Roof colors are kept well away from the ground and road luminance so the
/// overhead edges are dominated by building outlines.
fn roof_color(rng: &mut ChaCha8Rng) -> [u8; 3] {
    let light = rng.random_bool(0.5);
    let base: f64 = if light {
        rng.random_range(190.0..245.0)
    } else {
        rng.random_range(20.0..60.0)
    };
    let tint = |rng: &mut ChaCha8Rng| (base + rng.random_range(-12.0..12.0)).clamp(0.0, 255.0) as u8;
    [tint(rng), tint(rng), tint(rng)]
}

fn split_lots(rng: &mut ChaCha8Rng, p: &TownParams, min: [f64; 2], max: [f64; 2], out: &mut Vec<([f64; 2], [f64; 2])>) {
    let w = max[0] - min[0];
    let h = max[1] - min[1];
    if w <= p.max_lot_size && h <= p.max_lot_size {
        out.push((min, max));
        return;
    }
    let axis = if w >= h { 0 } else { 1 };
    let len = if axis == 0 { w } else { h };
    let cut = (min[axis] + len * rng.random_range(0.3..0.7)).round();
    let mut a_max = max;
    a_max[axis] = cut;
    let mut b_min = min;
    b_min[axis] = cut;
    split_lots(rng, p, min, a_max, out);
    split_lots(rng, p, b_min, max, out);
}

/// Generates a town; identical `(seed, params)` give identical towns.
pub fn generate_town(seed: u64, params: &TownParams) -> Result<TownMap> {
    params.validate()?;
    let mut rng = rng_for(seed, Stream::Town);
    let side = (params.world_size / BASE_MPP).round() as usize;
    let world = side as f64 * BASE_MPP;
    let verticals = road_lines(&mut rng, params, 0);
    let horizontals = road_lines(&mut rng, params, 1);

    let mut road = vec![false; side * side];
    for r in verticals.iter().chain(&horizontals) {
        let lo = ((r.center - r.width / 2.0) / BASE_MPP).round().max(0.0) as usize;
        let hi = (((r.center + r.width / 2.0) / BASE_MPP).round() as usize).min(side);
        for a in lo..hi {
            for b in 0..side {
                let (row, col) = if r.axis == 0 { (b, a) } else { (a, b) };
                road[row * side + col] = true;
            }
        }
    }

    // block edges: road sides plus the world boundary
    let edges = |roads: &[Road]| {
        let mut e = vec![(f64::NEG_INFINITY, 0.0)];
        for r in roads {
            e.push((r.center - r.width / 2.0, r.center + r.width / 2.0));
        }
        e.push((world, f64::INFINITY));
        e
    };
    let xs = edges(&verticals);
    let ys = edges(&horizontals);

    let mut buildings = Vec::new();
    let mut lots = Vec::new();
    for xw in xs.windows(2) {
        for yw in ys.windows(2) {
            let min = [xw[0].1, yw[0].1];
            let max = [xw[1].0, yw[1].0];
            if max[0] - min[0] < 4.0 || max[1] - min[1] < 4.0 {
                continue;
            }
            lots.clear();
            split_lots(&mut rng, params, min, max, &mut lots);
            for &(lmin, lmax) in &lots {
                let inset: [f64; 4] = std::array::from_fn(|_| uniform(&mut rng, params.setback));
                let place = rng.random_bool(params.building_density);
                let height = uniform(&mut rng, params.building_height);
                let roof = roof_color(&mut rng);
                let bmin = [lmin[0] + inset[0], lmin[1] + inset[1]];
                let bmax = [lmax[0] - inset[2], lmax[1] - inset[3]];
                if !place || bmax[0] - bmin[0] < 3.0 || bmax[1] - bmin[1] < 3.0 {
                    continue;
                }
                buildings.push(Building {
                    min: bmin,
                    max: bmax,
                    height,
                    roof,
                });
            }
        }
    }

    let mut building_id = vec![0u32; side * side];
    for (k, b) in buildings.iter().enumerate() {
        let c0 = (b.min[0] / BASE_MPP - 0.5).ceil().max(0.0) as usize;
        let c1 = ((b.max[0] / BASE_MPP - 0.5).floor() as i64).min(side as i64 - 1);
        let r0 = (b.min[1] / BASE_MPP - 0.5).ceil().max(0.0) as usize;
        let r1 = ((b.max[1] / BASE_MPP - 0.5).floor() as i64).min(side as i64 - 1);
        if c1 < 0 || r1 < 0 {
            continue;
        }
        for row in r0..=r1 as usize {
            for col in c0..=c1 as usize {
                building_id[row * side + col] = k as u32 + 1;
            }
        }
    }

    let mut roads = verticals;
    roads.extend(horizontals);
    Ok(TownMap {
        params: params.clone(),
        side,
        building_id,
        road,
        buildings,
        roads,
        dynamic_objects: Vec::new(),
    })
}
