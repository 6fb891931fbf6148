//! 2D ray-cast LiDAR simulation against a town raster.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::town::{Overlay, TownMap};
use super::{rng_for, Stream, BASE_MPP};
use crate::{Error, PointCloud, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LidarParams {
    pub n_azimuth: usize,
    pub max_range: f64,
    /// Elevation samples per wall hit.
    pub vertical_samples: usize,
    pub fov_up_deg: f64,
    pub fov_down_deg: f64,
    /// Standard deviation of Gaussian range noise, meters.
    pub range_noise: f64,
    /// Sensor offset ahead of the vehicle center, meters.
    pub sensor_forward: f64,
    pub sensor_height: f64,
}

impl Default for LidarParams {
    fn default() -> Self {
        LidarParams {
            n_azimuth: 720,
            max_range: 100.0,
            vertical_samples: 8,
            fov_up_deg: 15.0,
            fov_down_deg: 25.0,
            range_noise: 0.03,
            sensor_forward: 1.3,
            sensor_height: 2.5,
        }
    }
}

impl LidarParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.n_azimuth > 0
            && self.vertical_samples > 0
            && self.max_range.is_finite()
            && self.max_range > 0.0
            && (0.0..90.0).contains(&self.fov_up_deg)
            && (0.0..90.0).contains(&self.fov_down_deg)
            && self.range_noise.is_finite()
            && self.range_noise >= 0.0
            && self.sensor_forward.is_finite()
            && self.sensor_height.is_finite()
            && self.sensor_height > 0.0;
        if !ok {
            return Err(Error::invalid(format!("invalid LiDAR parameters: {self:?}")));
        }
        Ok(())
    }
}

/// Vehicle pose in world meters; `heading` is measured from `+x` towards
/// `+y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldPose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl WorldPose {
    /// Sensor position in world meters.
    pub fn sensor(&self, params: &LidarParams) -> (f64, f64) {
        let (s, c) = self.heading.sin_cos();
        (self.x + params.sensor_forward * c, self.y + params.sensor_forward * s)
    }
}

/// Distance along a ray to the first occupied cell and that cell's height.
fn cast(town: &TownMap, overlay: &Overlay, ox: f64, oy: f64, dx: f64, dy: f64, max_range: f64) -> Option<(f64, f64)> {
    let (mut row, mut col) = TownMap::cell_of(ox, oy);
    let step_c: i64 = if dx > 0.0 { 1 } else { -1 };
    let step_r: i64 = if dy > 0.0 { 1 } else { -1 };
    let n = town.side() as i64;
    // distance to the next vertical / horizontal cell boundary, computed from
    // the boundary coordinate each time so no error accumulates
    let t_col = |col: i64| {
        if dx == 0.0 {
            f64::INFINITY
        } else {
            let edge = if dx > 0.0 { col + 1 } else { col } as f64 * BASE_MPP;
            (edge - ox) / dx
        }
    };
    let t_row = |row: i64| {
        if dy == 0.0 {
            f64::INFINITY
        } else {
            let edge = if dy > 0.0 { row + 1 } else { row } as f64 * BASE_MPP;
            (edge - oy) / dy
        }
    };
    loop {
        let (tc, tr) = (t_col(col), t_row(row));
        let t = if tc < tr {
            col += step_c;
            tc
        } else {
            row += step_r;
            tr
        };
        if t > max_range || row < -1 || col < -1 || row > n || col > n {
            return None;
        }
        if let Some(h) = town.obstacle(row, col, overlay) {
            return Some((t, h));
        }
    }
}

/// Simulated scan in the sensor frame.
pub fn simulate_lidar(town: &TownMap, ego: &WorldPose, params: &LidarParams, seed: u64) -> Result<PointCloud> {
    simulate_lidar_with(town, &Overlay::from_objects(&town.dynamic_objects), ego, params, seed)
}

pub(crate) fn simulate_lidar_with(
    town: &TownMap,
    overlay: &Overlay,
    ego: &WorldPose,
    params: &LidarParams,
    seed: u64,
) -> Result<PointCloud> {
    params.validate()?;
    if ![ego.x, ego.y, ego.heading].iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidPose("ego pose must be finite".into()));
    }
    let (sx, sy) = ego.sensor(params);
    for (x, y) in [(ego.x, ego.y), (sx, sy)] {
        let (r, c) = TownMap::cell_of(x, y);
        if town.obstacle(r, c, overlay).is_some() {
            return Err(Error::InvalidPose(format!("ego at ({x:.2}, {y:.2}) is inside an obstacle")));
        }
    }
    let mut rng = rng_for(seed, Stream::Lidar);
    let noise = (params.range_noise > 0.0)
        .then(|| Normal::new(0.0, params.range_noise).expect("validated noise"));
    let up = params.fov_up_deg.to_radians().tan();
    let down = params.fov_down_deg.to_radians().tan();
    let m = params.vertical_samples;
    let mut points = Vec::with_capacity(params.n_azimuth * m);
    for i in 0..params.n_azimuth {
        let a = std::f64::consts::TAU * i as f64 / params.n_azimuth as f64;
        let (sa, ca) = a.sin_cos();
        let (sw, cw) = (ego.heading + a).sin_cos();
        match cast(town, overlay, sx, sy, cw, sw, params.max_range) {
            Some((r, h)) => {
                let top = (h - params.sensor_height).min(r * up);
                let bottom = (-params.sensor_height).max(-r * down);
                if bottom > top {
                    continue;
                }
                for k in 0..m {
                    let z = if m == 1 {
                        bottom
                    } else {
                        bottom + (top - bottom) * k as f64 / (m - 1) as f64
                    };
                    let rr = r + noise.map_or(0.0, |n| n.sample(&mut rng));
                    points.push([(rr * ca) as f32, (rr * sa) as f32, z as f32]);
                }
            }
            None => {
                let r = params.max_range;
                points.push([(r * ca) as f32, (r * sa) as f32, -params.sensor_height as f32]);
            }
        }
    }
    PointCloud::new(points)
}
