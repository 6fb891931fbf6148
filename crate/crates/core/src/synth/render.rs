//! Scene sampling: ego pose, scan, and an augmented overhead patch with exact
//! ground truth.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::lidar::{simulate_lidar_with, LidarParams, WorldPose};
use super::town::{DynamicObject, Overlay, TownMap};
use super::{rng_for, Stream, BASE_MPP};
use crate::geometry::wrap_finite;
use crate::grid::Grid2D;
use crate::map::MapPatch;
use crate::{Error, PointCloud, Pose, Result};

/// How the patch scale `s` is drawn. A patch of side `d` pixels covers
/// `s · d · BASE_MPP` meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ScaleSampling {
    Fixed(f64),
    LogUniform([f64; 2]),
    Choice(Vec<f64>),
}

impl ScaleSampling {
    fn validate(&self) -> Result<()> {
        let ok = |s: f64| s.is_finite() && (0.5..=10.0).contains(&s);
        let valid = match self {
            ScaleSampling::Fixed(s) => ok(*s),
            ScaleSampling::LogUniform([a, b]) => ok(*a) && ok(*b) && a <= b,
            ScaleSampling::Choice(v) => !v.is_empty() && v.iter().all(|&s| ok(s)),
        };
        if !valid {
            return Err(Error::invalid(format!("scale sampling {self:?} must stay within [0.5, 10]")));
        }
        Ok(())
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            ScaleSampling::Fixed(s) => *s,
            ScaleSampling::LogUniform([a, b]) if a == b => *a,
            ScaleSampling::LogUniform([a, b]) => rng.random_range(a.ln()..b.ln()).exp(),
            ScaleSampling::Choice(v) => v[rng.random_range(0..v.len())],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentationParams {
    pub patch_size: usize,
    pub scale: ScaleSampling,
    /// Largest ego displacement from the patch center, as a fraction of the
    /// patch side, per axis.
    pub max_center_offset: f64,
    /// Patch rotation is drawn uniformly from `[-r, r]` degrees.
    pub rotation_range_deg: f64,
    /// Jitter of the ego heading about the road axis, degrees.
    pub heading_jitter_deg: f64,
    /// Inject cars present only in the map and cars present only in the scan.
    pub time_lag: bool,
    pub map_only_cars: usize,
    pub scan_only_cars: usize,
    /// Brightness offset drawn from `[-b, b]` (fraction of full scale).
    pub brightness_jitter: f64,
    /// Contrast factor drawn from `[1 - c, 1 + c]`.
    pub contrast_jitter: f64,
    /// Radius in pixels of each ground-truth skeleton stamp (0 = one pixel).
    pub skeleton_stamp_radius: usize,
    /// Fraction of the world kept clear of ego placement along each border.
    pub ego_margin: f64,
}

impl Default for AugmentationParams {
    fn default() -> Self {
        AugmentationParams {
            patch_size: 256,
            scale: ScaleSampling::Fixed(1.0),
            max_center_offset: 0.1,
            rotation_range_deg: 180.0,
            heading_jitter_deg: 5.0,
            time_lag: false,
            map_only_cars: 10,
            scan_only_cars: 10,
            brightness_jitter: 0.1,
            contrast_jitter: 0.15,
            skeleton_stamp_radius: 0,
            ego_margin: 0.2,
        }
    }
}

impl AugmentationParams {
    pub fn validate(&self) -> Result<()> {
        self.scale.validate()?;
        if !(self.patch_size == 256 || self.patch_size == 1024 || (16..=4096).contains(&self.patch_size)) {
            return Err(Error::invalid(format!("patch size {} out of range", self.patch_size)));
        }
        let frac = |v: f64, hi: f64| v.is_finite() && (0.0..=hi).contains(&v);
        if !frac(self.max_center_offset, 1.0)
            || !frac(self.rotation_range_deg, 180.0)
            || !frac(self.heading_jitter_deg, 180.0)
            || !frac(self.brightness_jitter, 1.0)
            || !frac(self.contrast_jitter, 1.0)
            || !frac(self.ego_margin, 0.45)
        {
            return Err(Error::invalid(format!("augmentation parameters out of range: {self:?}")));
        }
        Ok(())
    }
}

/// Scene bookkeeping beyond the core ground truth; stored in `meta.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneMeta {
    pub seed: u64,
    /// Sensor pose in patch pixel coordinates.
    pub gt_pose: Pose,
    /// Patch scale `s`: ground meters per patch pixel divided by the base
    /// resolution.
    pub gt_scale: f64,
    pub meters_per_pixel: f64,
    pub patch_size: usize,
    pub ego: WorldPose,
    /// Rotation of the patch axes against the world axes, radians.
    pub patch_rotation: f64,
    /// World position of the patch center, meters.
    pub patch_center: [f64; 2],
    pub augmentation: AugmentationParams,
    pub lidar: LidarParams,
}

impl SceneMeta {
    /// Parses and sanity-checks a `meta.json` document.
    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let meta: SceneMeta = serde_json::from_slice(bytes).map_err(|e| Error::format("meta.json", e.to_string()))?;
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(meta.gt_scale) || !positive(meta.meters_per_pixel) || meta.patch_size == 0 {
            return Err(Error::format("meta.json", "scale, resolution and patch size must be positive"));
        }
        if !(meta.patch_rotation.is_finite() && meta.patch_center.iter().all(|c| c.is_finite())) {
            return Err(Error::format("meta.json", "patch placement must be finite"));
        }
        meta.augmentation
            .validate()
            .and_then(|_| meta.lidar.validate())
            .map_err(|e| Error::format("meta.json", e.to_string()))?;
        Ok(meta)
    }
}

/// A generated scan/patch pair with ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub scan: PointCloud,
    pub patch: MapPatch,
    /// `patch_size × patch_size × 1` binary raster of scan returns projected
    /// into the patch at the ground-truth pose.
    pub gt_skeleton: Grid2D,
    pub meta: SceneMeta,
}

impl Scene {
    pub fn seed(&self) -> u64 {
        self.meta.seed
    }

    /// Ground-truth sensor pose in patch pixels.
    pub fn gt_pose(&self) -> Pose {
        self.meta.gt_pose
    }

    pub fn gt_scale(&self) -> f64 {
        self.meta.gt_scale
    }

    /// Ground-truth pose in the coordinates of a map grid pooled by `stride`
    /// (cell `k` covers pixels `k·stride .. (k+1)·stride`).
    pub fn gt_grid_pose(&self, stride: usize) -> Pose {
        let p = self.meta.gt_pose;
        let half = (stride as f64 - 1.0) / 2.0;
        let st = stride as f64;
        Pose::new((p.u() - half) / st, (p.v() - half) / st, p.theta()).expect("finite ground truth")
    }

    /// Ground-truth ratio of map cell spacing to BEV cell spacing.
    pub fn gt_scale_ratio(&self, stride: usize, pillar_size: f64) -> f64 {
        self.meta.meters_per_pixel * stride as f64 / pillar_size
    }
}

fn patch_to_world(meta_center: [f64; 2], phi: f64, mpp: f64, d: usize, pu: f64, pv: f64) -> (f64, f64) {
    let half = (d as f64 - 1.0) / 2.0;
    let (s, c) = phi.sin_cos();
    let (a, b) = ((pu - half) * mpp, (pv - half) * mpp);
    (meta_center[0] + a * c - b * s, meta_center[1] + a * s + b * c)
}

fn world_to_patch(center: [f64; 2], phi: f64, mpp: f64, d: usize, x: f64, y: f64) -> (f64, f64) {
    let half = (d as f64 - 1.0) / 2.0;
    let (s, c) = phi.sin_cos();
    let (a, b) = (x - center[0], y - center[1]);
    (half + (a * c + b * s) / mpp, half + (-a * s + b * c) / mpp)
}

fn sample_ego(town: &TownMap, aug: &AugmentationParams, rng: &mut ChaCha8Rng) -> Result<WorldPose> {
    let world = town.world_size();
    let lo = world * aug.ego_margin;
    let hi = world * (1.0 - aug.ego_margin);
    let roads: Vec<_> = town
        .roads()
        .iter()
        .filter(|r| r.center > lo && r.center < hi)
        .collect();
    if roads.is_empty() {
        return Err(Error::invalid("town has no road inside the ego placement region"));
    }
    for _ in 0..1000 {
        let road = roads[rng.random_range(0..roads.len())];
        let along = rng.random_range(lo..hi);
        let lateral = rng.random_range(-0.25..0.25) * road.width;
        let reverse = rng.random_bool(0.5);
        let jitter = aug.heading_jitter_deg.to_radians();
        let j = if jitter > 0.0 { rng.random_range(-jitter..jitter) } else { 0.0 };
        let (x, y, axis_heading) = if road.axis == 0 {
            (road.center + lateral, along, FRAC_PI_2)
        } else {
            (along, road.center + lateral, 0.0)
        };
        let heading = wrap_finite(axis_heading + if reverse { PI } else { 0.0 } + j);
        let (r, c) = TownMap::cell_of(x, y);
        if town.is_road(r, c) && !town.is_occupied(r, c) {
            return Ok(WorldPose { x, y, heading });
        }
    }
    Err(Error::invalid("could not place the ego vehicle on a road"))
}

fn sample_cars(town: &TownMap, around: (f64, f64), radius: f64, count: usize, rng: &mut ChaCha8Rng, avoid: (f64, f64)) -> Vec<DynamicObject> {
    let mut cars = Vec::with_capacity(count);
    let mut attempts = 0;
    while cars.len() < count && attempts < count * 200 {
        attempts += 1;
        let x = around.0 + rng.random_range(-radius..radius);
        let y = around.1 + rng.random_range(-radius..radius);
        let (r, c) = TownMap::cell_of(x, y);
        if !town.is_road(r, c) || (x - avoid.0).hypot(y - avoid.1) < 6.0 {
            continue;
        }
        let vertical = town.is_road(r - 8, c) && town.is_road(r + 8, c);
        let heading = if vertical { FRAC_PI_2 } else { 0.0 };
        let shade = rng.random_range(0..3);
        let color = [[210, 40, 40], [40, 60, 200], [235, 235, 235]][shade];
        cars.push(DynamicObject {
            center: [x, y],
            size: [2.0, 4.5],
            heading,
            height: 1.5,
            color,
        });
    }
    cars
}

fn render_patch(
    town: &TownMap,
    overlay: &Overlay,
    center: [f64; 2],
    phi: f64,
    mpp: f64,
    d: usize,
    brightness: f64,
    contrast: f64,
) -> MapPatch {
    let ss = ((mpp / BASE_MPP).ceil() as usize + 1).clamp(2, 6);
    let inv = 1.0 / (ss * ss) as f64;
    let mut pixels = Vec::with_capacity(d * d * 3);
    for pv in 0..d {
        for pu in 0..d {
            let mut acc = [0.0f64; 3];
            for i in 0..ss {
                for j in 0..ss {
                    let su = pu as f64 - 0.5 + (j as f64 + 0.5) / ss as f64;
                    let sv = pv as f64 - 0.5 + (i as f64 + 0.5) / ss as f64;
                    let (x, y) = patch_to_world(center, phi, mpp, d, su, sv);
                    let (r, c) = TownMap::cell_of(x, y);
                    let col = town.color(r, c, overlay);
                    for k in 0..3 {
                        acc[k] += col[k] as f64;
                    }
                }
            }
            for a in acc {
                let v = (a * inv - 128.0) * contrast + 128.0 + 255.0 * brightness;
                pixels.push(v.round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    MapPatch::new(d, 3, pixels).expect("sized by construction")
}

/// Samples one scene from a town. Retries the patch offset when it would push
/// the ego outside the patch, then gives up with an error.
pub fn render_scene(town: &TownMap, seed: u64, aug: &AugmentationParams, lidar: &LidarParams) -> Result<Scene> {
    aug.validate()?;
    lidar.validate()?;
    let mut rng = rng_for(seed, Stream::Scene);
    let ego = sample_ego(town, aug, &mut rng)?;
    let sensor = ego.sensor(lidar);

    let (map_cars, scan_cars) = if aug.time_lag {
        let m = sample_cars(town, sensor, 60.0, aug.map_only_cars, &mut rng, (ego.x, ego.y));
        let s = sample_cars(town, sensor, 40.0, aug.scan_only_cars, &mut rng, (ego.x, ego.y));
        (m, s)
    } else {
        (Vec::new(), Vec::new())
    };
    let scan_overlay = Overlay::from_objects(town.dynamic_objects.iter().chain(&scan_cars));
    let scan = simulate_lidar_with(town, &scan_overlay, &ego, lidar, seed)?;

    let s = aug.scale.sample(&mut rng);
    let phi = if aug.rotation_range_deg > 0.0 {
        let r = aug.rotation_range_deg.to_radians();
        rng.random_range(-r..=r)
    } else {
        0.0
    };
    let d = aug.patch_size;
    let mpp = BASE_MPP * s;
    let half = (d as f64 - 1.0) / 2.0;
    let mut offset = None;
    for _ in 0..100 {
        let m = aug.max_center_offset * d as f64;
        let (ou, ov) = if m > 0.0 {
            (rng.random_range(-m..=m), rng.random_range(-m..=m))
        } else {
            (0.0, 0.0)
        };
        let (pu, pv) = (half + ou, half + ov);
        if pu >= 0.0 && pv >= 0.0 && pu <= d as f64 - 1.0 && pv <= d as f64 - 1.0 {
            offset = Some((ou, ov));
            break;
        }
    }
    let Some((ou, ov)) = offset else {
        return Err(Error::invalid("patch offset keeps pushing the ego outside the patch"));
    };
    // the patch center sits at -offset from the sensor in patch axes
    let (sp, cp) = phi.sin_cos();
    let (a, b) = (-ou * mpp, -ov * mpp);
    let center = [sensor.0 + a * cp - b * sp, sensor.1 + a * sp + b * cp];

    let brightness = if aug.brightness_jitter > 0.0 {
        rng.random_range(-aug.brightness_jitter..=aug.brightness_jitter)
    } else {
        0.0
    };
    let contrast = 1.0
        + if aug.contrast_jitter > 0.0 {
            rng.random_range(-aug.contrast_jitter..=aug.contrast_jitter)
        } else {
            0.0
        };
    let map_overlay = Overlay::from_objects(town.dynamic_objects.iter().chain(&map_cars));
    let patch = render_patch(town, &map_overlay, center, phi, mpp, d, brightness, contrast);

    let (pu, pv) = world_to_patch(center, phi, mpp, d, sensor.0, sensor.1);
    let theta = wrap_finite(ego.heading - phi);
    let gt_pose = Pose::new(pu, pv, theta)?;

    let mut gt = Grid2D::zeros(d, d, 1)?;
    let (st, ct) = theta.sin_cos();
    let rad = aug.skeleton_stamp_radius as i64;
    let wall_limit = lidar.max_range - 0.5;
    for p in scan.points() {
        let (x, y) = (p[0] as f64, p[1] as f64);
        if x.hypot(y) >= wall_limit {
            continue;
        }
        let u = (pu + (x * ct - y * st) / mpp).round() as i64;
        let v = (pv + (x * st + y * ct) / mpp).round() as i64;
        for dv in -rad..=rad {
            for du in -rad..=rad {
                let (uu, vv) = (u + du, v + dv);
                if uu >= 0 && vv >= 0 && (uu as usize) < d && (vv as usize) < d {
                    gt.set(vv as usize, uu as usize, 0, 1.0);
                }
            }
        }
    }

    Ok(Scene {
        scan,
        patch,
        gt_skeleton: gt,
        meta: SceneMeta {
            seed,
            gt_pose,
            gt_scale: s,
            meters_per_pixel: mpp,
            patch_size: d,
            ego,
            patch_rotation: phi,
            patch_center: center,
            augmentation: aug.clone(),
            lidar: lidar.clone(),
        },
    })
}
