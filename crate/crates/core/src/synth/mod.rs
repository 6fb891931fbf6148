//! Procedural scene generator: towns, simulated scans, and overhead patches
//! with exact ground-truth pose, scale and skeleton.
//!
//! World coordinates are meters with `x` along raster columns and `y` along
//! raster rows, so every transform between the world, the ego frame and the
//! patch is a proper rotation and the generated pairs share the handedness
//! the matcher assumes.

mod dataset;
mod lidar;
mod render;
mod town;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use dataset::{
    count_scenes, read_scene, read_scene_dir, scene_dir_name, write_dataset, write_scene, Manifest, ManifestEntry, MANIFEST_FILE,
};
pub use lidar::{simulate_lidar, LidarParams, WorldPose};
pub use render::{render_scene, AugmentationParams, ScaleSampling, Scene, SceneMeta};
pub use town::{generate_town, Building, DynamicObject, Road, TownMap, TownParams};

use crate::Result;

/// Ground meters per pixel of the town raster and of an unscaled patch.
pub const BASE_MPP: f64 = 0.5;

/// Independent random streams derived from one scene seed.
#[derive(Clone, Copy)]
pub(crate) enum Stream {
    Town = 0,
    Scene = 1,
    Lidar = 2,
}

pub(crate) fn rng_for(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Everything needed to turn a seed into a scene.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub town: TownParams,
    pub augmentation: AugmentationParams,
    pub lidar: LidarParams,
}

/// Generates the town for `seed` and renders one scene from it.
pub fn generate_scene(seed: u64, cfg: &SynthConfig) -> Result<Scene> {
    let town = generate_town(seed, &cfg.town)?;
    render_scene(&town, seed, &cfg.augmentation, &cfg.lidar)
}
