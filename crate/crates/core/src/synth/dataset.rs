//! On-disk scene layout:
//!
//! ```text
//! <root>/manifest.json
//! <root>/scene_00000/{scan.bin, patch.png, meta.json, skeleton.pgm}
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::render::{Scene, SceneMeta};
use crate::grid::Grid2D;
use crate::map::MapPatch;
use crate::pgm::{self, Graymap};
use crate::{Error, PointCloud, Result};

pub const SCAN_FILE: &str = "scan.bin";
pub const PATCH_FILE: &str = "patch.png";
pub const META_FILE: &str = "meta.json";
pub const SKELETON_FILE: &str = "skeleton.pgm";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    pub seed: u64,
    /// SHA-256 of every file in the scene directory, by file name.
    pub sha256: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub scenes: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn write(&self, root: &Path) -> Result<()> {
        let path = root.join(MANIFEST_FILE);
        let mut json = serde_json::to_string_pretty(self).map_err(|e| Error::invalid(e.to_string()))?;
        json.push('\n');
        fs::write(&path, json).map_err(|e| Error::io(path, e))
    }

    pub fn read(root: &Path) -> Result<Self> {
        let path = root.join(MANIFEST_FILE);
        let bytes = read_file(&path)?;
        serde_json::from_slice(&bytes).map_err(|e| Error::format(path.display().to_string(), e.to_string()))
    }
}

pub fn scene_dir_name(index: usize) -> String {
    format!("scene_{index:05}")
}

fn write_file(path: PathBuf, bytes: &[u8]) -> Result<String> {
    fs::write(&path, bytes).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::format(path.display().to_string(), format!("cannot read: {e}")))
}

/// Writes one scene into `<root>/scene_<index>` and returns its manifest entry.
pub fn write_scene(scene: &Scene, root: &Path, index: usize) -> Result<ManifestEntry> {
    let id = scene_dir_name(index);
    let dir = root.join(&id);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut sha256 = BTreeMap::new();

    sha256.insert(SCAN_FILE.into(), write_file(dir.join(SCAN_FILE), &scene.scan.to_bin_bytes())?);
    sha256.insert(PATCH_FILE.into(), write_file(dir.join(PATCH_FILE), &scene.patch.to_png()?)?);
    let mut meta = serde_json::to_string_pretty(&scene.meta).map_err(|e| Error::invalid(e.to_string()))?;
    meta.push('\n');
    sha256.insert(META_FILE.into(), write_file(dir.join(META_FILE), meta.as_bytes())?);
    let g = &scene.gt_skeleton;
    let pixels = g.values().iter().map(|&v| if v != 0.0 { 255 } else { 0 }).collect();
    let pgm = pgm::encode(&Graymap {
        width: g.width(),
        height: g.height(),
        pixels,
    });
    sha256.insert(SKELETON_FILE.into(), write_file(dir.join(SKELETON_FILE), &pgm)?);

    Ok(ManifestEntry {
        id,
        seed: scene.meta.seed,
        sha256,
    })
}

/// Writes scenes as `scene_00000 …` under `root` plus the manifest.
pub fn write_dataset(scenes: &[Scene], root: &Path) -> Result<Manifest> {
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let mut manifest = Manifest::default();
    for (i, s) in scenes.iter().enumerate() {
        manifest.scenes.push(write_scene(s, root, i)?);
    }
    manifest.write(root)?;
    Ok(manifest)
}

fn relabel(e: Error, path: &Path) -> Error {
    match e {
        Error::InputFormat { reason, .. } => Error::format(path.display().to_string(), reason),
        other => Error::format(path.display().to_string(), other.to_string()),
    }
}

/// Reads `<root>/scene_<index>`; the exact inverse of [`write_scene`].
pub fn read_scene(root: &Path, index: usize) -> Result<Scene> {
    read_scene_dir(&root.join(scene_dir_name(index)))
}

pub fn read_scene_dir(dir: &Path) -> Result<Scene> {
    let meta_path = dir.join(META_FILE);
    let meta = SceneMeta::from_json(&read_file(&meta_path)?).map_err(|e| relabel(e, &meta_path))?;

    let scan_path = dir.join(SCAN_FILE);
    let scan = PointCloud::from_bin_bytes(&read_file(&scan_path)?).map_err(|e| relabel(e, &scan_path))?;

    let patch_path = dir.join(PATCH_FILE);
    let patch = MapPatch::decode(&read_file(&patch_path)?).map_err(|e| relabel(e, &patch_path))?;
    if patch.side() != meta.patch_size {
        return Err(Error::format(
            patch_path.display().to_string(),
            format!("patch is {} px, meta says {}", patch.side(), meta.patch_size),
        ));
    }

    let skel_path = dir.join(SKELETON_FILE);
    let g = pgm::decode(&read_file(&skel_path)?).map_err(|e| relabel(e, &skel_path))?;
    if g.width != meta.patch_size || g.height != meta.patch_size {
        return Err(Error::format(skel_path.display().to_string(), "skeleton size does not match the patch"));
    }
    let values = g.pixels.iter().map(|&p| if p >= 128 { 1.0 } else { 0.0 }).collect();
    let gt_skeleton = Grid2D::from_vec(g.height, g.width, 1, values)?;

    Ok(Scene {
        scan,
        patch,
        gt_skeleton,
        meta,
    })
}

/// Number of consecutive scene directories under `root`.
pub fn count_scenes(root: &Path) -> usize {
    (0..).take_while(|&i| root.join(scene_dir_name(i)).is_dir()).count()
}
