//! Run configuration: a TOML document with documented defaults, unknown keys
//! rejected, and `key.path=value` overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bev::{VoxelConfig, BEV_CHANNELS};
use crate::losses::{BCE_EPS, PROB_FLOOR};
use crate::map::MAP_CHANNELS;
use crate::synth::SynthConfig;
use crate::{Error, Result};

/// Feature encoders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    /// Feature channels of both encoders.
    pub channels: usize,
    /// Pixels per map cell along each axis.
    pub map_stride: usize,
    /// Scan returns at or beyond this horizontal range (meters) are dropped
    /// before voxelization; they are no-hit returns, not structure.
    pub max_return_range: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            channels: BEV_CHANNELS,
            map_stride: 4,
            max_return_range: 99.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScaleConfig {
    pub min: f64,
    pub max: f64,
    pub bins: usize,
    pub temperature: f64,
    /// Rotations searched while scoring scale bins. Scale scoring compares
    /// the best overlap of each bin, and an under-sampled rotation misplaces
    /// the rim of a large template by several cells, so this needs to be
    /// fine (128 steps ≈ 2.8°).
    pub coarse_rotations: usize,
}

impl Default for ScaleConfig {
    fn default() -> Self {
        ScaleConfig {
            min: 0.5,
            max: 10.0,
            bins: 33,
            temperature: 0.05,
            coarse_rotations: 128,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatcherConfig {
    /// Rotation hypotheses over the full circle.
    pub n_rot: usize,
    /// Side of the central BEV window matched against the map, in cells;
    /// clipped to the map grid.
    pub bev_window: usize,
    /// Multiplier on the feature score volume before fusion.
    pub feature_weight: f64,
    /// Logit gain of the skeleton stage: a placement that lands every BEV
    /// skeleton cell on map skeleton scores this much.
    pub skeleton_weight: f64,
}

impl Default for MatcherConfig {
    fn default() -> Self {
        MatcherConfig {
            n_rot: 64,
            bev_window: 40,
            feature_weight: 1.0,
            skeleton_weight: 50.0,
        }
    }
}

/// Pipeline stage toggles.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StageConfig {
    pub feature_matching: bool,
    pub skeleton_matching: bool,
    /// Estimate `S`; when off `S = 1`.
    pub scale_alignment: bool,
    /// Rescale the feature operand by `S` as well as the skeleton.
    pub scale_augmentation: bool,
}

impl Default for StageConfig {
    fn default() -> Self {
        StageConfig {
            feature_matching: true,
            skeleton_matching: true,
            scale_alignment: true,
            scale_augmentation: true,
        }
    }
}

impl StageConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.feature_matching && !self.skeleton_matching {
            return Err(Error::invalid("at least one of feature or skeleton matching must be enabled"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    pub prob_floor: f64,
    pub bce_eps: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            prob_floor: PROB_FLOOR,
            bce_eps: BCE_EPS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub repetitions: usize,
    /// Worker counts to time.
    pub workers: Vec<usize>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            repetitions: 20,
            workers: vec![1, 8],
        }
    }
}

/// Everything the localizer needs, independent of I/O.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocalizerConfig {
    pub voxel: VoxelConfig,
    pub encoder: EncoderConfig,
    pub scale: ScaleConfig,
    pub matcher: MatcherConfig,
    pub stages: StageConfig,
}

impl LocalizerConfig {
    pub fn validate(&self) -> Result<()> {
        self.voxel.validate()?;
        self.stages.validate()?;
        if self.encoder.channels < BEV_CHANNELS.max(MAP_CHANNELS) {
            return Err(Error::invalid(format!("encoder channels must be at least {BEV_CHANNELS}")));
        }
        if self.encoder.map_stride == 0 {
            return Err(Error::invalid("map stride must be positive"));
        }
        if !(self.encoder.max_return_range > 0.0) {
            return Err(Error::invalid("max return range must be positive"));
        }
        crate::scale::make_bins(self.scale.min, self.scale.max, self.scale.bins)?;
        if !(self.scale.temperature.is_finite() && self.scale.temperature > 0.0) || self.scale.coarse_rotations == 0 {
            return Err(Error::invalid("scale temperature and coarse rotation count must be positive"));
        }
        if self.matcher.n_rot == 0 || self.matcher.bev_window == 0 {
            return Err(Error::invalid("n_rot and bev_window must be positive"));
        }
        for (name, w) in [("feature_weight", self.matcher.feature_weight), ("skeleton_weight", self.matcher.skeleton_weight)] {
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::invalid(format!("matcher.{name} must be finite and non-negative")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Base seed: scene `i` of a generated dataset uses `seed + i`; also
    /// seeds pillar downsampling.
    pub seed: u64,
    /// Worker threads; 0 means available parallelism.
    pub workers: usize,
    pub dataset_dir: PathBuf,
    pub output_dir: PathBuf,
    pub voxel: VoxelConfig,
    pub encoder: EncoderConfig,
    pub scale: ScaleConfig,
    pub matcher: MatcherConfig,
    pub stages: StageConfig,
    pub losses: LossConfig,
    pub synth: SynthConfig,
    pub bench: BenchConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            workers: 0,
            dataset_dir: PathBuf::from("data"),
            output_dir: PathBuf::from("out"),
            voxel: VoxelConfig::default(),
            encoder: EncoderConfig::default(),
            scale: ScaleConfig::default(),
            matcher: MatcherConfig::default(),
            stages: StageConfig::default(),
            losses: LossConfig::default(),
            synth: SynthConfig::default(),
            bench: BenchConfig::default(),
        }
    }
}

fn set_path(root: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| Error::invalid(format!("empty override key in {key:?}")))?;
    let mut table = root;
    for p in parts {
        let entry = table
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| Error::invalid(format!("override {key:?}: {p} is not a table")))?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}

fn parse_value(raw: &str) -> toml::Value {
    // accept any TOML value; anything else is taken as a bare string
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

impl RunConfig {
    pub fn localizer(&self) -> LocalizerConfig {
        LocalizerConfig {
            voxel: self.voxel.clone(),
            encoder: self.encoder.clone(),
            scale: self.scale.clone(),
            matcher: self.matcher.clone(),
            stages: self.stages.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.localizer().validate()?;
        self.synth.town.validate()?;
        self.synth.augmentation.validate()?;
        self.synth.lidar.validate()?;
        if self.bench.repetitions == 0 || self.bench.workers.contains(&0) {
            return Err(Error::invalid("bench repetitions and worker counts must be positive"));
        }
        Ok(())
    }

    /// Parses TOML text, applying `key.path=value` overrides on top.
    pub fn from_toml_with_overrides(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::format("config", e.to_string()))?;
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::invalid(format!("override {o:?} is not key=value")))?;
            set_path(&mut table, k.trim(), parse_value(v.trim()))?;
        }
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::format("config", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        Self::from_toml_with_overrides(text, &[])
    }

    /// Loads a config file (or defaults when `path` is `None`) and applies
    /// overrides.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?,
            None => String::new(),
        };
        Self::from_toml_with_overrides(&text, overrides).map_err(|e| match (e, path) {
            (Error::InputFormat { reason, .. }, Some(p)) => Error::format(p.display().to_string(), reason),
            (e, _) => e,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    /// Writes `effective_config.toml` into `dir`.
    pub fn write_effective(&self, dir: &Path) -> Result<()> {
        let path = dir.join("effective_config.toml");
        std::fs::write(&path, self.to_toml()).map_err(|e| Error::io(path, e))
    }

    pub fn worker_count(&self) -> usize {
        if self.workers > 0 {
            self.workers
        } else {
            std::thread::available_parallelism().map_or(1, |n| n.get())
        }
    }
}
