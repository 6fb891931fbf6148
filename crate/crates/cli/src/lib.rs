//! Subcommand implementations behind the `bevloc` binary. Each command takes
//! a fully resolved [`RunConfig`], writes its outputs plus an
//! `effective_config.toml` snapshot into its output directory, and returns
//! what it wrote so callers (and tests) can inspect it without re-reading.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use bevloc::config::{LocalizerConfig, RunConfig};
use bevloc::eval::{
    evaluate_scene, read_records_file, run_ablation, summarize, write_records, write_timings, AblationMatrix, EvalRecord,
    Report,
};
use bevloc::matcher::score_volume;
use bevloc::pipeline::{encode_map, encode_scan, localize_encoded, Stage};
use bevloc::scale::rescale_bev;
use bevloc::synth::{
    generate_scene, read_scene_dir, scene_dir_name, write_scene, Manifest, Scene, MANIFEST_FILE,
};
use bevloc::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub const RESULTS_FILE: &str = "results.csv";
pub const TIMINGS_FILE: &str = "timings.csv";
pub const FAILURES_FILE: &str = "failures.csv";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TEXT: &str = "report.txt";
pub const BENCH_FILE: &str = "bench.json";
pub const EFFECTIVE_CONFIG: &str = "effective_config.toml";

/// Threads actually used for a requested worker count: the work is CPU
/// bound, so threads beyond the available cores only add switching.
pub fn effective_threads(workers: usize) -> usize {
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    workers.clamp(1, cores)
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(effective_threads(workers))
        .build()
        .map_err(|e| Error::invalid(format!("cannot start {workers} workers: {e}")))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write(path: PathBuf, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(&path, bytes).map_err(|e| Error::io(path, e))
}

fn is_nonempty_dir(dir: &Path) -> Result<bool> {
    match fs::read_dir(dir) {
        Ok(mut it) => Ok(it.next().is_some()),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(false),
        Err(e) => Err(Error::io(dir, e)),
    }
}

/// Removes what a previous generation run left in `dir`: scene directories,
/// the manifest and the config snapshot. Anything else is left alone.
fn clear_dataset(dir: &Path) -> Result<()> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        let path = entry.path();
        if name.starts_with("scene_") && path.is_dir() {
            fs::remove_dir_all(&path).map_err(|e| Error::io(&path, e))?;
        } else if name == MANIFEST_FILE || name == EFFECTIVE_CONFIG {
            fs::remove_file(&path).map_err(|e| Error::io(&path, e))?;
        }
    }
    Ok(())
}

/// Generates `count` scenes from seeds `cfg.seed, cfg.seed + 1, …` into
/// `out`. Refuses a non-empty `out` unless `force` is set.
pub fn synth_gen(cfg: &RunConfig, count: usize, out: &Path, force: bool) -> Result<Manifest> {
    if is_nonempty_dir(out)? {
        if !force {
            return Err(Error::invalid(format!(
                "{} is not empty; pass --force to overwrite",
                out.display()
            )));
        }
        clear_dataset(out)?;
    }
    create_dir(out)?;
    let seeds: Vec<u64> = (0..count as u64).map(|i| cfg.seed.wrapping_add(i)).collect();
    let scenes: Vec<Scene> = pool(cfg.worker_count())?.install(|| {
        seeds
            .par_iter()
            .map(|&s| generate_scene(s, &cfg.synth))
            .collect::<Result<_>>()
    })?;
    let mut manifest = Manifest::default();
    for (i, scene) in scenes.iter().enumerate() {
        manifest.scenes.push(write_scene(scene, out, i)?);
    }
    manifest.write(out)?;
    cfg.write_effective(out)?;
    Ok(manifest)
}

/// What `localize` reads.
#[derive(Debug, Clone)]
pub enum Source {
    /// A dataset root with a manifest.
    Dataset(PathBuf),
    /// A single scene directory.
    Scene(PathBuf),
}

impl Source {
    /// `(scene id, scene directory)` pairs in id order.
    fn scene_dirs(&self) -> Result<Vec<(String, PathBuf)>> {
        match self {
            Source::Scene(dir) => {
                let id = dir
                    .file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "scene".into());
                Ok(vec![(id, dir.clone())])
            }
            Source::Dataset(root) => {
                let manifest = Manifest::read(root)?;
                let mut dirs: Vec<_> = manifest
                    .scenes
                    .into_iter()
                    .map(|e| {
                        let dir = root.join(&e.id);
                        (e.id, dir)
                    })
                    .collect();
                dirs.sort_by(|a, b| a.0.cmp(&b.0));
                Ok(dirs)
            }
        }
    }
}

/// A scene that could not be localized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub scene_id: String,
    pub error: String,
}

#[derive(Debug, Clone)]
pub struct LocalizeOutcome {
    pub records: Vec<EvalRecord>,
    pub failures: Vec<Failure>,
}

/// Localizes every scene of `source`, writing `results.csv`, `timings.csv`,
/// `failures.csv` (only when something failed) and optional heatmaps.
pub fn localize(cfg: &RunConfig, source: &Source, out: &Path, stage: Stage, heatmap: bool) -> Result<LocalizeOutcome> {
    let lcfg = cfg.localizer().with_stage(stage);
    lcfg.validate()?;
    create_dir(out)?;
    let heat_dir = out.join("heatmaps");
    if heatmap {
        create_dir(&heat_dir)?;
    }
    let dirs = source.scene_dirs()?;
    let results: Vec<std::result::Result<EvalRecord, Failure>> = pool(cfg.worker_count())?.install(|| {
        dirs.par_iter()
            .map(|(id, dir)| {
                localize_one(id, dir, &lcfg, cfg, heatmap.then_some(heat_dir.as_path())).map_err(|e| Failure {
                    scene_id: id.clone(),
                    error: e.to_string(),
                })
            })
            .collect()
    });
    let (mut records, mut failures) = (Vec::new(), Vec::new());
    for r in results {
        match r {
            Ok(rec) => records.push(rec),
            Err(f) => failures.push(f),
        }
    }

    let mut buf = Vec::new();
    write_records(&records, &mut buf)?;
    write(out.join(RESULTS_FILE), buf)?;
    let mut buf = Vec::new();
    write_timings(&records, &mut buf)?;
    write(out.join(TIMINGS_FILE), buf)?;
    let failures_path = out.join(FAILURES_FILE);
    if failures.is_empty() {
        if failures_path.exists() {
            fs::remove_file(&failures_path).map_err(|e| Error::io(&failures_path, e))?;
        }
    } else {
        let mut wr = csv::Writer::from_writer(Vec::new());
        for f in &failures {
            wr.serialize(f).map_err(|e| Error::invalid(e.to_string()))?;
        }
        write(failures_path, wr.into_inner().map_err(|e| Error::invalid(e.to_string()))?)?;
    }
    cfg.write_effective(out)?;
    Ok(LocalizeOutcome { records, failures })
}

fn localize_one(id: &str, dir: &Path, lcfg: &LocalizerConfig, cfg: &RunConfig, heat_dir: Option<&Path>) -> Result<EvalRecord> {
    let scene = read_scene_dir(dir)?;
    let rec = evaluate_scene(&scene, id, lcfg, cfg.losses.prob_floor, cfg.losses.bce_eps)?;
    if let Some(hd) = heat_dir {
        let scan = encode_scan(&scene.scan, lcfg, scene.seed())?;
        let map = encode_map(&scene.patch, lcfg)?;
        let loc = localize_encoded(&scan, &map, lcfg)?;
        write(hd.join(format!("{id}.png")), loc.heatmap_png()?)?;
    }
    Ok(rec)
}

/// Summarizes a results file into `report.json` and `report.txt`.
pub fn eval(cfg: &RunConfig, results: &Path, out: &Path) -> Result<Report> {
    let records = read_records_file(results)?;
    let report = summarize(&records)?;
    create_dir(out)?;
    write(out.join(REPORT_JSON), report.to_json()?)?;
    write(out.join(REPORT_TEXT), report.to_table())?;
    cfg.write_effective(out)?;
    Ok(report)
}

/// Runs every row of the ablation matrix over the dataset, writing
/// `report_<row>.json` / `.txt` per row and a combined `ablation.txt`.
pub fn ablate(cfg: &RunConfig, matrix: &Path, dataset: &Path, out: &Path) -> Result<Vec<(String, Report)>> {
    let text = fs::read_to_string(matrix).map_err(|e| Error::io(matrix, e))?;
    let matrix = AblationMatrix::from_toml(&text).map_err(|e| match e {
        Error::InputFormat { reason, .. } => Error::format(matrix.display().to_string(), reason),
        other => other,
    })?;
    let dirs = Source::Dataset(dataset.to_path_buf()).scene_dirs()?;
    let scenes = dirs
        .into_iter()
        .map(|(id, dir)| Ok((id, read_scene_dir(&dir)?)))
        .collect::<Result<Vec<_>>>()?;
    let reports = pool(cfg.worker_count())?.install(|| {
        run_ablation(&scenes, &matrix.row, &cfg.localizer(), cfg.losses.prob_floor, cfg.losses.bce_eps)
    })?;
    create_dir(out)?;
    let mut combined = String::new();
    for (name, rep) in &reports {
        write(out.join(format!("report_{name}.json")), rep.to_json()?)?;
        write(out.join(format!("report_{name}.txt")), rep.to_table())?;
        combined.push_str(&format!("== {name}\n{}\n", rep.to_table()));
    }
    write(out.join("ablation.txt"), combined)?;
    cfg.write_effective(out)?;
    Ok(reports)
}

/// Wall-time statistics over repeated runs, milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub median_ms: f64,
    pub p95_ms: f64,
}

impl Timing {
    fn of(mut samples: Vec<f64>) -> Self {
        samples.sort_by(f64::total_cmp);
        let n = samples.len();
        let median = if n % 2 == 1 {
            samples[n / 2]
        } else {
            0.5 * (samples[n / 2 - 1] + samples[n / 2])
        };
        let p95 = samples[((0.95 * n as f64).ceil() as usize).clamp(1, n) - 1];
        Timing {
            median_ms: median,
            p95_ms: p95,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub workers: usize,
    /// Threads used after capping `workers` at the available cores.
    pub threads: usize,
    /// One full localization: both encoders, scale scoring, matching and
    /// fusion.
    pub localize: Timing,
    /// One feature score volume at the configured rotation count.
    pub score_volume: Timing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub repetitions: usize,
    pub patch_size: usize,
    pub n_rot: usize,
    pub channels: usize,
    pub rows: Vec<BenchRow>,
}

fn time_ms(f: impl FnOnce() -> Result<()>) -> Result<f64> {
    let t = Instant::now();
    f()?;
    Ok(t.elapsed().as_secs_f64() * 1e3)
}

/// Times localization of one generated scene and one score volume under
/// each configured worker count; writes `bench.json`.
pub fn bench(cfg: &RunConfig, out: &Path) -> Result<BenchReport> {
    let lcfg = cfg.localizer();
    lcfg.validate()?;
    let scene = generate_scene(cfg.seed, &cfg.synth)?;
    let map = encode_map(&scene.patch, &lcfg)?;
    let scan = encode_scan(&scene.scan, &lcfg, cfg.seed)?;
    let s_gt = scene.gt_scale_ratio(lcfg.encoder.map_stride, lcfg.voxel.pillar_size[0]);
    let side = lcfg.matcher.bev_window.min(map.features.height());
    let bev = rescale_bev(scan.bev.features(), s_gt)?;
    let bev = if bev.height() > side { bev.center_crop(side)? } else { bev };

    let mut rows = Vec::new();
    for &w in &cfg.bench.workers {
        let p = pool(w)?;
        let (mut loc_t, mut vol_t) = (Vec::new(), Vec::new());
        for _ in 0..cfg.bench.repetitions {
            loc_t.push(p.install(|| {
                time_ms(|| {
                    let s = encode_scan(&scene.scan, &lcfg, cfg.seed)?;
                    let m = encode_map(&scene.patch, &lcfg)?;
                    localize_encoded(&s, &m, &lcfg).map(|_| ())
                })
            })?);
            vol_t.push(p.install(|| time_ms(|| score_volume(&map.features, &bev, lcfg.matcher.n_rot).map(|_| ())))?);
        }
        rows.push(BenchRow {
            workers: w,
            threads: effective_threads(w),
            localize: Timing::of(loc_t),
            score_volume: Timing::of(vol_t),
        });
    }
    let report = BenchReport {
        repetitions: cfg.bench.repetitions,
        patch_size: scene.meta.patch_size,
        n_rot: lcfg.matcher.n_rot,
        channels: lcfg.encoder.channels,
        rows,
    };
    create_dir(out)?;
    let mut json = serde_json::to_string_pretty(&report).map_err(|e| Error::invalid(e.to_string()))?;
    json.push('\n');
    write(out.join(BENCH_FILE), json)?;
    cfg.write_effective(out)?;
    Ok(report)
}

/// Scene directory name for dataset index `i`; re-exported for tests.
pub fn scene_id(i: usize) -> String {
    scene_dir_name(i)
}
