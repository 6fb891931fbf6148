use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bevloc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bevloc")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Settings that keep each localization in the tens of milliseconds.
const FAST: &[&str] = &[
    "--set",
    "synth.town.world_size=300",
    "--set",
    "scale.coarse_rotations=8",
    "--set",
    "matcher.n_rot=16",
];

fn gen(dir: &Path, count: usize) {
    let mut args = vec!["synth-gen", "--count", "", "--seed", "5", "--out", s(dir)];
    let n = count.to_string();
    args[2] = &n;
    args.extend_from_slice(FAST);
    let out = bevloc(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn synth_gen_refuses_to_clobber_without_force() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = tmp.path().join("ds");
    gen(&ds, 2);
    assert!(ds.join("manifest.json").is_file() && ds.join("effective_config.toml").is_file());
    let cfg = fs::read_to_string(ds.join("effective_config.toml")).unwrap();
    assert!(cfg.contains("seed = 5") && cfg.contains("world_size = 300"), "{cfg}");

    let again = bevloc(&["synth-gen", "--count", "1", "--out", s(&ds)]);
    assert_eq!(again.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&again.stderr).contains("--force"));
    assert!(ds.join("scene_00001").is_dir());

    let forced = bevloc(&["synth-gen", "--count", "1", "--out", s(&ds), "--force", "--set", "synth.town.world_size=300"]);
    assert!(forced.status.success());
    assert!(ds.join("scene_00000").is_dir() && !ds.join("scene_00001").exists());
}

#[test]
fn localize_then_eval_writes_every_output() {
    let tmp = tempfile::tempdir().unwrap();
    let (ds, out) = (tmp.path().join("ds"), tmp.path().join("out"));
    gen(&ds, 3);
    let mut args = vec!["localize", "--dataset", s(&ds), "--out", s(&out), "--heatmap", "--stage", "skeleton-only"];
    args.extend_from_slice(FAST);
    let r = bevloc(&args);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let results = fs::read_to_string(out.join("results.csv")).unwrap();
    assert_eq!(results.lines().count(), 4);
    assert!(!results.lines().next().unwrap().contains("runtime"));
    assert_eq!(fs::read_to_string(out.join("timings.csv")).unwrap().lines().count(), 4);
    assert!(!out.join("failures.csv").exists());
    assert!(out.join("heatmaps/scene_00002.png").is_file());
    let cfg = fs::read_to_string(out.join("effective_config.toml")).unwrap();
    assert!(cfg.contains("n_rot = 16"), "{cfg}");

    let rep = tmp.path().join("rep");
    let e = bevloc(&["eval", "--results", s(&out.join("results.csv")), "--out", s(&rep)]);
    assert!(e.status.success(), "{}", String::from_utf8_lossy(&e.stderr));
    let json: serde_json::Value = serde_json::from_slice(&fs::read(rep.join("report.json")).unwrap()).unwrap();
    assert_eq!(json["scenes"], 3);
    assert!(fs::read_to_string(rep.join("report.txt")).unwrap().contains("Loc R@1m"));
    assert!(rep.join("effective_config.toml").is_file());
}

#[test]
fn single_scene_localization() {
    let tmp = tempfile::tempdir().unwrap();
    let (ds, out) = (tmp.path().join("ds"), tmp.path().join("out"));
    gen(&ds, 1);
    let scene = ds.join("scene_00000");
    let mut args = vec!["localize", "--scene", s(&scene), "--out", s(&out)];
    args.extend_from_slice(FAST);
    assert!(bevloc(&args).status.success());
    let results = fs::read_to_string(out.join("results.csv")).unwrap();
    assert!(results.lines().nth(1).unwrap().starts_with("scene_00000,"));
}

#[test]
fn malformed_scene_is_reported_and_fails_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let (ds, out) = (tmp.path().join("ds"), tmp.path().join("out"));
    gen(&ds, 2);
    fs::write(ds.join("scene_00001/scan.bin"), [1u8, 2, 3]).unwrap();
    let mut args = vec!["localize", "--dataset", s(&ds), "--out", s(&out)];
    args.extend_from_slice(FAST);
    let r = bevloc(&args);
    assert_eq!(r.status.code(), Some(1));
    let failures = fs::read_to_string(out.join("failures.csv")).unwrap();
    assert!(failures.starts_with("scene_id,error\n"));
    assert!(failures.contains("scene_00001") && failures.contains("scan.bin"), "{failures}");
    assert_eq!(fs::read_to_string(out.join("results.csv")).unwrap().lines().count(), 2);
}

#[test]
fn bad_inputs_exit_with_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let r = bevloc(&["eval", "--results", s(&tmp.path().join("missing.csv")), "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(2));
    let bad = tmp.path().join("bad.csv");
    fs::write(&bad, "scene_id,pred_u\nx,1\n").unwrap();
    assert_eq!(bevloc(&["eval", "--results", s(&bad), "--out", s(&out)]).status.code(), Some(2));
    let r = bevloc(&["bench", "--out", s(&out), "--set", "matcher.n_rot=-3"]);
    assert_eq!(r.status.code(), Some(2));
    assert!(!bevloc(&["localize", "--out", s(&out)]).status.success());
}

#[test]
fn ablation_writes_one_report_per_row() {
    let tmp = tempfile::tempdir().unwrap();
    let (ds, out) = (tmp.path().join("ds"), tmp.path().join("out"));
    gen(&ds, 2);
    let matrix = tmp.path().join("matrix.toml");
    fs::write(
        &matrix,
        "[[row]]\nname = \"full\"\n\n[[row]]\nname = \"no_scale\"\nscale_alignment = false\nscale_augmentation = false\n",
    )
    .unwrap();
    let mut args = vec!["ablate", "--matrix", s(&matrix), "--dataset", s(&ds), "--out", s(&out)];
    args.extend_from_slice(FAST);
    let r = bevloc(&args);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    for name in ["full", "no_scale"] {
        assert!(out.join(format!("report_{name}.json")).is_file());
    }
    fs::write(&matrix, "[[row]]\nname = \"a b\"\n").unwrap();
    assert_eq!(bevloc(&["ablate", "--matrix", s(&matrix), "--dataset", s(&ds), "--out", s(&out)]).status.code(), Some(2));
}

#[test]
fn bench_reports_each_worker_count() {
    let tmp = tempfile::tempdir().unwrap();
    let mut args = vec!["bench", "--out", s(tmp.path()), "--set", "bench.repetitions=2", "--set", "bench.workers=[1, 2]"];
    args.extend_from_slice(FAST);
    let r = bevloc(&args);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let json: serde_json::Value = serde_json::from_slice(&fs::read(tmp.path().join("bench.json")).unwrap()).unwrap();
    let rows = json["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[1]["workers"], 2);
    assert!(rows[0]["localize"]["median_ms"].as_f64().unwrap() > 0.0);
}
