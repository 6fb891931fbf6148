//! Replays the checked-in fuzz corpus through the same round-trip checks the
//! fuzz targets make, so the seeds stay valid inputs as the formats evolve.

use std::fs;
use std::path::PathBuf;

use bevloc::config::RunConfig;
use bevloc::eval::{read_records, write_records, AblationMatrix, Report};
use bevloc::map::MapPatch;
use bevloc::synth::SceneMeta;
use bevloc::{pgm, PointCloud};

fn seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<_> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

#[test]
fn point_cloud_seeds() {
    for (name, data) in seeds("point_cloud_bin") {
        let c = PointCloud::from_bin_bytes(&data).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(c.to_bin_bytes(), data);
    }
    for (name, data) in seeds("point_cloud_csv") {
        let c = PointCloud::from_csv_reader(data.as_slice()).unwrap_or_else(|e| panic!("{name}: {e}"));
        let mut out = Vec::new();
        c.write_csv(&mut out).unwrap();
        assert_eq!(PointCloud::from_csv_reader(out.as_slice()).unwrap(), c);
    }
}

#[test]
fn image_seeds() {
    for (name, data) in seeds("pgm_decode") {
        let g = pgm::decode(&data).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(pgm::decode(&pgm::encode(&g)).unwrap(), g);
    }
    for (name, data) in seeds("map_decode") {
        let m = MapPatch::decode(&data).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(MapPatch::decode(&m.to_png().unwrap()).unwrap(), m);
    }
}

#[test]
fn document_seeds() {
    for (name, data) in seeds("scene_meta_json") {
        SceneMeta::from_json(&data).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
    for (name, data) in seeds("run_config_toml") {
        let cfg = RunConfig::from_toml(std::str::from_utf8(&data).unwrap()).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }
    for (name, data) in seeds("eval_results_csv") {
        let recs = read_records(data.as_slice()).unwrap_or_else(|e| panic!("{name}: {e}"));
        let mut out = Vec::new();
        write_records(&recs, &mut out).unwrap();
        assert_eq!(read_records(out.as_slice()).unwrap(), recs);
    }
    for (name, data) in seeds("report_json") {
        Report::from_json(&data).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
    for (name, data) in seeds("ablation_matrix_toml") {
        AblationMatrix::from_toml(std::str::from_utf8(&data).unwrap()).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}
