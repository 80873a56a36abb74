use std::path::Path;
use std::process::{Command, Output};

use seamforge::crop::build_seam_roi;
use seamforge::io::{read_mask_pgm, read_weld_path};

fn seamforge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_seamforge")).args(args).output().unwrap()
}

fn gen(dir: &Path, kind: &str) -> String {
    let out = dir.join(kind);
    let o = seamforge(&["gen", "--kind", kind, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out.to_str().unwrap().to_string()
}

#[test]
fn gen_writes_a_complete_scene() {
    let dir = tempfile::tempdir().unwrap();
    let scene = gen(dir.path(), "butt");
    for f in ["scene.json", "cloud.ply", "mask_0.pgm", "mask_1.pgm", "truth.json", "config.json", "spec.json"] {
        assert!(Path::new(&scene).join(f).exists(), "missing {f}");
    }
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(Path::new(&scene).join("scene.json")).unwrap()).unwrap();
    assert_eq!(manifest["masks"].as_array().unwrap().len(), 2);
}

#[test]
fn butt_run_finds_one_seam() {
    let dir = tempfile::tempdir().unwrap();
    let scene = gen(dir.path(), "butt");
    let out = dir.path().join("run");
    let config = Path::new(&scene).join("config.json");
    let o = seamforge(&["run", "--scene", &scene, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let paths = read_weld_path(&out.join("weld_path.json")).unwrap();
    assert_eq!(paths.len(), 1);
    assert!(paths[0].waypoints.len() > 50);
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["crop_applied"], true);
}

#[test]
fn masks_are_pgm_files_the_cropper_accepts() {
    let dir = tempfile::tempdir().unwrap();
    let scene = gen(dir.path(), "butt");
    let masks: Vec<_> = (0..2).map(|i| read_mask_pgm(&Path::new(&scene).join(format!("mask_{i}.pgm"))).unwrap()).collect();
    let roi = build_seam_roi(&masks, 4).unwrap();
    assert_eq!(roi.pairs, vec![(0, 1)]);

    // the same files handed over explicitly, as an external segmenter would
    let list = format!("{scene}/mask_0.pgm,{scene}/mask_1.pgm");
    let out = dir.path().join("run");
    let o = seamforge(&["run", "--scene", &scene, "--masks", &list, "--dilate-px", "10", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn malformed_config_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let scene = gen(dir.path(), "butt");
    let config = dir.path().join("bad.json");
    std::fs::write(&config, r#"{"voxel_mm": 3.0, "growth": {"theta_one": 15.0}}"#).unwrap();
    let o = seamforge(&["run", "--scene", &scene, "--config", config.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("theta_one"), "{err}");
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
}

#[test]
fn missing_scene_is_a_one_line_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = seamforge(&["run", "--scene", dir.path().join("nope").to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.starts_with("error: "), "{err}");
    assert_eq!(err.trim_end().lines().count(), 1);
}

#[test]
fn tiny_theta1_finds_nothing_and_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let scene = gen(dir.path(), "butt");
    let config = Path::new(&scene).join("config.json");
    let o = seamforge(&[
        "run", "--scene", &scene, "--config", config.to_str().unwrap(), "--theta1-deg", "89", "--out", dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn eval_and_sweep_write_reports() {
    let dir = tempfile::tempdir().unwrap();
    let scene = gen(dir.path(), "curved-sinusoid");
    let config = Path::new(&scene).join("config.json");
    let out = dir.path().join("eval");
    let o = seamforge(&["eval", "--scene", &scene, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("eval.json")).unwrap()).unwrap();
    assert_eq!(report["matched"], 1);
    assert!(report["mean_rmse_mm"].as_f64().unwrap() < 1.0);
    assert!(out.join("eval.csv").exists());

    let out = dir.path().join("sweep");
    let o = seamforge(&["sweep", "--scene", &scene, "--config", config.to_str().unwrap(), "--r", "2:4", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert!(csv.starts_with("voxel_mm,points,"));
}
