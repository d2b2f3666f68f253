use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hyperseg_core::image_io::{load_mask, save_frame};
use hyperseg_core::Tensor;
use serde_json::Value;

fn hyperseg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hyperseg")).args(args).output().unwrap()
}

fn ok_json(args: &[&str]) -> Value {
    let out = hyperseg(args);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/scenes8")
}

fn write_frame(dir: &Path, w: usize, h: usize) -> String {
    let t = Tensor::from_fn(&[3, w, h], |i| ((i[0] * 7 + i[1] * 3 + i[2] * 5) % 17) as f64 / 16.0).unwrap();
    let path = dir.join(format!("frame_{w}x{h}.png"));
    save_frame(&t, &path).unwrap();
    path.to_str().unwrap().to_string()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn help_and_usage_errors() {
    assert_eq!(hyperseg(&["--help"]).status.code(), Some(0));
    assert!(String::from_utf8_lossy(&hyperseg(&["eval", "--help"]).stdout).contains("--checkpoint"));
    assert_eq!(hyperseg(&["eval", "--bogus"]).status.code(), Some(2));
    assert_eq!(hyperseg(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(hyperseg(&[]).status.code(), Some(2));
}

#[test]
fn missing_files_are_usage_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("absent.png");
    let m = s(&missing);
    for args in [
        vec!["extract", "--image", m, "--out", m],
        vec!["compress-report", "--features", m],
        vec!["simulate-clicks", "--gt", m],
        vec!["eval", "--checkpoint", m, "--data", m],
        vec!["train", "--config", m, "--out", m],
    ] {
        let out = hyperseg(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(String::from_utf8_lossy(&out.stderr).contains("does not exist") || String::from_utf8_lossy(&out.stderr).contains("not a directory"));
    }
}

#[test]
fn runtime_failures_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let empty = tmp.path().join("ckpt");
    std::fs::create_dir(&empty).unwrap();
    let out = hyperseg(&["eval", "--checkpoint", s(&empty), "--data", s(&fixture())]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn extract_logs_tiles_and_writes_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let img = write_frame(tmp.path(), 32, 32);
    let out_path = tmp.path().join("feat.hseg");
    let out = hyperseg(&["extract", "--image", &img, "--out", s(&out_path)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("T=1"));
    assert_eq!(Tensor::load(&out_path).unwrap().shape(), &[16, 32, 32]);
    let manifest: Value = serde_json::from_str(&std::fs::read_to_string(tmp.path().join("feat.json")).unwrap()).unwrap();
    assert_eq!(manifest["compressed"], true);
    assert_eq!(manifest["shape"], serde_json::json!([16, 32, 32]));
}

#[test]
fn extract_layout_of_full_hd_frame() {
    let tmp = tempfile::tempdir().unwrap();
    let img = write_frame(tmp.path(), 1920, 1080);
    let out = hyperseg(&["extract", "--image", &img, "--tile", "224x224", "--layout-only"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("45 tiles"));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["grid"]["padded_width"], 2016);
    assert_eq!(v["grid"]["padded_height"], 1120);
}

/// Squared singular values of the depth unfolding, from the Gram matrix.
fn sigma_squared(features: &Tensor, start: usize, depth: usize) -> Vec<f64> {
    let plane = features.shape()[1] * features.shape()[2];
    let m = nalgebra::DMatrix::from_fn(depth, plane, |r, c| features.data()[(start + r) * plane + c]);
    let mut ev: Vec<f64> = (&m * m.transpose()).symmetric_eigenvalues().iter().map(|v| v.max(0.0)).collect();
    ev.sort_by(|a, b| b.partial_cmp(a).unwrap());
    ev
}

#[test]
fn compress_report_matches_sigma_energy() {
    let tmp = tempfile::tempdir().unwrap();
    let img = write_frame(tmp.path(), 48, 40);
    let feat = tmp.path().join("raw.hseg");
    let out = hyperseg(&["extract", "--image", &img, "--raw", "--out", s(&feat)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let features = Tensor::load(&feat).unwrap();
    assert_eq!(features.shape(), &[32, 48, 40]);

    let full = ok_json(&["compress-report", "--features", s(&feat), "--ranks", "full"]);
    for l in full["layers"].as_array().unwrap() {
        assert!(l["relative_squared_error"].as_f64().unwrap() < 1e-20);
    }

    let half = ok_json(&["compress-report", "--features", s(&feat)]);
    assert_eq!(half["compressed_depth"], 16);
    let mut start = 0;
    for l in half["layers"].as_array().unwrap() {
        let depth = l["depth"].as_u64().unwrap() as usize;
        let rank = l["rank"].as_u64().unwrap() as usize;
        let e = l["energy_retained"].as_f64().unwrap();
        assert!(e > 0.0 && e <= 1.0);
        let sq = sigma_squared(&features, start, depth);
        let discarded: f64 = sq[rank..].iter().sum();
        let total: f64 = sq.iter().sum();
        let err = l["squared_error"].as_f64().unwrap();
        assert!((err - discarded).abs() <= 1e-8 * total, "{err} vs {discarded}");
        start += depth;
    }
}

#[test]
fn simulate_clicks_is_deterministic_and_valid() {
    let gt_path = fixture().join("scene_000/masks/00000.png");
    let gt = load_mask(&gt_path).unwrap();
    let args = ["simulate-clicks", "--gt", s(&gt_path), "--seed", "3", "--pos", "4", "--neg", "6"];
    let a = ok_json(&args);
    assert_eq!(a, ok_json(&args));
    let clicks = a.as_array().unwrap();
    assert_eq!(clicks.len(), 10);
    let h = gt.shape()[1];
    for c in clicks {
        let (x, y) = (c["x"].as_u64().unwrap() as usize, c["y"].as_u64().unwrap() as usize);
        let inside = gt.data()[x * h + y] >= 0.5;
        assert_eq!(inside, c["polarity"] == "pos");
    }
    assert_eq!(hyperseg(&["simulate-clicks", "--gt", s(&gt_path), "--pos", "16"]).status.code(), Some(2));
}

#[test]
fn train_then_eval_on_bundled_fixture() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("train.toml");
    std::fs::write(&config, "steps = 50\nnum_scenes = 2\nbatch_size = 2\neval_every = 1\nseed = 4\n").unwrap();
    let ckpt = tmp.path().join("ckpt");
    let report = ok_json(&["train", "--config", s(&config), "--steps", "2", "--out", s(&ckpt)]);
    // Flag overrides the file: points at steps 0, 1 and 2.
    assert_eq!(report["loss_curve"].as_array().unwrap().len(), 3);
    assert!(ckpt.join("checkpoint.json").is_file());

    let a = ok_json(&["eval", "--checkpoint", s(&ckpt), "--data", s(&fixture())]);
    let out_file = tmp.path().join("metrics.json");
    let out = hyperseg(&["eval", "--checkpoint", s(&ckpt), "--data", s(&fixture()), "--out", s(&out_file)]);
    assert_eq!(out.status.code(), Some(0));
    let b: Value = serde_json::from_str(&std::fs::read_to_string(&out_file).unwrap()).unwrap();
    assert_eq!(a, b);

    let obj = a.as_object().unwrap();
    let mut keys: Vec<&str> = obj.keys().map(String::as_str).collect();
    keys.sort();
    assert_eq!(keys, ["mbiou", "miou", "n_images", "per_image"]);
    assert_eq!(a["n_images"], 16);
    let per = a["per_image"].as_array().unwrap();
    assert_eq!(per.len(), 16);
    for item in per {
        assert!(item["name"].as_str().unwrap().starts_with("scene_"));
        for k in ["iou", "biou"] {
            let v = item[k].as_f64().unwrap();
            assert!((0.0..=1.0).contains(&v));
        }
    }
    let mean = per.iter().map(|i| i["iou"].as_f64().unwrap()).sum::<f64>() / 16.0;
    assert!((mean - a["miou"].as_f64().unwrap()).abs() < 1e-12);
}
