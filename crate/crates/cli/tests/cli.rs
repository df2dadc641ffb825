use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;
use volfuse::optimizer::evaluate_candidate;
use volfuse::{volf, BlockSpec, Dims, MetricWeights, Spacing, Volume};

fn volfuse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_volfuse")).args(args).output().expect("spawn volfuse")
}

fn ok(args: &[&str]) -> Output {
    let out = volfuse(args);
    assert!(out.status.success(), "{args:?} failed:\n{}", String::from_utf8_lossy(&out.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// Width and height from a binary PNM header.
fn pnm_size(path: &Path, magic: &str) -> (usize, usize) {
    let bytes = fs::read(path).unwrap();
    let head = String::from_utf8_lossy(&bytes[..20.min(bytes.len())]).into_owned();
    let mut tok = head.split_ascii_whitespace();
    assert_eq!(tok.next(), Some(magic));
    let w = tok.next().unwrap().parse().unwrap();
    let h = tok.next().unwrap().parse().unwrap();
    (w, h)
}

fn fiber_sources(dir: &Path) -> (PathBuf, PathBuf) {
    let out = dir.join("gen");
    ok(&["generate", "--preset", "fiber", "--out", s(&out)]);
    (out.join("sources_0.volf"), out.join("sources_1.volf"))
}

#[test]
fn generate_fiber_preset() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("g");
    ok(&["generate", "--preset", "fiber", "--out", s(&out)]);
    for name in ["sources_0.volf", "sources_1.volf", "truth.volf"] {
        let v = volf::read(out.join(name)).unwrap();
        assert_eq!(v.dims(), Dims::new(80, 80, 80));
    }
    assert!(!out.join("sources_2.volf").exists());
    let m = json(&out.join("manifest.json"));
    assert_eq!(m["command"], "generate");
    assert_eq!(m["parameters"]["foci_index"], serde_json::json!([30, 40]));
}

#[test]
fn generate_single_focus() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("g");
    ok(&["generate", "--preset", "fiber", "--foci", "30", "--out", s(&out)]);
    assert!(out.join("sources_0.volf").exists());
    assert!(!out.join("sources_1.volf").exists());
    assert!(out.join("truth.volf").exists());
}

#[test]
fn malformed_scene_names_the_field() {
    let tmp = TempDir::new().unwrap();
    let scene = tmp.path().join("scene.json");
    fs::write(&scene, r#"{"geometry": {"kind": "tilted_fiber", "start": [0, 0, 0], "end": [10, -4, 10]}}"#).unwrap();
    let out = volfuse(&["generate", "--scene", s(&scene), "--foci", "30", "--out", s(&tmp.path().join("g"))]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("geometry.end"), "{err}");
    assert!(out.stdout.is_empty());
}

#[test]
fn scene_file_generation() {
    let tmp = TempDir::new().unwrap();
    let scene = tmp.path().join("scene.json");
    fs::write(
        &scene,
        r#"{"dims": {"nx": 24, "ny": 24, "nz": 30}, "geometry": {"kind": "tilted_fiber", "start": [16, 16, 20], "end": [30, 30, 60]}}"#,
    )
    .unwrap();
    let out = tmp.path().join("g");
    ok(&["generate", "--scene", s(&scene), "--foci-index", "10,20", "--out", s(&out)]);
    assert_eq!(volf::read(out.join("sources_1.volf")).unwrap().dims(), Dims::new(24, 24, 30));
    let m = json(&out.join("manifest.json"));
    assert_eq!(m["input_digests"].as_object().unwrap().len(), 1);
    assert!(volfuse(&["generate", "--scene", s(&scene), "--out", s(&out)]).status.code() != Some(0));
}

#[test]
fn fuse_identical_inputs_returns_input() {
    let tmp = TempDir::new().unwrap();
    let (a, _) = fiber_sources(tmp.path());
    let out = tmp.path().join("f");
    ok(&["fuse", s(&a), s(&a), "--block", "5,7,3", "--out", s(&out)]);
    let src = volf::read(&a).unwrap();
    let fused = volf::read(out.join("fused.volf")).unwrap();
    let err = src.as_slice().iter().zip(fused.as_slice()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(err <= 1e-6, "{err}");
}

#[test]
fn fuse_mask_has_one_winner_per_block() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = fiber_sources(tmp.path());
    let out = tmp.path().join("f");
    ok(&["fuse", s(&a), s(&b), "--block", "8,8,8", "--out", s(&out)]);
    let mask = json(&out.join("mask.json"));
    let bands = mask.as_object().unwrap();
    assert_eq!(bands.len(), 8);
    for winners in bands.values() {
        assert_eq!(winners.as_array().unwrap().len(), 10 * 10 * 10);
    }
    let m = json(&out.join("manifest.json"));
    assert_eq!(m["input_digests"].as_object().unwrap().len(), 2);
    assert_eq!(m["outputs"].as_array().unwrap().len(), 3);
}

#[test]
fn fuse_rejects_mismatched_dims() {
    let tmp = TempDir::new().unwrap();
    let (a, _) = fiber_sources(tmp.path());
    let small = tmp.path().join("small.volf");
    volf::write(&Volume::zeros(Dims::new(40, 40, 40), Spacing::new(2.0, 2.0, 3.0)).unwrap(), &small).unwrap();
    let out = volfuse(&["fuse", s(&a), s(&small), "--block", "4,4,4", "--out", s(&tmp.path().join("f"))]);
    assert!(!out.status.success());
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
    assert!(volfuse(&["fuse", s(&a), "--block", "4,4,4"]).status.code() != Some(0));
}

#[test]
fn fuse_config_file_and_flag_precedence() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = fiber_sources(tmp.path());
    let cfg = tmp.path().join("fusion.json");
    fs::write(&cfg, r#"{"blocks": {"shared": {"h": 8, "w": 8, "l": 8}}, "wavelet": "haar"}"#).unwrap();
    let (o1, o2, o3) = (tmp.path().join("1"), tmp.path().join("2"), tmp.path().join("3"));
    ok(&["fuse", s(&a), s(&b), "--config", s(&cfg), "--out", s(&o1)]);
    ok(&["fuse", s(&a), s(&b), "--config", s(&cfg), "--block", "16,16,16", "--out", s(&o2)]);
    let n = |dir: &Path| json(&dir.join("mask.json"))["LLL"].as_array().unwrap().len();
    assert_eq!(n(&o1), 1000);
    assert_eq!(n(&o2), 125);
    // replaying a manifest reproduces the run
    ok(&["fuse", "--config", s(&o2.join("manifest.json")), "--out", s(&o3)]);
    assert_eq!(fs::read(o2.join("fused.volf")).unwrap(), fs::read(o3.join("fused.volf")).unwrap());
}

#[test]
fn optimize_is_deterministic_and_plumbs_weights() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = fiber_sources(tmp.path());
    let run = |dir: &str, extra: &[&str]| {
        let out = tmp.path().join(dir);
        let mut args = vec!["optimize", s(&a), s(&b), "--seed", "7", "--bounds", "3:9", "--out", s(&out)];
        args.extend_from_slice(extra);
        ok(&args);
        out
    };
    let (r1, r2) = (run("r1", &[]), run("r2", &[]));
    for name in ["report.json", "best_config.json", "trace.csv", "trace.json", "fused.volf"] {
        assert_eq!(fs::read(r1.join(name)).unwrap(), fs::read(r2.join(name)).unwrap(), "{name}");
    }
    let m = json(&r1.join("manifest.json"));
    assert_eq!(m["seed"], 7);

    let w = run("w", &["--weights", "1,0,0"]);
    let report = json(&w.join("report.json"));
    assert_eq!(report["weights"]["lambda_en"], 0.0);
    assert_eq!(report["weights"]["lambda_ssim"], 0.0);
    assert_eq!(report["total"], report["norm_avg"]);
}

#[test]
fn optimize_matches_exhaustive_search_on_tiny_bounds() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = fiber_sources(tmp.path());
    let out = tmp.path().join("o");
    ok(&["optimize", s(&a), s(&b), "--seed", "3", "--bounds", "4:8", "--mode", "shared", "--out", s(&out)]);
    let sources = [volf::read(&a).unwrap(), volf::read(&b).unwrap()];
    let weights = MetricWeights::default();
    let mut best = f64::MIN;
    for h in 4..=8 {
        for w in 4..=8 {
            for l in 4..=8 {
                best = best.max(evaluate_candidate(&sources, BlockSpec::new(h, w, l), &weights).unwrap());
            }
        }
    }
    assert_eq!(json(&out.join("report.json"))["total"].as_f64().unwrap(), best);
}

#[test]
fn analyze_dof_prints_ratio() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = fiber_sources(tmp.path());
    let fz = tmp.path().join("fz");
    ok(&["fuse", s(&a), s(&b), "--block", "4,4,4", "--out", s(&fz)]);
    let out = tmp.path().join("an");
    let res = ok(&["analyze", "--mode", "dof", s(&a), s(&fz.join("fused.volf")), "--out", s(&out)]);
    let text = String::from_utf8(res.stdout).unwrap();
    assert!(text.lines().filter(|l| l.contains("dof_um=")).count() == 2, "{text}");
    let ratio: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("ratio="))
        .expect("ratio line")
        .parse()
        .unwrap();
    assert!(ratio >= 1.8, "{ratio}");
    assert!(out.join("sources_0_fwhm.csv").exists());
    let dof = json(&out.join("dof.json"));
    assert_eq!(dof["entries"].as_array().unwrap().len(), 2);
}

#[test]
fn analyze_images() {
    let tmp = TempDir::new().unwrap();
    let (a, _) = fiber_sources(tmp.path());
    let out = tmp.path().join("an");
    ok(&["analyze", "--mode", "map", s(&a), "--out", s(&out)]);
    assert_eq!(pnm_size(&out.join("sources_0_map.pgm"), "P5"), (80, 80));
    ok(&["analyze", "--mode", "bscan", "--index", "40", s(&a), "--out", s(&out)]);
    assert_eq!(pnm_size(&out.join("sources_0_bscan_y40.pgm"), "P5"), (80, 80));
    ok(&["analyze", "--mode", "depthmap", s(&a), "--out", s(&out)]);
    let ppm = out.join("sources_0_depth.ppm");
    assert_eq!(pnm_size(&ppm, "P6"), (80, 80));
    assert!(fs::read(&ppm).unwrap().len() >= 80 * 80 * 3);
    assert!(volfuse(&["analyze", "--mode", "bscan", "--index", "80", s(&a), "--out", s(&out)]).status.code() != Some(0));
}

#[test]
fn unknown_experiment_lists_valid_names() {
    let out = volfuse(&["reproduce", "tissue"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("fiber") && err.contains("vessel"), "{err}");
}
