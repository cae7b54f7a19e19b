//! End-to-end tests for the `rigdepth` binary: exit codes, JSON output
//! shapes, determinism, and the numeric quality of full pipeline runs.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

use rigdepth_core::geometry::Pixel;
use rigdepth_core::io;
use rigdepth_core::photometric::DepthMap;
use rigdepth_core::sfm::{CorrespondenceSet, Match};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_rigdepth"));
    // Keep runs hermetic regardless of the invoking shell's environment.
    cmd.env_remove("SURROUND_THREADS");
    cmd
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn rigdepth")
}

fn assert_code(out: &Output, expected: i32, ctx: &str) {
    let code = out.status.code().unwrap_or(-1);
    assert_eq!(
        code,
        expected,
        "{ctx}: expected exit {expected}, got {code}\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "stdout is not JSON ({e}):\n{}",
            String::from_utf8_lossy(&out.stdout)
        )
    })
}

fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

/// Renders a dataset into `dir`; extra `--set` style args are appended.
fn gen_dataset(dir: &Path, extra: &[&str]) -> Value {
    let mut args = vec!["gen-synthetic", "--out", path_str(dir)];
    args.extend_from_slice(extra);
    let out = run(&args);
    assert_code(&out, 0, "gen-synthetic");
    stdout_json(&out)
}

const SMALL: &[&str] = &["--set", "rig.width=96", "--set", "rig.height=64"];

#[test]
fn help_and_version_exit_zero() {
    for args in [&["--help"][..], &["--version"][..], &["gen-synthetic", "--help"][..]] {
        let out = run(args);
        assert_code(&out, 0, &format!("{args:?}"));
    }
}

#[test]
fn unknown_flags_are_usage_errors() {
    assert_code(&run(&["--definitely-not-a-flag"]), 1, "unknown global flag");
    assert_code(&run(&["no-such-command"]), 1, "unknown subcommand");
    assert_code(&run(&["warp", "--rig"]), 1, "missing flag value");
}

#[test]
fn gen_synthetic_is_deterministic() {
    let tmp = TempDir::new().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let summary = gen_dataset(&a, SMALL);
    gen_dataset(&b, SMALL);

    assert_eq!(summary["views"], 6);
    assert_eq!(summary["steps"], 3);
    assert_eq!(summary["width"], 96);
    assert_eq!(summary["height"], 64);

    let mut names: Vec<String> = fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert!(names.contains(&"rig.json".to_string()));
    assert!(names.contains(&"view0_step0.img".to_string()));
    assert!(names.contains(&"view5_step2.dpt".to_string()));
    for name in &names {
        let bytes_a = fs::read(a.join(name)).unwrap();
        let bytes_b = fs::read(b.join(name)).unwrap();
        assert_eq!(bytes_a, bytes_b, "{name} differs between identical runs");
    }
}

#[test]
fn gen_synthetic_rejects_bad_invocations() {
    let tmp = TempDir::new().unwrap();
    let dir = path_str(tmp.path());
    let single = run(&["gen-synthetic", "--out", dir, "--steps", "1"]);
    assert_code(&single, 1, "--steps 1");

    let unknown = run(&["gen-synthetic", "--out", dir, "--set", "rig.flavor=7"]);
    assert_code(&unknown, 1, "unknown override key");

    let bad_value = run(&["gen-synthetic", "--out", dir, "--set", "rig.width=wide"]);
    assert_code(&bad_value, 1, "non-numeric override value");

    let no_equals = run(&["gen-synthetic", "--out", dir, "--set", "rig.width"]);
    assert_code(&no_equals, 1, "override missing '='");
}

#[test]
fn thread_env_is_validated() {
    let ok = bin()
        .env("SURROUND_THREADS", "2")
        .args(["cvt-check", "--seeds", "1", "--tokens", "4", "--channels", "4"])
        .output()
        .unwrap();
    assert_code(&ok, 0, "SURROUND_THREADS=2");

    let bad = bin()
        .env("SURROUND_THREADS", "banana")
        .args(["cvt-check", "--seeds", "1", "--tokens", "4", "--channels", "4"])
        .output()
        .unwrap();
    assert_code(&bad, 1, "SURROUND_THREADS=banana");
}

#[test]
fn pseudo_depth_meets_reference_quality() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    gen_dataset(&data, &[]);
    let out_dir = tmp.path().join("pseudo");

    let out = run(&[
        "pseudo-depth",
        "--rig",
        path_str(&data.join("rig.json")),
        "--images",
        path_str(&data),
        "--gt",
        path_str(&data),
        "--out",
        path_str(&out_dir),
    ]);
    assert_code(&out, 0, "pseudo-depth");
    let summary = stdout_json(&out);

    let total = summary["total_points"].as_u64().unwrap();
    assert!(total >= 100, "only {total} pseudo-depth points");
    assert_eq!(summary["per_view"].as_array().unwrap().len(), 6);

    let reference = &summary["reference"];
    let within = reference["within_2_percent"].as_f64().unwrap();
    assert!(within >= 0.9, "only {within} of points within 2% of reference");
    let scale = reference["scale_factor"].as_f64().unwrap();
    assert!(
        (0.99..=1.01).contains(&scale),
        "scale factor {scale} outside [0.99, 1.01]"
    );

    // Every per-view file must exist and hold a points array.
    for entry in summary["per_view"].as_array().unwrap() {
        let file = PathBuf::from(entry["file"].as_str().unwrap());
        let parsed: Value = serde_json::from_slice(&fs::read(&file).unwrap()).unwrap();
        assert_eq!(
            parsed["points"].as_array().unwrap().len() as u64,
            entry["points"].as_u64().unwrap()
        );
    }
}

#[test]
fn pseudo_depth_missing_rig_is_data_error() {
    let tmp = TempDir::new().unwrap();
    let out = run(&[
        "pseudo-depth",
        "--rig",
        path_str(&tmp.path().join("nope.json")),
        "--images",
        path_str(tmp.path()),
    ]);
    assert_code(&out, 2, "missing rig");
}

#[test]
fn warp_reconstruction_matches_target() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    gen_dataset(&data, &[]);
    let recon = tmp.path().join("recon.img");

    let out = run(&[
        "warp",
        "--rig",
        path_str(&data.join("rig.json")),
        "--images",
        path_str(&data),
        "--target",
        "0",
        "--source",
        "1",
        "--out",
        path_str(&recon),
    ]);
    assert_code(&out, 0, "warp");
    let summary = stdout_json(&out);
    let frac = summary["valid_fraction"].as_f64().unwrap();
    let err = summary["mean_abs_error"].as_f64().unwrap();
    assert!(frac > 0.15, "valid fraction {frac} too small");
    assert!(err < 0.05, "mean abs error {err} too large");
    assert!(io::load_image(&recon).is_ok());

    let same = run(&[
        "warp",
        "--rig",
        path_str(&data.join("rig.json")),
        "--images",
        path_str(&data),
        "--target",
        "1",
        "--source",
        "1",
    ]);
    assert_code(&same, 1, "target == source");
}

#[test]
fn consistency_flags_scale_mismatch() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    gen_dataset(&data, &[]);
    let rig_path = data.join("rig.json");

    let clean = run(&[
        "consistency",
        "--rig",
        path_str(&rig_path),
        "--depths",
        path_str(&data),
    ]);
    assert_code(&clean, 0, "consistency on reference depths");
    let clean_mean = stdout_json(&clean)["mean"].as_f64().unwrap();
    assert!(clean_mean <= 1e-3, "reference depths disagree by {clean_mean}");

    // Copy the dataset but double one camera's depth map: the report must
    // light up on every pair touching that camera.
    let skewed = tmp.path().join("skewed");
    fs::create_dir(&skewed).unwrap();
    for entry in fs::read_dir(&data).unwrap() {
        let entry = entry.unwrap();
        fs::copy(entry.path(), skewed.join(entry.file_name())).unwrap();
    }
    let target = skewed.join("view0_step0.dpt");
    let doubled = io::load_depth(&target).unwrap().scaled(2.0).unwrap();
    io::save_depth(&target, &doubled).unwrap();

    let out = run(&[
        "consistency",
        "--rig",
        path_str(&rig_path),
        "--depths",
        path_str(&skewed),
    ]);
    assert_code(&out, 0, "consistency on skewed depths");
    let skewed_mean = stdout_json(&out)["mean"].as_f64().unwrap();
    assert!(
        skewed_mean > 0.05,
        "doubling one view only moved the mean to {skewed_mean}"
    );
    assert!(skewed_mean > 20.0 * clean_mean);
}

#[test]
fn consistency_rejects_single_view_rig() {
    let tmp = TempDir::new().unwrap();
    let rig_path = tmp.path().join("rig.json");
    fs::write(
        &rig_path,
        r#"{"cameras":[{"fx":50.0,"fy":50.0,"cx":48.0,"cy":32.0,"width":96,"height":64,
            "extrinsic":[1,0,0,0, 0,1,0,0, 0,0,1,0, 0,0,0,1]}],"adjacency":[]}"#,
    )
    .unwrap();
    let out = run(&[
        "consistency",
        "--rig",
        path_str(&rig_path),
        "--depths",
        path_str(tmp.path()),
    ]);
    assert_code(&out, 1, "single-view rig");
}

/// Builds a correspondence file for the (0, 1) edge from the reference
/// depths, with each match's second endpoint nudged off the epipolar line
/// by `jitter` pixels vertically.
fn fabricate_matches(data: &Path, jitter: f64) -> CorrespondenceSet {
    let rig = io::load_rig(&data.join("rig.json")).unwrap();
    let gt = io::load_depth(&data.join("view0_step0.dpt")).unwrap();
    let cam_i = rig.camera(0).unwrap().model;
    let cam_j = rig.camera(1).unwrap().model;
    let rel = rig.relative_pose(0, 1).unwrap();

    let (w, h) = (gt.width(), gt.height());
    let mut pairs = Vec::new();
    let mut sign = 1.0;
    for y in (4..h - 4).step_by(5) {
        for x in (4..w - 4).step_by(5) {
            let Some(d) = gt.get(x, y) else { continue };
            let q_i = Pixel::new(x as f64, y as f64);
            let p_i = cam_i.backproject(q_i, d).unwrap();
            let p_j = rel.transform_point(&p_i);
            if p_j.z <= 0.0 {
                continue;
            }
            let Ok(q_j) = cam_j.project(&p_j) else { continue };
            let v = q_j.v + sign * jitter;
            if q_j.u < 1.0 || q_j.u > (w - 2) as f64 || v < 1.0 || v > (h - 2) as f64 {
                continue;
            }
            sign = -sign;
            pairs.push(Match {
                q_i,
                q_j: Pixel::new(q_j.u, v),
                score: 1.0,
            });
        }
    }
    assert!(pairs.len() >= 8, "only {} fabricated matches", pairs.len());
    CorrespondenceSet::new(0, 1, pairs, (w, h), (w, h)).unwrap()
}

#[test]
fn external_matches_respect_epipolar_gate() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    gen_dataset(&data, SMALL);
    let set = fabricate_matches(&data, 0.35);
    let n_matches = set.pairs.len() as u64;
    let matches_path = tmp.path().join("matches.json");
    io::save_matches(&matches_path, &set).unwrap();

    let base = vec![
        "pseudo-depth".to_string(),
        "--rig".into(),
        path_str(&data.join("rig.json")).into(),
        "--images".into(),
        path_str(&data).into(),
        "--matches".into(),
        path_str(&matches_path).into(),
    ];

    // A generous gate keeps the slightly-jittered matches...
    let mut loose = base.clone();
    loose.extend(["--gamma".into(), "10".into()]);
    let out = run(&loose.iter().map(String::as_str).collect::<Vec<_>>());
    assert_code(&out, 0, "external matches, loose gamma");
    let kept = stdout_json(&out)["total_points"].as_u64().unwrap();
    assert!(
        kept >= n_matches,
        "loose gate kept {kept} points from {n_matches} matches"
    );

    // ...and a vanishing gate rejects them all.
    let mut strict = base.clone();
    strict.extend(["--gamma".into(), "1e-9".into()]);
    let out = run(&strict.iter().map(String::as_str).collect::<Vec<_>>());
    assert_code(&out, 0, "external matches, strict gamma");
    let survivors = stdout_json(&out)["total_points"].as_u64().unwrap();
    assert!(
        survivors * 20 <= n_matches,
        "strict gate still kept {survivors} of {n_matches}"
    );

    // Out-of-bounds endpoints in an imported file are a data error.
    let mut bad = serde_json::from_slice::<Value>(&fs::read(&matches_path).unwrap()).unwrap();
    bad["pairs"].as_array_mut().unwrap().push(serde_json::json!([-5.0, 3.0, 10.0, 10.0, 1.0]));
    let bad_path = tmp.path().join("bad.json");
    fs::write(&bad_path, serde_json::to_vec(&bad).unwrap()).unwrap();
    let mut broken = base.clone();
    broken[6] = path_str(&bad_path).into();
    let out = run(&broken.iter().map(String::as_str).collect::<Vec<_>>());
    assert_code(&out, 2, "out-of-bounds imported match");

    // As is a missing file.
    let mut missing = base;
    missing[6] = path_str(&tmp.path().join("absent.json")).into();
    let out = run(&missing.iter().map(String::as_str).collect::<Vec<_>>());
    assert_code(&out, 2, "missing matches file");
}

fn write_depth(path: &Path, width: usize, height: usize, scale: f64) {
    let n = width * height;
    let data = (0..n)
        .map(|i| scale * (1.0 + 9.0 * i as f64 / (n - 1) as f64))
        .collect();
    let map = DepthMap::from_data(width, height, data).unwrap();
    io::save_depth(path, &map).unwrap();
}

#[test]
fn evaluate_matches_direct_computation() {
    let tmp = TempDir::new().unwrap();
    let gt = tmp.path().join("gt.dpt");
    let same = tmp.path().join("same.dpt");
    let double = tmp.path().join("double.dpt");
    write_depth(&gt, 24, 16, 1.0);
    write_depth(&same, 24, 16, 1.0);
    write_depth(&double, 24, 16, 2.0);

    // Identical maps: every error is zero and every threshold is met.
    let out = run(&["evaluate", "--pred", path_str(&same), "--gt", path_str(&gt)]);
    assert_code(&out, 0, "pred == gt");
    let m = stdout_json(&out);
    for key in ["abs_rel", "sq_rel", "rmse", "rmse_log"] {
        assert!(m[key].as_f64().unwrap().abs() < 1e-12, "{key} nonzero");
    }
    for key in ["delta1", "delta2", "delta3"] {
        assert_eq!(m[key].as_f64().unwrap(), 1.0, "{key} not 1");
    }
    assert_eq!(m["n_pixels"].as_u64().unwrap(), 24 * 16);
    assert!((m["scale_factor"].as_f64().unwrap() - 1.0).abs() < 1e-12);

    // Doubled predictions with median scaling collapse back onto the truth.
    let out = run(&["evaluate", "--pred", path_str(&double), "--gt", path_str(&gt)]);
    assert_code(&out, 0, "2x pred, median scaling");
    let m = stdout_json(&out);
    assert!(m["abs_rel"].as_f64().unwrap().abs() < 1e-12);
    assert!((m["scale_factor"].as_f64().unwrap() - 0.5).abs() < 1e-12);

    // Without scaling the ratio-2 error shows up everywhere.
    let out = run(&[
        "evaluate",
        "--pred",
        path_str(&double),
        "--gt",
        path_str(&gt),
        "--no-median-scaling",
    ]);
    assert_code(&out, 0, "2x pred, no scaling");
    let m = stdout_json(&out);
    assert!((m["abs_rel"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    for key in ["delta1", "delta2", "delta3"] {
        assert_eq!(m[key].as_f64().unwrap(), 0.0, "{key} should fail at ratio 2");
    }
    assert!((m["scale_factor"].as_f64().unwrap() - 1.0).abs() < 1e-12);

    // The depth window excludes out-of-range reference pixels.
    let out = run(&[
        "evaluate",
        "--pred",
        path_str(&same),
        "--gt",
        path_str(&gt),
        "--min-depth",
        "5",
    ]);
    assert_code(&out, 0, "depth window");
    let m = stdout_json(&out);
    let windowed = m["n_pixels"].as_u64().unwrap();
    assert!(windowed > 0 && windowed < 24 * 16, "window kept {windowed}");

    // Mismatched raster dimensions are a data error.
    let narrow = tmp.path().join("narrow.dpt");
    write_depth(&narrow, 12, 16, 1.0);
    let out = run(&["evaluate", "--pred", path_str(&narrow), "--gt", path_str(&gt)]);
    assert_code(&out, 2, "dimension mismatch");
}

#[test]
fn evaluate_directory_mode() {
    let tmp = TempDir::new().unwrap();
    let pred_dir = tmp.path().join("pred");
    let gt_dir = tmp.path().join("gt");
    fs::create_dir_all(&pred_dir).unwrap();
    fs::create_dir_all(&gt_dir).unwrap();
    for name in ["a.dpt", "b.dpt"] {
        write_depth(&pred_dir.join(name), 10, 8, 1.0);
        write_depth(&gt_dir.join(name), 10, 8, 1.0);
    }

    let out = run(&["evaluate", "--pred", path_str(&pred_dir), "--gt", path_str(&gt_dir)]);
    assert_code(&out, 0, "matched directories");
    let m = stdout_json(&out);
    assert_eq!(m["n_pixels"].as_u64().unwrap(), 2 * 10 * 8);
    assert!(m["abs_rel"].as_f64().unwrap().abs() < 1e-12);

    // Same name sets are required.
    write_depth(&pred_dir.join("c.dpt"), 10, 8, 1.0);
    let out = run(&["evaluate", "--pred", path_str(&pred_dir), "--gt", path_str(&gt_dir)]);
    assert_code(&out, 2, "differing file sets");

    // Mixing a file with a directory is a usage error.
    let out = run(&[
        "evaluate",
        "--pred",
        path_str(&pred_dir.join("a.dpt")),
        "--gt",
        path_str(&gt_dir),
    ]);
    assert_code(&out, 1, "file vs directory");
}

#[test]
fn cvt_check_passes_and_corrupt_fails() {
    let ok = run(&[
        "cvt-check", "--seeds", "2", "--tokens", "6", "--channels", "4", "--heads", "2",
    ]);
    assert_code(&ok, 0, "cvt-check");
    let m = stdout_json(&ok);
    assert_eq!(m["pass"], Value::Bool(true));
    assert!(m["max_rel_error"].as_f64().unwrap() <= 1e-4);
    assert_eq!(m["seeds"].as_u64().unwrap(), 2);

    let bad = run(&[
        "cvt-check", "--seeds", "2", "--tokens", "6", "--channels", "4", "--heads", "2",
        "--corrupt",
    ]);
    assert_code(&bad, 3, "cvt-check --corrupt");
    let m = stdout_json(&bad);
    assert_eq!(m["pass"], Value::Bool(false));
    assert!(m["max_rel_error"].as_f64().unwrap() > 1e-4);
}

#[test]
fn cvt_check_rejects_bad_invocations() {
    assert_code(&run(&["cvt-check", "--seeds", "0"]), 1, "--seeds 0");
    assert_code(&run(&["cvt-check", "--threshold", "-1"]), 1, "negative threshold");
    // Channels must split evenly across heads.
    assert_code(
        &run(&["cvt-check", "--channels", "6", "--heads", "4"]),
        1,
        "channels not divisible by heads",
    );
}
