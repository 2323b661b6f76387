use std::path::Path;
use std::process::{Command, Output};

use num_complex::Complex64;
use sasdeconv::grid::grid_stats;
use sasdeconv::io::{read_grid, write_complex_grid, write_real_grid};
use sasdeconv::{ComplexGrid, RealGrid};

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sasdeconv"))
        .current_dir(dir)
        .args(args)
        .env_remove("SASDECONV_THREADS")
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// 33x33 scene at the reference pixel pitch.
const SMALL: &str = "out_dir = \"out\"\nscene = \"scene.sasg\"\ntruth = \"scene.sasg\"\n\
    [geometry]\ngrid_size = 33\nscene_extent = 0.1\n";

fn small_setup(extra: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let mut scene = RealGrid::zeros(33, 33);
    scene.set(12, 12, 1.0);
    scene.set(22, 19, 1.0);
    write_real_grid(dir.path().join("scene.sasg"), &scene).unwrap();
    std::fs::write(dir.path().join("run.toml"), format!("{SMALL}{extra}")).unwrap();
    dir
}

#[test]
fn default_config_delta_scene_images_at_center() {
    let dir = tempfile::tempdir().unwrap();
    let mut scene = RealGrid::zeros(129, 129);
    scene.set(64, 64, 1.0);
    write_real_grid(dir.path().join("delta.sasg"), &scene).unwrap();
    std::fs::write(dir.path().join("run.toml"), "scene = \"delta.sasg\"\n").unwrap();
    ok(dir.path(), &["--config", "run.toml", "simulate"]);
    let lambda = read_grid(dir.path().join("out/lambda.sasg")).unwrap().into_complex();
    let stats = grid_stats(&lambda).unwrap();
    assert_eq!(stats.argmax, (64, 64));
    assert!((stats.max_magnitude - 1.0).abs() < 1e-12);
    assert!(dir.path().join("out/lambda.png").exists());
    assert!(dir.path().join("out/measurements.sasm").exists());
}

#[test]
fn missing_scene_is_an_io_error_naming_the_path() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), "scene = \"nowhere/scene.sasg\"\n").unwrap();
    let out = run(dir.path(), &["--config", "run.toml", "simulate"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("nowhere/scene.sasg"));
}

#[test]
fn unknown_config_key_exits_2_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), "psf_mode = \"fast\"\n").unwrap();
    let out = run(dir.path(), &["--config", "run.toml", "psf"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("psf_mode"));
}

#[test]
fn unset_scene_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["simulate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("scene"));
}

#[test]
fn even_grid_psf_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), "[geometry]\ngrid_size = 64\n").unwrap();
    let out = run(dir.path(), &["--config", "run.toml", "psf"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_thread_env_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_sasdeconv"))
        .current_dir(dir.path())
        .arg("psf")
        .env("SASDECONV_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("SASDECONV_THREADS"));
}

#[test]
fn psf_is_deterministic_and_reports_support() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["--out", "a", "psf"]);
    ok(dir.path(), &["--out", "b", "psf"]);
    let a = std::fs::read(dir.path().join("a/psf.sasg")).unwrap();
    let b = std::fs::read(dir.path().join("b/psf.sasg")).unwrap();
    assert_eq!(a, b);
    let meta = std::fs::read_to_string(dir.path().join("a/psf_meta.toml")).unwrap();
    let radius: f64 = meta
        .lines()
        .find_map(|l| l.strip_prefix("support_radius_px = "))
        .unwrap()
        .parse()
        .unwrap();
    assert!(radius > 2.0 && radius < 14.0, "{radius}");
    assert!(meta.contains("peak_row = 64"));
    assert!(dir.path().join("a/psf.png").exists());
}

#[test]
fn pipeline_composes_through_files() {
    let dir = small_setup("[deconv]\niterations = 2000\nfeatures = 64\nhidden = 64\n");
    let p = dir.path();
    ok(p, &["--config", "run.toml", "simulate"]);
    ok(p, &["--config", "run.toml", "psf"]);
    ok(p, &["--config", "run.toml", "deconv"]);
    for f in ["sigma_hat.sasg", "b_estimated.sasg", "loss.csv", "panel.png", "metrics.toml", "checkpoint.sasc"] {
        assert!(p.join("out").join(f).exists(), "{f}");
    }
    let metrics = std::fs::read_to_string(p.join("out/metrics.toml")).unwrap();
    let value = |key: &str| -> f64 {
        metrics
            .lines()
            .find_map(|l| l.strip_prefix(&format!("{key} = ")))
            .unwrap()
            .parse()
            .unwrap()
    };
    assert!(value("psnr_db") > value("lambda_psnr_db"), "{metrics}");

    ok(p, &["--config", "run.toml", "invfilter"]);
    ok(p, &["--config", "run.toml", "wiener"]);
    assert!(p.join("out/inverse.sasg").exists());
    assert!(p.join("out/wiener.sasg").exists());
    let report = ok(p, &["--config", "run.toml", "metrics"]);
    assert!(report.contains("psnr_db"));
}

#[test]
fn snapshots_follow_the_configured_interval() {
    let dir = small_setup("[deconv]\niterations = 300\nfeatures = 8\nhidden = 8\nsnapshot_every = 100\n");
    let p = dir.path();
    ok(p, &["--config", "run.toml", "simulate"]);
    ok(p, &["--config", "run.toml", "psf"]);
    ok(p, &["--config", "run.toml", "deconv"]);
    let mut names: Vec<String> = std::fs::read_dir(p.join("out/snapshots"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names, ["sigma_000100.png", "sigma_000200.png", "sigma_000300.png"]);
    let log = std::fs::read_to_string(p.join("out/loss.csv")).unwrap();
    assert_eq!(log.lines().count(), 301);
}

#[test]
fn seed_changes_the_loss_log() {
    let dir = small_setup("[deconv]\niterations = 5\nfeatures = 8\nhidden = 8\n");
    let p = dir.path();
    ok(p, &["--config", "run.toml", "simulate"]);
    ok(p, &["--config", "run.toml", "psf"]);
    ok(p, &["--config", "run.toml", "--seed", "1", "deconv"]);
    let a = std::fs::read_to_string(p.join("out/loss.csv")).unwrap();
    ok(p, &["--config", "run.toml", "--seed", "2", "deconv"]);
    let b = std::fs::read_to_string(p.join("out/loss.csv")).unwrap();
    assert!(a.lines().zip(b.lines()).skip(1).any(|(x, y)| x != y));
}

#[test]
fn non_finite_loss_exits_4_and_keeps_the_log() {
    let dir = small_setup("[deconv]\niterations = 5\nfeatures = 8\nhidden = 8\n");
    let p = dir.path();
    ok(p, &["--config", "run.toml", "psf"]);
    let mut huge = ComplexGrid::zeros(33, 33);
    huge.set(3, 3, Complex64::new(1e300, 1e300));
    write_complex_grid(p.join("out/lambda.sasg"), &huge).unwrap();
    let out = run(p, &["--config", "run.toml", "deconv"]);
    assert_eq!(out.status.code(), Some(4));
    assert!(stderr(&out).contains("iteration 0"));
    let log = std::fs::read_to_string(p.join("out/loss.csv")).unwrap();
    assert_eq!(log.lines().nth(1), Some("0,inf"));
}

#[test]
fn mismatched_inputs_exit_3() {
    let dir = small_setup("");
    let p = dir.path();
    ok(p, &["--config", "run.toml", "psf"]);
    write_complex_grid(p.join("out/lambda.sasg"), &ComplexGrid::zeros(31, 31)).unwrap();
    let out = run(p, &["--config", "run.toml", "wiener"]);
    assert_eq!(out.status.code(), Some(3));
}
