//! Drives the `rocoforge` binary end to end.

use std::net::TcpListener;
use std::path::Path;
use std::process::{Command, Output};

fn rocoforge(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rocoforge"))
        .args(args)
        .current_dir(dir)
        .env_remove("ROCOFORGE_CACHE")
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn fixture(dir: &Path) {
    let out = rocoforge(&["fixture", "--dir", "data", "--images", "8"], dir);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.join("data/dataset_coco.json").exists());
}

const SMALL: &[&str] = &[
    "--corpus",
    "data/dataset_coco.json",
    "--models",
    "stub",
    "--policy",
    "rand_voca,delete_random",
    "--lambda",
    "0.9",
    "--mode",
    "mix",
    "--seed",
    "0,1",
];

fn with<'a>(cmd: &'a str, extra: &[&'a str]) -> Vec<&'a str> {
    let mut v = vec![cmd];
    v.extend_from_slice(SMALL);
    v.extend_from_slice(extra);
    v
}

#[test]
fn run_prints_the_report() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path());
    let out = rocoforge(&with("run", &["--out", "out", "--jobs", "2"]), dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("coco5k_i2t"));
    assert!(stdout.contains("rand_voca"));
    assert!(stdout.contains("mix_0.9"));
    for f in ["eval/report.csv", "report/report.md", "report/report.txt", "cache/stub-64.embc"] {
        assert!(dir.path().join("out").join(f).exists(), "{f}");
    }
}

#[test]
fn stages_can_run_one_at_a_time() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path());
    for stage in ["ingest", "ei", "gen-captions", "gen-images", "embed", "eval", "report"] {
        let out = rocoforge(&with(stage, &["--out", "out"]), dir.path());
        assert!(out.status.success(), "{stage}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let staged = std::fs::read(dir.path().join("out/eval/report.csv")).unwrap();
    let out = rocoforge(&with("run", &["--out", "again"]), dir.path());
    assert!(out.status.success());
    assert_eq!(staged, std::fs::read(dir.path().join("again/eval/report.csv")).unwrap());
}

#[test]
fn eval_without_manifests_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path());
    let out = rocoforge(&with("ingest", &["--out", "out"]), dir.path());
    assert!(out.status.success());
    let out = rocoforge(&with("eval", &["--out", "out"]), dir.path());
    assert_eq!(out.status.code(), Some(2));
    let out = rocoforge(&["ingest", "--corpus", "nope.json", "--out", "x"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unreachable_provider_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path());
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let url = format!("http://127.0.0.1:{port}");
    let out = rocoforge(&with("ingest", &["--out", "out"]), dir.path());
    assert!(out.status.success());
    let out = rocoforge(&with("ei", &["--out", "out", "--provider-url", &url, "--models", "clip"]), dir.path());
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn config_file_and_cache_env() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path());
    std::fs::write(
        dir.path().join("run.toml"),
        r#"
corpus = "data/dataset_coco.json"
models = ["stub"]
policies = ["danger"]
modes = ["patch"]
lambdas = [0.7]
seeds = [5]
out_dir = "cfg-out"
"#,
    )
    .unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_rocoforge"))
        .args(["run", "--config", "run.toml"])
        .current_dir(dir.path())
        .env("ROCOFORGE_CACHE", dir.path().join("shared-cache"))
        .env("RUST_LOG", "warn")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("cfg-out/eval/report.csv")).unwrap();
    assert!(csv.contains("danger,5,"));
    assert!(csv.contains("patch_0.7,5,"));
    assert!(dir.path().join("shared-cache/stub-64.embc").exists());
    assert!(!dir.path().join("cfg-out/cache").exists());
}

#[test]
fn invalid_arguments_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path());
    let out = rocoforge(&with("run", &["--out", "out", "--models", "clip:7"]), dir.path());
    assert_eq!(out.status.code(), Some(1));
    let out = rocoforge(&["run", "--corpus", "data/dataset_coco.json", "--lambda", "1.5"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}
