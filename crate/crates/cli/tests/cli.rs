use std::path::Path;
use std::process::{Command, Output};

fn mpplab(args: &[&str], cwd: &Path) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_mpplab"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs");
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn gen_then_eval_opt() {
    let dir = tempfile::tempdir().unwrap();
    mpplab(&["gen", "--layers", "2", "--sizes", "2", "--seed", "4", "-o", "inst.json"], dir.path());
    let out = mpplab(&["eval-opt", "inst.json"], dir.path());
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert!(v["opt"].as_f64().unwrap() > 0.0);
    assert!(v["occupancy"].is_object());
}

#[test]
fn lowerbound_instance_has_unit_opt() {
    let dir = tempfile::tempdir().unwrap();
    mpplab(&["gen", "--lowerbound", "0.1", "--which", "1", "-o", "lb.json"], dir.path());
    let out = mpplab(&["eval-opt", "lb.json"], dir.path());
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["opt"].as_f64().unwrap(), 1.0);
}

#[test]
fn run_and_fit_exponent() {
    let dir = tempfile::tempdir().unwrap();
    mpplab(&["gen", "--layers", "2", "--sizes", "2", "--seed", "4", "-o", "inst.json"], dir.path());
    std::fs::write(
        dir.path().join("run.toml"),
        r#"
horizon = 200
seeds = [1]
output_dir = "out"
instance = "inst.json"

[learner]
kind = "fixed-policy"
policy = "uniform"
"#,
    )
    .unwrap();
    mpplab(&["run", "run.toml"], dir.path());
    assert!(dir.path().join("out/manifest.json").exists());
    let out = mpplab(&["fit-exponent", "out/fixed-policy_seed1.csv", "--column", "t"], dir.path());
    let slope: f64 = stdout(&out).trim().parse().unwrap();
    assert!((slope - 1.0).abs() < 1e-9);
}

#[test]
fn unknown_config_keys_fail() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), "horizon = 5\nseeds = [1]\noutput_dir = \"o\"\ncolour = 1\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_mpplab"))
        .args(["run", "bad.toml"])
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("colour"));
}
