use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const TINY: &str = r#"
[grid]
training_intervals = 10
testing_intervals = 20

[[curriculum.stages]]
batches = 3
alpha_max = 0.6
n_fock = 14
batch_size = 2
pump = true

[tomography]
readout = "fast"
samples = 400
calibration_shots = 1000
"#;

fn catpulse(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_catpulse"))
        .args(args)
        .arg("--threads")
        .arg("1")
        .current_dir(dir)
        .env_remove("CATPULSE_OUT")
        .env_remove("CATPULSE_THREADS")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = catpulse(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn tiny_setup() -> TempDir {
    let dir = TempDir::new().unwrap();
    std::fs::write(dir.path().join("tiny.toml"), TINY).unwrap();
    dir
}

fn train_tiny(dir: &Path, out: &str, seed: &str) {
    ok(dir, &["--config", "tiny.toml", "--seed", seed, "--out", out, "train"]);
}

#[test]
fn heralding_reports_binomial_tails() {
    let dir = TempDir::new().unwrap();
    ok(dir.path(), &["--out", "h", "heralding"]);
    let h = read_json(&dir.path().join("h/heralding.json"));
    assert!((h["herald_given_ground"].as_f64().unwrap() - 0.974384).abs() < 1e-6);
    assert!((h["herald_given_excited"].as_f64().unwrap() - 0.013836).abs() < 1e-6);
    let m = read_json(&dir.path().join("h/manifest.json"));
    assert_eq!(m["command"], "heralding");
    assert_eq!(m["config_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn training_is_reproducible_per_seed() {
    let dir = tiny_setup();
    train_tiny(dir.path(), "a", "7");
    train_tiny(dir.path(), "b", "7");
    train_tiny(dir.path(), "c", "8");
    let read = |d: &str| std::fs::read(dir.path().join(d).join("weights.json")).unwrap();
    assert_eq!(read("a"), read("b"));
    assert_ne!(read("a"), read("c"));
    let log = std::fs::read_to_string(dir.path().join("a/training_log.csv")).unwrap();
    assert_eq!(log.lines().count(), 4);
    assert!(dir.path().join("a/checkpoints").is_dir());
}

#[test]
fn generate_writes_coefficients_and_waveforms() {
    let dir = tiny_setup();
    train_tiny(dir.path(), "t", "1");
    ok(dir.path(), &["--out", "g", "generate", "--weights", "t/weights.json", "--alpha", "0.5,1", "--phi", "0,1.5"]);
    let pulses = read_json(&dir.path().join("g/coefficients.json"));
    let pulses = pulses.as_array().unwrap();
    assert_eq!(pulses.len(), 4);
    for p in pulses {
        assert_eq!(p["coefficients"].as_array().unwrap().len(), 36);
        let wave = std::fs::read_to_string(dir.path().join("g").join(p["waveform"].as_str().unwrap())).unwrap();
        let mut lines = wave.lines();
        assert!(lines.next().unwrap().starts_with("t_us,"));
        // The envelope vanishes at both ends.
        let first: Vec<f64> = lines.next().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
        assert!(first[1..].iter().all(|v| *v == 0.0));
    }
}

#[test]
fn evaluate_idle_controls_on_vacuum() {
    let dir = TempDir::new().unwrap();
    let mut csv = String::from("t_ns,reC,imC,reQ,imQ\n");
    for j in 0..20 {
        csv += &format!("{},0,0,0,0\n", 100 * j);
    }
    std::fs::write(dir.path().join("idle.csv"), csv).unwrap();
    ok(dir.path(), &["--out", "e", "evaluate", "--controls", "idle.csv", "--alpha", "0", "--mode", "schrodinger"]);
    let rows = read_json(&dir.path().join("e/evaluation.json"));
    assert!((rows[0]["fidelity"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    ok(dir.path(), &["--out", "e", "evaluate", "--controls", "idle.csv", "--alpha", "0", "--mode", "corrected"]);
    let rows = read_json(&dir.path().join("e/evaluation.json"));
    assert!(rows[0]["correction"].as_f64().unwrap().abs() < 1e-12);
}

#[test]
fn tomography_replays_its_samples() {
    let dir = tiny_setup();
    train_tiny(dir.path(), "t", "2");
    let args = ["--config", "tiny.toml", "--seed", "5", "--out", "s", "tomography", "--weights", "t/weights.json", "--alpha", "0.5"];
    ok(dir.path(), &args);
    let first = read_json(&dir.path().join("s/estimate.json"));
    let samples = std::fs::read(dir.path().join("s/samples.csv")).unwrap();
    ok(dir.path(), &args);
    assert_eq!(samples, std::fs::read(dir.path().join("s/samples.csv")).unwrap());

    let contrast = first["contrast"].as_f64().unwrap().to_string();
    ok(dir.path(), &["--out", "r", "tomography", "--replay", "s/samples.csv", "--alpha", "0.5", "--contrast", &contrast]);
    let replay = read_json(&dir.path().join("r/estimate.json"));
    assert_eq!(first["estimate"], replay["estimate"]);
    assert_eq!(first["stderr"], replay["stderr"]);
    assert_eq!(replay["n_samples"], 400);
}

#[test]
fn bad_configuration_is_rejected() {
    let dir = TempDir::new().unwrap();
    std::fs::write(dir.path().join("typo.toml"), "[system]\nchi_mhzz = 1.0\n").unwrap();
    let out = catpulse(dir.path(), &["--config", "typo.toml", "heralding"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("chi_mhzz"));

    std::fs::write(dir.path().join("neg.toml"), "[system]\nt_q_us = -1.0\n").unwrap();
    assert!(!catpulse(dir.path(), &["--config", "neg.toml", "heralding"]).status.success());

    let missing = catpulse(dir.path(), &["generate", "--weights", "nope.json", "--alpha", "1"]);
    assert!(!missing.status.success());
    let bad_env = Command::new(env!("CARGO_BIN_EXE_catpulse"))
        .args(["--out", "x", "heralding"])
        .current_dir(dir.path())
        .env("CATPULSE_THREADS", "many")
        .output()
        .unwrap();
    assert!(!bad_env.status.success());
}
