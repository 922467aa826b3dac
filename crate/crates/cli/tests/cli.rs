use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sha2::{Digest, Sha256};
use tempfile::TempDir;

fn zakai(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_zakai"))
        .args(args)
        .env("ZAKAI_OUTPUT_ROOT", dir.join("out"))
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn run_config(dir: &Path, name: &str, text: &str) -> Output {
    let path = write_config(dir, name, text);
    zakai(dir, &["run", path.to_str().unwrap()])
}

fn csv_column(path: &Path, column: &str) -> Vec<String> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let k = header.iter().position(|h| *h == column).unwrap();
    lines.map(|l| l.split(',').nth(k).unwrap().to_string()).collect()
}

const GAUSSIAN_CHECK: &str = r#"
kind = "symbol-check"

[model]
alpha = 2.0
dim = 2
diffusion = [[1.0, 0.0], [0.0, 1.0]]

[ensemble]
seed = 3
"#;

const CAUCHY_KERNEL: &str = r#"
kind = "kernel"

[model]
alpha = 1.0
dim = 1
density = 0.5

[grid]
n = 1024
half_width = 20.0
snapshots = [0.5, 1.0]

[output]
snapshots = true
"#;

const SOLVE: &str = r#"
kind = "solve"

[model]
alpha = 1.5
dim = 1
density = 0.5

[grid]
n = 64
half_width = 3.141592653589793
snapshots = [0.5, 1.0]

[marks]
atoms = [[1.0, 2.0], [-0.5, 2.0]]

[source]
f_modes = [[1.0, 1.0, 0.0]]

[ensemble]
paths = 40
seed = 11

[norm]
lambda = 1.0
"#;

const MOMENTS: &str = r#"
kind = "moments"

[marks]
atoms = [[1.0, 1.0], [-0.5, 2.0]]

[ensemble]
paths = 4000
seed = 7
"#;

#[test]
fn symbol_check_on_gaussian_identity() {
    let tmp = TempDir::new().unwrap();
    let out = run_config(tmp.path(), "check.toml", GAUSSIAN_CHECK);
    assert!(out.status.success(), "{}", stderr(&out));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("pass"), "{stdout}");
    let csv = tmp.path().join("out/symbol-check/symbol_check.csv");
    let mu: f64 = csv_column(&csv, "mu_hat")[0].parse().unwrap();
    assert!((mu - 0.5).abs() < 1e-12);
    assert_eq!(csv_column(&csv, "pass")[0], "true");
}

#[test]
fn kernel_density_has_unit_mass() {
    let tmp = TempDir::new().unwrap();
    let out = run_config(tmp.path(), "kernel.toml", CAUCHY_KERNEL);
    assert!(out.status.success(), "{}", stderr(&out));
    let dir = tmp.path().join("out/kernel");
    for mass in csv_column(&dir.join("kernel_summary.csv"), "mass") {
        assert!((mass.parse::<f64>().unwrap() - 1.0).abs() <= 1e-6);
    }
    assert_eq!(csv_column(&dir.join("kernel_density.csv"), "density").len(), 2 * 1024);
    assert!(dir.join("kernel_0.bin").exists() && dir.join("kernel_1.bin").exists());
}

#[test]
fn manifest_traces_config_and_artifacts() {
    let tmp = TempDir::new().unwrap();
    let out = run_config(tmp.path(), "solve.toml", SOLVE);
    assert!(out.status.success(), "{}", stderr(&out));
    let dir = tmp.path().join("out/solve");
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config_sha256"], format!("{:x}", Sha256::digest(SOLVE.as_bytes())));
    assert_eq!(manifest["seed"], 11);
    assert_eq!(manifest["kind"], "solve");
    assert!(manifest["runtime_seconds"].as_f64().unwrap() >= 0.0);
    for a in manifest["artifacts"].as_array().unwrap() {
        let bytes = fs::read(dir.join(a["file"].as_str().unwrap())).unwrap();
        assert_eq!(a["sha256"], format!("{:x}", Sha256::digest(&bytes)));
    }
}

#[test]
fn identical_config_gives_identical_csv() {
    for (name, text, files) in [
        ("solve", SOLVE, vec!["solution.csv", "events.csv"]),
        ("moments", MOMENTS, vec!["moments.csv"]),
    ] {
        let a = TempDir::new().unwrap();
        let b = TempDir::new().unwrap();
        assert!(run_config(a.path(), "c.toml", text).status.success());
        let path = write_config(b.path(), "c.toml", text);
        assert!(zakai(b.path(), &["run", "--sequential", path.to_str().unwrap()]).status.success());
        for f in files {
            let x = fs::read(a.path().join("out").join(name).join(f)).unwrap();
            let y = fs::read(b.path().join("out").join(name).join(f)).unwrap();
            assert!(x == y, "{name}/{f} differs between runs");
        }
    }
}

#[test]
fn validate_accepts_good_config() {
    let tmp = TempDir::new().unwrap();
    let path = write_config(tmp.path(), "ok.toml", SOLVE);
    let out = zakai(tmp.path(), &["validate", path.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(!tmp.path().join("out").exists());
}

fn validate_failure(text: &str) -> String {
    let tmp = TempDir::new().unwrap();
    let path = write_config(tmp.path(), "bad.toml", text);
    let out = zakai(tmp.path(), &["validate", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let run = zakai(tmp.path(), &["run", path.to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(1));
    stderr(&out)
}

#[test]
fn missing_grid_block_is_named() {
    let text = SOLVE.replace("[grid]\nn = 64\nhalf_width = 3.141592653589793\nsnapshots = [0.5, 1.0]\n", "");
    let msg = validate_failure(&text);
    assert!(msg.contains("grid: missing block [grid] required for kind solve"), "{msg}");
}

#[test]
fn uncentered_cauchy_density_is_reported() {
    let text = CAUCHY_KERNEL.replace("density = 0.5", "masses = [0.2, 0.8]");
    let msg = validate_failure(&text);
    assert!(msg.contains("model.masses") && msg.contains("centering"), "{msg}");
}

#[test]
fn alpha_out_of_range_is_reported() {
    let text = CAUCHY_KERNEL.replace("alpha = 1.0", "alpha = 3.0");
    let msg = validate_failure(&text);
    assert!(msg.contains("model.alpha") && msg.contains("outside the range"), "{msg}");
}

#[test]
fn schema_violations_are_reported() {
    let msg = validate_failure(&SOLVE.replace("seed = 11", ""));
    assert!(msg.contains("seed"), "{msg}");
    let msg = validate_failure(&SOLVE.replace("paths = 40", "paths = 40\nworkers = 2"));
    assert!(msg.contains("workers"), "{msg}");
    let msg = validate_failure(&SOLVE.replace("kind = \"solve\"", "kind = \"plot\""));
    assert!(msg.contains("plot"), "{msg}");
}

#[test]
fn under_resolved_kernel_is_a_runtime_failure() {
    let tmp = TempDir::new().unwrap();
    let text = CAUCHY_KERNEL.replace("alpha = 1.0", "alpha = 0.7").replace("n = 1024", "n = 16");
    let out = run_config(tmp.path(), "coarse.toml", &text);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
}

#[test]
fn output_root_override() {
    let tmp = TempDir::new().unwrap();
    let text = format!("{GAUSSIAN_CHECK}\n[output]\nroot = \"elsewhere\"\nname = \"gauss\"\n");
    assert!(run_config(tmp.path(), "c.toml", &text).status.success());
    assert!(tmp.path().join("out/gauss/symbol_check.csv").exists());
}
