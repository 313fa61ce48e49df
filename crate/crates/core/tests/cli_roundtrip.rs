//! End-to-end checks of the command-line interface: exit codes, artifact
//! layout, environment override and byte-level determinism.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_spinlab")
}

fn scratch(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("spinlab_cli_{tag}_{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

const AUDIT_CONFIG: &str = r#"
[model]
spin-space = "line"
p = 4
r = 3
delta = 0.1

[model.lattice]
width = 2
height = 2

[chain]
seed = 11

[experiment]
kind = "audit-model"
sample-points = 120

[output]
dir = "out"
"#;

#[test]
fn run_audit_produces_artifacts_and_exit_zero() {
    let dir = scratch("audit");
    let cfg = write_config(&dir, "audit.toml", AUDIT_CONFIG);
    let out = Command::new(bin())
        .arg("run")
        .arg(&cfg)
        .env("SPINLAB_OUTPUT_ROOT", &dir)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(dir.join("out/run_manifest.json").exists());
    assert!(dir.join("out/audit.json").exists());
    assert!(dir.join("out/audit.csv").exists());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("PASS"), "no pass lines in: {stdout}");
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn reruns_are_byte_identical_except_manifest() {
    let dir = scratch("determinism");
    let cfg = write_config(&dir, "audit.toml", AUDIT_CONFIG);
    for sub in ["a", "b"] {
        let status = Command::new(bin())
            .arg("run")
            .arg(&cfg)
            .env("SPINLAB_OUTPUT_ROOT", dir.join(sub))
            .status()
            .unwrap();
        assert!(status.success());
    }
    let a = std::fs::read(dir.join("a/out/audit.csv")).unwrap();
    let b = std::fs::read(dir.join("b/out/audit.csv")).unwrap();
    assert_eq!(a, b);
    let a = std::fs::read(dir.join("a/out/audit.json")).unwrap();
    let b = std::fs::read(dir.join("b/out/audit.json")).unwrap();
    assert_eq!(a, b);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn invalid_config_exits_two_and_names_the_field() {
    let dir = scratch("invalid");
    let broken = AUDIT_CONFIG.replace("p = 4\n", "");
    let cfg = write_config(&dir, "broken.toml", &broken);
    let out = Command::new(bin()).arg("run").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("model.p"), "stderr: {stderr}");
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn oracle_failure_exits_three_with_partial_manifest() {
    let dir = scratch("fail");
    // telescoping needs a tiny window; 4x4 must fail with exit 3
    let body = AUDIT_CONFIG
        .replace("kind = \"audit-model\"", "kind = \"telescoping\"")
        .replace("width = 2", "width = 4")
        .replace("height = 2", "height = 4");
    let cfg = write_config(&dir, "fail.toml", &body);
    let out = Command::new(bin())
        .arg("run")
        .arg(&cfg)
        .env("SPINLAB_OUTPUT_ROOT", &dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    let manifest = std::fs::read_to_string(dir.join("out/run_manifest.json")).unwrap();
    assert!(manifest.contains("\"status\": \"failed\""));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn golden_flow_missing_then_regen_then_check() {
    let dir = scratch("golden");
    let golden_dir = dir.join("gold");
    let out = Command::new(bin())
        .arg("golden-check")
        .arg(&golden_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(4), "missing golden must exit 4");

    let status = Command::new(bin())
        .arg("regen-golden")
        .arg(&golden_dir)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(golden_dir.join("spinlab_golden.txt").exists());
    assert!(golden_dir.join("golden_manifest.json").exists());

    let status = Command::new(bin())
        .arg("golden-check")
        .arg(&golden_dir)
        .status()
        .unwrap();
    assert!(status.success());
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn repo_golden_file_matches_current_oracles() {
    let repo_golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../golden");
    let status = Command::new(bin())
        .arg("golden-check")
        .arg(&repo_golden)
        .status()
        .unwrap();
    assert!(status.success(), "checked-in golden values drifted");
}

#[test]
fn perturbed_golden_fails_on_that_key() {
    let dir = scratch("perturb");
    let golden_dir = dir.join("gold");
    assert!(Command::new(bin())
        .arg("regen-golden")
        .arg(&golden_dir)
        .status()
        .unwrap()
        .success());
    let path = golden_dir.join("spinlab_golden.txt");
    let text = std::fs::read_to_string(&path).unwrap();
    let perturbed: String = text
        .lines()
        .map(|l| {
            if l.starts_with("cc_vertical_unit") {
                "cc_vertical_unit 3.5549077018110318 0.000000001".to_string()
            } else {
                l.to_string()
            }
        })
        .collect::<Vec<_>>()
        .join("\n");
    std::fs::write(&path, perturbed).unwrap();
    let out = Command::new(bin())
        .arg("golden-check")
        .arg(&golden_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("cc_vertical_unit"));
    assert!(!stderr.contains("cc_planar_345"));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn shipped_sample_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().and_then(|e| e.to_str()) != Some("toml") {
            continue;
        }
        let text = std::fs::read_to_string(&path).unwrap();
        spinlab::config::parse_config(&text)
            .unwrap_or_else(|e| panic!("{} failed to parse: {e}", path.display()));
        seen += 1;
    }
    assert!(seen >= 8, "expected the shipped configs, found {seen}");
}
