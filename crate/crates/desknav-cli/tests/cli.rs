//! End-to-end checks of the command-line surface through the built binary.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_desknav"));
    cmd.env("RUST_BACKTRACE", "0");
    cmd
}

fn temp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("desknav-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

fn read_tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    fn walk(dir: &Path, base: &Path, out: &mut Vec<(String, Vec<u8>)>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(&path, base, out);
            } else {
                out.push((
                    path.strip_prefix(base).unwrap().to_string_lossy().into_owned(),
                    std::fs::read(&path).unwrap(),
                ));
            }
        }
    }
    walk(dir, dir, &mut out);
    out.sort();
    out
}

#[test]
fn gen_worlds_writes_deterministic_files() {
    let dir_a = temp("worlds-a");
    let dir_b = temp("worlds-b");
    for dir in [&dir_a, &dir_b] {
        let status = bin()
            .args(["gen-worlds", "--kind", "trap", "--count", "3", "--seed", "9"])
            .arg("--out")
            .arg(dir)
            .status()
            .unwrap();
        assert!(status.success());
    }
    let a = read_tree(&dir_a);
    let b = read_tree(&dir_b);
    assert_eq!(a.len(), 3);
    assert_eq!(a, b, "gen-worlds must be deterministic under a fixed seed");
    let _ = std::fs::remove_dir_all(&dir_a);
    let _ = std::fs::remove_dir_all(&dir_b);
}

#[test]
fn run_report_and_sweep_round_trip() {
    let dir = temp("run");
    let out = bin()
        .args(["run", "--preset", "smoke", "--seed", "11"])
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("planner-only"));
    assert!(dir.join("report.txt").exists());
    assert!(dir.join("config.json").exists());

    let report = bin().arg("report").arg("--dir").arg(&dir).output().unwrap();
    assert!(report.status.success());
    assert!(String::from_utf8_lossy(&report.stdout).contains("SPL%"));

    let sweep = bin()
        .args(["sweep-sdt", "--thresholds", "0.5,2.0"])
        .arg("--dir")
        .arg(&dir)
        .output()
        .unwrap();
    assert!(sweep.status.success());
    let sweep_text = String::from_utf8_lossy(&sweep.stdout);
    assert!(sweep_text.contains("0.50"));
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn calibrate_writes_a_loadable_model() {
    let dir = temp("cal");
    std::fs::create_dir_all(&dir).unwrap();
    let model_path = dir.join("model.json");
    let out = bin()
        .args([
            "calibrate",
            "--preset",
            "smoke",
            "--seed",
            "5",
            "--epsilon",
            "0.1",
            "--episodes-per-world",
            "4",
        ])
        .arg("--out")
        .arg(&model_path)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&model_path).unwrap();
    let value: serde_json::Value = serde_json::from_str(&text).unwrap();
    for field in ["epsilon", "tau", "n", "scores"] {
        assert!(value.get(field).is_some(), "model file missing {field}");
    }
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn bad_inputs_exit_nonzero() {
    let status = bin()
        .args(["gen-worlds", "--kind", "volcano", "--out", "/tmp/nowhere-desknav"])
        .status()
        .unwrap();
    assert!(!status.success());

    let status = bin()
        .args(["report", "--dir", "/tmp/desknav-definitely-missing"])
        .status()
        .unwrap();
    assert!(!status.success());
}
