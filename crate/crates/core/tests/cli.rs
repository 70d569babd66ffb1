use std::fs;
use std::process::Command;

fn lfi_lab() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lfi-lab"))
}

#[test]
fn run_writes_summary_trials_and_particles() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("two");
    let status = lfi_lab()
        .args(["run", "two-param", "--n", "100,200", "--trials", "3", "--seed", "4", "--strategies", "prior,mse-opt"])
        .arg("--out")
        .arg(&out)
        .arg("--dump-particles")
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&fs::read(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["schema_version"], 1);
    assert_eq!(summary["strategies"].as_array().unwrap().len(), 4);
    let lines = fs::read_to_string(out.join("trials.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 2 * 2 * 3);
    assert!(fs::read_dir(out.join("particles")).unwrap().count() >= 4);
}

#[test]
fn oracle_prints_json() {
    let out = lfi_lab().args(["oracle", "smc"]).output().unwrap();
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["mean"][0], 8.0);
    assert_eq!(v["mean"][1], 4.0);
}

#[test]
fn unknown_experiment_and_strategy_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let bad = lfi_lab().args(["run", "three-param", "--out"]).arg(dir.path()).output().unwrap();
    assert!(!bad.status.success());
    let bad = lfi_lab()
        .args(["run", "kde", "--trials", "1", "--strategies", "sideways", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("sideways"));
}

#[test]
fn unwritable_output_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("plain-file");
    fs::write(&file, "x").unwrap();
    let out = lfi_lab().args(["run", "two-param", "--n", "50", "--trials", "1", "--out"]).arg(file.join("sub")).output().unwrap();
    assert!(!out.status.success());
}
