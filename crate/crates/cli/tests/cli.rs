use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn movelight(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_movelight"))
        .args(args)
        .env("MOVELIGHT_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn single_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/scenarios/single.json")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn validate_accepts_bundled_scenarios() {
    let o = movelight(&["validate", "--scenario", s(&single_path())]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = movelight(&["validate", "--scenario", "grid4x4"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("16 intersections"));
}

#[test]
fn validate_lists_every_violation() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(single_path()).unwrap();
    let broken = text.replacen("\"capacity\": 40", "\"capacity\": 0", 2);
    let path = dir.path().join("broken.json");
    std::fs::write(&path, broken).unwrap();
    let o = movelight(&["validate", "--scenario", s(&path)]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert_eq!(err.matches("has capacity 0").count(), 2, "{err}");
}

#[test]
fn malformed_json_reports_position() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, "{\n  \"intersections\": [,]\n}").unwrap();
    let o = movelight(&["eval", "--scenario", s(&path), "--controller", "fixed"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
}

#[test]
fn missing_scenario_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = movelight(&[
        "train",
        "--scenario",
        "/definitely/not/here.json",
        "--episodes",
        "1",
        "--out-dir",
        s(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("not/here.json"));
}

#[test]
fn bad_flags_are_usage_errors() {
    assert_eq!(movelight(&["eval", "--scenario", "single", "--controller", "sorcery"]).status.code(), Some(1));
    assert_eq!(movelight(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(movelight(&["--help"]).status.code(), Some(0));
}

#[test]
fn movelight_without_checkpoint_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = movelight(&["eval", "--scenario", "single", "--controller", "movelight", "--out-dir", s(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn train_then_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let o = movelight(&["train", "--scenario", "single", "--episodes", "2", "--seed", "4", "--out-dir", s(out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let ck = out.join("checkpoint.json");
    assert!(ck.is_file());
    let episodes = std::fs::read_to_string(out.join("episodes.csv")).unwrap();
    assert_eq!(episodes.lines().count(), 3, "{episodes}");
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("train_report.json")).unwrap()).unwrap();
    assert_eq!(report["seed"], 4);

    let o = movelight(&[
        "eval",
        "--scenario",
        "single",
        "--controller",
        "movelight",
        "--checkpoint",
        s(&ck),
        "--seeds",
        "1,2",
        "--horizon",
        "600",
        "--out-dir",
        s(out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(out.join("eval.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.lines().nth(1).unwrap().starts_with("single,movelight,1,"));
}

#[test]
fn compare_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let o = movelight(&["compare", "--scenario", "single", "--seeds", "1,2,3,4,5", "--out-dir", s(dir.path())]);
        assert!(o.status.success(), "{}", stderr(&o));
        let table = String::from_utf8_lossy(&o.stdout).into_owned();
        for name in ["fixed", "webster", "maxpressure"] {
            assert!(table.contains(&format!("| {name} |")), "{table}");
        }
    }
    let read = |d: &tempfile::TempDir| std::fs::read_to_string(d.path().join("compare.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_eq!(read(&a).lines().count(), 1 + 3 * 5);
}

#[test]
fn ablate_heads_emits_one_row_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let o = movelight(&[
        "ablate",
        "--scenario",
        "single",
        "--sweep",
        "heads",
        "--episodes",
        "1",
        "--horizon",
        "300",
        "--eval-seeds",
        "1",
        "--out-dir",
        s(dir.path()),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("ablation.csv")).unwrap();
    let values: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(values, ["1", "3", "5", "7", "9"]);
}

#[test]
fn neighbor_sweep_needs_a_network() {
    let dir = tempfile::tempdir().unwrap();
    let o = movelight(&["ablate", "--scenario", "single", "--sweep", "neighbors", "--out-dir", s(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
}
