use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn reference() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/reference_warehouse.json")
}

fn twins(args: &[&str], scenario: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_twins"))
        .args(args)
        .arg("--scenario")
        .arg(scenario)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn body(path: &Path) -> String {
    // Skip the provenance line.
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn malformed_scenario_exits_2_with_location() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{\n  \"schema_version\": 1,\n  \"deployment\": { \"kind\": \"shelf_rows\" },\n  \"object\": oops\n}\n").unwrap();
    let out = twins(&["simulate", "--seed", "1"], &bad, &dir.path().join("o"));
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.json:4:"), "{err}");
}

#[test]
fn unknown_field_and_bad_arguments_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(reference())
        .unwrap()
        .replacen("\"name\"", "\"nmae\"", 1);
    let bad = dir.path().join("typo.json");
    fs::write(&bad, text).unwrap();
    assert_eq!(twins(&["train"], &bad, dir.path()).status.code(), Some(2));
    assert_eq!(
        twins(&["sweep", "--kind", "nope"], &reference(), dir.path())
            .status
            .code(),
        Some(2)
    );
    let out = Command::new(env!("CARGO_BIN_EXE_twins"))
        .args(["simulate", "--seed", "x"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn track_without_fingerprint_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = twins(&["track", "--seed", "1"], &reference(), dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("fingerprint"));
}

#[test]
fn corrupt_fingerprint_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    assert!(twins(&["train", "--seed", "1"], &reference(), dir.path())
        .status
        .success());
    let fp = dir.path().join("fingerprint.csv");
    let mut lines: Vec<String> = fs::read_to_string(&fp)
        .unwrap()
        .lines()
        .map(String::from)
        .collect();
    lines[5] = "0,1,two,0.5".into();
    fs::write(&fp, lines.join("\n")).unwrap();
    let out = twins(&["track", "--seed", "1"], &reference(), dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("fingerprint.csv:6"));
}

#[test]
fn tracking_a_recorded_trace_matches_in_memory_tracking() {
    let dir = tempfile::tempdir().unwrap();
    let (sim, mem, replay) = (
        dir.path().join("sim"),
        dir.path().join("mem"),
        dir.path().join("replay"),
    );
    assert!(twins(&["simulate", "--seed", "7"], &reference(), &sim)
        .status
        .success());
    assert!(twins(&["train", "--seed", "7"], &reference(), &mem)
        .status
        .success());
    assert!(twins(&["track", "--seed", "7"], &reference(), &mem)
        .status
        .success());
    let fp = mem.join("fingerprint.csv");
    let args = [
        "track",
        "--seed",
        "7",
        "--fingerprint",
        fp.to_str().unwrap(),
        "--trace",
        sim.to_str().unwrap(),
    ];
    assert!(twins(&args, &reference(), &replay).status.success());
    assert_eq!(
        body(&mem.join("trajectory.csv")),
        body(&replay.join("trajectory.csv"))
    );
    assert_eq!(
        body(&mem.join("coarse.csv")),
        body(&replay.join("coarse.csv"))
    );
}

#[test]
fn one_trial_evaluation_agrees_with_track() {
    let dir = tempfile::tempdir().unwrap();
    assert!(twins(&["train", "--seed", "4"], &reference(), dir.path())
        .status
        .success());
    assert!(twins(&["track", "--seed", "4"], &reference(), dir.path())
        .status
        .success());
    assert!(twins(
        &["evaluate", "--seed", "4", "--trials", "1"],
        &reference(),
        dir.path()
    )
    .status
    .success());
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap())
            .unwrap();
    assert_eq!(report["mean_error_m"], summary["mean_error_m"]);
    assert_eq!(summary["sd_error_m"], 0.0);
}

#[test]
fn outputs_carry_provenance() {
    let dir = tempfile::tempdir().unwrap();
    assert!(
        twins(&["simulate", "--seed", "2"], &reference(), dir.path())
            .status
            .success()
    );
    for f in [
        "events.csv",
        "ground_truth.csv",
        "queries.csv",
        "jsets.csv",
        "windows.csv",
    ] {
        let first = fs::read_to_string(dir.path().join(f))
            .unwrap()
            .lines()
            .next()
            .unwrap()
            .to_string();
        assert!(
            first.starts_with("# scenario=") && first.ends_with(" seed=2"),
            "{f}: {first}"
        );
    }
}
