//! End-to-end checks of the `traffic-games` binary: exit codes, output
//! files, and byte-level determinism of repeated runs.

use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_traffic-games"))
}

fn repo_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn scenario(name: &str) -> String {
    repo_root().join("scenarios").join(name).display().to_string()
}

fn fixture(name: &str) -> String {
    repo_root().join("fixtures").join(name).display().to_string()
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn assert_code(out: &Output, want: i32, ctx: &str) {
    assert_eq!(
        out.status.code(),
        Some(want),
        "{ctx}\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr),
    );
}

#[test]
fn version_names_the_config_schema() {
    let out = run(&["--version"]);
    assert_code(&out, 0, "--version");
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("config schema 1"), "got: {text}");
}

#[test]
fn solve_runs_are_byte_identical() {
    let dir_a = tempfile::tempdir().expect("tempdir");
    let dir_b = tempfile::tempdir().expect("tempdir");
    let sc = scenario("pp.json");
    let common = ["solve", "--scenario", &sc, "--model", "spne", "--types", "0,0", "--seed", "11"];
    let out_a = run(&[&common[..], &["--out", dir_a.path().to_str().unwrap()]].concat());
    let out_b = run(&[&common[..], &["--out", dir_b.path().to_str().unwrap()]].concat());
    assert_code(&out_a, 0, "first solve");
    assert_code(&out_b, 0, "second solve");

    // The out-dir path appears on the "wrote ..." line, so compare stdout
    // with that line normalized away.
    let strip = |raw: &[u8]| -> String {
        String::from_utf8_lossy(raw)
            .lines()
            .filter(|l| !l.starts_with("wrote "))
            .collect::<Vec<_>>()
            .join("\n")
    };
    assert_eq!(strip(&out_a.stdout), strip(&out_b.stdout), "stdout must not vary");

    let file_a = std::fs::read(dir_a.path().join("solution-pp-spne.json")).expect("solution A");
    let file_b = std::fs::read(dir_b.path().join("solution-pp-spne.json")).expect("solution B");
    assert!(!file_a.is_empty());
    assert_eq!(file_a, file_b, "solution files must be byte-identical");
}

#[test]
fn unknown_model_is_a_usage_error() {
    let sc = scenario("pp.json");
    let out = run(&["solve", "--scenario", &sc, "--model", "bogus", "--types", "0,0"]);
    assert_code(&out, 2, "unknown model");
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("model"), "stderr should name the problem: {err}");
}

#[test]
fn missing_manifest_is_a_usage_error() {
    let tracks = fixture("tracks.csv");
    let out = run(&["evaluate", "--tracks", &tracks, "--manifest", "/nonexistent/m.json", "--model", "ac"]);
    assert_code(&out, 2, "missing manifest");
}

#[test]
fn malformed_tracks_are_a_data_error() {
    let dir = tempfile::tempdir().expect("tempdir");
    let bad = dir.path().join("tracks.csv");
    std::fs::write(&bad, "track_id,frame\n1,not-a-frame,extra\n").expect("write bad csv");
    let manifest = fixture("manifest.json");
    let out = run(&[
        "evaluate",
        "--tracks",
        bad.to_str().unwrap(),
        "--manifest",
        &manifest,
        "--model",
        "ac",
    ]);
    assert_code(&out, 4, "malformed tracks");
}

#[test]
fn simulate_writes_the_metrics_table() {
    let dir = tempfile::tempdir().expect("tempdir");
    let sc = scenario("pp.json");
    let out = run(&[
        "simulate",
        "--scenario",
        &sc,
        "--models",
        "sspe",
        "--grid-types",
        "-1,1",
        "--seed",
        "7",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_code(&out, 0, "simulate");
    let csv = std::fs::read_to_string(dir.path().join("metrics.csv")).expect("metrics.csv");
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("model,scenario,mean_success,sd_across_types,crash_rate"),
        "column order is part of the interface"
    );
    assert!(lines.next().is_some_and(|l| l.starts_with("sspe,PP,")));
    let jsonl = std::fs::read_to_string(dir.path().join("runs.jsonl")).expect("runs.jsonl");
    assert!(jsonl.lines().count() > 0, "per-run log should not be empty");
}

#[test]
fn evaluate_partitions_the_bundled_fixture() {
    let dir = tempfile::tempdir().expect("tempdir");
    let tracks = fixture("tracks.csv");
    let manifest = fixture("manifest.json");
    let mut totals = Vec::new();
    let mut matched = 0_u64;
    for model in ["ac", "nac"] {
        let out = run(&[
            "evaluate",
            "--tracks",
            &tracks,
            "--manifest",
            &manifest,
            "--model",
            model,
            "--out",
            dir.path().to_str().unwrap(),
        ]);
        assert_code(&out, 0, model);
        let report: serde_json::Value = serde_json::from_slice(
            &std::fs::read(dir.path().join(format!("match-{model}.json"))).expect("report"),
        )
        .expect("report parses");
        totals.push(report["total"].as_u64().unwrap());
        matched += report["matched"].as_u64().unwrap();
    }
    assert_eq!(totals, vec![40, 40]);
    assert_eq!(matched, 40, "the two automata must partition the corpus");
}

#[test]
fn oracle_check_small_batch_passes() {
    let out = run(&["oracle-check", "--instances", "12", "--concepts", "spne,ac", "--seed", "3"]);
    assert_code(&out, 0, "oracle-check");
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(text.matches(" pass").count(), 2, "got: {text}");
    assert!(!text.contains("FAIL"), "got: {text}");
}
