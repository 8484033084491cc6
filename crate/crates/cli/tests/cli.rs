use std::path::Path;
use std::process::{Command, Output};

fn stplan(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stplan"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn error_kind(out: &Output) -> String {
    let v: serde_json::Value = serde_json::from_slice(&out.stderr).expect("error JSON on stderr");
    v["error"]["kind"].as_str().expect("kind").to_string()
}

#[test]
fn gen_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["a.jsonl", "b.jsonl"] {
        assert!(
            stplan(dir.path(), &["gen", "--preset", "moe", "--seed", "3", "-o", name])
                .status
                .success()
        );
    }
    let a = std::fs::read(dir.path().join("a.jsonl")).unwrap();
    assert!(!a.is_empty());
    assert_eq!(a, std::fs::read(dir.path().join("b.jsonl")).unwrap());
}

#[test]
fn full_pipeline_on_dense_reduces_fragmentation() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(stplan(
        d,
        &["gen", "--preset", "dense_recompute", "--seed", "1", "-o", "t.jsonl"]
    )
    .status
    .success());
    assert!(stplan(d, &["plan", "t.jsonl", "-o", "p.json"]).status.success());
    assert!(d.join("p.stats.json").exists());
    assert!(stplan(d, &["compare", "t.jsonl", "--plan", "p.json", "-o", "c.json"])
        .status
        .success());
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(d.join("c.json")).unwrap()).unwrap();
    assert!(report["fragmentation_reduction"].as_f64().unwrap() > 0.0);
    assert!(report["memory_saved_bytes"].as_i64().unwrap() > 0);
    assert_eq!(report["planner"]["mismatch_count"], 0);
}

#[test]
fn stats_path_override() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(
        stplan(d, &["gen", "--layers", "2", "--microbatches", "2", "-o", "t.jsonl"])
            .status
            .success()
    );
    assert!(stplan(
        d,
        &["plan", "t.jsonl", "-o", "p.json", "--stats", "s.json", "--no-fusion"]
    )
    .status
    .success());
    let stats: serde_json::Value = serde_json::from_slice(&std::fs::read(d.join("s.json")).unwrap()).unwrap();
    assert_eq!(stats["fusion"], false);
    assert!(stats["wall_time_ms"].is_number());
}

#[test]
fn render_of_empty_plan() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("empty.json"),
        r#"{"version":1,"pool_size":0,"alignment":512,"decisions":[],"reuse_map":[]}"#,
    )
    .unwrap();
    let out = stplan(d, &["render", "empty.json", "-o", "e.svg"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let svg = std::fs::read_to_string(d.join("e.svg")).unwrap();
    assert!(svg.contains("<svg") && !svg.contains("class=\"decision\""));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();

    let missing = stplan(d, &["baseline", "missing.jsonl", "-o", "r.json"]);
    assert_eq!(missing.status.code(), Some(2));
    assert_eq!(error_kind(&missing), "io");

    std::fs::write(d.join("bad.jsonl"), "{\"version\":1}\nnot json\n").unwrap();
    let malformed = stplan(d, &["baseline", "bad.jsonl", "-o", "r.json"]);
    assert_eq!(malformed.status.code(), Some(1));
    assert_eq!(error_kind(&malformed), "validation");

    let usage = stplan(d, &["plan"]);
    assert_eq!(usage.status.code(), Some(1));

    assert_eq!(stplan(d, &["--help"]).status.code(), Some(0));
}
