use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn dfsplit(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dfsplit"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], cwd: &Path) -> Output {
    let o = dfsplit(args, cwd);
    assert!(
        o.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    o
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    out.sort();
    out
}

#[test]
fn gen_writes_a_parseable_graph() {
    let t = TempDir::new().unwrap();
    let o = ok(&["gen", "stencil", "--iterations", "64", "--pes", "4"], t.path());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["vertices"].as_array().unwrap().len(), 6);
    for b in ["pagerank", "knn", "cnn"] {
        ok(&["gen", b, "-o", &format!("{b}.json")], t.path());
        assert!(json(&t.path().join(format!("{b}.json")))["edges"].is_array());
    }
}

#[test]
fn ring_partition_uses_four_device_indices() {
    let t = TempDir::new().unwrap();
    ok(&["gen", "knn", "-o", "g.json"], t.path());
    ok(&["partition", "g.json", "--topology", "ring", "--devices", "4", "--out", "b"], t.path());
    let a = json(&t.path().join("b/assignment.json"));
    assert_eq!(a["per_device_area"].as_object().unwrap().len(), 4);
    assert_eq!(a["mapping"].as_object().unwrap().len(), 27);
    assert!(a["mapping"].as_object().unwrap().values().all(|d| d.as_u64().unwrap() < 4));
}

#[test]
fn single_device_skips_network_insertion() {
    let t = TempDir::new().unwrap();
    ok(&["gen", "stencil", "--iterations", "64", "--pes", "4", "-o", "g.json"], t.path());
    ok(&["run", "g.json", "--devices", "1", "--out", "b"], t.path());
    let fp = json(&t.path().join("b/floorplan.json"));
    let ids: Vec<&String> = fp["mapping"].as_object().unwrap().keys().collect();
    assert_eq!(ids.len(), 6);
    assert!(ids.iter().all(|id| !id.ends_with(".send") && !id.ends_with(".recv")));
    let r = json(&t.path().join("b/report.json"));
    assert!(r["links"].as_array().unwrap().is_empty());
    assert!(r["total_time_s"].as_f64().unwrap() > 0.0);
    assert!(!t.path().join("b/FAILED_AT").exists());
}

#[test]
fn stages_compose_to_the_run_bundle() {
    let t = TempDir::new().unwrap();
    ok(
        &["gen", "knn", "--port-width", "512", "--buffer-kb", "128", "-o", "g.json"],
        t.path(),
    );
    let flags = ["--devices", "2"];
    let with = |cmd: &str, out: &str| {
        let mut v = vec![cmd, "g.json", "--out", out];
        v.extend(flags);
        v.into_iter().map(String::from).collect::<Vec<_>>()
    };
    let run = with("run", "whole");
    ok(&run.iter().map(String::as_str).collect::<Vec<_>>(), t.path());
    for cmd in ["partition", "floorplan", "pipeline", "simulate", "dot"] {
        let a = with(cmd, "staged");
        ok(&a.iter().map(String::as_str).collect::<Vec<_>>(), t.path());
    }
    let (whole, staged) = (files(&t.path().join("whole")), files(&t.path().join("staged")));
    assert_eq!(whole.len(), 6);
    assert_eq!(whole, staged);
}

#[test]
fn stage_without_inputs_reports_the_missing_stage() {
    let t = TempDir::new().unwrap();
    ok(&["gen", "pagerank", "-o", "g.json"], t.path());
    let o = dfsplit(&["pipeline", "g.json", "--out", "b"], t.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("partition"));
}

#[test]
fn invalid_cluster_file_names_the_path() {
    let t = TempDir::new().unwrap();
    ok(&["gen", "pagerank", "-o", "g.json"], t.path());
    fs::write(t.path().join("c.json"), r#"{"devices": 3}"#).unwrap();
    let o = dfsplit(&["partition", "g.json", "--cluster", "c.json", "--out", "b"], t.path());
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("c.json") && err.contains("devices"), "{err}");
}

#[test]
fn missing_graph_file_is_an_input_error() {
    let t = TempDir::new().unwrap();
    let o = dfsplit(&["run", "nope.json", "--out", "b"], t.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nope.json"));
}

#[test]
fn infeasible_partition_leaves_a_marker() {
    let t = TempDir::new().unwrap();
    ok(&["gen", "knn", "-o", "g.json"], t.path());
    let o = dfsplit(&["run", "g.json", "--threshold", "0.001", "--out", "b"], t.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("partition"));
    let marker = fs::read_to_string(t.path().join("b/FAILED_AT")).unwrap();
    assert_eq!(marker.lines().next(), Some("partition"));
    assert!(!t.path().join("b/assignment.json").exists());
}

#[test]
fn deep_pipelining_of_the_feedback_loop_is_a_deadlock() {
    let t = TempDir::new().unwrap();
    ok(&["gen", "pagerank", "-o", "g.json"], t.path());
    let o = dfsplit(&["run", "g.json", "--stages-per-crossing", "60", "--out", "b"], t.path());
    assert_eq!(o.status.code(), Some(5));
    assert!(String::from_utf8_lossy(&o.stderr).contains("pipeline"));
    // Everything up to the failing stage is kept.
    for f in ["assignment.json", "floorplan.json", "hbm.json", "design.dot"] {
        assert!(t.path().join("b").join(f).exists(), "{f}");
    }
    assert!(!t.path().join("b/latency.json").exists());
    let marker = fs::read_to_string(t.path().join("b/FAILED_AT")).unwrap();
    assert_eq!(marker.lines().next(), Some("pipeline"));
}

#[test]
fn time_limit_emits_an_uncertified_incumbent() {
    let t = TempDir::new().unwrap();
    ok(&["gen", "knn", "--modules", "54", "-o", "g.json"], t.path());
    let o = dfsplit(
        &["partition", "g.json", "--devices", "4", "--topology", "ring", "--time-limit", "0.2", "--out", "b"],
        t.path(),
    );
    assert_eq!(o.status.code(), Some(4));
    let a = json(&t.path().join("b/assignment.json"));
    assert_eq!(a["certified"], false);
    assert_eq!(a["feasible"], true);
}

#[test]
fn trace_is_written_as_json_lines() {
    let t = TempDir::new().unwrap();
    ok(&["gen", "stencil", "--iterations", "64", "--pes", "2", "-o", "g.json"], t.path());
    ok(&["run", "g.json", "--out", "b", "--trace", "trace.jsonl"], t.path());
    let text = fs::read_to_string(t.path().join("trace.jsonl")).unwrap();
    assert!(text.lines().count() > 0);
    for l in text.lines() {
        let _: serde_json::Value = serde_json::from_str(l).unwrap();
    }
}

#[test]
fn bad_flag_values_are_input_errors() {
    let t = TempDir::new().unwrap();
    ok(&["gen", "pagerank", "-o", "g.json"], t.path());
    for extra in [["--threshold", "1.5"], ["--freq", "0"], ["--time-limit", "-1"]] {
        let mut a = vec!["partition", "g.json", "--out", "b"];
        a.extend(extra);
        assert_eq!(dfsplit(&a, t.path()).status.code(), Some(2), "{extra:?}");
    }
}
