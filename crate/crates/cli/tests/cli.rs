//! End-to-end runs of the `srwalk` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn srwalk(args: &[&str]) -> Output {
    srwalk_with_threads(args, None)
}

fn srwalk_with_threads(args: &[&str], threads: Option<usize>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_srwalk"));
    cmd.args(args);
    if let Some(t) = threads {
        cmd.env("RAYON_NUM_THREADS", t.to_string());
    }
    cmd.output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn path_arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn schema_errors(summary: &Value) -> Vec<String> {
    let schema_path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("schema/summary.schema.json");
    let schema = read_json(&schema_path);
    let validator = jsonschema::validator_for(&schema).expect("schema compiles");
    validator.iter_errors(summary).map(|e| e.to_string()).collect()
}

fn without_runtime(mut v: Value) -> Value {
    v.as_object_mut().unwrap().remove("runtime");
    v
}

fn read_csv(p: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(p).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|x| x.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

#[test]
fn heisenberg_walk_reruns_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let run = |tag: &str, threads: usize| {
        let paths = dir.path().join(format!("paths-{tag}.jsonl"));
        let summary = dir.path().join(format!("summary-{tag}.json"));
        let o = srwalk_with_threads(
            &[
                "walk", "--model", "heisenberg", "--retraction", "exact-exp", "--epsilon", "0.05", "--steps", "100",
                "--replicas", "2", "--seed", "7", "--out-paths", path_arg(&paths), "--out-summary", path_arg(&summary),
            ],
            Some(threads),
        );
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        (std::fs::read(&paths).unwrap(), read_json(&summary))
    };
    let (p1, s1) = run("a", 1);
    let (p2, s2) = run("b", 4);
    assert_eq!(p1, p2);
    assert_eq!(without_runtime(s1.clone()), without_runtime(s2));
    assert!(schema_errors(&s1).is_empty(), "{:?}", schema_errors(&s1));

    let lines: Vec<Value> = String::from_utf8(p1).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 2 * 101);
    for l in &lines {
        assert_eq!(l["x"].as_array().unwrap().len(), 3);
        assert!(l.get("F").is_none());
    }
    let replicas: std::collections::BTreeSet<u64> = lines.iter().map(|l| l["replica"].as_u64().unwrap()).collect();
    assert_eq!(replicas.into_iter().collect::<Vec<_>>(), vec![0, 1]);
    assert_eq!(s1["rng"]["seed"], 7);
    assert_eq!(s1["result"]["censored"], 0);
    assert!(s1["runtime"]["wall_seconds"].as_f64().unwrap() >= 0.0);
}

#[test]
fn frame_walk_writes_frames_and_validates() {
    let dir = TempDir::new().unwrap();
    let paths = dir.path().join("p.jsonl");
    let summary = dir.path().join("s.json");
    let o = srwalk(&[
        "walk", "--model", "ellipsoid-frames", "--steps", "2000", "--record-every", "500",
        "--out-paths", path_arg(&paths), "--out-summary", path_arg(&summary),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&paths).unwrap();
    let first: Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(first["F"].as_array().unwrap().len(), 2);
    assert_eq!(text.lines().count(), 5);
    let s = read_json(&summary);
    assert!(schema_errors(&s).is_empty(), "{:?}", schema_errors(&s));
    assert!(s["result"]["max_frame_residual"].as_f64().unwrap() <= 1e-9);
    assert_eq!(s["config"]["retraction"], "ret3-prime");
}

#[test]
fn outputs_are_rewritten_not_appended() {
    let dir = TempDir::new().unwrap();
    let paths = dir.path().join("p.jsonl");
    std::fs::write(&paths, "stale\n".repeat(1000)).unwrap();
    let o = srwalk(&["walk", "--steps", "10", "--out-paths", path_arg(&paths)]);
    assert_eq!(code(&o), 0);
    let text = std::fs::read_to_string(&paths).unwrap();
    assert_eq!(text.lines().count(), 11);
    assert!(!text.contains("stale"));
}

#[test]
fn unknown_model_names_the_registry() {
    let o = srwalk(&["walk", "--model", "klein-bottle"]);
    assert_eq!(code(&o), 2);
    let err = String::from_utf8_lossy(&o.stderr);
    for name in ["heisenberg", "twisted", "ellipsoid", "ellipsoid-frames", "euclidean"] {
        assert!(err.contains(name), "{err}");
    }
}

#[test]
fn config_errors_exit_two() {
    assert_eq!(code(&srwalk(&["walk", "--retraction", "ret7"])), 2);
    assert_eq!(code(&srwalk(&["walk", "--epsilon", "-1"])), 2);
    assert_eq!(code(&srwalk(&["walk", "--model", "heisenberg", "--retraction", "ret3"])), 2);
    assert_eq!(code(&srwalk(&["walk", "--model", "ellipsoid-frames", "--retraction", "ret1"])), 2);
    assert_eq!(code(&srwalk(&["walk", "--bogus-flag"])), 2);
    assert_eq!(code(&srwalk(&["generator-test", "--probe", "nope"])), 2);
    assert_eq!(code(&srwalk(&["generator-test", "--eps-grid", "0.1,0.2"])), 2);
}

#[test]
fn config_file_values_yield_to_flags() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("exp.toml");
    std::fs::write(&cfg, "model = \"twisted\"\nsteps = 10\nseed = 3\nepsilon = 0.1\n").unwrap();
    let summary = dir.path().join("s.json");
    let o = srwalk(&["walk", "--config", path_arg(&cfg), "--steps", "20", "--out-summary", path_arg(&summary)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let s = read_json(&summary);
    assert_eq!(s["config"]["model"], "twisted");
    assert_eq!(s["config"]["steps"], 20);
    assert_eq!(s["config"]["seed"], 3);
    assert_eq!(s["config"]["epsilon"], 0.1);

    std::fs::write(&cfg, "modle = \"twisted\"\n").unwrap();
    assert_eq!(code(&srwalk(&["walk", "--config", path_arg(&cfg)])), 2);
    assert_eq!(code(&srwalk(&["walk", "--config", "/nonexistent/exp.toml"])), 2);
}

#[test]
fn unwritable_output_exits_four() {
    let o = srwalk(&["walk", "--steps", "5", "--out-summary", "/nonexistent-dir/s.json"]);
    assert_eq!(code(&o), 4);
    let o = srwalk(&["generator-test", "--model", "euclidean2", "--out-table", "/nonexistent-dir/g.csv"]);
    assert_eq!(code(&o), 4);
}

#[test]
fn all_censored_exits_three() {
    let dir = TempDir::new().unwrap();
    let summary = dir.path().join("s.json");
    let o = srwalk(&[
        "walk", "--model", "twisted", "--start", "3.3,0,0", "--epsilon", "0.3", "--steps", "400", "--replicas", "4",
        "--retraction", "ret1", "--out-summary", path_arg(&summary),
    ]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stdout));
    let s = read_json(&summary);
    assert_eq!(s["result"]["censored"], 4);
    assert!(schema_errors(&s).is_empty());
}

#[test]
fn euclidean_generator_errors_vanish() {
    let dir = TempDir::new().unwrap();
    let table = dir.path().join("g.csv");
    for r in ["exact-exp", "ret1", "ret2"] {
        let o = srwalk(&["generator-test", "--model", "euclidean2", "--retraction", r, "--out-table", path_arg(&table)]);
        assert_eq!(code(&o), 0);
        let (header, rows) = read_csv(&table);
        assert_eq!(header, ["epsilon", "point", "value", "laplacian", "limit", "abs_error"]);
        assert_eq!(rows.len(), 25);
        for row in rows {
            assert!(row[5].parse::<f64>().unwrap() <= 1e-12, "{r}: {row:?}");
        }
    }
}

#[test]
fn heisenberg_generator_table_and_summary() {
    let dir = TempDir::new().unwrap();
    let table = dir.path().join("g.csv");
    let summary = dir.path().join("s.json");
    let o = srwalk(&[
        "generator-test", "--model", "heisenberg", "--retraction", "exact-exp", "--probe", "quad_xy",
        "--out-table", path_arg(&table), "--out-summary", path_arg(&summary),
    ]);
    assert_eq!(code(&o), 0);
    let (_, rows) = read_csv(&table);
    for row in rows {
        // Δ^V(x² + y²) = 4 everywhere on Heisenberg
        assert_eq!(row[3].parse::<f64>().unwrap(), 4.0);
    }
    let s = read_json(&summary);
    assert!(schema_errors(&s).is_empty(), "{:?}", schema_errors(&s));
}

#[test]
fn generator_threshold_failure_exits_five() {
    let o = srwalk(&[
        "generator-test", "--model", "twisted", "--retraction", "ret2", "--connection", "flat", "--probe", "bump",
        "--out-table", "/dev/null",
    ]);
    assert_eq!(code(&o), 5);
    let o = srwalk(&[
        "generator-test", "--model", "twisted", "--retraction", "ret2", "--connection", "kappa-corrected", "--probe",
        "bump", "--out-table", "/dev/null",
    ]);
    assert_eq!(code(&o), 0);
}

#[test]
fn retraction_order_exit_codes() {
    let dir = TempDir::new().unwrap();
    let summary = dir.path().join("s.json");
    let table = dir.path().join("o.csv");
    let ok = srwalk(&["retraction-order", "--model", "heisenberg", "--retraction", "ret1", "--out-table", "/dev/null"]);
    assert_eq!(code(&ok), 0);
    let bad = srwalk(&[
        "retraction-order", "--model", "twisted", "--retraction", "ret2", "--connection", "flat", "--out-table", "/dev/null",
    ]);
    assert_eq!(code(&bad), 5);
    let frames = srwalk(&[
        "retraction-order", "--model", "ellipsoid", "--retraction", "ret3", "--samples", "5", "--out-table",
        path_arg(&table), "--out-summary", path_arg(&summary),
    ]);
    assert_eq!(code(&frames), 0, "{}", String::from_utf8_lossy(&frames.stderr));
    let (header, rows) = read_csv(&table);
    assert_eq!(header, ["sample", "t", "error", "frame_residual"]);
    assert_eq!(rows.len(), 5 * 5);
    let s = read_json(&summary);
    assert!(schema_errors(&s).is_empty(), "{:?}", schema_errors(&s));
}

#[test]
fn connection_check_matrices_match() {
    let dir = TempDir::new().unwrap();
    for model in ["heisenberg", "twisted", "ellipsoid", "euclidean3"] {
        let summary = dir.path().join(format!("{model}.json"));
        let o = srwalk(&["connection-check", "--model", model, "--out-summary", path_arg(&summary)]);
        assert_eq!(code(&o), 0, "{model}: {}", String::from_utf8_lossy(&o.stdout));
        let s = read_json(&summary);
        assert!(schema_errors(&s).is_empty(), "{:?}", schema_errors(&s));
        assert_eq!(s["result"]["passed"], true);
    }
    let o = srwalk(&["connection-check", "--model", "twisted", "--connection", "flat"]);
    let out = String::from_utf8_lossy(&o.stdout);
    assert!(out.contains("adjoint(flat)") && !out.contains("kappa"));
}

#[test]
fn seed_changes_the_walk() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a.jsonl");
    let b = dir.path().join("b.jsonl");
    assert_eq!(code(&srwalk(&["walk", "--steps", "20", "--seed", "1", "--out-paths", path_arg(&a)])), 0);
    assert_eq!(code(&srwalk(&["walk", "--steps", "20", "--seed", "2", "--out-paths", path_arg(&b)])), 0);
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}
