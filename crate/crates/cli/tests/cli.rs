use std::path::PathBuf;
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_clockctbn")).args(args).output().expect("binary runs")
}

fn stdout_json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("json output")
}

fn path(p: &PathBuf) -> &str {
    p.to_str().unwrap()
}

#[test]
fn validate_accepts_the_fixture_model() {
    let out = run(&["validate", "--model", path(&fixture("weibull_chain.json"))]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout_json(&out)["model"], "model");
}

#[test]
fn validate_each_format() {
    let out = run(&[
        "validate",
        "--model",
        path(&fixture("weibull_chain.json")),
        "--traj",
        path(&fixture("weibull_chain_trajs.jsonl")),
        "--tsv",
        path(&fixture("gnw_series.tsv")),
        "--matrix",
        path(&fixture("weibull_chain_structure.golden.json")),
    ]);
    let v = stdout_json(&out);
    assert_eq!(v["trajectories"], 40);
    assert_eq!(v["series"], 3);
    assert_eq!(v["matrix"], 3);
    assert_eq!(run(&["validate"]).status.code(), Some(1));
}

#[test]
fn missing_required_flag_is_a_usage_error() {
    let out = run(&["sample", "--end-time", "5", "--seed", "1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--model"));
    assert!(out.stdout.is_empty());
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&[]).status.code(), Some(1));
}

#[test]
fn sample_requires_a_seed() {
    let out = run(&["sample", "--model", path(&fixture("weibull_chain.json")), "--end-time", "5"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn every_subcommand_has_help() {
    for sub in ["sample", "loglik", "stats", "fit-params", "fit-structure", "score", "ingest-gnw", "experiment", "validate"] {
        let out = run(&[sub, "--help"]);
        assert_eq!(out.status.code(), Some(0), "{sub}");
        assert!(String::from_utf8_lossy(&out.stdout).contains("Usage"), "{sub}");
    }
}

#[test]
fn bad_data_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.jsonl");
    std::fs::write(&bad, "{\"init\":[0,0,0],\"end_time\":1.0}\n{\"t\":2.0,\"node\":0,\"state\":1}\n").unwrap();
    let out = run(&["loglik", "--model", path(&fixture("weibull_chain.json")), "--traj", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let garbled = dir.path().join("garbled.jsonl");
    std::fs::write(&garbled, "{\"init\":[0,0,0],\"end_time\":1.0}\nnot json\n").unwrap();
    let out = run(&["validate", "--traj", garbled.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

#[test]
fn fit_structure_matches_golden_output() {
    let out = run(&[
        "fit-structure",
        "--trajs",
        path(&fixture("weibull_chain_trajs.jsonl")),
        "--family",
        "weibull",
        "--max-indegree",
        "2",
    ]);
    assert!(out.status.success());
    let golden = std::fs::read(fixture("weibull_chain_structure.golden.json")).unwrap();
    assert_eq!(out.stdout, golden);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let parents: Vec<serde_json::Value> = v["nodes"].as_array().unwrap().iter().map(|n| n["map_parents"].clone()).collect();
    assert_eq!(parents, vec![serde_json::json!([]), serde_json::json!([0]), serde_json::json!([1])]);
}

#[test]
fn fit_structure_reads_directories() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::copy(fixture("weibull_chain_trajs.jsonl"), dir.path().join("a.jsonl")).unwrap();
    let out = run(&["fit-structure", "--trajs", dir.path().to_str().unwrap(), "--max-indegree", "2"]);
    let golden = std::fs::read(fixture("weibull_chain_structure.golden.json")).unwrap();
    assert_eq!(out.stdout, golden);
    let base = stdout_json(&run(&["fit-structure", "--trajs", dir.path().to_str().unwrap(), "--baseline"]));
    assert_eq!(base["family"], "exponential");
}

#[test]
fn score_against_model_and_matrix_truth() {
    let golden = fixture("weibull_chain_structure.golden.json");
    let v = stdout_json(&run(&["score", "--scores", path(&golden), "--truth", path(&fixture("weibull_chain.json"))]));
    assert_eq!(v["auroc"], 1.0);
    assert_eq!(v["aupr"], 1.0);
    let dir = tempfile::tempdir().unwrap();
    let truth = dir.path().join("truth.json");
    std::fs::write(&truth, "[[0,0,1],[1,0,0],[0,1,0]]").unwrap();
    let v = stdout_json(&run(&["score", "--scores", path(&golden), "--truth", truth.to_str().unwrap()]));
    assert!(v["auroc"].as_f64().unwrap() < 0.5);
    std::fs::write(&truth, "[[0,1,1],[1,0,1],[1,1,0]]").unwrap();
    assert_eq!(run(&["score", "--scores", path(&golden), "--truth", truth.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn loglik_and_stats_agree_on_trajectory_count() {
    let model = fixture("weibull_chain.json");
    let trajs = fixture("weibull_chain_trajs.jsonl");
    let v = stdout_json(&run(&["loglik", "--model", path(&model), "--traj", path(&trajs)]));
    let per_traj: f64 = v["per_trajectory"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).sum();
    let per_node: f64 = v["per_node"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).sum();
    let total = v["total"].as_f64().unwrap();
    assert!((per_traj - total).abs() < 1e-9 * total.abs());
    assert!((per_node - total).abs() < 1e-12 * total.abs());
    let s = stdout_json(&run(&["stats", "--model", path(&model), "--traj", path(&trajs), "--regime"]));
    assert_eq!(s["keys"].as_array().unwrap().len(), 10);
}

#[test]
fn fit_params_grid_is_normalized() {
    let v = stdout_json(&run(&[
        "fit-params",
        "--model-structure",
        path(&fixture("weibull_chain.json")),
        "--traj",
        path(&fixture("weibull_chain_trajs.jsonl")),
        "--grid",
        "--grid-points",
        "12",
    ]));
    assert_eq!(v["family"], "weibull");
    for key in v["keys"].as_array().unwrap() {
        let w: f64 = key["grid"]["weights"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).sum();
        assert!((w - 1.0).abs() < 1e-12);
        assert_eq!(key["map"].as_array().unwrap().len(), 2);
    }
}

#[test]
fn ingest_writes_golden_jsonl() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("trajs.jsonl");
    let status = run(&["ingest-gnw", "--in", path(&fixture("gnw_series.tsv")), "--out", out.to_str().unwrap()]);
    assert!(status.status.success());
    assert_eq!(std::fs::read(&out).unwrap(), std::fs::read(fixture("gnw_series.golden.jsonl")).unwrap());
    let bad = dir.path().join("bad.tsv");
    std::fs::write(&bad, "Time\tA\n0\t0.1\n1\tnope\n").unwrap();
    let out = run(&["ingest-gnw", "--in", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
}

#[test]
fn experiment_writes_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"seed": 5, "num_nodes": 3, "max_indegree": 1, "replicates": 2, "sample_sizes": [30, 60]}"#).unwrap();
    let out_dir = dir.path().join("out");
    let out = run(&["experiment", "mse", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap(), "--threads", "2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["mse.csv", "relative_errors.csv", "estimates.csv", "summary.json"] {
        assert!(out_dir.join(f).exists(), "{f}");
    }
    std::fs::write(&cfg, r#"{"seed": 5, "sample_sizes": []}"#).unwrap();
    let out = run(&["experiment", "mse", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}
