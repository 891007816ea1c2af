use std::fs;
use std::path::{Path, PathBuf};

use shardsim::cli::{main_with_args, EXIT_INFEASIBLE, EXIT_INPUT, EXIT_OK};
use shardsim::{parse_workload, TraceDoc};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn run(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("shardsim").chain(args.iter().copied());
    let code = main_with_args(argv, &mut out, &mut err);
    (
        code,
        String::from_utf8(out).unwrap(),
        String::from_utf8(err).unwrap(),
    )
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn simulate_w1_shard_parallel() {
    let config = fixture("w1.json");
    let (code, out, _) = run(&[
        "simulate",
        "--config",
        path_str(&config),
        "--policy",
        "shard",
    ]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(
        out,
        "policy,makespan,utilization,feasible,peak_mem\nshard,8,1.0,true,2\n"
    );
}

#[test]
fn simulate_w1_task_parallel_is_infeasible() {
    let config = fixture("w1.json");
    let (code, out, err) = run(&[
        "simulate",
        "--config",
        path_str(&config),
        "--policy",
        "task",
    ]);
    assert_eq!(code, EXIT_INFEASIBLE);
    assert!(out.ends_with("task,,,false,\n"), "{out}");
    assert!(err.contains("infeasible"), "{err}");
}

#[test]
fn simulate_writes_trace_and_summary_files() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.json");
    let summary = dir.path().join("summary.csv");
    let config = fixture("w1.json");
    let (code, out, _) = run(&[
        "simulate",
        "--config",
        path_str(&config),
        "--policy",
        "model",
        "--trace",
        path_str(&trace),
        "--summary",
        path_str(&summary),
    ]);
    assert_eq!(code, EXIT_OK);
    assert!(out.is_empty());
    assert_eq!(
        fs::read_to_string(&summary).unwrap().lines().nth(1),
        Some("model,32,0.25,true,2")
    );
    let doc = TraceDoc::from_json(&fs::read_to_string(&trace).unwrap()).unwrap();
    assert_eq!(doc.policy, "model");
    assert_eq!(doc.assignments.len(), 32);
}

#[test]
fn missing_config_is_an_input_error() {
    let (code, _, err) = run(&[
        "simulate",
        "--config",
        "/nonexistent/w.json",
        "--policy",
        "shard",
    ]);
    assert_eq!(code, EXIT_INPUT);
    assert!(err.contains("cannot read"), "{err}");

    let (code, _, _) = run(&["simulate", "--policy", "shard"]);
    assert_eq!(code, EXIT_INPUT);
}

#[test]
fn unknown_policy_is_an_input_error() {
    let config = fixture("w1.json");
    let (code, _, err) = run(&[
        "simulate",
        "--config",
        path_str(&config),
        "--policy",
        "data",
    ]);
    assert_eq!(code, EXIT_INPUT);
    assert!(err.contains("data"), "{err}");
}

#[test]
fn invalid_config_reports_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    let text = fs::read_to_string(fixture("w1.json")).unwrap().replacen(
        "\"memory_capacity\": 2",
        "\"memory_capacity\": 1",
        4,
    );
    fs::write(&bad, text).unwrap();
    let (code, _, err) = run(&["simulate", "--config", path_str(&bad), "--policy", "shard"]);
    assert_eq!(code, EXIT_INPUT);
    assert!(err.contains("models[0].shards[0]"), "{err}");
}

#[test]
fn compare_w1() {
    let config = fixture("w1.json");
    let (code, out, _) = run(&["compare", "--config", path_str(&config)]);
    assert_eq!(code, EXIT_OK);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(
        lines,
        [
            "policy,makespan,utilization,feasible,peak_mem,speedup_vs_model_parallel,shard_best",
            "shard,8,1.0,true,2,4.0,true",
            "model,32,0.25,true,2,1.0,true",
            "task,,,false,,,true",
        ]
    );
}

#[test]
fn compare_roomy_w1_ties() {
    let config = fixture("w1_roomy.json");
    let (code, out, _) = run(&["compare", "--config", path_str(&config)]);
    assert_eq!(code, EXIT_OK);
    let lines: Vec<&str> = out.lines().skip(1).collect();
    assert!(lines[0].starts_with("shard,8,"), "{out}");
    assert!(lines[2].starts_with("task,8,1.0,true,"), "{out}");
    assert!(lines.iter().all(|l| l.ends_with(",true")), "{out}");
}

#[test]
fn compare_single_model_all_policies_coincide() {
    let config = fixture("single_model.json");
    let (code, out, _) = run(&["compare", "--config", path_str(&config)]);
    assert_eq!(code, EXIT_OK);
    for line in out.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields[1], "8", "{line}");
        assert_eq!(fields[5], "1.0", "{line}");
    }
}

#[test]
fn compare_to_file() {
    let dir = tempfile::tempdir().unwrap();
    let dest = dir.path().join("cmp.csv");
    let config = fixture("w1.json");
    let (code, out, _) = run(&[
        "compare",
        "--config",
        path_str(&config),
        "--out",
        path_str(&dest),
    ]);
    assert_eq!(code, EXIT_OK);
    assert!(out.is_empty());
    assert_eq!(fs::read_to_string(dest).unwrap().lines().count(), 4);
}

#[test]
fn verify_gradients_two_shards() {
    let (code, out, _) = run(&[
        "verify-gradients",
        "--dims",
        "4,8,2",
        "--shards",
        "2",
        "--seed",
        "7",
        "--batch",
        "4",
        "--steps",
        "5",
    ]);
    assert_eq!(code, EXIT_OK, "{out}");
    assert!(out.lines().any(|l| l == "max_diff=0"), "{out}");
    assert!(out.lines().any(|l| l == "verdict=pass"), "{out}");
}

#[test]
fn verify_gradients_single_shard() {
    let (code, _, _) = run(&[
        "verify-gradients",
        "--dims",
        "4,8,2",
        "--shards",
        "1",
        "--seed",
        "7",
        "--batch",
        "4",
        "--steps",
        "5",
    ]);
    assert_eq!(code, EXIT_OK);
}

#[test]
fn verify_gradients_rejects_too_many_shards() {
    let (code, _, err) = run(&[
        "verify-gradients",
        "--dims",
        "4,8,2",
        "--shards",
        "5",
        "--seed",
        "7",
        "--batch",
        "4",
        "--steps",
        "5",
    ]);
    assert_eq!(code, EXIT_INPUT);
    assert!(!err.is_empty());
}

#[test]
fn verify_gradients_rejects_bad_dims() {
    let (code, _, _) = run(&[
        "verify-gradients",
        "--dims",
        "4,x,2",
        "--shards",
        "1",
        "--seed",
        "7",
        "--batch",
        "4",
        "--steps",
        "1",
    ]);
    assert_eq!(code, EXIT_INPUT);
}

#[test]
fn gen_workload_w1_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let dest = dir.path().join("w1.json");
    let (code, _, _) = run(&[
        "gen-workload",
        "--models",
        "4",
        "--shards",
        "4",
        "--devices",
        "4",
        "--cost",
        "1,1",
        "--profile",
        "tight",
        "--out",
        path_str(&dest),
    ]);
    assert_eq!(code, EXIT_OK);
    let generated = parse_workload(&fs::read_to_string(&dest).unwrap()).unwrap();
    let hand_written = parse_workload(&fs::read_to_string(fixture("w1.json")).unwrap()).unwrap();
    assert_eq!(generated, hand_written);

    let (code, out, _) = run(&["simulate", "--config", path_str(&dest), "--policy", "shard"]);
    assert_eq!(code, EXIT_OK);
    assert!(out.contains("shard,8,1.0,true,2"));
}

#[test]
fn gen_workload_to_stdout_is_deterministic() {
    let args = [
        "gen-workload",
        "--models",
        "3",
        "--shards",
        "2",
        "--devices",
        "2",
        "--cost",
        "0.5,4",
        "--profile",
        "roomy",
        "--seed",
        "9",
        "--minibatches",
        "2",
    ];
    let (code, first, _) = run(&args);
    assert_eq!(code, EXIT_OK);
    assert_eq!(run(&args).1, first);
    let spec = parse_workload(&first).unwrap();
    assert_eq!(spec.models.len(), 3);
    assert_eq!(spec.models[0].minibatches_per_epoch, 2);
}

#[test]
fn gen_workload_rejects_zero_models() {
    let (code, _, _) = run(&[
        "gen-workload",
        "--models",
        "0",
        "--shards",
        "4",
        "--devices",
        "4",
        "--cost",
        "1,1",
        "--profile",
        "tight",
    ]);
    assert_eq!(code, EXIT_INPUT);
}

#[test]
fn gen_workload_rejects_inverted_cost_range() {
    let (code, _, _) = run(&[
        "gen-workload",
        "--models",
        "1",
        "--shards",
        "1",
        "--devices",
        "1",
        "--cost",
        "3,1",
        "--profile",
        "tight",
    ]);
    assert_eq!(code, EXIT_INPUT);
}

#[test]
fn help_exits_zero() {
    let (code, out, _) = run(&["--help"]);
    assert_eq!(code, EXIT_OK);
    assert!(out.contains("verify-gradients"));
}
