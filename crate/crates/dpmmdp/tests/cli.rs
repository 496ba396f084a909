use std::path::Path;
use std::process::{Command, Output};

use dpmmdp::format::{ModelFile, PolicyFile, PrivateRelease};
use dpmmdp_core::solver::{exact_policy_value, Policy};
use serde_json::Value;

fn dpmmdp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dpmmdp"))
        .args(args)
        .env_remove("DPMMDP_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = dpmmdp(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> (i32, String) {
    let out = dpmmdp(args);
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

const TRIVIAL: &str = r#"{"gamma": 0.5, "agents": [{"states": 1, "actions": 1, "transition": [[[1.0]]], "reward": [1.0]}]}"#;

#[test]
fn solve_trivial_model() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("m.json");
    std::fs::write(&model, TRIVIAL).unwrap();
    let policy: PolicyFile = serde_json::from_str(&ok(&["solve", "--model", path_str(&model)])).unwrap();
    assert_eq!(policy.joint_policy, vec![0]);
    assert_eq!(policy.agent_policies, vec![vec![0]]);
    assert!((policy.value_at_start - 2.0).abs() < 1e-6);
}

#[test]
fn solve_single_chain_matches_enumeration() {
    let policy: PolicyFile = serde_json::from_str(&ok(&["solve", "--example", "chain", "--agents", "1", "--eta", "1e-9"])).unwrap();
    let model = dpmmdp::catalog::build(
        dpmmdp::catalog::ExampleKind::Chain,
        &dpmmdp::catalog::ExampleOptions {
            agents: Some(1),
            ..Default::default()
        },
        None,
    )
    .unwrap()
    .model;
    let mut best = (f64::NEG_INFINITY, vec![]);
    for a0 in 0..2 {
        for a1 in 0..2 {
            let v = exact_policy_value(&model, &Policy::new(vec![a0, a1], 2).unwrap()).unwrap();
            let total = v.get(0) + v.get(1);
            if total > best.0 {
                best = (total, vec![a0, a1]);
            }
        }
    }
    assert_eq!(policy.joint_policy, best.1);
}

#[test]
fn validation_errors_exit_two() {
    let (c, err) = code(&["solve", "--example", "chain", "--gamma", "1.0"]);
    assert_eq!(c, 2);
    assert!(err.contains("gamma < 1"), "{err}");
    let (c, err) = code(&["privatize", "--example", "chain", "--epsilon", "1", "--delta", "0", "--b", "1"]);
    assert_eq!(c, 2);
    assert!(err.contains("delta > 0"), "{err}");
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, TRIVIAL.replace("[1.0]]]", "[0.5]]]")).unwrap();
    assert_eq!(code(&["solve", "--model", path_str(&bad)]).0, 2);
    std::fs::write(&bad, "{not json").unwrap();
    assert_eq!(code(&["solve", "--model", path_str(&bad)]).0, 2);
    assert_eq!(code(&["solve"]).0, 2);
    assert_eq!(code(&["bounds", "epsilon", "--A", "1", "--delta", "0", "--b", "1", "--N", "2", "--nm", "8"]).0, 2);
}

#[test]
fn numeric_failure_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("huge.json");
    std::fs::write(&model, TRIVIAL.replace("\"reward\": [1.0]", "\"reward\": [1e307]").replace("0.5", "0.99")).unwrap();
    let (c, err) = code(&["solve", "--model", path_str(&model)]);
    assert_eq!(c, 3, "{err}");
}

#[test]
fn privatize_provenance_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    let args = |out: &Path| {
        vec![
            "privatize".to_string(),
            "--example".into(),
            "chain".into(),
            "--epsilon".into(),
            "1".into(),
            "--delta".into(),
            "0.01".into(),
            "--b".into(),
            "1".into(),
            "--seed".into(),
            "42".into(),
            "--out".into(),
            path_str(out).into(),
        ]
    };
    let run = |out: &Path| {
        let v = args(out);
        ok(&v.iter().map(String::as_str).collect::<Vec<_>>());
    };
    run(&a);
    run(&b);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let release: PrivateRelease = serde_json::from_slice(&std::fs::read(&a).unwrap()).unwrap();
    assert!((release.provenance.sigma - 2.524413669).abs() < 1e-8);
    assert_eq!(release.provenance.seed, 42);
    assert_eq!(release.provenance.mode, "input");
    assert_eq!(release.agent_rewards.as_ref().unwrap().len(), 2);
    assert_eq!(release.reward.len(), 16);
    assert_eq!(release.agent_policies.len(), 2);
}

#[test]
fn single_agent_modes_release_identical_rewards() {
    let common = ["privatize", "--example", "chain", "--agents", "1", "--epsilon", "0.7", "--delta", "0.05", "--b", "1", "--seed", "9"];
    let input: Value = serde_json::from_str(&ok(&[&common[..], &["--mode", "input"]].concat())).unwrap();
    let output: Value = serde_json::from_str(&ok(&[&common[..], &["--mode", "output"]].concat())).unwrap();
    assert_eq!(input["reward"].to_string(), output["reward"].to_string());
    assert_eq!(input["provenance"]["sigma"], output["provenance"]["sigma"]);
    assert_eq!(input["joint_policy"], output["joint_policy"]);
}

fn results(text: &str, key: &str) -> Vec<f64> {
    let v: Value = serde_json::from_str(text).unwrap();
    v["results"].as_array().unwrap().iter().map(|r| r[key].as_f64().unwrap()).collect()
}

#[test]
fn bounds_commands() {
    let acc = ok(&["bounds", "accuracy", "--epsilon", "1,0.1", "--delta", "0.01", "--b", "1", "--N", "2", "--nm", "8"]);
    let acc = results(&acc, "bound");
    assert!((acc[0] - 4.2712).abs() < 1e-3);
    assert!((acc[1] - 39.72).abs() < 1e-2);
    let eps = ok(&["bounds", "epsilon", "--A", "1,10", "--delta", "0.01", "--b", "1", "--N", "2", "--nm", "8"]);
    let eps = results(&eps, "epsilon");
    assert!((eps[0] - 5.3674).abs() < 1e-3);
    assert!((eps[1] - 0.4079).abs() < 1e-3);
    let order = ok(&["bounds", "order", "--example", "gridworld", "--epsilon", "0.1,1", "--delta", "0.1", "--b", "1"]);
    let order = results(&order, "bound");
    assert!((order[0] - 0.6261).abs() < 5e-4);
    assert!((order[1] - 0.9961).abs() < 5e-4);
    let literal = ok(&["bounds", "order", "--reward", "5,-1,-1,-1", "--epsilon", "0.1", "--delta", "0.1", "--b", "1"]);
    assert!((results(&literal, "bound")[0] - 0.6261).abs() < 5e-4);
    let iters = ok(&["bounds", "iterations", "--r-max", "1", "--N", "1", "--nm", "256", "--epsilon", "0.01", "--delta", "0.1", "--b", "1"]);
    assert_eq!(results(&iters, "ceiling_term"), vec![3597.0]);
}

#[test]
fn bounds_with_monte_carlo_write_tables() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("fig2a.csv");
    let text = ok(&[
        "bounds", "accuracy", "--example", "chain", "--agents", "1", "--epsilon", "0.5,2", "--delta", "0.01", "--b", "1",
        "--samples", "200", "--seed", "3", "--out", path_str(&csv),
    ]);
    let v: Value = serde_json::from_str(&text).unwrap();
    for r in v["results"].as_array().unwrap() {
        assert!(r["empirical"]["mean"].as_f64().unwrap() < r["bound"].as_f64().unwrap());
    }
    let table = std::fs::read_to_string(&csv).unwrap();
    assert!(table.starts_with("epsilon,bound,empirical_mean,empirical_se,samples\n"));
    assert_eq!(table.lines().count(), 3);
    let (c, _) = code(&["bounds", "accuracy", "--epsilon", "1", "--delta", "0.01", "--b", "1", "--N", "2", "--nm", "8", "--samples", "10"]);
    assert_eq!(c, 2);
}

#[test]
fn sweep_is_byte_stable() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        ok(&[
            "sweep", "--example", "chain", "--epsilon", "0.5,1,2", "--delta", "0.1", "--b", "2", "--samples", "20",
            "--seed", "5", "--out", path_str(&out),
        ]);
        out
    };
    let a = run("a.csv");
    let b = run("b.csv");
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let agg = dir.path().join("a_aggregate.csv");
    assert_eq!(std::fs::read(&agg).unwrap(), std::fs::read(dir.path().join("b_aggregate.csv")).unwrap());
    let rows = dpmmdp::sweep::read_sweep_csv(&a).unwrap();
    assert_eq!(rows.len(), 60);
    let text = std::fs::read_to_string(&a).unwrap();
    assert!(text.starts_with("epsilon,sample,seed,mode,cost_percent,max_abs_error,goal_preserved,k1,k2,computations\n"));
    assert!(!dir.path().join("a.csv.partial").exists());
    assert_eq!(std::fs::read_to_string(&agg).unwrap().lines().count(), 4);
}

#[test]
fn sweep_validation_leaves_no_final_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s.csv");
    let base = ["sweep", "--example", "chain", "--delta", "0.1", "--b", "2", "--out", path_str(&out)];
    assert_eq!(code(&[&base[..], &["--epsilon", ""]].concat()).0, 2);
    assert_eq!(code(&[&base[..], &["--epsilon", "-1"]].concat()).0, 2);
    assert_eq!(code(&[&base[..], &["--epsilon", "1", "--samples", "0"]].concat()).0, 2);
    assert!(!out.exists());
}

#[test]
fn output_directory_variable() {
    let dir = tempfile::tempdir().unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_dpmmdp"))
        .args(["dump-model", "--example", "gridworld", "--out", "grid.json"])
        .env("DPMMDP_OUT_DIR", dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    let file = ModelFile::parse(&std::fs::read_to_string(dir.path().join("grid.json")).unwrap()).unwrap();
    assert_eq!(file.start, Some(12 * 16 + 15));
    assert_eq!(file.agents.len(), 2);
}

#[test]
fn dumped_model_solves_like_the_example() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("chain.json");
    ok(&["dump-model", "--example", "chain", "--agents", "3", "--out", path_str(&path)]);
    let from_file = ok(&["solve", "--model", path_str(&path)]);
    let from_example = ok(&["solve", "--example", "chain", "--agents", "3"]);
    assert_eq!(from_file, from_example);
}
