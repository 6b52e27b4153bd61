use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn model(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../models").join(name)
}

fn mfc(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mfc"))
        .arg("--out")
        .arg(out)
        .args(args)
        .env_remove("MFC_OUT")
        .output()
        .expect("binary runs")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn example_one_oracle_gives_zero() {
    let dir = tempfile::tempdir().unwrap();
    let m = model("example1.toml");
    let out = mfc(
        dir.path(),
        &[
            "solve-avg",
            "--model",
            m.to_str().unwrap(),
            "--N",
            "2",
            "--method",
            "oracle",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let result = json(&dir.path().join("result.json"));
    assert_eq!(result["result"]["j_star"].as_f64().unwrap(), 0.0);
    let manifest = json(&dir.path().join("manifest.json"));
    assert_eq!(manifest["command"], "solve-avg");
    assert_eq!(manifest["model_hash"], result["run"]["model_hash"]);
    assert!(manifest["wall_time_secs"].as_f64().is_some());
    let policy = fs::read_to_string(dir.path().join("policy.csv")).unwrap();
    assert!(policy.starts_with("# command=solve-avg\n# model_hash="));
}

#[test]
fn missing_model_reports_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = mfc(dir.path(), &["lift", "--model", "/no/such/model.toml", "--n", "2"]);
    assert_eq!(out.status.code(), Some(3));
    let err = json(&dir.path().join("error.json"));
    assert_eq!(err["path"], "/no/such/model.toml");
    assert_eq!(err["status"], 3);
    assert!(!dir.path().join("manifest.json").exists());
}

#[test]
fn failures_have_distinct_codes() {
    let dir = tempfile::tempdir().unwrap();
    let m = model("floor.toml");
    let m = m.to_str().unwrap();
    assert_eq!(mfc(dir.path(), &["frobnicate"]).status.code(), Some(2));
    assert_eq!(json(&dir.path().join("error.json"))["kind"], "usage");
    let cap = mfc(dir.path(), &["--max-states", "10", "lift", "--model", m, "--n", "6"]);
    assert_eq!(cap.status.code(), Some(4));
    let bad = mfc(dir.path(), &["solve-disc", "--model", m, "--n", "2", "--beta", "1.5"]);
    assert_eq!(bad.status.code(), Some(6));
    let slow = mfc(
        dir.path(),
        &[
            "solve-avg",
            "--model",
            m,
            "--n",
            "2",
            "--max-iter",
            "1",
            "--tol",
            "1e-14",
        ],
    );
    assert_eq!(slow.status.code(), Some(5));
    let garbage = dir.path().join("garbage.toml");
    fs::write(&garbage, "states = 3").unwrap();
    assert_eq!(
        mfc(dir.path(), &["check-model", "--model", garbage.to_str().unwrap()])
            .status
            .code(),
        Some(3)
    );
    assert!(mfc(dir.path(), &["--help"]).status.success());
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let m = model("lipschitz.toml");
    let m = m.to_str().unwrap();
    let policy = dir.path().join("policy.json");
    let files = ["mf/values.csv", "mf/policy.json", "flow/w1.csv", "flow/result.json"];
    let mut runs = Vec::new();
    for _ in 0..2 {
        let solve = mfc(
            &dir.path().join("mf"),
            &["mf-solve", "--model", m, "--grid", "6", "--mesh", "6", "--beta", "0.9"],
        );
        assert!(solve.status.success(), "{}", String::from_utf8_lossy(&solve.stderr));
        fs::copy(dir.path().join("mf/policy.json"), &policy).unwrap();
        let flow = mfc(
            &dir.path().join("flow"),
            &[
                "--seed",
                "7",
                "flow-mc",
                "--model",
                m,
                "--policy",
                policy.to_str().unwrap(),
                "--N",
                "8",
                "--T",
                "6",
                "--samples",
                "200",
            ],
        );
        assert!(flow.status.success(), "{}", String::from_utf8_lossy(&flow.stderr));
        runs.push(files.map(|f| fs::read(dir.path().join(f)).unwrap()));
    }
    for (i, f) in files.iter().enumerate() {
        assert_eq!(runs[0][i], runs[1][i], "{f}");
    }
    let other = mfc(
        &dir.path().join("other"),
        &[
            "--seed",
            "8",
            "flow-mc",
            "--model",
            m,
            "--policy",
            policy.to_str().unwrap(),
            "--N",
            "8",
            "--T",
            "6",
            "--samples",
            "200",
        ],
    );
    assert!(other.status.success());
    assert_ne!(runs[0][2], fs::read(dir.path().join("other/w1.csv")).unwrap());
}

#[test]
fn cached_lift_round_trips_through_solvers() {
    let dir = tempfile::tempdir().unwrap();
    let m = model("certified.toml");
    let m = m.to_str().unwrap();
    assert!(mfc(&dir.path().join("lift"), &["lift", "--model", m, "--n", "3"])
        .status
        .success());
    let cache = dir.path().join("lift/lifted.json");
    let cached = mfc(&dir.path().join("c"), &["solve-avg", "--mdp", cache.to_str().unwrap()]);
    assert!(cached.status.success(), "{}", String::from_utf8_lossy(&cached.stderr));
    assert!(mfc(&dir.path().join("d"), &["solve-avg", "--model", m, "--n", "3"])
        .status
        .success());
    let jc = json(&dir.path().join("c/result.json"))["result"]["j_star"]
        .as_f64()
        .unwrap();
    let jd = json(&dir.path().join("d/result.json"))["result"]["j_star"]
        .as_f64()
        .unwrap();
    assert_eq!(jc, jd);
    let v = mfc(
        &dir.path().join("v"),
        &["vanish", "--mdp", cache.to_str().unwrap(), "--kmax", "25"],
    );
    assert!(v.status.success());
    let jv = json(&dir.path().join("v/result.json"))["result"]["j_star"]
        .as_f64()
        .unwrap();
    assert!((jv - jc).abs() < 1e-5);
    let trace = fs::read_to_string(dir.path().join("v/trace.csv")).unwrap();
    assert!(trace.lines().any(|l| l == "beta,j_estimate,residual,policy_changes"));
}

#[test]
fn policy_artifact_feeds_evaluation() {
    let dir = tempfile::tempdir().unwrap();
    let m = model("lipschitz.toml");
    let m = m.to_str().unwrap();
    assert!(mfc(
        &dir.path().join("mf"),
        &["mf-solve", "--model", m, "--grid", "8", "--mesh", "8", "--avg"]
    )
    .status
    .success());
    let policy = dir.path().join("mf/policy.json");
    let ev = mfc(
        &dir.path().join("ev"),
        &[
            "eval-policy",
            "--model",
            m,
            "--policy",
            policy.to_str().unwrap(),
            "--N",
            "3",
        ],
    );
    assert!(ev.status.success(), "{}", String::from_utf8_lossy(&ev.stderr));
    let result = json(&dir.path().join("ev/result.json"));
    assert_eq!(result["result"]["values"].as_array().unwrap().len(), 4);
    // a policy for another model is refused
    let other = model("floor.toml");
    let wrong = mfc(
        &dir.path().join("wrong"),
        &[
            "eval-policy",
            "--model",
            other.to_str().unwrap(),
            "--policy",
            policy.to_str().unwrap(),
            "--N",
            "2",
        ],
    );
    assert_eq!(wrong.status.code(), Some(6));
}
