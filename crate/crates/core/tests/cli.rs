//! End-to-end runs of the `sdbli` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const MINIMAL: &str = r#"{
  "grid": {"n": 3}, "system": {"P": 1, "scheme": "stripes"},
  "truth": {"kind": "gaussian_bumps", "seed": 1},
  "training": {"N": 3, "seed": 2},
  "solver": {"max_iters": 40},
  "diagnostics": {"R": 2, "slack": 0.001, "record_period": 5},
  "output": {"directory": "out", "prefix": "run"}
}"#;

fn sdbli(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sdbli"))
        .current_dir(dir)
        .args(args)
        .env_remove("SDBLI_THREADS")
        .output()
        .unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn generate_writes_a_reproducible_manifested_set() {
    let tmp = tempfile::tempdir().unwrap();
    write_config(tmp.path(), "c.json", MINIMAL);
    let o = sdbli(tmp.path(), &["generate", "--config", "c.json"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = tmp.path().join("out");
    let mut names: Vec<String> = std::fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    assert_eq!(names.len(), 5);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("run_manifest.json")).unwrap()).unwrap();
    let mut listed: Vec<String> = manifest["files"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap().to_owned())
        .collect();
    listed.sort();
    assert_eq!(listed, names);
    assert_eq!(manifest["truth_seed"], 1);
    assert_eq!(manifest["training_pair_seeds"].as_array().unwrap().len(), 3);

    let first: Vec<Vec<u8>> = names.iter().map(|n| std::fs::read(out.join(n)).unwrap()).collect();
    assert_eq!(code(&sdbli(tmp.path(), &["generate", "--config", "c.json"])), 0);
    let second: Vec<Vec<u8>> = names.iter().map(|n| std::fs::read(out.join(n)).unwrap()).collect();
    assert_eq!(first, second);
}

#[test]
fn config_errors_exit_two_and_name_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    write_config(tmp.path(), "bad.json", &MINIMAL.replace("\"P\": 1", "\"P\": 4"));
    let o = sdbli(tmp.path(), &["generate", "--config", "bad.json"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("system.P"), "{}", stderr(&o));
    write_config(tmp.path(), "typo.json", &MINIMAL.replace("\"max_iters\"", "\"max_iter\""));
    let o = sdbli(tmp.path(), &["generate", "--config", "typo.json"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("max_iter"));
}

#[test]
fn missing_inputs_exit_three() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&sdbli(tmp.path(), &["solve", "--config", "absent.json"])), 3);
    write_config(tmp.path(), "c.json", MINIMAL);
    let o = sdbli(tmp.path(), &["solve", "--config", "c.json", "--data", "nowhere"]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("run_exact.json"));
    // data generated for a different grid
    write_config(tmp.path(), "big.json", &MINIMAL.replace("\"n\": 3", "\"n\": 4"));
    assert_eq!(code(&sdbli(tmp.path(), &["generate", "--config", "big.json"])), 0);
    assert_eq!(code(&sdbli(tmp.path(), &["mc", "--config", "c.json"])), 3);
}

#[test]
fn solver_failures_exit_four() {
    let tmp = tempfile::tempdir().unwrap();
    write_config(tmp.path(), "c.json", MINIMAL);
    assert_eq!(code(&sdbli(tmp.path(), &["generate", "--config", "c.json"])), 0);
    let starved = MINIMAL.replace(
        "\"output\"",
        "\"newton\": {\"newton_tol\": 1e-12, \"max_newton_iters\": 1}, \"output\"",
    );
    write_config(tmp.path(), "s.json", &starved);
    let o = sdbli(tmp.path(), &["solve", "--config", "s.json"]);
    assert_eq!(code(&o), 4, "{}", stderr(&o));
    assert!(stderr(&o).contains("did not converge"));
}

#[test]
fn solve_writes_trace_and_sidecar() {
    let tmp = tempfile::tempdir().unwrap();
    write_config(tmp.path(), "c.json", MINIMAL);
    assert_eq!(code(&sdbli(tmp.path(), &["generate", "--config", "c.json"])), 0);
    let o = sdbli(tmp.path(), &["solve", "--config", "c.json", "--out", "solved", "--data", "out"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = std::fs::read_to_string(tmp.path().join("solved/run_trace.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "k,i_k,residual,omega_k,lambda_k,err_to_truth,ball_exit");
    assert_eq!(lines.count(), 40);
    let side: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("solved/run_trace.json")).unwrap()).unwrap();
    assert_eq!(side["stop_reason"], "budget");
    assert_eq!(side["k_stop"], 40);
    for key in ["config", "constants", "admissibility"] {
        assert!(side.get(key).is_some(), "sidecar lacks {key}");
    }
    assert!(side["constants"].get("L_F").is_some());
    assert!(side["contract_violations"].as_array().unwrap().is_empty());
}

#[test]
fn starting_at_the_truth_freezes() {
    let tmp = tempfile::tempdir().unwrap();
    write_config(tmp.path(), "c.json", MINIMAL);
    sdbli(tmp.path(), &["generate", "--config", "c.json"]);
    let o = sdbli(tmp.path(), &["solve", "--config", "c.json", "--start-at-truth"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let side: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("out/run_trace.json")).unwrap()).unwrap();
    assert_eq!(side["stop_reason"], "frozen");
}

#[test]
fn zero_c_lambda_gives_a_zero_lambda_column() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = MINIMAL
        .replace("\"max_iters\": 40", "\"max_iters\": 40, \"c_lambda\": 0")
        .replace("\"n\": 3", "\"n\": 6")
        .replace("\"P\": 1", "\"P\": 3");
    write_config(tmp.path(), "c.json", &cfg);
    sdbli(tmp.path(), &["generate", "--config", "c.json"]);
    assert_eq!(code(&sdbli(tmp.path(), &["solve", "--config", "c.json"])), 0);
    let csv = std::fs::read_to_string(tmp.path().join("out/run_trace.csv")).unwrap();
    for line in csv.lines().skip(1) {
        let lambda: f64 = line.split(',').nth(4).unwrap().parse().unwrap();
        assert_eq!(lambda, 0.0);
    }
}

#[test]
fn mc_smoke_and_single_equation_has_no_spread() {
    let tmp = tempfile::tempdir().unwrap();
    write_config(tmp.path(), "c.json", MINIMAL);
    sdbli(tmp.path(), &["generate", "--config", "c.json"]);
    let o = sdbli(tmp.path(), &["mc", "--config", "c.json"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = std::fs::read_to_string(tmp.path().join("out/run_mc.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "k,mean_sq_err,stderr_err,mean_sq_residual,stderr_residual,partial_sum"
    );
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 41);
    for r in &rows {
        assert_eq!(r.len(), 6);
        assert_eq!(r[2].parse::<f64>().unwrap(), 0.0);
    }
    let side: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("out/run_mc.json")).unwrap()).unwrap();
    assert!(side.get("monotonicity").is_some() && side.get("summability").is_some());
}

#[test]
fn mc_writes_the_sweep_when_configured() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = MINIMAL
        .replace("\"P\": 1", "\"P\": 2")
        .replace(
            "\"training\"",
            "\"noise\": {\"sweep\": [0.1, 0.05], \"sweep_replications\": 2}, \"training\"",
        )
        .replace("\"max_iters\": 40", "\"max_iters\": 40, \"K0\": 1");
    write_config(tmp.path(), "c.json", &cfg);
    sdbli(tmp.path(), &["generate", "--config", "c.json"]);
    let o = sdbli(tmp.path(), &["mc", "--config", "c.json"]);
    assert!([0, 1].contains(&code(&o)), "{}", stderr(&o));
    let csv = std::fs::read_to_string(tmp.path().join("out/run_sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "delta,k_delta,k_stop_max,terminal_mean_sq_err,terminal_stderr");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].split(',').nth(1).unwrap() == "10" && lines[2].split(',').nth(1).unwrap() == "20");
}

#[test]
fn check_reports_json_and_detects_a_broken_adjoint() {
    let tmp = tempfile::tempdir().unwrap();
    let o = sdbli(tmp.path(), &["check"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["passed"], true);
    let suites = report["suites"].as_array().unwrap();
    assert!(suites.iter().all(|s| s["name"].is_string() && s["max_error"].is_number()));
    let sizes: Vec<u64> = suites.iter().map(|s| s["n"].as_u64().unwrap()).collect();
    assert!(sizes.contains(&3) && sizes.contains(&8));

    let o = sdbli(tmp.path(), &["check", "--break-adjoint"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("subderivative_adjoint"));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["passed"], false);
}

#[test]
fn thread_cap_must_be_a_positive_integer() {
    let tmp = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_sdbli"))
        .current_dir(tmp.path())
        .args(["check"])
        .env("SDBLI_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
    let o = Command::new(env!("CARGO_BIN_EXE_sdbli"))
        .current_dir(tmp.path())
        .args(["check"])
        .env("SDBLI_THREADS", "1")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
}
