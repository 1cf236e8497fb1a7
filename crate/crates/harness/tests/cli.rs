use std::fs;
use std::process::{Command, Output};

use fp3_harness::output::{manifest_path, Manifest, EVAL_HEADER, HEADER};

fn fp3(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fp3")).args(args).output().expect("run fp3")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn fit_prints_parameters() {
    let o = fp3(&["fit", "--demand", "fit:10:0.5"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["distribution"]["family"], "mixed_erlang_km1k");
    assert!((v["mean"].as_f64().unwrap() - 10.0).abs() < 1e-9);
    assert!((v["cv"].as_f64().unwrap() - 0.5).abs() < 1e-9);
}

#[test]
fn eval_writes_one_line_per_policy() {
    let o = fp3(&["eval", "--demand", "se:10:0.5", "--p", "9", "--lead", "2", "--policies", "bs:40,co:8,fp3:0.9", "--horizon", "2000"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], EVAL_HEADER.join(","));
    assert_eq!(lines.len(), 4);
    assert!(lines[3].starts_with("fp3:0.9,"));
}

#[test]
fn eval_needs_policies() {
    let o = fp3(&["eval", "--demand", "poisson:5", "--p", "9", "--lead", "1"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn optimize_reports_policy_errors_with_exit_code_2() {
    let o = fp3(&[
        "optimize", "--demand", "se:10:0.5", "--p", "9", "--lead", "1", "--policies", "fp3,bs", "--evaluator",
        "exact_discrete", "--opt-horizon", "300", "--horizon", "300",
    ]);
    assert_eq!(o.status.code(), Some(2));
    let text = stdout(&o);
    assert_eq!(text.lines().next().unwrap(), HEADER.join(","));
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn bad_input_is_rejected() {
    assert_eq!(fp3(&["fit", "--demand", "weibull:1"]).status.code(), Some(1));
    assert_eq!(fp3(&["suite", "nope"]).status.code(), Some(1));
    assert!(!fp3(&["optimize", "--demand", "poisson:3"]).status.success());
}

#[test]
fn config_file_fills_in_missing_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    let out = dir.path().join("zipkin.csv");
    fs::write(
        &cfg,
        format!(
            "seed = 5\nhorizon = 300\nopt_horizon = 200\nwarmup = 20\npolicies = \"bs,co\"\nout = {:?}\n",
            out.to_str().unwrap()
        ),
    )
    .unwrap();
    let o = fp3(&["suite", "zipkin", "--config", cfg.to_str().unwrap(), "--seed", "6", "--jobs", "1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m: Manifest = serde_json::from_str(&fs::read_to_string(manifest_path(&out)).unwrap()).unwrap();
    assert_eq!(m.options.seed, 6);
    assert_eq!(m.options.eval_horizon, 300);
    assert_eq!(m.options.opt_horizon, 200);
    assert_eq!(m.options.warmup, Some(20));
    assert_eq!(m.cells, 32);
    assert_eq!(m.rows_written, 64);

    let base = dir.path().join("base.json");
    let args = ["suite", "zipkin", "--config", cfg.to_str().unwrap(), "--seed", "6", "--baseline", base.to_str().unwrap()];
    assert!(fp3(&args).status.success());
    assert!(base.exists());
    let o = fp3(&args);
    assert!(o.status.success());
    let m: Manifest = serde_json::from_str(&fs::read_to_string(manifest_path(&out)).unwrap()).unwrap();
    assert_eq!(m.cells_skipped, 32);

    let mut stored: serde_json::Value = serde_json::from_str(&fs::read_to_string(&base).unwrap()).unwrap();
    for v in stored["costs"].as_object_mut().unwrap().values_mut() {
        *v = serde_json::json!(v.as_f64().unwrap() * 1.5);
    }
    fs::write(&base, stored.to_string()).unwrap();
    assert_eq!(fp3(&args).status.code(), Some(2));
}

#[test]
fn unknown_config_keys_fail() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "sead = 5\n").unwrap();
    assert_eq!(fp3(&["fit", "--demand", "poisson:2", "--config", cfg.to_str().unwrap()]).status.code(), Some(1));
}
