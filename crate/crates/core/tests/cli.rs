mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::*;
use hits::data::load_single_csv;
use hits::sim::{run_monte_carlo, RunOptions, Scenario};
use hits::{
    ate_inference, design_stats, ite, lasso_fit, load_csv, predict_inference, sparsity_assisted_test, CsvSchema, InferenceConfig,
    LassoConfig, SparsityConfig,
};
use serde_json::Value;
use tempfile::TempDir;

fn hits_cmd() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_hits"));
    c.env_remove("HITS_SEED");
    c
}

fn run(args: &[&str]) -> Output {
    hits_cmd().args(args).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json_stdout(o: &Output) -> Value {
    assert!(o.status.success(), "exit {:?}: {}", o.status.code(), stderr(o));
    serde_json::from_slice(&o.stdout).unwrap()
}

struct Fixture {
    dir: TempDir,
    data: String,
    loading: String,
}

fn fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let ds = random_dataset(&mut rng(21), 60, 70, 15);
    let path = dir.path().join("data.csv");
    write_csv(&path, &ds);
    Fixture {
        data: path.to_str().unwrap().to_owned(),
        loading: loading_json(&ds.x_new),
        dir,
    }
}

fn schema() -> CsvSchema {
    CsvSchema {
        response: "y".into(),
        arm: "arm".into(),
        covariates: None,
        intercept: false,
    }
}

fn assert_matches(v: &Value, r: &hits::ContrastInference) {
    assert_eq!(v["delta_hat"].as_f64().unwrap(), r.delta_hat);
    assert_eq!(v["v_hat"].as_f64().unwrap(), r.v_hat);
    assert_eq!(v["ci"][0].as_f64().unwrap(), r.ci_lower);
    assert_eq!(v["ci"][1].as_f64().unwrap(), r.ci_upper);
    assert_eq!(v["reject"].as_bool().unwrap(), r.reject);
}

#[test]
fn ite_matches_library() {
    let f = fixture();
    let out_path = f.dir.path().join("ite.json");
    let o = run(&["ite", "--data", &f.data, "--loading", &f.loading, "--json", "--output", out_path.to_str().unwrap()]);
    let v = json_stdout(&o);
    let ds = load_csv(&f.data, &schema()).unwrap().with_loading(hits::read_loading(&f.loading).unwrap()).unwrap();
    let lib = ite(&ds, &InferenceConfig::default(), 0.05).unwrap();
    assert_matches(&v, &lib.inference);
    assert_eq!(v["kind"], "ite");
    let file: Value = serde_json::from_str(&std::fs::read_to_string(out_path).unwrap()).unwrap();
    assert_eq!(file, v);

    // Without --json the summary line names the estimate and decision.
    let o = run(&["ite", "--data", &f.data, "--loading", &f.loading, "--alpha", "0.1"]);
    let line = String::from_utf8(o.stdout).unwrap();
    assert_eq!(line.lines().count(), 1);
    assert!(line.starts_with("ITE: estimate") && line.contains("90% CI"), "{line}");
}

#[test]
fn solver_overrides_are_forwarded() {
    let f = fixture();
    let o = run(&[
        "ite", "--data", &f.data, "--loading", &f.loading, "--json", "--lambda-mult", "0.9", "--a", "2.0", "--relaxed", "--tau-mult", "3",
        "--diagnostics",
    ]);
    let v = json_stdout(&o);
    let mut cfg = InferenceConfig::default();
    cfg.projection.lambda_mult = 0.9;
    cfg.projection.tau_mult = 3.0;
    cfg.lasso.a = 2.0;
    cfg.relaxed = true;
    let ds = load_csv(&f.data, &schema()).unwrap().with_loading(hits::read_loading(&f.loading).unwrap()).unwrap();
    assert_matches(&v, &ite(&ds, &cfg, 0.05).unwrap().inference);
    assert!(v["diagnostics"].is_object());
}

#[test]
fn ate_and_predict_match_library() {
    let f = fixture();
    let ds = load_csv(&f.data, &schema()).unwrap();
    let cfg = InferenceConfig::default();
    let v = json_stdout(&run(&["ate", "--data", &f.data, "--json"]));
    assert_matches(&v, &ate_inference(&ds, &cfg, 0.05).unwrap().inference);
    assert_eq!(v["kind"], "ate");

    let v = json_stdout(&run(&["predict", "--data", &f.data, "--loading", &f.loading, "--json"]));
    let g = load_single_csv(&f.data, "y", None, false, Some("arm")).unwrap();
    let (lib, _) = predict_inference(&g, &hits::read_loading(&f.loading).unwrap(), &cfg, 0.05).unwrap();
    assert_matches(&v, &lib);
}

#[test]
fn sparse_test_and_fit_match_library() {
    let f = fixture();
    let ds = load_csv(&f.data, &schema()).unwrap().with_loading(hits::read_loading(&f.loading).unwrap()).unwrap();
    let cfg = InferenceConfig::default();
    let v = json_stdout(&run(&["sparse-test", "--data", &f.data, "--loading", &f.loading, "--s-u", "2", "--q", "5", "--json"]));
    let lib = sparsity_assisted_test(&ds, &SparsityConfig { s_u: 2, q: Some(5), alpha: 0.05 }, &cfg).unwrap();
    assert_eq!(v["delta_check"].as_f64().unwrap(), lib.delta_check);
    assert_eq!(v["s_term"].as_f64().unwrap(), lib.s_term);
    assert_eq!(v["reject"].as_bool().unwrap(), lib.reject);

    let v = json_stdout(&run(&["fit", "--data", &f.data, "--json"]));
    let fit = lasso_fit(&ds.group2, &design_stats(&ds.group2), &LassoConfig::default()).unwrap();
    let beta: Vec<f64> = v["arms"][1]["beta_hat"].as_array().unwrap().iter().map(|b| b.as_f64().unwrap()).collect();
    assert_eq!(beta, fit.beta_hat.as_slice());
    assert_eq!(v["arms"][1]["sigma2_hat"].as_f64().unwrap(), fit.sigma2_hat);
}

#[test]
fn input_errors_exit_with_one() {
    let f = fixture();
    let zero_file = f.dir.path().join("zero.json");
    std::fs::write(&zero_file, serde_json::to_string(&vec![0.0; 15]).unwrap()).unwrap();
    let o = run(&["ite", "--data", &f.data, "--loading", zero_file.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("degenerate loading"), "{}", stderr(&o));

    let o = run(&["ite", "--data", &f.data, "--loading", &f.loading, "--alpha", "1.5"]);
    assert_eq!(o.status.code(), Some(1));
    let o = run(&["ate", "--data", "/nonexistent/data.csv"]);
    assert_eq!(o.status.code(), Some(1));
    let o = run(&["ite", "--data", &f.data, "--loading", "[1, 2]"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn exhausted_escalation_exits_with_two_and_reports_slacks() {
    let dir = tempfile::tempdir().unwrap();
    let mut ds = random_dataset(&mut rng(4), 40, 40, 6);
    // A constant-zero covariate makes its unit loading unreachable.
    ds.group1 = hits::GroupSample::new(
        {
            let mut x = ds.group1.x().clone();
            x.column_mut(5).fill(0.0);
            x
        },
        ds.group1.y().clone(),
        1,
    )
    .unwrap();
    let path = dir.path().join("d.csv");
    write_csv(&path, &ds);
    let o = run(&["ite", "--data", path.to_str().unwrap(), "--loading", "[0,0,0,0,0,1]"]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    let first: Value = serde_json::from_str(err.lines().next().unwrap()).unwrap();
    assert_eq!(first["error"], "solver_failure");
    assert_eq!(first["slacks"]["escalations"], 8);
    assert!(first["slacks"]["slack_inf"].as_f64().unwrap() > 1.0);
}

fn scenario_file(dir: &Path) -> String {
    let path = dir.join("scenario.json");
    std::fs::write(
        &path,
        r#"{"p": 30, "n": 40, "coefficients": {"rule": "exact_sparse"},
            "loading": {"rule": "dense_null", "scale": 0.2}, "reps": 6, "seed": 5}"#,
    )
    .unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn simulate_is_deterministic_and_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenario_file(dir.path());
    let prefix = |name: &str| dir.path().join(name).to_str().unwrap().to_owned();
    let plot = prefix("plot.csv");
    for name in ["a", "b"] {
        let o = run(&["simulate", "--scenario", &sc, "--seed", "77", "--output", &prefix(name), "--emit-plot-data", &plot]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let a = std::fs::read(prefix("a.csv")).unwrap();
    assert_eq!(a, std::fs::read(prefix("b.csv")).unwrap());
    assert_eq!(std::fs::read(prefix("a.json")).unwrap(), std::fs::read(prefix("b.json")).unwrap());
    // Header plus one line per replication and estimator.
    assert_eq!(std::fs::read_to_string(&plot).unwrap().lines().count(), 1 + 6 * 2);

    let scenario = Scenario { seed: 77, ..Scenario::from_json(&std::fs::read_to_string(&sc).unwrap()).unwrap() };
    let lib = run_monte_carlo(&scenario, &RunOptions::default()).unwrap();
    assert_eq!(String::from_utf8(a.clone()).unwrap(), lib.to_csv().unwrap());

    // The environment seed is a fallback for --seed.
    let o = hits_cmd()
        .args(["simulate", "--scenario", &sc, "--output", &prefix("env")])
        .env("HITS_SEED", "77")
        .output()
        .unwrap();
    assert!(o.status.success());
    assert_eq!(std::fs::read(prefix("env.csv")).unwrap(), a);

    let o = run(&["simulate", "--scenario", &sc, "--threads", "1", "--seed", "77", "--output", &prefix("t1")]);
    assert!(o.status.success());
    assert_eq!(std::fs::read(prefix("t1.csv")).unwrap(), a);
}

#[test]
fn simulate_rejects_bad_input() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenario_file(dir.path());
    let out = dir.path().join("x").to_str().unwrap().to_owned();
    let o = run(&["simulate", "--scenario", &sc, "--reps", "0", "--output", &out]);
    assert_eq!(o.status.code(), Some(1));
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"p": 30, "n": 40}"#).unwrap();
    let o = run(&["simulate", "--scenario", bad.to_str().unwrap(), "--output", &out]);
    assert_eq!(o.status.code(), Some(1));
    let o = run(&["simulate", "--table2-row", "S=0.1", "--output", &out]);
    assert_eq!(o.status.code(), Some(1));
    let o = run(&["simulate", "--scenario", &sc, "--estimators", "hits,oracle", "--output", &out]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn table3_preset_has_nominal_size() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = dir.path().join("t3").to_str().unwrap().to_owned();
    let o = run(&["simulate", "--table3-row", "S=0.2,n=400", "--reps", "500", "--estimators", "hits", "--output", &prefix]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(format!("{prefix}.json")).unwrap()).unwrap();
    let err = report["rows"][0]["err"].as_f64().unwrap();
    assert!((0.01..=0.08).contains(&err), "ERR {err}");
}
