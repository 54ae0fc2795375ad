use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn mirfs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mirfs"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn json_file(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn simulate_writes_header_and_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("path.csv");
    let model = fixture("two_state.json");
    let o = mirfs(&["simulate", "--model", s(&model), "--theta", "0.1,0.2,0.2,0.8", "--n", "100", "--seed", "5", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 101);
    assert_eq!(lines[0], "index,state,obs_1");
    assert!(String::from_utf8_lossy(&o.stdout).contains("n=100"));
}

#[test]
fn simulate_is_byte_identical_for_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let model = fixture("switching_ar.json");
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = mirfs(&["simulate", "--model", s(&model), "--theta", "0.2,0.5,1", "--n", "300", "--seed", "9", "--out", s(&out)]);
        assert_eq!(code(&o), 0);
        fs::read(out).unwrap()
    };
    assert_eq!(run("a.csv"), run("b.csv"));
}

#[test]
fn simulate_rejects_inadmissible_theta_naming_the_coordinate() {
    let model = fixture("two_state.json");
    let o = mirfs(&["simulate", "--model", s(&model), "--theta", "0.1,1.2,0.2,0.8", "--n", "10", "--seed", "1"]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("(b)"), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_2() {
    let model = fixture("two_state.json");
    assert_eq!(code(&mirfs(&["simulate", "--model", s(&model), "--n", "10"])), 2);
    assert_eq!(code(&mirfs(&["simulate", "--model", s(&model), "--theta", "0.1,0.2", "--n", "10", "--seed", "1"])), 2);
    assert_eq!(code(&mirfs(&["simulate", "--model", "/no/such/model.json", "--theta", "0.1", "--n", "10", "--seed", "1"])), 2);
    let data = fixture("bernoulli.csv");
    assert_eq!(code(&mirfs(&["eval", "--model", s(&model), "--data", s(&data), "--theta", "0.1,0.2,0.2,0.8", "--order", "3"])), 2);
}

#[test]
fn malformed_model_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, fs::read_to_string(fixture("two_state.json")).unwrap().replace("\"b\", \"1 - b\"", "\"b\", \"1 - a\"")).unwrap();
    let o = mirfs(&["simulate", "--model", s(&bad), "--theta", "0.1,0.2,0.2,0.8", "--n", "10", "--seed", "1"]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
}

#[test]
fn eval_order_zero_has_loglik_only() {
    let o = mirfs(&[
        "eval", "--model", s(&fixture("gaussian.json")), "--data", s(&fixture("gaussian_small.csv")),
        "--theta", "0.1,0.2,-1,1", "--order", "0",
    ]);
    assert_eq!(code(&o), 0);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v.get("loglik").is_some());
    assert!(v.get("score").is_none() && v.get("hessian").is_none());
}

#[test]
fn eval_order_two_has_a_symmetric_hessian() {
    let o = mirfs(&[
        "eval", "--model", s(&fixture("gaussian.json")), "--data", s(&fixture("gaussian_small.csv")),
        "--theta", "0.1,0.2,-1,1",
    ]);
    assert_eq!(code(&o), 0);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    let h = v["hessian"].as_array().unwrap();
    assert_eq!(h.len(), 4);
    for k in 0..4 {
        for l in 0..4 {
            assert_eq!(h[k][l], h[l][k]);
        }
    }
    assert_eq!(v["score"].as_array().unwrap().len(), 4);
}

#[test]
fn eval_matches_the_path_sum_golden() {
    let golden = json_file(&fixture("gaussian_small.golden.json"));
    let theta: Vec<String> = golden["theta"].as_array().unwrap().iter().map(|x| x.to_string()).collect();
    let o = mirfs(&[
        "eval", "--model", s(&fixture("gaussian.json")), "--data", s(&fixture("gaussian_small.csv")),
        "--theta", &theta.join(","), "--order", "0",
    ]);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    let (got, want) = (v["loglik"].as_f64().unwrap(), golden["loglik"].as_f64().unwrap());
    assert!((got - want).abs() <= 1e-12 * want.abs(), "{got} vs {want}");
}

#[test]
fn eval_writes_increments_that_telescope() {
    let dir = tempfile::tempdir().unwrap();
    let inc = dir.path().join("inc.csv");
    let o = mirfs(&[
        "eval", "--model", s(&fixture("two_state.json")), "--data", s(&fixture("two_state_n2000.csv")),
        "--theta", "0.1,0.2,0.2,0.8", "--order", "1", "--increments", s(&inc),
    ]);
    assert_eq!(code(&o), 0);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    let mut rdr = csv::Reader::from_path(&inc).unwrap();
    assert_eq!(rdr.headers().unwrap().iter().collect::<Vec<_>>(), ["step", "g0", "g1_a", "g1_b", "g1_e1", "g1_e2"]);
    let mut sum = [0.0; 5];
    let mut rows = 0;
    for r in rdr.records() {
        let r = r.unwrap();
        for i in 0..5 {
            sum[i] += r[i + 1].parse::<f64>().unwrap();
        }
        rows += 1;
    }
    assert_eq!(rows, 2000);
    assert!((sum[0] - v["loglik"].as_f64().unwrap()).abs() < 1e-8);
    for k in 0..4 {
        assert!((sum[k + 1] - v["score"][k].as_f64().unwrap()).abs() < 1e-8);
    }
}

#[test]
fn eval_accepts_named_and_file_theta() {
    let dir = tempfile::tempdir().unwrap();
    let tf = dir.path().join("theta.json");
    fs::write(&tf, r#"{"mu1": -1, "mu2": 1, "a": 0.1, "b": 0.2}"#).unwrap();
    let (model, data) = (fixture("gaussian.json"), fixture("gaussian_small.csv"));
    let base = ["eval", "--model", s(&model), "--data", s(&data), "--order", "0"];
    let by_file = format!("@{}", s(&tf));
    let outs: Vec<Vec<u8>> = ["0.1,0.2,-1,1", "mu2=1,mu1=-1,b=0.2,a=0.1", by_file.as_str()]
        .iter()
        .map(|t| {
            let mut args = base.to_vec();
            args.extend(["--theta", t]);
            let o = mirfs(&args);
            assert_eq!(code(&o), 0, "{}", stderr(&o));
            o.stdout
        })
        .collect();
    assert_eq!(outs[0], outs[1]);
    assert_eq!(outs[0], outs[2]);
}

#[test]
fn fit_bernoulli_recovers_the_sample_mean() {
    let o = mirfs(&["fit", "--model", s(&fixture("bernoulli.json")), "--data", s(&fixture("bernoulli.csv"))]);
    assert_eq!(code(&o), 0);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v["converged"].as_bool().unwrap());
    assert!((v["theta_hat"]["values"][0].as_f64().unwrap() - 0.6).abs() < 1e-10);
}

#[test]
fn fit_committed_dataset_lands_in_its_band() {
    let band = json_file(&fixture("two_state_n2000.band.json"));
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.csv");
    let o = mirfs(&[
        "fit", "--model", s(&fixture("two_state.json")), "--data", s(&fixture("two_state_n2000.csv")),
        "--inits", "0.2,0.3,0.3,0.7;0.4,0.4,0.4,0.6", "--trace", s(&trace),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v["converged"].as_bool().unwrap());
    assert_eq!(v["starts"].as_array().unwrap().len(), 2);
    let k_se = band["band_std_errors"].as_f64().unwrap();
    for k in 0..4 {
        let hat = v["theta_hat"]["values"][k].as_f64().unwrap();
        let se = v["std_errors"][k].as_f64().unwrap();
        let truth = band["theta_true"][k].as_f64().unwrap();
        assert!((hat - truth).abs() <= k_se * se, "coordinate {k}: {hat} vs {truth} (se {se})");
    }
    assert!(fs::read_to_string(&trace).unwrap().starts_with("iteration,step,loglik,score_norm,a,b,e1,e2"));
}

#[test]
fn fit_with_start_outside_the_box_exits_2() {
    let o = mirfs(&["fit", "--model", s(&fixture("bernoulli.json")), "--data", s(&fixture("bernoulli.csv")), "--inits", "1.5"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn fit_non_convergence_is_not_a_failure() {
    let o = mirfs(&[
        "fit", "--model", s(&fixture("two_state.json")), "--data", s(&fixture("two_state_n2000.csv")),
        "--inits", "0.5,0.5,0.45,0.55", "--max-iter", "1",
    ]);
    assert_eq!(code(&o), 0);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(!v["converged"].as_bool().unwrap());
}

#[test]
fn check_passes_on_every_builtin_fixture() {
    for (model, theta) in [
        ("bernoulli.json", "0.3"),
        ("two_state.json", "0.1,0.2,0.2,0.8"),
        ("gaussian.json", "0.1,0.2,-1,1"),
        ("single_gaussian.json", "0.5"),
        ("switching_ar.json", "0.2,0.5,1"),
    ] {
        let o = mirfs(&["check", "--model", s(&fixture(model)), "--theta", theta]);
        assert_eq!(code(&o), 0, "{model}: {}", String::from_utf8_lossy(&o.stdout));
    }
}

#[test]
fn check_catches_an_injected_fault() {
    let o = mirfs(&["check", "--model", s(&fixture("gaussian.json")), "--theta", "0.1,0.2,-1,1", "--inject-fault", "1e-3"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("score_vs_fd"));
    let table = String::from_utf8_lossy(&o.stdout);
    assert!(table.lines().any(|l| l.starts_with("score_vs_fd") && l.ends_with("FAIL")));
}

#[test]
fn check_at_order_zero_runs_only_likelihood_checks() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("check.json");
    let o = mirfs(&["check", "--model", s(&fixture("gaussian.json")), "--order", "0", "--out", s(&out)]);
    assert_eq!(code(&o), 0);
    let v = json_file(&out);
    for row in v["rows"].as_array().unwrap() {
        let name = row["check"].as_str().unwrap();
        assert!(["likelihood_vs_pathsum", "scaled_vs_naive", "telescoping_loglik"].contains(&name), "{name}");
    }
}

#[test]
fn check_on_long_data_skips_brute_force() {
    let o = mirfs(&[
        "check", "--model", s(&fixture("two_state.json")), "--data", s(&fixture("two_state_n2000.csv")),
        "--theta", "0.1,0.2,0.2,0.8", "--order", "1",
    ]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("skipped"));
}

#[test]
fn diagnose_single_gaussian_information() {
    let o = mirfs(&[
        "diagnose", "--model", s(&fixture("single_gaussian.json")), "--theta", "0.5",
        "--grid", "100,400", "--replications", "10", "--seed", "3",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    for row in v["rows"].as_array().unwrap() {
        assert!((row["mean_info_per_obs"][0][0].as_f64().unwrap() - 0.25).abs() < 1e-12);
    }
    assert_eq!(v["score_slopes"].as_array().unwrap().len(), 1);
}

#[test]
fn diagnose_is_byte_identical_for_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let model = fixture("gaussian.json");
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = mirfs(&[
            "diagnose", "--model", s(&model), "--theta", "0.1,0.2,-1,1", "--grid", "200,800",
            "--replications", "6", "--seed", "17", "--out", s(&out),
        ]);
        assert_eq!(code(&o), 0);
        fs::read(out).unwrap()
    };
    assert_eq!(run("a.json"), run("b.json"));
}

#[test]
fn data_without_observation_column_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    fs::write(&data, "x\n1\n").unwrap();
    let o = mirfs(&["eval", "--model", s(&fixture("bernoulli.json")), "--data", s(&data), "--theta", "0.5"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("obs_1"));
}

#[test]
fn out_of_range_symbol_is_a_model_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    fs::write(&data, "obs_1\n1\n5\n").unwrap();
    let o = mirfs(&["eval", "--model", s(&fixture("bernoulli.json")), "--data", s(&data), "--theta", "0.5"]);
    assert_eq!(code(&o), 3);
}
