use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn synthcause(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_synthcause"))
        .current_dir(dir)
        .env_remove("SYNTHCAUSE_OUT_DIR")
        .args(args)
        .output()
        .expect("spawn synthcause")
}

fn error_kind(out: &Output) -> String {
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line = stderr.lines().last().expect("error record on stderr");
    let v: serde_json::Value = serde_json::from_str(line).expect("stderr is a JSON error record");
    v["error"]["kind"].as_str().expect("kind").to_string()
}

#[test]
fn dgp_truth_is_near_reference_value() {
    let dir = tempfile::tempdir().unwrap();
    let out = synthcause(dir.path(), &["dgp-truth", "--mc-size", "1000000", "--seed", "7"]);
    assert!(out.status.success());
    let psi: f64 = String::from_utf8(out.stdout).unwrap().trim().parse().unwrap();
    assert!((0.4133..=0.4233).contains(&psi), "psi = {psi}");
}

#[test]
fn zero_rows_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let s = synthcause(dir.path(), &["dgp-sample", "--n", "300", "--seed", "1", "--out", "seed.csv"]);
    assert!(s.status.success());
    let out = synthcause(
        dir.path(),
        &["generate", "--mode", "hybrid", "--seed-data", "seed.csv", "--n", "0", "--out", "syn.csv"],
    );
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_kind(&out), "validation");
    assert!(!dir.path().join("syn.csv").exists());
}

#[test]
fn missing_input_and_bad_flags_fail() {
    let dir = tempfile::tempdir().unwrap();
    let out = synthcause(dir.path(), &["estimate", "--in", "nope.csv"]);
    assert_eq!(out.status.code(), Some(2));
    let out = synthcause(dir.path(), &["dgp-sample", "--regime", "sideways"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_kind(&out), "validation");
    let out = synthcause(dir.path(), &["no-such-command"]);
    assert_eq!(out.status.code(), Some(2));
    let out = synthcause(dir.path(), &["estimate", "--truncation", "0.5,0.2", "--in", "x.csv"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn same_config_gives_identical_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("run.toml"),
        "seed = 11\n\n[dgp-sample]\nregime = \"observational\"\nn = 400\n\n[simulate]\nreference_size = 2000\nrep_sizes = [100, 200]\nreps = 20\ntruth_mc_size = 50000\n\n[simulate.environment]\nkind = \"dgp-truth\"\nregime = \"observational\"\n",
    )
    .unwrap();
    for run in ["a", "b"] {
        let csv = format!("{run}.csv");
        let json = format!("{run}.json");
        assert!(synthcause(dir.path(), &["--config", "run.toml", "dgp-sample", "--out", &csv]).status.success());
        let out = synthcause(dir.path(), &["--config", "run.toml", "--jobs", "3", "simulate", "--out", &json]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for f in ["csv", "csv.meta.json", "json", "json.meta.json"] {
        let a = fs::read(dir.path().join(format!("a.{f}"))).unwrap();
        let b = fs::read(dir.path().join(format!("b.{f}"))).unwrap();
        assert_eq!(a, b, "{f} differs between runs");
    }
    let meta: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("a.json.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["seed"], 11);
    assert_eq!(meta["config"]["reps"], 20);
}

#[test]
fn flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.toml"), "[dgp-sample]\nn = 50\nseed = 2\n").unwrap();
    let out = synthcause(dir.path(), &["--config", "c.toml", "dgp-sample", "--n", "7", "--out", "d.csv"]);
    assert!(out.status.success());
    let rows = fs::read_to_string(dir.path().join("d.csv")).unwrap().lines().count();
    assert_eq!(rows, 8);
    let meta: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("d.csv.meta.json")).unwrap()).unwrap();
    assert_eq!((meta["config"]["n"].as_u64(), meta["seed"].as_u64()), (Some(7), Some(2)));
}

#[test]
fn out_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_synthcause"))
        .current_dir(dir.path())
        .env("SYNTHCAUSE_OUT_DIR", "artifacts")
        .args(["dgp-sample", "--n", "5"])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(dir.path().join("artifacts/dgp_sample.csv").exists());
}

#[test]
fn estimate_then_fidelity_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    assert!(synthcause(p, &["dgp-sample", "--n", "2000", "--seed", "5", "--out", "real.csv"]).status.success());
    let out = synthcause(p, &["estimate", "--in", "real.csv", "--estimators", "or,tmle"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let arr = v.as_array().unwrap();
    assert_eq!(arr.len(), 2);
    assert_eq!(arr[1]["estimator"], "TMLE");
    assert!(arr[1]["mean_eif"].as_f64().unwrap().abs() <= 1e-8);

    let sim = |env: &[&str], out: &str| {
        let mut args = vec!["simulate"];
        args.extend_from_slice(env);
        args.extend_from_slice(&[
            "--ref-size", "3000", "--rep-size", "300", "--reps", "10", "--truth-mc-size", "50000", "--out", out,
        ]);
        let o = synthcause(p, &args);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    };
    sim(&["--env", "dgp-randomized"], "r.json");
    sim(&["--env", "hybrid", "--seed-data", "real.csv"], "s.json");
    assert!(synthcause(p, &["fidelity", "--real", "r.json", "--syn", "s.json", "--out", "f.csv"]).status.success());
    let csv = fs::read_to_string(p.join("f.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    assert!(csv.starts_with("estimator,sign_correct,"));
}
