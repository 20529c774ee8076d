use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn nof1(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nof1")).args(args).output().expect("binary runs")
}

fn small_config(dir: &Path) -> String {
    let path = dir.join("small.json");
    fs::write(
        &path,
        r#"{"schema_version": 1, "dgp_id": "sim1a", "initial_n": 300, "checkpoint_step": 100, "max_n": 500}"#,
    )
    .unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn simulate_writes_one_row_per_step() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t.csv");
    let o = nof1(&["simulate", "--preset", "sim1a", "--seed", "1", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "t,a,y,w1,w2,g_used,g_rule,blip_estimate,d_decision,q_obs,q_rule"
    );
    assert_eq!(lines.count(), 1800);
}

#[test]
fn unknown_dgp_exits_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"dgp_id": "sim9", "initial_n": 300, "max_n": 500}"#).unwrap();
    let o = nof1(&["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("dgp_id"));
    let o = nof1(&["simulate", "--preset", "sim9"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn parse_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("broken.json");
    fs::write(&cfg, "{ not json").unwrap();
    assert_eq!(nof1(&["simulate", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(nof1(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(nof1(&["mc", "--preset", "sim1a", "--draws", "0", "--out", "x"]).status.code(), Some(2));
}

#[test]
fn missing_config_file_exits_three() {
    assert_eq!(nof1(&["simulate", "--config", "/nonexistent/cfg.json"]).status.code(), Some(3));
}

#[test]
fn mc_single_draw_and_unwritable_dir() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("mc");
    let o = nof1(&["mc", "--config", &cfg, "--draws", "1", "--out", out.to_str().unwrap(), "--jobs", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let cov = fs::read_to_string(out.join("coverage.csv")).unwrap();
    let rows: Vec<&str> = cov.lines().skip(1).collect();
    assert_eq!(rows.len(), 3);
    for r in rows {
        let c: f64 = r.split(',').nth(1).unwrap().parse().unwrap();
        assert!(c == 0.0 || c == 100.0);
    }
    assert_eq!(fs::read_to_string(out.join("trials.jsonl")).unwrap().lines().count(), 1);
    assert_eq!(fs::read_to_string(out.join("plotdata.csv")).unwrap().lines().count(), 4);

    let blocker = dir.path().join("file");
    fs::write(&blocker, "").unwrap();
    let o = nof1(&["mc", "--config", &cfg, "--draws", "1", "--out", blocker.join("sub").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn manifest_digests_match_outputs() {
    use sha2::{Digest, Sha256};
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("mc");
    assert!(nof1(&["mc", "--config", &cfg, "--draws", "3", "--out", out.to_str().unwrap()]).status.success());
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    let outputs = manifest["outputs"].as_array().unwrap();
    assert_eq!(outputs.len(), 3);
    for o in outputs {
        let bytes = fs::read(out.join(o["file"].as_str().unwrap())).unwrap();
        assert_eq!(o["sha256"].as_str().unwrap(), hex::encode(Sha256::digest(&bytes)));
    }
    assert_eq!(manifest["n_draws"], 3);
}

#[test]
fn diagnose_reads_simulated_trial() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let trial = dir.path().join("t.csv");
    let diag = dir.path().join("d.csv");
    assert!(nof1(&["simulate", "--config", &cfg, "--seed", "4", "--out", trial.to_str().unwrap()]).status.success());
    let o = nof1(&["diagnose", trial.to_str().unwrap(), "--out", diag.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&diag).unwrap();
    assert_eq!(text.lines().next().unwrap(), "n,running_cond_var_avg");
    assert_eq!(text.lines().last().unwrap().split(',').next().unwrap(), "496");

    let empty = dir.path().join("empty.csv");
    fs::write(&empty, "").unwrap();
    assert_eq!(nof1(&["diagnose", empty.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(nof1(&["diagnose", "/nonexistent.csv"]).status.code(), Some(3));
}
