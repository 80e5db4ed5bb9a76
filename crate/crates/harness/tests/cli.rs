//! End-to-end runs of the `idm` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn idm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_idm"))
        .args(args)
        .env("IDM_THREADS", "1")
        .output()
        .expect("idm binary runs")
}

fn prefix(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

fn read(prefix: &str, ext: &str) -> String {
    fs::read_to_string(format!("{prefix}.{ext}")).unwrap()
}

const FAST: [&str; 4] = [
    "--set",
    "baselines.bootstrap.B=40",
    "--set",
    "baselines.simulation.R=40",
];

#[test]
fn fixed_seed_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("gaussian_mean_interval.json");
    let (a, b) = (prefix(dir.path(), "a"), prefix(dir.path(), "b"));
    for p in [&a, &b] {
        let mut args = vec!["interval", cfg.to_str().unwrap(), "--out", p.as_str()];
        args.extend(FAST);
        let out = idm(&args);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    assert_eq!(read(&a, "json"), read(&b, "json"));
    assert_eq!(read(&a, "csv"), read(&b, "csv"));
    let meta: serde_json::Value = serde_json::from_str(&read(&a, "meta.json")).unwrap();
    assert!(meta.get("timings_seconds").is_some());
}

#[test]
fn alias_matches_run_with_experiment_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("gaussian_mean_interval.json");
    let cfg = cfg.to_str().unwrap();
    let (a, b) = (prefix(dir.path(), "alias"), prefix(dir.path(), "run"));
    let mut args = vec!["interval", cfg, "--out", a.as_str()];
    args.extend(FAST);
    assert!(idm(&args).status.success());
    let mut args = vec!["run", cfg, "--out", b.as_str(), "--set", "experiment=interval"];
    args.extend(FAST);
    assert!(idm(&args).status.success());
    assert_eq!(read(&a, "csv"), read(&b, "csv"));
}

#[test]
fn overrides_and_seed_change_the_result() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("gaussian_mean_interval.json");
    let cfg = cfg.to_str().unwrap();
    let base = prefix(dir.path(), "base");
    let narrow = prefix(dir.path(), "narrow");
    let reseeded = prefix(dir.path(), "reseeded");
    let run = |out: &str, extra: &[&str]| {
        let mut args = vec!["interval", cfg, "--out", out, "--set", "baselines.bootstrap=null", "--set", "baselines.simulation=null"];
        args.extend_from_slice(extra);
        let o = idm(&args);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        serde_json::from_str::<serde_json::Value>(&read(out, "json")).unwrap()
    };
    let width = |v: &serde_json::Value| {
        let iv = &v["methods"][0]["intervals"][0];
        iv["upper"].as_f64().unwrap() - iv["lower"].as_f64().unwrap()
    };
    let a = run(&base, &[]);
    let b = run(&narrow, &["--set", "idm.beta=0.5"]);
    assert!(width(&b) < 0.5 * width(&a));
    assert_eq!(b["config"]["idm"]["beta"], 0.5);
    let c = run(&reseeded, &["--seed", "77", "--set", "dgp.seed=77"]);
    assert_ne!(a["psi_hat"], c["psi_hat"]);
    assert_eq!(c["config"]["root_seed"], 77);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("gaussian_mean_interval.json");
    let cfg = cfg.to_str().unwrap();
    let out = prefix(dir.path(), "x");

    let unknown = idm(&["interval", cfg, "--out", &out, "--set", "idm.no_such_key=1"]);
    assert_eq!(unknown.status.code(), Some(2));
    let bad_beta = idm(&["interval", cfg, "--out", &out, "--set", "idm.beta=1.5"]);
    assert_eq!(bad_beta.status.code(), Some(2));
    let missing = idm(&["interval", "/nonexistent/config.json", "--out", &out]);
    assert_ne!(missing.status.code(), Some(0));

    // Real-valued responses under a Bernoulli model fail every replicate,
    // so the failure diagnostic fires.
    let degenerate = [
        "coverage",
        cfg,
        "--out",
        out.as_str(),
        "--set",
        "model.family={\"name\":\"bernoulli_logit\"}",
        "--set",
        "coverage.replicates=5",
    ];
    let fired = idm(&degenerate);
    assert_eq!(fired.status.code(), Some(3), "{}", String::from_utf8_lossy(&fired.stderr));
    let mut allowed = degenerate.to_vec();
    allowed.push("--allow-diagnostics");
    assert_eq!(idm(&allowed).status.code(), Some(0));
}

#[test]
fn generate_writes_the_configured_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("data.csv");
    let cfg = config("logistic_interval.json");
    let out = idm(&["generate", cfg.to_str().unwrap(), "--out", path.to_str().unwrap(), "--set", "dgp.n=25"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 26);
    assert_eq!(lines[1].split(',').count(), 3);
    assert!(lines[1..].iter().all(|l| l.ends_with(",0.0") || l.ends_with(",1.0")));

    // The written file feeds back in as a data source.
    let fit = prefix(dir.path(), "from_csv");
    let data_override = format!("data={{\"csv\":{:?}}}", path.to_str().unwrap());
    let out = idm(&[
        "interval",
        cfg.to_str().unwrap(),
        "--out",
        &fit,
        "--set",
        "dgp=null",
        "--set",
        &data_override,
        "--set",
        "baselines.bootstrap=null",
        "--set",
        "baselines.simulation=null",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_str(&read(&fit, "json")).unwrap();
    assert_eq!(report["n"], 25);
}
