use std::path::{Path, PathBuf};
use std::process::Command;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use subart::cli::sha256_file;
use subart::simgen::{gen_friedman1, gen_friedman2};
use subart::Dataset;

fn subart(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_subart")).args(args).output().unwrap();
    (out.status.code().unwrap_or(-1), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_dataset(path: &Path, ds: &Dataset) {
    let mut w = csv::Writer::from_path(path).unwrap();
    let mut header: Vec<String> = ds.covariates.columns.iter().map(|c| c.name.clone()).collect();
    header.extend(ds.outcome_names.iter().cloned());
    w.write_record(&header).unwrap();
    for i in 0..ds.n_rows() {
        let mut row: Vec<String> = ds.covariates.columns.iter().map(|c| c.values[i].to_string()).collect();
        row.extend(ds.outcomes.iter().map(|y| y[i].to_string()));
        w.write_record(&row).unwrap();
    }
    w.flush().unwrap();
}

fn continuous_csv(dir: &Path, n: usize, seed: u64) -> PathBuf {
    let s = gen_friedman1(n, 2, 1.0, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
    let p = dir.join("cont.csv");
    write_dataset(&p, &s.dataset);
    p
}

fn probit_csv(dir: &Path, n: usize, seed: u64) -> PathBuf {
    let s = gen_friedman2(n, 2, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
    let p = dir.join("bin.csv");
    write_dataset(&p, &s.dataset);
    p
}

fn json(path: PathBuf) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn diagnostics_draws(out: &Path) -> u64 {
    json(out.join("diagnostics.json"))["retained"].as_u64().unwrap()
}

fn manifest_count(dir: &Path) -> usize {
    std::fs::read_dir(dir)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().file_name() == "manifest.json")
        .count()
}

#[test]
fn fit_defaults_keep_post_burn_in_draws() {
    let dir = tempfile::tempdir().unwrap();
    let data = continuous_csv(dir.path(), 40, 1);
    let out = dir.path().join("fit");
    let (code, err) = subart(&["fit", "--data", s(&data), "--outcomes", "y1,y2", "--m", "10", "--out", s(&out)]);
    assert_eq!(code, 0, "{err}");
    assert_eq!(diagnostics_draws(&out), 4000);
    let chain = subart::PosteriorChain::load(&out.join("chain.bin")).unwrap();
    assert_eq!(chain.retained(), 4000);
    assert!(out.join("calibration.json").exists());
    assert_eq!(manifest_count(&out), 1);
    let m = json(out.join("manifest.json"));
    assert_eq!(m["status"], "ok");
    let digest = m["inputs"][0]["sha256"].as_str().unwrap();
    assert_eq!(digest, sha256_file(&data).unwrap());

    let bin = probit_csv(dir.path(), 40, 2);
    let out = dir.path().join("probit");
    let (code, err) = subart(&["fit", "--data", s(&bin), "--outcomes", "y1,y2", "--m", "10", "--out", s(&out)]);
    assert_eq!(code, 0, "{err}");
    assert_eq!(diagnostics_draws(&out), 8000);
    assert_eq!(json(out.join("manifest.json"))["config"]["mode"], "probit");

    let diag = dir.path().join("diag");
    let (code, err) = subart(&["diagnose", "--chain", s(&out.join("chain.bin")), "--out", s(&diag)]);
    assert_eq!(code, 0, "{err}");
    let d = json(diag.join("diagnostics.json"));
    assert!(d["px_mh_acceptance"].as_f64().is_some(), "{d}");
    assert!(diag.join("trace.csv").exists());
}

#[test]
fn malformed_csv_fails_validation_without_chain() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("bad.csv");
    std::fs::write(&data, "x,y1,y2\n1,2,3\n2,3\n3,4,5\n").unwrap();
    let out = dir.path().join("fit");
    let (code, err) = subart(&["fit", "--data", s(&data), "--outcomes", "y1,y2", "--out", s(&out)]);
    assert_eq!(code, 2);
    let report: Value = serde_json::from_str(err.lines().last().unwrap()).unwrap();
    assert_eq!(report["exit_code"], 2);
    assert!(!out.join("chain.bin").exists());
    assert!(!out.join("chain.bin.partial").exists());
    assert!(out.join("error.json").exists());
    let m = json(out.join("manifest.json"));
    assert_eq!(m["status"], "error");
}

#[test]
fn numerical_failure_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let data = continuous_csv(dir.path(), 30, 3);
    let out = dir.path().join("cal");
    let (code, err) = subart(&[
        "calibrate", "--data", s(&data), "--outcomes", "y1,y2", "--alpha-sigma", "1e-200", "--out", s(&out),
    ]);
    assert_eq!(code, 3, "{err}");
    assert_eq!(json(out.join("error.json"))["kind"], "RootNotBracketed");
}

#[test]
fn calibrate_reports_scale_per_outcome() {
    let dir = tempfile::tempdir().unwrap();
    let data = continuous_csv(dir.path(), 100, 4);
    let out = dir.path().join("cal");
    let (code, err) = subart(&["calibrate", "--data", s(&data), "--outcomes", "y1,y2", "--out", s(&out)]);
    assert_eq!(code, 0, "{err}");
    let r = json(out.join("calibration.json"));
    let outcomes = r["outcomes"].as_array().unwrap();
    assert_eq!(outcomes.len(), 2);
    for o in outcomes {
        assert!(o["sigma_hat"].as_f64().unwrap() > 0.0);
        assert!(o["a"].as_f64().unwrap() > 0.0);
    }
}

#[test]
fn config_file_then_flags() {
    let dir = tempfile::tempdir().unwrap();
    let data = continuous_csv(dir.path(), 30, 5);
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"m": 7, "n_mcmc": 60, "n_burnin": 10, "seed": 11}"#).unwrap();
    let base = ["calibrate", "--data", s(&data), "--outcomes", "y1,y2", "--config", s(&cfg)];

    let out = dir.path().join("a");
    let mut args = base.to_vec();
    args.extend(["--out", s(&out)]);
    assert_eq!(subart(&args).0, 0);
    let m = json(out.join("manifest.json"));
    assert_eq!(m["config"]["m"], 7);
    assert_eq!(m["seed"], 11);

    let out = dir.path().join("b");
    let mut args = base.to_vec();
    args.extend(["--m", "13", "--out", s(&out)]);
    assert_eq!(subart(&args).0, 0);
    let m = json(out.join("manifest.json"));
    assert_eq!(m["config"]["m"], 13);
    assert_eq!(m["config"]["n_mcmc"], 60);
}

#[test]
fn predict_shapes_and_schema_errors() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let n = 50;
    let mut text = String::from("x,g,y1,y2\n");
    for i in 0..n {
        let x: f64 = rng.random();
        let g = ["a", "b", "c"][i % 3];
        text.push_str(&format!("{x},{g},{},{}\n", x + rng.random::<f64>(), -x + rng.random::<f64>()));
    }
    let data = dir.path().join("train.csv");
    std::fs::write(&data, &text).unwrap();
    let fit = dir.path().join("fit");
    let (code, err) = subart(&[
        "fit", "--data", s(&data), "--outcomes", "y1,y2", "--categorical", "g", "--m", "10", "--n-mcmc", "200",
        "--n-burnin", "50", "--out", s(&fit),
    ]);
    assert_eq!(code, 0, "{err}");
    let chain = fit.join("chain.bin");

    let pred = dir.path().join("pred");
    let (code, err) =
        subart(&["predict", "--chain", s(&chain), "--data", s(&data), "--level", "0.5", "--out", s(&pred)]);
    assert_eq!(code, 0, "{err}");
    let mut r = csv::Reader::from_path(pred.join("predictions.csv")).unwrap();
    assert_eq!(r.headers().unwrap(), vec!["row", "outcome", "mean", "lo", "hi"]);
    let rows: Vec<csv::StringRecord> = r.records().map(|x| x.unwrap()).collect();
    assert_eq!(rows.len(), n * 2);
    for row in &rows {
        let v: Vec<f64> = (2..5).map(|k| row[k].parse().unwrap()).collect();
        assert!(v[1] <= v[2]);
    }

    let unseen = dir.path().join("unseen.csv");
    std::fs::write(&unseen, "x,g\n0.5,a\n0.2,zzz\n").unwrap();
    let out = dir.path().join("p2");
    let (code, _) = subart(&["predict", "--chain", s(&chain), "--data", s(&unseen), "--out", s(&out)]);
    assert_eq!(code, 2);
    assert_eq!(json(out.join("error.json"))["kind"], "UnknownCategoryLevel");

    let missing = dir.path().join("missing.csv");
    std::fs::write(&missing, "g\na\n").unwrap();
    let out = dir.path().join("p3");
    let (code, _) = subart(&["predict", "--chain", s(&chain), "--data", s(&missing), "--out", s(&out)]);
    assert_eq!(code, 2);
    let e = json(out.join("error.json"));
    assert_eq!(e["kind"], "SchemaMismatch");
    assert!(e["message"].as_str().unwrap().contains("`x`"), "{e}");
    assert!(!out.join("predictions.csv").exists());
}

fn cea_csv(dir: &Path) -> PathBuf {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut text = String::from("age,t,cost,qaly\n");
    for _ in 0..80 {
        let age: f64 = rng.random_range(20.0..80.0);
        let t = f64::from(rng.random::<f64>() < 0.5);
        let c = 1000.0 + 5.0 * age + 400.0 * t + 50.0 * rng.random::<f64>();
        let q = 0.8 - 0.003 * age + 0.05 * t + 0.02 * rng.random::<f64>();
        text.push_str(&format!("{age},{t},{c},{q}\n"));
    }
    let p = dir.join("cea.csv");
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn cea_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let data = cea_csv(dir.path());
    let quick = ["--m", "10", "--n-mcmc", "300", "--n-burnin", "100"];
    let on = dir.path().join("on");
    let mut args = vec!["cea", "--data", s(&data), "--cost-col", "cost", "--effect-col", "qaly", "--lambda", "20000", "50000"];
    args.extend(quick);
    args.extend(["--out", s(&on)]);
    let (code, err) = subart(&args);
    assert_eq!(code, 0, "{err}");
    let summary = json(on.join("summary.json"));
    let inb = summary["summary"]["inb"].as_array().unwrap();
    let lambdas: Vec<f64> = inb.iter().map(|b| b["lambda"].as_f64().unwrap()).collect();
    assert_eq!(lambdas, vec![20000.0, 50000.0]);
    let design: Vec<&str> = summary["design_columns"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    assert_eq!(design, vec!["age", "t", "ps"]);
    for f in ["ceac.csv", "cep_draws.csv", "importance.csv", "chain.bin", "manifest.json"] {
        assert!(on.join(f).exists(), "{f}");
    }
    let mut r = csv::Reader::from_path(on.join("cep_draws.csv")).unwrap();
    assert_eq!(r.records().count(), 200);

    let off = dir.path().join("off");
    let mut args = vec!["cea", "--data", s(&data), "--cost-col", "cost", "--effect-col", "qaly", "--ps", "off"];
    args.extend(quick);
    args.extend(["--out", s(&off)]);
    let (code, err) = subart(&args);
    assert_eq!(code, 0, "{err}");
    let summary = json(off.join("summary.json"));
    let design: Vec<&str> = summary["design_columns"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    assert_eq!(design, vec!["age", "t"]);
}

#[test]
fn simulate_writes_datasets_and_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sim");
    let (code, err) = subart(&[
        "simulate", "--scenario", "friedman1", "--d", "2", "--n", "250", "--n-test", "100", "--replicates", "5",
        "--m", "10", "--n-mcmc", "100", "--n-burnin", "20", "--out", s(&out),
    ]);
    assert_eq!(code, 0, "{err}");
    for r in 0..5 {
        assert!(out.join(format!("datasets/rep{r:04}_train.csv")).exists());
        assert!(out.join(format!("datasets/rep{r:04}_test.csv")).exists());
    }
    let mut rd = csv::Reader::from_path(out.join("metrics.csv")).unwrap();
    let reps: std::collections::BTreeSet<String> = rd.records().map(|x| x.unwrap()[0].to_string()).collect();
    assert_eq!(reps.len(), 5);
    assert_eq!(manifest_count(&out), 1);
}
