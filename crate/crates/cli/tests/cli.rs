use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use sha2::{Digest, Sha256};

fn srqe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_srqe")).args(args).output().expect("binary runs")
}

fn run_ok(args: &[&str]) {
    let out = srqe(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn dir_arg(d: &Path) -> String {
    d.to_str().unwrap().to_string()
}

/// Oscillator levels `(2l+1)|m| ≤ λ` with multiplicity `|m|`, torus points
/// `2π(j²+k²) ≤ λ`.
fn brute_count(lambda: f64) -> u64 {
    let mut n = 0;
    let top = lambda as i64;
    for m in 1..=top {
        for l in 0..=top {
            if ((2 * l + 1) * m) as f64 <= lambda {
                n += 2 * m as u64;
            }
        }
    }
    let r = (lambda / (2.0 * std::f64::consts::PI)).sqrt() as i64 + 1;
    for j in -r..=r {
        for k in -r..=r {
            if 2.0 * std::f64::consts::PI * ((j * j + k * k) as f64) <= lambda {
                n += 1;
            }
        }
    }
    n
}

#[test]
fn spectrum_counts_and_manifest_checksums() {
    let d = tempfile::tempdir().unwrap();
    run_ok(&["spectrum", "--lambda-max", "1000", "--output-dir", &dir_arg(d.path())]);
    let s = read_json(&d.path().join("spectrum.json"));
    assert_eq!(s["count"].as_u64().unwrap(), brute_count(1000.0));
    let fit = &s["weyl_fit"];
    assert!((fit["exponent"].as_f64().unwrap() - 2.0).abs() < 0.02);
    let m = read_json(&d.path().join("manifest.json"));
    assert_eq!(m["inputs"]["experiment"], "spectrum");
    assert_eq!(m["inputs"]["seed"], 0);
    let outputs = m["outputs"].as_array().unwrap();
    assert_eq!(outputs.len(), 2);
    for o in outputs {
        let bytes = std::fs::read(d.path().join(o["file"].as_str().unwrap())).unwrap();
        assert_eq!(o["sha256"].as_str().unwrap(), hex::encode(Sha256::digest(&bytes)));
    }
    let csv = std::fs::read_to_string(d.path().join("spectrum.csv")).unwrap();
    assert!(csv.starts_with("eigenvalue,sector_kind,l,m,j,k,multiplicity\n"));
}

#[test]
fn single_thread_runs_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        run_ok(&["weyl", "--epsilon", "0.1", "--lambda-lo", "6", "--lambda-hi", "12", "--n-grid", "12", "--threads", "1", "--output-dir", &dir_arg(d.path())]);
    }
    for f in ["counts.csv", "weyl.json"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn config_file_matches_flags() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_ok(&["flow", "--epsilon", "0.2", "--t-end", "2", "--dt", "0.01", "--scheme", "implicit-midpoint", "--output-dir", &dir_arg(a.path())]);
    let cfg = serde_json::json!({
        "experiment": "flow",
        "model": { "epsilon": 0.2, "coeff_a": { "terms": [{ "kx": 1, "ky": 1, "cos": 0.5 }, { "kx": 1, "ky": -1, "cos": 0.5 }] }, "coeff_b": { "terms": [{ "kx": 0, "ky": 1, "sin": 1.0 }] } },
        "parameters": { "t_end": 2.0, "dt": 0.01, "scheme": "implicit-midpoint" },
        "output_dir": dir_arg(b.path()),
    });
    let path = b.path().join("config.json");
    std::fs::write(&path, cfg.to_string()).unwrap();
    run_ok(&["--config", path.to_str().unwrap()]);
    let ta = std::fs::read_to_string(a.path().join("trajectory.csv")).unwrap();
    let tb = std::fs::read_to_string(b.path().join("trajectory.csv")).unwrap();
    let last = |t: &str| t.lines().last().unwrap().split(',').map(|v| v.parse::<f64>().unwrap()).collect::<Vec<_>>();
    for (x, y) in last(&ta).iter().zip(last(&tb)) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn heat_karamata_report() {
    let d = tempfile::tempdir().unwrap();
    run_ok(&["heat", "--experiment", "karamata", "--output-dir", &dir_arg(d.path())]);
    let h = read_json(&d.path().join("heat.json"));
    let c = h["karamata"]["weyl_constant"].as_f64().unwrap();
    assert!((c - std::f64::consts::PI.powi(2) / 8.0).abs() < 1e-3);
    let rows = std::fs::read_to_string(d.path().join("trace.csv")).unwrap();
    assert_eq!(rows.lines().count(), 17);

    let d = tempfile::tempdir().unwrap();
    run_ok(&["heat", "--experiment", "kernel", "--t", "0.1,1", "--output-dir", &dir_arg(d.path())]);
    let h = read_json(&d.path().join("heat.json"));
    for v in h["values"].as_array().unwrap() {
        assert!((v["t2_kernel"].as_f64().unwrap() - 1.0 / 16.0).abs() < 1e-6);
    }
}

#[test]
fn local_normal_form_artifacts() {
    let d = tempfile::tempdir().unwrap();
    run_ok(&["nf", "--input", "H2+u3", "--order", "6", "--mode", "local", "--output-dir", &dir_arg(d.path())]);
    let text = std::fs::read_to_string(d.path().join("normal_form.txt")).unwrap();
    assert_eq!(text.trim(), "1 * t^0 * s^(2/2) * u^2 v^0 + 1 * t^0 * s^(2/2) * u^0 v^2");
    let gens = std::fs::read_to_string(d.path().join("generators.txt")).unwrap();
    assert!(gens.lines().any(|l| l.starts_with("invariant: ")));
    let nf = read_json(&d.path().join("nf.json"));
    assert_eq!(nf["replay_exact"], true);
    assert_eq!(nf["h2_only"], true);

    // a canonical-text input file gives the same result as the preset
    let input = d.path().join("h.txt");
    std::fs::write(&input, "1 * t^0 * s^(2/2) * u^2 v^0 + 1 * t^0 * s^(2/2) * u^0 v^2 + 1 * t^0 * s^(1/2) * u^3 v^0").unwrap();
    let e = tempfile::tempdir().unwrap();
    run_ok(&["nf", "--input", input.to_str().unwrap(), "--order", "6", "--output-dir", &dir_arg(e.path())]);
    let f = tempfile::tempdir().unwrap();
    run_ok(&["nf", "--order", "6", "--output-dir", &dir_arg(f.path())]);
    assert_eq!(std::fs::read(e.path().join("normal_form.txt")).unwrap(), std::fs::read(f.path().join("normal_form.txt")).unwrap());
}

#[test]
fn qe_classification_and_statistics() {
    let d = tempfile::tempdir().unwrap();
    run_ok(&["qe", "--lambda-max", "1000", "--checkpoints", "100,1000", "--kvn-lambda", "300", "--classify-sector", "5", "--n-grid", "16", "--classify-count", "3", "--output-dir", &dir_arg(d.path())]);
    let q = read_json(&d.path().join("qe.json"));
    let rows = q["checkpoints"].as_array().unwrap();
    assert!(rows[0]["cesaro_mean"].as_f64().unwrap() < rows[1]["cesaro_mean"].as_f64().unwrap());
    let csv = std::fs::read_to_string(d.path().join("classify.csv")).unwrap();
    let first: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert!(first[2].parse::<f64>().unwrap() >= 0.8);
}

#[test]
fn spiral_and_ergodic_runs() {
    let d = tempfile::tempdir().unwrap();
    run_ok(&["spiral", "--epsilons", "0.1,0.05", "--starts", "2", "--output-dir", &dir_arg(d.path())]);
    let s = read_json(&d.path().join("spiral.json"));
    assert!(s["slope"].as_f64().unwrap() > 2.0);

    let d = tempfile::tempdir().unwrap();
    run_ok(&["ergodic", "--system", "flat-reeb", "--t-end", "50", "--dt", "0.05", "--output-dir", &dir_arg(d.path())]);
    let e = read_json(&d.path().join("ergodic.json"));
    assert!(e["max_deviation"].as_f64().unwrap() < 1e-10);

    let d = tempfile::tempdir().unwrap();
    run_ok(&["ergodic", "--region", "half-domain", "--starts", "2", "--t-end", "50", "--seed", "3", "--output-dir", &dir_arg(d.path())]);
    let e = read_json(&d.path().join("ergodic.json"));
    assert_eq!(e["averages"].as_array().unwrap().len(), 2);
    assert_eq!(read_json(&d.path().join("manifest.json"))["inputs"]["seed"], 3);
}

#[test]
fn invalid_config_exits_two() {
    let d = tempfile::tempdir().unwrap();
    let path = d.path().join("bad.json");
    std::fs::write(&path, r#"{"experiment":"nf","parameters":{"ordr":6}}"#).unwrap();
    let out = srqe(&["--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "invalid-config");

    std::fs::write(&path, r#"{"experiment":"spectrum","model":{"epsilon":2.0,"coeff_a":{"terms":[{"kx":1,"ky":0,"cos":1.0}]}}}"#).unwrap();
    let out = srqe(&["--config", path.to_str().unwrap(), "--output-dir", &dir_arg(d.path())]);
    assert_eq!(out.status.code(), Some(2));

    let out = srqe(&[]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn numeric_failure_exits_three() {
    let d = tempfile::tempdir().unwrap();
    let out = srqe(&["heat", "--experiment", "kernel", "--point", "0,0,10", "--t", "0.001", "--output-dir", &dir_arg(d.path())]);
    assert_eq!(out.status.code(), Some(3));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "resolution");
    assert!(d.path().join("error.json").exists());
    assert!(!d.path().join("manifest.json").exists());
}
