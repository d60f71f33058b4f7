//! End-to-end CLI tests driving the binary.

use std::path::Path;
use std::process::{Command, Output};

fn subgeo(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_subgeo"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> serde_json::Value {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn convert_round_trip_beta_kstar_beta() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cert = serde_json::json!({
        "sieve": "osc2",
        "a_max": 0.25,
        "param": "beta",
        "fn": {"direction": "decreasing", "domain": [1e-9, 1e9],
               "form": {"type": "power_law", "coeff": 1.0, "exponent": -1.0}},
        "subject": "P*P",
    });
    std::fs::write(d.join("cert.json"), cert.to_string()).unwrap();
    let out = subgeo(
        &["convert", "--in", "cert.json", "--to", "kstar", "--out", "k.json",
          "--gamma-table", "gamma.csv"],
        d,
    );
    stdout_json(&out);
    let out = subgeo(
        &["convert", "--in", "k.json", "--to", "beta", "--out", "b.json"],
        d,
    );
    stdout_json(&out);
    // round trip agrees with the capped input away from the cap transition
    let back: subgeo::WpiCertificate =
        serde_json::from_str(&std::fs::read_to_string(d.join("b.json")).unwrap()).unwrap();
    for &s in &[30.0, 100.0, 1000.0] {
        let b = back.eval_beta(s).unwrap();
        let want = (1.0 / s_f(s)).min(0.25);
        assert!(
            (b - want).abs() < 0.05 * want,
            "s={s}: {b} vs {want}"
        );
    }
    // gamma table exists with a header and rows
    let gamma = std::fs::read_to_string(d.join("gamma.csv")).unwrap();
    assert!(gamma.starts_with("n,gamma\n"));
    assert!(gamma.lines().count() > 20);

    fn s_f(s: f64) -> f64 {
        s
    }
}

#[test]
fn convert_rejects_bad_json_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("bad.json"), "{ not json").unwrap();
    let out = subgeo(
        &["convert", "--in", "bad.json", "--to", "beta", "--out", "x.json"],
        d,
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
}

#[test]
fn counterexample_rupi_verdict() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = subgeo(
        &["fixture", "counterexample", "--levels", "8", "--out", "ce.json"],
        d,
    );
    stdout_json(&out);
    let out = subgeo(
        &["chain", "--in", "ce.json", "--report", "rupi", "--power-k", "2"],
        d,
    );
    let v = stdout_json(&out);
    assert_eq!(v["is_rupi"], false);
    assert_eq!(v["kernel"], "(P*)^2 P^2");
    let absorbing: Vec<String> = v["absorbing_states"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s.as_str().unwrap().to_string())
        .collect();
    assert!(absorbing.contains(&"(5,5)".to_string()), "{absorbing:?}");
    assert!(!v["violating_pair"].is_null());
    // P itself is RUPI
    let out = subgeo(&["chain", "--in", "ce.json", "--report", "rupi"], d);
    let v = stdout_json(&out);
    assert_eq!(v["is_rupi"], true);
}

#[test]
fn two_state_exact_beta_star() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    subgeo(
        &["fixture", "two-state", "--p", "0.3", "--q", "0.5", "--out", "two.json"],
        d,
    );
    let out = subgeo(&["chain", "--in", "two.json", "--report", "beta-lower"], d);
    let v = stdout_json(&out);
    let exact = v["exact_two_state"].as_array().unwrap();
    assert!(!exact.is_empty());
    // exact beta* = (var - s E)^+ with var = mu0 mu1, E = mu0 p01
    let (mu0, mu1) = (0.5 / 0.8, 0.3 / 0.8);
    let var = mu0 * mu1;
    let e = mu0 * 0.3;
    for entry in exact {
        let s = entry[0].as_f64().unwrap();
        let b = entry[1].as_f64().unwrap();
        let want = (var - s * e).max(0.0);
        assert!((b - want).abs() < 1e-12, "s={s}");
    }
}

#[test]
fn circle_walk_decay_p_vs_reversibilization() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    subgeo(&["fixture", "circle", "--m", "5", "--out", "circle.json"], d);
    let out = subgeo(
        &["chain", "--in", "circle.json", "--report", "decay", "--n", "60",
          "--csv", "decay.csv"],
        d,
    );
    let v = stdout_json(&out);
    // deterministic rotation preserves the norm; the reversibilization mixes
    let p_final = v["final_value"].as_f64().unwrap();
    let s_final = v["final_value_reversibilized"].as_f64().unwrap();
    assert!(p_final > 0.1, "{p_final}");
    assert!(s_final < 1e-3, "{s_final}");
    let csv = std::fs::read_to_string(d.join("decay.csv")).unwrap();
    assert!(csv.starts_with("n,value,value_reversibilized\n"));
    assert_eq!(csv.lines().count(), 62);
}

#[test]
fn rwm_bound_closed_form_and_sweeps() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = subgeo(
        &["rwm-bound", "--family", "student_t", "--d", "10", "--tau", "5",
          "--varsigma", "1", "--eps", "0.01", "--u", "1"],
        d,
    );
    let v = stdout_json(&out);
    let rel = v["report"]["closed_rel_err"].as_f64().unwrap();
    assert!(rel < 0.05, "{rel}");
    let n1 = v["report"]["n_bound"].as_u64().unwrap();
    // u sweep is monotone
    let out = subgeo(
        &["rwm-bound", "--family", "student_t", "--d", "10", "--tau", "5",
          "--varsigma", "1", "--eps", "0.01", "--u", "10"],
        d,
    );
    let v10 = stdout_json(&out);
    assert!(v10["report"]["n_bound"].as_u64().unwrap() >= n1);
    // hypothesis violation: d = 2 student_t has xi >= 1
    let out = subgeo(
        &["rwm-bound", "--family", "student_t", "--d", "2", "--tau", "5",
          "--varsigma", "1", "--eps", "0.01"],
        d,
    );
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("hypothesis"), "{err}");
}

#[test]
fn simulate_deterministic_and_jump_exponent() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let config = serde_json::json!({
        "target": {"type": "jump", "a": 4.0, "b": 1.0},
        "kernel": {"type": "hold"},
        "n_steps": 4000,
        "n_replicas": 8,
        "seed": 99,
        "init": {"type": "warm"},
    });
    std::fs::write(d.join("sim.json"), config.to_string()).unwrap();
    let out = subgeo(&["simulate", "--config", "sim.json", "--out", "run1"], d);
    stdout_json(&out);
    let out = Command::new(env!("CARGO_BIN_EXE_subgeo"))
        .args(["simulate", "--config", "sim.json", "--out", "run2"])
        .env("SUBGEO_THREADS", "1")
        .current_dir(d)
        .output()
        .unwrap();
    assert!(out.status.success());
    // byte-identical reruns, independent of the thread count
    let t1 = std::fs::read(d.join("run1/trajectories.csv")).unwrap();
    let t2 = std::fs::read(d.join("run2/trajectories.csv")).unwrap();
    assert_eq!(t1, t2);
    let d1 = std::fs::read(d.join("run1/diagnostics.json")).unwrap();
    let d2 = std::fs::read(d.join("run2/diagnostics.json")).unwrap();
    assert_eq!(d1, d2);
    let diag: serde_json::Value = serde_json::from_slice(&d1).unwrap();
    let tail = diag["stationary_tail_exponent"].as_f64().unwrap();
    assert!((tail - 2.0).abs() < 0.5, "tail exponent {tail}");
}

#[test]
fn simulate_rwm_reports_acceptance_floor() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    // sigma = varsigma / sqrt(L d) with L = 1 + d/tau = 1.4, d = 2
    let sigma = 1.0 / (1.4_f64 * 2.0).sqrt();
    let config = serde_json::json!({
        "target": {"type": "heavy_tail", "spec": {"family": "student_t", "d": 2, "tau": 5.0}},
        "kernel": {"type": "rwm", "sigma": sigma},
        "n_steps": 20000,
        "n_replicas": 2,
        "seed": 5,
        "init": {"type": "warm"},
    });
    std::fs::write(d.join("sim.json"), config.to_string()).unwrap();
    let out = subgeo(&["simulate", "--config", "sim.json", "--out", "run"], d);
    stdout_json(&out);
    let diag: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("run/diagnostics.json")).unwrap())
            .unwrap();
    assert_eq!(diag["acceptance_above_floor"], true);
    assert!((diag["implied_varsigma"].as_f64().unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn simulate_rejects_invalid_config() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let config = serde_json::json!({
        "target": {"type": "jump", "a": 1.5, "b": 1.0}, // b >= a - 1
        "kernel": {"type": "hold"},
        "n_steps": 10,
        "n_replicas": 1,
        "seed": 1,
        "init": {"type": "warm"},
    });
    std::fs::write(d.join("sim.json"), config.to_string()).unwrap();
    let out = subgeo(&["simulate", "--config", "sim.json", "--out", "run"], d);
    assert_eq!(out.status.code(), Some(2));
}
