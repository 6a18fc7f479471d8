// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn pidsteer(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pidsteer"))
        .args(args)
        .current_dir(dir)
        .env_remove("PIDSTEER_THREADS")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    std::fs::write(dir.join(name), text).unwrap();
    name.to_string()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn controller<'a>(summary: &'a Value, label: &str) -> &'a Value {
    summary["members"][0]["controllers"].as_array().unwrap().iter().find(|c| c["label"] == label).unwrap()
}

#[test]
fn simulate_default_plant() {
    let dir = tempfile::tempdir().unwrap();
    let out = pidsteer(&["simulate", "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));

    let csv = std::fs::read_to_string(dir.path().join("o/trace_PI.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("# pidsteer trace v1"));
    assert_eq!(lines.next(), Some("k,e_bar_norm,e_v,s_v,u_norm,w_norm,inner_e0"));
    assert_eq!(lines.count(), 151);

    let summary = read_json(&dir.path().join("o/summary.json"));
    let pi = controller(&summary, "PI");
    assert!(pi["steady_state"].as_f64().unwrap() <= 1e-6);
    assert!(!pi["overshoots"]["events"].as_array().unwrap().is_empty());
    let p = controller(&summary, "P");
    assert!(p["steady_state"].as_f64().unwrap() > 1e-3);
}

#[test]
fn outputs_are_deterministic_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"plant": {"kind": "random", "dim": 4, "pairs": 3, "layers": 40, "jacobian_norm_cap": 0.9,
                      "heterogeneity": 0.2, "seed": 11},
            "gains": [{"kp": 0.4, "ki": 0.1}, {"kp": 0.4, "ki": 0.1, "kd": 0.05}],
            "run": {"ensemble": 3}}"#,
    );
    let a = Command::new(env!("CARGO_BIN_EXE_pidsteer"))
        .args(["simulate", "--config", &cfg, "--out", "a"])
        .current_dir(dir.path())
        .env("PIDSTEER_THREADS", "1")
        .status()
        .unwrap();
    let b = Command::new(env!("CARGO_BIN_EXE_pidsteer"))
        .args(["simulate", "--config", &cfg, "--out", "b"])
        .current_dir(dir.path())
        .env("PIDSTEER_THREADS", "4")
        .status()
        .unwrap();
    assert!(a.success() && b.success());
    for name in ["summary.json", "trace_PI_seed12.csv", "trace_PID1_seed13.csv"] {
        let x = std::fs::read(dir.path().join("a").join(name)).unwrap();
        let y = std::fs::read(dir.path().join("b").join(name)).unwrap();
        assert_eq!(x, y, "{name}");
    }
}

#[test]
fn certify_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.json", r#"{"run": {"certify": {"m_bound": 1, "q": 0.9, "h": 0.2}}}"#);
    let out = pidsteer(&["certify", "--config", &bad], dir.path());
    assert_eq!(out.status.code(), Some(4));
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["certificates"][0]["stability"]["iss"], false);

    let good = write(dir.path(), "good.json", r#"{"run": {"certify": {"m_bound": 1, "q": 0.5, "h": 0.05}}}"#);
    let out = pidsteer(&["certify", "--config", &good, "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let doc = read_json(&dir.path().join("o/certificate.json"));
    let stab = &doc["certificates"][0]["stability"];
    assert_eq!(stab["iss"], true);
    assert!(stab["rho"].as_f64().unwrap() < 1.0);
    assert!(stab["c_const"].as_f64().unwrap() >= 1.0);

    let pid =
        write(dir.path(), "pid.json", r#"{"run": {"certify": {"m_bound": 1, "q": 0.5, "h": 0.05, "ell": 0.001}}}"#);
    let out = pidsteer(&["certify", "--config", &pid], dir.path());
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    let lyap = &doc["certificates"][0]["lyapunov"];
    assert!(0.001f64.powi(2) < lyap["admissible_ell_sq"].as_f64().unwrap());
    assert_eq!(lyap["valid"], true);
    assert_eq!(out.status.code(), Some(0));

    let big = write(dir.path(), "big.json", r#"{"run": {"certify": {"m_bound": 1, "q": 0.5, "h": 0.05, "ell": 0.5}}}"#);
    let out = pidsteer(&["certify", "--config", &big], dir.path());
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["certificates"][0]["lyapunov"]["valid"], false);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn certify_constant_linear_plant_uses_exact_jacobian() {
    let dir = tempfile::tempdir().unwrap();
    let plant = r#"{"dim": 2, "pairs": 1, "layers": [[{"kind": "linear", "weight": [[0.5, 0.0], [0.0, 0.25]], "bias": [0.0, 0.0]}],
                               [{"kind": "linear", "weight": [[0.5, 0.0], [0.0, 0.25]], "bias": [0.0, 0.0]}]],
                    "initial_plus": [[1.0, 1.0]], "initial_minus": [[0.0, 0.0]]}"#;
    write(dir.path(), "plant.json", plant);
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"plant": {"kind": "file", "path": "plant.json"}, "gains": {"kp": 0.5, "ki": 0.2}}"#,
    );
    let out = pidsteer(&["certify", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    let entry = &doc["certificates"][0];
    assert_eq!(entry["basis"], "plant");
    assert_eq!(entry["m_bound"].as_f64().unwrap(), 0.5);
    assert!(entry["pi_loop_radius"].as_f64().unwrap() < 1.0);
}

#[test]
fn sweep_radius_is_smallest_near_optimal_integral_gain() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "s.json",
        r#"{"plant": {"kind": "random", "dim": 4, "pairs": 3, "layers": 30, "jacobian_norm_cap": 0.9,
                      "heterogeneity": 0.3, "seed": 3},
            "gains": {"kp": 0.5},
            "run": {"sweep": {"ki": {"start": 0.01, "stop": 0.3, "step": 0.005}}}}"#,
    );
    let out = pidsteer(&["sweep", "--config", &cfg, "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = read_json(&dir.path().join("o/sweep.json"));
    let m = summary["m_bound"].as_f64().unwrap();
    let best = &summary["min_radius"];
    let q = best["q"].as_f64().unwrap();
    let h_star = (1.0 - q).powi(2) / (4.0 * m);
    assert!((best["ki"].as_f64().unwrap() - h_star).abs() <= 0.005 + 1e-12);

    let csv = std::fs::read_to_string(dir.path().join("o/sweep.csv")).unwrap();
    assert!(csv.starts_with("# pidsteer sweep v1\n"));
    assert_eq!(csv.lines().count(), 2 + 59);
}

#[test]
fn sweep_derivative_gain_flips_monotone_flag() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "s.json",
        r#"{"plant": {"kind": "random", "dim": 3, "pairs": 3, "layers": 80, "jacobian_norm_cap": 0.95,
                      "heterogeneity": 0.3, "seed": 4},
            "gains": {"kp": 0.1, "ki": 0.05},
            "run": {"sweep": {"kd": [0.0, 0.1, 0.2, 0.4, 0.6, 0.8]}}}"#,
    );
    let out = pidsteer(&["sweep", "--config", &cfg, "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let csv = std::fs::read_to_string(dir.path().join("o/sweep.csv")).unwrap();
    let flags: Vec<&str> = csv.lines().skip(2).map(|l| l.split(',').nth(7).unwrap()).collect();
    assert_eq!(flags.first(), Some(&"true"));
    assert_eq!(flags.last(), Some(&"false"), "{flags:?}");
}

#[test]
fn overshoot_report_and_figure() {
    let dir = tempfile::tempdir().unwrap();
    let out = pidsteer(&["overshoot-report", "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let doc = read_json(&dir.path().join("o/overshoot.json"));
    let cmp = &doc["members"][0]["comparisons"][0]["comparison"];
    assert_eq!(cmp["reduced"], true);
    let pi = &doc["members"][0]["controllers"][1];
    assert!(pi["a0_bound"].as_f64().unwrap() >= pi["report"]["first"]["a0"].as_f64().unwrap());

    let out = pidsteer(&["figure", "--out", "f", "--steps", "60"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let csv = std::fs::read_to_string(dir.path().join("f/figure.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("# pidsteer figure v1"));
    assert_eq!(lines.next(), Some("k,P,PI,PID"));
    assert_eq!(lines.count(), 61);
}

#[test]
fn exit_codes_for_bad_input_and_divergence() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(pidsteer(&["simulate", "--config", "missing.json"], dir.path()).status.code(), Some(2));
    let bad = write(dir.path(), "bad.json", r#"{"gains": {"kp": -1}}"#);
    assert_eq!(pidsteer(&["simulate", "--config", &bad], dir.path()).status.code(), Some(2));
    let garbled = write(dir.path(), "garbled.json", "{not json");
    assert_eq!(pidsteer(&["figure", "--config", &garbled], dir.path()).status.code(), Some(2));

    let threads = Command::new(env!("CARGO_BIN_EXE_pidsteer"))
        .args(["figure", "--out", "x"])
        .current_dir(dir.path())
        .env("PIDSTEER_THREADS", "many")
        .status()
        .unwrap();
    assert_eq!(threads.code(), Some(2));

    let unstable = write(
        dir.path(),
        "u.json",
        r#"{"plant": {"kind": "random", "dim": 3, "pairs": 2, "layers": 800, "jacobian_norm_cap": 5, "seed": 1},
            "gains": {"kp": 0}}"#,
    );
    assert_eq!(pidsteer(&["simulate", "--config", &unstable, "--out", "o"], dir.path()).status.code(), Some(3));
}
