use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_euler-null"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

const POLY: &str = r#""eos": {"family": "polytropic", "gamma": 2.0, "K": 0.5, "rho_bar": 1.0}"#;

fn simple_wave(n1: usize, snapshot_every: usize) -> String {
    format!(
        r#"{{
  "name": "simple wave",
  {POLY},
  "grid": {{"n": [{n1}, 1, 1]}},
  "initial_data": {{"delta": 0.5, "epsilon": 0.0, "perturbation": {{"kind": "none"}}}},
  "t_max": 1.0,
  "eikonal": true,
  "snapshot_every": {snapshot_every},
  "shock_diagnostics": true
}}"#
    )
}

fn vortical_small() -> String {
    format!(
        r#"{{
  {POLY},
  "grid": {{"n": [32, 8, 8]}},
  "initial_data": {{"delta": 0.5, "epsilon": 0.01}},
  "t_max": 1.0,
  "eikonal": true
}}"#
    )
}

#[test]
fn validate_accepts_well_formed_polytropic_scenario() {
    let d = TempDir::new().unwrap();
    let c = write_config(d.path(), "ok.json", &simple_wave(64, 1));
    let o = run(&["validate", "--config", c.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("scenario hash"));
}

#[test]
fn validate_rejects_hierarchy_violation() {
    let d = TempDir::new().unwrap();
    let c = write_config(
        d.path(),
        "bad.json",
        &format!(r#"{{ {POLY}, "grid": {{"n": [32, 8, 8]}}, "initial_data": {{"delta": 0.1, "epsilon": 0.5}}, "t_max": 0.1 }}"#),
    );
    let o = run(&["validate", "--config", c.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("hierarchy"), "{}", stderr(&o));
}

#[test]
fn validate_reports_field_and_line_of_schema_errors() {
    let d = TempDir::new().unwrap();
    let c = write_config(d.path(), "typo.json", &format!("{{\n  {POLY},\n  \"grid\": {{\"n\": [32, 1, 1]}},\n  \"t_mx\": 0.1\n}}"));
    let o = run(&["validate", "--config", c.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    let e = stderr(&o);
    assert!(e.contains("t_mx") && e.contains("line 4"), "{e}");
}

#[test]
fn validate_warns_for_chaplygin_shock_diagnostics() {
    let d = TempDir::new().unwrap();
    let c = write_config(
        d.path(),
        "chap.json",
        r#"{"eos": {"family": "chaplygin", "C0": 1.0, "C1": 1.0, "rho_bar": 1.0},
            "grid": {"n": [64, 1, 1]}, "t_max": 0.5, "shock_diagnostics": true,
            "initial_data": {"delta": 0.2, "epsilon": 0.0, "perturbation": {"kind": "none"}}}"#,
    );
    let o = run(&["validate", "--config", c.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let e = stderr(&o);
    assert!(e.contains("warning") && e.contains("NoShock"), "{e}");
}

#[test]
fn constant_state_run_stops_at_t_max_with_fields_unchanged() {
    let d = TempDir::new().unwrap();
    let c = write_config(
        d.path(),
        "const.json",
        &format!(
            r#"{{ {POLY}, "grid": {{"n": [16, 8, 8]}}, "t_max": 0.05, "snapshot_every": 1000,
                "initial_data": {{"delta": 0.0, "epsilon": 0.0, "perturbation": {{"kind": "none"}}}} }}"#
        ),
    );
    let out = d.path().join("run");
    let o = run(&["simulate", "--config", c.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let m = json(&out.join("manifest.json"));
    assert_eq!(m["stop_reason"], "t_max");
    let snaps: Vec<&Value> = m["artifacts"].as_array().unwrap().iter().filter(|a| a["kind"] == "snapshot").collect();
    assert_eq!(snaps.len(), 2);
    // Compared as values: a zero velocity may come back as -0.0.
    let body = |a: &Value| {
        let b = fs::read(out.join(a["path"].as_str().unwrap())).unwrap();
        b[72..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect::<Vec<f64>>()
    };
    assert_eq!(body(snaps[0]), body(snaps[1]));
    // Every listed artifact exists.
    for a in m["artifacts"].as_array().unwrap() {
        assert!(out.join(a["path"].as_str().unwrap()).exists());
    }
}

#[test]
fn resume_from_checkpoint_is_bit_identical() {
    let d = TempDir::new().unwrap();
    let c = write_config(d.path(), "v.json", &vortical_small());
    let c = c.to_str().unwrap();
    let full = d.path().join("full");
    let split = d.path().join("split");
    let o = run(&["simulate", "--config", c, "--out", full.to_str().unwrap(), "--steps", "12", "--snapshots", "4"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = run(&["simulate", "--config", c, "--out", split.to_str().unwrap(), "--steps", "5", "--snapshots", "4"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    // The resumed run takes its scenario from the run directory.
    let o = run(&["simulate", "--out", split.to_str().unwrap(), "--resume", "--steps", "7"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let a = fs::read(full.join("snapshots/step_00000012.bin")).unwrap();
    let b = fs::read(split.join("snapshots/step_00000012.bin")).unwrap();
    assert_eq!(a, b);
    for step in [4, 8] {
        let p = format!("snapshots/step_{step:08}.bin");
        assert_eq!(fs::read(full.join(&p)).unwrap(), fs::read(split.join(&p)).unwrap());
    }
    assert_eq!(
        fs::read_to_string(full.join("history.csv")).unwrap(),
        fs::read_to_string(split.join("history.csv")).unwrap()
    );
    let ck = json(&split.join("checkpoint.json"));
    assert_eq!(ck["step"], 12);
    assert_eq!(json(&full.join("checkpoint.json")), ck);
}

#[test]
fn resume_refuses_a_different_scenario() {
    let d = TempDir::new().unwrap();
    let c = write_config(d.path(), "v.json", &vortical_small());
    let out = d.path().join("r");
    let o = run(&["simulate", "--config", c.to_str().unwrap(), "--out", out.to_str().unwrap(), "--steps", "2"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = run(&["simulate", "--out", out.to_str().unwrap(), "--resume", "--seed", "9"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("checkpoint belongs to scenario"));
}

#[test]
fn tampered_artifact_is_detected() {
    let d = TempDir::new().unwrap();
    let c = write_config(d.path(), "sw.json", &simple_wave(256, 50));
    let out = d.path().join("r");
    let o = run(&["simulate", "--config", c.to_str().unwrap(), "--out", out.to_str().unwrap(), "--steps", "60"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let snap = out.join("snapshots/step_00000050.bin");
    let mut bytes = fs::read(&snap).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 1;
    fs::write(&snap, bytes).unwrap();
    let o = run(&["eikonal", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("checksum"), "{}", stderr(&o));
}

#[test]
fn gradient_guard_exits_with_numerical_failure() {
    let d = TempDir::new().unwrap();
    let c = write_config(
        d.path(),
        "g.json",
        &format!(
            r#"{{ {POLY}, "grid": {{"n": [128, 1, 1]}}, "t_max": 1.0, "blowup_factor": 1.5,
                "initial_data": {{"delta": 0.5, "epsilon": 0.0, "perturbation": {{"kind": "none"}}}} }}"#
        ),
    );
    let out = d.path().join("r");
    let o = run(&["simulate", "--config", c.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert_eq!(json(&out.join("manifest.json"))["stop_reason"], "blowup_guard");
}

#[test]
fn simple_wave_pipeline_recovers_the_shock_time() {
    let d = TempDir::new().unwrap();
    let c = write_config(d.path(), "sw.json", &simple_wave(2048, 100));
    let out = d.path().join("sw");
    let (c, o_) = (c.to_str().unwrap(), out.to_str().unwrap());
    for args in [
        vec!["simulate", "--config", c, "--out", o_],
        vec!["shock", "--out", o_, "--strict"],
        vec!["eikonal", "--out", o_],
        vec!["riemann", "--config", c, "--out", o_],
        vec!["report", "--out", o_, "--strict"],
    ] {
        let o = run(&args);
        assert_eq!(code(&o), 0, "{args:?}: {}", stderr(&o));
    }
    let r = json(&out.join("report.json"));
    let t_hat = r["sections"]["shock"]["fit"]["t_hat"].as_f64().unwrap();
    let t_star = 4.0 / (3.0 * std::f64::consts::PI);
    assert!((t_hat - t_star).abs() / t_star < 0.02, "{t_hat} vs {t_star}");
    let t_exact = r["sections"]["riemann"]["t_star"]["t_shock"].as_f64().unwrap();
    assert!((t_exact - t_star).abs() < 1e-12);
    assert_eq!(r["run"]["stop_reason"], "mu_stop");
    assert_eq!(r["scenario_hash"], json(&out.join("manifest.json"))["scenario_hash"]);
    for p in r["plots"].as_array().unwrap() {
        let svg = fs::read_to_string(out.join(p.as_str().unwrap())).unwrap();
        assert!(svg.starts_with("<svg"));
    }
    assert!(out.join("eikonal.csv").exists() && out.join("shock.csv").exists());
}

#[test]
fn report_refuses_to_mix_scenarios() {
    let d = TempDir::new().unwrap();
    let c = write_config(d.path(), "sw.json", &simple_wave(128, 1));
    let (a, b) = (d.path().join("a"), d.path().join("b"));
    for (dir, seed) in [(&a, "1"), (&b, "2")] {
        let o = run(&["riemann", "--config", c.to_str().unwrap(), "--out", dir.to_str().unwrap()]);
        assert_eq!(code(&o), 0);
        let o = run(&["simulate", "--config", c.to_str().unwrap(), "--out", dir.to_str().unwrap(), "--steps", "3", "--seed", seed]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    // The riemann reports were written for seed 0, the runs for seeds 1 and 2.
    let o = run(&["report", "--out", a.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("refusing to mix"), "{}", stderr(&o));
}

#[test]
fn riemann_prints_shock_time_and_chaplygin_has_none() {
    let d = TempDir::new().unwrap();
    let c = write_config(d.path(), "sw.json", &simple_wave(256, 1));
    let o = run(&["riemann", "--config", c.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let s = String::from_utf8_lossy(&o.stdout).into_owned();
    let t: f64 = s.lines().next().unwrap().trim_start_matches("t_star = ").parse().unwrap();
    assert!((t - 4.0 / (3.0 * std::f64::consts::PI)).abs() < 1e-12, "{s}");

    let c = write_config(
        d.path(),
        "chap.json",
        r#"{"eos": {"family": "chaplygin", "C0": 1.0, "C1": 1.0, "rho_bar": 1.0},
            "grid": {"n": [64, 1, 1]}, "t_max": 0.5,
            "initial_data": {"delta": 0.2, "epsilon": 0.0, "perturbation": {"kind": "none"}}}"#,
    );
    let out = d.path().join("chap");
    let o = run(&["riemann", "--config", c.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("no shock"));
    assert!(json(&out.join("riemann.json"))["t_star"].is_null());
}

#[test]
fn nullcheck_is_deterministic_and_passes_strict() {
    let d = TempDir::new().unwrap();
    let (a, b) = (d.path().join("a"), d.path().join("b"));
    for dir in [&a, &b] {
        let o = run(&["nullcheck", "--out", dir.to_str().unwrap(), "--samples", "10", "--frames", "3", "--seed", "7", "--strict"]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let ra = fs::read(a.join("nullcheck.json")).unwrap();
    assert_eq!(ra, fs::read(b.join("nullcheck.json")).unwrap());
    let v: Value = serde_json::from_slice(&ra).unwrap();
    assert_eq!(v["frames"], 30);
    let p = v["catalog"].as_array().unwrap().iter().find(|r| r["name"] == "P_varpi").unwrap();
    // Not null off shell, null after substitution.
    assert!(p["max_diagonal"].as_f64().unwrap() > 1e-3);
    assert!(p["on_shell_defect"].as_f64().unwrap() < 1e-10);
}

#[test]
fn nullcheck_samples_states_from_a_snapshot() {
    let d = TempDir::new().unwrap();
    let c = write_config(d.path(), "v.json", &vortical_small());
    let out = d.path().join("r");
    let o = run(&["simulate", "--config", c.to_str().unwrap(), "--out", out.to_str().unwrap(), "--steps", "2"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let snap = out.join("snapshots/step_00000002.bin");
    let o = run(&["nullcheck", "--out", out.to_str().unwrap(), "--snapshot", snap.to_str().unwrap(), "--samples", "5", "--strict"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v = json(&out.join("nullcheck.json"));
    assert_eq!(v["scenario_hash"], json(&out.join("manifest.json"))["scenario_hash"]);
}

#[test]
fn residual_study_writes_report_and_exports_fields() {
    let d = TempDir::new().unwrap();
    let c = write_config(
        d.path(),
        "v.json",
        &format!(r#"{{ {POLY}, "grid": {{"n": [16, 8, 8]}}, "initial_data": {{"delta": 0.5, "epsilon": 0.01}}, "t_max": 1.0 }}"#),
    );
    let out = d.path().join("r");
    let (c, o_) = (c.to_str().unwrap(), out.to_str().unwrap());
    let o = run(&["simulate", "--config", c, "--out", o_, "--steps", "6"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = run(&["residuals", "--config", c, "--out", o_, "--levels", "3"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = json(&out.join("residuals.json"));
    assert_eq!(r["study"]["levels"].as_array().unwrap().len(), 3);
    assert_eq!(r["study"]["levels"][2]["n"][0], 64);
    for name in ["wave_velocity", "wave_density", "transport_vorticity", "div_identity", "curl_transport"] {
        assert_eq!(r["study"]["orders"][name].as_array().unwrap().len(), 2, "{name}");
    }
    let f = r["exported_fields"]["path"].as_str().unwrap();
    assert!(out.join(f).exists());
    assert_eq!(r["exported_fields"]["components"].as_array().unwrap().len(), 11);
    let o = run(&["report", "--out", o_]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(out.join("residuals.svg").exists());

    let o = run(&["residuals", "--config", c, "--out", o_, "--levels", "2"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn shock_without_eikonal_history_is_a_config_error() {
    let d = TempDir::new().unwrap();
    let c = write_config(
        d.path(),
        "n.json",
        &format!(
            r#"{{ {POLY}, "grid": {{"n": [64, 1, 1]}}, "t_max": 0.01,
                "initial_data": {{"delta": 0.5, "epsilon": 0.0, "perturbation": {{"kind": "none"}}}} }}"#
        ),
    );
    let out = d.path().join("r");
    let o = run(&["simulate", "--config", c.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = run(&["shock", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("no mu_* history"));
}
