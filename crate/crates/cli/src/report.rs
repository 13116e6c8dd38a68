//! Bundles the per-command reports of a run directory into one document.

use std::fs;
use std::path::Path;

use serde_json::{json, Map, Value};

use crate::analysis::{EIKONAL_JSON, NULLCHECK_JSON, RESIDUALS_JSON, RIEMANN_JSON, SHOCK_JSON};
use crate::error::{CliError, CliResult};
use crate::run::{self, ReportHeader, RunManifest};
use crate::svg::{Chart, Series};

pub const REPORT_JSON: &str = "report.json";

const SECTIONS: [(&str, &str); 5] = [
    ("residuals", RESIDUALS_JSON),
    ("nullcheck", NULLCHECK_JSON),
    ("eikonal", EIKONAL_JSON),
    ("shock", SHOCK_JSON),
    ("riemann", RIEMANN_JSON),
];

pub fn report(out: &Path, strict: bool) -> CliResult<Value> {
    let manifest = match RunManifest::load(out) {
        Ok(m) => {
            m.verify(out)?;
            Some(m)
        }
        Err(_) => None,
    };
    let mut hashes: Vec<(String, String)> = Vec::new();
    if let Some(m) = &manifest {
        hashes.push((run::MANIFEST.to_string(), m.scenario_hash.clone()));
    }
    let mut sections = Map::new();
    for (name, file) in SECTIONS {
        let p = out.join(file);
        if !p.exists() {
            continue;
        }
        let v: Value = run::read_json(&p)?;
        if let Some(h) = v.get("scenario_hash").and_then(Value::as_str) {
            hashes.push((file.to_string(), h.to_string()));
        }
        sections.insert(name.to_string(), v);
    }
    if sections.is_empty() && manifest.is_none() {
        return Err(CliError::Config(format!("{} holds no run or reports", out.display())));
    }
    if let Some((first_file, first)) = hashes.first() {
        if let Some((file, h)) = hashes.iter().find(|(_, h)| h != first) {
            return Err(CliError::Config(format!(
                "refusing to mix artifacts from different scenarios: {first_file} has hash {first}, {file} has {h}"
            )));
        }
    }
    let failed: Vec<String> = sections
        .iter()
        .filter(|(_, v)| v.get("pass").and_then(Value::as_bool) == Some(false))
        .map(|(k, _)| k.clone())
        .collect();

    let mut plots = Vec::new();
    if let Some(p) = mu_star_plot(out)? {
        plots.push(p);
    }
    if let Some(r) = sections.get("residuals") {
        plots.push(residual_plot(out, r)?);
    }
    if let Some(e) = sections.get("eikonal") {
        plots.push(signature_plot(out, e)?);
    }

    let header = ReportHeader::new(hashes.first().map(|(_, h)| h.clone()));
    let document = json!({
        "scenario_hash": header.scenario_hash,
        "code_version": header.code_version,
        "run": manifest.as_ref().map(|m| json!({
            "grid": m.grid,
            "eos": m.eos,
            "dt": m.dt,
            "steps": m.steps,
            "t_final": m.t_final,
            "stop_reason": m.stop_reason,
            "artifacts": m.artifacts.len(),
        })),
        "sections": sections,
        "plots": plots,
        "failed": failed,
    });
    run::write_json(&out.join(REPORT_JSON), &document)?;
    eprintln!(
        "report: {} section(s), {} plot(s){}",
        document["sections"].as_object().map_or(0, |m| m.len()),
        plots.len(),
        if failed.is_empty() { String::new() } else { format!(", failed: {}", failed.join(", ")) }
    );
    if strict && !failed.is_empty() {
        return Err(CliError::Verification(format!("failed sections: {}", failed.join(", "))));
    }
    Ok(document)
}

fn mu_star_plot(out: &Path) -> CliResult<Option<String>> {
    if !out.join(run::HISTORY).exists() {
        return Ok(None);
    }
    let h = run::read_history(out)?;
    if h.mu_star.is_empty() {
        return Ok(None);
    }
    let chart = Chart {
        title: "minimum of mu".into(),
        x_label: "t".into(),
        y_label: "mu_*".into(),
        log_x: false,
        log_y: false,
        series: vec![Series {
            name: "mu_*".into(),
            points: h.t.iter().copied().zip(h.mu_star.iter().copied()).collect(),
        }],
    };
    let name = "mu_star.svg";
    fs::write(out.join(name), chart.render())?;
    Ok(Some(name.into()))
}

fn residual_plot(out: &Path, r: &Value) -> CliResult<String> {
    let levels = r["study"]["levels"].as_array().cloned().unwrap_or_default();
    let mut series: Vec<Series> = Vec::new();
    for l in &levels {
        let h = 1.0 / l["n"][0].as_f64().unwrap_or(1.0);
        if let Some(res) = l["residuals"].as_object() {
            for (name, norms) in res {
                let y = norms["l2"].as_f64().unwrap_or(f64::NAN);
                match series.iter_mut().find(|s| &s.name == name) {
                    Some(s) => s.points.push((h, y)),
                    None => series.push(Series {
                        name: name.clone(),
                        points: vec![(h, y)],
                    }),
                }
            }
        }
    }
    let chart = Chart {
        title: "residual norms under refinement".into(),
        x_label: "h".into(),
        y_label: "L2 residual".into(),
        log_x: true,
        log_y: true,
        series,
    };
    let name = "residuals.svg";
    fs::write(out.join(name), chart.render())?;
    Ok(name.into())
}

fn signature_plot(out: &Path, e: &Value) -> CliResult<String> {
    let sig = &e["signature"];
    let t: Vec<f64> = sig["t"].as_array().map(|a| a.iter().filter_map(Value::as_f64).collect()).unwrap_or_default();
    let mut series = Vec::new();
    for key in ["max_d1v1", "max_xbreve_v1", "max_l_v1", "max_y_v1", "max_varpi", "max_curl_varpi"] {
        let s: Vec<f64> = sig[key].as_array().map(|a| a.iter().filter_map(Value::as_f64).collect()).unwrap_or_default();
        let Some(&s0) = s.first().filter(|&&v| v > 0.0) else { continue };
        series.push(Series {
            name: key.to_string(),
            points: t.iter().zip(&s).map(|(&t, &v)| (t, v / s0)).collect(),
        });
    }
    let chart = Chart {
        title: "blowup signature (relative to the first sample)".into(),
        x_label: "t".into(),
        y_label: "s(t) / s(0)".into(),
        log_x: false,
        log_y: true,
        series,
    };
    let name = "signature.svg";
    fs::write(out.join(name), chart.render())?;
    Ok(name.into())
}
