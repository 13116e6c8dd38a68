//! Scenario loading, run directories, manifests and checkpoints.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use euler_null::fields::{self, Grid};
use euler_null::solver::{EikonalState, Frame, History, Scenario, StopReason};
use euler_null::{EquationOfState, FluidState};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const CODE_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

pub const MANIFEST: &str = "manifest.json";
pub const SCENARIO: &str = "scenario.json";
pub const CHECKPOINT: &str = "checkpoint.json";
pub const HISTORY: &str = "history.csv";
pub const SNAPSHOT_DIR: &str = "snapshots";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash of the canonical serialisation, so whitespace and key order in the
/// config file do not matter but every parameter (including the seed) does.
pub fn scenario_hash(s: &Scenario) -> String {
    sha256_hex(&serde_json::to_vec(s).expect("scenario serialises"))
}

pub fn parse_scenario(text: &str, origin: &Path) -> CliResult<Scenario> {
    serde_json::from_str(text).map_err(|e| CliError::Config(format!("{}: {e}", origin.display())))
}

pub fn read_scenario(path: &Path) -> CliResult<Scenario> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    parse_scenario(&text, path)
}

/// The scenario from `--config`, or else the one stored in the run directory.
pub fn resolve_scenario(config: Option<&Path>, out: &Path) -> CliResult<Scenario> {
    match config {
        Some(p) => read_scenario(p),
        None => {
            let p = out.join(SCENARIO);
            if !p.exists() {
                return Err(CliError::Config(format!(
                    "no --config given and {} does not exist",
                    p.display()
                )));
            }
            read_scenario(&p)
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    /// Path relative to the run directory.
    pub path: String,
    pub kind: String,
    pub sha256: String,
    pub bytes: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub scenario_hash: String,
    pub code_version: String,
    pub grid: Grid,
    pub eos: EquationOfState,
    pub dt: f64,
    pub steps: usize,
    pub t_final: f64,
    pub stop_reason: StopReason,
    pub timings: BTreeMap<String, f64>,
    pub artifacts: Vec<Artifact>,
}

impl RunManifest {
    pub fn load(dir: &Path) -> CliResult<Self> {
        let p = dir.join(MANIFEST);
        if !p.exists() {
            return Err(CliError::Config(format!("{} not found; run `simulate` first", p.display())));
        }
        read_json(&p)
    }

    /// Every listed artifact exists and matches its checksum.
    pub fn verify(&self, dir: &Path) -> CliResult<()> {
        for a in &self.artifacts {
            let p = dir.join(&a.path);
            let bytes = fs::read(&p).map_err(|e| CliError::Config(format!("artifact {}: {e}", a.path)))?;
            if sha256_hex(&bytes) != a.sha256 {
                return Err(CliError::Config(format!("artifact {} does not match its recorded checksum", a.path)));
            }
        }
        Ok(())
    }

    /// Snapshot artifacts ordered by step.
    pub fn snapshots(&self) -> Vec<&Artifact> {
        let mut v: Vec<&Artifact> = self.artifacts.iter().filter(|a| a.kind == "snapshot").collect();
        v.sort_by_key(|a| a.step);
        v
    }

    pub fn upsert(&mut self, a: Artifact) {
        match self.artifacts.iter_mut().find(|x| x.path == a.path) {
            Some(x) => *x = a,
            None => self.artifacts.push(a),
        }
    }
}

/// Records a file just written under `dir` as an artifact.
pub fn artifact(dir: &Path, rel: &str, kind: &str, step: Option<usize>) -> CliResult<Artifact> {
    let bytes = fs::read(dir.join(rel))?;
    Ok(Artifact {
        path: rel.to_string(),
        kind: kind.to_string(),
        sha256: sha256_hex(&bytes),
        bytes: bytes.len() as u64,
        step,
    })
}

/// Everything needed to continue a run bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub scenario_hash: String,
    pub seed: u64,
    pub step: usize,
    pub t: f64,
    pub dt: f64,
    pub guard_reference: f64,
    pub snapshot: String,
}

pub fn snapshot_name(step: usize) -> String {
    format!("{SNAPSHOT_DIR}/step_{step:08}.bin")
}

pub fn write_frame(dir: &Path, grid: &Grid, frame: &Frame) -> CliResult<String> {
    let rel = snapshot_name(frame.step);
    let st = &frame.state;
    let mut comps: Vec<&[f64]> = st.components().to_vec();
    if let Some(e) = &frame.eikonal {
        comps.extend([e.u_tilde.as_slice(), &e.theta_tilde[0], &e.theta_tilde[1]]);
    }
    fields::write_snapshot(&dir.join(&rel), grid, st.t, &comps)?;
    Ok(rel)
}

pub fn read_frame(dir: &Path, rel: &str, step: usize) -> CliResult<(Grid, Frame)> {
    let snap = fields::read_snapshot(&dir.join(rel))?;
    let mut c = snap.comps.into_iter();
    let mut next = || c.next().ok_or_else(|| CliError::Config(format!("{rel}: too few components")));
    let state = FluidState {
        t: snap.t,
        rho: next()?,
        v: [next()?, next()?, next()?],
    };
    let eikonal = match next() {
        Ok(u_tilde) => Some(EikonalState {
            u_tilde,
            theta_tilde: [next()?, next()?],
        }),
        Err(_) => None,
    };
    Ok((snap.grid, Frame { step, state, eikonal }))
}

/// Loads every snapshot of a verified run.
pub fn load_frames(dir: &Path, manifest: &RunManifest) -> CliResult<Vec<Frame>> {
    manifest
        .snapshots()
        .into_iter()
        .map(|a| read_frame(dir, &a.path, a.step.unwrap_or(0)).map(|(_, f)| f))
        .collect()
}

pub fn history_csv(h: &History) -> String {
    let mut s = String::from("step,t,max_d1v1,mu_star,mu_argmin\n");
    for i in 0..h.step.len() {
        let mu = h.mu_star.get(i).map(|m| format!("{m:e}")).unwrap_or_default();
        let at = h.mu_argmin.get(i).map(|m| m.to_string()).unwrap_or_default();
        s.push_str(&format!("{},{:e},{:e},{mu},{at}\n", h.step[i], h.t[i], h.max_d1v1[i]));
    }
    s
}

pub fn parse_history(text: &str) -> CliResult<History> {
    let bad = |n: usize| CliError::Config(format!("{HISTORY}: malformed line {n}"));
    let mut h = History::default();
    for (n, line) in text.lines().enumerate().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 5 {
            return Err(bad(n + 1));
        }
        h.step.push(cols[0].parse().map_err(|_| bad(n + 1))?);
        h.t.push(cols[1].parse().map_err(|_| bad(n + 1))?);
        h.max_d1v1.push(cols[2].parse().map_err(|_| bad(n + 1))?);
        if !cols[3].is_empty() {
            h.mu_star.push(cols[3].parse().map_err(|_| bad(n + 1))?);
            h.mu_argmin.push(cols[4].parse().map_err(|_| bad(n + 1))?);
        }
    }
    Ok(h)
}

pub fn read_history(dir: &Path) -> CliResult<History> {
    let text = fs::read_to_string(dir.join(HISTORY))?;
    parse_history(&text)
}

/// Keeps the rows of `old` before `from_step` and appends `new` from `from_step` on.
pub fn splice_history(old: &History, new: &History, from_step: usize) -> History {
    let mut h = History::default();
    let take = |h: &mut History, src: &History, i: usize| {
        h.step.push(src.step[i]);
        h.t.push(src.t[i]);
        h.max_d1v1.push(src.max_d1v1[i]);
        if let (Some(m), Some(a)) = (src.mu_star.get(i), src.mu_argmin.get(i)) {
            h.mu_star.push(*m);
            h.mu_argmin.push(*a);
        }
    };
    for i in 0..old.step.len() {
        if old.step[i] < from_step {
            take(&mut h, old, i);
        }
    }
    for i in 0..new.step.len() {
        if new.step[i] >= from_step {
            take(&mut h, new, i);
        }
    }
    h
}

pub fn ensure_dir(dir: &Path) -> CliResult<PathBuf> {
    fs::create_dir_all(dir.join(SNAPSHOT_DIR)).map_err(|e| CliError::Config(format!("{}: {e}", dir.display())))?;
    Ok(dir.to_path_buf())
}

/// Common header embedded in every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportHeader {
    pub scenario_hash: Option<String>,
    pub code_version: String,
}

impl ReportHeader {
    pub fn new(hash: Option<String>) -> Self {
        Self {
            scenario_hash: hash,
            code_version: CODE_VERSION.to_string(),
        }
    }
}
