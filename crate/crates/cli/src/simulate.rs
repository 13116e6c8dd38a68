use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use euler_null::solver::{self, IntegrateOptions, Retention, Scenario, StopReason, Trajectory};
use euler_null::Error as CoreError;

use crate::error::{CliError, CliResult};
use crate::run::{self, Checkpoint, RunManifest};

pub struct SimulateArgs<'a> {
    pub scenario: Scenario,
    pub out: &'a Path,
    pub max_steps: Option<usize>,
    pub resume: bool,
}

/// Validation shared by `validate` and the run commands.
pub fn check_scenario(s: &Scenario) -> CliResult<()> {
    let d = s.validate();
    for w in &d.warnings {
        eprintln!("warning: {w}");
    }
    if d.ok() {
        Ok(())
    } else {
        Err(CliError::Config(d.errors.join("; ")))
    }
}

pub fn simulate(args: SimulateArgs) -> CliResult<RunManifest> {
    let started = Instant::now();
    let out = run::ensure_dir(args.out)?;
    let sc = args.scenario;
    let hash = run::scenario_hash(&sc);
    let grid = sc.grid.grid()?;

    let (state0, opts, previous) = if args.resume {
        let ck: Checkpoint = run::read_json(&out.join(run::CHECKPOINT))?;
        if ck.scenario_hash != hash {
            return Err(CliError::Config(format!(
                "checkpoint belongs to scenario {}, not {hash}",
                ck.scenario_hash
            )));
        }
        let manifest = RunManifest::load(&out)?;
        manifest.verify(&out)?;
        let (g, frame) = run::read_frame(&out, &ck.snapshot, ck.step)?;
        if g != grid {
            return Err(CliError::Config("checkpoint grid does not match the scenario".into()));
        }
        let opts = IntegrateOptions {
            dt: Some(ck.dt),
            max_steps: args.max_steps,
            retention: Retention::Every(sc.snapshot_every),
            start_step: ck.step,
            eikonal: frame.eikonal.clone(),
            guard_reference: Some(ck.guard_reference),
        };
        (frame.state, opts, Some((manifest, run::read_history(&out)?, ck)))
    } else {
        check_scenario(&sc)?;
        let st = solver::initial_data_nearly_simple_plane_wave(&sc.eos, &grid, &sc.initial_data)?;
        let opts = IntegrateOptions {
            max_steps: args.max_steps,
            retention: Retention::Every(sc.snapshot_every),
            ..Default::default()
        };
        (st, opts, None)
    };

    let integrate_start = Instant::now();
    let (traj, numerical_failure) = match solver::integrate_with(&sc, &state0, opts) {
        Ok(t) => (t, None),
        Err(CoreError::BlowupDetected { t, step, last_valid }) => {
            (*last_valid, Some(format!("non-finite values at t = {t:.6}, step {step}")))
        }
        Err(e) => return Err(e.into()),
    };
    let integrate_seconds = integrate_start.elapsed().as_secs_f64();
    drop(state0);

    let mut manifest = match &previous {
        Some((m, ..)) => m.clone(),
        None => RunManifest {
            scenario_hash: hash.clone(),
            code_version: run::CODE_VERSION.to_string(),
            grid,
            eos: sc.eos,
            dt: traj.dt,
            steps: 0,
            t_final: 0.0,
            stop_reason: StopReason::TMax,
            timings: BTreeMap::new(),
            artifacts: Vec::new(),
        },
    };
    if previous.is_none() {
        run::write_json(&out.join(run::SCENARIO), &sc)?;
        manifest.upsert(run::artifact(&out, run::SCENARIO, "scenario", None)?);
    }

    for f in &traj.frames {
        let rel = run::write_frame(&out, &grid, f)?;
        manifest.upsert(run::artifact(&out, &rel, "snapshot", Some(f.step))?);
    }
    let history = match &previous {
        Some((_, old, ck)) => run::splice_history(old, &traj.history, ck.step),
        None => traj.history.clone(),
    };
    fs::write(out.join(run::HISTORY), run::history_csv(&history))?;
    manifest.upsert(run::artifact(&out, run::HISTORY, "history", None)?);

    let guard_reference = match &previous {
        Some((.., ck)) => ck.guard_reference,
        None => traj.history.max_d1v1.first().copied().unwrap_or(0.0),
    };
    write_checkpoint(&out, &sc, &hash, &traj, guard_reference)?;
    manifest.upsert(run::artifact(&out, run::CHECKPOINT, "checkpoint", None)?);

    manifest.steps = traj.last.step;
    manifest.t_final = traj.last.state.t;
    manifest.stop_reason = traj.stop_reason;
    manifest.dt = traj.dt;
    manifest.code_version = run::CODE_VERSION.to_string();
    *manifest.timings.entry("integrate_seconds".into()).or_insert(0.0) += integrate_seconds;
    *manifest.timings.entry("total_seconds".into()).or_insert(0.0) += started.elapsed().as_secs_f64();
    manifest.artifacts.sort_by(|a, b| a.path.cmp(&b.path));
    run::write_json(&out.join(run::MANIFEST), &manifest)?;

    eprintln!(
        "simulate: {} steps to t = {:.6}, stop reason {}",
        manifest.steps, manifest.t_final, manifest.stop_reason
    );
    if let Some(msg) = numerical_failure {
        return Err(CliError::Numerical(msg));
    }
    if traj.stop_reason == StopReason::BlowupGuard {
        return Err(CliError::Numerical(format!(
            "gradient guard: max |d1 v1| exceeded {} times its initial value at t = {:.6}",
            sc.blowup_factor, manifest.t_final
        )));
    }
    if traj.stop_reason == StopReason::CoordinateFold {
        eprintln!("warning: geometric coordinates folded; the run was flagged and stopped");
    }
    Ok(manifest)
}

fn write_checkpoint(out: &Path, sc: &Scenario, hash: &str, traj: &Trajectory, guard_reference: f64) -> CliResult<()> {
    let last = &traj.last;
    let ck = Checkpoint {
        scenario_hash: hash.to_string(),
        seed: sc.seed,
        step: last.step,
        t: last.state.t,
        dt: traj.dt,
        guard_reference,
        snapshot: run::snapshot_name(last.step),
    };
    run::write_json(&out.join(run::CHECKPOINT), &ck)
}
