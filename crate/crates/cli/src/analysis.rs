//! Post-processing subcommands: residual studies, null-structure checks,
//! eikonal diagnostics, shock-time fits and the exact plane simple wave.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use euler_null::eikonal::{self, BlowupSignature, ShockFit};
use euler_null::fields::{self, Grid};
use euler_null::metric;
use euler_null::nullgeometry::{self as ng, NullClassification, NullFrame, StandardFormReport, VorticityJet};
use euler_null::reformulation::{self, ResidualReport, SnapshotWindow, StudyConfig};
use euler_null::riemann::{self, ShockTime, SimpleWave};
use euler_null::solver::{Frame, Perturbation, Scenario};
use euler_null::{Error as CoreError, FluidState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::run::{self, ReportHeader, RunManifest};

/// Smallest acceptable observed order of a residual that vanishes on solutions.
pub const RESIDUAL_MIN_ORDER: f64 = 3.0;
/// Tolerance on diagonal coefficients of off-shell null forms (pure frame algebra).
pub const DIAGONAL_TOL: f64 = 1e-12;
/// Tolerance on the on-shell defect of `P(varpi)` (substitution pipeline).
pub const ON_SHELL_TOL: f64 = 1e-10;
/// Relative agreement of the extrapolated `mu_*` zero with the characteristic crossing time.
pub const SHOCK_REL_TOL: f64 = 0.02;
pub const SHOCK_R_SQUARED_MIN: f64 = 0.99;

pub const RESIDUALS_JSON: &str = "residuals.json";
pub const RESIDUALS_CSV: &str = "residuals.csv";
pub const NULLCHECK_JSON: &str = "nullcheck.json";
pub const EIKONAL_JSON: &str = "eikonal.json";
pub const EIKONAL_CSV: &str = "eikonal.csv";
pub const SHOCK_JSON: &str = "shock.json";
pub const SHOCK_CSV: &str = "shock.csv";
pub const RIEMANN_JSON: &str = "riemann.json";
pub const RIEMANN_CSV: &str = "riemann_slices.csv";

fn strict_check(strict: bool, pass: bool, what: &str) -> CliResult<()> {
    if strict && !pass {
        Err(CliError::Verification(what.to_string()))
    } else {
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// residuals

#[derive(Debug, Serialize)]
pub struct ResidualsOutput {
    #[serde(flatten)]
    pub header: ReportHeader,
    pub study: ResidualReport,
    pub min_orders: BTreeMap<String, Option<f64>>,
    pub required_order: f64,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exported_fields: Option<ExportedFields>,
}

#[derive(Debug, Serialize)]
pub struct ExportedFields {
    pub path: String,
    pub step: usize,
    pub components: Vec<String>,
}

pub fn residuals(sc: &Scenario, out: &Path, levels: usize, strict: bool) -> CliResult<ResidualsOutput> {
    fs::create_dir_all(out)?;
    crate::simulate::check_scenario(sc)?;
    let cfg = StudyConfig {
        levels,
        conformal: matches!(sc.initial_data.perturbation, Perturbation::None | Perturbation::Irrotational),
        ..Default::default()
    };
    let study = reformulation::convergence_study(sc, &cfg)?;
    let min_orders: BTreeMap<String, Option<f64>> = study.orders.keys().map(|k| (k.clone(), study.min_order(k))).collect();
    let pass = min_orders.values().all(|o| o.is_none_or(|o| o >= RESIDUAL_MIN_ORDER));

    let mut csv = String::from("level,n1,n2,n3,h1,dt,t,residual,l2,linf\n");
    for (i, l) in study.levels.iter().enumerate() {
        for (name, r) in &l.residuals {
            csv.push_str(&format!(
                "{i},{},{},{},{:e},{:e},{:e},{name},{:e},{:e}\n",
                l.n[0],
                l.n[1],
                l.n[2],
                sc.grid.extent[0] / l.n[0] as f64,
                l.dt,
                l.t,
                r.l2,
                r.linf
            ));
        }
    }
    fs::write(out.join(RESIDUALS_CSV), csv)?;

    let exported_fields = export_residual_fields(sc, out)?;
    let report = ResidualsOutput {
        header: ReportHeader::new(Some(run::scenario_hash(sc))),
        study,
        min_orders,
        required_order: RESIDUAL_MIN_ORDER,
        pass,
        exported_fields,
    };
    run::write_json(&out.join(RESIDUALS_JSON), &report)?;
    for (k, o) in &report.min_orders {
        match o {
            Some(o) => eprintln!("residuals: {k:<24} min order {o:.2}"),
            None => eprintln!("residuals: {k:<24} at rounding on every level"),
        }
    }
    strict_check(strict, report.pass, "a residual converges below the required order")?;
    Ok(report)
}

/// When the run directory holds five consecutive snapshots of the same scenario,
/// writes the residual fields at the centre of the first such window.
fn export_residual_fields(sc: &Scenario, out: &Path) -> CliResult<Option<ExportedFields>> {
    let Ok(manifest) = RunManifest::load(out) else { return Ok(None) };
    if manifest.scenario_hash != run::scenario_hash(sc) {
        return Ok(None);
    }
    manifest.verify(out)?;
    let snaps = manifest.snapshots();
    let steps: Vec<usize> = snaps.iter().filter_map(|a| a.step).collect();
    let Some(start) = (0..steps.len().saturating_sub(4)).find(|&i| steps[i + 4] == steps[i] + 4) else {
        return Ok(None);
    };
    let mut grid = None;
    let mut states = Vec::with_capacity(5);
    for a in &snaps[start..start + 5] {
        let (g, f) = run::read_frame(out, &a.path, a.step.unwrap_or(0))?;
        grid = Some(g);
        states.push(f.state);
    }
    let grid = grid.expect("five frames were read");
    let refs: Vec<&FluidState> = states.iter().collect();
    let w = SnapshotWindow::new(&refs, manifest.dt)?;
    let wv = reformulation::residual_wave_velocity(&manifest.eos, &grid, &w)?;
    let wd = reformulation::residual_wave_density(&manifest.eos, &grid, &w)?;
    let tv = reformulation::residual_transport_vorticity(&grid, &w)?;
    let di = reformulation::residual_div_identity(&grid, w.center())?;
    let ct = reformulation::residual_curl_transport(&grid, &w)?;
    let comps: Vec<&[f64]> = vec![&wv[0], &wv[1], &wv[2], &wd, &tv[0], &tv[1], &tv[2], &di, &ct[0], &ct[1], &ct[2]];
    let names = [
        "wave_velocity_1",
        "wave_velocity_2",
        "wave_velocity_3",
        "wave_density",
        "transport_vorticity_1",
        "transport_vorticity_2",
        "transport_vorticity_3",
        "div_identity",
        "curl_transport_1",
        "curl_transport_2",
        "curl_transport_3",
    ];
    let step = steps[start + 2];
    let rel = format!("residual_fields_step_{step:08}.bin");
    fields::write_snapshot(&out.join(&rel), &grid, w.center().t, &comps)?;
    Ok(Some(ExportedFields {
        path: rel,
        step,
        components: names.iter().map(|s| s.to_string()).collect(),
    }))
}

// ---------------------------------------------------------------------------
// nullcheck

#[derive(Debug, Serialize)]
pub struct CatalogRow {
    pub name: String,
    pub classification: NullClassification,
    /// Largest coefficient of `(L V)(L V)` or `(Lbar V)(Lbar V)` over samples and components.
    pub max_diagonal: f64,
    /// On-shell defect after substituting the vorticity transport equation.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub on_shell_defect: Option<f64>,
    pub pass: bool,
}

#[derive(Debug, Serialize)]
pub struct NullcheckOutput {
    #[serde(flatten)]
    pub header: ReportHeader,
    pub source: String,
    pub seed: u64,
    pub states: usize,
    pub frames: usize,
    pub standard_forms: StandardFormReport,
    pub catalog: Vec<CatalogRow>,
    pub diagonal_tolerance: f64,
    pub on_shell_tolerance: f64,
    pub pass: bool,
}

pub struct NullcheckArgs<'a> {
    pub out: &'a Path,
    pub seed: u64,
    pub states: usize,
    pub frames_per_state: usize,
    /// Sample states from a snapshot of this scenario instead of at random.
    pub snapshot: Option<(&'a Path, &'a Scenario)>,
    pub strict: bool,
}

fn random_jet(rng: &mut impl Rng, v: [f64; 3]) -> VorticityJet {
    let mut u = || rng.gen_range(-1.0..1.0);
    VorticityJet {
        v,
        dv: std::array::from_fn(|_| [u(), u(), u(), u()]),
        varpi: [u(), u(), u()],
        dvarpi: std::array::from_fn(|_| [u(), u(), u(), u()]),
    }
}

pub fn nullcheck(args: NullcheckArgs) -> CliResult<NullcheckOutput> {
    fs::create_dir_all(args.out)?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let mut metrics = Vec::with_capacity(args.states);
    let (source, hash) = match args.snapshot {
        None => {
            for _ in 0..args.states {
                metrics.push(ng::random_admissible_metric(&mut rng)?.1);
            }
            ("random".to_string(), None)
        }
        Some((path, sc)) => {
            let snap = fields::read_snapshot(path)?;
            if snap.comps.len() < 4 {
                return Err(CliError::Config(format!("{}: not a fluid snapshot", path.display())));
            }
            let n = snap.grid.len();
            for _ in 0..args.states {
                let p = rng.gen_range(0..n);
                let v = [snap.comps[1][p], snap.comps[2][p], snap.comps[3][p]];
                metrics.push(metric::metric_at(&sc.eos, snap.comps[0][p], v)?);
            }
            (format!("snapshot {}", path.display()), Some(run::scenario_hash(sc)))
        }
    };
    let mut frames: Vec<NullFrame> = Vec::with_capacity(metrics.len() * args.frames_per_state);
    for m in &metrics {
        for _ in 0..args.frames_per_state {
            frames.push(ng::random_null_frame_with(m, &mut rng)?);
        }
    }
    let standard_forms = ng::strong_null_check_standard_forms(&frames)?;

    let mut catalog = Vec::new();
    for entry in ng::euler_nonlinearity_catalog() {
        let mut max_diagonal = 0.0_f64;
        let mut on_shell = 0.0_f64;
        for f in &frames {
            let exp = ng::frame_expansion(f)?;
            let jet = random_jet(&mut rng, f.metric.v);
            let mut dv = [[0.0; 4]; ng::NVARS];
            for d in dv.iter_mut() {
                *d = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
            }
            for c in 0..entry.components {
                let q = (entry.build)(&f.metric, &jet.varpi, c);
                max_diagonal = max_diagonal.max(ng::decompose_nonlinearity(&q, f, &exp, &dv).max_diagonal());
            }
            if entry.classification == NullClassification::OnShellNull {
                let d = ng::strong_null_check_p_omega(f, &exp, &jet.with_transport_residual([0.0; 3]))?;
                on_shell = on_shell.max(d.max_defect);
            }
        }
        let (on_shell_defect, pass) = match entry.classification {
            NullClassification::OnShellNull => (Some(on_shell), on_shell < ON_SHELL_TOL),
            _ => (None, max_diagonal < DIAGONAL_TOL),
        };
        catalog.push(CatalogRow {
            name: entry.name.to_string(),
            classification: entry.classification,
            max_diagonal,
            on_shell_defect,
            pass,
        });
    }
    let pass = catalog.iter().all(|r| r.pass)
        && standard_forms.max_diagonal_g < DIAGONAL_TOL
        && standard_forms.max_diagonal_antisym < DIAGONAL_TOL;
    let report = NullcheckOutput {
        header: ReportHeader::new(hash),
        source,
        seed: args.seed,
        states: metrics.len(),
        frames: frames.len(),
        standard_forms,
        catalog,
        diagonal_tolerance: DIAGONAL_TOL,
        on_shell_tolerance: ON_SHELL_TOL,
        pass,
    };
    run::write_json(&args.out.join(NULLCHECK_JSON), &report)?;
    for r in &report.catalog {
        eprintln!(
            "nullcheck: {:<28} diag {:.2e}{} {}",
            r.name,
            r.max_diagonal,
            r.on_shell_defect.map(|d| format!(", on-shell defect {d:.2e}")).unwrap_or_default(),
            if r.pass { "ok" } else { "FAIL" }
        );
    }
    strict_check(args.strict, report.pass, "a catalogued nonlinearity violates the strong null condition")?;
    Ok(report)
}

// ---------------------------------------------------------------------------
// eikonal

#[derive(Debug, Serialize)]
pub struct EikonalOutput {
    #[serde(flatten)]
    pub header: ReportHeader,
    pub snapshots: usize,
    pub mu_star_initial: f64,
    pub mu_star_final: f64,
    /// Largest relative disagreement between the equivalent formulas for `mu`.
    pub mu_formula_spread: f64,
    pub growth_d1v1: f64,
    pub mu_weighted_band: f64,
    pub variation_xbreve_v1: f64,
    pub variation_l_v1: f64,
    pub variation_y_v1: f64,
    pub variation_varpi: f64,
    pub peak_ratio_curl_varpi: f64,
    pub fields: String,
    pub signature: BlowupSignature,
}

fn load_run(out: &Path) -> CliResult<(RunManifest, Grid, Vec<Frame>)> {
    let manifest = RunManifest::load(out)?;
    manifest.verify(out)?;
    let frames = run::load_frames(out, &manifest)?;
    Ok((manifest.clone(), manifest.grid, frames))
}

pub fn eikonal(out: &Path) -> CliResult<EikonalOutput> {
    let (manifest, grid, frames) = load_run(out)?;
    if frames.len() < 2 || frames.iter().any(|f| f.eikonal.is_none()) {
        return Err(CliError::Config(
            "the run carries no eikonal data (set \"eikonal\": true and keep at least two snapshots)".into(),
        ));
    }
    let eos = manifest.eos;
    let refs: Vec<&Frame> = frames.iter().collect();
    let sig = eikonal::blowup_signature(&eos, &grid, &refs)?;

    let mut csv = String::from("t,mu_star,max_d1v1,max_xbreve_v1,max_l_v1,max_y_v1,max_varpi,max_curl_varpi\n");
    for i in 0..sig.t.len() {
        csv.push_str(&format!(
            "{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}\n",
            sig.t[i],
            sig.mu_star[i],
            sig.max_d1v1[i],
            sig.max_xbreve_v1[i],
            sig.max_l_v1[i],
            sig.max_y_v1[i],
            sig.max_varpi[i],
            sig.max_curl_varpi[i]
        ));
    }
    fs::write(out.join(EIKONAL_CSV), csv)?;

    let last = frames.last().expect("at least two frames");
    let e = last.eikonal.as_ref().expect("checked above");
    let ff = eikonal::frame_fields(&eos, &grid, &last.state, e, None)?;
    let u = eikonal::full_u(&grid, &e.u_tilde);
    let rel = format!("mu_u_step_{:08}.bin", last.step);
    fields::write_snapshot(&out.join(&rel), &grid, last.state.t, &[&ff.mu, &u])?;

    let report = EikonalOutput {
        header: ReportHeader::new(Some(manifest.scenario_hash.clone())),
        snapshots: frames.len(),
        mu_star_initial: sig.mu_star[0],
        mu_star_final: *sig.mu_star.last().unwrap(),
        mu_formula_spread: eikonal::mu_formula_spread(&eos, &grid, &last.state, e)?,
        growth_d1v1: sig.growth(&sig.max_d1v1),
        mu_weighted_band: sig.mu_weighted_band(),
        variation_xbreve_v1: sig.variation(&sig.max_xbreve_v1),
        variation_l_v1: sig.variation(&sig.max_l_v1),
        variation_y_v1: sig.variation(&sig.max_y_v1),
        variation_varpi: sig.variation(&sig.max_varpi),
        peak_ratio_curl_varpi: sig.peak_ratio(&sig.max_curl_varpi),
        fields: rel,
        signature: sig,
    };
    run::write_json(&out.join(EIKONAL_JSON), &report)?;
    eprintln!(
        "eikonal: mu_* {:.4} -> {:.4}, max|d1 v1| grew {:.2}x, mu-weighted band {:.3}",
        report.mu_star_initial, report.mu_star_final, report.growth_d1v1, report.mu_weighted_band
    );
    Ok(report)
}

// ---------------------------------------------------------------------------
// shock

#[derive(Debug, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ShockStatus {
    Fitted,
    /// The equation of state cannot form shocks from plane simple waves.
    NoShock,
}

#[derive(Debug, Serialize)]
pub struct ShockOutput {
    #[serde(flatten)]
    pub header: ReportHeader,
    pub status: ShockStatus,
    pub message: Option<String>,
    /// Characteristic-crossing time of the plane wave.
    pub t_star: Option<ShockTime>,
    pub fit: Option<ShockFit>,
    /// `x1` of the last `mu_*` minimiser.
    pub x1_argmin: Option<f64>,
    pub relative_error: Option<f64>,
    pub tolerance: f64,
    pub pass: bool,
}

pub fn shock(out: &Path, strict: bool) -> CliResult<ShockOutput> {
    let manifest = RunManifest::load(out)?;
    manifest.verify(out)?;
    let sc = run::read_scenario(&out.join(run::SCENARIO))?;
    let history = run::read_history(out)?;
    let hash = Some(manifest.scenario_hash.clone());
    let grid = manifest.grid;

    let profile = sc.initial_data.plane_profile(grid.extent[0]);
    let t_star = match riemann::shock_time(&profile, &sc.eos, 16 * grid.n[0]) {
        Ok(t) => Some(t),
        Err(CoreError::NoShock(msg)) => {
            let report = ShockOutput {
                header: ReportHeader::new(hash),
                status: ShockStatus::NoShock,
                message: Some(msg),
                t_star: None,
                fit: None,
                x1_argmin: None,
                relative_error: None,
                tolerance: SHOCK_REL_TOL,
                pass: true,
            };
            run::write_json(&out.join(SHOCK_JSON), &report)?;
            eprintln!("shock: no shock expected ({})", report.message.as_deref().unwrap_or(""));
            return Ok(report);
        }
        Err(e) => return Err(e.into()),
    };
    if history.mu_star.is_empty() {
        return Err(CliError::Config(
            "the run has no mu_* history (set \"eikonal\": true in the scenario)".into(),
        ));
    }
    let fit = match eikonal::mu_star_and_shock_fit(&history.t, &history.mu_star, &history.mu_argmin) {
        Ok(f) => f,
        Err(e @ (CoreError::NoDecay { .. } | CoreError::InsufficientSnapshots { .. })) => {
            return Err(CliError::Numerical(format!("cannot fit the shock time: {e}")))
        }
        Err(e) => return Err(e.into()),
    };
    let mut csv = String::from("t,mu_star,fit\n");
    for (t, m) in history.t.iter().zip(&history.mu_star) {
        csv.push_str(&format!("{t:e},{m:e},{:e}\n", fit.intercept + fit.slope * t));
    }
    fs::write(out.join(SHOCK_CSV), csv)?;

    let ts = t_star.expect("handled above");
    let rel = (fit.t_hat - ts.t_shock).abs() / ts.t_shock;
    let pass = rel <= SHOCK_REL_TOL && fit.r_squared >= SHOCK_R_SQUARED_MIN;
    let report = ShockOutput {
        header: ReportHeader::new(hash),
        status: ShockStatus::Fitted,
        message: None,
        t_star: Some(ts),
        x1_argmin: fit.argmin.map(|p| grid.point(p)[0]),
        fit: Some(fit),
        relative_error: Some(rel),
        tolerance: SHOCK_REL_TOL,
        pass,
    };
    run::write_json(&out.join(SHOCK_JSON), &report)?;
    let f = report.fit.as_ref().unwrap();
    eprintln!(
        "shock: t_hat = {:.6} (R^2 {:.5}), t_* = {:.6}, relative error {:.3}%",
        f.t_hat,
        f.r_squared,
        ts.t_shock,
        100.0 * rel
    );
    strict_check(strict, pass, "the extrapolated shock time disagrees with characteristic crossing")?;
    Ok(report)
}

// ---------------------------------------------------------------------------
// riemann

#[derive(Debug, Serialize)]
pub struct RiemannOutput {
    #[serde(flatten)]
    pub header: ReportHeader,
    pub t_star: Option<ShockTime>,
    /// Earliest crossing among straight characteristics on the same sampling.
    pub t_crossing: Option<f64>,
    pub message: Option<String>,
    pub slice_times: Vec<f64>,
}

pub fn riemann_cmd(sc: &Scenario, out: Option<&Path>) -> CliResult<RiemannOutput> {
    let grid = sc.grid.grid()?;
    let profile = sc.initial_data.plane_profile(grid.extent[0]);
    let samples = 16 * grid.n[0];
    let (t_star, t_crossing, message) = match riemann::shock_time(&profile, &sc.eos, samples) {
        Ok(t) => (Some(t), Some(riemann::characteristic_crossing_time(&profile, &sc.eos, samples)?), None),
        Err(CoreError::NoShock(m)) => (None, None, Some(m)),
        Err(e) => return Err(e.into()),
    };
    match &t_star {
        Some(t) => println!("t_star = {:.15e}\nx0 = {:.15e}\nmin_slope = {:.15e}", t.t_shock, t.x0, t.min_slope),
        None => println!("no shock: {}", message.as_deref().unwrap_or("")),
    }
    let t_shock = t_star.map_or(f64::INFINITY, |t| t.t_shock);
    let horizon = if t_shock.is_finite() { t_shock } else { sc.t_max };
    let slice_times: Vec<f64> = [0.0, 0.25, 0.5, 0.75, 0.9].iter().map(|f| f * horizon).collect();
    let report = RiemannOutput {
        header: ReportHeader::new(Some(run::scenario_hash(sc))),
        t_star,
        t_crossing,
        message,
        slice_times: slice_times.clone(),
    };
    if let Some(out) = out {
        fs::create_dir_all(out)?;
        let wave = SimpleWave::new(profile, sc.eos);
        let mut csv = String::from("x1");
        for k in 0..slice_times.len() {
            csv.push_str(&format!(",rho_{k},v1_{k}"));
        }
        csv.push('\n');
        for i in 0..grid.n[0] {
            let x = grid.coord(0, i);
            csv.push_str(&format!("{x:e}"));
            for &t in &slice_times {
                let s = wave.exact(x, t, t_shock)?;
                csv.push_str(&format!(",{:e},{:e}", s.rho, s.v1));
            }
            csv.push('\n');
        }
        fs::write(out.join(RIEMANN_CSV), csv)?;
        run::write_json(&out.join(RIEMANN_JSON), &report)?;
    }
    Ok(report)
}
