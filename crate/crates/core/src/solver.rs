//! Method-of-lines integration of the first-order Euler system
//! `B rho = -div v`, `B v^i = -c_s^2 d_i rho` with classical RK4 and
//! fourth-order centred differences, optionally co-stepping the eikonal
//! function and the geometric torus coordinates.

use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::eos::EquationOfState;
use crate::error::{Error, Result};
use crate::fields::{self, d1_into, FluidState, Grid, ScalarField, VectorField};
use crate::riemann::{f_inverse, Profile, ProfileShape};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub n: [usize; 3],
    #[serde(default = "unit_extent")]
    pub extent: [f64; 3],
}

fn unit_extent() -> [f64; 3] {
    [1.0; 3]
}

impl GridSpec {
    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.n, self.extent)
    }
}

fn default_shape_param() -> f64 {
    0.2
}

/// Transverse perturbation added on top of the plane wave.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Perturbation {
    None,
    /// `v += eps grad(phi)`, `rho += eps psi`.
    Irrotational,
    /// The irrotational part plus a solenoidal velocity field carrying vorticity.
    Vortical {
        #[serde(default = "default_shape_param")]
        a: f64,
        #[serde(default = "default_shape_param")]
        b: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialData {
    /// Amplitude of the plane-wave Riemann invariant `R_+`.
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Amplitude of the transverse perturbation.
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_profile")]
    pub profile: ProfileShape,
    #[serde(default = "default_perturbation")]
    pub perturbation: Perturbation,
}

fn default_delta() -> f64 {
    0.5
}
fn default_epsilon() -> f64 {
    0.01
}
fn default_profile() -> ProfileShape {
    ProfileShape::Sine
}
fn default_perturbation() -> Perturbation {
    Perturbation::Vortical { a: 0.2, b: 0.2 }
}

impl Default for InitialData {
    fn default() -> Self {
        Self {
            delta: default_delta(),
            epsilon: default_epsilon(),
            profile: default_profile(),
            perturbation: default_perturbation(),
        }
    }
}

impl InitialData {
    pub fn plane_profile(&self, period: f64) -> Profile {
        Profile {
            shape: self.profile,
            amplitude: self.delta,
            period,
        }
    }
}

fn default_cfl() -> f64 {
    0.5
}
fn default_mu_stop() -> f64 {
    0.1
}
fn default_snapshot_every() -> usize {
    1
}
fn default_blowup_factor() -> f64 {
    50.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    pub eos: EquationOfState,
    pub grid: GridSpec,
    #[serde(default)]
    pub initial_data: InitialData,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    pub t_max: f64,
    #[serde(default = "default_mu_stop")]
    pub mu_stop: f64,
    /// Co-step the eikonal function and the torus coordinates.
    #[serde(default)]
    pub eikonal: bool,
    #[serde(default = "default_snapshot_every")]
    pub snapshot_every: usize,
    /// Stop once `max |d1 v1|` exceeds this multiple of its initial value.
    #[serde(default = "default_blowup_factor")]
    pub blowup_factor: f64,
    /// Exponential filter on the top tenth of Fourier modes after each step.
    #[serde(default)]
    pub filter: bool,
    /// The run is meant to produce shock-formation diagnostics.
    #[serde(default)]
    pub shock_diagnostics: bool,
    #[serde(default)]
    pub seed: u64,
}

/// Outcome of [`Scenario::validate`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScenarioDiagnostics {
    pub errors: Vec<String>,
    pub warnings: Vec<String>,
}

impl ScenarioDiagnostics {
    pub fn ok(&self) -> bool {
        self.errors.is_empty()
    }
}

impl Scenario {
    /// A default scenario on the given grid with the normalised gamma = 2 law.
    pub fn new(n: [usize; 3], t_max: f64) -> Self {
        Self {
            name: String::new(),
            eos: EquationOfState::normalized_polytropic(2.0),
            grid: GridSpec { n, extent: [1.0; 3] },
            initial_data: InitialData::default(),
            cfl: default_cfl(),
            t_max,
            mu_stop: default_mu_stop(),
            eikonal: false,
            snapshot_every: 1,
            blowup_factor: default_blowup_factor(),
            filter: false,
            shock_diagnostics: false,
            seed: 0,
        }
    }

    pub fn validate(&self) -> ScenarioDiagnostics {
        let mut d = ScenarioDiagnostics::default();
        match self.grid.grid().and_then(|g| g.check_scenario().map(|_| g)) {
            Ok(_) => {}
            Err(e) => d.errors.push(format!("grid: {e}")),
        }
        let id = &self.initial_data;
        let rho_span = 1.0 + id.delta + id.epsilon;
        let eos_diag = self.eos.validate(-rho_span, rho_span);
        if !eos_diag.hyperbolic {
            d.errors.push(format!("eos: not hyperbolic ({})", eos_diag.messages.join("; ")));
        }
        if !(self.cfl > 0.0 && self.cfl < 1.0) {
            d.errors.push(format!("cfl = {} must lie in (0, 1)", self.cfl));
        }
        if !(id.delta >= 0.0) || !(id.epsilon >= 0.0) {
            d.errors.push("initial_data: amplitudes must be non-negative".into());
        } else if id.epsilon > id.delta / 10.0 {
            d.errors.push(format!(
                "initial_data: size hierarchy violated, epsilon = {} exceeds delta / 10 = {}",
                id.epsilon,
                id.delta / 10.0
            ));
        }
        if !(self.t_max > 0.0) {
            d.errors.push("t_max must be positive".into());
        }
        if !(self.mu_stop > 0.0 && self.mu_stop < 1.0) {
            d.errors.push(format!("mu_stop = {} must lie in (0, 1)", self.mu_stop));
        }
        if self.snapshot_every == 0 {
            d.errors.push("snapshot_every must be at least 1".into());
        }
        if let ProfileShape::Bump { width, .. } = id.profile {
            if !(width > 0.0 && width <= 0.5 * self.grid.extent[0]) {
                d.errors.push("bump width must lie in (0, L1 / 2]".into());
            }
        }
        if self.eos.is_chaplygin() && (self.shock_diagnostics || self.eikonal) {
            d.warnings.push(
                "Chaplygin gas: no shock is expected (totally linearly degenerate); shock diagnostics will report NoShock/NoDecay".into(),
            );
        }
        if self.filter {
            d.warnings.push("spectral filter enabled: residual convergence orders are not meaningful".into());
        }
        d
    }
}

/// Plane simple wave with `R_- = 0` and profile `delta * P(x1)`, plus an
/// `x2, x3`-dependent perturbation of size `epsilon`.
pub fn initial_data_nearly_simple_plane_wave(
    eos: &EquationOfState,
    grid: &Grid,
    params: &InitialData,
) -> Result<FluidState> {
    if params.epsilon > params.delta / 10.0 {
        return Err(Error::Config(format!(
            "epsilon = {} exceeds delta / 10 = {}",
            params.epsilon,
            params.delta / 10.0
        )));
    }
    let profile = params.plane_profile(grid.extent[0]);
    let n = grid.len();
    let mut st = FluidState::constant(grid, 0.0, [0.0; 3]);
    let k = [
        2.0 * PI / grid.extent[0],
        2.0 * PI / grid.extent[1],
        2.0 * PI / grid.extent[2],
    ];
    let (act2, act3) = (grid.is_active(1), grid.is_active(2));
    let eps = params.epsilon;
    for p in 0..n {
        let x = grid.point(p);
        let r_plus = profile.value(x[0]);
        st.rho[p] = f_inverse(eos, 0.5 * r_plus)?;
        st.v[0][p] = 0.5 * r_plus;
        if eps == 0.0 {
            continue;
        }
        let (s1, c1) = (k[0] * x[0]).sin_cos();
        let (s2, c2) = if act2 { (k[1] * x[1]).sin_cos() } else { (0.0, 1.0) };
        let (s3, c3) = if act3 { (k[2] * x[2]).sin_cos() } else { (0.0, 1.0) };
        let pert_on = !matches!(params.perturbation, Perturbation::None);
        if pert_on {
            // phi = cos(k1 x1) S2 S3 / k1, psi = cos(k1 x1) S2 S3
            st.v[0][p] += eps * (-s1 * c2 * c3);
            if act2 {
                st.v[1][p] += eps * (-c1 * k[1] * s2 * c3 / k[0]);
            }
            if act3 {
                st.v[2][p] += eps * (-c1 * c2 * k[2] * s3 / k[0]);
            }
            st.rho[p] += eps * c1 * c2 * c3;
        }
        if let Perturbation::Vortical { a, b } = params.perturbation {
            let a3 = if act3 { a * c3 } else { 0.0 };
            st.v[1][p] += eps * s1 * (1.0 + a3) / k[0];
            if act3 && act2 {
                st.v[2][p] += eps * b / k[0] * c1 * s2;
            }
        }
    }
    Ok(st)
}

/// Free data completed by the quantities the evolution determines at `t = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstrainedData {
    pub varpi: VectorField,
    pub dt_rho: ScalarField,
    pub dt_v: VectorField,
}

pub fn complete_constrained_data(state: &FluidState, eos: &EquationOfState, grid: &Grid) -> Result<ConstrainedData> {
    let varpi = fields::specific_vorticity(state, grid)?;
    let (dt_rho, dt_v) = euler_rhs(eos, grid, state)?;
    Ok(ConstrainedData { varpi, dt_rho, dt_v })
}

/// `(d_t rho, d_t v)` of the first-order system.
pub fn euler_rhs(eos: &EquationOfState, grid: &Grid, state: &FluidState) -> Result<(ScalarField, VectorField)> {
    grid.check_stencil()?;
    check_eos(eos)?;
    let comps = vec![
        state.rho.clone(),
        state.v[0].clone(),
        state.v[1].clone(),
        state.v[2].clone(),
    ];
    let mut ws = Workspace::new(grid, false);
    let mut out = vec![grid.zeros(); 4];
    rhs(eos, grid, &comps, &mut out, &mut ws);
    let mut it = out.into_iter();
    let r = it.next().unwrap();
    let v = [it.next().unwrap(), it.next().unwrap(), it.next().unwrap()];
    Ok((r, v))
}

fn check_eos(eos: &EquationOfState) -> Result<()> {
    eos.sound_speed(0.0).map(|_| ())
}

/// Periodic parts of the eikonal function and of the torus coordinates:
/// `u = 1 - x1 + u_tilde`, `theta^A = x^{A+1} + theta_tilde^A`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EikonalState {
    pub u_tilde: ScalarField,
    pub theta_tilde: [ScalarField; 2],
}

impl EikonalState {
    pub fn initial(grid: &Grid) -> Self {
        Self {
            u_tilde: grid.zeros(),
            theta_tilde: [grid.zeros(), grid.zeros()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub step: usize,
    pub state: FluidState,
    pub eikonal: Option<EikonalState>,
}

/// Per-step scalar diagnostics.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub step: Vec<usize>,
    pub t: Vec<f64>,
    pub max_d1v1: Vec<f64>,
    /// `min mu` over the grid (empty without the eikonal function).
    pub mu_star: Vec<f64>,
    pub mu_argmin: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    TMax,
    MuStop,
    BlowupGuard,
    CoordinateFold,
    /// A fixed step count requested by the caller was reached.
    Steps,
}

impl std::fmt::Display for StopReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Self::TMax => "t_max",
            Self::MuStop => "mu_stop",
            Self::BlowupGuard => "blowup_guard",
            Self::CoordinateFold => "coordinate_fold",
            Self::Steps => "steps",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub grid: Grid,
    pub eos: EquationOfState,
    pub dt: f64,
    pub scheme_order: u32,
    pub scenario_hash: Option<String>,
    pub frames: Vec<Frame>,
    pub history: History,
    pub stop_reason: StopReason,
    /// Last computed state, retained or not.
    pub last: Frame,
}

impl Trajectory {
    pub fn frame_at_step(&self, step: usize) -> Option<&Frame> {
        self.frames
            .binary_search_by_key(&step, |f| f.step)
            .ok()
            .map(|i| &self.frames[i])
    }

    /// The `2 * half + 1` consecutive frames centred on `center`.
    pub fn window(&self, center: usize, half: usize) -> Result<Vec<&Frame>> {
        let missing = || Error::InsufficientSnapshots {
            center,
            needed: 2 * half + 1,
            available: self.frames.len(),
        };
        if center < half {
            return Err(missing());
        }
        (center - half..=center + half)
            .map(|s| self.frame_at_step(s).ok_or_else(missing))
            .collect()
    }

    pub fn steps(&self) -> Vec<usize> {
        self.frames.iter().map(|f| f.step).collect()
    }
}

/// Which steps are kept in memory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Retention {
    All,
    Every(usize),
    /// Windows of `half` steps on either side of each centre.
    Windows { centers: Vec<usize>, half: usize },
    /// Only the first and last states.
    Ends,
}

impl Retention {
    fn keeps(&self, step: usize) -> bool {
        match self {
            Self::All => true,
            Self::Every(n) => step.is_multiple_of(*n.max(&1)),
            Self::Windows { centers, half } => centers.iter().any(|&c| step + half >= c && step <= c + half),
            Self::Ends => step == 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct IntegrateOptions {
    /// Override the CFL time step.
    pub dt: Option<f64>,
    /// Stop after exactly this many steps (before `t_max` if smaller).
    pub max_steps: Option<usize>,
    pub retention: Retention,
    /// Step counter of the initial state (for restarts).
    pub start_step: usize,
    /// Eikonal data of the initial state (for restarts).
    pub eikonal: Option<EikonalState>,
    /// Reference for the gradient guard; defaults to the initial `max |d1 v1|`.
    pub guard_reference: Option<f64>,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        Self {
            dt: None,
            max_steps: None,
            retention: Retention::All,
            start_step: 0,
            eikonal: None,
            guard_reference: None,
        }
    }
}

/// CFL time step `cfl * h_min / max(|v| + c_s)`.
pub fn cfl_time_step(eos: &EquationOfState, grid: &Grid, state: &FluidState, cfl: f64) -> f64 {
    let mut smax = 0.0_f64;
    for p in 0..state.len() {
        let v = (state.v[0][p].powi(2) + state.v[1][p].powi(2) + state.v[2][p].powi(2)).sqrt();
        smax = smax.max(v + eos.cs(state.rho[p]));
    }
    cfl * grid.h_min() / smax
}

/// Integrates the scenario from `state0`, retaining every `snapshot_every`-th state.
pub fn integrate(scenario: &Scenario, state0: &FluidState) -> Result<Trajectory> {
    let opts = IntegrateOptions {
        retention: Retention::Every(scenario.snapshot_every),
        ..Default::default()
    };
    integrate_with(scenario, state0, opts)
}

struct Workspace {
    tmp: ScalarField,
    cs: ScalarField,
    grad_u: Option<VectorField>,
}

impl Workspace {
    fn new(grid: &Grid, eikonal: bool) -> Self {
        Self {
            tmp: grid.zeros(),
            cs: grid.zeros(),
            grad_u: eikonal.then(|| grid.zeros3()),
        }
    }
}

/// Right-hand side for `[rho, v1, v2, v3, (u_tilde, theta_tilde^1, theta_tilde^2)]`.
fn rhs(eos: &EquationOfState, grid: &Grid, y: &[ScalarField], out: &mut [ScalarField], ws: &mut Workspace) {
    let n = grid.len();
    for o in out.iter_mut() {
        o.iter_mut().for_each(|x| *x = 0.0);
    }
    for p in 0..n {
        ws.cs[p] = eos.cs(y[0][p]);
    }
    let eik = y.len() > 4;
    for a in 0..3 {
        if !grid.is_active(a) {
            continue;
        }
        d1_into(grid, &y[0], a, &mut ws.tmp);
        {
            let (o_rho, rest) = out.split_at_mut(1);
            let o_va = &mut rest[a];
            for p in 0..n {
                let d = ws.tmp[p];
                o_rho[0][p] -= y[1 + a][p] * d;
                o_va[p] -= ws.cs[p] * ws.cs[p] * d;
            }
        }
        for i in 0..3 {
            d1_into(grid, &y[1 + i], a, &mut ws.tmp);
            let va = &y[1 + a];
            if i == a {
                let (o_rho, rest) = out.split_at_mut(1);
                for p in 0..n {
                    let d = ws.tmp[p];
                    o_rho[0][p] -= d;
                    rest[i][p] -= va[p] * d;
                }
            } else {
                let o = &mut out[1 + i];
                for p in 0..n {
                    o[p] -= va[p] * ws.tmp[p];
                }
            }
        }
        if eik {
            let gu = ws.grad_u.as_mut().expect("eikonal workspace");
            d1_into(grid, &y[4], a, &mut gu[a]);
        }
    }
    if !eik {
        return;
    }
    let gu = ws.grad_u.as_mut().expect("eikonal workspace");
    for a in 0..3 {
        if !grid.is_active(a) {
            gu[a].iter_mut().for_each(|x| *x = 0.0);
        }
    }
    gu[0].iter_mut().for_each(|x| *x -= 1.0);
    // Characteristic speed w = v + c n with n = -grad u / |grad u|; store w in grad_u.
    for p in 0..n {
        let g = [gu[0][p], gu[1][p], gu[2][p]];
        let norm = (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt();
        let c = ws.cs[p];
        // d_t u = -v . grad u + c |grad u|
        out[4][p] = -(y[1][p] * g[0] + y[2][p] * g[1] + y[3][p] * g[2]) + c * norm;
        for a in 0..3 {
            gu[a][p] = y[1 + a][p] - c * g[a] / norm;
        }
    }
    for b in 0..2 {
        let axis = b + 1;
        for p in 0..n {
            out[5 + b][p] = -gu[axis][p];
        }
        for a in 0..3 {
            if !grid.is_active(a) {
                continue;
            }
            d1_into(grid, &y[5 + b], a, &mut ws.tmp);
            for p in 0..n {
                out[5 + b][p] -= gu[a][p] * ws.tmp[p];
            }
        }
    }
}

fn to_comps(state: &FluidState, eik: &Option<EikonalState>) -> Vec<ScalarField> {
    let mut y = vec![
        state.rho.clone(),
        state.v[0].clone(),
        state.v[1].clone(),
        state.v[2].clone(),
    ];
    if let Some(e) = eik {
        y.push(e.u_tilde.clone());
        y.push(e.theta_tilde[0].clone());
        y.push(e.theta_tilde[1].clone());
    }
    y
}

fn to_frame(y: &[ScalarField], t: f64, step: usize) -> Frame {
    let state = FluidState {
        t,
        rho: y[0].clone(),
        v: [y[1].clone(), y[2].clone(), y[3].clone()],
    };
    let eikonal = (y.len() > 4).then(|| EikonalState {
        u_tilde: y[4].clone(),
        theta_tilde: [y[5].clone(), y[6].clone()],
    });
    Frame { step, state, eikonal }
}

/// `min mu` and its location, with `mu = 1 / (c_s |grad u|)`.
pub fn mu_star_of(eos: &EquationOfState, grid: &Grid, rho: &[f64], u_tilde: &[f64]) -> (f64, usize) {
    let mut g = grid.zeros3();
    for a in 0..3 {
        if grid.is_active(a) {
            d1_into(grid, u_tilde, a, &mut g[a]);
        }
    }
    let mut best = (f64::INFINITY, 0);
    for p in 0..grid.len() {
        let gx = g[0][p] - 1.0;
        let norm = (gx * gx + g[1][p] * g[1][p] + g[2][p] * g[2][p]).sqrt();
        let mu = 1.0 / (eos.cs(rho[p]) * norm);
        if mu < best.0 {
            best = (mu, p);
        }
    }
    best
}

/// Sign of `det d(u, theta^1, theta^2) / dx` is negative everywhere on unfolded data.
fn coordinates_folded(grid: &Grid, y: &[ScalarField]) -> bool {
    let mut j = [[grid.zeros(), grid.zeros(), grid.zeros()], [grid.zeros(), grid.zeros(), grid.zeros()], [
        grid.zeros(),
        grid.zeros(),
        grid.zeros(),
    ]];
    for r in 0..3 {
        for a in 0..3 {
            if grid.is_active(a) {
                d1_into(grid, &y[4 + r], a, &mut j[r][a]);
            }
        }
    }
    for p in 0..grid.len() {
        let m = [
            [j[0][0][p] - 1.0, j[0][1][p], j[0][2][p]],
            [j[1][0][p], j[1][1][p] + 1.0, j[1][2][p]],
            [j[2][0][p], j[2][1][p], j[2][2][p] + 1.0],
        ];
        if det3(&m) >= 0.0 {
            return true;
        }
    }
    false
}

pub(crate) fn det3(m: &[[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// Exponential filter `exp(-36 s^8)` applied to the top tenth of the modes along each axis.
pub fn spectral_filter(grid: &Grid, f: &mut [f64]) {
    let mut planner = FftPlanner::<f64>::new();
    for axis in 0..3 {
        let n = grid.n[axis];
        if n < 8 {
            continue;
        }
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let stride = grid.stride(axis);
        let kmax = (n / 2) as f64;
        let sigma: Vec<f64> = (0..n)
            .map(|m| {
                let k = if 2 * m <= n { m as f64 } else { (n - m) as f64 };
                let eta = k / kmax;
                if eta <= 0.9 {
                    1.0
                } else {
                    (-36.0 * ((eta - 0.9) / 0.1).powi(8)).exp()
                }
            })
            .collect();
        let mut buf = vec![Complex::new(0.0, 0.0); n];
        let starts: Vec<usize> = (0..grid.len())
            .filter(|&p| grid.unravel(p)[axis] == 0)
            .collect();
        for base in starts {
            for (m, b) in buf.iter_mut().enumerate() {
                *b = Complex::new(f[base + m * stride], 0.0);
            }
            fwd.process(&mut buf);
            for (b, s) in buf.iter_mut().zip(&sigma) {
                *b *= s / n as f64;
            }
            inv.process(&mut buf);
            for (m, b) in buf.iter().enumerate() {
                f[base + m * stride] = b.re;
            }
        }
    }
}

/// RK4 integration with explicit options.
pub fn integrate_with(scenario: &Scenario, state0: &FluidState, opts: IntegrateOptions) -> Result<Trajectory> {
    let grid = scenario.grid.grid()?;
    grid.check_stencil()?;
    let eos = scenario.eos;
    check_eos(&eos)?;
    if state0.len() != grid.len() {
        return Err(Error::InvalidGrid("initial state does not match the grid".into()));
    }
    let dt = opts
        .dt
        .unwrap_or_else(|| cfl_time_step(&eos, &grid, state0, scenario.cfl));
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Config(format!("invalid time step {dt}")));
    }
    let eik0 = if scenario.eikonal {
        Some(opts.eikonal.clone().unwrap_or_else(|| EikonalState::initial(&grid)))
    } else {
        None
    };
    let mut y = to_comps(state0, &eik0);
    let nc = y.len();
    let mut acc = y.clone();
    let mut stage = y.clone();
    let mut k = vec![grid.zeros(); nc];
    let mut ws = Workspace::new(&grid, scenario.eikonal);
    let mut tmp = grid.zeros();

    let mut step = opts.start_step;
    // Anchored on step 0 so that restarted runs reproduce times bit for bit.
    let t_base = state0.t - opts.start_step as f64 * dt;
    let time_of = |s: usize| t_base + s as f64 * dt;
    let mut history = History::default();
    let mut frames = Vec::new();

    let record = |y: &[ScalarField], step: usize, history: &mut History, tmp: &mut ScalarField| {
        d1_into(&grid, &y[1], 0, tmp);
        history.step.push(step);
        history.t.push(time_of(step));
        history.max_d1v1.push(fields::max_abs(tmp));
        if y.len() > 4 {
            let (m, at) = mu_star_of(&eos, &grid, &y[0], &y[4]);
            history.mu_star.push(m);
            history.mu_argmin.push(at);
        }
    };
    record(&y, step, &mut history, &mut tmp);
    let guard_ref = opts.guard_reference.unwrap_or(history.max_d1v1[0]);
    if opts.retention.keeps(step) || opts.start_step > 0 {
        frames.push(to_frame(&y, time_of(step), step));
    }

    let stop_reason;
    loop {
        let t = time_of(step);
        if let Some(ms) = opts.max_steps {
            if step - opts.start_step >= ms {
                stop_reason = StopReason::Steps;
                break;
            }
        }
        if t + 0.5 * dt > scenario.t_max {
            stop_reason = StopReason::TMax;
            break;
        }
        if scenario.eikonal {
            if let Some(&m) = history.mu_star.last() {
                if m < scenario.mu_stop {
                    stop_reason = StopReason::MuStop;
                    break;
                }
            }
        }
        if guard_ref > 0.0 && *history.max_d1v1.last().unwrap() > scenario.blowup_factor * guard_ref {
            stop_reason = StopReason::BlowupGuard;
            break;
        }
        if scenario.eikonal && (step - opts.start_step).is_multiple_of(10) && step > opts.start_step && coordinates_folded(&grid, &y) {
            stop_reason = StopReason::CoordinateFold;
            break;
        }

        // Classical RK4.
        for c in 0..nc {
            acc[c].copy_from_slice(&y[c]);
        }
        let weights = [(0.5, 1.0 / 6.0), (0.5, 1.0 / 3.0), (1.0, 1.0 / 3.0), (0.0, 1.0 / 6.0)];
        for (s, &(next, w)) in weights.iter().enumerate() {
            let src = if s == 0 { &y } else { &stage };
            rhs(&eos, &grid, src, &mut k, &mut ws);
            for c in 0..nc {
                let (a, kc) = (&mut acc[c], &k[c]);
                for p in 0..a.len() {
                    a[p] += dt * w * kc[p];
                }
            }
            if s < 3 {
                for c in 0..nc {
                    let (st, yc, kc) = (&mut stage[c], &y[c], &k[c]);
                    for p in 0..st.len() {
                        st[p] = yc[p] + next * dt * kc[p];
                    }
                }
            }
        }
        std::mem::swap(&mut y, &mut acc);
        if scenario.filter {
            for c in y.iter_mut() {
                spectral_filter(&grid, c);
            }
        }
        step += 1;

        if !y.iter().all(|c| c.iter().all(|x| x.is_finite())) {
            let last = frames
                .last()
                .cloned()
                .unwrap_or_else(|| to_frame(&acc, time_of(step - 1), step - 1));
            let trajectory = Trajectory {
                grid,
                eos,
                dt,
                scheme_order: 4,
                scenario_hash: None,
                frames,
                history,
                stop_reason: StopReason::BlowupGuard,
                last,
            };
            return Err(Error::BlowupDetected {
                t: time_of(step),
                step,
                last_valid: Box::new(trajectory),
            });
        }
        record(&y, step, &mut history, &mut tmp);
        if opts.retention.keeps(step) {
            frames.push(to_frame(&y, time_of(step), step));
        }
    }
    let last = to_frame(&y, time_of(step), step);
    if frames.last().map(|f| f.step) != Some(step) {
        frames.push(last.clone());
    }
    Ok(Trajectory {
        grid,
        eos,
        dt,
        scheme_order: 4,
        scenario_hash: None,
        frames,
        history,
        stop_reason,
        last,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::riemann::{riemann_invariants, shock_time, SimpleWave};

    fn eos() -> EquationOfState {
        EquationOfState::normalized_polytropic(2.0)
    }

    #[test]
    fn constant_state_has_zero_rhs() {
        let g = Grid::unit(16, 8, 8).unwrap();
        let st = FluidState::constant(&g, 0.3, [0.1, -0.2, 0.05]);
        let (r, v) = euler_rhs(&eos(), &g, &st).unwrap();
        assert!(fields::max_abs(&r) < 1e-13);
        assert!(fields::max_norm3(&v) < 1e-13);
    }

    #[test]
    fn transverse_shear_is_stationary_at_t0() {
        let g = Grid::unit(16, 16, 1).unwrap();
        let mut st = FluidState::constant(&g, 0.0, [0.0; 3]);
        st.v[0] = g.sample(|x| 0.01 * (2.0 * PI * x[1]).sin());
        let (r, v) = euler_rhs(&eos(), &g, &st).unwrap();
        assert!(fields::max_abs(&r) < 1e-15);
        assert!(fields::max_norm3(&v) < 1e-15);
    }

    #[test]
    fn constant_state_is_preserved() {
        let mut sc = Scenario::new([16, 8, 8], 10.0);
        sc.initial_data.delta = 0.0;
        sc.initial_data.epsilon = 0.0;
        let g = sc.grid.grid().unwrap();
        let st = FluidState::constant(&g, 0.1, [0.2, 0.0, -0.1]);
        let opts = IntegrateOptions {
            max_steps: Some(100),
            retention: Retention::Ends,
            ..Default::default()
        };
        let tr = integrate_with(&sc, &st, opts).unwrap();
        assert_eq!(tr.stop_reason, StopReason::Steps);
        assert_eq!(tr.last.step, 100);
        assert!(tr.last.state.rho.iter().all(|x| (x - 0.1).abs() < 1e-14));
        assert!(tr.last.state.v[0].iter().all(|x| (x - 0.2).abs() < 1e-14));
    }

    #[test]
    fn simple_wave_data_has_vanishing_r_minus() {
        let g = Grid::unit(64, 1, 1).unwrap();
        let id = InitialData {
            epsilon: 0.0,
            ..Default::default()
        };
        let st = initial_data_nearly_simple_plane_wave(&eos(), &g, &id).unwrap();
        let (rm, rp) = riemann_invariants(&eos(), &st.rho, &st.v[0]);
        assert!(fields::max_abs(&rm) < 1e-15);
        let exact = g.sample(|x| -0.5 * (2.0 * PI * x[0]).sin());
        for p in 0..g.len() {
            assert!((rp[p] - exact[p]).abs() < 1e-14);
        }
    }

    #[test]
    fn vortical_amplitude_is_calibrated() {
        for n in [[32, 16, 16], [32, 16, 1]] {
            let g = Grid::new(n, [1.0; 3]).unwrap();
            let id = InitialData::default();
            let st = initial_data_nearly_simple_plane_wave(&eos(), &g, &id).unwrap();
            let w = fields::specific_vorticity(&st, &g).unwrap();
            let m = fields::max_norm3(&w);
            assert!(m >= 0.5 * id.epsilon && m <= 2.0 * id.epsilon, "max |varpi| = {m}");
        }
    }

    #[test]
    fn hierarchy_is_enforced() {
        let g = Grid::unit(16, 8, 8).unwrap();
        let id = InitialData {
            delta: 0.05,
            epsilon: 0.01,
            ..Default::default()
        };
        assert!(initial_data_nearly_simple_plane_wave(&eos(), &g, &id).is_err());
        let mut sc = Scenario::new([16, 8, 8], 0.1);
        sc.initial_data = id;
        assert!(!sc.validate().ok());
    }

    #[test]
    fn two_dimensional_data_have_no_third_velocity() {
        let g = Grid::unit(32, 16, 1).unwrap();
        let st = initial_data_nearly_simple_plane_wave(&eos(), &g, &InitialData::default()).unwrap();
        assert!(st.v[2].iter().all(|x| *x == 0.0));
    }

    #[test]
    fn one_dimensional_solution_tracks_exact_simple_wave() {
        // Error against the characteristic solution at t = 0.15 shrinks at fourth order.
        let profile = Profile::sine(0.5, 1.0);
        let ts = shock_time(&profile, &eos(), 4096).unwrap().t_shock;
        let sw = SimpleWave::new(profile, eos());
        let err = |n: usize| {
            let mut sc = Scenario::new([n, 1, 1], 0.15);
            sc.initial_data.epsilon = 0.0;
            let g = sc.grid.grid().unwrap();
            let st = initial_data_nearly_simple_plane_wave(&sc.eos, &g, &sc.initial_data).unwrap();
            let steps = n / 4;
            let opts = IntegrateOptions {
                dt: Some(0.15 / steps as f64),
                max_steps: Some(steps),
                retention: Retention::Ends,
                ..Default::default()
            };
            let tr = integrate_with(&sc, &st, opts).unwrap();
            let t = tr.last.state.t;
            (0..n)
                .map(|i| {
                    let ex = sw.exact(g.coord(0, i), t, ts).unwrap();
                    (tr.last.state.v[0][i] - ex.v1).abs()
                })
                .fold(0.0, f64::max)
        };
        let (e1, e2) = (err(128), err(256));
        let order = (e1 / e2).log2();
        assert!(order > 3.5 && order < 4.6, "order {order} ({e1:.3e}, {e2:.3e})");
    }

    #[test]
    fn eikonal_is_exact_on_constant_state() {
        let mut sc = Scenario::new([16, 8, 1], 0.25);
        sc.eikonal = true;
        let g = sc.grid.grid().unwrap();
        let st = FluidState::constant(&g, 0.0, [0.0; 3]);
        let opts = IntegrateOptions {
            dt: Some(0.025),
            retention: Retention::Ends,
            ..Default::default()
        };
        let tr = integrate_with(&sc, &st, opts).unwrap();
        let e = tr.last.eikonal.as_ref().unwrap();
        let t = tr.last.state.t;
        assert!((t - 0.25).abs() < 1e-12);
        assert!(e.u_tilde.iter().all(|x| (x - t).abs() < 1e-13));
        assert!(e.theta_tilde.iter().flatten().all(|x| x.abs() < 1e-14));
        assert!(tr.history.mu_star.iter().all(|m| (m - 1.0).abs() < 1e-13));
    }

    #[test]
    fn nan_reports_last_valid_trajectory() {
        let mut sc = Scenario::new([16, 1, 1], 1.0);
        sc.blowup_factor = f64::INFINITY;
        let g = sc.grid.grid().unwrap();
        let mut st = FluidState::constant(&g, 0.0, [0.0; 3]);
        st.rho[3] = 600.0; // c_s^2 d_i rho overflows within a few steps
        let opts = IntegrateOptions {
            dt: Some(0.01),
            max_steps: Some(50),
            ..Default::default()
        };
        match integrate_with(&sc, &st, opts) {
            Err(Error::BlowupDetected { last_valid, step, .. }) => {
                assert!(step >= 1);
                assert!(!last_valid.frames.is_empty());
            }
            other => panic!("expected blowup, got {:?}", other.map(|t| t.stop_reason)),
        }
    }

    #[test]
    fn restart_is_bit_identical() {
        let mut sc = Scenario::new([16, 8, 8], 1.0);
        sc.eikonal = true;
        let g = sc.grid.grid().unwrap();
        let st = initial_data_nearly_simple_plane_wave(&sc.eos, &g, &sc.initial_data).unwrap();
        let full = integrate_with(
            &sc,
            &st,
            IntegrateOptions {
                max_steps: Some(10),
                ..Default::default()
            },
        )
        .unwrap();
        let mid = full.frame_at_step(4).unwrap().clone();
        let resumed = integrate_with(
            &sc,
            &mid.state,
            IntegrateOptions {
                dt: Some(full.dt),
                max_steps: Some(6),
                start_step: 4,
                eikonal: mid.eikonal.clone(),
                guard_reference: Some(full.history.max_d1v1[0]),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(resumed.last.step, 10);
        assert_eq!(resumed.last.state, full.last.state);
        assert_eq!(resumed.last.eikonal, full.last.eikonal);
    }

    #[test]
    fn scenario_round_trips_through_json() {
        let sc = Scenario::new([64, 32, 32], 0.2);
        let s = serde_json::to_string(&sc).unwrap();
        let back: Scenario = serde_json::from_str(&s).unwrap();
        assert_eq!(back, sc);
        let minimal = r#"{"eos":{"family":"polytropic","gamma":2.0,"K":0.5,"rho_bar":1.0},"grid":{"n":[64,8,8]},"t_max":0.1}"#;
        let parsed: Scenario = serde_json::from_str(minimal).unwrap();
        assert!(parsed.validate().ok());
        assert!(serde_json::from_str::<Scenario>(r#"{"eos":{"family":"polytropic","gamma":2.0,"K":0.5,"rho_bar":1.0},"grid":{"n":[64,8,8]},"t_max":0.1,"bogus":1}"#).is_err());
    }

    #[test]
    fn filter_leaves_smooth_modes_untouched() {
        let g = Grid::unit(32, 1, 1).unwrap();
        let mut f = g.sample(|x| (2.0 * PI * x[0]).sin());
        let orig = f.clone();
        spectral_filter(&g, &mut f);
        for (a, b) in f.iter().zip(&orig) {
            assert!((a - b).abs() < 1e-14);
        }
        let mut nyq: Vec<f64> = (0..32).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        spectral_filter(&g, &mut nyq);
        assert!(fields::max_abs(&nyq) < 1e-10);
    }
}
