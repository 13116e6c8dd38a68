//! Acoustical eikonal function `u`, the inverse foliation density `mu`, the
//! null and transversal frame built from it, and shock detection through the
//! vanishing of `mu`.
//!
//! `u` is stored as `u = 1 - x1 + u_tilde` with `u_tilde` periodic, and the
//! torus coordinates as `theta^A = x^{A+1} + theta_tilde^A`; see
//! [`crate::solver::EikonalState`].

use serde::{Deserialize, Serialize};

use crate::eos::EquationOfState;
use crate::error::{Error, Result};
use crate::fields::{self, d1_into, FluidState, Grid, ScalarField, VectorField};
use crate::metric::{self, christoffel, metric_derivatives, time_d1, StateJet, Vec4};
use crate::solver::{euler_rhs, EikonalState, Frame};

const MIN_GRADIENT: f64 = 1e-8;
const MAX_TORUS_CONDITION: f64 = 1e8;

/// `u_0 = 1 - x1`.
pub fn initial_eikonal(grid: &Grid) -> ScalarField {
    grid.sample(|x| 1.0 - x[0])
}

/// The full (non-periodic) eikonal function from its periodic part.
pub fn full_u(grid: &Grid, u_tilde: &[f64]) -> ScalarField {
    (0..grid.len())
        .map(|p| 1.0 - grid.point(p)[0] + u_tilde[p])
        .collect()
}

/// Spatial gradient of `u = 1 - x1 + u_tilde`.
pub fn grad_u(grid: &Grid, u_tilde: &[f64]) -> VectorField {
    let mut g = grid.zeros3();
    for a in 0..3 {
        if grid.is_active(a) {
            d1_into(grid, u_tilde, a, &mut g[a]);
        }
    }
    g[0].iter_mut().for_each(|x| *x -= 1.0);
    g
}

/// Spatial gradient of `theta^A = x^{A+1} + theta_tilde^A`.
pub fn grad_theta(grid: &Grid, theta_tilde: &[f64], which: usize) -> VectorField {
    let mut g = grid.zeros3();
    for a in 0..3 {
        if grid.is_active(a) {
            d1_into(grid, theta_tilde, a, &mut g[a]);
        }
    }
    g[which + 1].iter_mut().for_each(|x| *x += 1.0);
    g
}

/// Outgoing Hamilton–Jacobi rate `d_t u = -v . grad u + c_s |grad u|`.
pub fn eikonal_step(eos: &EquationOfState, grid: &Grid, u_tilde: &[f64], state: &FluidState) -> Result<ScalarField> {
    let g = grad_u(grid, u_tilde);
    let mut out = grid.zeros();
    for p in 0..grid.len() {
        let gp = [g[0][p], g[1][p], g[2][p]];
        let norm = norm3(&gp);
        if norm < MIN_GRADIENT {
            return Err(Error::DegenerateGradient { norm });
        }
        let c = eos.sound_speed(state.rho[p])?;
        out[p] = -(state.v[0][p] * gp[0] + state.v[1][p] * gp[1] + state.v[2][p] * gp[2]) + c * norm;
    }
    Ok(out)
}

fn norm3(x: &[f64; 3]) -> f64 {
    (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt()
}

fn dot3(x: &[f64; 3], y: &[f64; 3]) -> f64 {
    x[0] * y[0] + x[1] * y[1] + x[2] * y[2]
}

/// `L_Geo` together with `mu` evaluated three independent ways.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LgeoMu {
    pub lgeo: Vec4,
    pub mu: f64,
    /// `-1/g^{ab} d_a t d_b u`, `-1/g^{0a} d_a u`, `1/L_Geo^0`.
    pub mu_formulas: [f64; 3],
    /// `g(L_Geo, L_Geo)`; vanishes when `du` solves the eikonal equation.
    pub null_defect: f64,
}

/// `L_Geo^n = -g^{na} d_a u` and `mu = 1 / L_Geo^0` from the spacetime gradient `du` of `u`.
pub fn lgeo_and_mu(eos: &EquationOfState, rho: f64, v: [f64; 3], du: Vec4) -> Result<LgeoMu> {
    let m = metric::metric_at(eos, rho, v)?;
    let mut lgeo = [0.0; 4];
    for n in 0..4 {
        lgeo[n] = -(0..4).map(|a| m.g_inv[n][a] * du[a]).sum::<f64>();
    }
    let dt = [1.0, 0.0, 0.0, 0.0];
    let mu_a = -1.0 / m.inv_inner(&dt, &du);
    let mu_b = -1.0 / (m.g_inv[0][0] * du[0] + m.g_inv[0][1] * du[1] + m.g_inv[0][2] * du[2] + m.g_inv[0][3] * du[3]);
    let mu_c = 1.0 / lgeo[0];
    if !(mu_c > 0.0) {
        return Err(Error::MuNonpositive { mu: mu_c });
    }
    Ok(LgeoMu {
        lgeo,
        mu: mu_c,
        mu_formulas: [mu_a, mu_b, mu_c],
        null_defect: m.inner(&lgeo, &lgeo),
    })
}

/// The geometric frame at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointFrame {
    pub mu: f64,
    pub lgeo: Vec4,
    /// `L = mu L_Geo`, so that `L t = 1` when `u` solves the eikonal equation.
    pub l: Vec4,
    pub x: [f64; 3],
    pub xbreve: [f64; 3],
    pub y: [[f64; 3]; 2],
    pub gamma: [[f64; 2]; 2],
}

/// `X^i = mu c_s^2 d_i u`, `Y_A = d_{A+1} - (g(d_{A+1}, X) / g(X, X)) X`, `gamma_AB = g(Y_A, Y_B)`.
pub fn point_frame(eos: &EquationOfState, rho: f64, v: [f64; 3], du: Vec4) -> Result<PointFrame> {
    let lm = lgeo_and_mu(eos, rho, v, du)?;
    let mu = lm.mu;
    let c = eos.cs(rho);
    let c2 = c * c;
    let x = [mu * c2 * du[1], mu * c2 * du[2], mu * c2 * du[3]];
    let xbreve = [mu * x[0], mu * x[1], mu * x[2]];
    let xx = dot3(&x, &x);
    let mut y = [[0.0; 3]; 2];
    for a in 0..2 {
        let f = x[a + 1] / xx;
        for i in 0..3 {
            y[a][i] = if i == a + 1 { 1.0 } else { 0.0 } - f * x[i];
        }
    }
    let mut gamma = [[0.0; 2]; 2];
    for a in 0..2 {
        for b in 0..2 {
            gamma[a][b] = dot3(&y[a], &y[b]) / c2;
        }
    }
    let l = [mu * lm.lgeo[0], mu * lm.lgeo[1], mu * lm.lgeo[2], mu * lm.lgeo[3]];
    Ok(PointFrame {
        mu,
        lgeo: lm.lgeo,
        l,
        x,
        xbreve,
        y,
        gamma,
    })
}

/// Geometric frame fields on one snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct EikonalField {
    pub grad_u: VectorField,
    pub dt_u: ScalarField,
    pub mu: ScalarField,
    pub lgeo: [ScalarField; 4],
    pub l: [ScalarField; 4],
    pub x: VectorField,
    pub xbreve: VectorField,
    pub y: [VectorField; 2],
    /// `gamma_11, gamma_12, gamma_22`.
    pub gamma: [ScalarField; 3],
}

/// Frame fields on a snapshot. Without `dt_u` the Hamilton–Jacobi rate is used, which
/// makes `L_Geo` null and `g(X, X) = 1` to rounding; a snapshot-differenced `dt_u`
/// carries the discretisation error of the evolution instead.
pub fn frame_fields(
    eos: &EquationOfState,
    grid: &Grid,
    state: &FluidState,
    eik: &EikonalState,
    dt_u: Option<&[f64]>,
) -> Result<EikonalField> {
    let g = grad_u(grid, &eik.u_tilde);
    let dt_u = match dt_u {
        Some(d) => d.to_vec(),
        None => eikonal_step(eos, grid, &eik.u_tilde, state)?,
    };
    let n = grid.len();
    let mut f = EikonalField {
        grad_u: g,
        dt_u,
        mu: grid.zeros(),
        lgeo: [grid.zeros(), grid.zeros(), grid.zeros(), grid.zeros()],
        l: [grid.zeros(), grid.zeros(), grid.zeros(), grid.zeros()],
        x: grid.zeros3(),
        xbreve: grid.zeros3(),
        y: [grid.zeros3(), grid.zeros3()],
        gamma: [grid.zeros(), grid.zeros(), grid.zeros()],
    };
    for p in 0..n {
        let du = [f.dt_u[p], f.grad_u[0][p], f.grad_u[1][p], f.grad_u[2][p]];
        let v = [state.v[0][p], state.v[1][p], state.v[2][p]];
        let pf = point_frame(eos, state.rho[p], v, du)?;
        f.mu[p] = pf.mu;
        for a in 0..4 {
            f.lgeo[a][p] = pf.lgeo[a];
            f.l[a][p] = pf.l[a];
        }
        for i in 0..3 {
            f.x[i][p] = pf.x[i];
            f.xbreve[i][p] = pf.xbreve[i];
            f.y[0][i][p] = pf.y[0][i];
            f.y[1][i][p] = pf.y[1][i];
        }
        f.gamma[0][p] = pf.gamma[0][0];
        f.gamma[1][p] = pf.gamma[0][1];
        f.gamma[2][p] = pf.gamma[1][1];
    }
    Ok(f)
}

/// `max |mu_formula_k - mu_formula_l|` relative to `mu`, over the grid.
pub fn mu_formula_spread(eos: &EquationOfState, grid: &Grid, state: &FluidState, eik: &EikonalState) -> Result<f64> {
    let g = grad_u(grid, &eik.u_tilde);
    let dt_u = eikonal_step(eos, grid, &eik.u_tilde, state)?;
    let mut worst = 0.0_f64;
    for p in 0..grid.len() {
        let du = [dt_u[p], g[0][p], g[1][p], g[2][p]];
        let lm = lgeo_and_mu(eos, state.rho[p], [state.v[0][p], state.v[1][p], state.v[2][p]], du)?;
        let [a, b, c] = lm.mu_formulas;
        worst = worst.max(((a - b).abs().max((a - c).abs()).max((b - c).abs())) / lm.mu);
    }
    Ok(worst)
}

/// Eikonal residual `g^{ab} d_a u d_b u` with `d_t u` supplied (e.g. snapshot-differenced).
pub fn eikonal_residual(eos: &EquationOfState, grid: &Grid, state: &FluidState, u_tilde: &[f64], dt_u: &[f64]) -> ScalarField {
    let g = grad_u(grid, u_tilde);
    (0..grid.len())
        .map(|p| {
            let c = eos.cs(state.rho[p]);
            let gp = [g[0][p], g[1][p], g[2][p]];
            let bu = dt_u[p] + state.v[0][p] * gp[0] + state.v[1][p] * gp[1] + state.v[2][p] * gp[2];
            -bu * bu + c * c * dot3(&gp, &gp)
        })
        .collect()
}

fn check_window(window: &[&Frame]) -> Result<()> {
    if window.len() != 5 || window.iter().any(|f| f.eikonal.is_none()) {
        return Err(Error::InsufficientSnapshots {
            center: window.get(window.len() / 2).map_or(0, |f| f.step),
            needed: 5,
            available: window.iter().filter(|f| f.eikonal.is_some()).count(),
        });
    }
    Ok(())
}

/// Fourth-order time derivative at the centre of a five-snapshot window.
pub fn window_time_derivative<'a>(window: &[&'a Frame], dt: f64, f: impl Fn(&'a Frame) -> &'a [f64]) -> ScalarField {
    let fs: [&[f64]; 5] = std::array::from_fn(|k| f(window[k]));
    let mut out = vec![0.0; fs[2].len()];
    time_d1(&fs, dt, &mut out);
    out
}

fn eik(f: &Frame) -> &EikonalState {
    f.eikonal.as_ref().expect("checked eikonal window")
}

/// Fluid jets at the centre of a five-snapshot window (time derivatives by differencing).
fn state_jets(grid: &Grid, dt: f64, window: &[&Frame]) -> Vec<StateJet> {
    let st = &window[2].state;
    let dt_rho = window_time_derivative(window, dt, |f| &f.state.rho);
    let dt_v: [ScalarField; 3] = std::array::from_fn(|i| window_time_derivative(window, dt, |f| &f.state.v[i]));
    let drho = grad_full(grid, &st.rho);
    let dv: [VectorField; 3] = std::array::from_fn(|i| grad_full(grid, &st.v[i]));
    (0..grid.len())
        .map(|p| StateJet {
            rho: st.rho[p],
            v: [st.v[0][p], st.v[1][p], st.v[2][p]],
            drho: [dt_rho[p], drho[0][p], drho[1][p], drho[2][p]],
            dv: std::array::from_fn(|i| [dt_v[i][p], dv[i][0][p], dv[i][1][p], dv[i][2][p]]),
        })
        .collect()
}

fn grad_full(grid: &Grid, f: &[f64]) -> VectorField {
    let mut g = grid.zeros3();
    for a in 0..3 {
        if grid.is_active(a) {
            d1_into(grid, f, a, &mut g[a]);
        }
    }
    g
}

/// `L_Geo` (Hamilton–Jacobi rate) on each snapshot of the window.
fn lgeo_window(eos: &EquationOfState, grid: &Grid, window: &[&Frame]) -> Result<Vec<[ScalarField; 4]>> {
    window
        .iter()
        .map(|f| frame_fields(eos, grid, &f.state, eik(f), None).map(|ff| ff.lgeo))
        .collect()
}

/// `L_Geo^a d_a L_Geo^n + Gamma^n_{ab} L_Geo^a L_Geo^b` at the centre of a
/// five-snapshot window.
pub fn geodesic_residual(eos: &EquationOfState, grid: &Grid, dt: f64, window: &[&Frame]) -> Result<[ScalarField; 4]> {
    check_window(window)?;
    let lw = lgeo_window(eos, grid, window)?;
    let jets = state_jets(grid, dt, window);
    let mut out: [ScalarField; 4] = std::array::from_fn(|_| grid.zeros());
    let mut tmp = grid.zeros();
    let center = &lw[2];
    for nu in 0..4 {
        let fs: [&[f64]; 5] = std::array::from_fn(|k| lw[k][nu].as_slice());
        time_d1(&fs, dt, &mut tmp);
        for p in 0..grid.len() {
            out[nu][p] = center[0][p] * tmp[p];
        }
        for a in 0..3 {
            if !grid.is_active(a) {
                continue;
            }
            d1_into(grid, &center[nu], a, &mut tmp);
            for p in 0..grid.len() {
                out[nu][p] += center[a + 1][p] * tmp[p];
            }
        }
    }
    for (p, jet) in jets.iter().enumerate() {
        let m = metric::metric_at(eos, jet.rho, jet.v)?;
        let chr = christoffel(&m, &metric_derivatives(&m, jet));
        let l = [center[0][p], center[1][p], center[2][p], center[3][p]];
        for nu in 0..4 {
            out[nu][p] += chr.contract(nu, &l, &l);
        }
    }
    Ok(out)
}

/// `L mu - mu^3 Gamma^0(L_Geo, L_Geo)` at the centre of a five-snapshot window.
pub fn mu_transport_residual(eos: &EquationOfState, grid: &Grid, dt: f64, window: &[&Frame]) -> Result<ScalarField> {
    check_window(window)?;
    let mus: Vec<ScalarField> = window
        .iter()
        .map(|f| frame_fields(eos, grid, &f.state, eik(f), None).map(|ff| ff.mu))
        .collect::<Result<_>>()?;
    let center = frame_fields(eos, grid, &window[2].state, eik(window[2]), None)?;
    let jets = state_jets(grid, dt, window);
    let fs: [&[f64]; 5] = std::array::from_fn(|k| mus[k].as_slice());
    let mut out = grid.zeros();
    time_d1(&fs, dt, &mut out);
    for p in 0..grid.len() {
        out[p] *= center.l[0][p];
    }
    let mut tmp = grid.zeros();
    for a in 0..3 {
        if !grid.is_active(a) {
            continue;
        }
        d1_into(grid, &mus[2], a, &mut tmp);
        for p in 0..grid.len() {
            out[p] += center.l[a + 1][p] * tmp[p];
        }
    }
    for (p, jet) in jets.iter().enumerate() {
        let m = metric::metric_at(eos, jet.rho, jet.v)?;
        let chr = christoffel(&m, &metric_derivatives(&m, jet));
        let lg = [center.lgeo[0][p], center.lgeo[1][p], center.lgeo[2][p], center.lgeo[3][p]];
        out[p] -= center.mu[p].powi(3) * chr.contract(0, &lg, &lg);
    }
    Ok(out)
}

/// `theta^A = x^{A+1} + theta_tilde^A` on the grid.
pub fn geometric_coordinates(grid: &Grid, eik: &EikonalState) -> [ScalarField; 2] {
    std::array::from_fn(|a| {
        (0..grid.len())
            .map(|p| grid.point(p)[a + 1] + eik.theta_tilde[a][p])
            .collect()
    })
}

/// `L theta^A` at the centre of a five-snapshot window.
pub fn theta_transport_residual(eos: &EquationOfState, grid: &Grid, dt: f64, window: &[&Frame]) -> Result<[ScalarField; 2]> {
    check_window(window)?;
    let center = frame_fields(eos, grid, &window[2].state, eik(window[2]), None)?;
    let mut out: [ScalarField; 2] = std::array::from_fn(|_| grid.zeros());
    for (a, o) in out.iter_mut().enumerate() {
        let dth = window_time_derivative(window, dt, |f| &eik(f).theta_tilde[a]);
        let g = grad_theta(grid, &eik(window[2]).theta_tilde[a], a);
        for p in 0..grid.len() {
            o[p] = center.l[0][p] * dth[p]
                + center.l[1][p] * g[0][p]
                + center.l[2][p] * g[1][p]
                + center.l[3][p] * g[2][p];
        }
    }
    Ok(out)
}

/// Discrepancy of `mu d_i f = g(d_i, X) Xbreve f + mu sum gamma^{-1}_{AB} g(d_i, Y_A) Y_B f`
/// applied to each test scalar; the per-cell maximum over `i` and the test scalars.
pub fn cartesian_from_geometric_check(
    grid: &Grid,
    eos: &EquationOfState,
    state: &FluidState,
    field: &EikonalField,
    tests: &[&[f64]],
) -> Result<ScalarField> {
    let grads: Vec<VectorField> = tests.iter().map(|f| grad_full(grid, f)).collect();
    let mut out = grid.zeros();
    for p in 0..grid.len() {
        let c2 = eos.cs(state.rho[p]).powi(2);
        let mu = field.mu[p];
        let (g11, g12, g22) = (field.gamma[0][p], field.gamma[1][p], field.gamma[2][p]);
        let det = g11 * g22 - g12 * g12;
        let tr = g11 + g22;
        let disc = (0.25 * tr * tr - det).max(0.0).sqrt();
        let (lmax, lmin) = (0.5 * tr + disc, 0.5 * tr - disc);
        if !(lmin > 0.0) || lmax / lmin > MAX_TORUS_CONDITION {
            return Err(Error::DegenerateTorusFrame {
                condition: lmax / lmin,
            });
        }
        let ginv = [[g22 / det, -g12 / det], [-g12 / det, g11 / det]];
        let x = [field.x[0][p], field.x[1][p], field.x[2][p]];
        let xb = [field.xbreve[0][p], field.xbreve[1][p], field.xbreve[2][p]];
        let y = [
            [field.y[0][0][p], field.y[0][1][p], field.y[0][2][p]],
            [field.y[1][0][p], field.y[1][1][p], field.y[1][2][p]],
        ];
        for gr in &grads {
            let df = [gr[0][p], gr[1][p], gr[2][p]];
            let xbf = dot3(&xb, &df);
            let yf = [dot3(&y[0], &df), dot3(&y[1], &df)];
            for i in 0..3 {
                // On Sigma_t, g(d_i, W) = c^{-2} W^i.
                let mut rhs = x[i] / c2 * xbf;
                for a in 0..2 {
                    for b in 0..2 {
                        rhs += mu * ginv[a][b] * y[a][i] / c2 * yf[b];
                    }
                }
                out[p] = out[p].max((mu * df[i] - rhs).abs());
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JacobianReport {
    /// Pearson correlation between `J` and `mu` over the cells.
    pub correlation: f64,
    pub ratio_min: f64,
    pub ratio_max: f64,
    pub within_band: bool,
    pub kappa: f64,
}

/// `J = |det d(x1, x2, x3) / d(u, theta^1, theta^2)|` per cell.
pub fn coordinate_jacobian(grid: &Grid, eik: &EikonalState) -> Result<ScalarField> {
    let gu = grad_u(grid, &eik.u_tilde);
    let g1 = grad_theta(grid, &eik.theta_tilde[0], 0);
    let g2 = grad_theta(grid, &eik.theta_tilde[1], 1);
    let mut j = grid.zeros();
    for p in 0..grid.len() {
        let m = [
            [gu[0][p], gu[1][p], gu[2][p]],
            [g1[0][p], g1[1][p], g1[2][p]],
            [g2[0][p], g2[1][p], g2[2][p]],
        ];
        let d = crate::solver::det3(&m);
        // The initial coordinates have det = -1.
        if d >= 0.0 {
            return Err(Error::CoordinateFold);
        }
        j[p] = 1.0 / d.abs();
    }
    Ok(j)
}

/// Compares the coordinate volume density `J` with `mu` on the given cells.
pub fn jacobian_mu_relation(grid: &Grid, eik: &EikonalState, mu: &[f64], cells: &[usize], kappa: f64) -> Result<JacobianReport> {
    let j = coordinate_jacobian(grid, eik)?;
    let js: Vec<f64> = cells.iter().map(|&p| j[p]).collect();
    let ms: Vec<f64> = cells.iter().map(|&p| mu[p]).collect();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for (a, b) in js.iter().zip(&ms) {
        lo = lo.min(a / b);
        hi = hi.max(a / b);
    }
    Ok(JacobianReport {
        correlation: pearson(&js, &ms),
        ratio_min: lo,
        ratio_max: hi,
        within_band: lo >= 1.0 - kappa && hi <= 1.0 / (1.0 - kappa),
        kappa,
    })
}

/// Pearson correlation; `1` for two constant series that agree.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return if saa == sbb { 1.0 } else { 0.0 };
    }
    sab / (saa * sbb).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShockFit {
    /// Extrapolated vanishing time of `mu_*`.
    pub t_hat: f64,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub samples_fitted: usize,
    pub mu_min: f64,
    /// Location of the last minimiser.
    pub argmin: Option<usize>,
}

/// Least-squares line through the trailing samples with `mu_* <= 0.5`.
pub fn mu_star_and_shock_fit(t: &[f64], mu_star: &[f64], argmin: &[usize]) -> Result<ShockFit> {
    let mu_min = mu_star.iter().copied().fold(f64::INFINITY, f64::min);
    if mu_star.len() < 10 {
        return Err(Error::InsufficientSnapshots {
            center: 0,
            needed: 10,
            available: mu_star.len(),
        });
    }
    if !(mu_min < 0.9) {
        return Err(Error::NoDecay { threshold: 0.9, min: mu_min });
    }
    let start = mu_star.iter().position(|&m| m <= 0.5).ok_or(Error::NoDecay { threshold: 0.5, min: mu_min })?;
    let (ts, ms) = (&t[start..], &mu_star[start..]);
    if ts.len() < 3 {
        return Err(Error::InsufficientSnapshots {
            center: start,
            needed: 3,
            available: ts.len(),
        });
    }
    let n = ts.len() as f64;
    let tm = ts.iter().sum::<f64>() / n;
    let mm = ms.iter().sum::<f64>() / n;
    let (mut stt, mut stm) = (0.0, 0.0);
    for (x, y) in ts.iter().zip(ms) {
        stt += (x - tm) * (x - tm);
        stm += (x - tm) * (y - mm);
    }
    let slope = stm / stt;
    let intercept = mm - slope * tm;
    if !(slope < 0.0) {
        return Err(Error::NoDecay { threshold: 0.5, min: mu_min });
    }
    let (mut ss_res, mut ss_tot) = (0.0, 0.0);
    for (x, y) in ts.iter().zip(ms) {
        ss_res += (y - intercept - slope * x).powi(2);
        ss_tot += (y - mm).powi(2);
    }
    Ok(ShockFit {
        t_hat: -intercept / slope,
        slope,
        intercept,
        r_squared: if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 },
        samples_fitted: ts.len(),
        mu_min,
        argmin: argmin.last().copied(),
    })
}

/// Time series of gradient sizes in Cartesian and geometric frames.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BlowupSignature {
    pub t: Vec<f64>,
    pub mu_star: Vec<f64>,
    pub max_d1v1: Vec<f64>,
    pub max_xbreve_v1: Vec<f64>,
    pub max_l_v1: Vec<f64>,
    pub max_y_v1: Vec<f64>,
    pub max_varpi: Vec<f64>,
    pub max_curl_varpi: Vec<f64>,
    /// Index of the first sample with `mu_* <= 0.9` (0 if the run starts below).
    pub reference: usize,
}

impl BlowupSignature {
    fn window<'a>(&self, s: &'a [f64]) -> &'a [f64] {
        &s[self.reference..]
    }

    /// `last / reference` of a series.
    pub fn growth(&self, s: &[f64]) -> f64 {
        let w = self.window(s);
        w[w.len() - 1] / w[0]
    }

    /// `max_t |s(t) / s(reference) - 1|`.
    pub fn variation(&self, s: &[f64]) -> f64 {
        let w = self.window(s);
        w.iter().map(|x| (x / w[0] - 1.0).abs()).fold(0.0, f64::max)
    }

    /// `max / min` of `mu_* max |d1 v1|` over the window.
    pub fn mu_weighted_band(&self) -> f64 {
        let prod: Vec<f64> = self
            .window(&self.mu_star)
            .iter()
            .zip(self.window(&self.max_d1v1))
            .map(|(a, b)| a * b)
            .collect();
        let hi = prod.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = prod.iter().copied().fold(f64::INFINITY, f64::min);
        hi / lo
    }

    /// `max_t s(t) / s(reference)`.
    pub fn peak_ratio(&self, s: &[f64]) -> f64 {
        let w = self.window(s);
        w.iter().copied().fold(f64::NEG_INFINITY, f64::max) / w[0]
    }
}

/// Evaluates the signature series on each frame (which must carry eikonal data).
pub fn blowup_signature(eos: &EquationOfState, grid: &Grid, frames: &[&Frame]) -> Result<BlowupSignature> {
    let mut sig = BlowupSignature::default();
    for f in frames {
        let e = f.eikonal.as_ref().ok_or_else(|| Error::Config("frame without eikonal data".into()))?;
        let ff = frame_fields(eos, grid, &f.state, e, None)?;
        let (_, dt_v) = euler_rhs(eos, grid, &f.state)?;
        let dv1 = grad_full(grid, &f.state.v[0]);
        let mut xb = 0.0_f64;
        let mut lv = 0.0_f64;
        let mut yv = 0.0_f64;
        for p in 0..grid.len() {
            let d = [dv1[0][p], dv1[1][p], dv1[2][p]];
            xb = xb.max((ff.xbreve[0][p] * d[0] + ff.xbreve[1][p] * d[1] + ff.xbreve[2][p] * d[2]).abs());
            lv = lv.max((ff.l[0][p] * dt_v[0][p] + ff.l[1][p] * d[0] + ff.l[2][p] * d[1] + ff.l[3][p] * d[2]).abs());
            for a in 0..2 {
                yv = yv.max((ff.y[a][0][p] * d[0] + ff.y[a][1][p] * d[1] + ff.y[a][2][p] * d[2]).abs());
            }
        }
        let varpi = fields::specific_vorticity(&f.state, grid)?;
        let curl_varpi = fields::curl(&varpi, grid)?;
        sig.t.push(f.state.t);
        sig.mu_star.push(fields::max_abs(&ff.mu.iter().map(|m| 1.0 / m).collect::<Vec<_>>()).recip());
        sig.max_d1v1.push(fields::max_abs(&dv1[0]));
        sig.max_xbreve_v1.push(xb);
        sig.max_l_v1.push(lv);
        sig.max_y_v1.push(yv);
        sig.max_varpi.push(fields::max_norm3(&varpi));
        sig.max_curl_varpi.push(fields::max_norm3(&curl_varpi));
    }
    sig.reference = sig.mu_star.iter().position(|&m| m <= 0.9).unwrap_or(0);
    if sig.mu_star.first().is_some_and(|&m| m <= 0.9) {
        sig.reference = 0;
    }
    Ok(sig)
}
