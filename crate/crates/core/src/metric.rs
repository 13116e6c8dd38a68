//! Pointwise algebra of the acoustical metric
//! `g = -dt^2 + c_s^{-2} sum_a (dx^a - v^a dt)^2`, its inverse, Christoffel
//! symbols and the covariant wave operator.
//!
//! Spacetime indices run over 0..4 with index 0 the time coordinate.

use nalgebra::Matrix4;

use crate::eos::EquationOfState;
use crate::error::{Error, Result};
use crate::fields::{d1, d1_into, FluidState, Grid, ScalarField, D1_WEIGHTS};

pub type Vec4 = [f64; 4];
pub type Mat4 = [[f64; 4]; 4];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpacetimeMetric {
    pub g: Mat4,
    pub g_inv: Mat4,
    pub rho: f64,
    pub cs: f64,
    pub cs_prime: f64,
    pub v: [f64; 3],
}

/// The material derivative vectorfield `B = d_t + v^a d_a`.
pub fn material_vectorfield(v: [f64; 3]) -> Vec4 {
    [1.0, v[0], v[1], v[2]]
}

pub fn metric_at(eos: &EquationOfState, rho: f64, v: [f64; 3]) -> Result<SpacetimeMetric> {
    let cs = eos.sound_speed(rho)?;
    if !(cs > 0.0) {
        return Err(Error::NonHyperbolic {
            rho_log: rho,
            reason: "vanishing sound speed".into(),
        });
    }
    let cs_prime = eos.sound_speed_deriv(rho)?;
    Ok(build(rho, cs, cs_prime, v))
}

/// Metric from an already validated sound speed.
pub(crate) fn build(rho: f64, cs: f64, cs_prime: f64, v: [f64; 3]) -> SpacetimeMetric {
    let s = 1.0 / (cs * cs);
    let v2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
    let mut g = [[0.0; 4]; 4];
    g[0][0] = -1.0 + s * v2;
    for i in 0..3 {
        g[0][i + 1] = -s * v[i];
        g[i + 1][0] = -s * v[i];
        g[i + 1][i + 1] = s;
    }
    let b = material_vectorfield(v);
    let mut g_inv = [[0.0; 4]; 4];
    for a in 0..4 {
        for c in 0..4 {
            g_inv[a][c] = -b[a] * b[c];
        }
    }
    for i in 1..4 {
        g_inv[i][i] += cs * cs;
    }
    SpacetimeMetric {
        g,
        g_inv,
        rho,
        cs,
        cs_prime,
        v,
    }
}

impl SpacetimeMetric {
    pub fn b(&self) -> Vec4 {
        material_vectorfield(self.v)
    }

    /// `g(X, Y)` for vectors.
    pub fn inner(&self, x: &Vec4, y: &Vec4) -> f64 {
        let mut s = 0.0;
        for a in 0..4 {
            for c in 0..4 {
                s += self.g[a][c] * x[a] * y[c];
            }
        }
        s
    }

    /// `g^{-1}(w, z)` for covectors.
    pub fn inv_inner(&self, w: &Vec4, z: &Vec4) -> f64 {
        let mut s = 0.0;
        for a in 0..4 {
            for c in 0..4 {
                s += self.g_inv[a][c] * w[a] * z[c];
            }
        }
        s
    }

    /// Raises the index of a covector.
    pub fn raise(&self, w: &Vec4) -> Vec4 {
        let mut out = [0.0; 4];
        for a in 0..4 {
            for c in 0..4 {
                out[a] += self.g_inv[a][c] * w[c];
            }
        }
        out
    }

    pub fn lower(&self, x: &Vec4) -> Vec4 {
        let mut out = [0.0; 4];
        for a in 0..4 {
            for c in 0..4 {
                out[a] += self.g[a][c] * x[c];
            }
        }
        out
    }

    /// Closed-form determinant `-c_s^{-6}`.
    pub fn det_closed_form(&self) -> f64 {
        -self.cs.powi(-6)
    }

    /// Max-norm of `g g^{-1} - I`.
    pub fn inverse_defect(&self) -> f64 {
        let mut m = 0.0_f64;
        for a in 0..4 {
            for c in 0..4 {
                let mut s = 0.0;
                for k in 0..4 {
                    s += self.g_inv[a][k] * self.g[k][c];
                }
                let id = if a == c { 1.0 } else { 0.0 };
                m = m.max((s - id).abs());
            }
        }
        m
    }

    /// `g^{-1}` obtained by LU inversion, for cross-checking the closed form.
    pub fn inverse_by_lu(&self) -> Option<Mat4> {
        let m = Matrix4::from_fn(|a, c| self.g[a][c]);
        m.try_inverse()
            .map(|inv| std::array::from_fn(|a| std::array::from_fn(|c| inv[(a, c)])))
    }
}

/// Determinant of `g` computed numerically by LU factorisation.
pub fn det_metric(metric: &SpacetimeMetric) -> f64 {
    Matrix4::from_fn(|a, c| metric.g[a][c]).determinant()
}

/// First-order jet of the fluid state at a point; `drho[a]` and `dv[i][a]` are
/// Cartesian spacetime derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StateJet {
    pub rho: f64,
    pub v: [f64; 3],
    pub drho: Vec4,
    pub dv: [Vec4; 3],
}

impl StateJet {
    pub fn constant(rho: f64, v: [f64; 3]) -> Self {
        Self {
            rho,
            v,
            ..Default::default()
        }
    }

    pub fn div_v(&self) -> f64 {
        self.dv[0][1] + self.dv[1][2] + self.dv[2][3]
    }

    /// `B f` for a function with spacetime gradient `df`.
    pub fn apply_b(&self, df: &Vec4) -> f64 {
        df[0] + self.v[0] * df[1] + self.v[1] * df[2] + self.v[2] * df[3]
    }
}

/// Second-order jet of a scalar: `d[a]` and the symmetric Hessian `dd[a][b]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ScalarJet {
    pub value: f64,
    pub d: Vec4,
    pub dd: Mat4,
}

/// Cartesian derivatives `dg[a][m][n] = d_a g_{mn}` by the chain rule through `c_s(rho)`.
pub fn metric_derivatives(metric: &SpacetimeMetric, jet: &StateJet) -> [Mat4; 4] {
    let c = metric.cs;
    let s = 1.0 / (c * c);
    let v = jet.v;
    let v2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
    let mut dg = [[[0.0; 4]; 4]; 4];
    for a in 0..4 {
        let ds = -2.0 * metric.cs_prime / (c * c * c) * jet.drho[a];
        let vdv: f64 = (0..3).map(|i| v[i] * jet.dv[i][a]).sum();
        dg[a][0][0] = ds * v2 + 2.0 * s * vdv;
        for i in 0..3 {
            let x = -ds * v[i] - s * jet.dv[i][a];
            dg[a][0][i + 1] = x;
            dg[a][i + 1][0] = x;
            dg[a][i + 1][i + 1] = ds;
        }
    }
    dg
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChristoffelSymbols {
    /// `gamma[n][a][b] = Gamma^n_{ab}`.
    pub gamma: [Mat4; 4],
}

impl ChristoffelSymbols {
    /// `Gamma^n(X, Y) = Gamma^n_{ab} X^a Y^b`.
    pub fn contract(&self, n: usize, x: &Vec4, y: &Vec4) -> f64 {
        let mut s = 0.0;
        for a in 0..4 {
            for b in 0..4 {
                s += self.gamma[n][a][b] * x[a] * y[b];
            }
        }
        s
    }
}

pub fn christoffel(metric: &SpacetimeMetric, dg: &[Mat4; 4]) -> ChristoffelSymbols {
    let mut lower = [[[0.0; 4]; 4]; 4]; // Gamma_{s a b}
    for s in 0..4 {
        for a in 0..4 {
            for b in 0..4 {
                lower[s][a][b] = 0.5 * (dg[a][s][b] + dg[b][s][a] - dg[s][a][b]);
            }
        }
    }
    let mut gamma = [[[0.0; 4]; 4]; 4];
    for n in 0..4 {
        for a in 0..4 {
            for b in 0..4 {
                let mut x = 0.0;
                for s in 0..4 {
                    x += metric.g_inv[n][s] * lower[s][a][b];
                }
                gamma[n][a][b] = x;
            }
        }
    }
    ChristoffelSymbols { gamma }
}

/// Max-norm of `d_a g_{mn} - Gamma^s_{am} g_{sn} - Gamma^s_{an} g_{ms}`.
pub fn metricity_defect(metric: &SpacetimeMetric, dg: &[Mat4; 4], chr: &ChristoffelSymbols) -> f64 {
    let mut m = 0.0_f64;
    for a in 0..4 {
        for mu in 0..4 {
            for nu in 0..4 {
                let mut x = dg[a][mu][nu];
                for s in 0..4 {
                    x -= chr.gamma[s][a][mu] * metric.g[s][nu] + chr.gamma[s][a][nu] * metric.g[mu][s];
                }
                m = m.max(x.abs());
            }
        }
    }
    m
}

/// Covariant wave operator written out in Cartesian coordinates:
/// `-BB phi + c^2 lap phi + 2 c'/c (B rho) B phi - (div v) B phi - c'/c g^{-1}(d rho, d phi)`.
pub fn wave_operator_cartesian(eos: &EquationOfState, phi: &ScalarJet, state: &StateJet) -> Result<f64> {
    let m = metric_at(eos, state.rho, state.v)?;
    Ok(wave_operator_cartesian_with(&m, phi, state))
}

pub(crate) fn wave_operator_cartesian_with(m: &SpacetimeMetric, phi: &ScalarJet, st: &StateJet) -> f64 {
    let b = m.b();
    let mut bb = 0.0;
    for a in 0..4 {
        for c in 0..4 {
            bb += b[a] * b[c] * phi.dd[a][c];
        }
    }
    // (B v^b) d_b phi
    for i in 0..3 {
        bb += st.apply_b(&st.dv[i]) * phi.d[i + 1];
    }
    let lap = phi.dd[1][1] + phi.dd[2][2] + phi.dd[3][3];
    let b_phi = st.apply_b(&phi.d);
    let b_rho = st.apply_b(&st.drho);
    let r = m.cs_prime / m.cs;
    -bb + m.cs * m.cs * lap + 2.0 * r * b_rho * b_phi - st.div_v() * b_phi - r * m.inv_inner(&st.drho, &phi.d)
}

/// Which metric the divergence-form operator is built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WaveMetric {
    /// The acoustical metric `g`.
    Acoustical,
    /// The conformal metric `exp(rho) c_s g`.
    Conformal,
}

/// Fourth-order weights of the centred first time derivative.
pub(crate) fn time_d1(fs: &[&[f64]; 5], dt: f64, out: &mut [f64]) {
    let s = 1.0 / (12.0 * dt);
    for p in 0..out.len() {
        let mut x = 0.0;
        for k in 0..5 {
            x += D1_WEIGHTS[k] * fs[k][p];
        }
        out[p] = s * x;
    }
}

/// `(1/sqrt|det g|) d_a (sqrt|det g| g^{ab} d_b phi)` over a window of nine
/// consecutive snapshots spaced by `dt`; the result is for the centre snapshot.
pub fn wave_operator_divergence_form(
    eos: &EquationOfState,
    grid: &Grid,
    dt: f64,
    states: &[FluidState],
    phi: &[&[f64]],
    which: WaveMetric,
) -> Result<ScalarField> {
    grid.check_stencil()?;
    if states.len() < 9 || phi.len() < 9 {
        return Err(Error::InsufficientSnapshots {
            center: 4,
            needed: 9,
            available: states.len().min(phi.len()),
        });
    }
    let n = grid.len();
    // Time flux F^0 = -Omega c^{-3} B phi at snapshots 2..=6.
    let mut f0: Vec<ScalarField> = Vec::with_capacity(5);
    let mut dphi = grid.zeros();
    let mut tmp = grid.zeros();
    let mut center_flux = None;
    for k in 2..=6 {
        let st = &states[k];
        let win: [&[f64]; 5] = std::array::from_fn(|m| phi[k - 2 + m]);
        time_d1(&win, dt, &mut dphi);
        let mut grads = [grid.zeros(), grid.zeros(), grid.zeros()];
        for a in 0..3 {
            if grid.is_active(a) {
                d1_into(grid, phi[k], a, &mut tmp);
                grads[a].copy_from_slice(&tmp);
            }
        }
        let mut f0k = grid.zeros();
        let mut bphi = grid.zeros();
        for p in 0..n {
            let c = eos.cs(st.rho[p]);
            let omega = match which {
                WaveMetric::Acoustical => 1.0,
                WaveMetric::Conformal => st.rho[p].exp() * c,
            };
            bphi[p] = dphi[p] + st.v[0][p] * grads[0][p] + st.v[1][p] * grads[1][p] + st.v[2][p] * grads[2][p];
            f0k[p] = -omega * bphi[p] / (c * c * c);
        }
        if k == 4 {
            let mut fa = grid.zeros3();
            for a in 0..3 {
                for p in 0..n {
                    let c = eos.cs(st.rho[p]);
                    let omega = match which {
                        WaveMetric::Acoustical => 1.0,
                        WaveMetric::Conformal => st.rho[p].exp() * c,
                    };
                    fa[a][p] = omega * (-st.v[a][p] * bphi[p] / (c * c * c) + grads[a][p] / c);
                }
            }
            center_flux = Some(fa);
        }
        f0.push(f0k);
    }
    let win: [&[f64]; 5] = std::array::from_fn(|m| f0[m].as_slice());
    let mut out = grid.zeros();
    time_d1(&win, dt, &mut out);
    let fa = center_flux.expect("centre flux computed");
    for a in 0..3 {
        if grid.is_active(a) {
            let d = d1(grid, &fa[a], a);
            out.iter_mut().zip(&d).for_each(|(o, x)| *o += x);
        }
    }
    let st = &states[4];
    for p in 0..n {
        let c = eos.cs(st.rho[p]);
        let omega = match which {
            WaveMetric::Acoustical => 1.0,
            WaveMetric::Conformal => st.rho[p].exp() * c,
        };
        out[p] *= c * c * c / (omega * omega);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn eos() -> EquationOfState {
        EquationOfState::normalized_polytropic(2.0)
    }

    #[test]
    fn minkowski_reduction() {
        let m = metric_at(&eos(), 0.0, [0.0; 3]).unwrap();
        for a in 0..4 {
            for c in 0..4 {
                let expect = if a != c {
                    0.0
                } else if a == 0 {
                    -1.0
                } else {
                    1.0
                };
                assert_eq!(m.g[a][c], expect);
                assert_eq!(m.g_inv[a][c], expect);
            }
        }
    }

    #[test]
    fn b_is_unit_timelike() {
        let m = metric_at(&eos(), 0.0, [0.1, 0.0, 0.0]).unwrap();
        assert!((m.inner(&m.b(), &m.b()) + 1.0).abs() < 1e-15);
        assert_eq!(m.g_inv[0][0], -1.0);
    }

    #[test]
    fn determinant_values() {
        let m = metric_at(&eos(), 0.0, [0.3, -0.2, 0.1]).unwrap();
        assert!((det_metric(&m) + 1.0).abs() < 1e-14);
        // c_s = 2 at rho = ln 4 for gamma = 2
        let m = metric_at(&eos(), 4f64.ln(), [0.1, 0.2, 0.3]).unwrap();
        assert!((det_metric(&m) + 1.0 / 64.0).abs() < 1e-15);
        assert!((m.det_closed_form() + 1.0 / 64.0).abs() < 1e-16);
    }

    #[test]
    fn lu_inverse_agrees_with_closed_form() {
        let m = metric_at(&eos(), 0.4, [0.3, -0.2, 0.1]).unwrap();
        let inv = m.inverse_by_lu().unwrap();
        for a in 0..4 {
            for c in 0..4 {
                assert!((inv[a][c] - m.g_inv[a][c]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn christoffel_vanishes_for_constant_state() {
        let m = metric_at(&eos(), 0.2, [0.1, 0.2, 0.0]).unwrap();
        let jet = StateJet::constant(0.2, [0.1, 0.2, 0.0]);
        let chr = christoffel(&m, &metric_derivatives(&m, &jet));
        assert!(chr.gamma.iter().flatten().flatten().all(|x| *x == 0.0));
    }

    #[test]
    fn wave_operator_simple_values() {
        let jet = StateJet::constant(0.0, [0.0; 3]);
        // phi = t
        let mut phi = ScalarJet::default();
        phi.d[0] = 1.0;
        assert_eq!(wave_operator_cartesian(&eos(), &phi, &jet).unwrap(), 0.0);
        // phi = (x1)^2 at the origin
        let mut phi = ScalarJet::default();
        phi.dd[1][1] = 2.0;
        assert_eq!(wave_operator_cartesian(&eos(), &phi, &jet).unwrap(), 2.0);
    }

    fn jet_strategy() -> impl Strategy<Value = (f64, [f64; 3], Vec4, [Vec4; 3])> {
        (
            -1.0..1.0f64,
            prop::array::uniform3(-0.3..0.3f64),
            prop::array::uniform4(-1.0..1.0f64),
            prop::array::uniform3(prop::array::uniform4(-1.0..1.0f64)),
        )
    }

    proptest! {
        #[test]
        fn christoffel_symmetric_and_metric_compatible((rho, v, drho, dv) in jet_strategy()) {
            let e = EquationOfState::normalized_polytropic(1.4);
            let m = metric_at(&e, rho, v).unwrap();
            let jet = StateJet { rho, v, drho, dv };
            let dg = metric_derivatives(&m, &jet);
            let chr = christoffel(&m, &dg);
            for n in 0..4 { for a in 0..4 { for b in 0..4 {
                prop_assert!((chr.gamma[n][a][b] - chr.gamma[n][b][a]).abs() < 1e-14);
            }}}
            prop_assert!(metricity_defect(&m, &dg, &chr) < 1e-12);
        }

        #[test]
        fn b_orthogonal_to_spatial_slices(rho in -1.0..1.0f64, v in prop::array::uniform3(-0.5..0.5f64)) {
            let m = metric_at(&eos(), rho, v).unwrap();
            let b = m.b();
            for i in 1..4 {
                let mut e = [0.0; 4];
                e[i] = 1.0;
                prop_assert!(m.inner(&b, &e).abs() < 1e-14);
            }
            prop_assert!((m.inner(&b, &b) + 1.0).abs() < 1e-13);
        }
    }

    /// The chain-rule metric derivatives agree with centred differences of `g`.
    #[test]
    fn metric_derivatives_match_differences() {
        let e = eos();
        let base = StateJet {
            rho: 0.2,
            v: [0.1, -0.2, 0.05],
            drho: [0.3, -0.1, 0.4, 0.2],
            dv: [[0.1, 0.2, -0.3, 0.0], [0.5, -0.1, 0.2, 0.1], [-0.2, 0.3, 0.1, -0.4]],
        };
        let m = metric_at(&e, base.rho, base.v).unwrap();
        let dg = metric_derivatives(&m, &base);
        let h = 1e-5;
        for a in 0..4 {
            let at = |s: f64| {
                let rho = base.rho + s * base.drho[a];
                let v = std::array::from_fn(|i| base.v[i] + s * base.dv[i][a]);
                metric_at(&e, rho, v).unwrap().g
            };
            let (gp, gm) = (at(h), at(-h));
            for mu in 0..4 {
                for nu in 0..4 {
                    let fd = (gp[mu][nu] - gm[mu][nu]) / (2.0 * h);
                    assert!((fd - dg[a][mu][nu]).abs() < 1e-8);
                }
            }
        }
    }
}
