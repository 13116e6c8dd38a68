//! Null frames of the acoustical metric, expansion of Cartesian derivatives
//! in such frames, and the strong null condition for the derivative-quadratic
//! terms of the geometric formulation.
//!
//! Frame vectors are indexed `0..4` as `(e_1, e_2, Lbar, L)`, i.e. `e_3 = Lbar`
//! sits at index 2 and `e_4 = L` at index 3. Solution variables are indexed
//! `0..7` as `(rho, v^1, v^2, v^3, varpi^1, varpi^2, varpi^3)`.

use nalgebra::Matrix4;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::eos::EquationOfState;
use crate::error::{Error, Result};
use crate::fields::eps0;
use crate::metric::{self, SpacetimeMetric, Vec4};

/// Index of `Lbar` among the frame vectors.
pub const LBAR: usize = 2;
/// Index of `L` among the frame vectors.
pub const L: usize = 3;
/// Number of solution variables `(rho, v, varpi)`.
pub const NVARS: usize = 7;

const MAX_FRAME_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NullFrame {
    pub e: [Vec4; 4],
    pub metric: SpacetimeMetric,
}

impl NullFrame {
    pub fn l(&self) -> Vec4 {
        self.e[L]
    }

    pub fn lbar(&self) -> Vec4 {
        self.e[LBAR]
    }

    /// `e_A f` for a function with spacetime gradient `df`.
    pub fn derivative(&self, a: usize, df: &Vec4) -> f64 {
        (0..4).map(|m| self.e[a][m] * df[m]).sum()
    }
}

fn orthonormal_complement(n: [f64; 3]) -> ([f64; 3], [f64; 3]) {
    let k = (0..3)
        .min_by(|&a, &b| n[a].abs().total_cmp(&n[b].abs()))
        .unwrap_or(0);
    let mut a = [0.0; 3];
    a[k] = 1.0;
    let d = a[0] * n[0] + a[1] * n[1] + a[2] * n[2];
    let mut m1 = [a[0] - d * n[0], a[1] - d * n[1], a[2] - d * n[2]];
    let s = (m1[0] * m1[0] + m1[1] * m1[1] + m1[2] * m1[2]).sqrt();
    m1.iter_mut().for_each(|x| *x /= s);
    let m2 = [
        n[1] * m1[2] - n[2] * m1[1],
        n[2] * m1[0] - n[0] * m1[2],
        n[0] * m1[1] - n[1] * m1[0],
    ];
    (m1, m2)
}

/// `L = B + c_s n`, `Lbar = B - c_s n`, `e_A = c_s m_A` with `(m_1, m_2, n)` Euclidean orthonormal.
pub fn canonical_null_frame(metric: &SpacetimeMetric, n: [f64; 3]) -> Result<NullFrame> {
    let c = metric.cs;
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::NonHyperbolic {
            rho_log: metric.rho,
            reason: format!("sound speed {c}"),
        });
    }
    let norm = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
    if (norm - 1.0).abs() > 1e-12 {
        return Err(Error::Config(format!("direction must be a Euclidean unit vector, |n| = {norm}")));
    }
    let (m1, m2) = if n == [1.0, 0.0, 0.0] {
        ([0.0, 1.0, 0.0], [0.0, 0.0, 1.0])
    } else {
        orthonormal_complement(n)
    };
    let v = metric.v;
    let l = [1.0, v[0] + c * n[0], v[1] + c * n[1], v[2] + c * n[2]];
    let lbar = [1.0, v[0] - c * n[0], v[1] - c * n[1], v[2] - c * n[2]];
    let e1 = [0.0, c * m1[0], c * m1[1], c * m1[2]];
    let e2 = [0.0, c * m2[0], c * m2[1], c * m2[2]];
    Ok(NullFrame {
        e: [e1, e2, lbar, l],
        metric: *metric,
    })
}

/// Parameters of a frame change from the canonical frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameChange {
    /// Boost `L -> a L`, `Lbar -> Lbar / a`.
    pub boost: f64,
    /// Rotation angle in the `(e_1, e_2)` plane.
    pub angle: f64,
    /// Null rotation about `L`.
    pub q: [f64; 2],
}

impl FrameChange {
    pub const IDENTITY: Self = Self {
        boost: 1.0,
        angle: 0.0,
        q: [0.0, 0.0],
    };
}

/// Applies rotation, null rotation about `L` and boost, in that order.
pub fn transform_frame(frame: &NullFrame, ch: &FrameChange) -> NullFrame {
    let [e1, e2, lbar, l] = frame.e;
    let (s, c) = ch.angle.sin_cos();
    let r1: Vec4 = std::array::from_fn(|m| c * e1[m] + s * e2[m]);
    let r2: Vec4 = std::array::from_fn(|m| -s * e1[m] + c * e2[m]);
    let [q1, q2] = ch.q;
    let qq = q1 * q1 + q2 * q2;
    let n1: Vec4 = std::array::from_fn(|m| r1[m] + q1 * l[m]);
    let n2: Vec4 = std::array::from_fn(|m| r2[m] + q2 * l[m]);
    let nlbar: Vec4 = std::array::from_fn(|m| lbar[m] + 2.0 * (q1 * r1[m] + q2 * r2[m]) + qq * l[m]);
    let a = ch.boost;
    NullFrame {
        e: [
            n1,
            n2,
            std::array::from_fn(|m| nlbar[m] / a),
            std::array::from_fn(|m| a * l[m]),
        ],
        metric: frame.metric,
    }
}

fn random_unit_vector(rng: &mut impl Rng) -> [f64; 3] {
    loop {
        let x: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
        let r2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
        if r2 > 1e-4 && r2 <= 1.0 {
            let r = r2.sqrt();
            return [x[0] / r, x[1] / r, x[2] / r];
        }
    }
}

/// A random frame change: log-uniform boost in `[1/4, 4]`, uniform angle, `q_A` in `[-1, 1]`.
pub fn random_frame_change(rng: &mut impl Rng) -> FrameChange {
    FrameChange {
        boost: 4f64.powf(rng.gen_range(-1.0..=1.0)),
        angle: rng.gen_range(0.0..std::f64::consts::TAU),
        q: [rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0)],
    }
}

/// A random null frame drawn from `rng` (random direction and frame change).
pub fn random_null_frame_with(metric: &SpacetimeMetric, rng: &mut impl Rng) -> Result<NullFrame> {
    let n = random_unit_vector(rng);
    let base = canonical_null_frame(metric, n)?;
    Ok(transform_frame(&base, &random_frame_change(rng)))
}

/// Reproducible random null frame.
pub fn random_null_frame(metric: &SpacetimeMetric, seed: u64) -> Result<NullFrame> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_null_frame_with(metric, &mut rng)
}

/// A random admissible state: `rho` in `[-1, 1]`, `|v| <= 0.5`, polytropic `gamma` in `{1.4, 2, 3}`.
pub fn random_admissible_metric(rng: &mut impl Rng) -> Result<(EquationOfState, SpacetimeMetric)> {
    let gamma = [1.4, 2.0, 3.0][rng.gen_range(0..3)];
    let eos = EquationOfState::normalized_polytropic(gamma);
    let rho = rng.gen_range(-1.0..=1.0);
    let dir = random_unit_vector(rng);
    let speed = 0.5 * rng.gen::<f64>().cbrt();
    let v = [speed * dir[0], speed * dir[1], speed * dir[2]];
    Ok((eos, metric::metric_at(&eos, rho, v)?))
}

/// Residuals of the six normalisation conditions of a null frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FrameResiduals {
    pub l_null: f64,
    pub lbar_null: f64,
    pub l_lbar: f64,
    pub l_e: f64,
    pub lbar_e: f64,
    pub e_e: f64,
}

impl FrameResiduals {
    pub fn max(&self) -> f64 {
        [self.l_null, self.lbar_null, self.l_lbar, self.l_e, self.lbar_e, self.e_e]
            .into_iter()
            .fold(0.0, f64::max)
    }
}

pub fn verify_frame(frame: &NullFrame) -> FrameResiduals {
    let g = |a: usize, b: usize| frame.metric.inner(&frame.e[a], &frame.e[b]);
    let mut r = FrameResiduals {
        l_null: g(L, L).abs(),
        lbar_null: g(LBAR, LBAR).abs(),
        l_lbar: (g(L, LBAR) + 2.0).abs(),
        l_e: 0.0,
        lbar_e: 0.0,
        e_e: 0.0,
    };
    for a in 0..2 {
        r.l_e = r.l_e.max(g(L, a).abs());
        r.lbar_e = r.lbar_e.max(g(LBAR, a).abs());
        for b in 0..2 {
            let d = if a == b { 1.0 } else { 0.0 };
            r.e_e = r.e_e.max((g(a, b) - d).abs());
        }
    }
    r
}

/// `max |g^{-1} - (-1/2 L (x) Lbar - 1/2 Lbar (x) L + sum_A e_A (x) e_A)|`.
pub fn verify_inverse_metric_decomposition(frame: &NullFrame) -> f64 {
    let (l, lb) = (frame.l(), frame.lbar());
    let mut worst = 0.0_f64;
    for m in 0..4 {
        for n in 0..4 {
            let mut d = -0.5 * l[m] * lb[n] - 0.5 * lb[m] * l[n];
            for a in 0..2 {
                d += frame.e[a][m] * frame.e[a][n];
            }
            worst = worst.max((frame.metric.g_inv[m][n] - d).abs());
        }
    }
    worst
}

/// Coefficients of `d_alpha = sum_A M[alpha][A] e_A` and `B = sum_A beta[A] e_A`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FrameExpansion {
    pub m: [[f64; 4]; 4],
    pub beta: [f64; 4],
    pub condition: f64,
}

impl FrameExpansion {
    /// `max_alpha |sum_A M_alpha^A e_A - d_alpha|`.
    pub fn reconstruction_error(&self, frame: &NullFrame) -> f64 {
        let mut worst = 0.0_f64;
        for alpha in 0..4 {
            for mu in 0..4 {
                let s: f64 = (0..4).map(|a| self.m[alpha][a] * frame.e[a][mu]).sum();
                let target = if mu == alpha { 1.0 } else { 0.0 };
                worst = worst.max((s - target).abs());
            }
        }
        let b = metric::material_vectorfield(frame.metric.v);
        for mu in 0..4 {
            let s: f64 = (0..4).map(|a| self.beta[a] * frame.e[a][mu]).sum();
            worst = worst.max((s - b[mu]).abs());
        }
        worst
    }
}

pub fn frame_expansion(frame: &NullFrame) -> Result<FrameExpansion> {
    let e = Matrix4::from_fn(|mu, a| frame.e[a][mu]);
    let sv = e.singular_values();
    let condition = sv.max() / sv.min();
    if !(condition < MAX_FRAME_CONDITION) {
        return Err(Error::SingularFrame { condition });
    }
    let inv = e.try_inverse().ok_or(Error::SingularFrame { condition })?;
    let m = std::array::from_fn(|alpha| std::array::from_fn(|a| inv[(a, alpha)]));
    let b = metric::material_vectorfield(frame.metric.v);
    let beta = std::array::from_fn(|a| (0..4).map(|mu| inv[(a, mu)] * b[mu]).sum());
    Ok(FrameExpansion { m, beta, condition })
}

/// `f^{ab}_{TG} d_a V^T d_b V^G + l^a_T d_a V^T`, with `f` stored symmetrised so that
/// `f^{ab}_{TG} = f^{ba}_{GT}`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticNonlinearity {
    pub quad: Box<[[[[f64; NVARS]; NVARS]; 4]; 4]>,
    pub linear: [[f64; NVARS]; 4],
}

impl Default for QuadraticNonlinearity {
    fn default() -> Self {
        Self {
            quad: Box::new([[[[0.0; NVARS]; NVARS]; 4]; 4]),
            linear: [[0.0; NVARS]; 4],
        }
    }
}

impl QuadraticNonlinearity {
    /// Adds `k d_a V^T d_b V^G` (split symmetrically).
    pub fn add(&mut self, a: usize, t: usize, b: usize, g: usize, k: f64) {
        self.quad[a][b][t][g] += 0.5 * k;
        self.quad[b][a][g][t] += 0.5 * k;
    }

    /// Direct Cartesian value; `dv[T][a] = d_a V^T`.
    pub fn evaluate(&self, dv: &[Vec4; NVARS]) -> f64 {
        let mut s = 0.0;
        for a in 0..4 {
            for t in 0..NVARS {
                s += self.linear[a][t] * dv[t][a];
                for b in 0..4 {
                    for g in 0..NVARS {
                        s += self.quad[a][b][t][g] * dv[t][a] * dv[g][b];
                    }
                }
            }
        }
        s
    }

    pub fn symmetry_defect(&self) -> f64 {
        let mut w = 0.0_f64;
        for a in 0..4 {
            for b in 0..4 {
                for t in 0..NVARS {
                    for g in 0..NVARS {
                        w = w.max((self.quad[a][b][t][g] - self.quad[b][a][g][t]).abs());
                    }
                }
            }
        }
        w
    }
}

/// Frame coefficients `c[A][B][T][G] = f^{ab}_{TG} M_a^A M_b^B` and reassembled values.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub coeff: Box<[[[[f64; NVARS]; NVARS]; 4]; 4]>,
    pub linear: [[f64; NVARS]; 4],
    pub value_frame: f64,
    pub value_cartesian: f64,
}

impl Decomposition {
    /// Largest coefficient multiplying `(L V)(L V)` or `(Lbar V)(Lbar V)`.
    pub fn max_diagonal(&self) -> f64 {
        let mut w = 0.0_f64;
        for a in [LBAR, L] {
            for t in 0..NVARS {
                for g in 0..NVARS {
                    w = w.max(self.coeff[a][a][t][g].abs());
                }
            }
        }
        w
    }
}

pub fn decompose_nonlinearity(
    n: &QuadraticNonlinearity,
    frame: &NullFrame,
    exp: &FrameExpansion,
    dv: &[Vec4; NVARS],
) -> Decomposition {
    let mut coeff = Box::new([[[[0.0; NVARS]; NVARS]; 4]; 4]);
    for fa in 0..4 {
        for fb in 0..4 {
            for al in 0..4 {
                let ma = exp.m[al][fa];
                if ma == 0.0 {
                    continue;
                }
                for be in 0..4 {
                    let mab = ma * exp.m[be][fb];
                    if mab == 0.0 {
                        continue;
                    }
                    for t in 0..NVARS {
                        for g in 0..NVARS {
                            coeff[fa][fb][t][g] += n.quad[al][be][t][g] * mab;
                        }
                    }
                }
            }
        }
    }
    let mut linear = [[0.0; NVARS]; 4];
    for fa in 0..4 {
        for t in 0..NVARS {
            linear[fa][t] = (0..4).map(|al| n.linear[al][t] * exp.m[al][fa]).sum();
        }
    }
    let ev: Vec<[f64; 4]> = dv
        .iter()
        .map(|d| std::array::from_fn(|a| frame.derivative(a, d)))
        .collect();
    let mut value_frame = 0.0;
    for fa in 0..4 {
        for t in 0..NVARS {
            value_frame += linear[fa][t] * ev[t][fa];
            for fb in 0..4 {
                for g in 0..NVARS {
                    value_frame += coeff[fa][fb][t][g] * ev[t][fa] * ev[g][fb];
                }
            }
        }
    }
    Decomposition {
        coeff,
        linear,
        value_frame,
        value_cartesian: n.evaluate(dv),
    }
}

/// `Q^g(d V^T, d V^G) = g^{ab} d_a V^T d_b V^G`.
pub fn standard_form_g(metric: &SpacetimeMetric, t: usize, g: usize) -> QuadraticNonlinearity {
    let mut q = QuadraticNonlinearity::default();
    for a in 0..4 {
        for b in 0..4 {
            q.add(a, t, b, g, metric.g_inv[a][b]);
        }
    }
    q
}

/// `Q_(ab)(d V^T, d V^G) = d_a V^T d_b V^G - d_b V^T d_a V^G`.
pub fn standard_form_antisym(a: usize, b: usize, t: usize, g: usize) -> QuadraticNonlinearity {
    let mut q = QuadraticNonlinearity::default();
    q.add(a, t, b, g, 1.0);
    q.add(b, t, a, g, -1.0);
    q
}

/// `(d_t V^T)^2`, which is not a null form.
pub fn time_derivative_squared(t: usize) -> QuadraticNonlinearity {
    let mut q = QuadraticNonlinearity::default();
    q.add(0, t, 0, t, 1.0);
    q
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StandardFormReport {
    pub samples: usize,
    pub max_diagonal_g: f64,
    pub max_diagonal_antisym: f64,
    /// Smallest (over samples) largest diagonal coefficient of `(d_t rho)^2`.
    pub control_min_diagonal: f64,
    pub max_reassembly_error: f64,
}

/// Diagonal frame coefficients of every standard null form over the given frames.
pub fn strong_null_check_standard_forms(frames: &[NullFrame]) -> Result<StandardFormReport> {
    let mut rep = StandardFormReport {
        samples: frames.len(),
        max_diagonal_g: 0.0,
        max_diagonal_antisym: 0.0,
        control_min_diagonal: f64::INFINITY,
        max_reassembly_error: 0.0,
    };
    let dv = [[0.3, -0.7, 0.2, 0.5]; NVARS];
    let pairs = [(0, 0), (0, 1), (1, 2), (2, 5), (4, 6), (3, 3)];
    for frame in frames {
        let exp = frame_expansion(frame)?;
        for &(t, g) in &pairs {
            let d = decompose_nonlinearity(&standard_form_g(&frame.metric, t, g), frame, &exp, &dv);
            rep.max_diagonal_g = rep.max_diagonal_g.max(d.max_diagonal());
            rep.max_reassembly_error = rep.max_reassembly_error.max(relative_gap(&d));
            for a in 0..4 {
                for b in a + 1..4 {
                    let d = decompose_nonlinearity(&standard_form_antisym(a, b, t, g), frame, &exp, &dv);
                    rep.max_diagonal_antisym = rep.max_diagonal_antisym.max(d.max_diagonal());
                    rep.max_reassembly_error = rep.max_reassembly_error.max(relative_gap(&d));
                }
            }
        }
        let d = decompose_nonlinearity(&time_derivative_squared(0), frame, &exp, &dv);
        rep.control_min_diagonal = rep.control_min_diagonal.min(d.max_diagonal());
    }
    Ok(rep)
}

fn relative_gap(d: &Decomposition) -> f64 {
    (d.value_frame - d.value_cartesian).abs() / d.value_cartesian.abs().max(1.0)
}

/// First-order jets of `v` and `varpi` at a point; `dv[i][a] = d_a v^i`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct VorticityJet {
    pub v: [f64; 3],
    pub dv: [Vec4; 3],
    pub varpi: [f64; 3],
    pub dvarpi: [Vec4; 3],
}

impl VorticityJet {
    /// `r^i = B varpi^i - varpi^a d_a v^i`.
    pub fn transport_residual(&self) -> [f64; 3] {
        std::array::from_fn(|i| {
            let b = self.dvarpi[i][0] + (0..3).map(|a| self.v[a] * self.dvarpi[i][a + 1]).sum::<f64>();
            b - (0..3).map(|a| self.varpi[a] * self.dv[i][a + 1]).sum::<f64>()
        })
    }

    /// Sets `d_t varpi` so that the transport residual equals `r`.
    pub fn with_transport_residual(mut self, r: [f64; 3]) -> Self {
        for i in 0..3 {
            let stretch: f64 = (0..3).map(|a| self.varpi[a] * self.dv[i][a + 1]).sum();
            let adv: f64 = (0..3).map(|a| self.v[a] * self.dvarpi[i][a + 1]).sum();
            self.dvarpi[i][0] = stretch + r[i] - adv;
        }
        self
    }
}

/// `P^i = eps_{iab} [(d_a varpi^c) d_c v^b - (d_a v^c) d_c varpi^b]` from spatial jets.
pub fn p_omega_value(jet: &VorticityJet) -> [f64; 3] {
    std::array::from_fn(|i| {
        let mut s = 0.0;
        for a in 0..3 {
            for b in 0..3 {
                let e = eps0(i, a, b);
                if e == 0.0 {
                    continue;
                }
                for c in 0..3 {
                    s += e * (jet.dvarpi[c][a + 1] * jet.dv[b][c + 1] - jet.dv[c][a + 1] * jet.dvarpi[b][c + 1]);
                }
            }
        }
        s
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct POmegaDefect {
    /// Per component: exceptional diagonal part minus its on-shell tangential rewrite.
    pub defect: [f64; 3],
    pub max_defect: f64,
    /// The exceptional (diagonal) part of `P(varpi)` before substitution.
    pub exceptional: [f64; 3],
    pub transport_residual: f64,
    /// A frame-computable `C` with `|defect| <= C |r| max|e_A v|`.
    pub bound_constant: f64,
}

/// Runs the substitution argument for `P(varpi)`: its `(e_A varpi)(e_A v)` part with
/// `A` in `{Lbar, L}` is rewritten through `e_A = (B - sum_{B != A} beta^B e_B) / beta^A`
/// and the on-shell replacement `B varpi = varpi^d d_d v`. What remains after removing
/// all terms with a tangential factor is returned; it vanishes on solutions.
pub fn strong_null_check_p_omega(frame: &NullFrame, exp: &FrameExpansion, jet: &VorticityJet) -> Result<POmegaDefect> {
    if !(exp.beta[LBAR] * exp.beta[L]).is_finite() || (exp.beta[LBAR] * exp.beta[L]).abs() < 1e-14 {
        return Err(Error::SingularFrame {
            condition: f64::INFINITY,
        });
    }
    // Frame derivatives ev[c][A] = e_A v^c, ew[c][A] = e_A varpi^c.
    let ev: [[f64; 4]; 3] = std::array::from_fn(|c| std::array::from_fn(|a| frame.derivative(a, &jet.dv[c])));
    let ew: [[f64; 4]; 3] = std::array::from_fn(|c| std::array::from_fn(|a| frame.derivative(a, &jet.dvarpi[c])));
    let m = &exp.m;
    let beta = &exp.beta;
    let mut out = POmegaDefect {
        defect: [0.0; 3],
        max_defect: 0.0,
        exceptional: [0.0; 3],
        transport_residual: 0.0,
        bound_constant: 0.0,
    };
    let r = jet.transport_residual();
    out.transport_residual = r.iter().map(|x| x * x).sum::<f64>().sqrt();
    for i in 0..3 {
        let mut exceptional = 0.0;
        let mut tangential = 0.0;
        for fa in [LBAR, L] {
            // On-shell B varpi^c with the e_A v^c part removed.
            let w_rest: [f64; 3] = std::array::from_fn(|c| {
                (0..3)
                    .map(|d| {
                        jet.varpi[d] * (0..4).filter(|&fb| fb != fa).map(|fb| m[d + 1][fb] * ev[c][fb]).sum::<f64>()
                    })
                    .sum()
            });
            let tang_w: [f64; 3] = std::array::from_fn(|c| {
                (0..4).filter(|&fb| fb != fa).map(|fb| beta[fb] * ew[c][fb]).sum::<f64>()
            });
            for a in 0..3 {
                for b in 0..3 {
                    let e = eps0(i, a, b);
                    if e == 0.0 {
                        continue;
                    }
                    for c in 0..3 {
                        let k = e * m[a + 1][fa] * m[c + 1][fa];
                        exceptional += k * (ew[c][fa] * ev[b][fa] - ev[c][fa] * ew[b][fa]);
                        tangential += k / beta[fa]
                            * ((w_rest[c] - tang_w[c]) * ev[b][fa] - ev[c][fa] * (w_rest[b] - tang_w[b]));
                        out.bound_constant += 2.0 * (k / beta[fa]).abs();
                    }
                }
            }
        }
        out.exceptional[i] = exceptional;
        out.defect[i] = exceptional - tangential;
        out.max_defect = out.max_defect.max(out.defect[i].abs());
    }
    Ok(out)
}

/// How a term of the geometric formulation meets the strong null condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NullClassification {
    /// A combination of standard null forms; diagonal coefficients vanish identically.
    OffShellNull,
    /// At most linear in derivatives.
    DerivativeLinear,
    /// Null only after substituting the vorticity transport equation.
    OnShellNull,
}

/// Builds the `component`-th entry of a catalogued term from the metric context and `varpi`.
pub type NonlinearityBuilder = fn(&SpacetimeMetric, &[f64; 3], usize) -> QuadraticNonlinearity;

#[derive(Debug, Clone, Copy)]
pub struct CatalogEntry {
    pub name: &'static str,
    pub classification: NullClassification,
    pub components: usize,
    pub build: NonlinearityBuilder,
}

const RHO: usize = 0;
const fn vel(i: usize) -> usize {
    1 + i
}
const fn vort(i: usize) -> usize {
    4 + i
}

fn q_velocity(m: &SpacetimeMetric, _w: &[f64; 3], i: usize) -> QuadraticNonlinearity {
    let k = -(1.0 + m.cs_prime / m.cs);
    let mut q = QuadraticNonlinearity::default();
    for a in 0..4 {
        for b in 0..4 {
            q.add(a, RHO, b, vel(i), k * m.g_inv[a][b]);
        }
    }
    q
}

fn q_density(m: &SpacetimeMetric, _w: &[f64; 3], _i: usize) -> QuadraticNonlinearity {
    let k = -3.0 * m.cs_prime / m.cs;
    let mut q = QuadraticNonlinearity::default();
    for a in 0..4 {
        for b in 0..4 {
            q.add(a, RHO, b, RHO, k * m.g_inv[a][b]);
        }
    }
    for a in 0..3 {
        for b in a + 1..3 {
            q.add(a + 1, vel(a), b + 1, vel(b), 2.0);
            q.add(a + 1, vel(b), b + 1, vel(a), -2.0);
        }
    }
    q
}

fn stretching(_m: &SpacetimeMetric, w: &[f64; 3], i: usize) -> QuadraticNonlinearity {
    let mut q = QuadraticNonlinearity::default();
    for a in 0..3 {
        q.linear[a + 1][vel(i)] = w[a];
    }
    q
}

fn vorticity_advection(_m: &SpacetimeMetric, w: &[f64; 3], i: usize) -> QuadraticNonlinearity {
    let mut q = QuadraticNonlinearity::default();
    for a in 0..3 {
        q.linear[a + 1][vort(i)] = w[a];
    }
    q
}

fn vorticity_divergence(_m: &SpacetimeMetric, w: &[f64; 3], i: usize) -> QuadraticNonlinearity {
    let mut q = QuadraticNonlinearity::default();
    for a in 0..3 {
        q.linear[a + 1][vort(a)] = w[i];
    }
    q
}

fn vorticity_density(_m: &SpacetimeMetric, w: &[f64; 3], _i: usize) -> QuadraticNonlinearity {
    let mut q = QuadraticNonlinearity::default();
    for a in 0..3 {
        q.linear[a + 1][RHO] = w[a];
    }
    q
}

fn p_omega(_m: &SpacetimeMetric, _w: &[f64; 3], i: usize) -> QuadraticNonlinearity {
    let mut q = QuadraticNonlinearity::default();
    for a in 0..3 {
        for b in 0..3 {
            let e = eps0(i, a, b);
            if e == 0.0 {
                continue;
            }
            for c in 0..3 {
                q.add(a + 1, vort(c), c + 1, vel(b), e);
                q.add(a + 1, vel(c), c + 1, vort(b), -e);
            }
        }
    }
    q
}

/// The derivative-dependent inhomogeneities of the wave-transport system.
pub fn euler_nonlinearity_catalog() -> Vec<CatalogEntry> {
    use NullClassification::*;
    vec![
        CatalogEntry {
            name: "Q_velocity",
            classification: OffShellNull,
            components: 3,
            build: q_velocity,
        },
        CatalogEntry {
            name: "Q_density",
            classification: OffShellNull,
            components: 1,
            build: q_density,
        },
        CatalogEntry {
            name: "vorticity_stretching",
            classification: DerivativeLinear,
            components: 3,
            build: stretching,
        },
        CatalogEntry {
            name: "vorticity_advection",
            classification: DerivativeLinear,
            components: 3,
            build: vorticity_advection,
        },
        CatalogEntry {
            name: "vorticity_times_divergence",
            classification: DerivativeLinear,
            components: 3,
            build: vorticity_divergence,
        },
        CatalogEntry {
            name: "vorticity_density_gradient",
            classification: DerivativeLinear,
            components: 1,
            build: vorticity_density,
        },
        CatalogEntry {
            name: "P_varpi",
            classification: OnShellNull,
            components: 3,
            build: p_omega,
        },
    ]
}
