//! Periodic Cartesian grids, gridded fields and the discrete Euclidean operators.
//!
//! Fields are stored as plain `Vec<f64>` in structure-of-arrays form with `x1`
//! varying fastest: `idx = i + n1 * (j + n2 * k)`. Every axis is periodic; an
//! axis with a single cell is inactive and all derivatives along it vanish.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type ScalarField = Vec<f64>;
pub type VectorField = [Vec<f64>; 3];

/// Weights of the fourth-order centred first derivative on offsets -2..=2 (divide by 12h).
pub const D1_WEIGHTS: [f64; 5] = [1.0, -8.0, 0.0, 8.0, -1.0];
/// Weights of the fourth-order centred second derivative on offsets -2..=2 (divide by 12h^2).
pub const D2_WEIGHTS: [f64; 5] = [-1.0, 16.0, -30.0, 16.0, -1.0];

/// Minimum cell count on an active axis for scenario grids.
pub const MIN_ACTIVE_CELLS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub n: [usize; 3],
    pub extent: [f64; 3],
}

impl Grid {
    pub fn new(n: [usize; 3], extent: [f64; 3]) -> Result<Self> {
        for a in 0..3 {
            if n[a] == 0 {
                return Err(Error::InvalidGrid(format!("axis {} has no cells", a + 1)));
            }
            if !(extent[a] > 0.0) || !extent[a].is_finite() {
                return Err(Error::InvalidGrid(format!(
                    "axis {} has non-positive extent {}",
                    a + 1,
                    extent[a]
                )));
            }
        }
        Ok(Self { n, extent })
    }

    /// Unit-periodic box with the given cell counts.
    pub fn unit(n1: usize, n2: usize, n3: usize) -> Result<Self> {
        Self::new([n1, n2, n3], [1.0; 3])
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n[0] * self.n[1] * self.n[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn h(&self, axis: usize) -> f64 {
        self.extent[axis] / self.n[axis] as f64
    }

    pub fn spacing(&self) -> [f64; 3] {
        [self.h(0), self.h(1), self.h(2)]
    }

    /// Smallest spacing among active axes.
    pub fn h_min(&self) -> f64 {
        (0..3)
            .filter(|&a| self.is_active(a))
            .map(|a| self.h(a))
            .fold(f64::INFINITY, f64::min)
    }

    #[inline]
    pub fn is_active(&self, axis: usize) -> bool {
        self.n[axis] > 1
    }

    pub fn dimension(&self) -> usize {
        (0..3).filter(|&a| self.is_active(a)).count()
    }

    #[inline]
    pub fn stride(&self, axis: usize) -> usize {
        match axis {
            0 => 1,
            1 => self.n[0],
            _ => self.n[0] * self.n[1],
        }
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.n[0] * (j + self.n[1] * k)
    }

    #[inline]
    pub fn unravel(&self, idx: usize) -> [usize; 3] {
        let i = idx % self.n[0];
        let r = idx / self.n[0];
        [i, r % self.n[1], r / self.n[1]]
    }

    #[inline]
    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        i as f64 * self.h(axis)
    }

    pub fn point(&self, idx: usize) -> [f64; 3] {
        let c = self.unravel(idx);
        [
            self.coord(0, c[0]),
            self.coord(1, c[1]),
            self.coord(2, c[2]),
        ]
    }

    /// Every active axis must hold a full five-point stencil.
    pub fn check_stencil(&self) -> Result<()> {
        for a in 0..3 {
            if self.n[a] > 1 && self.n[a] < 5 {
                return Err(Error::StencilTooWide {
                    axis: a + 1,
                    cells: self.n[a],
                });
            }
        }
        Ok(())
    }

    /// Stricter check used for scenario grids.
    pub fn check_scenario(&self) -> Result<()> {
        self.check_stencil()?;
        for a in 0..3 {
            if self.n[a] > 1 && self.n[a] < MIN_ACTIVE_CELLS {
                return Err(Error::InvalidGrid(format!(
                    "axis {} has {} cells; active axes need at least {}",
                    a + 1,
                    self.n[a],
                    MIN_ACTIVE_CELLS
                )));
            }
        }
        Ok(())
    }

    /// Multiply the cell count of every active axis by `factor`.
    pub fn refined(&self, factor: usize) -> Self {
        let mut n = self.n;
        for a in 0..3 {
            if n[a] > 1 {
                n[a] *= factor;
            }
        }
        Self {
            n,
            extent: self.extent,
        }
    }

    pub fn zeros(&self) -> ScalarField {
        vec![0.0; self.len()]
    }

    pub fn zeros3(&self) -> VectorField {
        [self.zeros(), self.zeros(), self.zeros()]
    }

    pub fn sample(&self, f: impl Fn([f64; 3]) -> f64) -> ScalarField {
        (0..self.len()).map(|i| f(self.point(i))).collect()
    }

    /// Cells whose `x1` index lies at least `margin` cells from both window edges.
    pub fn interior_x1(&self, margin: usize) -> impl Iterator<Item = usize> + '_ {
        let n1 = self.n[0];
        let lo = if n1 > 2 * margin { margin } else { 0 };
        let hi = if n1 > 2 * margin { n1 - margin } else { n1 };
        (0..self.len()).filter(move |&p| {
            let i = p % n1;
            i >= lo && i < hi
        })
    }
}

/// Choice of discrete derivative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DerivativeScheme {
    #[default]
    FourthOrder,
    /// Trigonometric (FFT) differentiation; exact for band-limited periodic data.
    Spectral,
}

/// The evolved fluid variables: log-density and velocity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluidState {
    pub t: f64,
    pub rho: ScalarField,
    pub v: VectorField,
}

impl FluidState {
    pub fn constant(grid: &Grid, rho: f64, v: [f64; 3]) -> Self {
        let n = grid.len();
        Self {
            t: 0.0,
            rho: vec![rho; n],
            v: [vec![v[0]; n], vec![v[1]; n], vec![v[2]; n]],
        }
    }

    pub fn len(&self) -> usize {
        self.rho.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rho.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.rho.iter().chain(self.v.iter().flatten()).all(|x| x.is_finite())
    }

    /// Components in the order (rho, v1, v2, v3).
    pub fn components(&self) -> [&[f64]; 4] {
        [&self.rho, &self.v[0], &self.v[1], &self.v[2]]
    }
}

/// Levi-Civita symbol for indices in {1, 2, 3}.
pub fn levi_civita(i: usize, j: usize, k: usize) -> i32 {
    if i == j || j == k || i == k {
        return 0;
    }
    // Count inversions relative to (1, 2, 3).
    let inv = (i > j) as i32 + (i > k) as i32 + (j > k) as i32;
    if inv % 2 == 0 {
        1
    } else {
        -1
    }
}

/// Zero-based Levi-Civita symbol used inside the kernels.
#[inline]
pub(crate) fn eps0(i: usize, j: usize, k: usize) -> f64 {
    levi_civita(i + 1, j + 1, k + 1) as f64
}

/// Applies a periodic five-point stencil along `axis` and writes `scale * sum w f` into `out`.
pub fn apply_stencil(grid: &Grid, f: &[f64], axis: usize, w: [f64; 5], scale: f64, out: &mut [f64]) {
    debug_assert_eq!(f.len(), grid.len());
    debug_assert_eq!(out.len(), grid.len());
    let [n1, n2, n3] = grid.n;
    let n = grid.n[axis];
    if n == 1 {
        out.iter_mut().for_each(|x| *x = 0.0);
        return;
    }
    let wrap = |i: usize, d: isize| -> usize { ((i as isize + d).rem_euclid(n as isize)) as usize };
    match axis {
        0 => {
            for row in 0..n2 * n3 {
                let base = row * n1;
                let fr = &f[base..base + n1];
                let or = &mut out[base..base + n1];
                for i in 0..n1 {
                    let v = if i >= 2 && i + 2 < n1 {
                        w[0] * fr[i - 2] + w[1] * fr[i - 1] + w[2] * fr[i] + w[3] * fr[i + 1] + w[4] * fr[i + 2]
                    } else {
                        w[0] * fr[wrap(i, -2)]
                            + w[1] * fr[wrap(i, -1)]
                            + w[2] * fr[i]
                            + w[3] * fr[wrap(i, 1)]
                            + w[4] * fr[wrap(i, 2)]
                    };
                    or[i] = scale * v;
                }
            }
        }
        1 | 2 => {
            let (outer, inner_rows) = if axis == 1 { (n3, n2) } else { (1, n3) };
            let stride = grid.stride(axis);
            for o in 0..outer {
                for r in 0..inner_rows {
                    let off = |d: isize| {
                        let rr = wrap(r, d);
                        if axis == 1 {
                            n1 * (rr + n2 * o)
                        } else {
                            rr * stride
                        }
                    };
                    let rows = [off(-2), off(-1), off(0), off(1), off(2)];
                    let dst = off(0);
                    let span = if axis == 1 { n1 } else { n1 * n2 };
                    for i in 0..span {
                        let v = w[0] * f[rows[0] + i]
                            + w[1] * f[rows[1] + i]
                            + w[2] * f[rows[2] + i]
                            + w[3] * f[rows[3] + i]
                            + w[4] * f[rows[4] + i];
                        out[dst + i] = scale * v;
                    }
                }
            }
        }
        _ => panic!("axis out of range"),
    }
}

/// Fourth-order first derivative along `axis` into `out`.
pub fn d1_into(grid: &Grid, f: &[f64], axis: usize, out: &mut [f64]) {
    apply_stencil(grid, f, axis, D1_WEIGHTS, 1.0 / (12.0 * grid.h(axis)), out);
}

/// Fourth-order second derivative along `axis` into `out`.
pub fn d2_into(grid: &Grid, f: &[f64], axis: usize, out: &mut [f64]) {
    let h = grid.h(axis);
    apply_stencil(grid, f, axis, D2_WEIGHTS, 1.0 / (12.0 * h * h), out);
}

pub fn d1(grid: &Grid, f: &[f64], axis: usize) -> ScalarField {
    let mut out = grid.zeros();
    d1_into(grid, f, axis, &mut out);
    out
}

/// Mixed or pure second derivative; pure derivatives use the dedicated five-point stencil.
pub fn d2_mixed(grid: &Grid, f: &[f64], a: usize, b: usize) -> ScalarField {
    let mut out = grid.zeros();
    if a == b {
        d2_into(grid, f, a, &mut out);
    } else {
        let tmp = d1(grid, f, a);
        d1_into(grid, &tmp, b, &mut out);
    }
    out
}

/// Spectral derivative along one axis.
pub fn spectral_d1(grid: &Grid, f: &[f64], axis: usize) -> ScalarField {
    let n = grid.n[axis];
    let mut out = grid.zeros();
    if n == 1 {
        return out;
    }
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let stride = grid.stride(axis);
    let k0 = 2.0 * PI / grid.extent[axis];
    let mut buf = vec![Complex::new(0.0, 0.0); n];
    for base in line_starts(grid, axis) {
        for (m, b) in buf.iter_mut().enumerate() {
            *b = Complex::new(f[base + m * stride], 0.0);
        }
        fwd.process(&mut buf);
        for (m, b) in buf.iter_mut().enumerate() {
            // Signed wavenumber; the Nyquist mode of an even grid has no odd derivative.
            let km = if 2 * m < n {
                m as f64
            } else if 2 * m == n {
                0.0
            } else {
                m as f64 - n as f64
            };
            *b *= Complex::new(0.0, k0 * km / n as f64);
        }
        inv.process(&mut buf);
        for (m, b) in buf.iter().enumerate() {
            out[base + m * stride] = b.re;
        }
    }
    out
}

fn line_starts(grid: &Grid, axis: usize) -> Vec<usize> {
    let [n1, n2, n3] = grid.n;
    let mut v = Vec::new();
    match axis {
        0 => {
            for k in 0..n3 {
                for j in 0..n2 {
                    v.push(grid.idx(0, j, k));
                }
            }
        }
        1 => {
            for k in 0..n3 {
                for i in 0..n1 {
                    v.push(grid.idx(i, 0, k));
                }
            }
        }
        _ => {
            for j in 0..n2 {
                for i in 0..n1 {
                    v.push(grid.idx(i, j, 0));
                }
            }
        }
    }
    v
}

fn deriv(grid: &Grid, f: &[f64], axis: usize, scheme: DerivativeScheme) -> ScalarField {
    match scheme {
        DerivativeScheme::FourthOrder => d1(grid, f, axis),
        DerivativeScheme::Spectral => spectral_d1(grid, f, axis),
    }
}

fn check_len(grid: &Grid, f: &[f64]) -> Result<()> {
    if f.len() != grid.len() {
        return Err(Error::InvalidGrid(format!(
            "field has {} entries, grid has {} cells",
            f.len(),
            grid.len()
        )));
    }
    Ok(())
}

pub fn gradient(phi: &[f64], grid: &Grid) -> Result<VectorField> {
    gradient_with(phi, grid, DerivativeScheme::FourthOrder)
}

pub fn gradient_with(phi: &[f64], grid: &Grid, scheme: DerivativeScheme) -> Result<VectorField> {
    grid.check_stencil()?;
    check_len(grid, phi)?;
    Ok([
        deriv(grid, phi, 0, scheme),
        deriv(grid, phi, 1, scheme),
        deriv(grid, phi, 2, scheme),
    ])
}

pub fn divergence(v: &VectorField, grid: &Grid) -> Result<ScalarField> {
    divergence_with(v, grid, DerivativeScheme::FourthOrder)
}

pub fn divergence_with(v: &VectorField, grid: &Grid, scheme: DerivativeScheme) -> Result<ScalarField> {
    grid.check_stencil()?;
    let mut out = grid.zeros();
    for a in 0..3 {
        check_len(grid, &v[a])?;
        if grid.is_active(a) {
            let d = deriv(grid, &v[a], a, scheme);
            out.iter_mut().zip(&d).for_each(|(o, x)| *o += x);
        }
    }
    Ok(out)
}

pub fn curl(v: &VectorField, grid: &Grid) -> Result<VectorField> {
    curl_with(v, grid, DerivativeScheme::FourthOrder)
}

pub fn curl_with(v: &VectorField, grid: &Grid, scheme: DerivativeScheme) -> Result<VectorField> {
    grid.check_stencil()?;
    for c in v {
        check_len(grid, c)?;
    }
    let mut out = grid.zeros3();
    // (curl V)^i = d_{i+1} V^{i+2} - d_{i+2} V^{i+1}, indices cyclic.
    for i in 0..3 {
        let (a, b) = ((i + 1) % 3, (i + 2) % 3);
        if grid.is_active(a) {
            let d = deriv(grid, &v[b], a, scheme);
            out[i].iter_mut().zip(&d).for_each(|(o, x)| *o += x);
        }
        if grid.is_active(b) {
            let d = deriv(grid, &v[a], b, scheme);
            out[i].iter_mut().zip(&d).for_each(|(o, x)| *o -= x);
        }
    }
    Ok(out)
}

/// Specific vorticity `curl v / exp(rho)`.
pub fn specific_vorticity(state: &FluidState, grid: &Grid) -> Result<VectorField> {
    let mut w = curl(&state.v, grid)?;
    for c in w.iter_mut() {
        c.iter_mut()
            .zip(&state.rho)
            .for_each(|(x, r)| *x *= (-r).exp());
    }
    Ok(w)
}

/// Material derivative `dt f + v . grad f` with `dt f` supplied by the caller.
pub fn apply_b(f: &[f64], dt_f: &[f64], state: &FluidState, grid: &Grid) -> Result<ScalarField> {
    check_len(grid, dt_f)?;
    let g = gradient(f, grid)?;
    let mut out = dt_f.to_vec();
    for a in 0..3 {
        if grid.is_active(a) {
            for p in 0..out.len() {
                out[p] += state.v[a][p] * g[a][p];
            }
        }
    }
    Ok(out)
}

pub fn max_abs(f: &[f64]) -> f64 {
    f.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn max_norm3(v: &VectorField) -> f64 {
    (0..v[0].len())
        .map(|p| (v[0][p] * v[0][p] + v[1][p] * v[1][p] + v[2][p] * v[2][p]).sqrt())
        .fold(0.0, f64::max)
}

/// Root-mean-square over the given cells (a discrete L2 norm normalised by volume).
pub fn rms_over(f: &[f64], cells: &[usize]) -> f64 {
    if cells.is_empty() {
        return 0.0;
    }
    (cells.iter().map(|&p| f[p] * f[p]).sum::<f64>() / cells.len() as f64).sqrt()
}

pub fn max_over(f: &[f64], cells: &[usize]) -> f64 {
    cells.iter().fold(0.0, |m, &p| m.max(f[p].abs()))
}

const SNAPSHOT_MAGIC: &[u8; 8] = b"EULNSNP1";

/// Writes a snapshot block: magic, dims (u64 x3), extents (f64 x3), component count, time, data.
pub fn write_snapshot(path: &Path, grid: &Grid, t: f64, comps: &[&[f64]]) -> Result<()> {
    let mut buf = Vec::with_capacity(64 + 8 * grid.len() * comps.len());
    buf.extend_from_slice(SNAPSHOT_MAGIC);
    for n in grid.n {
        buf.extend_from_slice(&(n as u64).to_le_bytes());
    }
    for e in grid.extent {
        buf.extend_from_slice(&e.to_le_bytes());
    }
    buf.extend_from_slice(&(comps.len() as u64).to_le_bytes());
    buf.extend_from_slice(&t.to_le_bytes());
    for c in comps {
        check_len(grid, c)?;
        for x in c.iter() {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(&buf)?;
    Ok(())
}

pub struct Snapshot {
    pub grid: Grid,
    pub t: f64,
    pub comps: Vec<Vec<f64>>,
}

pub fn read_snapshot(path: &Path) -> Result<Snapshot> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let bad = |m: &str| Error::Format(format!("{}: {m}", path.display()));
    if bytes.len() < 64 || &bytes[..8] != SNAPSHOT_MAGIC {
        return Err(bad("not a snapshot file"));
    }
    let word = |i: usize| -> [u8; 8] { bytes[8 + 8 * i..16 + 8 * i].try_into().unwrap() };
    let n = [
        u64::from_le_bytes(word(0)) as usize,
        u64::from_le_bytes(word(1)) as usize,
        u64::from_le_bytes(word(2)) as usize,
    ];
    let extent = [
        f64::from_le_bytes(word(3)),
        f64::from_le_bytes(word(4)),
        f64::from_le_bytes(word(5)),
    ];
    let ncomp = u64::from_le_bytes(word(6)) as usize;
    let t = f64::from_le_bytes(word(7));
    let grid = Grid::new(n, extent)?;
    let expected = 72 + 8 * grid.len() * ncomp;
    if bytes.len() != expected {
        return Err(bad(&format!("expected {expected} bytes, found {}", bytes.len())));
    }
    let mut comps = Vec::with_capacity(ncomp);
    for c in 0..ncomp {
        let start = 72 + 8 * grid.len() * c;
        comps.push(
            bytes[start..start + 8 * grid.len()]
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
                .collect(),
        );
    }
    Ok(Snapshot { grid, t, comps })
}

/// CSV of the `x1` line through `(j, k)`, one column per named field.
pub fn csv_x1_slice(grid: &Grid, j: usize, k: usize, cols: &[(&str, &[f64])]) -> String {
    let mut s = String::from("x1");
    for (name, _) in cols {
        s.push(',');
        s.push_str(name);
    }
    s.push('\n');
    for i in 0..grid.n[0] {
        let p = grid.idx(i, j, k);
        s.push_str(&format!("{:.12e}", grid.coord(0, i)));
        for (_, f) in cols {
            s.push_str(&format!(",{:.12e}", f[p]));
        }
        s.push('\n');
    }
    s
}
