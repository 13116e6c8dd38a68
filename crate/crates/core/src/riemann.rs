//! Plane-symmetric theory: Riemann invariants, exact simple waves traced along
//! characteristics, and the time at which characteristics first cross.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::eos::EquationOfState;
use crate::error::{Error, Result};

/// Shape of an `x1` profile of unit amplitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProfileShape {
    /// `-sin(2 pi x / period)`.
    Sine,
    /// `(1 - s^2)^5` with `s = (x - center) / width`, zero for `|s| >= 1`; C^4.
    Bump { center: f64, width: f64 },
    /// Constant one.
    Constant,
}

/// A periodic `x1` profile `amplitude * shape(x)` with the given period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub shape: ProfileShape,
    pub amplitude: f64,
    pub period: f64,
}

impl Profile {
    pub fn sine(amplitude: f64, period: f64) -> Self {
        Self {
            shape: ProfileShape::Sine,
            amplitude,
            period,
        }
    }

    pub fn bump(amplitude: f64, center: f64, width: f64, period: f64) -> Self {
        Self {
            shape: ProfileShape::Bump { center, width },
            amplitude,
            period,
        }
    }

    pub fn constant(value: f64) -> Self {
        Self {
            shape: ProfileShape::Constant,
            amplitude: value,
            period: 1.0,
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            amplitude: self.amplitude * factor,
            ..*self
        }
    }

    /// Value and first three derivatives.
    pub fn jet(&self, x: f64) -> [f64; 4] {
        let a = self.amplitude;
        match self.shape {
            ProfileShape::Sine => {
                let k = 2.0 * PI / self.period;
                let (s, c) = (k * x).sin_cos();
                [-a * s, -a * k * c, a * k * k * s, a * k * k * k * c]
            }
            ProfileShape::Bump { center, width } => {
                // Periodic image of the offset closest to the centre.
                let mut d = (x - center).rem_euclid(self.period);
                if d > 0.5 * self.period {
                    d -= self.period;
                }
                let s = d / width;
                if s.abs() >= 1.0 {
                    return [0.0; 4];
                }
                let q = 1.0 - s * s;
                let w = 1.0 / width;
                let p0 = q.powi(5);
                let p1 = -10.0 * s * q.powi(4);
                let p2 = -10.0 * q.powi(4) + 80.0 * s * s * q.powi(3);
                let p3 = 240.0 * s * q.powi(3) - 480.0 * s.powi(3) * q.powi(2);
                [a * p0, a * p1 * w, a * p2 * w * w, a * p3 * w * w * w]
            }
            ProfileShape::Constant => [a, 0.0, 0.0, 0.0],
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        self.jet(x)[0]
    }

    pub fn deriv(&self, x: f64) -> f64 {
        self.jet(x)[1]
    }

    /// Bounds of the profile values (exact for the built-in shapes).
    pub fn range(&self) -> (f64, f64) {
        let a = self.amplitude;
        match self.shape {
            ProfileShape::Sine => (-a.abs(), a.abs()),
            ProfileShape::Bump { .. } => (a.min(0.0), a.max(0.0)),
            ProfileShape::Constant => (a, a),
        }
    }
}

/// `F(rho)` with `F' = c_s` and `F(0) = 0`.
pub fn f_of_rho(eos: &EquationOfState, rho: f64) -> f64 {
    match *eos {
        EquationOfState::Polytropic { gamma, .. } => 2.0 * (eos.cs(rho) - eos.cs(0.0)) / (gamma - 1.0),
        EquationOfState::Chaplygin { c1, rho_bar, .. } => c1.sqrt() / rho_bar * (1.0 - (-rho).exp()),
    }
}

/// `F` by adaptive Simpson quadrature of `c_s`; used as an independent check.
pub fn f_by_quadrature(eos: &EquationOfState, rho: f64) -> f64 {
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (f(a) + 4.0 * f(0.5 * (a + b)) + f(b))
    }
    fn adapt(f: &dyn Fn(f64) -> f64, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (l, r) = (simpson(f, a, m), simpson(f, m, b));
        if depth == 0 || (l + r - whole).abs() < 15.0 * tol {
            return l + r + (l + r - whole) / 15.0;
        }
        adapt(f, a, m, l, 0.5 * tol, depth - 1) + adapt(f, m, b, r, 0.5 * tol, depth - 1)
    }
    let f = |s: f64| eos.cs(s);
    adapt(&f, 0.0, rho, simpson(&f, 0.0, rho), 1e-14, 40)
}

/// Open interval of values attained by `F`.
pub fn f_range(eos: &EquationOfState) -> (f64, f64) {
    match *eos {
        EquationOfState::Polytropic { gamma, .. } => (-2.0 * eos.cs(0.0) / (gamma - 1.0), f64::INFINITY),
        EquationOfState::Chaplygin { c1, rho_bar, .. } => (f64::NEG_INFINITY, c1.sqrt() / rho_bar),
    }
}

/// Inverts `F` by safeguarded Newton iteration.
pub fn f_inverse(eos: &EquationOfState, y: f64) -> Result<f64> {
    let (lower, upper) = f_range(eos);
    if !(y > lower && y < upper) {
        return Err(Error::RangeError { value: y, lower, upper });
    }
    // Bracket the root; F is strictly increasing.
    let (mut lo, mut hi) = (-1.0, 1.0);
    while f_of_rho(eos, lo) > y {
        lo *= 2.0;
    }
    while f_of_rho(eos, hi) < y {
        hi *= 2.0;
    }
    let mut x = 0.0_f64.clamp(lo, hi);
    for _ in 0..200 {
        let r = f_of_rho(eos, x) - y;
        if r.abs() <= 1e-15 * (1.0 + y.abs()) {
            return Ok(x);
        }
        if r > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let step = x - r / eos.cs(x);
        x = if step > lo && step < hi { step } else { 0.5 * (lo + hi) };
        if hi - lo < 1e-16 * (1.0 + x.abs()) {
            break;
        }
    }
    Ok(x)
}

/// `(R_-, R_+) = (v1 - F(rho), v1 + F(rho))` pointwise.
pub fn riemann_invariants(eos: &EquationOfState, rho: &[f64], v1: &[f64]) -> (Vec<f64>, Vec<f64>) {
    rho.iter()
        .zip(v1)
        .map(|(&r, &v)| {
            let f = f_of_rho(eos, r);
            (v - f, v + f)
        })
        .unzip()
}

/// `(lambda_-, lambda_+) = (v1 - c_s, v1 + c_s)` pointwise.
pub fn characteristic_speeds(eos: &EquationOfState, rho: &[f64], v1: &[f64]) -> (Vec<f64>, Vec<f64>) {
    rho.iter()
        .zip(v1)
        .map(|(&r, &v)| {
            let c = eos.cs(r);
            (v - c, v + c)
        })
        .unzip()
}

/// State `(rho, v1)` recovered from the two Riemann invariants.
pub fn state_from_invariants(eos: &EquationOfState, r_minus: f64, r_plus: f64) -> Result<(f64, f64)> {
    let rho = f_inverse(eos, 0.5 * (r_plus - r_minus))?;
    Ok((rho, 0.5 * (r_plus + r_minus)))
}

/// `lambda_+` as a function of `R_+` on the branch `R_- = 0`.
pub fn lambda_plus(eos: &EquationOfState, r_plus: f64) -> Result<f64> {
    let (rho, v) = state_from_invariants(eos, 0.0, r_plus)?;
    Ok(v + eos.cs(rho))
}

/// `d lambda_+ / d R_+` on the branch `R_- = 0`.
pub fn lambda_plus_slope(eos: &EquationOfState, r_plus: f64) -> Result<f64> {
    let rho = f_inverse(eos, 0.5 * r_plus)?;
    let (c, cp) = eos.cs_and_deriv(rho);
    Ok(0.5 + 0.5 * cp / c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimpleWaveState {
    pub r_plus: f64,
    pub rho: f64,
    pub v1: f64,
    /// Foot of the characteristic through the evaluation point.
    pub x0: f64,
}

/// A right-moving simple wave with `R_- = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimpleWave {
    pub profile: Profile,
    pub eos: EquationOfState,
}

/// Result of [`shock_time`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShockTime {
    pub t_shock: f64,
    /// Foot point of the first crossing characteristic.
    pub x0: f64,
    /// Minimum of `d/dx lambda_+(R_+(0, x))`.
    pub min_slope: f64,
}

fn speed_slope(eos: &EquationOfState, profile: &Profile, x: f64) -> Result<f64> {
    let [p, dp, ..] = profile.jet(x);
    Ok(lambda_plus_slope(eos, p)? * dp)
}

/// First characteristic-crossing time `-1 / min_x d/dx lambda_+(R_+(0, x))`.
///
/// The minimum is located on `samples` equispaced points per period, then
/// polished with Newton's method on the derivative of the slope.
pub fn shock_time(profile: &Profile, eos: &EquationOfState, samples: usize) -> Result<ShockTime> {
    if eos.is_chaplygin() {
        return Err(Error::NoShock(
            "Chaplygin gas: lambda_+ does not depend on R_+, characteristics do not converge".into(),
        ));
    }
    let n = samples.max(16);
    let l = profile.period;
    let mut best = (f64::INFINITY, 0.0);
    for i in 0..n {
        let x = l * i as f64 / n as f64;
        let s = speed_slope(eos, profile, x)?;
        if s < best.0 {
            best = (s, x);
        }
    }
    if best.0 >= 0.0 {
        return Err(Error::NoShock("the speed profile is non-decreasing".into()));
    }
    let dx = l / n as f64;
    let (lo, hi) = (best.1 - dx, best.1 + dx);
    let mut x = best.1;
    let h = 1e-4 * dx;
    for _ in 0..50 {
        let f = |y: f64| speed_slope(eos, profile, y).unwrap_or(f64::INFINITY);
        let d1 = (f(x + h) - f(x - h)) / (2.0 * h);
        let d2 = (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h);
        if !(d2 > 0.0) {
            break;
        }
        let next = (x - d1 / d2).clamp(lo, hi);
        if (next - x).abs() < 1e-14 * l {
            x = next;
            break;
        }
        x = next;
    }
    let polished = speed_slope(eos, profile, x)?;
    let (min_slope, x0) = if polished < best.0 { (polished, x) } else { best };
    Ok(ShockTime {
        t_shock: -1.0 / min_slope,
        x0: x0.rem_euclid(l),
        min_slope,
    })
}

/// Earliest crossing time among `samples` characteristics traced as straight lines.
pub fn characteristic_crossing_time(profile: &Profile, eos: &EquationOfState, samples: usize) -> Result<f64> {
    if eos.is_chaplygin() {
        return Err(Error::NoShock("Chaplygin gas".into()));
    }
    let l = profile.period;
    let feet: Vec<f64> = (0..=samples).map(|i| l * i as f64 / samples as f64).collect();
    let speeds = feet
        .iter()
        .map(|&x| lambda_plus(eos, profile.value(x)))
        .collect::<Result<Vec<_>>>()?;
    let mut t_min = f64::INFINITY;
    for i in 0..samples {
        let dl = speeds[i + 1] - speeds[i];
        if dl < 0.0 {
            t_min = t_min.min(-(feet[i + 1] - feet[i]) / dl);
        }
    }
    if t_min.is_finite() {
        Ok(t_min)
    } else {
        Err(Error::NoShock("no pair of characteristics converges".into()))
    }
}

impl SimpleWave {
    pub fn new(profile: Profile, eos: EquationOfState) -> Self {
        Self { profile, eos }
    }

    /// Exact state at `(t, x)` by inverting `x = x0 + t lambda_+(R_+(0, x0))`.
    pub fn exact(&self, x: f64, t: f64, t_shock: f64) -> Result<SimpleWaveState> {
        if t >= t_shock {
            return Err(Error::PastShockTime { t, t_shock });
        }
        let (pmin, pmax) = self.profile.range();
        let (l1, l2) = (lambda_plus(&self.eos, pmin)?, lambda_plus(&self.eos, pmax)?);
        let (lmin, lmax) = (l1.min(l2), l1.max(l2));
        let map = |x0: f64| -> Result<(f64, f64)> {
            let [p, dp, ..] = self.profile.jet(x0);
            let lam = lambda_plus(&self.eos, p)?;
            let slope = lambda_plus_slope(&self.eos, p)? * dp;
            Ok((x0 + t * lam - x, 1.0 + t * slope))
        };
        let (mut lo, mut hi) = (x - t * lmax, x - t * lmin);
        if hi - lo < 1e-300 {
            hi = lo;
        }
        for _ in 0..20 {
            let mid = 0.5 * (lo + hi);
            if map(mid)?.0 > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let mut x0 = 0.5 * (lo + hi);
        for _ in 0..50 {
            let (r, dr) = map(x0)?;
            let step = r / dr;
            x0 -= step;
            if step.abs() < 1e-13 * (1.0 + x0.abs()) {
                break;
            }
        }
        let r_plus = self.profile.value(x0);
        let (rho, v1) = state_from_invariants(&self.eos, 0.0, r_plus)?;
        Ok(SimpleWaveState { r_plus, rho, v1, x0 })
    }
}

/// Convenience wrapper of [`SimpleWave::exact`].
pub fn simple_wave_exact(
    profile: &Profile,
    eos: &EquationOfState,
    x: f64,
    t: f64,
    t_shock: f64,
) -> Result<SimpleWaveState> {
    SimpleWave::new(*profile, *eos).exact(x, t, t_shock)
}
