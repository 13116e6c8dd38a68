//! Barotropic equations of state and the sound-speed functions derived from them.
//!
//! All quantities are expressed in terms of the logarithmic density
//! `rho_log = ln(rho / rho_bar)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase", deny_unknown_fields)]
pub enum EquationOfState {
    /// `p = K rho^gamma`.
    Polytropic {
        gamma: f64,
        #[serde(rename = "K")]
        k: f64,
        rho_bar: f64,
    },
    /// `p = C0 - C1 / rho`.
    Chaplygin {
        #[serde(rename = "C0")]
        c0: f64,
        #[serde(rename = "C1")]
        c1: f64,
        rho_bar: f64,
    },
}

impl Default for EquationOfState {
    fn default() -> Self {
        Self::normalized_polytropic(2.0)
    }
}

/// Outcome of [`EquationOfState::validate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EosDiagnostics {
    pub hyperbolic: bool,
    pub shock_capable: bool,
    pub totally_linearly_degenerate: bool,
    pub min_sound_speed: f64,
    pub max_sound_speed: f64,
    pub messages: Vec<String>,
}

impl EquationOfState {
    /// Polytropic law with `rho_bar = 1` and `K = 1/gamma`, so that `c_s(0) = 1`.
    pub fn normalized_polytropic(gamma: f64) -> Self {
        Self::Polytropic {
            gamma,
            k: 1.0 / gamma,
            rho_bar: 1.0,
        }
    }

    pub fn rho_bar(&self) -> f64 {
        match *self {
            Self::Polytropic { rho_bar, .. } | Self::Chaplygin { rho_bar, .. } => rho_bar,
        }
    }

    pub fn is_chaplygin(&self) -> bool {
        matches!(self, Self::Chaplygin { .. })
    }

    pub fn density(&self, rho_log: f64) -> f64 {
        self.rho_bar() * rho_log.exp()
    }

    pub fn pressure(&self, rho_log: f64) -> f64 {
        let rho = self.density(rho_log);
        match *self {
            Self::Polytropic { gamma, k, .. } => k * rho.powf(gamma),
            Self::Chaplygin { c0, c1, .. } => c0 - c1 / rho,
        }
    }

    /// `dp/drho` at the given state.
    pub fn pressure_slope(&self, rho_log: f64) -> f64 {
        let rho = self.density(rho_log);
        match *self {
            Self::Polytropic { gamma, k, .. } => k * gamma * rho.powf(gamma - 1.0),
            Self::Chaplygin { c1, .. } => c1 / (rho * rho),
        }
    }

    fn check(&self, rho_log: f64) -> Result<()> {
        let fail = |reason: &str| {
            Err(Error::NonHyperbolic {
                rho_log,
                reason: reason.to_string(),
            })
        };
        if !rho_log.is_finite() {
            return fail("log-density is not finite");
        }
        if !(self.rho_bar() > 0.0) {
            return fail("background density must be positive");
        }
        match *self {
            Self::Polytropic { gamma, k, .. } => {
                if !(k > 0.0) || !(gamma > 1.0) {
                    return fail("polytropic law needs K > 0 and gamma > 1");
                }
            }
            Self::Chaplygin { c1, .. } => {
                if !(c1 > 0.0) {
                    return fail("Chaplygin law needs C1 > 0");
                }
            }
        }
        if self.pressure_slope(rho_log) < 0.0 {
            return fail("dp/drho < 0");
        }
        Ok(())
    }

    pub fn sound_speed(&self, rho_log: f64) -> Result<f64> {
        self.check(rho_log)?;
        Ok(self.cs(rho_log))
    }

    /// `d c_s / d rho_log`.
    pub fn sound_speed_deriv(&self, rho_log: f64) -> Result<f64> {
        self.check(rho_log)?;
        Ok(self.cs_and_deriv(rho_log).1)
    }

    /// Sound speed at the background state `rho_log = 0`.
    pub fn background_sound_speed(&self) -> f64 {
        self.cs(0.0)
    }

    /// Unchecked sound speed for kernels that run after [`validate`](Self::validate).
    #[inline]
    pub fn cs(&self, rho_log: f64) -> f64 {
        match *self {
            Self::Polytropic { gamma, k, rho_bar } => {
                let c0 = (k * gamma * rho_bar.powf(gamma - 1.0)).sqrt();
                c0 * (0.5 * (gamma - 1.0) * rho_log).exp()
            }
            Self::Chaplygin { c1, rho_bar, .. } => c1.sqrt() / rho_bar * (-rho_log).exp(),
        }
    }

    /// Unchecked `(c_s, c_s')`.
    #[inline]
    pub fn cs_and_deriv(&self, rho_log: f64) -> (f64, f64) {
        let cs = self.cs(rho_log);
        match *self {
            Self::Polytropic { gamma, .. } => (cs, 0.5 * (gamma - 1.0) * cs),
            Self::Chaplygin { .. } => (cs, -cs),
        }
    }

    /// Checks hyperbolicity over `[lo, hi]` and classifies the family.
    pub fn validate(&self, lo: f64, hi: f64) -> EosDiagnostics {
        let mut messages = Vec::new();
        let mut hyperbolic = true;
        let mut min_cs = f64::INFINITY;
        let mut max_cs = 0.0_f64;
        let samples = 257;
        for s in 0..samples {
            let r = lo + (hi - lo) * s as f64 / (samples - 1) as f64;
            match self.sound_speed(r) {
                Ok(c) if c > 0.0 && c.is_finite() => {
                    min_cs = min_cs.min(c);
                    max_cs = max_cs.max(c);
                }
                Ok(c) => {
                    hyperbolic = false;
                    messages.push(format!("c_s = {c} at rho_log = {r}"));
                    break;
                }
                Err(e) => {
                    hyperbolic = false;
                    messages.push(e.to_string());
                    break;
                }
            }
        }
        let degenerate = self.is_chaplygin();
        if degenerate {
            messages.push(
                "Chaplygin gas: plane-symmetric Riemann invariants are totally linearly degenerate; no shock formation expected".into(),
            );
        }
        EosDiagnostics {
            hyperbolic,
            shock_capable: hyperbolic && !degenerate,
            totally_linearly_degenerate: degenerate,
            min_sound_speed: if hyperbolic { min_cs } else { f64::NAN },
            max_sound_speed: if hyperbolic { max_cs } else { f64::NAN },
            messages,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn poly(gamma: f64, k: f64) -> EquationOfState {
        EquationOfState::Polytropic {
            gamma,
            k,
            rho_bar: 1.0,
        }
    }

    fn chap() -> EquationOfState {
        EquationOfState::Chaplygin {
            c0: 0.0,
            c1: 1.0,
            rho_bar: 1.0,
        }
    }

    #[test]
    fn pressure_values() {
        assert!((poly(2.0, 0.5).pressure(0.0) - 0.5).abs() < 1e-15);
        assert!((chap().pressure(0.0) + 1.0).abs() < 1e-15);
        let eos = poly(1.4, 3.0);
        let mut prev = f64::NEG_INFINITY;
        for i in -20..=20 {
            let p = eos.pressure(i as f64 * 0.1);
            assert!(p > prev);
            prev = p;
        }
    }

    #[test]
    fn sound_speed_values() {
        let eos = poly(2.0, 0.5);
        assert!((eos.sound_speed(0.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((eos.sound_speed(4f64.ln()).unwrap() - 2.0).abs() < 1e-14);
        assert!((chap().sound_speed(0.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((eos.sound_speed_deriv(0.0).unwrap() - 0.5).abs() < 1e-15);
        assert!((chap().sound_speed_deriv(0.0).unwrap() + 1.0).abs() < 1e-15);
    }

    #[test]
    fn normalized_family_is_exponential() {
        for gamma in [1.4, 2.0, 3.0] {
            let eos = EquationOfState::normalized_polytropic(gamma);
            for r in [-1.0, -0.3, 0.0, 0.7, 1.0] {
                let c2 = eos.sound_speed(r).unwrap().powi(2);
                let expected = ((gamma - 1.0) * r).exp();
                assert!((c2 - expected).abs() < 1e-14 * expected);
            }
        }
    }

    #[test]
    fn derivative_matches_centered_differences_at_second_order() {
        for eos in [poly(1.4, 2.0), poly(3.0, 0.2), chap()] {
            let r = 0.3;
            let exact = eos.sound_speed_deriv(r).unwrap();
            let err = |h: f64| {
                let fd = (eos.cs(r + h) - eos.cs(r - h)) / (2.0 * h);
                (fd - exact).abs()
            };
            let (e1, e2) = (err(1e-2), err(5e-3));
            let order = (e1 / e2).log2();
            assert!((order - 2.0).abs() < 0.05, "order {order}");
        }
    }

    #[test]
    fn invalid_parameters_are_not_hyperbolic() {
        let bad = EquationOfState::Chaplygin {
            c0: 0.0,
            c1: -1.0,
            rho_bar: 1.0,
        };
        assert!(matches!(
            bad.sound_speed(0.0),
            Err(Error::NonHyperbolic { .. })
        ));
        assert!(poly(2.0, 0.5).sound_speed(f64::NAN).is_err());
        assert!(!bad.validate(-1.0, 1.0).hyperbolic);
    }

    #[test]
    fn validation_classifies_families() {
        let d = EquationOfState::normalized_polytropic(2.0).validate(-1.0, 1.0);
        assert!(d.hyperbolic && d.shock_capable && !d.totally_linearly_degenerate);
        let d = EquationOfState::normalized_polytropic(1.4).validate(-1.0, 1.0);
        assert!(d.hyperbolic);
        let d = chap().validate(-1.0, 1.0);
        assert!(d.hyperbolic && d.totally_linearly_degenerate && !d.shock_capable);
    }

    #[test]
    fn config_round_trip() {
        let eos: EquationOfState =
            serde_json::from_str(r#"{"family":"polytropic","gamma":2.0,"K":0.5,"rho_bar":1.0}"#)
                .unwrap();
        assert_eq!(eos, poly(2.0, 0.5));
        let eos: EquationOfState =
            serde_json::from_str(r#"{"family":"chaplygin","C0":0.0,"C1":1.0,"rho_bar":1.0}"#)
                .unwrap();
        assert_eq!(eos, chap());
    }
}
