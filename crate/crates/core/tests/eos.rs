use euler_null::eos::EquationOfState;
use euler_null::Error;
use proptest::prelude::*;

fn chaplygin() -> EquationOfState {
    EquationOfState::Chaplygin {
        c0: 0.0,
        c1: 1.0,
        rho_bar: 1.0,
    }
}

#[test]
fn background_values_of_reference_laws() {
    let poly = EquationOfState::normalized_polytropic(2.0);
    assert!((poly.pressure(0.0) - 0.5).abs() < 1e-15);
    assert!((poly.sound_speed(0.0).unwrap() - 1.0).abs() < 1e-15);
    assert!((poly.sound_speed(4f64.ln()).unwrap() - 2.0).abs() < 1e-14);
    assert!((poly.sound_speed_deriv(0.0).unwrap() - 0.5).abs() < 1e-15);

    let chap = chaplygin();
    assert!((chap.pressure(0.0) + 1.0).abs() < 1e-15);
    assert!((chap.sound_speed(0.0).unwrap() - 1.0).abs() < 1e-15);
    assert!((chap.sound_speed_deriv(0.0).unwrap() + 1.0).abs() < 1e-15);
}

#[test]
fn normalised_polytrope_has_unit_background_speed() {
    for gamma in [1.4, 5.0 / 3.0, 2.0, 3.0] {
        let eos = EquationOfState::normalized_polytropic(gamma);
        assert!((eos.background_sound_speed() - 1.0).abs() < 1e-15, "gamma {gamma}");
    }
}

#[test]
fn sound_speed_squared_is_pressure_slope_in_log_density() {
    // c_s^2 = dp/drho = e^{-rho_log} dp/drho_log / rho_bar; checked by central differences.
    for eos in [
        EquationOfState::normalized_polytropic(1.4),
        EquationOfState::Polytropic {
            gamma: 3.0,
            k: 0.7,
            rho_bar: 2.0,
        },
        chaplygin(),
    ] {
        for r in [-0.8, -0.1, 0.0, 0.4, 1.1] {
            let h = 1e-5;
            let dp = (eos.pressure(r + h) - eos.pressure(r - h)) / (2.0 * h);
            let c2 = dp / eos.density(r);
            let c = eos.sound_speed(r).unwrap();
            assert!((c * c - c2).abs() < 1e-8 * (1.0 + c2), "{eos:?} at {r}");
        }
    }
}

#[test]
fn non_hyperbolic_laws_are_rejected() {
    let bad = EquationOfState::Polytropic {
        gamma: 2.0,
        k: -1.0,
        rho_bar: 1.0,
    };
    assert!(matches!(bad.sound_speed(0.0), Err(Error::NonHyperbolic { .. })));
    let bad_chap = EquationOfState::Chaplygin {
        c0: 0.0,
        c1: -1.0,
        rho_bar: 1.0,
    };
    assert!(matches!(bad_chap.sound_speed_deriv(0.0), Err(Error::NonHyperbolic { .. })));
    let poly = EquationOfState::normalized_polytropic(2.0);
    assert!(poly.sound_speed(f64::NAN).is_err());
    assert!(!bad.validate(-1.0, 1.0).hyperbolic);
}

#[test]
fn classification_of_families() {
    let d = EquationOfState::normalized_polytropic(2.0).validate(-1.5, 1.5);
    assert!(d.hyperbolic && d.shock_capable && !d.totally_linearly_degenerate);
    assert!(d.min_sound_speed < 1.0 && d.max_sound_speed > 1.0);

    let d = chaplygin().validate(-1.5, 1.5);
    assert!(d.hyperbolic && !d.shock_capable && d.totally_linearly_degenerate);
    assert!(!d.messages.is_empty());
}

#[test]
fn json_uses_capitalised_constants() {
    let eos: EquationOfState = serde_json::from_str(r#"{"family":"polytropic","gamma":2.0,"K":0.5,"rho_bar":1.0}"#).unwrap();
    assert_eq!(eos, EquationOfState::normalized_polytropic(2.0));
    let chap: EquationOfState = serde_json::from_str(r#"{"family":"chaplygin","C0":0.0,"C1":1.0,"rho_bar":1.0}"#).unwrap();
    assert_eq!(chap, chaplygin());
    assert!(serde_json::from_str::<EquationOfState>(r#"{"family":"polytropic","gamma":2.0,"k":0.5,"rho_bar":1.0}"#).is_err());
    let back: EquationOfState = serde_json::from_str(&serde_json::to_string(&chap).unwrap()).unwrap();
    assert_eq!(back, chap);
}

proptest! {
    #[test]
    fn pressure_increases_with_density(gamma in 1.1f64..4.0, a in -2.0f64..2.0, b in -2.0f64..2.0) {
        prop_assume!((a - b).abs() > 1e-6);
        let eos = EquationOfState::normalized_polytropic(gamma);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(eos.pressure(lo) < eos.pressure(hi));
        let chap = chaplygin();
        prop_assert!(chap.pressure(lo) < chap.pressure(hi));
    }

    #[test]
    fn derivative_matches_central_difference(gamma in 1.1f64..4.0, r in -2.0f64..2.0) {
        let eos = EquationOfState::normalized_polytropic(gamma);
        let h = 1e-5;
        let fd = (eos.cs(r + h) - eos.cs(r - h)) / (2.0 * h);
        let exact = eos.sound_speed_deriv(r).unwrap();
        prop_assert!((fd - exact).abs() < 1e-8 * (1.0 + exact.abs()));
    }
}
