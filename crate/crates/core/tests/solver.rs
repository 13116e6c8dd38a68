use std::f64::consts::PI;

use euler_null::eos::EquationOfState;
use euler_null::fields::{self, Grid};
use euler_null::riemann::{self, SimpleWave};
use euler_null::solver::*;
use euler_null::{Error, FluidState};

#[test]
fn constant_state_is_stationary() {
    let mut sc = Scenario::new([16, 8, 8], 1.0);
    sc.initial_data.delta = 0.0;
    sc.initial_data.epsilon = 0.0;
    let grid = sc.grid.grid().unwrap();
    let st = FluidState::constant(&grid, 0.1, [0.2, -0.1, 0.05]);
    let opts = IntegrateOptions {
        max_steps: Some(20),
        retention: Retention::Ends,
        ..Default::default()
    };
    let tr = integrate_with(&sc, &st, opts).unwrap();
    assert_eq!(tr.stop_reason, StopReason::Steps);
    assert_eq!(tr.last.step, 20);
    for (a, b) in tr.last.state.components().iter().zip(st.components()) {
        assert!(a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-15));
    }
}

#[test]
fn transverse_shear_is_a_steady_solution() {
    let eos = EquationOfState::normalized_polytropic(2.0);
    let grid = Grid::unit(32, 8, 8).unwrap();
    let mut st = FluidState::constant(&grid, 0.3, [0.0; 3]);
    st.v[1] = grid.sample(|x| (2.0 * PI * x[0]).sin());
    let (dt_rho, dt_v) = euler_rhs(&eos, &grid, &st).unwrap();
    assert!(fields::max_abs(&dt_rho) < 1e-13);
    assert!(fields::max_norm3(&dt_v) < 1e-13);
}

#[test]
fn cfl_step_of_rest_state() {
    let eos = EquationOfState::normalized_polytropic(2.0);
    let grid = Grid::unit(32, 1, 1).unwrap();
    let st = FluidState::constant(&grid, 0.0, [0.0; 3]);
    assert!((cfl_time_step(&eos, &grid, &st, 0.5) - 0.5 / 32.0).abs() < 1e-16);
}

#[test]
fn plane_initial_data_is_a_simple_wave() {
    let eos = EquationOfState::normalized_polytropic(2.0);
    let grid = Grid::unit(64, 8, 8).unwrap();
    let params = InitialData {
        epsilon: 0.0,
        ..InitialData::default()
    };
    let st = initial_data_nearly_simple_plane_wave(&eos, &grid, &params).unwrap();
    let (rm, rp) = riemann::riemann_invariants(&eos, &st.rho, &st.v[0]);
    assert!(fields::max_abs(&rm) < 1e-13);
    assert!((fields::max_abs(&rp) - 0.5).abs() < 1e-3);
    let c = complete_constrained_data(&st, &eos, &grid).unwrap();
    assert!(fields::max_norm3(&c.varpi) < 1e-13);
    assert!(fields::max_abs(&st.v[1]) == 0.0 && fields::max_abs(&st.v[2]) == 0.0);
}

#[test]
fn zero_amplitudes_give_the_background() {
    let eos = EquationOfState::normalized_polytropic(2.0);
    let grid = Grid::unit(16, 8, 8).unwrap();
    let params = InitialData {
        delta: 0.0,
        epsilon: 0.0,
        ..InitialData::default()
    };
    let st = initial_data_nearly_simple_plane_wave(&eos, &grid, &params).unwrap();
    assert!(st.components().iter().all(|c| c.iter().all(|&x| x == 0.0)));
    let c = complete_constrained_data(&st, &eos, &grid).unwrap();
    assert!(fields::max_abs(&c.dt_rho) == 0.0 && fields::max_norm3(&c.dt_v) == 0.0);
}

#[test]
fn vortical_perturbation_carries_vorticity_of_size_epsilon() {
    let eos = EquationOfState::normalized_polytropic(2.0);
    let grid = Grid::unit(32, 16, 16).unwrap();
    for eps in [0.01, 0.04] {
        let params = InitialData {
            epsilon: eps,
            ..InitialData::default()
        };
        let st = initial_data_nearly_simple_plane_wave(&eos, &grid, &params).unwrap();
        let w = fields::max_norm3(&fields::specific_vorticity(&st, &grid).unwrap());
        assert!(w >= 0.5 * eps && w <= 2.0 * eps, "eps {eps}: |varpi| = {w}");
    }
    let irrot = InitialData {
        epsilon: 0.04,
        perturbation: Perturbation::Irrotational,
        ..InitialData::default()
    };
    // Only the truncation error of the discrete curl remains.
    let curl_size = |n: usize| {
        let g = Grid::unit(n, n / 2, n / 2).unwrap();
        let st = initial_data_nearly_simple_plane_wave(&eos, &g, &irrot).unwrap();
        fields::max_norm3(&fields::specific_vorticity(&st, &g).unwrap())
    };
    let (w1, w2) = (curl_size(16), curl_size(32));
    assert!(w2 < 0.01 * irrot.epsilon && w1 / w2 > 12.0, "{w1} -> {w2}");
}

#[test]
fn size_hierarchy_is_enforced() {
    let eos = EquationOfState::normalized_polytropic(2.0);
    let grid = Grid::unit(16, 8, 8).unwrap();
    let params = InitialData {
        delta: 0.1,
        epsilon: 0.05,
        ..InitialData::default()
    };
    assert!(matches!(
        initial_data_nearly_simple_plane_wave(&eos, &grid, &params),
        Err(Error::Config(_))
    ));
    let mut sc = Scenario::new([16, 8, 8], 1.0);
    sc.initial_data = params;
    assert!(sc.validate().errors.iter().any(|e| e.contains("hierarchy")));
}

#[test]
fn scenario_validation() {
    assert!(Scenario::new([32, 16, 16], 1.0).validate().ok());
    let mut sc = Scenario::new([32, 16, 16], 1.0);
    sc.cfl = 1.5;
    sc.mu_stop = 0.0;
    sc.snapshot_every = 0;
    assert_eq!(sc.validate().errors.len(), 3);

    let mut sc = Scenario::new([32, 4, 1], 1.0);
    assert!(!sc.validate().ok());
    sc.grid.n = [32, 1, 1];
    sc.eos = EquationOfState::Chaplygin {
        c0: 0.0,
        c1: 1.0,
        rho_bar: 1.0,
    };
    sc.eikonal = true;
    let d = sc.validate();
    assert!(d.ok() && d.warnings.iter().any(|w| w.contains("Chaplygin")));
}

#[test]
fn scenario_json_defaults_and_unknown_fields() {
    let sc: Scenario = serde_json::from_str(
        r#"{"eos": {"family": "polytropic", "gamma": 2.0, "K": 0.5, "rho_bar": 1.0},
            "grid": {"n": [32, 16, 16]}, "t_max": 1.0}"#,
    )
    .unwrap();
    assert_eq!(sc, Scenario::new([32, 16, 16], 1.0));
    let back: Scenario = serde_json::from_str(&serde_json::to_string(&sc).unwrap()).unwrap();
    assert_eq!(back, sc);
    let typo = r#"{"eos": {"family": "polytropic", "gamma": 2.0, "K": 0.5, "rho_bar": 1.0},
                   "grid": {"n": [32, 16, 16]}, "t_max": 1.0, "cfll": 0.4}"#;
    assert!(serde_json::from_str::<Scenario>(typo).is_err());
}

/// Error of the integrated plane wave against the exact simple wave.
fn simple_wave_error(n: usize, t_end: f64) -> f64 {
    let sc = Scenario::new([n, 1, 1], 1.0);
    let grid = sc.grid.grid().unwrap();
    let mut params = sc.initial_data;
    params.epsilon = 0.0;
    let st = initial_data_nearly_simple_plane_wave(&sc.eos, &grid, &params).unwrap();
    let steps = n / 2;
    let opts = IntegrateOptions {
        dt: Some(t_end / steps as f64),
        max_steps: Some(steps),
        retention: Retention::Ends,
        ..Default::default()
    };
    let tr = integrate_with(&sc, &st, opts).unwrap();
    let t = tr.last.state.t;
    assert!((t - t_end).abs() < 1e-12);
    let profile = params.plane_profile(1.0);
    let ts = riemann::shock_time(&profile, &sc.eos, 4096).unwrap().t_shock;
    let sw = SimpleWave::new(profile, sc.eos);
    (0..grid.len())
        .map(|p| {
            let e = sw.exact(grid.point(p)[0], t, ts).unwrap();
            (tr.last.state.rho[p] - e.rho).abs().max((tr.last.state.v[0][p] - e.v1).abs())
        })
        .fold(0.0, f64::max)
}

#[test]
fn plane_wave_converges_to_exact_simple_wave() {
    // Half the shock time for delta = 0.5.
    let t_end = 0.2;
    let (e1, e2) = (simple_wave_error(128, t_end), simple_wave_error(256, t_end));
    assert!(e2 < 1e-4, "{e2}");
    let order = (e1 / e2).log2();
    assert!(order > 3.5, "order {order}: {e1} -> {e2}");
}

#[test]
fn restart_reproduces_uninterrupted_run() {
    let mut sc = Scenario::new([32, 8, 8], 1.0);
    sc.eikonal = true;
    let grid = sc.grid.grid().unwrap();
    let st = initial_data_nearly_simple_plane_wave(&sc.eos, &grid, &sc.initial_data).unwrap();
    let run = |state: &FluidState, start: usize, steps: usize, eik: Option<EikonalState>, dt: Option<f64>| {
        integrate_with(
            &sc,
            state,
            IntegrateOptions {
                dt,
                max_steps: Some(steps),
                retention: Retention::Ends,
                start_step: start,
                eikonal: eik,
                guard_reference: None,
            },
        )
        .unwrap()
    };
    let whole = run(&st, 0, 8, None, None);
    let first = run(&st, 0, 3, None, None);
    let second = run(&first.last.state, 3, 5, first.last.eikonal.clone(), Some(first.dt));
    assert_eq!(second.last.step, 8);
    assert_eq!(second.last, whole.last);
    assert_eq!(whole.history.step.len(), 9);
    assert_eq!(&whole.history.mu_star[3..], &second.history.mu_star[..]);
}

#[test]
fn trajectory_windows() {
    let mut sc = Scenario::new([16, 1, 1], 1.0);
    sc.initial_data.epsilon = 0.0;
    let grid = sc.grid.grid().unwrap();
    let st = initial_data_nearly_simple_plane_wave(&sc.eos, &grid, &sc.initial_data).unwrap();
    let tr = integrate_with(
        &sc,
        &st,
        IntegrateOptions {
            max_steps: Some(10),
            retention: Retention::Every(2),
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(tr.steps(), vec![0, 2, 4, 6, 8, 10]);
    assert!(matches!(tr.window(4, 2), Err(Error::InsufficientSnapshots { .. })));
    let tr = integrate_with(
        &sc,
        &st,
        IntegrateOptions {
            max_steps: Some(10),
            ..Default::default()
        },
    )
    .unwrap();
    let w = tr.window(4, 2).unwrap();
    assert_eq!(w.iter().map(|f| f.step).collect::<Vec<_>>(), vec![2, 3, 4, 5, 6]);
    assert!(tr.window(1, 2).is_err());
}
