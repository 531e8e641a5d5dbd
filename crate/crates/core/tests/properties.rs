use proptest::prelude::*;
use uosl_core::analysis::{rmse, Window};
use uosl_core::controller::{
    allocate, attitude_decoupler, mixer, tension_decompose, tension_vector, thrust_saturation,
};
use uosl_core::dynamics::{
    forward_dynamics, mass_matrix, reduced_swing_terms, suspension_acceleration,
};
use uosl_core::simulator::{Disturbance, Scenario, SetpointSegment};
use uosl_core::spatial::{rot_body_to_inertial, rot_load_to_inertial};
use uosl_core::{ControlInput, EulerAngles, GeneralizedState, Params, SwingAngles, Vec3, Vector8};

const TILT: f64 = 1.4;

fn vec3(range: std::ops::Range<f64>) -> impl Strategy<Value = Vec3> {
    prop::array::uniform3(range).prop_map(Vec3::from)
}

fn state() -> impl Strategy<Value = GeneralizedState> {
    (
        vec3(-5.0..5.0),
        prop::array::uniform2(-TILT..TILT),
        -3.14..3.14f64,
        prop::array::uniform2(-TILT..TILT),
        prop::array::uniform8(-2.0..2.0f64),
    )
        .prop_map(|(xi, tilt, psi, sigma, rates)| {
            let q = Vector8::from_column_slice(&[xi[0], xi[1], xi[2], tilt[0], tilt[1], psi, sigma[0], sigma[1]]);
            GeneralizedState::new(q, Vector8::from(rates))
        })
}

fn downward_force(max: f64) -> impl Strategy<Value = Vec3> {
    (-max..max, -max..max, -max..-1e-3).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

proptest! {
    #[test]
    fn rotations_are_proper(phi in -TILT..TILT, theta in -TILT..TILT, psi in -3.14..3.14f64,
                            alpha in -TILT..TILT, beta in -TILT..TILT) {
        let rb = rot_body_to_inertial(&EulerAngles::new(phi, theta, psi)).unwrap();
        let rp = rot_load_to_inertial(&SwingAngles::new(alpha, beta)).unwrap();
        for r in [rb, rp] {
            prop_assert!((r.transpose() * r - nalgebra::Matrix3::identity()).abs().max() < 1e-12);
            prop_assert!((r.determinant() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn mass_matrix_is_symmetric_positive_definite(s in state()) {
        let m = mass_matrix(&s.q, &Params::default()).unwrap();
        prop_assert!((m - m.transpose()).abs().max() <= 1e-12);
        prop_assert!(m.symmetric_eigenvalues().min() > 0.0);
    }

    #[test]
    fn swing_rows_match_reduced_form(s in state(), thrust in -25.0..-5.0f64, torque in vec3(-0.5..0.5)) {
        let p = Params { drag_quad: [0.05; 3], drag_load: [0.02; 3], ..Params::default() };
        let qdd = forward_dynamics(&s, &ControlInput::new(thrust, torque), &p).unwrap();
        let xi_ddot = suspension_acceleration(&s, &qdd, &p).unwrap();
        let sigma_ddot = reduced_swing_terms(&s, &p).unwrap().swing_acceleration(&xi_ddot);
        prop_assert!((sigma_ddot - qdd.fixed_rows::<2>(6)).abs().max() < 1e-8);
    }

    #[test]
    fn no_offset_decouples_attitude_and_swing_at_level(alpha in -TILT..TILT, beta in -TILT..TILT, psi in -3.14..3.14f64) {
        let p = Params { offset: [0.0; 3], ..Params::default() };
        let q = Vector8::from_column_slice(&[0.0, 0.0, -2.0, 0.0, 0.0, psi, alpha, beta]);
        let m = mass_matrix(&q, &p).unwrap();
        for i in 3..6 {
            for j in 6..8 {
                prop_assert_eq!(m[(i, j)], 0.0);
            }
        }
    }

    #[test]
    fn saturation_respects_bound(f in downward_force(80.0), f_up in 1.0..40.0f64) {
        let (r, flag) = thrust_saturation(&f, f_up).unwrap();
        prop_assert!(r.norm() <= f_up * (1.0 + 1e-12));
        if f.norm() <= f_up {
            prop_assert_eq!(r, f);
            prop_assert!(!flag);
        } else if f[2] >= -f_up {
            prop_assert_eq!(r[2], f[2]);
            prop_assert!(flag);
        }
    }

    #[test]
    fn attitude_decoupler_round_trip(f in downward_force(30.0), psi in -3.14..3.14f64) {
        let (phi, theta, thrust) = attitude_decoupler(&f, psi).unwrap();
        let r = rot_body_to_inertial(&EulerAngles::new(phi, theta, psi)).unwrap();
        prop_assert!((r * Vec3::new(0.0, 0.0, thrust) - f).norm() <= 1e-10 * (1.0 + f.norm()));
    }

    #[test]
    fn tension_decomposition_round_trip(f in downward_force(5.0)) {
        let (m, a, b) = tension_decompose(&f).unwrap();
        prop_assert!((tension_vector(m, a, b).unwrap() - f).norm() <= 1e-10 * (1.0 + f.norm()));
    }

    #[test]
    fn allocate_inverts_mixer(thrust in -40.0..0.0f64, tau in vec3(-2.0..2.0)) {
        let p = Params::default();
        let (f, t) = allocate(&mixer(thrust, &tau, &p).unwrap(), &p);
        prop_assert!((f - thrust).abs() <= 1e-10);
        prop_assert!((t - tau).abs().max() <= 1e-10);
    }

    #[test]
    fn rmse_is_nonnegative_and_zero_only_on_equality(
        series in prop::collection::vec(-10.0..10.0f64, 2..50),
        shift in prop::option::of(1e-6..1.0f64),
    ) {
        let t: Vec<f64> = (0..series.len()).map(|i| i as f64 * 0.01).collect();
        let reference: Vec<f64> = series.iter().map(|v| v + shift.unwrap_or(0.0)).collect();
        let e = rmse(&t, &series, &reference, Window::ALL).unwrap();
        prop_assert!(e >= 0.0);
        prop_assert_eq!(e == 0.0, shift.is_none());
    }

    #[test]
    fn scenario_text_round_trip(duration in 0.0..20.0f64, vy in -3.0..3.0f64, yaw in -180.0..180.0f64,
                                kick_t in 0.0..10.0f64, lx in -0.3..0.0f64) {
        let s = Scenario {
            name: "generated".into(),
            duration: (duration * 1000.0).round() / 1000.0,
            params: Params { offset: [lx, 0.0, -0.05], ..Params::default() },
            setpoints: vec![SetpointSegment { load_velocity: [0.0, vy, 0.0], yaw_deg: yaw, ..Default::default() }],
            disturbances: vec![Disturbance { t: kick_t, swing_rate: [0.5, 0.0] }],
            ..Default::default()
        };
        let back = Scenario::from_toml_str(&s.to_toml_string()).unwrap();
        prop_assert_eq!(back, s);
    }
}
