//! Idealized closed loops for checking the decay rates of the middle and
//! outer loops in isolation.
//!
//! Both harnesses evaluate the production control laws inside the RK4
//! derivative, so the feedback is continuous rather than sampled.

use crate::controller::{
    acceleration_decoupler, compute_errors, middle_swing_law, outer_velocity_law, tension_decompose,
    ControlError, Gains, References, Setpoint,
};
use crate::dynamics::{
    DynamicsError, GeneralizedState, ModelTerms, Params, ReducedSwingTerms, Vector8,
};
use crate::spatial::{Vec2, Vec3};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error("the load mass must be positive")]
    MasslessLoad,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct HarnessTrace {
    pub t: Vec<f64>,
    /// Lyapunov value for the swing harness; unused for the tension harness.
    pub v: Vec<f64>,
    /// Per-channel velocity errors for the tension harness.
    pub errors: Vec<Vec3>,
}

fn rk4<const N: usize>(
    x: &nalgebra::SVector<f64, N>,
    dt: f64,
    f: &impl Fn(&nalgebra::SVector<f64, N>) -> Result<nalgebra::SVector<f64, N>, HarnessError>,
) -> Result<nalgebra::SVector<f64, N>, HarnessError> {
    let k1 = f(x)?;
    let k2 = f(&(x + k1 * (dt / 2.0)))?;
    let k3 = f(&(x + k2 * (dt / 2.0)))?;
    let k4 = f(&(x + k3 * dt))?;
    Ok(x + (k1 + (k2 + k3) * 2.0 + k4) * (dt / 6.0))
}

type SwingState = nalgebra::SVector<f64, 10>;

fn swing_state(x: &SwingState) -> GeneralizedState {
    let mut q = Vector8::zeros();
    let mut qdot = Vector8::zeros();
    for i in 0..3 {
        q[i] = x[i];
        qdot[i] = x[5 + i];
    }
    q[6] = x[3];
    q[7] = x[4];
    qdot[6] = x[8];
    qdot[7] = x[9];
    GeneralizedState::new(q, qdot)
}

/// Swing loop with the UAV attitude held level and the suspension point
/// acceleration equal to the decoupler output. The swing reference is zero
/// and the tension command is the static load weight.
pub fn run_swing_harness(
    sigma0: Vec2,
    sigma_dot0: Vec2,
    gains: &Gains,
    params: &Params,
    duration: f64,
    dt: f64,
) -> Result<HarnessTrace, HarnessError> {
    if !(params.m_p > 0.0) {
        return Err(HarnessError::MasslessLoad);
    }
    let f_td = tension_decompose(&(-params.gravity() * params.m_p))?.0;
    let setpoint = Setpoint::default();
    let refs = References::default();
    let eval = |x: &SwingState| -> Result<(SwingState, f64), HarnessError> {
        let s = swing_state(x);
        let terms = ModelTerms::evaluate(&s, params)?;
        let reduced = ReducedSwingTerms::from_terms(&terms, &s, params)?;
        let errors = compute_errors(&s, &Vec3::zeros(), &refs, gains);
        let v = middle_swing_law(&errors, &setpoint, gains, &reduced);
        let xi_ddot = acceleration_decoupler(&s.sigma(), &v, f_td, &terms.drag, params)?;
        let sigma_ddot = reduced.swing_acceleration(&xi_ddot);
        let mut dx = SwingState::zeros();
        for i in 0..3 {
            dx[i] = x[5 + i];
            dx[5 + i] = xi_ddot[i];
        }
        dx[3] = x[8];
        dx[4] = x[9];
        dx[8] = sigma_ddot[0];
        dx[9] = sigma_ddot[1];
        Ok((dx, errors.v_sigma()))
    };
    let mut x = SwingState::zeros();
    x[3] = sigma0[0];
    x[4] = sigma0[1];
    x[8] = sigma_dot0[0];
    x[9] = sigma_dot0[1];
    let steps = (duration / dt).round() as usize;
    let mut trace = HarnessTrace::default();
    for k in 0..=steps {
        let (_, v) = eval(&x)?;
        trace.t.push(k as f64 * dt);
        trace.v.push(v);
        if k < steps {
            x = rk4(&x, dt, &|y| eval(y).map(|r| r.0))?;
        }
    }
    Ok(trace)
}

/// Outer loop with the cable tension equal to its command and the system in
/// rigid translation, so the load obeys `m_p xi_ddot_p = F_t + m_p g + D_xip`.
pub fn run_tension_harness(
    velocity0: Vec3,
    setpoint: &Setpoint,
    gains: &Gains,
    params: &Params,
    duration: f64,
    dt: f64,
) -> Result<HarnessTrace, HarnessError> {
    if !(params.m_p > 0.0) {
        return Err(HarnessError::MasslessLoad);
    }
    let refs = References { xidot_pd: setpoint.xidot_pd, ..Default::default() };
    let eval = |v: &Vec3| -> Result<(Vec3, Vec3), HarnessError> {
        let mut qdot = Vector8::zeros();
        qdot.fixed_rows_mut::<3>(0).copy_from(v);
        let s = GeneralizedState::new(Vector8::zeros(), qdot);
        let terms = ModelTerms::evaluate(&s, params)?;
        let errors = compute_errors(&s, v, &refs, gains);
        let f_t = outer_velocity_law(&terms, &s.qdot, &errors, setpoint, gains, params);
        let accel = (f_t + params.gravity() * params.m_p + terms.drag.load) / params.m_p;
        Ok((accel, errors.e_xidot_p))
    };
    let mut v = velocity0;
    let steps = (duration / dt).round() as usize;
    let mut trace = HarnessTrace::default();
    for k in 0..=steps {
        let (_, e) = eval(&v)?;
        trace.t.push(k as f64 * dt);
        trace.errors.push(e);
        if k < steps {
            v = rk4(&v, dt, &|y| eval(y).map(|r| r.0))?;
        }
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{decay_rate_fit, Window};

    #[test]
    fn swing_harness_decays_at_gain_rate() {
        let p = Params::default();
        let g = Gains::default();
        let tr = run_swing_harness(Vec2::new(0.2, -0.1), Vec2::new(0.0, 0.3), &g, &p, 0.5, 1e-3).unwrap();
        let fit = decay_rate_fit(&tr.t, &tr.v, Window::ALL).unwrap();
        assert!((fit.rate - 6.4).abs() < 1e-3, "{}", fit.rate);
    }

    #[test]
    fn tension_harness_follows_first_order_error() {
        let p = Params::default();
        let g = Gains::default();
        let sp = Setpoint { xidot_pd: Vec3::new(1.0, -1.5, 0.5), ..Default::default() };
        let tr = run_tension_harness(Vec3::zeros(), &sp, &g, &p, 0.3, 1e-3).unwrap();
        for i in 0..3 {
            let e: Vec<f64> = tr.errors.iter().map(|e| e[i].abs()).collect();
            let fit = decay_rate_fit(&tr.t, &e, Window::ALL).unwrap();
            let expect = g.k_xidot_p[i] / p.m_p;
            assert!((fit.rate / expect - 1.0).abs() < 1e-3, "channel {i}: {}", fit.rate);
        }
    }

    #[test]
    fn harnesses_need_a_load() {
        let p = Params { m_p: 0.0, ..Params::default() };
        assert_eq!(
            run_swing_harness(Vec2::zeros(), Vec2::zeros(), &Gains::default(), &p, 0.1, 1e-3),
            Err(HarnessError::MasslessLoad)
        );
    }
}
