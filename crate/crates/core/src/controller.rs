//! Cascade controller: load velocity -> desired tension -> swing angles ->
//! suspension point acceleration -> thrust vector -> attitude -> torque ->
//! rotor thrusts.
//!
//! Every function is pure. `cascade_step` runs the whole chain and records
//! the intermediates in the returned [`ControlCommand`].

use std::fmt;

use crate::dynamics::{
    accelerations_with_attitude, ControlInput, DragSet, DynamicsError, GeneralizedState,
    ModelTerms, Params, ReducedSwingTerms, Vector8,
};
use crate::spatial::{
    body_rotation_derivatives, load_rotation_derivatives, rot_load_to_inertial, wrap_angle,
    EulerAngles, Mat3, SwingAngles, Vec2, Vec3,
};
use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

const E3: Vec3 = Vec3::new(0.0, 0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    Outer,
    TensionDecomposition,
    Middle,
    AccelerationDecoupler,
    ThrustSaturation,
    AttitudeDecoupler,
    TensionFeedforward,
    Inner,
    Mixer,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Stage::Outer => "outer velocity loop",
            Stage::TensionDecomposition => "tension decomposition",
            Stage::Middle => "middle swing loop",
            Stage::AccelerationDecoupler => "acceleration decoupler",
            Stage::ThrustSaturation => "thrust saturation",
            Stage::AttitudeDecoupler => "attitude decoupler",
            Stage::TensionFeedforward => "tension feedforward",
            Stage::Inner => "inner attitude loop",
            Stage::Mixer => "mixer",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControlFault {
    #[error("{quantity} = {value} must be negative")]
    Regime { quantity: &'static str, value: f64 },
    #[error("allocation matrix is singular (arm length and torque coefficient must be nonzero)")]
    SingularAllocation,
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{stage}: {fault}")]
pub struct ControlError {
    pub stage: Stage,
    pub fault: ControlFault,
}

impl ControlError {
    pub fn new(stage: Stage, fault: impl Into<ControlFault>) -> Self {
        Self { stage, fault: fault.into() }
    }
}

fn at(stage: Stage) -> impl Fn(DynamicsError) -> ControlError {
    move |e| ControlError::new(stage, e)
}

/// Diagonal gains of the three loops.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Gains {
    pub k_eta: [f64; 3],
    pub k_peta: [f64; 3],
    pub k_sigma: [f64; 2],
    pub k_psigma: [f64; 2],
    pub k_xidot_p: [f64; 3],
}

impl Default for Gains {
    fn default() -> Self {
        Self {
            k_eta: [13.6, 13.6, 5.2],
            k_peta: [13.6, 13.6, 5.2],
            k_sigma: [3.2, 3.2],
            k_psigma: [3.2, 3.2],
            k_xidot_p: [1.4, 1.4, 4.0],
        }
    }
}

impl Gains {
    pub fn validate(&self) -> Result<(), &'static str> {
        let all = self
            .k_eta
            .iter()
            .chain(&self.k_peta)
            .chain(&self.k_sigma)
            .chain(&self.k_psigma)
            .chain(&self.k_xidot_p);
        for k in all {
            if !(k.is_finite() && *k > 0.0) {
                return Err("every gain must be finite and positive");
            }
        }
        Ok(())
    }

    /// Guaranteed attitude decay rate, `2 min(K_eta, K_peta)`.
    pub fn attitude_rate(&self) -> f64 {
        2.0 * self.k_eta.iter().chain(&self.k_peta).cloned().fold(f64::INFINITY, f64::min)
    }

    /// Guaranteed swing decay rate, `2 min(K_sigma, K_psigma)`.
    pub fn swing_rate(&self) -> f64 {
        2.0 * self.k_sigma.iter().chain(&self.k_psigma).cloned().fold(f64::INFINITY, f64::min)
    }
}

/// Load velocity reference, heading, and acceleration feedforwards.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Setpoint {
    pub xidot_pd: Vec3,
    pub psi_d: f64,
    pub eta_ddot_d: Vec3,
    pub sigma_ddot_d: Vec2,
    pub xi_ddot_pd: Vec3,
}

/// Reference values the error system is formed against. Desired Euler and
/// swing rates are zero.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct References {
    pub xidot_pd: Vec3,
    pub eta_d: Vec3,
    pub sigma_d: Vec2,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ErrorState {
    pub e_xidot_p: Vec3,
    pub e_eta: Vec3,
    pub e_peta: Vec3,
    pub e_sigma: Vec2,
    pub e_psigma: Vec2,
}

impl ErrorState {
    pub fn v_eta(&self) -> f64 {
        0.5 * (self.e_eta.norm_squared() + self.e_peta.norm_squared())
    }

    pub fn v_sigma(&self) -> f64 {
        0.5 * (self.e_sigma.norm_squared() + self.e_psigma.norm_squared())
    }
}

/// Actuator command plus the intermediates of the cycle that produced it.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlCommand {
    /// Thrust applied to the plant, rebuilt from the clamped rotor thrusts.
    pub thrust: f64,
    /// Euler-coordinate torque applied to the plant.
    pub torque: Vec3,
    pub rotor_thrusts: [f64; 4],
    /// True when any rotor thrust was clamped.
    pub rotor_saturated: bool,
    /// True when the thrust vector was scaled down to the bound.
    pub thrust_saturated: bool,
    /// Thrust and torque before rotor clamping.
    pub requested_thrust: f64,
    pub requested_torque: Vec3,
    pub f_td_vector: Vec3,
    pub f_td: f64,
    pub sigma_d: Vec2,
    pub phi_d: f64,
    pub theta_d: f64,
    pub psi_d: f64,
    pub eta_ddot_tr: Vec3,
    pub sigma_ddot_v: Vec2,
    pub xi_ddot_d: Vec3,
    pub f_ld: Vec3,
    pub f_t_pred: Vec3,
    pub tau_ft: Vec3,
    pub errors: ErrorState,
}

impl ControlCommand {
    pub fn input(&self) -> ControlInput {
        ControlInput::new(self.thrust, self.torque)
    }
}

/// Which swing acceleration feeds the tension prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SwingAccelSource {
    /// The swing acceleration the middle loop commands this cycle.
    #[default]
    Commanded,
    /// The swing acceleration the model predicts for the commanded thrust and
    /// attitude acceleration.
    Model,
}

/// Error system: `e = ref - actual`, `e_p = ref_rate - rate + K e`.
/// The yaw error is wrapped into `(-pi, pi]`.
pub fn compute_errors(
    state: &GeneralizedState,
    load_velocity: &Vec3,
    refs: &References,
    gains: &Gains,
) -> ErrorState {
    let mut e_eta = refs.eta_d - state.eta().to_vector();
    e_eta[2] = wrap_angle(e_eta[2]);
    let e_sigma = refs.sigma_d - state.sigma().to_vector();
    ErrorState {
        e_xidot_p: refs.xidot_pd - load_velocity,
        e_eta,
        e_peta: -state.eta_dot() + Vec3::from(gains.k_eta).component_mul(&e_eta),
        e_sigma,
        e_psigma: -state.sigma_dot() + Vec2::from(gains.k_sigma).component_mul(&e_sigma),
    }
}

/// Desired tension on the load:
/// `F_td = k e + m_p xi_ddot_pd + C_xi q_dot - m_p g - D_xip`.
pub fn outer_velocity_law(
    terms: &ModelTerms,
    qdot: &Vector8,
    errors: &ErrorState,
    setpoint: &Setpoint,
    gains: &Gains,
    params: &Params,
) -> Vec3 {
    let c_xi = terms.coriolis.fixed_rows::<3>(0) * qdot;
    Vec3::from(gains.k_xidot_p).component_mul(&errors.e_xidot_p) + setpoint.xi_ddot_pd * params.m_p
        + c_xi
        - params.gravity() * params.m_p
        - terms.drag.load
}

/// Splits a desired tension vector into its signed magnitude along the
/// cable and the swing angles that orient it: returns `(F_td, alpha_d, beta_d)`.
pub fn tension_decompose(f_td: &Vec3) -> Result<(f64, f64, f64), ControlError> {
    if !(f_td[2] < 0.0) {
        return Err(ControlError::new(
            Stage::TensionDecomposition,
            ControlFault::Regime { quantity: "desired tension z", value: f_td[2] },
        ));
    }
    let beta = (f_td[0] / f_td[2]).atan();
    let alpha = -(f_td[1] * beta.cos() / f_td[2]).atan();
    let magnitude = f_td[2] / (alpha.cos() * beta.cos());
    Ok((magnitude, alpha, beta))
}

/// Swing attitude `R_p^i` applied to a tension of signed magnitude `f` along
/// the cable.
pub fn tension_vector(f: f64, alpha: f64, beta: f64) -> Result<Vec3, ControlError> {
    let r = rot_load_to_inertial(&SwingAngles::new(alpha, beta))
        .map_err(|e| ControlError::new(Stage::TensionDecomposition, DynamicsError::from(e)))?;
    Ok(r * E3 * f)
}

/// Virtual swing input `sigma_ddot_v`, with `M_sigma xi_ddot_d = -sigma_ddot_v`.
/// The bias uses the full `C_sigma q_dot`.
pub fn middle_swing_law(
    errors: &ErrorState,
    setpoint: &Setpoint,
    gains: &Gains,
    reduced: &ReducedSwingTerms,
) -> Vec2 {
    let k = Vec2::from(gains.k_sigma);
    let kp = Vec2::from(gains.k_psigma);
    let i_minus_k2 = Vec2::repeat(1.0) - k.component_mul(&k);
    let bias = reduced.coriolis_full + reduced.gravity - reduced.drag;
    setpoint.sigma_ddot_d
        + i_minus_k2.component_mul(&errors.e_sigma)
        + (k + kp).component_mul(&errors.e_psigma)
        + reduced.solve_sigma1(&bias)
}

/// Suspension point acceleration that realizes `sigma_ddot_v` while the
/// tension along the cable equals `f_td`.
pub fn acceleration_decoupler(
    sigma: &SwingAngles,
    sigma_ddot_v: &Vec2,
    f_td: f64,
    drag: &DragSet,
    params: &Params,
) -> Result<Vec3, ControlError> {
    let r = rot_load_to_inertial(sigma)
        .map_err(|e| ControlError::new(Stage::AccelerationDecoupler, DynamicsError::from(e)))?;
    let axis = r * E3;
    let kappa = (f_td + axis.dot(&(drag.load + params.gravity() * params.m_p))) / params.m_p;
    let (sa, ca) = sigma.alpha.sin_cos();
    let (sb, cb) = sigma.beta.sin_cos();
    let l = params.cable_length;
    let (a, b) = (sigma_ddot_v[0], sigma_ddot_v[1]);
    Ok(Vec3::new(
        ca * sb * kappa - l * ca * cb * b + l * sa * sb * a,
        l * ca * a - sa * kappa,
        ca * cb * kappa + l * ca * sb * b + l * sa * cb * a,
    ))
}

/// `F_ld = m_q xi_ddot_d + R_pd [0, 0, F_td] - m_q g - D_xiq`.
pub fn desired_thrust_vector(
    xi_ddot_d: &Vec3,
    f_td: f64,
    sigma_d: &Vec2,
    drag: &DragSet,
    params: &Params,
) -> Result<Vec3, ControlError> {
    let tension = tension_vector(f_td, sigma_d[0], sigma_d[1])
        .map_err(|e| ControlError { stage: Stage::AccelerationDecoupler, ..e })?;
    Ok(xi_ddot_d * params.m_q + tension - params.gravity() * params.m_q - drag.quad)
}

/// Bounds the desired thrust vector by `f_up`, keeping its vertical part when
/// possible. Returns the bounded vector and whether it was changed.
pub fn thrust_saturation(f_ld: &Vec3, f_up: f64) -> Result<(Vec3, bool), ControlError> {
    let fz = f_ld[2];
    if !(fz < 0.0) {
        return Err(ControlError::new(
            Stage::ThrustSaturation,
            ControlFault::Regime { quantity: "desired thrust z", value: fz },
        ));
    }
    if fz < -f_up {
        return Ok((Vec3::new(0.0, 0.0, -f_up), true));
    }
    let norm2 = f_ld.norm_squared();
    if norm2 <= f_up * f_up {
        return Ok((*f_ld, false));
    }
    let h = (f_up * f_up - fz * fz).sqrt() / (norm2 - fz * fz).sqrt();
    Ok((Vec3::new(h * f_ld[0], h * f_ld[1], fz), true))
}

/// Roll and pitch that align body thrust with `f_ld` at heading `psi`, and
/// the thrust magnitude: returns `(phi_d, theta_d, F_l)`.
pub fn attitude_decoupler(f_ld: &Vec3, psi: f64) -> Result<(f64, f64, f64), ControlError> {
    let fz = f_ld[2];
    if !(fz < 0.0) {
        return Err(ControlError::new(
            Stage::AttitudeDecoupler,
            ControlFault::Regime { quantity: "thrust z", value: fz },
        ));
    }
    let (sp, cp) = psi.sin_cos();
    let theta = ((f_ld[0] * cp + f_ld[1] * sp) / fz).atan();
    let phi = -((-f_ld[0] * sp + f_ld[1] * cp) * theta.cos() / fz).atan();
    Ok((phi, theta, fz / (phi.cos() * theta.cos())))
}

/// `eta_ddot_tr = (I - K^2) e_eta + (K + K_p) e_peta`.
pub fn attitude_reference_acceleration(errors: &ErrorState, gains: &Gains) -> Vec3 {
    let k = Vec3::from(gains.k_eta);
    let kp = Vec3::from(gains.k_peta);
    (Vec3::repeat(1.0) - k.component_mul(&k)).component_mul(&errors.e_eta)
        + (k + kp).component_mul(&errors.e_peta)
}

/// Predicted load tension and the torque it exerts on the UAV, in Euler
/// coordinates. Load acceleration comes from the total translational balance
/// with the given attitude and swing accelerations; returns `(F_t, tau_Ft)`.
pub fn tension_feedforward(
    state: &GeneralizedState,
    terms: &ModelTerms,
    eta_ddot: &Vec3,
    sigma_ddot: &Vec2,
    thrust: f64,
    params: &Params,
) -> Result<(Vec3, Vec3), ControlError> {
    let err = at(Stage::TensionFeedforward);
    let (_, r_body_ddot) =
        body_rotation_derivatives(&state.eta(), &state.eta_dot(), eta_ddot).map_err(|e| err(e.into()))?;
    let (_, r_load_ddot) = load_rotation_derivatives(&state.sigma(), &state.sigma_dot(), sigma_ddot)
        .map_err(|e| err(e.into()))?;
    let kin = &terms.kinematics;
    let drag = &terms.drag;
    let lift = kin.r_body * E3 * thrust;
    let xi_ddot_p = (lift
        + (r_body_ddot * params.offset() + r_load_ddot * params.cable()) * params.m_q
        + drag.quad
        + drag.load)
        / params.total_mass()
        + params.gravity();
    let f_t = xi_ddot_p * params.m_p - params.gravity() * params.m_p - drag.load;
    Ok((f_t, tension_torque(kin.r_body, &kin.rate_map, &f_t, params)))
}

/// Moment of the cable force on the UAV mapped to Euler coordinates,
/// `R_v^T (-L x R_b^iT F_t)`.
pub fn tension_torque(r_body: Mat3, rate_map: &Mat3, f_t: &Vec3, params: &Params) -> Vec3 {
    rate_map.transpose() * (-params.offset().cross(&(r_body.transpose() * f_t)))
}

/// `tau_eta = J_q (eta_ddot_tr + eta_ddot_d) - tau_Ft + C~_eta eta_dot - D_eta`.
pub fn inner_attitude_law(
    state: &GeneralizedState,
    terms: &ModelTerms,
    eta_ddot_tr: &Vec3,
    setpoint: &Setpoint,
    tau_ft: &Vec3,
    params: &Params,
) -> Vec3 {
    let kin = &terms.kinematics;
    let eta_dot = state.eta_dot();
    kin.attitude_inertia(params) * (eta_ddot_tr + setpoint.eta_ddot_d) - tau_ft
        + kin.attitude_coriolis(params, &eta_dot) * eta_dot
        - terms.drag.rot
}

fn allocation_matrix(params: &Params) -> Matrix4<f64> {
    let lra = params.arm_length / std::f64::consts::SQRT_2;
    let cq = params.torque_coeff;
    Matrix4::new(
        -1.0, -1.0, -1.0, -1.0, //
        -lra, lra, lra, -lra, //
        lra, -lra, lra, -lra, //
        cq, cq, -cq, -cq,
    )
}

/// Thrust and body torques from rotor thrusts.
pub fn allocate(rotors: &[f64; 4], params: &Params) -> (f64, Vec3) {
    let w = allocation_matrix(params) * Vector4::from(*rotors);
    (w[0], Vec3::new(w[1], w[2], w[3]))
}

/// Rotor thrusts producing `(F_l, tau_b)`, before clamping.
pub fn mixer(thrust: f64, tau_b: &Vec3, params: &Params) -> Result<[f64; 4], ControlError> {
    let lra = params.arm_length / std::f64::consts::SQRT_2;
    let cq = params.torque_coeff;
    if lra == 0.0 || cq == 0.0 || !lra.is_finite() || !cq.is_finite() {
        return Err(ControlError::new(Stage::Mixer, ControlFault::SingularAllocation));
    }
    // The rows of the allocation matrix are mutually orthogonal, so the
    // inverse is the transpose scaled by the inverse row norms.
    let scale = Vector4::new(0.25, 0.25 / (lra * lra), 0.25 / (lra * lra), 0.25 / (cq * cq));
    let w = Vector4::new(thrust, tau_b[0], tau_b[1], tau_b[2]).component_mul(&scale);
    let f = allocation_matrix(params).transpose() * w;
    Ok([f[0], f[1], f[2], f[3]])
}

/// Clamps rotor thrusts to the rotor limits; the flag reports any clamping.
pub fn clamp_rotors(rotors: &[f64; 4], params: &Params) -> ([f64; 4], bool) {
    let mut out = *rotors;
    let mut clamped = false;
    for f in out.iter_mut() {
        let c = f.clamp(params.rotor_min, params.rotor_max);
        clamped |= c != *f;
        *f = c;
    }
    (out, clamped)
}

struct Actuation {
    thrust: f64,
    torque: Vec3,
    rotors: [f64; 4],
    saturated: bool,
}

/// Maps `(F_l, tau_eta)` through the mixer with rotor clamping and back.
fn actuate(thrust: f64, tau_eta: &Vec3, rate_map: &Mat3, params: &Params) -> Result<Actuation, ControlError> {
    let rt = rate_map.transpose();
    let tau_b = rt
        .lu()
        .solve(tau_eta)
        .ok_or_else(|| ControlError::new(Stage::Mixer, ControlFault::SingularAllocation))?;
    let raw = mixer(thrust, &tau_b, params)?;
    let (rotors, saturated) = clamp_rotors(&raw, params);
    let (thrust, tau_b) = if saturated { allocate(&rotors, params) } else { (thrust, tau_b) };
    let torque = if saturated { rt * tau_b } else { *tau_eta };
    Ok(Actuation { thrust, torque, rotors, saturated })
}

/// Inner loop shared by both modes: attitude errors, reference acceleration,
/// tension feedforward, torque law and mixing. Fills the attitude-related
/// fields of `cmd`.
#[allow(clippy::too_many_arguments)]
fn inner_loop(
    state: &GeneralizedState,
    terms: &ModelTerms,
    errors: ErrorState,
    setpoint: &Setpoint,
    gains: &Gains,
    params: &Params,
    swing_accel: impl FnOnce(&Vec3) -> Result<Vec2, ControlError>,
    cmd: &mut ControlCommand,
) -> Result<(), ControlError> {
    let eta_ddot_tr = attitude_reference_acceleration(&errors, gains);
    let eta_ddot = eta_ddot_tr + setpoint.eta_ddot_d;
    let sigma_ddot = swing_accel(&eta_ddot)?;
    let (f_t, tau_ft) = tension_feedforward(state, terms, &eta_ddot, &sigma_ddot, cmd.requested_thrust, params)?;
    let tau_eta = inner_attitude_law(state, terms, &eta_ddot_tr, setpoint, &tau_ft, params);
    let act = actuate(cmd.requested_thrust, &tau_eta, &terms.kinematics.rate_map, params)?;
    cmd.eta_ddot_tr = eta_ddot_tr;
    cmd.f_t_pred = f_t;
    cmd.tau_ft = tau_ft;
    cmd.requested_torque = tau_eta;
    cmd.thrust = act.thrust;
    cmd.torque = act.torque;
    cmd.rotor_thrusts = act.rotors;
    cmd.rotor_saturated = act.saturated;
    cmd.errors = errors;
    Ok(())
}

fn model_swing_accel<'a>(
    state: &'a GeneralizedState,
    terms: &'a ModelTerms,
    thrust: f64,
    params: &'a Params,
) -> impl FnOnce(&Vec3) -> Result<Vec2, ControlError> + 'a {
    move |eta_ddot| {
        let qdd = accelerations_with_attitude(terms, &state.qdot, thrust, eta_ddot, params)
            .map_err(at(Stage::TensionFeedforward))?;
        Ok(qdd.fixed_rows::<2>(6).into_owned())
    }
}

/// One cycle of the full cascade.
pub fn cascade_step(
    state: &GeneralizedState,
    setpoint: &Setpoint,
    gains: &Gains,
    params: &Params,
    source: SwingAccelSource,
) -> Result<ControlCommand, ControlError> {
    state.validate().map_err(at(Stage::Outer))?;
    let terms = ModelTerms::evaluate(state, params).map_err(at(Stage::Outer))?;
    let load_velocity = terms.kinematics.load_jacobian * state.qdot;
    let mut refs = References { xidot_pd: setpoint.xidot_pd, ..Default::default() };
    let errors = compute_errors(state, &load_velocity, &refs, gains);
    let f_td_vector = outer_velocity_law(&terms, &state.qdot, &errors, setpoint, gains, params);

    let (f_td, alpha_d, beta_d) = tension_decompose(&f_td_vector)?;
    let sigma_d = Vec2::new(alpha_d, beta_d);
    refs.sigma_d = sigma_d;

    let reduced = ReducedSwingTerms::from_terms(&terms, state, params).map_err(at(Stage::Middle))?;
    let errors = compute_errors(state, &load_velocity, &refs, gains);
    let sigma_ddot_v = middle_swing_law(&errors, setpoint, gains, &reduced);

    let xi_ddot_d = acceleration_decoupler(&state.sigma(), &sigma_ddot_v, f_td, &terms.drag, params)?;
    let f_ld = desired_thrust_vector(&xi_ddot_d, f_td, &sigma_d, &terms.drag, params)?;
    let (f_ld_r, thrust_saturated) = thrust_saturation(&f_ld, params.thrust_limit)?;
    let (phi_d, theta_d, thrust) = attitude_decoupler(&f_ld_r, state.q[5])?;

    refs.eta_d = Vec3::new(phi_d, theta_d, setpoint.psi_d);
    let errors = compute_errors(state, &load_velocity, &refs, gains);

    let mut cmd = ControlCommand {
        requested_thrust: thrust,
        thrust_saturated,
        f_td_vector,
        f_td,
        sigma_d,
        phi_d,
        theta_d,
        psi_d: setpoint.psi_d,
        sigma_ddot_v,
        xi_ddot_d,
        f_ld,
        ..Default::default()
    };
    match source {
        SwingAccelSource::Commanded => {
            let sigma_ddot = reduced.swing_acceleration(&xi_ddot_d);
            inner_loop(state, &terms, errors, setpoint, gains, params, |_| Ok(sigma_ddot), &mut cmd)?;
        }
        SwingAccelSource::Model => {
            let accel = model_swing_accel(state, &terms, thrust, params);
            inner_loop(state, &terms, errors, setpoint, gains, params, accel, &mut cmd)?;
        }
    }
    Ok(cmd)
}

/// Inner loop alone: tracks a fixed attitude while the thrust compensates
/// the tilted weight of UAV and load. The tension prediction uses the model
/// swing acceleration, so the attitude loop is exactly linearized.
pub fn attitude_hold_step(
    state: &GeneralizedState,
    eta_d: &EulerAngles,
    setpoint: &Setpoint,
    gains: &Gains,
    params: &Params,
) -> Result<ControlCommand, ControlError> {
    state.validate().map_err(at(Stage::Inner))?;
    let terms = ModelTerms::evaluate(state, params).map_err(at(Stage::Inner))?;
    let load_velocity = terms.kinematics.load_jacobian * state.qdot;
    let refs = References { xidot_pd: setpoint.xidot_pd, eta_d: eta_d.to_vector(), sigma_d: Vec2::zeros() };
    let errors = compute_errors(state, &load_velocity, &refs, gains);
    let eta = state.eta();
    let thrust = params.hover_thrust() / (eta.phi.cos() * eta.theta.cos());
    let mut cmd = ControlCommand {
        requested_thrust: thrust,
        phi_d: eta_d.phi,
        theta_d: eta_d.theta,
        psi_d: eta_d.psi,
        ..Default::default()
    };
    let accel = model_swing_accel(state, &terms, thrust, params);
    inner_loop(state, &terms, errors, setpoint, gains, params, accel, &mut cmd)?;
    Ok(cmd)
}
