//! Euler-Lagrange model of a quadrotor carrying a slung load whose
//! suspension point sits at a body-frame offset `L` from the UAV's center of
//! mass.
//!
//! Generalized coordinates are `q = [xi_q; eta; sigma]`: UAV position (NED),
//! Z-Y-X Euler angles, and the two swing angles of the cable. The model is
//! `M(q) q_ddot + C(q, q_dot) q_dot + G(q) = B(q) u + F_d` with
//! `u = [F_l, tau_eta]`.
//!
//! `M` is assembled from Jacobian products of the load position, and `C` is
//! built from Christoffel symbols of the closed-form partials `dM/dq`.

use crate::spatial::{
    body_rotation_derivatives, body_rotation_partials, body_rotation_second_partials,
    euler_rate_map, euler_rate_map_partials, load_rotation_partials,
    load_rotation_second_partials, rot_body_to_inertial, rot_load_to_inertial, EulerAngles,
    Mat3, SpatialError, SwingAngles, Vec2, Vec3,
};
use nalgebra::{Cholesky, Matrix2, Matrix2x3, SMatrix, SVector, Vector4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vector8 = SVector<f64, 8>;
pub type Matrix8 = SMatrix<f64, 8, 8>;
pub type Matrix8x4 = SMatrix<f64, 8, 4>;
pub type Matrix3x8 = SMatrix<f64, 3, 8>;

/// Index ranges of the coordinate blocks inside `q`.
pub const XI: std::ops::Range<usize> = 0..3;
pub const ETA: std::ops::Range<usize> = 3..6;
pub const SIGMA: std::ops::Range<usize> = 6..8;

const E3: Vec3 = Vec3::new(0.0, 0.0, 1.0);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error(transparent)]
    Domain(#[from] SpatialError),
    #[error("state is not finite")]
    NonFinite,
    #[error("mass matrix is not positive definite")]
    SingularMass,
    #[error("linear solve residual {residual:e} exceeds tolerance")]
    SolveResidual { residual: f64 },
    #[error("swing inertia block is singular")]
    SingularSwingInertia,
    #[error("invalid parameter {name}: {reason}")]
    InvalidParams { name: &'static str, reason: &'static str },
}

/// Physical parameters of the UAV, the cable and the load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    /// UAV mass (kg).
    pub m_q: f64,
    /// Load mass (kg).
    pub m_p: f64,
    /// Principal moments of inertia of the UAV (kg m^2).
    pub inertia: [f64; 3],
    /// Suspension point in the UAV body frame, relative to its CoM (m).
    pub offset: [f64; 3],
    /// Cable length (m).
    pub cable_length: f64,
    /// Distance from rotor axes to the CoM (m).
    pub arm_length: f64,
    /// Yaw reaction torque per newton of rotor thrust (m).
    pub torque_coeff: f64,
    pub g: f64,
    /// Quadratic drag coefficients on UAV velocity (N s^2/m^2).
    pub drag_quad: [f64; 3],
    /// Quadratic drag coefficients on load velocity (N s^2/m^2).
    pub drag_load: [f64; 3],
    /// Quadratic drag coefficients on Euler rates (N m s^2).
    pub drag_rot: [f64; 3],
    /// Bound on the magnitude of the total thrust vector (N).
    pub thrust_limit: f64,
    pub rotor_min: f64,
    pub rotor_max: f64,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            m_q: 1.32,
            m_p: 0.066,
            inertia: [12.71e-3, 12.71e-3, 2.37e-3],
            offset: [-0.12, 0.0, -0.05],
            cable_length: 1.0,
            arm_length: 0.225,
            torque_coeff: 0.016,
            g: 9.81,
            drag_quad: [0.0; 3],
            drag_load: [0.0; 3],
            drag_rot: [0.0; 3],
            thrust_limit: 30.0,
            rotor_min: 0.0,
            rotor_max: 15.0,
        }
    }
}

impl Params {
    pub fn offset(&self) -> Vec3 {
        Vec3::from(self.offset)
    }

    /// Vector from the suspension point to the load in the load frame.
    pub fn cable(&self) -> Vec3 {
        Vec3::new(0.0, 0.0, self.cable_length)
    }

    pub fn inertia_matrix(&self) -> Mat3 {
        Mat3::from_diagonal(&Vec3::from(self.inertia))
    }

    pub fn gravity(&self) -> Vec3 {
        E3 * self.g
    }

    pub fn total_mass(&self) -> f64 {
        self.m_q + self.m_p
    }

    /// Weight of UAV plus load as a NED thrust (negative).
    pub fn hover_thrust(&self) -> f64 {
        -self.total_mass() * self.g
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        let finite = [
            self.m_q,
            self.m_p,
            self.cable_length,
            self.arm_length,
            self.torque_coeff,
            self.g,
            self.thrust_limit,
            self.rotor_min,
            self.rotor_max,
        ]
        .iter()
        .chain(self.inertia.iter())
        .chain(self.offset.iter())
        .chain(self.drag_quad.iter())
        .chain(self.drag_load.iter())
        .chain(self.drag_rot.iter())
        .all(|x| x.is_finite());
        if !finite {
            return Err(DynamicsError::InvalidParams { name: "params", reason: "non-finite value" });
        }
        let positive = |name, v: f64| {
            if v > 0.0 {
                Ok(())
            } else {
                Err(DynamicsError::InvalidParams { name, reason: "must be positive" })
            }
        };
        positive("m_q", self.m_q)?;
        positive("cable_length", self.cable_length)?;
        positive("thrust_limit", self.thrust_limit)?;
        for (name, v) in ["inertia[0]", "inertia[1]", "inertia[2]"].into_iter().zip(self.inertia) {
            positive(name, v)?;
        }
        if self.m_p < 0.0 {
            return Err(DynamicsError::InvalidParams { name: "m_p", reason: "must be non-negative" });
        }
        if self.g < 0.0 {
            return Err(DynamicsError::InvalidParams { name: "g", reason: "must be non-negative" });
        }
        let drag_ok = self
            .drag_quad
            .iter()
            .chain(self.drag_load.iter())
            .chain(self.drag_rot.iter())
            .all(|c| *c >= 0.0);
        if !drag_ok {
            return Err(DynamicsError::InvalidParams { name: "drag", reason: "coefficients must be non-negative" });
        }
        if self.rotor_min > self.rotor_max {
            return Err(DynamicsError::InvalidParams { name: "rotor_min", reason: "exceeds rotor_max" });
        }
        Ok(())
    }
}

/// Generalized coordinates and their rates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneralizedState {
    pub q: Vector8,
    pub qdot: Vector8,
}

impl GeneralizedState {
    pub fn new(q: Vector8, qdot: Vector8) -> Self {
        Self { q, qdot }
    }

    pub fn at_rest(position: Vec3, eta: EulerAngles, sigma: SwingAngles) -> Self {
        let mut q = Vector8::zeros();
        q.fixed_rows_mut::<3>(0).copy_from(&position);
        q.fixed_rows_mut::<3>(3).copy_from(&eta.to_vector());
        q.fixed_rows_mut::<2>(6).copy_from(&sigma.to_vector());
        Self { q, qdot: Vector8::zeros() }
    }

    pub fn xi_q(&self) -> Vec3 {
        self.q.fixed_rows::<3>(0).into_owned()
    }
    pub fn eta(&self) -> EulerAngles {
        EulerAngles::new(self.q[3], self.q[4], self.q[5])
    }
    pub fn sigma(&self) -> SwingAngles {
        SwingAngles::new(self.q[6], self.q[7])
    }
    pub fn xi_q_dot(&self) -> Vec3 {
        self.qdot.fixed_rows::<3>(0).into_owned()
    }
    pub fn eta_dot(&self) -> Vec3 {
        self.qdot.fixed_rows::<3>(3).into_owned()
    }
    pub fn sigma_dot(&self) -> Vec2 {
        self.qdot.fixed_rows::<2>(6).into_owned()
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        if !self.q.iter().chain(self.qdot.iter()).all(|x| x.is_finite()) {
            return Err(DynamicsError::NonFinite);
        }
        self.eta().validate()?;
        self.sigma().validate()?;
        Ok(())
    }
}

/// Thrust along body `z` (NED, negative lifts) and the Euler-coordinate torque.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlInput {
    pub thrust: f64,
    pub torque: Vec3,
}

impl ControlInput {
    pub fn new(thrust: f64, torque: Vec3) -> Self {
        Self { thrust, torque }
    }

    pub fn as_vector(&self) -> Vector4<f64> {
        Vector4::new(self.thrust, self.torque[0], self.torque[1], self.torque[2])
    }
}

/// Aerodynamic drag terms entering the generalized force.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DragSet {
    pub quad: Vec3,
    pub load: Vec3,
    pub rot: Vec3,
    pub swing: Vec2,
}

impl DragSet {
    /// `F_d = [D_xiq + D_xip; D_eta; D_sigma]`.
    pub fn generalized(&self) -> Vector8 {
        let mut f = Vector8::zeros();
        f.fixed_rows_mut::<3>(0).copy_from(&(self.quad + self.load));
        f.fixed_rows_mut::<3>(3).copy_from(&self.rot);
        f.fixed_rows_mut::<2>(6).copy_from(&self.swing);
        f
    }
}

/// Rotation matrices and their partials at one configuration.
#[derive(Debug, Clone)]
pub struct Kinematics {
    pub eta: EulerAngles,
    pub sigma: SwingAngles,
    pub r_body: Mat3,
    pub r_load: Mat3,
    pub rate_map: Mat3,
    pub body_partials: [Mat3; 3],
    pub body_second: [[Mat3; 3]; 3],
    pub load_partials: [Mat3; 2],
    pub load_second: [[Mat3; 2]; 2],
    pub rate_map_partials: [Mat3; 3],
    /// Jacobian of the load position with respect to `q`.
    pub load_jacobian: Matrix3x8,
}

impl Kinematics {
    pub fn new(q: &Vector8, params: &Params) -> Result<Self, DynamicsError> {
        let eta = EulerAngles::new(q[3], q[4], q[5]);
        let sigma = SwingAngles::new(q[6], q[7]);
        let r_body = rot_body_to_inertial(&eta)?;
        let r_load = rot_load_to_inertial(&sigma)?;
        let rate_map = euler_rate_map(&eta)?;
        let body_partials = body_rotation_partials(&eta);
        let load_partials = load_rotation_partials(&sigma);
        let offset = params.offset();
        let cable = params.cable();
        let mut load_jacobian = Matrix3x8::zeros();
        load_jacobian.fixed_view_mut::<3, 3>(0, 0).fill_with_identity();
        for k in 0..3 {
            load_jacobian.set_column(3 + k, &(body_partials[k] * offset));
        }
        for k in 0..2 {
            load_jacobian.set_column(6 + k, &(load_partials[k] * cable));
        }
        Ok(Self {
            eta,
            sigma,
            r_body,
            r_load,
            rate_map,
            body_partials,
            body_second: body_rotation_second_partials(&eta),
            load_partials,
            load_second: load_rotation_second_partials(&sigma),
            rate_map_partials: euler_rate_map_partials(&eta),
            load_jacobian,
        })
    }

    /// Rotational inertia in Euler coordinates, `J_q = R_v^T I_q R_v`.
    pub fn attitude_inertia(&self, params: &Params) -> Mat3 {
        self.rate_map.transpose() * params.inertia_matrix() * self.rate_map
    }

    fn attitude_inertia_partials(&self, params: &Params) -> [Mat3; 3] {
        let inertia = params.inertia_matrix();
        let base = inertia * self.rate_map;
        let mut out = [Mat3::zeros(); 3];
        for (k, d) in self.rate_map_partials.iter().enumerate() {
            let half = d.transpose() * base;
            out[k] = half + half.transpose();
        }
        out
    }

    /// Coriolis matrix of the bare UAV rotation, from Christoffel symbols of `J_q`.
    pub fn attitude_coriolis(&self, params: &Params, eta_dot: &Vec3) -> Mat3 {
        let dj = self.attitude_inertia_partials(params);
        Mat3::from_fn(|k, j| {
            (0..3)
                .map(|i| 0.5 * (dj[i][(k, j)] + dj[j][(k, i)] - dj[k][(i, j)]) * eta_dot[i])
                .sum()
        })
    }

    /// `dM/dq_i` for every coordinate. The translational partials vanish.
    pub fn mass_matrix_partials(&self, params: &Params) -> [Matrix8; 8] {
        let mut out = [Matrix8::zeros(); 8];
        let dj = self.attitude_inertia_partials(params);
        let offset = params.offset();
        let cable = params.cable();
        let jp = &self.load_jacobian;
        for k in 0..3 {
            let mut d_jp = Matrix3x8::zeros();
            for j in 0..3 {
                d_jp.set_column(3 + j, &(self.body_second[j][k] * offset));
            }
            let cross = d_jp.transpose() * jp;
            let mut dm = (cross + cross.transpose()) * params.m_p;
            let mut block = dm.fixed_view_mut::<3, 3>(3, 3);
            block += dj[k];
            out[3 + k] = dm;
        }
        for k in 0..2 {
            let mut d_jp = Matrix3x8::zeros();
            for j in 0..2 {
                d_jp.set_column(6 + j, &(self.load_second[j][k] * cable));
            }
            let cross = d_jp.transpose() * jp;
            out[6 + k] = (cross + cross.transpose()) * params.m_p;
        }
        out
    }

    pub fn mass_matrix(&self, params: &Params) -> Matrix8 {
        let mut m = self.load_jacobian.transpose() * self.load_jacobian * params.m_p;
        for i in 0..3 {
            m[(i, i)] += params.m_q;
        }
        let mut block = m.fixed_view_mut::<3, 3>(3, 3);
        block += self.attitude_inertia(params);
        m
    }
}

pub fn mass_matrix(q: &Vector8, params: &Params) -> Result<Matrix8, DynamicsError> {
    Ok(Kinematics::new(q, params)?.mass_matrix(params))
}

pub fn mass_matrix_partials(q: &Vector8, params: &Params) -> Result<[Matrix8; 8], DynamicsError> {
    Ok(Kinematics::new(q, params)?.mass_matrix_partials(params))
}

/// `c_kj = 1/2 sum_i (dm_kj/dq_i + dm_ki/dq_j - dm_ij/dq_k) qdot_i`.
pub fn christoffel_coriolis(dm: &[Matrix8; 8], qdot: &Vector8) -> Matrix8 {
    let mut c = Matrix8::zeros();
    for (i, dmi) in dm.iter().enumerate() {
        if qdot[i] != 0.0 {
            c += dmi * (0.5 * qdot[i]);
        }
    }
    for k in 0..8 {
        for j in 0..8 {
            let mut acc = 0.0;
            for i in 0..8 {
                acc += (dm[j][(k, i)] - dm[k][(i, j)]) * qdot[i];
            }
            c[(k, j)] += 0.5 * acc;
        }
    }
    c
}

pub fn coriolis_matrix(
    q: &Vector8,
    qdot: &Vector8,
    params: &Params,
) -> Result<Matrix8, DynamicsError> {
    let dm = mass_matrix_partials(q, params)?;
    Ok(christoffel_coriolis(&dm, qdot))
}

/// Gradient of the potential `V = -m_q g z_q - m_p g z_p`.
pub fn gravity_vector(q: &Vector8, params: &Params) -> Result<Vector8, DynamicsError> {
    let eta = EulerAngles::new(q[3], q[4], q[5]);
    let sigma = SwingAngles::new(q[6], q[7]);
    eta.validate()?;
    sigma.validate()?;
    let (sf, cf) = eta.phi.sin_cos();
    let (st, ct) = eta.theta.sin_cos();
    let (sa, ca) = sigma.alpha.sin_cos();
    let (sb, cb) = sigma.beta.sin_cos();
    let [lx, ly, lz] = params.offset;
    let l = params.cable_length;
    let w = params.m_p * params.g;
    Ok(Vector8::from_column_slice(&[
        0.0,
        0.0,
        -params.total_mass() * params.g,
        -w * ct * (cf * ly - sf * lz),
        w * (ct * lx + st * (sf * ly + cf * lz)),
        0.0,
        w * sa * cb * l,
        w * ca * sb * l,
    ]))
}

/// Control effectiveness `B`: thrust along the body `z` axis drives the
/// translational rows and the torque enters the Euler rows directly.
pub fn control_effectiveness(q: &Vector8) -> Result<Matrix8x4, DynamicsError> {
    let r = rot_body_to_inertial(&EulerAngles::new(q[3], q[4], q[5]))?;
    Ok(effectiveness_from_rotation(&r))
}

fn effectiveness_from_rotation(r_body: &Mat3) -> Matrix8x4 {
    let mut b = Matrix8x4::zeros();
    b.fixed_view_mut::<3, 1>(0, 0).copy_from(&r_body.column(2));
    b.fixed_view_mut::<3, 3>(3, 1).fill_with_identity();
    b
}

fn quadratic_drag(coeff: &[f64; 3], v: &Vec3) -> Vec3 {
    Vec3::from_fn(|i, _| -coeff[i] * v[i].abs() * v[i])
}

fn drag_with(kin: &Kinematics, qdot: &Vector8, params: &Params) -> DragSet {
    let v_quad = qdot.fixed_rows::<3>(0).into_owned();
    let v_load = kin.load_jacobian * qdot;
    let eta_dot = qdot.fixed_rows::<3>(3).into_owned();
    let quad = quadratic_drag(&params.drag_quad, &v_quad);
    let load = quadratic_drag(&params.drag_load, &v_load);
    let rot = quadratic_drag(&params.drag_rot, &eta_dot);
    let moment = params.cable().cross(&(kin.r_load.transpose() * load));
    DragSet { quad, load, rot, swing: Vec2::new(moment[0], moment[1]) }
}

pub fn drag_forces(
    q: &Vector8,
    qdot: &Vector8,
    params: &Params,
) -> Result<DragSet, DynamicsError> {
    let kin = Kinematics::new(q, params)?;
    Ok(drag_with(&kin, qdot, params))
}

/// All model terms at one state, evaluated once.
#[derive(Debug, Clone)]
pub struct ModelTerms {
    pub kinematics: Kinematics,
    pub mass: Matrix8,
    pub mass_partials: [Matrix8; 8],
    pub coriolis: Matrix8,
    pub gravity: Vector8,
    pub effectiveness: Matrix8x4,
    pub drag: DragSet,
}

impl ModelTerms {
    pub fn evaluate(state: &GeneralizedState, params: &Params) -> Result<Self, DynamicsError> {
        state.validate()?;
        let kinematics = Kinematics::new(&state.q, params)?;
        let mass = kinematics.mass_matrix(params);
        let mass_partials = kinematics.mass_matrix_partials(params);
        let coriolis = christoffel_coriolis(&mass_partials, &state.qdot);
        let gravity = gravity_vector(&state.q, params)?;
        let effectiveness = effectiveness_from_rotation(&kinematics.r_body);
        let drag = drag_with(&kinematics, &state.qdot, params);
        Ok(Self { kinematics, mass, mass_partials, coriolis, gravity, effectiveness, drag })
    }

    /// `B u + F_d - C q_dot - G`.
    pub fn rhs(&self, qdot: &Vector8, u: &ControlInput) -> Vector8 {
        self.effectiveness * u.as_vector() + self.drag.generalized()
            - self.coriolis * qdot
            - self.gravity
    }
}

/// Solves `M x = rhs` by Cholesky factorization and checks the residual.
///
/// With a massless load the swing rows of `M` vanish; the swing
/// coordinates then carry no dynamics and only the UAV block is solved.
pub fn solve_accelerations(
    mass: &Matrix8,
    rhs: &Vector8,
    params: &Params,
) -> Result<Vector8, DynamicsError> {
    let x = if params.m_p == 0.0 {
        let m6 = mass.fixed_view::<6, 6>(0, 0).into_owned();
        let r6 = rhs.fixed_rows::<6>(0).into_owned();
        let chol = Cholesky::new(m6).ok_or(DynamicsError::SingularMass)?;
        let x6 = chol.solve(&r6);
        let mut x = Vector8::zeros();
        x.fixed_rows_mut::<6>(0).copy_from(&x6);
        x
    } else {
        let chol = Cholesky::new(*mass).ok_or(DynamicsError::SingularMass)?;
        chol.solve(rhs)
    };
    if !x.iter().all(|v| v.is_finite()) {
        return Err(DynamicsError::SingularMass);
    }
    let residual = (mass * x - rhs).norm();
    if residual > 1e-9 * rhs.norm() + 1e-12 {
        return Err(DynamicsError::SolveResidual { residual });
    }
    Ok(x)
}

/// `q_ddot` solving `M q_ddot = B u + F_d - C q_dot - G`.
pub fn forward_dynamics(
    state: &GeneralizedState,
    u: &ControlInput,
    params: &Params,
) -> Result<Vector8, DynamicsError> {
    let terms = ModelTerms::evaluate(state, params)?;
    solve_accelerations(&terms.mass, &terms.rhs(&state.qdot, u), params)
}

/// Accelerations of the translational and swing coordinates when the Euler
/// accelerations are prescribed. Rows `xi` and `sigma` of the model are
/// solved with `eta_ddot` moved to the right-hand side; the torque input
/// does not enter those rows.
pub fn accelerations_with_attitude(
    terms: &ModelTerms,
    qdot: &Vector8,
    thrust: f64,
    eta_ddot: &Vec3,
    params: &Params,
) -> Result<Vector8, DynamicsError> {
    let u = ControlInput::new(thrust, Vec3::zeros());
    let rhs = terms.rhs(qdot, &u) - terms.mass.fixed_columns::<3>(3) * eta_ddot;
    let free: &[usize] = if params.m_p == 0.0 { &[0, 1, 2] } else { &[0, 1, 2, 6, 7] };
    let n = free.len();
    let a = nalgebra::DMatrix::from_fn(n, n, |i, j| terms.mass[(free[i], free[j])]);
    let b = nalgebra::DVector::from_fn(n, |i, _| rhs[free[i]]);
    let x = Cholesky::new(a).ok_or(DynamicsError::SingularMass)?.solve(&b);
    let mut qddot = Vector8::zeros();
    for (i, &k) in free.iter().enumerate() {
        qddot[k] = x[i];
    }
    qddot.fixed_rows_mut::<3>(3).copy_from(eta_ddot);
    if !qddot.iter().all(|v| v.is_finite()) {
        return Err(DynamicsError::SingularMass);
    }
    Ok(qddot)
}

/// Cable tension acting on the load, `F_t = R F_l - m_q xi_q_ddot + m_q g + D_xiq`,
/// together with its signed magnitude along the cable axis `R_p^i e3`.
/// A taut cable pulls the load toward the UAV, so the magnitude is negative.
pub fn cable_tension(
    state: &GeneralizedState,
    qddot: &Vector8,
    u: &ControlInput,
    params: &Params,
) -> Result<(Vec3, f64), DynamicsError> {
    let kin = Kinematics::new(&state.q, params)?;
    let drag = drag_with(&kin, &state.qdot, params);
    let xi_q_ddot = qddot.fixed_rows::<3>(0).into_owned();
    let force = kin.r_body.column(2) * u.thrust - xi_q_ddot * params.m_q
        + params.gravity() * params.m_q
        + drag.quad;
    let magnitude = (kin.r_load * E3).dot(&force);
    Ok((force, magnitude))
}

/// Suspension point `xi = xi_q + R_b^i L`.
pub fn suspension_point(q: &Vector8, params: &Params) -> Result<Vec3, DynamicsError> {
    let r = rot_body_to_inertial(&EulerAngles::new(q[3], q[4], q[5]))?;
    Ok(q.fixed_rows::<3>(0) + r * params.offset())
}

pub fn suspension_velocity(state: &GeneralizedState, params: &Params) -> Result<Vec3, DynamicsError> {
    let (r_dot, _) =
        body_rotation_derivatives(&state.eta(), &state.eta_dot(), &Vec3::zeros())?;
    Ok(state.xi_q_dot() + r_dot * params.offset())
}

/// Suspension point acceleration `xi_q_ddot + d2(R_b^i)/dt2 L`.
pub fn suspension_acceleration(
    state: &GeneralizedState,
    qddot: &Vector8,
    params: &Params,
) -> Result<Vec3, DynamicsError> {
    let eta_ddot = qddot.fixed_rows::<3>(3).into_owned();
    let (_, r_ddot) = body_rotation_derivatives(&state.eta(), &state.eta_dot(), &eta_ddot)?;
    Ok(qddot.fixed_rows::<3>(0) + r_ddot * params.offset())
}

/// Load position `xi_p = xi_q + R_b^i L + R_p^i l`.
pub fn load_position(q: &Vector8, params: &Params) -> Result<Vec3, DynamicsError> {
    let r = rot_load_to_inertial(&SwingAngles::new(q[6], q[7]))?;
    Ok(suspension_point(q, params)? + r * params.cable())
}

pub fn load_velocity(state: &GeneralizedState, params: &Params) -> Result<Vec3, DynamicsError> {
    Ok(Kinematics::new(&state.q, params)?.load_jacobian * state.qdot)
}

pub fn kinetic_energy(state: &GeneralizedState, params: &Params) -> Result<f64, DynamicsError> {
    let m = mass_matrix(&state.q, params)?;
    Ok(0.5 * state.qdot.dot(&(m * state.qdot)))
}

pub fn potential_energy(q: &Vector8, params: &Params) -> Result<f64, DynamicsError> {
    let z_p = load_position(q, params)?[2];
    Ok(-params.m_q * params.g * q[2] - params.m_p * params.g * z_p)
}

pub fn total_energy(state: &GeneralizedState, params: &Params) -> Result<f64, DynamicsError> {
    Ok(kinetic_energy(state, params)? + potential_energy(&state.q, params)?)
}

/// Power delivered by the control and drag forces, `q_dot^T (B u + F_d)`.
pub fn input_power(
    state: &GeneralizedState,
    u: &ControlInput,
    params: &Params,
) -> Result<f64, DynamicsError> {
    let kin = Kinematics::new(&state.q, params)?;
    let drag = drag_with(&kin, &state.qdot, params);
    let force = effectiveness_from_rotation(&kin.r_body) * u.as_vector() + drag.generalized();
    Ok(state.qdot.dot(&force))
}

/// Blocks of the swing rows used by the middle loop.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedSwingTerms {
    /// `diag(m_77, m_88)`.
    pub m_sigma1: Matrix2<f64>,
    /// Swing/translation coupling `[m_71 m_72 m_73; m_81 0 m_83]`.
    pub m_sigma2: Matrix2x3<f64>,
    /// `M_sigma1^-1 M_sigma2`.
    pub m_sigma: Matrix2x3<f64>,
    /// `C_sigma diag(I3, 0, I2) q_tilde_dot`, using the suspension point velocity.
    pub coriolis_reduced: Vec2,
    /// `C_sigma q_dot` over all coordinates.
    pub coriolis_full: Vec2,
    pub gravity: Vec2,
    pub drag: Vec2,
}

impl ReducedSwingTerms {
    pub fn from_terms(
        terms: &ModelTerms,
        state: &GeneralizedState,
        params: &Params,
    ) -> Result<Self, DynamicsError> {
        let m_sigma1 = terms.mass.fixed_view::<2, 2>(6, 6).into_owned();
        let m_sigma2 = terms.mass.fixed_view::<2, 3>(6, 0).into_owned();
        if m_sigma1.determinant().abs() <= f64::EPSILON * m_sigma1.norm_squared() {
            return Err(DynamicsError::SingularSwingInertia);
        }
        let inv = m_sigma1.try_inverse().ok_or(DynamicsError::SingularSwingInertia)?;
        let r_dot: Mat3 = terms
            .kinematics
            .body_partials
            .iter()
            .zip(state.eta_dot().iter())
            .map(|(d, w)| d * *w)
            .sum();
        let xi_dot = state.xi_q_dot() + r_dot * params.offset();
        let c_sigma = terms.coriolis.fixed_view::<2, 8>(6, 0);
        let coriolis_reduced = c_sigma.fixed_view::<2, 3>(0, 0) * xi_dot
            + c_sigma.fixed_view::<2, 2>(0, 6) * state.sigma_dot();
        let coriolis_full = c_sigma * state.qdot;
        Ok(Self {
            m_sigma1,
            m_sigma2,
            m_sigma: inv * m_sigma2,
            coriolis_reduced,
            coriolis_full,
            gravity: terms.gravity.fixed_rows::<2>(6).into_owned(),
            drag: terms.drag.swing,
        })
    }

    /// Swing acceleration driven by the suspension point acceleration:
    /// `sigma_ddot = -M_sigma xi_ddot - M_sigma1^-1 (C~ q~_dot + G_sigma - D_sigma)`.
    pub fn swing_acceleration(&self, xi_ddot: &Vec3) -> Vec2 {
        let bias = self.coriolis_reduced + self.gravity - self.drag;
        -self.m_sigma * xi_ddot - self.solve_sigma1(&bias)
    }

    /// `M_sigma1^-1 v`.
    pub fn solve_sigma1(&self, v: &Vec2) -> Vec2 {
        // Invertibility was checked on construction.
        self.m_sigma1.try_inverse().map(|inv| inv * v).unwrap_or_else(Vec2::zeros)
    }
}

pub fn reduced_swing_terms(
    state: &GeneralizedState,
    params: &Params,
) -> Result<ReducedSwingTerms, DynamicsError> {
    let terms = ModelTerms::evaluate(state, params)?;
    ReducedSwingTerms::from_terms(&terms, state, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_state(rng: &mut ChaCha8Rng) -> GeneralizedState {
        let mut q = Vector8::zeros();
        let mut qdot = Vector8::zeros();
        for i in 0..3 {
            q[i] = rng.gen_range(-5.0..5.0);
        }
        for i in 3..8 {
            q[i] = rng.gen_range(-1.2..1.2);
        }
        q[5] = rng.gen_range(-3.1..3.1);
        for i in 0..8 {
            qdot[i] = rng.gen_range(-2.0..2.0);
        }
        GeneralizedState::new(q, qdot)
    }

    fn defaults_without_offset() -> Params {
        Params { offset: [0.0; 3], ..Params::default() }
    }

    #[test]
    fn translational_block_is_total_mass() {
        let p = Params::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let s = random_state(&mut rng);
            let m = mass_matrix(&s.q, &p).unwrap();
            let block = m.fixed_view::<3, 3>(0, 0).into_owned();
            assert_eq!(block, Mat3::identity() * (p.m_q + p.m_p));
            assert_eq!(m[(7, 1)], 0.0);
            assert_eq!(m[(1, 7)], 0.0);
        }
    }

    #[test]
    fn pendulum_inertia_at_rest() {
        let p = defaults_without_offset();
        let m = mass_matrix(&Vector8::zeros(), &p).unwrap();
        assert_relative_eq!(m[(6, 6)], 0.066, epsilon = 1e-15);
        assert_relative_eq!(m[(7, 7)], 0.066, epsilon = 1e-15);
    }

    #[test]
    fn mass_matrix_symmetric_positive_definite() {
        let p = Params::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..1000 {
            let s = random_state(&mut rng);
            let m = mass_matrix(&s.q, &p).unwrap();
            assert!((m - m.transpose()).abs().max() <= 1e-12);
            let eig = m.symmetric_eigenvalues();
            assert!(eig.min() > 0.0, "min eigenvalue {}", eig.min());
        }
    }

    #[test]
    fn gravity_vector_printed_values() {
        let p = Params::default();
        let g = gravity_vector(&Vector8::zeros(), &p).unwrap();
        assert_relative_eq!(g[2], -13.59666, epsilon = 1e-5);
        assert_relative_eq!(g[4], -0.0776952, epsilon = 1e-6);
        assert_eq!(g[3], 0.0);
        assert_eq!(g[5], 0.0);
        assert_eq!(g[6], 0.0);
        assert_eq!(g[7], 0.0);
    }

    #[test]
    fn gravity_is_potential_gradient() {
        let p = Params::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = 1e-6;
        for _ in 0..100 {
            let s = random_state(&mut rng);
            let g = gravity_vector(&s.q, &p).unwrap();
            for i in 0..8 {
                let mut qp = s.q;
                let mut qm = s.q;
                qp[i] += h;
                qm[i] -= h;
                let fd = (potential_energy(&qp, &p).unwrap() - potential_energy(&qm, &p).unwrap()) / (2.0 * h);
                assert!((fd - g[i]).abs() < 1e-7, "coordinate {i}: {fd} vs {}", g[i]);
            }
        }
    }

    #[test]
    fn coriolis_vanishes_without_velocity() {
        let p = Params::default();
        let q = Vector8::from_column_slice(&[1.0, 2.0, 3.0, 0.2, -0.3, 0.5, 0.4, -0.1]);
        let c = coriolis_matrix(&q, &Vector8::zeros(), &p).unwrap();
        assert_eq!(c, Matrix8::zeros());
    }

    #[test]
    fn mass_partials_match_finite_differences() {
        let p = Params::default();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let h = 1e-6;
        for _ in 0..50 {
            let s = random_state(&mut rng);
            let dm = mass_matrix_partials(&s.q, &p).unwrap();
            for i in 0..8 {
                let mut qp = s.q;
                let mut qm = s.q;
                qp[i] += h;
                qm[i] -= h;
                let fd = (mass_matrix(&qp, &p).unwrap() - mass_matrix(&qm, &p).unwrap()) / (2.0 * h);
                assert!((fd - dm[i]).abs().max() < 1e-7);
            }
        }
    }

    #[test]
    fn mdot_minus_two_c_is_skew() {
        let p = Params::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let s = random_state(&mut rng);
            let dm = mass_matrix_partials(&s.q, &p).unwrap();
            let c = christoffel_coriolis(&dm, &s.qdot);
            let m_dot: Matrix8 = dm.iter().zip(s.qdot.iter()).map(|(d, v)| d * *v).sum();
            let n = m_dot - c * 2.0;
            assert!((n + n.transpose()).abs().max() < 1e-12);
        }
    }

    #[test]
    fn drag_vanishes_at_rest_or_without_coefficients() {
        let mut p = Params::default();
        p.drag_quad = [0.1; 3];
        p.drag_load = [0.2; 3];
        p.drag_rot = [0.01; 3];
        let q = Vector8::from_column_slice(&[0.0, 0.0, 0.0, 0.1, 0.1, 0.0, 0.2, 0.1]);
        let d = drag_forces(&q, &Vector8::zeros(), &p).unwrap();
        assert_eq!(d.generalized(), Vector8::zeros());
        let d = drag_forces(&q, &Vector8::repeat(1.3), &Params::default()).unwrap();
        assert_eq!(d.generalized(), Vector8::zeros());
    }

    #[test]
    fn drag_opposes_velocity() {
        let mut p = Params::default();
        p.drag_quad = [0.1, 0.2, 0.3];
        p.drag_load = [0.2; 3];
        p.drag_rot = [0.01; 3];
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..100 {
            let s = random_state(&mut rng);
            let d = drag_forces(&s.q, &s.qdot, &p).unwrap();
            assert!(d.quad.dot(&s.xi_q_dot()) <= 0.0);
            assert!(d.load.dot(&load_velocity(&s, &p).unwrap()) <= 0.0);
            assert!(d.rot.dot(&s.eta_dot()) <= 0.0);
        }
    }

    #[test]
    fn swing_drag_from_cable_moment() {
        // At zero swing, l x D for D = [1, 0, 0] and l = [0, 0, 1] is [0, 1, 0]:
        // a forward push on the load drives beta positive.
        let kin = Kinematics::new(&Vector8::zeros(), &Params::default()).unwrap();
        let moment = Params::default().cable().cross(&(kin.r_load.transpose() * Vec3::new(1.0, 0.0, 0.0)));
        assert_relative_eq!(moment, Vec3::new(0.0, 1.0, 0.0));
        // Consistent with the generalized force of the drag through the load
        // Jacobian at zero swing.
        let beta_column = kin.load_jacobian.column(7).into_owned();
        assert_relative_eq!(beta_column.dot(&Vec3::new(1.0, 0.0, 0.0)), moment[1]);
    }

    #[test]
    fn effectiveness_columns() {
        let b = control_effectiveness(&Vector8::zeros()).unwrap();
        assert_eq!(b.column(0).into_owned(), Vector8::from_column_slice(&[0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]));
        let mut q = Vector8::zeros();
        q[4] = std::f64::consts::PI / 6.0;
        let b = control_effectiveness(&q).unwrap();
        assert_relative_eq!(b[(0, 0)], 0.5, epsilon = 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let s = random_state(&mut rng);
            let b = control_effectiveness(&s.q).unwrap();
            assert_relative_eq!(b.fixed_view::<3, 1>(0, 0).norm(), 1.0, epsilon = 1e-12);
            assert_eq!(b.fixed_view::<3, 3>(3, 1).into_owned(), Mat3::identity());
        }
    }

    #[test]
    fn unforced_equilibrium_without_gravity() {
        let p = Params { g: 0.0, ..Params::default() };
        let s = GeneralizedState::at_rest(Vec3::zeros(), EulerAngles::new(0.2, 0.1, 0.3), SwingAngles::new(0.3, -0.2));
        let qdd = forward_dynamics(&s, &ControlInput::default(), &p).unwrap();
        assert_eq!(qdd, Vector8::zeros());
    }

    #[test]
    fn hover_balance() {
        let p = Params::default();
        let s = GeneralizedState::at_rest(Vec3::zeros(), EulerAngles::default(), SwingAngles::default());
        let g = gravity_vector(&s.q, &p).unwrap();
        let u = ControlInput::new(p.hover_thrust(), Vec3::new(0.0, g[4], 0.0));
        assert_relative_eq!(u.thrust, -13.59666, epsilon = 1e-5);
        assert_relative_eq!(u.torque[1], -0.0777, epsilon = 1e-4);
        let qdd = forward_dynamics(&s, &u, &p).unwrap();
        assert!(qdd.abs().max() < 1e-9);
        let (ft, mag) = cable_tension(&s, &qdd, &u, &p).unwrap();
        assert_relative_eq!(ft.norm(), 0.066 * 9.81, epsilon = 1e-9);
        assert_relative_eq!(mag, -0.066 * 9.81, epsilon = 1e-9);
    }

    #[test]
    fn free_fall_has_no_tension() {
        let p = Params::default();
        let s = GeneralizedState::at_rest(Vec3::zeros(), EulerAngles::new(0.1, 0.2, 0.0), SwingAngles::new(0.3, 0.1));
        let u = ControlInput::default();
        let qdd = forward_dynamics(&s, &u, &p).unwrap();
        let (ft, _) = cable_tension(&s, &qdd, &u, &p).unwrap();
        assert!(ft.norm() < 1e-12);
    }

    #[test]
    fn solve_residual_is_small() {
        let p = Params::default();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..100 {
            let s = random_state(&mut rng);
            let u = ControlInput::new(rng.gen_range(-20.0..0.0), Vec3::from_fn(|_, _| rng.gen_range(-1.0..1.0)));
            let terms = ModelTerms::evaluate(&s, &p).unwrap();
            let rhs = terms.rhs(&s.qdot, &u);
            let qdd = solve_accelerations(&terms.mass, &rhs, &p).unwrap();
            assert!((terms.mass * qdd - rhs).norm() <= 1e-9 * rhs.norm());
        }
    }

    #[test]
    fn massless_load_reduces_to_uav_model() {
        let p = Params { m_p: 0.0, ..Params::default() };
        let s = GeneralizedState::at_rest(Vec3::zeros(), EulerAngles::new(0.1, 0.0, 0.0), SwingAngles::new(0.2, 0.0));
        let u = ControlInput::new(p.hover_thrust(), Vec3::zeros());
        let qdd = forward_dynamics(&s, &u, &p).unwrap();
        assert_eq!(qdd[6], 0.0);
        assert_eq!(qdd[7], 0.0);
        assert_relative_eq!(qdd[1], -(0.1f64).sin() * p.hover_thrust() / p.m_q, epsilon = 1e-12);
    }

    #[test]
    fn reduced_swing_blocks() {
        let p = defaults_without_offset();
        let s = GeneralizedState::at_rest(Vec3::zeros(), EulerAngles::default(), SwingAngles::default());
        let r = reduced_swing_terms(&s, &p).unwrap();
        assert_relative_eq!(r.m_sigma1, Matrix2::identity() * 0.066, epsilon = 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let s = random_state(&mut rng);
            let r = reduced_swing_terms(&s, &Params::default()).unwrap();
            assert_eq!(r.m_sigma2[(1, 1)], 0.0);
            assert!(r.m_sigma1[(0, 1)].abs() < 1e-15);
        }
    }

    #[test]
    fn reduced_swing_form_matches_full_rows() {
        let mut p = Params::default();
        p.drag_load = [0.05, 0.1, 0.02];
        p.drag_quad = [0.1; 3];
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..100 {
            let s = random_state(&mut rng);
            let u = ControlInput::new(rng.gen_range(-20.0..-5.0), Vec3::from_fn(|_, _| rng.gen_range(-0.5..0.5)));
            let qdd = forward_dynamics(&s, &u, &p).unwrap();
            let xi_ddot = suspension_acceleration(&s, &qdd, &p).unwrap();
            let r = reduced_swing_terms(&s, &p).unwrap();
            let sigma_ddot = r.swing_acceleration(&xi_ddot);
            assert!((sigma_ddot - qdd.fixed_rows::<2>(6)).abs().max() < 1e-8);
        }
    }

    #[test]
    fn prescribed_attitude_solve_matches_full_solve() {
        let mut p = Params::default();
        p.drag_quad = [0.1; 3];
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..100 {
            let s = random_state(&mut rng);
            let u = ControlInput::new(rng.gen_range(-20.0..-5.0), Vec3::from_fn(|_, _| rng.gen_range(-0.5..0.5)));
            let qdd = forward_dynamics(&s, &u, &p).unwrap();
            let terms = ModelTerms::evaluate(&s, &p).unwrap();
            let eta_ddot = qdd.fixed_rows::<3>(3).into_owned();
            let sub = accelerations_with_attitude(&terms, &s.qdot, u.thrust, &eta_ddot, &p).unwrap();
            assert!((sub - qdd).abs().max() < 1e-8);
        }
    }

    #[test]
    fn no_offset_decouples_attitude_from_swing_at_level() {
        let p = defaults_without_offset();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let mut s = random_state(&mut rng);
            s.q[3] = 0.0;
            s.q[4] = 0.0;
            let m = mass_matrix(&s.q, &p).unwrap();
            let cross = m.fixed_view::<3, 2>(3, 6);
            assert!(cross.abs().max() < 1e-15);
        }
    }
}
