//! Rotation matrices for the UAV body and the load pendulum, the Euler-rate
//! map, and their closed-form partial derivatives.
//!
//! The UAV attitude uses Z-Y-X Euler angles `(phi, theta, psi)`, so
//! `R_b^i = Rz(psi) Ry(theta) Rx(phi)`. The load attitude uses two swing
//! angles `(alpha, beta)` with `R_p^i = Ry(beta) Rx(alpha)`. Both maps are
//! only valid while roll/pitch-like angles stay inside `(-pi/2, pi/2)`.

use nalgebra::{Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;
pub type Vec2 = Vector2<f64>;
pub type Mat3 = Matrix3<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum SpatialError {
    #[error("angle {name} = {value} rad is outside the open interval (-pi/2, pi/2)")]
    OutOfDomain { name: &'static str, value: f64 },
    #[error("angle {name} is not finite")]
    NotFinite { name: &'static str },
}

fn check_bounded(name: &'static str, value: f64) -> Result<(), SpatialError> {
    if !value.is_finite() {
        return Err(SpatialError::NotFinite { name });
    }
    if value.abs() >= FRAC_PI_2 {
        return Err(SpatialError::OutOfDomain { name, value });
    }
    Ok(())
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(angle: f64) -> f64 {
    let mut a = angle.rem_euclid(2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// UAV attitude as Z-Y-X Euler angles (radians).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EulerAngles {
    pub phi: f64,
    pub theta: f64,
    pub psi: f64,
}

impl EulerAngles {
    pub fn new(phi: f64, theta: f64, psi: f64) -> Self {
        Self { phi, theta, psi }
    }

    pub fn from_vector(v: &Vec3) -> Self {
        Self::new(v[0], v[1], v[2])
    }

    pub fn to_vector(self) -> Vec3 {
        Vec3::new(self.phi, self.theta, self.psi)
    }

    /// Roll and pitch must lie in `(-pi/2, pi/2)`. Yaw only needs to be
    /// finite; it is periodic and wrapped wherever it is compared.
    pub fn validate(&self) -> Result<(), SpatialError> {
        check_bounded("phi", self.phi)?;
        check_bounded("theta", self.theta)?;
        if !self.psi.is_finite() {
            return Err(SpatialError::NotFinite { name: "psi" });
        }
        Ok(())
    }
}

/// Load swing angles (radians): `alpha` rolls and `beta` pitches the cable.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SwingAngles {
    pub alpha: f64,
    pub beta: f64,
}

impl SwingAngles {
    pub fn new(alpha: f64, beta: f64) -> Self {
        Self { alpha, beta }
    }

    pub fn from_vector(v: &Vec2) -> Self {
        Self::new(v[0], v[1])
    }

    pub fn to_vector(self) -> Vec2 {
        Vec2::new(self.alpha, self.beta)
    }

    pub fn validate(&self) -> Result<(), SpatialError> {
        check_bounded("alpha", self.alpha)?;
        check_bounded("beta", self.beta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Axis {
    X,
    Y,
    Z,
}

/// `order`-th derivative of an elementary rotation about `axis` with respect
/// to its angle. Order 0 is the rotation itself.
fn elementary(axis: Axis, angle: f64, order: u8) -> Mat3 {
    let shift = f64::from(order) * FRAC_PI_2;
    let c = (angle + shift).cos();
    let s = (angle + shift).sin();
    let one = if order == 0 { 1.0 } else { 0.0 };
    match axis {
        Axis::X => Mat3::new(one, 0.0, 0.0, 0.0, c, -s, 0.0, s, c),
        Axis::Y => Mat3::new(c, 0.0, s, 0.0, one, 0.0, -s, 0.0, c),
        Axis::Z => Mat3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, one),
    }
}

fn body_factor(eta: &EulerAngles, orders: [u8; 3]) -> Mat3 {
    elementary(Axis::Z, eta.psi, orders[2])
        * elementary(Axis::Y, eta.theta, orders[1])
        * elementary(Axis::X, eta.phi, orders[0])
}

fn load_factor(sigma: &SwingAngles, orders: [u8; 2]) -> Mat3 {
    elementary(Axis::Y, sigma.beta, orders[1]) * elementary(Axis::X, sigma.alpha, orders[0])
}

/// `R_b^i`, mapping body-frame vectors into the inertial NED frame.
pub fn rot_body_to_inertial(eta: &EulerAngles) -> Result<Mat3, SpatialError> {
    eta.validate()?;
    let (sf, cf) = eta.phi.sin_cos();
    let (st, ct) = eta.theta.sin_cos();
    let (sp, cp) = eta.psi.sin_cos();
    Ok(Mat3::new(
        ct * cp,
        sf * st * cp - cf * sp,
        cf * st * cp + sf * sp,
        ct * sp,
        sf * st * sp + cf * cp,
        cf * st * sp - sf * cp,
        -st,
        sf * ct,
        cf * ct,
    ))
}

/// `R_p^i`, mapping load-frame vectors into the inertial frame.
pub fn rot_load_to_inertial(sigma: &SwingAngles) -> Result<Mat3, SpatialError> {
    sigma.validate()?;
    let (sa, ca) = sigma.alpha.sin_cos();
    let (sb, cb) = sigma.beta.sin_cos();
    Ok(Mat3::new(
        cb,
        sa * sb,
        ca * sb,
        0.0,
        ca,
        -sa,
        -sb,
        sa * cb,
        ca * cb,
    ))
}

/// The matrix `R_v` with body rates `omega = R_v * eta_dot`.
///
/// Its determinant is `cos(theta)`, so it degenerates at `|theta| = pi/2`.
/// The entries themselves stay finite up to the bound; callers that invert
/// it are responsible for staying away from the edge.
pub fn euler_rate_map(eta: &EulerAngles) -> Result<Mat3, SpatialError> {
    eta.validate()?;
    let (sf, cf) = eta.phi.sin_cos();
    let (st, ct) = eta.theta.sin_cos();
    Ok(Mat3::new(
        1.0,
        0.0,
        -st,
        0.0,
        cf,
        sf * ct,
        0.0,
        -sf,
        cf * ct,
    ))
}

/// Partials of `R_v` with respect to `(phi, theta, psi)`.
pub fn euler_rate_map_partials(eta: &EulerAngles) -> [Mat3; 3] {
    let (sf, cf) = eta.phi.sin_cos();
    let (st, ct) = eta.theta.sin_cos();
    let d_phi = Mat3::new(0.0, 0.0, 0.0, 0.0, -sf, cf * ct, 0.0, -cf, -sf * ct);
    let d_theta = Mat3::new(0.0, 0.0, -ct, 0.0, 0.0, -sf * st, 0.0, 0.0, -cf * st);
    [d_phi, d_theta, Mat3::zeros()]
}

/// First partials `dR_b^i/d eta_k`, indexed by `k` in `(phi, theta, psi)` order.
pub fn body_rotation_partials(eta: &EulerAngles) -> [Mat3; 3] {
    [
        body_factor(eta, [1, 0, 0]),
        body_factor(eta, [0, 1, 0]),
        body_factor(eta, [0, 0, 1]),
    ]
}

/// Second partials `d2R_b^i/(d eta_j d eta_k)`; symmetric in `(j, k)`.
pub fn body_rotation_second_partials(eta: &EulerAngles) -> [[Mat3; 3]; 3] {
    let mut out = [[Mat3::zeros(); 3]; 3];
    for (j, row) in out.iter_mut().enumerate() {
        for (k, entry) in row.iter_mut().enumerate() {
            let mut orders = [0u8; 3];
            orders[j] += 1;
            orders[k] += 1;
            *entry = body_factor(eta, orders);
        }
    }
    out
}

/// First partials `dR_p^i/d sigma_k` in `(alpha, beta)` order.
pub fn load_rotation_partials(sigma: &SwingAngles) -> [Mat3; 2] {
    [load_factor(sigma, [1, 0]), load_factor(sigma, [0, 1])]
}

pub fn load_rotation_second_partials(sigma: &SwingAngles) -> [[Mat3; 2]; 2] {
    let mut out = [[Mat3::zeros(); 2]; 2];
    for (j, row) in out.iter_mut().enumerate() {
        for (k, entry) in row.iter_mut().enumerate() {
            let mut orders = [0u8; 2];
            orders[j] += 1;
            orders[k] += 1;
            *entry = load_factor(sigma, orders);
        }
    }
    out
}

fn chain_rule<const N: usize>(
    first: &[Mat3; N],
    second: &[[Mat3; N]; N],
    rate: &[f64; N],
    accel: &[f64; N],
) -> (Mat3, Mat3) {
    let mut r_dot = Mat3::zeros();
    let mut r_ddot = Mat3::zeros();
    for i in 0..N {
        r_dot += first[i] * rate[i];
        r_ddot += first[i] * accel[i];
        for j in 0..N {
            r_ddot += second[i][j] * (rate[i] * rate[j]);
        }
    }
    (r_dot, r_ddot)
}

/// Time derivatives `(dR_b^i/dt, d2R_b^i/dt2)` along a trajectory passing
/// through `eta` with the given rates and accelerations.
pub fn body_rotation_derivatives(
    eta: &EulerAngles,
    eta_dot: &Vec3,
    eta_ddot: &Vec3,
) -> Result<(Mat3, Mat3), SpatialError> {
    eta.validate()?;
    Ok(chain_rule(
        &body_rotation_partials(eta),
        &body_rotation_second_partials(eta),
        &[eta_dot[0], eta_dot[1], eta_dot[2]],
        &[eta_ddot[0], eta_ddot[1], eta_ddot[2]],
    ))
}

/// Time derivatives `(dR_p^i/dt, d2R_p^i/dt2)` for the load attitude.
pub fn load_rotation_derivatives(
    sigma: &SwingAngles,
    sigma_dot: &Vec2,
    sigma_ddot: &Vec2,
) -> Result<(Mat3, Mat3), SpatialError> {
    sigma.validate()?;
    Ok(chain_rule(
        &load_rotation_partials(sigma),
        &load_rotation_second_partials(sigma),
        &[sigma_dot[0], sigma_dot[1]],
        &[sigma_ddot[0], sigma_ddot[1]],
    ))
}

/// Skew-symmetric cross-product matrix `[v]x`.
pub fn skew(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v[2], v[1], v[2], 0.0, -v[0], -v[1], v[0], 0.0)
}
