//! Seeded property suites over the model and the controller.
//!
//! Each property reports a measured value, its bound, and whether the bound
//! holds. Properties that need a load are skipped when `m_p = 0`.

use std::fmt;

use crate::analysis::{decay_rate_fit, Window};
use crate::controller::{
    allocate, attitude_decoupler, attitude_hold_step, mixer, tension_decompose, tension_vector,
    thrust_saturation, Gains, Setpoint,
};
use crate::dynamics::{
    christoffel_coriolis, forward_dynamics, gravity_vector, input_power, load_position,
    mass_matrix, mass_matrix_partials, potential_energy, reduced_swing_terms,
    solve_accelerations, suspension_acceleration, total_energy, ControlInput, DynamicsError,
    GeneralizedState, Matrix8, ModelTerms, Params, Vector8,
};
use crate::harness::{run_swing_harness, run_tension_harness};
use crate::simulator::{run_scenario, Mode, Scenario, SetpointSegment};
use crate::spatial::{euler_rate_map, EulerAngles, Vec2, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    AtMost,
    AtLeast,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyResult {
    pub name: String,
    pub measured: f64,
    pub bound: f64,
    pub comparison: Comparison,
    /// Reason the property was not evaluated.
    pub skipped: Option<String>,
}

impl PropertyResult {
    fn new(name: &str, measured: f64, comparison: Comparison, bound: f64) -> Self {
        Self { name: name.into(), measured, bound, comparison, skipped: None }
    }

    fn skip(name: &str, comparison: Comparison, bound: f64, reason: &str) -> Self {
        Self { name: name.into(), measured: f64::NAN, bound, comparison, skipped: Some(reason.into()) }
    }

    fn failed(name: &str, comparison: Comparison, bound: f64, err: impl fmt::Display) -> Self {
        let measured = match comparison {
            Comparison::AtMost => f64::INFINITY,
            Comparison::AtLeast => f64::NEG_INFINITY,
        };
        let mut r = Self::new(name, measured, comparison, bound);
        r.name = format!("{name} ({err})");
        r
    }

    pub fn passed(&self) -> bool {
        if self.skipped.is_some() {
            return true;
        }
        match self.comparison {
            Comparison::AtMost => self.measured <= self.bound,
            Comparison::AtLeast => self.measured >= self.bound,
        }
    }
}

impl fmt::Display for PropertyResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(reason) = &self.skipped {
            return write!(f, "[SKIP] {}: {}", self.name, reason);
        }
        let (tag, op) = match (self.passed(), self.comparison) {
            (true, Comparison::AtMost) => ("PASS", "<="),
            (true, Comparison::AtLeast) => ("PASS", ">="),
            (false, Comparison::AtMost) => ("FAIL", "<="),
            (false, Comparison::AtLeast) => ("FAIL", ">="),
        };
        write!(f, "[{tag}] {}: measured {:.3e} (required {op} {:.3e})", self.name, self.measured, self.bound)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VerifyOptions {
    pub seed: u64,
    /// Flips the sign of the gravity vector in the plant. Used to check that
    /// the suites detect a broken model.
    pub corrupt_gravity: bool,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self { seed: 0x5eed, corrupt_gravity: false }
    }
}

/// Plant used by the suites, optionally with gravity reversed.
struct Plant<'a> {
    params: &'a Params,
    gravity_sign: f64,
}

impl Plant<'_> {
    fn gravity(&self, q: &Vector8) -> Result<Vector8, DynamicsError> {
        Ok(gravity_vector(q, self.params)? * self.gravity_sign)
    }

    fn accel(&self, s: &GeneralizedState, u: &ControlInput) -> Result<Vector8, DynamicsError> {
        if self.gravity_sign == 1.0 {
            return forward_dynamics(s, u, self.params);
        }
        let terms = ModelTerms::evaluate(s, self.params)?;
        let rhs = terms.rhs(&s.qdot, u) + terms.gravity - terms.gravity * self.gravity_sign;
        solve_accelerations(&terms.mass, &rhs, self.params)
    }

    fn rk4(&self, s: &GeneralizedState, u: &ControlInput, h: f64) -> Result<GeneralizedState, DynamicsError> {
        let f = |x: &GeneralizedState| self.accel(x, u).map(|a| (x.qdot, a));
        let at = |k: &(Vector8, Vector8), c: f64| GeneralizedState::new(s.q + k.0 * c, s.qdot + k.1 * c);
        let k1 = f(s)?;
        let k2 = f(&at(&k1, h / 2.0))?;
        let k3 = f(&at(&k2, h / 2.0))?;
        let k4 = f(&at(&k3, h))?;
        Ok(GeneralizedState::new(
            s.q + (k1.0 + (k2.0 + k3.0) * 2.0 + k4.0) * (h / 6.0),
            s.qdot + (k1.1 + (k2.1 + k3.1) * 2.0 + k4.1) * (h / 6.0),
        ))
    }
}

/// Uniform in-bounds state: tilt and swing angles within 1.2 rad.
pub fn random_state(rng: &mut impl Rng) -> GeneralizedState {
    let mut q = Vector8::zeros();
    let mut qdot = Vector8::zeros();
    for i in 0..3 {
        q[i] = rng.gen_range(-5.0..5.0);
    }
    for i in [3, 4, 6, 7] {
        q[i] = rng.gen_range(-1.2..1.2);
    }
    q[5] = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
    for i in 0..8 {
        qdot[i] = rng.gen_range(-2.0..2.0);
    }
    GeneralizedState::new(q, qdot)
}

/// Kinetic energy from its definition, with the load velocity taken by
/// central differences of the load position along `qdot`.
pub fn kinetic_energy_oracle(s: &GeneralizedState, params: &Params) -> Result<f64, DynamicsError> {
    let h = 1e-5;
    let xp = load_position(&(s.q + s.qdot * h), params)?;
    let xm = load_position(&(s.q - s.qdot * h), params)?;
    let v_load = (xp - xm) / (2.0 * h);
    let omega = euler_rate_map(&s.eta())? * s.eta_dot();
    let rot = omega.dot(&(params.inertia_matrix() * omega));
    Ok(0.5 * params.m_q * s.xi_q_dot().norm_squared() + 0.5 * rot + 0.5 * params.m_p * v_load.norm_squared())
}

/// Mass matrix recovered from the kinetic energy oracle by polarization.
pub fn mass_matrix_oracle(q: &Vector8, params: &Params) -> Result<Matrix8, DynamicsError> {
    let t = |v: Vector8| kinetic_energy_oracle(&GeneralizedState::new(*q, v), params);
    let mut diag = [0.0; 8];
    for (i, d) in diag.iter_mut().enumerate() {
        *d = t(Vector8::ith(i, 1.0))?;
    }
    let mut m = Matrix8::zeros();
    for i in 0..8 {
        m[(i, i)] = 2.0 * diag[i];
        for j in 0..i {
            let v = t(Vector8::ith(i, 1.0) + Vector8::ith(j, 1.0))? - diag[i] - diag[j];
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    Ok(m)
}

fn max_abs(m: impl IntoIterator<Item = f64>) -> f64 {
    m.into_iter().fold(0.0, |a, b| a.max(b.abs()))
}

type Check = Result<f64, String>;

fn record(name: &str, cmp: Comparison, bound: f64, r: Check) -> PropertyResult {
    match r {
        Ok(v) => PropertyResult::new(name, v, cmp, bound),
        Err(e) => PropertyResult::failed(name, cmp, bound, e),
    }
}

fn err(e: impl fmt::Display) -> String {
    e.to_string()
}

fn symmetric_positive_definite(rng: &mut ChaCha8Rng, p: &Params) -> Check {
    let mut worst = 0.0f64;
    let active = if p.m_p == 0.0 { 6 } else { 8 };
    for _ in 0..1000 {
        let s = random_state(rng);
        let m = mass_matrix(&s.q, p).map_err(err)?;
        worst = worst.max((m - m.transpose()).abs().max());
        let block = m.view((0, 0), (active, active)).into_owned();
        if block.symmetric_eigenvalues().min() <= 0.0 {
            return Err("mass matrix not positive definite".into());
        }
    }
    Ok(worst)
}

fn mass_oracle(rng: &mut ChaCha8Rng, p: &Params) -> Check {
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let s = random_state(rng);
        let m = mass_matrix(&s.q, p).map_err(err)?;
        let oracle = mass_matrix_oracle(&s.q, p).map_err(err)?;
        worst = worst.max((m - oracle).abs().max());
        let exact = (0..3).all(|i| (0..3).all(|j| m[(i, j)] == if i == j { p.total_mass() } else { 0.0 }));
        if !exact || m[(7, 1)] != 0.0 {
            return Err("structural entries of the mass matrix are not exact".into());
        }
    }
    Ok(worst)
}

fn coriolis_oracle(rng: &mut ChaCha8Rng, p: &Params) -> Check {
    let h = 1e-6;
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let s = random_state(rng);
        let dm = mass_matrix_partials(&s.q, p).map_err(err)?;
        let analytic = christoffel_coriolis(&dm, &s.qdot);
        let mut fd = [Matrix8::zeros(); 8];
        for (i, d) in fd.iter_mut().enumerate() {
            let e = Vector8::ith(i, h);
            *d = (mass_matrix(&(s.q + e), p).map_err(err)? - mass_matrix(&(s.q - e), p).map_err(err)?) / (2.0 * h);
        }
        worst = worst.max((analytic - christoffel_coriolis(&fd, &s.qdot)).abs().max());
    }
    Ok(worst)
}

fn gravity_oracle(rng: &mut ChaCha8Rng, plant: &Plant) -> Check {
    let h = 1e-6;
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let s = random_state(rng);
        let g = plant.gravity(&s.q).map_err(err)?;
        for i in 0..8 {
            let e = Vector8::ith(i, h);
            let fd = (potential_energy(&(s.q + e), plant.params).map_err(err)?
                - potential_energy(&(s.q - e), plant.params).map_err(err)?)
                / (2.0 * h);
            worst = worst.max((fd - g[i]).abs());
        }
    }
    Ok(worst)
}

fn skew_symmetry(rng: &mut ChaCha8Rng, p: &Params) -> Check {
    let h = 1e-6;
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let s = random_state(rng);
        let c = christoffel_coriolis(&mass_matrix_partials(&s.q, p).map_err(err)?, &s.qdot);
        let m_dot = (mass_matrix(&(s.q + s.qdot * h), p).map_err(err)?
            - mass_matrix(&(s.q - s.qdot * h), p).map_err(err)?)
            / (2.0 * h);
        let v = s.qdot.dot(&((m_dot - c * 2.0) * s.qdot));
        worst = worst.max(v.abs() / (1.0 + s.qdot.norm_squared()));
    }
    Ok(worst)
}

/// Relative energy drift of an unforced, dragless run from a 15 degree swing.
fn energy_conservation(plant: &Plant) -> Check {
    let p = Params { drag_quad: [0.0; 3], drag_load: [0.0; 3], drag_rot: [0.0; 3], ..plant.params.clone() };
    let plant = Plant { params: &p, gravity_sign: plant.gravity_sign };
    let mut q = Vector8::zeros();
    q[2] = -2.0;
    q[6] = 15f64.to_radians();
    let mut s = GeneralizedState::new(q, Vector8::zeros());
    let e0 = total_energy(&s, &p).map_err(err)?;
    let scale = e0.abs().max(1.0);
    let u = ControlInput::default();
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        s = plant.rk4(&s, &u, 1e-4).map_err(err)?;
        worst = worst.max((total_energy(&s, &p).map_err(err)? - e0).abs() / scale);
    }
    Ok(worst)
}

/// Energy change over one short RK4 step against the mean input power.
fn work_energy(rng: &mut ChaCha8Rng, plant: &Plant) -> Check {
    // Load drag needs load inertia to act on.
    let load_drag = if plant.params.m_p > 0.0 { 0.02 } else { 0.0 };
    let p = Params { drag_quad: [0.05; 3], drag_load: [load_drag; 3], drag_rot: [0.001; 3], ..plant.params.clone() };
    let plant = Plant { params: &p, gravity_sign: plant.gravity_sign };
    let h = 1e-5;
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let s = random_state(rng);
        let u = ControlInput::new(rng.gen_range(-20.0..0.0), Vec3::from_fn(|_, _| rng.gen_range(-0.2..0.2)));
        let next = plant.rk4(&s, &u, h).map_err(err)?;
        let de = (total_energy(&next, &p).map_err(err)? - total_energy(&s, &p).map_err(err)?) / h;
        let power = 0.5 * (input_power(&s, &u, &p).map_err(err)? + input_power(&next, &u, &p).map_err(err)?);
        worst = worst.max((de - power).abs() / (1.0 + power.abs()));
    }
    Ok(worst)
}

fn reduced_rows(rng: &mut ChaCha8Rng, plant: &Plant) -> Check {
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let s = random_state(rng);
        let u = ControlInput::new(rng.gen_range(-20.0..-5.0), Vec3::from_fn(|_, _| rng.gen_range(-0.5..0.5)));
        let qdd = plant.accel(&s, &u).map_err(err)?;
        let xi_ddot = suspension_acceleration(&s, &qdd, plant.params).map_err(err)?;
        let reduced = reduced_swing_terms(&s, plant.params).map_err(err)?;
        let sigma_ddot = reduced.swing_acceleration(&xi_ddot);
        worst = worst.max(max_abs((sigma_ddot - qdd.fixed_rows::<2>(6)).iter().copied()));
    }
    Ok(worst)
}

fn inner_linearization(rng: &mut ChaCha8Rng, plant: &Plant, gains: &Gains) -> Check {
    // Rotor limits are lifted so the requested torque reaches the plant.
    let p = Params { rotor_min: f64::NEG_INFINITY, rotor_max: f64::INFINITY, ..plant.params.clone() };
    let plant = Plant { params: &p, gravity_sign: plant.gravity_sign };
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let mut s = random_state(rng);
        for i in [3, 4, 6, 7] {
            s.q[i] *= 0.5;
        }
        let eta_d = EulerAngles::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5), rng.gen_range(-1.0..1.0));
        let sp = Setpoint { eta_ddot_d: Vec3::from_fn(|_, _| rng.gen_range(-1.0..1.0)), ..Default::default() };
        let cmd = attitude_hold_step(&s, &eta_d, &sp, gains, &p).map_err(err)?;
        let qdd = plant.accel(&s, &cmd.input()).map_err(err)?;
        let expect = cmd.eta_ddot_tr + sp.eta_ddot_d;
        worst = worst.max(max_abs((qdd.fixed_rows::<3>(3) - expect).iter().copied()));
    }
    Ok(worst)
}

fn attitude_round_trip(rng: &mut ChaCha8Rng) -> Check {
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let f = Vec3::new(rng.gen_range(-20.0..20.0), rng.gen_range(-20.0..20.0), rng.gen_range(-30.0..-0.5));
        let psi = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
        let (phi, theta, thrust) = attitude_decoupler(&f, psi).map_err(err)?;
        let r = crate::spatial::rot_body_to_inertial(&EulerAngles::new(phi, theta, psi)).map_err(err)?;
        let back = r * Vec3::new(0.0, 0.0, thrust);
        worst = worst.max((back - f).norm() / (1.0 + f.norm()));
    }
    Ok(worst)
}

fn tension_round_trip(rng: &mut ChaCha8Rng) -> Check {
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let f = Vec3::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..-0.05));
        let (m, a, b) = tension_decompose(&f).map_err(err)?;
        worst = worst.max((tension_vector(m, a, b).map_err(err)? - f).norm() / (1.0 + f.norm()));
    }
    Ok(worst)
}

fn mixer_round_trip(rng: &mut ChaCha8Rng, p: &Params) -> Check {
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let f = rng.gen_range(-40.0..0.0);
        let tau = Vec3::from_fn(|_, _| rng.gen_range(-2.0..2.0));
        let (f2, tau2) = allocate(&mixer(f, &tau, p).map_err(err)?, p);
        worst = worst.max((f2 - f).abs()).max((tau2 - tau).abs().max());
    }
    Ok(worst)
}

fn saturation_bound(rng: &mut ChaCha8Rng, p: &Params) -> Check {
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..1000 {
        let f = Vec3::new(rng.gen_range(-60.0..60.0), rng.gen_range(-60.0..60.0), rng.gen_range(-60.0..-0.01));
        let (r, _) = thrust_saturation(&f, p.thrust_limit).map_err(err)?;
        worst = worst.max(r.norm() - p.thrust_limit);
    }
    Ok(worst)
}

/// Attitude step from level to (10, 30, 0) degrees over 0.5 s: largest ratio
/// of `V_eta` to its exponential envelope, and the fitted decay rate.
pub fn attitude_step_envelope(params: &Params, gains: &Gains) -> Result<(f64, f64), String> {
    let scenario = Scenario {
        name: "attitude envelope".into(),
        duration: 0.5,
        mode: Mode::Attitude,
        params: params.clone(),
        gains: gains.clone(),
        setpoints: vec![SetpointSegment { attitude_deg: [10.0, 30.0, 0.0], ..Default::default() }],
        ..Default::default()
    };
    let log = run_scenario(&scenario).map_err(err)?;
    let lambda = gains.attitude_rate();
    let v0 = log.samples[0].v_eta;
    let ratio = log.samples.iter().map(|s| s.v_eta / (v0 * (-lambda * s.t).exp())).fold(0.0, f64::max);
    let fit = decay_rate_fit(&log.times(), &log.series(|s| s.v_eta), Window::new(0.0, 0.5)).map_err(err)?;
    Ok((ratio, fit.rate))
}

pub fn swing_envelope_rate(params: &Params, gains: &Gains) -> Result<f64, String> {
    let trace = run_swing_harness(Vec2::new(0.2, -0.15), Vec2::new(0.1, 0.3), gains, params, 0.5, 1e-3)
        .map_err(err)?;
    Ok(decay_rate_fit(&trace.t, &trace.v, Window::ALL).map_err(err)?.rate)
}

/// Worst relative deviation of the per-channel outer-loop error decay rate
/// from `k / m_p`.
pub fn tension_rate_error(params: &Params, gains: &Gains) -> Result<f64, String> {
    let sp = Setpoint { xidot_pd: Vec3::new(1.0, 1.5, -0.5), ..Default::default() };
    let trace = run_tension_harness(Vec3::zeros(), &sp, gains, params, 0.5, 1e-3).map_err(err)?;
    let mut worst = 0.0f64;
    for i in 0..3 {
        let expect = gains.k_xidot_p[i] / params.m_p;
        // Stop before the error reaches the rounding floor.
        let horizon = (25.0 / expect).min(0.5);
        let e: Vec<f64> = trace.errors.iter().map(|e| e[i].abs()).collect();
        let fit = decay_rate_fit(&trace.t, &e, Window::new(0.0, horizon)).map_err(err)?;
        worst = worst.max((fit.rate / expect - 1.0).abs());
    }
    Ok(worst)
}

/// Runs every property with the given parameters and gains.
pub fn run_verification(params: &Params, gains: &Gains, opts: &VerifyOptions) -> Vec<PropertyResult> {
    use Comparison::{AtLeast, AtMost};
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let plant = Plant { params, gravity_sign: if opts.corrupt_gravity { -1.0 } else { 1.0 } };
    let has_load = params.m_p > 0.0;
    let no_load = "requires a load (m_p > 0)";
    let mut out = vec![
        record("mass matrix symmetric positive definite", AtMost, 1e-12, symmetric_positive_definite(&mut rng, params)),
        record("mass matrix matches kinetic energy oracle", AtMost, 1e-6, mass_oracle(&mut rng, params)),
        record("coriolis matches finite-difference Christoffel", AtMost, 1e-6, coriolis_oracle(&mut rng, params)),
        record("gravity matches potential gradient", AtMost, 1e-6, gravity_oracle(&mut rng, &plant)),
        record("Mdot - 2C skew symmetry", AtMost, 1e-8, skew_symmetry(&mut rng, params)),
        record("energy conservation (1 s, dt 1e-4)", AtMost, 1e-6, energy_conservation(&plant)),
        record("work-energy balance over one step", AtMost, 1e-6, work_energy(&mut rng, &plant)),
    ];
    out.push(if has_load {
        record("reduced swing rows match full model", AtMost, 1e-8, reduced_rows(&mut rng, &plant))
    } else {
        PropertyResult::skip("reduced swing rows match full model", AtMost, 1e-8, no_load)
    });
    out.push(record("inner loop exact linearization", AtMost, 1e-8, inner_linearization(&mut rng, &plant, gains)));
    out.push(record("attitude decoupler round trip", AtMost, 1e-10, attitude_round_trip(&mut rng)));
    out.push(record("tension decomposition round trip", AtMost, 1e-10, tension_round_trip(&mut rng)));
    out.push(record("allocate after mixer is identity", AtMost, 1e-10, mixer_round_trip(&mut rng, params)));
    out.push(record("thrust saturation within bound", AtMost, 1e-9, saturation_bound(&mut rng, params)));
    let lambda_eta = gains.attitude_rate();
    match attitude_step_envelope(params, gains) {
        Ok((ratio, rate)) => {
            out.push(PropertyResult::new("attitude envelope ratio", ratio, AtMost, 1.05));
            out.push(PropertyResult::new("attitude decay rate", rate, AtLeast, 0.95 * lambda_eta));
        }
        Err(e) => out.push(PropertyResult::failed("attitude envelope", AtMost, 1.05, e)),
    }
    let lambda_sigma = gains.swing_rate();
    if has_load {
        out.push(record("swing decay rate", AtLeast, 0.95 * lambda_sigma, swing_envelope_rate(params, gains)));
        out.push(record("outer error rate relative to k/m_p", AtMost, 0.01, tension_rate_error(params, gains)));
    } else {
        out.push(PropertyResult::skip("swing decay rate", AtLeast, 0.95 * lambda_sigma, no_load));
        out.push(PropertyResult::skip("outer error rate relative to k/m_p", AtMost, 0.01, no_load));
    }
    out
}
