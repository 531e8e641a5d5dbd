//! Fixed-step closed-loop simulation.
//!
//! The plant is integrated with classical RK4 at `dt`; the controller runs
//! every `1 / control_rate` seconds and its output is held in between. Time
//! is kept as an integer tick count so sample instants never drift.
//!
//! Scenario files are TOML. Angles are given in degrees there; angular rates
//! and everything else are SI.

use std::io::Write;
use std::path::Path;

use crate::controller::{
    attitude_hold_step, cascade_step, ControlCommand, ControlError, Gains, Setpoint,
    SwingAccelSource,
};
use crate::dynamics::{
    cable_tension, forward_dynamics, input_power, total_energy, ControlInput, DynamicsError,
    GeneralizedState, Params, Vector8,
};
use crate::spatial::{wrap_angle, EulerAngles, Vec2, Vec3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Magnitude beyond which any state component counts as divergence.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Full cascade tracking a load velocity.
    #[default]
    Cascade,
    /// Inner attitude loop tracking the segment's `attitude_deg`.
    Attitude,
    /// Constant input, no feedback.
    OpenLoop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialState {
    pub position: [f64; 3],
    pub velocity: [f64; 3],
    pub attitude_deg: [f64; 3],
    /// Euler angle rates (rad/s).
    pub attitude_rate: [f64; 3],
    pub swing_deg: [f64; 2],
    /// Swing angle rates (rad/s).
    pub swing_rate: [f64; 2],
}

impl Default for InitialState {
    fn default() -> Self {
        Self {
            position: [0.0, 0.0, -2.0],
            velocity: [0.0; 3],
            attitude_deg: [0.0; 3],
            attitude_rate: [0.0; 3],
            swing_deg: [0.0; 2],
            swing_rate: [0.0; 2],
        }
    }
}

/// Piecewise-constant reference, active from `t` until the next segment.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SetpointSegment {
    pub t: f64,
    /// Desired load velocity (m/s, NED).
    pub load_velocity: [f64; 3],
    pub yaw_deg: f64,
    /// Attitude target for attitude mode.
    pub attitude_deg: [f64; 3],
    pub eta_ddot_d: [f64; 3],
    pub sigma_ddot_d: [f64; 2],
    pub xi_ddot_pd: [f64; 3],
}

impl SetpointSegment {
    pub fn setpoint(&self) -> Setpoint {
        Setpoint {
            xidot_pd: Vec3::from(self.load_velocity),
            psi_d: wrap_angle(self.yaw_deg.to_radians()),
            eta_ddot_d: Vec3::from(self.eta_ddot_d),
            sigma_ddot_d: Vec2::from(self.sigma_ddot_d),
            xi_ddot_pd: Vec3::from(self.xi_ddot_pd),
        }
    }

    pub fn attitude(&self) -> EulerAngles {
        let [phi, theta, psi] = self.attitude_deg.map(f64::to_radians);
        EulerAngles::new(phi, theta, wrap_angle(psi))
    }
}

/// Impulsive change of the swing rates.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Disturbance {
    pub t: f64,
    /// Added to `[alpha_dot, beta_dot]` (rad/s).
    pub swing_rate: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub duration: f64,
    pub dt: f64,
    pub control_rate: f64,
    pub mode: Mode,
    pub swing_accel: SwingAccelSource,
    pub open_loop_thrust: f64,
    pub open_loop_torque: [f64; 3],
    pub initial: InitialState,
    pub params: Params,
    pub gains: Gains,
    pub setpoints: Vec<SetpointSegment>,
    pub disturbances: Vec<Disturbance>,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            name: "unnamed".into(),
            duration: 5.0,
            dt: 1e-3,
            control_rate: 500.0,
            mode: Mode::Cascade,
            swing_accel: SwingAccelSource::Commanded,
            open_loop_thrust: 0.0,
            open_loop_torque: [0.0; 3],
            initial: InitialState::default(),
            params: Params::default(),
            gains: Gains::default(),
            setpoints: vec![SetpointSegment::default()],
            disturbances: Vec::new(),
        }
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{0}")]
    Parse(String),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("cannot read scenario: {0}")]
    Io(#[from] std::io::Error),
}

impl ScenarioError {
    fn from_toml(e: toml::de::Error, text: &str) -> Self {
        match e.span() {
            Some(span) => {
                let line = text[..span.start.min(text.len())].matches('\n').count() + 1;
                ScenarioError::Parse(format!("line {line}: {}", e.message()))
            }
            None => ScenarioError::Parse(e.message().to_string()),
        }
    }
}

/// Time base derived from a scenario, in integer plant ticks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ticks {
    pub total: u64,
    pub per_control: u64,
}

fn ticks_of(t: f64, dt: f64) -> u64 {
    (t / dt).round() as u64
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self, ScenarioError> {
        let scenario: Scenario = toml::from_str(text).map_err(|e| ScenarioError::from_toml(e, text))?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn from_toml_value(value: toml::Value) -> Result<Self, ScenarioError> {
        let scenario: Scenario =
            Scenario::deserialize(value).map_err(|e| ScenarioError::Parse(e.message().to_string()))?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn ticks(&self) -> Result<Ticks, ScenarioError> {
        let invalid = |m: &str| Err(ScenarioError::Invalid(m.into()));
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return invalid("dt must be positive");
        }
        if !(self.duration.is_finite() && self.duration >= 0.0) {
            return invalid("duration must be non-negative");
        }
        if !(self.control_rate.is_finite() && self.control_rate > 0.0) {
            return invalid("control_rate must be positive");
        }
        let ratio = 1.0 / (self.control_rate * self.dt);
        let per_control = ratio.round();
        if per_control < 1.0 || (ratio - per_control).abs() > 1e-9 * ratio.max(1.0) {
            return invalid("control period must be an integer multiple of dt");
        }
        let steps = self.duration / self.dt;
        if (steps - steps.round()).abs() > 1e-6 {
            return invalid("duration must be an integer multiple of dt");
        }
        Ok(Ticks { total: steps.round() as u64, per_control: per_control as u64 })
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        self.ticks()?;
        self.params.validate().map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        self.gains.validate().map_err(|e| ScenarioError::Invalid(e.into()))?;
        if self.setpoints.is_empty() {
            return Err(ScenarioError::Invalid("at least one setpoint segment is required".into()));
        }
        if self.setpoints.windows(2).any(|w| !(w[0].t < w[1].t)) || !self.setpoints[0].t.is_finite() {
            return Err(ScenarioError::Invalid("setpoint segments must have increasing start times".into()));
        }
        if self.disturbances.iter().any(|d| !(d.t.is_finite() && d.t >= 0.0)) {
            return Err(ScenarioError::Invalid("disturbance times must be non-negative".into()));
        }
        self.initial_state()
            .validate()
            .map_err(|e| ScenarioError::Invalid(format!("initial state: {e}")))?;
        Ok(())
    }

    pub fn initial_state(&self) -> GeneralizedState {
        let i = &self.initial;
        let mut q = Vector8::zeros();
        let mut qdot = Vector8::zeros();
        let att = i.attitude_deg.map(f64::to_radians);
        let swing = i.swing_deg.map(f64::to_radians);
        q.as_mut_slice()[..3].copy_from_slice(&i.position);
        q.as_mut_slice()[3..6].copy_from_slice(&att);
        q[5] = wrap_angle(q[5]);
        q.as_mut_slice()[6..].copy_from_slice(&swing);
        qdot.as_mut_slice()[..3].copy_from_slice(&i.velocity);
        qdot.as_mut_slice()[3..6].copy_from_slice(&i.attitude_rate);
        qdot.as_mut_slice()[6..].copy_from_slice(&i.swing_rate);
        GeneralizedState::new(q, qdot)
    }

    /// Segment active at tick `k`.
    pub fn segment_at(&self, k: u64) -> &SetpointSegment {
        self.setpoints
            .iter()
            .rev()
            .find(|s| ticks_of(s.t.max(0.0), self.dt) <= k)
            .unwrap_or(&self.setpoints[0])
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    Scenario(String),
    #[error("diverged at t = {t} s: {reason}")]
    Divergence { t: f64, reason: String },
    #[error("controller failed at t = {t} s: {source}")]
    Control { t: f64, source: ControlError },
    #[error("plant failed at t = {t} s: {source}")]
    Dynamics { t: f64, source: DynamicsError },
}

/// A failed run together with everything logged before the failure.
#[derive(Debug, Clone, Error)]
#[error("{error}")]
pub struct SimFailure {
    pub error: SimError,
    pub log: TrajectoryLog,
}

/// One logged instant.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub q: Vector8,
    pub qdot: Vector8,
    pub qddot: Vector8,
    pub setpoint: Setpoint,
    pub command: ControlCommand,
    pub tension: Vec3,
    pub tension_magnitude: f64,
    pub load_velocity: Vec3,
    pub v_eta: f64,
    pub v_sigma: f64,
    pub energy: f64,
    /// `q_dot^T (B u + F_d)` under the applied input.
    pub power: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrajectoryLog {
    pub samples: Vec<Sample>,
}

impl TrajectoryLog {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn series(&self, f: impl Fn(&Sample) -> f64) -> Vec<f64> {
        self.samples.iter().map(f).collect()
    }

    pub fn header() -> Vec<String> {
        let mut h = vec!["t".to_string()];
        for prefix in ["q", "qd", "qdd"] {
            h.extend((0..8).map(|i| format!("{prefix}{i}")));
        }
        h.extend(
            [
                "xidot_pd_x", "xidot_pd_y", "xidot_pd_z", "psi_d", "phi_d", "theta_d", "alpha_d",
                "beta_d", "F_td_x", "F_td_y", "F_td_z", "F_td", "F_l", "tau_eta_0", "tau_eta_1",
                "tau_eta_2", "rotor_1", "rotor_2", "rotor_3", "rotor_4", "rotor_saturated",
                "thrust_saturated", "xidot_p_x", "xidot_p_y", "xidot_p_z", "F_t_x", "F_t_y",
                "F_t_z", "F_t", "V_eta", "V_sigma", "E",
            ]
            .map(String::from),
        );
        h
    }

    fn row(s: &Sample) -> Vec<String> {
        let c = &s.command;
        let mut r: Vec<f64> = vec![s.t];
        r.extend(s.q.iter().chain(s.qdot.iter()).chain(s.qddot.iter()));
        r.extend(s.setpoint.xidot_pd.iter());
        r.extend([c.psi_d, c.phi_d, c.theta_d, c.sigma_d[0], c.sigma_d[1]]);
        r.extend(c.f_td_vector.iter());
        r.extend([c.f_td, c.thrust]);
        r.extend(c.torque.iter());
        r.extend(c.rotor_thrusts);
        r.extend([c.rotor_saturated as u8 as f64, c.thrust_saturated as u8 as f64]);
        r.extend(s.load_velocity.iter());
        r.extend(s.tension.iter());
        r.extend([s.tension_magnitude, s.v_eta, s.v_sigma, s.energy]);
        r.into_iter().map(|v| v.to_string()).collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(Self::header())?;
        for s in &self.samples {
            w.write_record(Self::row(s))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("in-memory csv");
        String::from_utf8(buf).expect("csv is utf-8")
    }
}

fn derivative(
    s: &GeneralizedState,
    u: &ControlInput,
    params: &Params,
) -> Result<(Vector8, Vector8), DynamicsError> {
    Ok((s.qdot, forward_dynamics(s, u, params)?))
}

/// One RK4 step with `u` held constant.
pub fn integrate_step(
    state: &GeneralizedState,
    u: &ControlInput,
    params: &Params,
    dt: f64,
) -> Result<GeneralizedState, DynamicsError> {
    let shifted = |k: &(Vector8, Vector8), h: f64| {
        GeneralizedState::new(state.q + k.0 * h, state.qdot + k.1 * h)
    };
    let k1 = derivative(state, u, params)?;
    let k2 = derivative(&shifted(&k1, dt / 2.0), u, params)?;
    let k3 = derivative(&shifted(&k2, dt / 2.0), u, params)?;
    let k4 = derivative(&shifted(&k3, dt), u, params)?;
    let w = dt / 6.0;
    Ok(GeneralizedState::new(
        state.q + (k1.0 + (k2.0 + k3.0) * 2.0 + k4.0) * w,
        state.qdot + (k1.1 + (k2.1 + k3.1) * 2.0 + k4.1) * w,
    ))
}

/// Adds the event's swing rate increment.
pub fn inject_disturbance(state: &GeneralizedState, event: &Disturbance) -> GeneralizedState {
    let mut s = *state;
    s.qdot[6] += event.swing_rate[0];
    s.qdot[7] += event.swing_rate[1];
    s
}

fn check_bounds(s: &GeneralizedState) -> Result<(), String> {
    if let Some(x) = s.q.iter().chain(s.qdot.iter()).find(|x| !(x.abs() < DIVERGENCE_LIMIT)) {
        return Err(format!("state component {x} exceeds {DIVERGENCE_LIMIT}"));
    }
    s.validate().map_err(|e| e.to_string())
}

fn command_for(
    scenario: &Scenario,
    state: &GeneralizedState,
    segment: &SetpointSegment,
) -> Result<ControlCommand, ControlError> {
    let setpoint = segment.setpoint();
    match scenario.mode {
        Mode::Cascade => cascade_step(state, &setpoint, &scenario.gains, &scenario.params, scenario.swing_accel),
        Mode::Attitude => {
            attitude_hold_step(state, &segment.attitude(), &setpoint, &scenario.gains, &scenario.params)
        }
        Mode::OpenLoop => Ok(ControlCommand {
            thrust: scenario.open_loop_thrust,
            torque: Vec3::from(scenario.open_loop_torque),
            requested_thrust: scenario.open_loop_thrust,
            requested_torque: Vec3::from(scenario.open_loop_torque),
            ..Default::default()
        }),
    }
}

fn record(
    t: f64,
    state: &GeneralizedState,
    setpoint: Setpoint,
    command: ControlCommand,
    params: &Params,
) -> Result<Sample, DynamicsError> {
    let u = command.input();
    let qddot = forward_dynamics(state, &u, params)?;
    let (tension, tension_magnitude) = cable_tension(state, &qddot, &u, params)?;
    let load_velocity = crate::dynamics::load_velocity(state, params)?;
    Ok(Sample {
        t,
        q: state.q,
        qdot: state.qdot,
        qddot,
        setpoint,
        v_eta: command.errors.v_eta(),
        v_sigma: command.errors.v_sigma(),
        command,
        tension,
        tension_magnitude,
        load_velocity,
        energy: total_energy(state, params)?,
        power: input_power(state, &u, params)?,
    })
}

/// Runs a scenario to completion. The log holds one sample per control
/// update, including `t = 0` and the final instant.
pub fn run_scenario(scenario: &Scenario) -> Result<TrajectoryLog, SimFailure> {
    let mut log = TrajectoryLog::default();
    let fail = |error: SimError, log: TrajectoryLog| SimFailure { error, log };
    if let Err(e) = scenario.validate() {
        return Err(fail(SimError::Scenario(e.to_string()), log));
    }
    let ticks = scenario.ticks().expect("validated");
    let params = &scenario.params;
    let dt = scenario.dt;
    let mut disturbances: Vec<(u64, &Disturbance)> =
        scenario.disturbances.iter().map(|d| (ticks_of(d.t, dt), d)).collect();
    disturbances.sort_by_key(|(k, _)| *k);
    let mut next_disturbance = 0;

    let mut state = scenario.initial_state();
    let mut command = ControlCommand::default();
    for k in 0..=ticks.total {
        let t = k as f64 * dt;
        while next_disturbance < disturbances.len() && disturbances[next_disturbance].0 <= k {
            state = inject_disturbance(&state, disturbances[next_disturbance].1);
            next_disturbance += 1;
        }
        if k % ticks.per_control == 0 || k == ticks.total {
            let segment = scenario.segment_at(k);
            command = match command_for(scenario, &state, segment) {
                Ok(c) => c,
                Err(source) => return Err(fail(SimError::Control { t, source }, log)),
            };
            match record(t, &state, segment.setpoint(), command.clone(), params) {
                Ok(sample) => log.samples.push(sample),
                Err(source) => return Err(fail(SimError::Dynamics { t, source }, log)),
            }
        }
        if k == ticks.total {
            break;
        }
        let next = match integrate_step(&state, &command.input(), params, dt) {
            Ok(s) => s,
            Err(source) => {
                let reason = source.to_string();
                let error = match source {
                    DynamicsError::Domain(_) | DynamicsError::NonFinite => {
                        SimError::Divergence { t: t + dt, reason }
                    }
                    source => SimError::Dynamics { t, source },
                };
                return Err(fail(error, log));
            }
        };
        state = next;
        state.q[5] = wrap_angle(state.q[5]);
        if let Err(reason) = check_bounds(&state) {
            return Err(fail(SimError::Divergence { t: (k + 1) as f64 * dt, reason }, log));
        }
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::mass_matrix;
    use approx::assert_relative_eq;

    fn open_loop(params: Params) -> Scenario {
        Scenario { mode: Mode::OpenLoop, params, ..Default::default() }
    }

    #[test]
    fn zero_dynamics_leave_state_unchanged() {
        let p = Params { g: 0.0, ..Params::default() };
        let s = GeneralizedState::new(Vector8::from_element(0.1), Vector8::zeros());
        let next = integrate_step(&s, &ControlInput::default(), &p, 1e-3).unwrap();
        assert_eq!(next, s);
    }

    #[test]
    fn held_hover_command_is_stationary() {
        let p = Params::default();
        let s = GeneralizedState::new(Vector8::zeros(), Vector8::zeros());
        let u = ControlInput::new(p.hover_thrust(), Vec3::new(0.0, -p.m_p * p.g * 0.12, 0.0));
        let mut x = s;
        for _ in 0..100 {
            let next = integrate_step(&x, &u, &p, 1e-3).unwrap();
            assert!((next.q - x.q).abs().max() < 1e-9);
            x = next;
        }
    }

    #[test]
    fn rk4_is_fourth_order_on_pendulum() {
        // Point pendulum hanging from a UAV whose attitude is pinned by a
        // huge inertia; compare the one-second error against a fine reference.
        let p = Params { offset: [0.0; 3], inertia: [1e9; 3], m_q: 1e9, ..Params::default() };
        let mut q = Vector8::zeros();
        q[6] = 0.4;
        q[7] = -0.2;
        let s0 = GeneralizedState::new(q, Vector8::zeros());
        let u = ControlInput::new(p.hover_thrust(), Vec3::zeros());
        let run = |dt: f64| {
            let n = (1.0 / dt).round() as usize;
            let mut s = s0;
            for _ in 0..n {
                s = integrate_step(&s, &u, &p, dt).unwrap();
            }
            s
        };
        let reference = run(1e-5);
        let e1 = (run(0.01).q - reference.q).norm();
        let e2 = (run(0.005).q - reference.q).norm();
        let ratio = e1 / e2;
        assert!(ratio > 12.0 && ratio < 20.0, "ratio {ratio}");
    }

    #[test]
    fn zero_duration_logs_initial_sample() {
        let sc = Scenario { duration: 0.0, ..open_loop(Params::default()) };
        let log = run_scenario(&sc).unwrap();
        assert_eq!(log.len(), 1);
        assert_eq!(log.samples[0].t, 0.0);
    }

    #[test]
    fn zero_kick_is_identity_and_kick_adds_swing_energy() {
        let p = Params::default();
        let s = GeneralizedState::new(Vector8::zeros(), Vector8::zeros());
        assert_eq!(inject_disturbance(&s, &Disturbance::default()), s);
        let kicked = inject_disturbance(&s, &Disturbance { t: 0.0, swing_rate: [0.5, 0.0] });
        let de = total_energy(&kicked, &p).unwrap() - total_energy(&s, &p).unwrap();
        let m77 = mass_matrix(&s.q, &p).unwrap()[(6, 6)];
        assert_relative_eq!(de, 0.5 * m77 * 0.25, epsilon = 1e-15);
    }

    #[test]
    fn rejects_incommensurate_control_period() {
        let sc = Scenario { control_rate: 300.0, ..Default::default() };
        assert!(matches!(sc.validate(), Err(ScenarioError::Invalid(_))));
    }

    #[test]
    fn parse_error_reports_line() {
        let text = "name = \"x\"\nduration = 1.0\ndt = \"oops\"\n";
        match Scenario::from_toml_str(text) {
            Err(ScenarioError::Parse(m)) => assert!(m.starts_with("line 3"), "{m}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn scenario_round_trips_through_toml() {
        let sc = Scenario {
            disturbances: vec![Disturbance { t: 1.0, swing_rate: [0.5, 0.0] }],
            ..Default::default()
        };
        let back = Scenario::from_toml_str(&sc.to_toml_string()).unwrap();
        assert_eq!(back, sc);
    }

    #[test]
    fn divergence_keeps_partial_log() {
        // Free fall with a large roll torque tumbles past the roll bound.
        let sc = Scenario {
            duration: 2.0,
            open_loop_torque: [1.0, 0.0, 0.0],
            ..open_loop(Params::default())
        };
        let err = run_scenario(&sc).unwrap_err();
        assert!(matches!(err.error, SimError::Divergence { .. }), "{:?}", err.error);
        assert!(!err.log.is_empty());
    }

    #[test]
    fn segment_lookup_uses_start_ticks() {
        let sc = Scenario {
            setpoints: vec![
                SetpointSegment::default(),
                SetpointSegment { t: 1.0, load_velocity: [0.0, 1.5, 0.0], ..Default::default() },
            ],
            ..Default::default()
        };
        assert_eq!(sc.segment_at(999).load_velocity[1], 0.0);
        assert_eq!(sc.segment_at(1000).load_velocity[1], 1.5);
    }

    #[test]
    fn csv_header_matches_rows() {
        let sc = Scenario { duration: 0.01, ..Default::default() };
        let csv = run_scenario(&sc).unwrap().to_csv_string();
        let mut lines = csv.lines();
        let header = lines.next().unwrap().split(',').count();
        assert_eq!(header, TrajectoryLog::header().len());
        for line in lines {
            assert_eq!(line.split(',').count(), header);
        }
    }
}
