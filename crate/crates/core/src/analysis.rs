//! Metrics over trajectory logs.

use crate::dynamics::{input_power, DynamicsError, GeneralizedState, Params};
use crate::simulator::{Mode, Scenario, SimError, TrajectoryLog};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("window contains no samples")]
    EmptyWindow,
    #[error("series lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("series never settles inside the band")]
    NeverSettles,
    #[error("step has zero amplitude")]
    DegenerateStep,
    #[error("decay fit needs positive values, found {0}")]
    NonPositive(f64),
    #[error("band must lie in (0, 1) for a relative band and be positive for an absolute one")]
    InvalidBand,
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

/// Closed time interval `[start, end]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub start: f64,
    pub end: f64,
}

impl Window {
    pub const ALL: Window = Window { start: f64::NEG_INFINITY, end: f64::INFINITY };

    pub fn new(start: f64, end: f64) -> Self {
        Self { start, end }
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.start && t <= self.end
    }

    fn indices<'a>(&'a self, times: &'a [f64]) -> impl Iterator<Item = usize> + 'a {
        times.iter().enumerate().filter(|(_, t)| self.contains(**t)).map(|(i, _)| i)
    }
}

pub fn rmse(times: &[f64], series: &[f64], reference: &[f64], window: Window) -> Result<f64, AnalysisError> {
    if series.len() != reference.len() || series.len() != times.len() {
        return Err(AnalysisError::LengthMismatch(series.len(), reference.len()));
    }
    let (sum, n) = window
        .indices(times)
        .fold((0.0, 0usize), |(s, n), i| (s + (series[i] - reference[i]).powi(2), n + 1));
    if n == 0 {
        return Err(AnalysisError::EmptyWindow);
    }
    Ok((sum / n as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Band {
    /// Fraction of the target magnitude.
    Relative(f64),
    Absolute(f64),
}

impl Band {
    fn half_width(&self, target: f64) -> Result<f64, AnalysisError> {
        match *self {
            Band::Relative(f) if f > 0.0 && f < 1.0 => Ok(f * target.abs()),
            Band::Absolute(a) if a > 0.0 => Ok(a),
            _ => Err(AnalysisError::InvalidBand),
        }
    }
}

/// Time after which the series stays within the band around `target` until
/// the end of the log. The entry instant is interpolated linearly between the
/// last sample outside and the first sample inside.
pub fn settling_time(times: &[f64], series: &[f64], target: f64, band: Band) -> Result<f64, AnalysisError> {
    if times.len() != series.len() {
        return Err(AnalysisError::LengthMismatch(times.len(), series.len()));
    }
    if series.is_empty() {
        return Err(AnalysisError::EmptyWindow);
    }
    let w = band.half_width(target)?;
    let inside = |x: f64| (x - target).abs() <= w;
    let Some(last_out) = series.iter().rposition(|x| !inside(*x)) else {
        return Ok(times[0]);
    };
    if last_out + 1 == series.len() {
        return Err(AnalysisError::NeverSettles);
    }
    let (t0, t1) = (times[last_out], times[last_out + 1]);
    let (x0, x1) = (series[last_out], series[last_out + 1]);
    let edge = if x0 > target { target + w } else { target - w };
    let frac = if x1 == x0 { 1.0 } else { ((edge - x0) / (x1 - x0)).clamp(0.0, 1.0) };
    Ok(t0 + frac * (t1 - t0))
}

/// Peak excursion beyond `target`, in percent of the step `target - initial`.
pub fn overshoot(series: &[f64], initial: f64, target: f64) -> Result<f64, AnalysisError> {
    let step = target - initial;
    if step == 0.0 || !step.is_finite() {
        return Err(AnalysisError::DegenerateStep);
    }
    let peak = series.iter().map(|x| (x - target) / step).fold(0.0, f64::max);
    Ok(peak * 100.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// Exponential decay rate (1/s), the negated slope of `ln V` against `t`.
    pub rate: f64,
    pub intercept: f64,
    /// RMS residual of the log-linear fit.
    pub residual: f64,
}

pub fn decay_rate_fit(times: &[f64], values: &[f64], window: Window) -> Result<DecayFit, AnalysisError> {
    if times.len() != values.len() {
        return Err(AnalysisError::LengthMismatch(times.len(), values.len()));
    }
    let mut pts = Vec::new();
    for i in window.indices(times) {
        let v = values[i];
        if !(v > 0.0) {
            return Err(AnalysisError::NonPositive(v));
        }
        pts.push((times[i], v.ln()));
    }
    if pts.len() < 2 {
        return Err(AnalysisError::EmptyWindow);
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mt;
    let residual = (pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum::<f64>() / n).sqrt();
    Ok(DecayFit { rate: -slope, intercept, residual })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyAudit {
    /// `(E(t) - E(0)) / max(|E(0)|, 1)` per sample.
    pub drift: Vec<f64>,
    pub max_drift: f64,
    /// Largest gap between the energy change rate over a sample interval and
    /// the mean input power over it, with the interval's input held.
    pub max_work_rate_error: f64,
}

pub fn energy_audit(log: &TrajectoryLog, params: &Params) -> Result<EnergyAudit, AnalysisError> {
    let s = &log.samples;
    if s.is_empty() {
        return Err(AnalysisError::EmptyWindow);
    }
    let e0 = s[0].energy;
    let scale = e0.abs().max(1.0);
    let drift: Vec<f64> = s.iter().map(|x| (x.energy - e0) / scale).collect();
    let max_drift = drift.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    let mut max_work_rate_error = 0.0f64;
    for w in s.windows(2) {
        let h = w[1].t - w[0].t;
        let end = GeneralizedState::new(w[1].q, w[1].qdot);
        let p_end = input_power(&end, &w[0].command.input(), params)?;
        let mean_power = 0.5 * (w[0].power + p_end);
        let rate = (w[1].energy - w[0].energy) / h;
        max_work_rate_error = max_work_rate_error.max((rate - mean_power).abs());
    }
    Ok(EnergyAudit { drift, max_drift, max_work_rate_error })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelMetrics {
    pub name: String,
    pub unit: String,
    pub rmse: Option<f64>,
    pub settling_time: Option<f64>,
    pub overshoot_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub scenario: String,
    pub completed: bool,
    pub failure: Option<String>,
    pub duration: f64,
    pub samples: usize,
    pub channels: Vec<ChannelMetrics>,
    pub v_eta_decay: Option<DecayFit>,
    pub v_sigma_decay: Option<DecayFit>,
    pub energy_drift: Option<f64>,
    pub tension_mean: Option<f64>,
    pub tension_std: Option<f64>,
    pub max_swing_deg: f64,
    pub final_swing_deg: f64,
    pub rotor_saturation_rate: f64,
    pub thrust_saturation_rate: f64,
}

/// Settling band used for step channels.
pub const SETTLING_BAND: f64 = 0.1;
/// Length of the window for decay fits after a step.
pub const DECAY_WINDOW: f64 = 0.5;

fn mean_std(x: &[f64]) -> Option<(f64, f64)> {
    if x.is_empty() {
        return None;
    }
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    Some((m, (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt()))
}

fn channel(
    name: &str,
    unit: &str,
    times: &[f64],
    series: &[f64],
    reference: &[f64],
) -> ChannelMetrics {
    let rmse = rmse(times, series, reference, Window::ALL).ok();
    let (initial, target) = match (series.first(), reference.last()) {
        (Some(a), Some(b)) => (*a, *b),
        _ => (0.0, 0.0),
    };
    let is_step = (target - initial).abs() > 1e-9;
    ChannelMetrics {
        name: name.into(),
        unit: unit.into(),
        rmse,
        settling_time: is_step
            .then(|| settling_time(times, series, target, Band::Relative(SETTLING_BAND)).ok())
            .flatten(),
        overshoot_pct: is_step.then(|| overshoot(series, initial, target).ok()).flatten(),
    }
}

fn swing_magnitude_deg(q: &crate::dynamics::Vector8) -> f64 {
    q[6].hypot(q[7]).to_degrees()
}

impl MetricReport {
    pub fn from_log(scenario: &Scenario, log: &TrajectoryLog, failure: Option<&SimError>) -> Self {
        let times = log.times();
        let mut channels = Vec::new();
        match scenario.mode {
            Mode::Attitude => {
                for (i, name) in ["phi", "theta", "psi"].iter().enumerate() {
                    let series = log.series(|s| s.q[3 + i].to_degrees());
                    let reference = log.series(|s| [s.command.phi_d, s.command.theta_d, s.command.psi_d][i].to_degrees());
                    channels.push(channel(name, "deg", &times, &series, &reference));
                }
            }
            _ => {
                for (i, name) in ["xidot_p_x", "xidot_p_y", "xidot_p_z"].iter().enumerate() {
                    let series = log.series(|s| s.load_velocity[i]);
                    let reference = log.series(|s| s.setpoint.xidot_pd[i]);
                    channels.push(channel(name, "m/s", &times, &series, &reference));
                }
            }
        }
        for (i, name) in ["alpha", "beta"].iter().enumerate() {
            let series = log.series(|s| s.q[6 + i].to_degrees());
            channels.push(channel(name, "deg", &times, &series, &vec![0.0; series.len()]));
        }
        let t0 = times.first().copied().unwrap_or(0.0);
        let window = Window::new(t0, t0 + DECAY_WINDOW);
        let fit = |f: fn(&crate::simulator::Sample) -> f64| decay_rate_fit(&times, &log.series(f), window).ok();
        let tension: Vec<f64> = log.series(|s| s.tension.norm());
        let stats = mean_std(&tension);
        let n = log.len().max(1) as f64;
        let energy_drift = energy_audit(log, &scenario.params).map(|a| a.max_drift).ok();
        MetricReport {
            scenario: scenario.name.clone(),
            completed: failure.is_none(),
            failure: failure.map(|e| e.to_string()),
            duration: times.last().copied().unwrap_or(0.0) - t0,
            samples: log.len(),
            channels,
            v_eta_decay: fit(|s| s.v_eta),
            v_sigma_decay: fit(|s| s.v_sigma),
            energy_drift,
            tension_mean: stats.map(|s| s.0),
            tension_std: stats.map(|s| s.1),
            max_swing_deg: log.samples.iter().map(|s| swing_magnitude_deg(&s.q)).fold(0.0, f64::max),
            final_swing_deg: log.samples.last().map(|s| swing_magnitude_deg(&s.q)).unwrap_or(0.0),
            rotor_saturation_rate: log.samples.iter().filter(|s| s.command.rotor_saturated).count() as f64 / n,
            thrust_saturation_rate: log.samples.iter().filter(|s| s.command.thrust_saturated).count() as f64 / n,
        }
    }
}
