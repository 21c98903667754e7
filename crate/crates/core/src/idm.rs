//! Intelligent Driver Model with fixed or time-varying parameters, the
//! ballistic integrator and goodness-of-fit helpers.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trajectory::{LeaderTrack, TrafficCondition};

/// Acceleration exponent. Fixed for all drivers.
pub const DELTA: i32 = 4;

/// Names of the five calibrated parameters, in vector order.
pub const PARAM_NAMES: [&str; 5] = ["v0", "T", "s0", "a_max", "b"];

#[derive(Debug, Error, PartialEq)]
pub enum IdmError {
    #[error("spacing must be positive, got {0}")]
    NonPositiveSpacing(f64),
    #[error("sequence length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("empty sequence")]
    Empty,
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

/// IDM parameter vector `(v0, T, s0, a_max, b)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdmParams {
    /// Desired speed, m/s.
    pub v0: f64,
    /// Desired time headway, s.
    pub t_headway: f64,
    /// Standstill gap, m.
    pub s0: f64,
    /// Maximum acceleration, m/s².
    pub a_max: f64,
    /// Desired (comfortable) deceleration, m/s².
    pub b: f64,
}

impl IdmParams {
    pub const fn new(v0: f64, t_headway: f64, s0: f64, a_max: f64, b: f64) -> Self {
        Self {
            v0,
            t_headway,
            s0,
            a_max,
            b,
        }
    }

    pub fn to_array(&self) -> [f64; 5] {
        [self.v0, self.t_headway, self.s0, self.a_max, self.b]
    }

    pub fn from_array(a: [f64; 5]) -> Self {
        Self::new(a[0], a[1], a[2], a[3], a[4])
    }

    pub fn from_slice(a: &[f64]) -> Self {
        Self::new(a[0], a[1], a[2], a[3], a[4])
    }

    /// All five components strictly positive and finite.
    pub fn is_valid(&self) -> bool {
        self.to_array().iter().all(|p| p.is_finite() && *p > 0.0)
    }
}

impl Default for IdmParams {
    fn default() -> Self {
        Self::new(15.0, 1.5, 2.0, 1.5, 2.0)
    }
}

/// Elementwise box constraints on [`IdmParams`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamBounds {
    pub lb: IdmParams,
    pub ub: IdmParams,
}

impl Default for ParamBounds {
    fn default() -> Self {
        Self {
            lb: IdmParams::new(1.0, 0.1, 0.1, 0.1, 0.1),
            ub: IdmParams::new(40.0, 5.0, 10.0, 6.0, 6.0),
        }
    }
}

impl ParamBounds {
    pub fn new(lb: IdmParams, ub: IdmParams) -> Result<Self, IdmError> {
        let b = Self { lb, ub };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<(), IdmError> {
        if !self.lb.is_valid() {
            return Err(IdmError::InvalidParams("lower bounds must be positive".into()));
        }
        let (lb, ub) = (self.lb.to_array(), self.ub.to_array());
        for i in 0..5 {
            if !(lb[i] < ub[i]) {
                return Err(IdmError::InvalidParams(format!(
                    "bound {} has lb {} >= ub {}",
                    PARAM_NAMES[i], lb[i], ub[i]
                )));
            }
        }
        Ok(())
    }

    pub fn width(&self) -> [f64; 5] {
        let (lb, ub) = (self.lb.to_array(), self.ub.to_array());
        std::array::from_fn(|i| ub[i] - lb[i])
    }

    pub fn contains(&self, theta: &IdmParams) -> bool {
        let (lb, ub, x) = (self.lb.to_array(), self.ub.to_array(), theta.to_array());
        (0..5).all(|i| x[i] >= lb[i] && x[i] <= ub[i])
    }

    pub fn contains_array(&self, x: &[f64; 5]) -> bool {
        self.contains(&IdmParams::from_array(*x))
    }

    pub fn clip(&self, theta: &IdmParams) -> IdmParams {
        IdmParams::from_array(self.clip_array(&theta.to_array()))
    }

    pub fn clip_array(&self, x: &[f64; 5]) -> [f64; 5] {
        let (lb, ub) = (self.lb.to_array(), self.ub.to_array());
        std::array::from_fn(|i| x[i].clamp(lb[i], ub[i]))
    }

    /// Maps θ to the unit cube.
    pub fn normalize(&self, x: &[f64; 5]) -> [f64; 5] {
        let (lb, w) = (self.lb.to_array(), self.width());
        std::array::from_fn(|i| (x[i] - lb[i]) / w[i])
    }

    pub fn denormalize(&self, u: &[f64; 5]) -> [f64; 5] {
        let (lb, w) = (self.lb.to_array(), self.width());
        std::array::from_fn(|i| lb[i] + u[i] * w[i])
    }
}

/// Position and speed of a single vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KinematicState {
    pub x: f64,
    pub v: f64,
}

/// Desired dynamic gap `s*(v, Δv)`.
pub fn desired_spacing(theta: &IdmParams, v: f64, dv: f64) -> f64 {
    let dynamic = v * theta.t_headway + v * dv / (2.0 * (theta.a_max * theta.b).sqrt());
    theta.s0 + dynamic.max(0.0)
}

/// IDM acceleration for the follower in `cond` (unclamped).
pub fn idm_acceleration(theta: &IdmParams, cond: &TrafficCondition) -> Result<f64, IdmError> {
    if !(cond.s > 0.0) {
        return Err(IdmError::NonPositiveSpacing(cond.s));
    }
    let s_star = desired_spacing(theta, cond.v, cond.dv);
    Ok(theta.a_max * (1.0 - (cond.v / theta.v0).powi(DELTA) - (s_star / cond.s).powi(2)))
}

/// Like [`idm_acceleration`] but clamped to `[-b_emergency, a_max]`.
pub fn idm_acceleration_clamped(
    theta: &IdmParams,
    cond: &TrafficCondition,
    b_emergency: f64,
) -> Result<f64, IdmError> {
    idm_acceleration(theta, cond).map(|a| a.clamp(-b_emergency, theta.a_max))
}

/// Ballistic (trapezoidal) update over `dt` under constant `a`.
///
/// Speed is clamped at zero; when the vehicle stops inside the step the
/// position is advanced only up to the stop instant.
pub fn ballistic_step(state: KinematicState, a: f64, dt: f64) -> KinematicState {
    let v_next = state.v + a * dt;
    if v_next >= 0.0 {
        return KinematicState {
            x: state.x + 0.5 * (v_next + state.v) * dt,
            v: v_next,
        };
    }
    // a < 0 here; stop time t* = -v / a lies in [0, dt)
    let t_stop = if a < 0.0 { (-state.v / a).max(0.0) } else { 0.0 };
    KinematicState {
        x: state.x + 0.5 * state.v * t_stop,
        v: 0.0,
    }
}

/// One closed-loop follower sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FollowerFrame {
    pub t: f64,
    pub x: f64,
    pub v: f64,
    pub s: f64,
    pub dv: f64,
    pub a: f64,
}

/// Output of [`simulate_follower`].
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub frames: Vec<FollowerFrame>,
    /// Leader frame index at which the spacing became non-positive.
    pub collision_step: Option<usize>,
}

impl Rollout {
    pub fn collided(&self) -> bool {
        self.collision_step.is_some()
    }

    pub fn spacing(&self) -> Vec<f64> {
        self.frames.iter().map(|f| f.s).collect()
    }

    pub fn speed(&self) -> Vec<f64> {
        self.frames.iter().map(|f| f.v).collect()
    }

    pub fn accel(&self) -> Vec<f64> {
        self.frames.iter().map(|f| f.a).collect()
    }
}

/// Closed-loop rollout of a follower behind an observed leader.
///
/// At every leader frame the traffic condition is built from the simulated
/// follower and the observed leader, `accel_source` is queried and the
/// follower is advanced with [`ballistic_step`]. The rollout stops at the
/// first frame whose spacing is non-positive.
pub fn simulate_follower<F>(
    leader: &LeaderTrack,
    initial: KinematicState,
    mut accel_source: F,
    dt: f64,
) -> Rollout
where
    F: FnMut(f64, &TrafficCondition) -> f64,
{
    let mut frames = Vec::with_capacity(leader.frames.len());
    let mut state = initial;
    for (k, lf) in leader.frames.iter().enumerate() {
        let s = lf.x - state.x - leader.length;
        if !(s > 0.0) {
            return Rollout {
                frames,
                collision_step: Some(k),
            };
        }
        let cond = TrafficCondition {
            dv: state.v - lf.v,
            v: state.v,
            s,
            v_lead: lf.v,
            a_lat_lead: lf.a_lat,
            a_lon_lead: lf.a_lon,
        };
        let a = accel_source(lf.t, &cond);
        frames.push(FollowerFrame {
            t: lf.t,
            x: state.x,
            v: state.v,
            s,
            dv: cond.dv,
            a,
        });
        state = ballistic_step(state, a, dt);
    }
    Rollout {
        frames,
        collision_step: None,
    }
}

/// Root mean squared error between two equally long sequences.
pub fn gof_rmse(obs: &[f64], sim: &[f64]) -> Result<f64, IdmError> {
    if obs.len() != sim.len() {
        return Err(IdmError::LengthMismatch(obs.len(), sim.len()));
    }
    if obs.is_empty() {
        return Err(IdmError::Empty);
    }
    let sse: f64 = obs.iter().zip(sim).map(|(o, s)| (o - s).powi(2)).sum();
    Ok((sse / obs.len() as f64).sqrt())
}

/// Measure of performance compared between observation and simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mop {
    #[default]
    Spacing,
    Speed,
    Accel,
}

impl Mop {
    pub fn of(&self, f: &FollowerFrame) -> f64 {
        match self {
            Mop::Spacing => f.s,
            Mop::Speed => f.v,
            Mop::Accel => f.a,
        }
    }
}

/// Equilibrium spacing of a follower at speed `v < v0` behind a leader at the
/// same speed.
pub fn equilibrium_spacing(theta: &IdmParams, v: f64) -> f64 {
    desired_spacing(theta, v, 0.0) / (1.0 - (v / theta.v0).powi(DELTA)).sqrt()
}
