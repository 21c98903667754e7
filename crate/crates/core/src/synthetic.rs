//! Synthetic ground-truth car-following data.
//!
//! A follower is driven by the time-varying IDM behind a prescribed leader
//! speed profile. Populations of such drivers, with a known aggressiveness
//! scalar per driver, stand in for a recorded drone dataset in tests and
//! examples.

use std::io::Write as _;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::idm::{
    ballistic_step, equilibrium_spacing, idm_acceleration, IdmParams, KinematicState,
    ParamBounds,
};
use crate::rng;
use crate::trajectory::{CfEpisode, CfFrame, TrafficCondition, TrajectoryError};

/// Peak acceleration contributed by each sinusoid of [`LeaderProfile::random_urban`], m/s².
pub const URBAN_PEAK_ACCEL: f64 = 0.6;

/// Time-indexed IDM parameters.
pub trait ThetaSchedule {
    fn theta_at(&self, t: f64) -> IdmParams;
}

impl ThetaSchedule for IdmParams {
    fn theta_at(&self, _t: f64) -> IdmParams {
        *self
    }
}

impl<F: Fn(f64) -> IdmParams> ThetaSchedule for F {
    fn theta_at(&self, t: f64) -> IdmParams {
        self(t)
    }
}

/// Parameters that jump at given instants. Before the first change the first
/// value applies.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseTheta {
    pub changes: Vec<(f64, IdmParams)>,
}

impl ThetaSchedule for PiecewiseTheta {
    fn theta_at(&self, t: f64) -> IdmParams {
        let mut current = self.changes[0].1;
        for (start, theta) in &self.changes {
            if t + 1e-9 >= *start {
                current = *theta;
            } else {
                break;
            }
        }
        current
    }
}

/// Parameters sampled on a regular grid; sample `k` covers `[t0 + k·dt, t0 + (k+1)·dt)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledTheta {
    pub t0: f64,
    pub dt: f64,
    pub values: Vec<IdmParams>,
}

impl ThetaSchedule for SampledTheta {
    fn theta_at(&self, t: f64) -> IdmParams {
        let k = ((t - self.t0) / self.dt + 1e-9).floor().max(0.0) as usize;
        self.values[k.min(self.values.len() - 1)]
    }
}

/// Leader speed sampled every `dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct LeaderProfile {
    pub dt: f64,
    pub speeds: Vec<f64>,
}

impl LeaderProfile {
    pub fn constant(v: f64, dt: f64, n: usize) -> Self {
        Self {
            dt,
            speeds: vec![v; n],
        }
    }

    pub fn from_fn(dt: f64, n: usize, f: impl Fn(f64) -> f64) -> Self {
        Self {
            dt,
            speeds: (0..n).map(|k| f(k as f64 * dt).max(0.0)).collect(),
        }
    }

    /// Smooth urban speed curve: a mean speed plus three sinusoids whose
    /// amplitudes keep the peak acceleration near 0.6 m/s² each.
    pub fn random_urban<R: Rng>(rng: &mut R, dt: f64, n: usize) -> Self {
        let mean = rng.random_range(8.0..11.0);
        let comps: Vec<(f64, f64, f64)> = (0..3)
            .map(|_| {
                let period: f64 = rng.random_range(8.0..30.0);
                let amp = rng.random_range(0.3..1.0) * URBAN_PEAK_ACCEL * period / std::f64::consts::TAU;
                let phase = rng.random_range(0.0..std::f64::consts::TAU);
                (period, amp, phase)
            })
            .collect();
        Self::from_fn(dt, n, |t| {
            let wave: f64 = comps
                .iter()
                .map(|(p, a, ph)| a * (std::f64::consts::TAU * t / p + ph).sin())
                .sum();
            (mean + wave).max(0.5)
        })
    }

    /// Forward-difference acceleration, i.e. the constant acceleration that
    /// moves the leader between consecutive samples. The last sample repeats
    /// the previous value.
    pub fn accelerations(&self) -> Vec<f64> {
        let n = self.speeds.len();
        (0..n)
            .map(|k| {
                if n < 2 {
                    0.0
                } else if k + 1 < n {
                    (self.speeds[k + 1] - self.speeds[k]) / self.dt
                } else {
                    (self.speeds[n - 1] - self.speeds[n - 2]) / self.dt
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// Standard deviation of the spacing observation noise, m.
    pub spacing_std: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthOptions {
    pub follower_id: i64,
    pub leader_id: i64,
    pub leader_length: f64,
    /// Initial gap; equilibrium gap for the first θ when absent.
    pub initial_gap: Option<f64>,
    /// Initial follower speed; the leader's initial speed when absent.
    pub initial_speed: Option<f64>,
    pub noise: NoiseConfig,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            follower_id: 2,
            leader_id: 1,
            leader_length: 4.0,
            initial_gap: None,
            initial_speed: None,
            noise: NoiseConfig::default(),
        }
    }
}

/// Generates one episode by driving the follower with the time-varying IDM.
///
/// The episode has `round(duration / dt) + 1` frames, none when `duration`
/// is zero. Stored follower accelerations are the IDM outputs, so they can be
/// recomputed exactly from the stored conditions and the schedule. Spacing
/// noise is applied to the stored follower position.
pub fn generate_synthetic_episode(
    schedule: &dyn ThetaSchedule,
    leader: &LeaderProfile,
    dt: f64,
    duration: f64,
    opts: &SynthOptions,
) -> Result<CfEpisode, TrajectoryError> {
    if !(dt > 0.0) || duration < 0.0 {
        return Err(TrajectoryError::Invalid("dt must be positive and duration non-negative".into()));
    }
    if (leader.dt - dt).abs() > 1e-12 {
        return Err(TrajectoryError::Invalid("leader profile sampled at a different dt".into()));
    }
    let n = if duration == 0.0 {
        0
    } else {
        (duration / dt).round() as usize + 1
    };
    let mut ep = CfEpisode {
        follower_id: opts.follower_id,
        leader_id: opts.leader_id,
        leader_length: opts.leader_length,
        dt,
        frames: Vec::with_capacity(n),
    };
    if n == 0 {
        return Ok(ep);
    }
    if leader.speeds.len() < n {
        return Err(TrajectoryError::Invalid(format!(
            "leader profile has {} samples, {n} needed",
            leader.speeds.len()
        )));
    }
    if leader.speeds.iter().any(|v| *v < 0.0) {
        return Err(TrajectoryError::Invalid("negative leader speed".into()));
    }
    let accel_l = leader.accelerations();
    let theta0 = schedule.theta_at(0.0);
    let v_init = opts.initial_speed.unwrap_or(leader.speeds[0]);
    let gap0 = opts.initial_gap.unwrap_or_else(|| {
        if v_init < 0.999 * theta0.v0 {
            equilibrium_spacing(&theta0, v_init)
        } else {
            theta0.s0 + v_init * theta0.t_headway
        }
    });
    let mut x_l = gap0 + opts.leader_length;
    let mut state = KinematicState { x: 0.0, v: v_init };
    let mut noise_rng = rng::stream(opts.noise.seed, "spacing-noise", opts.follower_id as u64);
    let noise = Normal::new(0.0, opts.noise.spacing_std.max(0.0)).expect("finite std");

    for k in 0..n {
        let t = k as f64 * dt;
        let v_l = leader.speeds[k];
        let s = x_l - state.x - opts.leader_length;
        if !(s > 0.0) {
            return Err(TrajectoryError::Collision(t));
        }
        let cond = TrafficCondition {
            dv: state.v - v_l,
            v: state.v,
            s,
            v_lead: v_l,
            a_lat_lead: 0.0,
            a_lon_lead: accel_l[k],
        };
        let theta = schedule.theta_at(t);
        let a = idm_acceleration(&theta, &cond).map_err(|_| TrajectoryError::Collision(t))?;
        let eps = if opts.noise.spacing_std > 0.0 {
            noise.sample(&mut noise_rng)
        } else {
            0.0
        };
        let s_obs = s + eps;
        ep.frames.push(CfFrame {
            t,
            v_f: state.v,
            v_l,
            x_f: state.x - eps,
            x_l,
            s: if s_obs > 0.0 { s_obs } else { s },
            dv: cond.dv,
            a_f: a,
            a_lat_l: 0.0,
            a_lon_l: accel_l[k],
        });
        state = ballistic_step(state, a, dt);
        if k + 1 < n {
            x_l += 0.5 * (leader.speeds[k] + leader.speeds[k + 1]) * dt;
        }
    }
    Ok(ep)
}

/// Configuration of a synthetic driver population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PopulationConfig {
    pub n_drivers: usize,
    /// Episode length per driver, s.
    pub duration: f64,
    pub dt: f64,
    pub seed: u64,
    /// Strength of the response of the parameters to leader acceleration.
    pub modulation: f64,
    /// Relative amplitude of the slow parameter drift.
    pub drift: f64,
    pub noise_std: f64,
    /// First driver id; ids are consecutive.
    pub first_id: i64,
}

impl Default for PopulationConfig {
    fn default() -> Self {
        Self {
            n_drivers: 20,
            duration: 40.0,
            dt: 0.04,
            seed: 1,
            modulation: 0.2,
            drift: 0.1,
            noise_std: 0.0,
            first_id: 1,
        }
    }
}

/// One generated driver with its ground truth.
#[derive(Debug, Clone)]
pub struct SyntheticDriver {
    pub driver_id: i64,
    /// Ground-truth aggressiveness in `[0, 1]`.
    pub aggressiveness: f64,
    pub base: IdmParams,
    pub schedule: SampledTheta,
    pub episode: CfEpisode,
}

/// Long-term parameters of a driver with aggressiveness `g` in `[0, 1]`:
/// higher desired speed and acceleration, shorter headway, smaller standstill
/// gap and smaller comfortable deceleration as `g` grows.
pub fn base_theta(g: f64) -> IdmParams {
    IdmParams::new(
        24.0 + 12.0 * g,
        2.0 - 0.8 * g,
        2.5 - 1.0 * g,
        1.6 + 1.6 * g,
        2.2 - 0.8 * g,
    )
}

/// Per-frame parameters around `base`. The driver becomes more aggressive
/// while the leader accelerates and drifts slowly on top of that.
pub fn modulated_schedule(
    base: &IdmParams,
    leader: &LeaderProfile,
    modulation: f64,
    drift: f64,
    drift_period: f64,
    drift_phase: f64,
    bounds: &ParamBounds,
) -> SampledTheta {
    let acc = leader.accelerations();
    let values = acc
        .iter()
        .enumerate()
        .map(|(k, a)| {
            let t = k as f64 * leader.dt;
            let m = modulation * (a / 0.5).tanh()
                + drift * (std::f64::consts::TAU * t / drift_period + drift_phase).sin();
            let theta = IdmParams::new(
                base.v0 * (1.0 + 0.5 * m),
                base.t_headway * (1.0 - m),
                base.s0 * (1.0 - 0.5 * m),
                base.a_max * (1.0 + m),
                base.b * (1.0 - 0.5 * m),
            );
            bounds.clip(&theta)
        })
        .collect();
    SampledTheta {
        t0: 0.0,
        dt: leader.dt,
        values,
    }
}

/// Generates `cfg.n_drivers` drivers, each behind its own random leader.
pub fn synthetic_population(cfg: &PopulationConfig) -> Result<Vec<SyntheticDriver>, TrajectoryError> {
    let bounds = ParamBounds::default();
    let n = (cfg.duration / cfg.dt).round() as usize + 1;
    let mut drivers = Vec::with_capacity(cfg.n_drivers);
    for i in 0..cfg.n_drivers {
        let mut r = rng::stream(cfg.seed, "population", i as u64);
        let g: f64 = r.random_range(0.0..1.0);
        let jitter = |r: &mut rand_chacha::ChaCha8Rng| 1.0 + r.random_range(-0.05..0.05);
        let nominal = base_theta(g);
        let base = IdmParams::new(
            nominal.v0 * jitter(&mut r),
            nominal.t_headway * jitter(&mut r),
            nominal.s0 * jitter(&mut r),
            nominal.a_max * jitter(&mut r),
            nominal.b * jitter(&mut r),
        );
        let drift_period = r.random_range(20.0..40.0);
        let drift_phase = r.random_range(0.0..std::f64::consts::TAU);
        let driver_id = cfg.first_id + i as i64;
        let mut attempt = 0;
        loop {
            let mut lr = rng::stream(cfg.seed, "leader", (i as u64) << 8 | attempt);
            let leader = LeaderProfile::random_urban(&mut lr, cfg.dt, n);
            let schedule = modulated_schedule(
                &base,
                &leader,
                cfg.modulation,
                cfg.drift,
                drift_period,
                drift_phase,
                &bounds,
            );
            let opts = SynthOptions {
                follower_id: driver_id,
                leader_id: 1_000_000 + driver_id,
                noise: NoiseConfig {
                    spacing_std: cfg.noise_std,
                    seed: cfg.seed,
                },
                ..Default::default()
            };
            match generate_synthetic_episode(&schedule, &leader, cfg.dt, cfg.duration, &opts) {
                Ok(episode) => {
                    drivers.push(SyntheticDriver {
                        driver_id,
                        aggressiveness: g,
                        base,
                        schedule,
                        episode,
                    });
                    break;
                }
                Err(TrajectoryError::Collision(_)) if attempt < 16 => attempt += 1,
                Err(e) => return Err(e),
            }
        }
    }
    Ok(drivers)
}

/// Writes episodes as a multi-vehicle trajectory file in the default
/// [`crate::trajectory::TrajectoryFormat`] layout, one lane per pair.
pub fn write_trajectory_file(path: &Path, episodes: &[CfEpisode]) -> Result<(), TrajectoryError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "track_id,time,position,speed,lane,lon_acc,lat_acc,type,length")?;
    for (lane, ep) in episodes.iter().enumerate() {
        for f in &ep.frames {
            writeln!(
                out,
                "{},{},{},{},{},{},{},Car,{}",
                ep.leader_id, f.t, f.x_l, f.v_l, lane + 1, f.a_lon_l, f.a_lat_l, ep.leader_length
            )?;
        }
        for f in &ep.frames {
            writeln!(
                out,
                "{},{},{},{},{},{},0,Car,{}",
                ep.follower_id,
                f.t,
                f.x_f,
                f.v_f,
                lane + 1,
                f.a_f,
                crate::trajectory::DEFAULT_VEHICLE_LENGTH
            )?;
        }
    }
    out.flush()?;
    Ok(())
}
