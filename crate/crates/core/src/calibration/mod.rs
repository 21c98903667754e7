//! Fixed and time-varying calibration of IDM parameters.
//!
//! [`calibrate_fixed`] fits one parameter vector to a whole episode by
//! minimising the closed-loop error of the measure of performance.
//! [`calibrate_time_varying`] then walks the episode in short windows and
//! keeps a diagonal Gaussian belief over the parameters, refined by
//! sample-and-accept rounds and chained from one window to the next.

mod fixed;
mod io;
mod time_varying;

pub use fixed::{calibrate_fixed, nelder_mead, FixedCalibration, FixedConfig, NelderMeadResult};
pub use io::{read_posteriors, read_posteriors_file, write_posteriors, write_posteriors_file};
pub use time_varying::{calibrate_time_varying, CalibrationObserver, NoObserver};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::idm::{
    ballistic_step, idm_acceleration, simulate_follower, IdmParams, Mop, ParamBounds, Rollout,
};
use crate::trajectory::{CfEpisode, TrafficCondition};

#[derive(Debug, Error)]
pub enum CalibError {
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("episode too short: {0} frames, {1} required")]
    TooShort(usize, usize),
    #[error("malformed posterior file: {0}")]
    Format(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Diagonal Gaussian over the five IDM parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianParams {
    pub mean: [f64; 5],
    pub var: [f64; 5],
}

impl GaussianParams {
    pub fn new(mean: [f64; 5], var: [f64; 5]) -> Self {
        Self { mean, var }
    }

    pub fn mean_params(&self) -> IdmParams {
        IdmParams::from_array(self.mean)
    }

    pub fn std(&self) -> [f64; 5] {
        self.var.map(f64::sqrt)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibConfig {
    /// Samples drawn per iteration (N).
    pub n_samples: usize,
    /// Iterations per time step (M).
    pub max_iters: usize,
    /// Acceptance threshold on the per-step goodness of fit, m.
    pub eps: f64,
    /// Accepted samples needed before a posterior is fitted.
    pub n_min: usize,
    /// Fraction of a draw that must be accepted to finalise a step.
    pub p_pct: f64,
    /// Prior standard deviations; 5 % of the bound width when absent.
    pub sigma: Option<[f64; 5]>,
    /// Frames per calibration step.
    pub stride: usize,
    pub mop: Mop,
    /// Posterior variance floor as a fraction of the bound width.
    pub var_floor_frac: f64,
}

impl Default for CalibConfig {
    fn default() -> Self {
        Self {
            n_samples: 5000,
            max_iters: 500,
            eps: 0.01,
            n_min: 100,
            p_pct: 0.95,
            sigma: None,
            stride: 5,
            mop: Mop::Spacing,
            var_floor_frac: 1e-3,
        }
    }
}

impl CalibConfig {
    pub fn validate(&self) -> Result<(), CalibError> {
        if !(self.n_samples > self.n_min && self.n_min > 0) {
            return Err(CalibError::Invalid(format!(
                "need n_samples > n_min > 0, got {} and {}",
                self.n_samples, self.n_min
            )));
        }
        if !(self.p_pct > 0.0 && self.p_pct < 1.0) {
            return Err(CalibError::Invalid(format!("p_pct {} not in (0, 1)", self.p_pct)));
        }
        if !(self.eps > 0.0) {
            return Err(CalibError::Invalid("eps must be positive".into()));
        }
        if self.max_iters == 0 || self.stride == 0 {
            return Err(CalibError::Invalid("max_iters and stride must be positive".into()));
        }
        if let Some(s) = self.sigma {
            if s.iter().any(|x| !(*x > 0.0)) {
                return Err(CalibError::Invalid("sigma must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn sigma_for(&self, bounds: &ParamBounds) -> [f64; 5] {
        self.sigma.unwrap_or_else(|| bounds.width().map(|w| 0.05 * w))
    }

    pub fn var_floor_for(&self, bounds: &ParamBounds) -> [f64; 5] {
        bounds.width().map(|w| (self.var_floor_frac * w).powi(2))
    }
}

/// Per-step parameter posteriors of one driver.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamPosteriorSeries {
    pub driver_id: i64,
    pub seed: u64,
    pub config: CalibConfig,
    /// Long-term parameters from the fixed calibration.
    pub theta_fix: IdmParams,
    /// Time stamp of the first frame of every step.
    pub times: Vec<f64>,
    pub posteriors: Vec<GaussianParams>,
    /// Steps whose posterior fell back to the long-term prior.
    pub fell_back: Vec<bool>,
}

impl ParamPosteriorSeries {
    pub fn len(&self) -> usize {
        self.posteriors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.posteriors.is_empty()
    }

    pub fn fallback_count(&self) -> usize {
        self.fell_back.iter().filter(|b| **b).count()
    }

    /// Posterior-mean parameters in effect at episode frame `k`.
    pub fn theta_for_frame(&self, k: usize) -> IdmParams {
        let step = (k / self.config.stride).min(self.posteriors.len().saturating_sub(1));
        self.posteriors
            .get(step)
            .map(|p| p.mean_params())
            .unwrap_or(self.theta_fix)
    }

    /// Posterior means as one series per parameter.
    pub fn mean_series(&self) -> [Vec<f64>; 5] {
        std::array::from_fn(|i| self.posteriors.iter().map(|p| p.mean[i]).collect())
    }
}

/// Acceleration the posterior-mean parameters give for the observed
/// condition of every frame.
pub fn tv_accelerations(episode: &CfEpisode, series: &ParamPosteriorSeries) -> Vec<f64> {
    episode
        .frames
        .iter()
        .enumerate()
        .map(|(k, f)| idm_acceleration(&series.theta_for_frame(k), &f.condition()).unwrap_or(0.0))
        .collect()
}

/// Elementwise sample mean and unbiased variance, floored at `var_floor`.
pub fn fit_gaussian(samples: &[[f64; 5]], var_floor: [f64; 5]) -> Result<GaussianParams, CalibError> {
    if samples.len() < 2 {
        return Err(CalibError::Invalid(format!(
            "need at least 2 samples, got {}",
            samples.len()
        )));
    }
    let n = samples.len() as f64;
    let mut mean = [0.0; 5];
    for s in samples {
        for i in 0..5 {
            mean[i] += s[i];
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = [0.0; 5];
    for s in samples {
        for i in 0..5 {
            var[i] += (s[i] - mean[i]).powi(2);
        }
    }
    for i in 0..5 {
        var[i] = (var[i] / (n - 1.0)).max(var_floor[i]);
    }
    Ok(GaussianParams { mean, var })
}

/// Closed-loop rollout of the whole episode from its first observed state,
/// with parameters chosen per frame.
pub fn closed_loop_rollout(episode: &CfEpisode, theta_of_frame: impl Fn(usize) -> IdmParams) -> Rollout {
    if episode.is_empty() {
        return Rollout {
            frames: vec![],
            collision_step: None,
        };
    }
    let leader = episode.leader_track();
    let t0 = episode.frames[0].t;
    let dt = episode.dt;
    simulate_follower(
        &leader,
        episode.follower_state(0),
        |t, cond| {
            let k = ((t - t0) / dt).round() as usize;
            idm_acceleration(&theta_of_frame(k), cond).unwrap_or(0.0)
        },
        dt,
    )
}

/// Error between observed and rolled-out MoP. Frames lost to a collision
/// count as simulated value zero.
pub fn rollout_rmse(episode: &CfEpisode, rollout: &Rollout, mop: Mop) -> f64 {
    let n = episode.len();
    if n == 0 {
        return 0.0;
    }
    let mut sse = 0.0;
    for (k, f) in episode.frames.iter().enumerate() {
        let obs = observed_mop(f, mop);
        let sim = rollout.frames.get(k).map(|r| mop.of(r)).unwrap_or(0.0);
        sse += (obs - sim).powi(2);
    }
    (sse / n as f64).sqrt()
}

fn observed_mop(f: &crate::trajectory::CfFrame, mop: Mop) -> f64 {
    match mop {
        Mop::Spacing => f.s,
        Mop::Speed => f.v_f,
        Mop::Accel => f.a_f,
    }
}

/// Closed-loop error of a fixed parameter vector over the episode.
pub fn fixed_rmse(episode: &CfEpisode, theta: &IdmParams, mop: Mop) -> f64 {
    rollout_rmse(episode, &closed_loop_rollout(episode, |_| *theta), mop)
}

/// Closed-loop error of the posterior-mean schedule over the episode.
pub fn time_varying_rmse(episode: &CfEpisode, series: &ParamPosteriorSeries, mop: Mop) -> f64 {
    rollout_rmse(
        episode,
        &closed_loop_rollout(episode, |k| series.theta_for_frame(k)),
        mop,
    )
}

/// Goodness of fit of `theta` over the `stride` frames following frame `k`.
///
/// The follower starts from its observed state at `k` and is rolled forward
/// with constant `theta` behind the observed leader; the error is the RMSE of
/// the MoP at frames `k+1 ..= k+stride`, truncated at the episode end.
pub fn per_step_gof(
    theta: &IdmParams,
    episode: &CfEpisode,
    k: usize,
    stride: usize,
    mop: Mop,
) -> Result<f64, CalibError> {
    let n = episode.len();
    if k + 1 >= n {
        return Err(CalibError::Invalid(format!(
            "frame {k} has no successor in an episode of {n} frames"
        )));
    }
    let end = (k + stride.max(1)).min(n - 1);
    Ok(window_gof(theta, episode, k, end, mop))
}

/// Unchecked core of [`per_step_gof`] over frames `k+1 ..= end`.
pub(crate) fn window_gof(theta: &IdmParams, episode: &CfEpisode, k: usize, end: usize, mop: Mop) -> f64 {
    let frames = &episode.frames;
    let dt = episode.dt;
    let mut state = episode.follower_state(k);
    let mut sse = 0.0;
    let mut collided = false;
    for j in k..end {
        let f = &frames[j];
        let s = f.x_l - state.x - episode.leader_length;
        let a = if s > 0.0 && !collided {
            let cond = TrafficCondition {
                dv: state.v - f.v_l,
                v: state.v,
                s,
                v_lead: f.v_l,
                a_lat_lead: f.a_lat_l,
                a_lon_lead: f.a_lon_l,
            };
            idm_acceleration(theta, &cond).unwrap_or(0.0)
        } else {
            collided = true;
            0.0
        };
        let next = ballistic_step(state, a, dt);
        let obs = &frames[j + 1];
        let sim = if collided {
            0.0
        } else {
            match mop {
                Mop::Spacing => (obs.x_l - next.x - episode.leader_length).max(0.0),
                Mop::Speed => next.v,
                Mop::Accel => {
                    let s_next = obs.x_l - next.x - episode.leader_length;
                    let cond = TrafficCondition {
                        dv: next.v - obs.v_l,
                        v: next.v,
                        s: s_next,
                        v_lead: obs.v_l,
                        a_lat_lead: obs.a_lat_l,
                        a_lon_lead: obs.a_lon_l,
                    };
                    idm_acceleration(theta, &cond).unwrap_or(0.0)
                }
            }
        };
        sse += (observed_mop(obs, mop) - sim).powi(2);
        state = next;
    }
    (sse / (end - k) as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{generate_synthetic_episode, LeaderProfile, SynthOptions};

    fn floor() -> [f64; 5] {
        [1e-6; 5]
    }

    #[test]
    fn fit_gaussian_examples() {
        let th = [10.0, 1.0, 2.0, 1.5, 2.0];
        let g = fit_gaussian(&[th, th], floor()).unwrap();
        assert_eq!(g.mean, th);
        assert_eq!(g.var, floor());

        let mut shifted = th;
        shifted[2] += 2.0;
        let g = fit_gaussian(&[th, shifted], floor()).unwrap();
        assert!((g.mean[2] - 3.0).abs() < 1e-12);
        assert!((g.var[2] - 2.0).abs() < 1e-12);
        assert_eq!(g.var[0], 1e-6);

        assert!(fit_gaussian(&[th], floor()).is_err());
    }

    #[test]
    fn fit_gaussian_monte_carlo() {
        use rand_distr::{Distribution, Normal};
        let mut r = crate::rng::stream(3, "mc", 0);
        let mu = [20.0, 1.5, 2.0, 1.2, 1.8];
        let sd = [2.0, 0.2, 0.5, 0.3, 0.3];
        let dists: Vec<Normal<f64>> = (0..5).map(|i| Normal::new(mu[i], sd[i]).unwrap()).collect();
        let n = 100_000;
        let samples: Vec<[f64; 5]> = (0..n)
            .map(|_| std::array::from_fn(|i| dists[i].sample(&mut r)))
            .collect();
        let g = fit_gaussian(&samples, floor()).unwrap();
        for i in 0..5 {
            assert!((g.mean[i] - mu[i]).abs() < 3.0 * sd[i] / (n as f64).sqrt());
            assert!((g.var[i] / sd[i].powi(2) - 1.0).abs() < 0.02);
        }
    }

    fn synthetic(theta: IdmParams) -> CfEpisode {
        let dt = 0.04;
        let leader = LeaderProfile::from_fn(dt, 501, |t| 10.0 + 2.0 * (t / 3.0).sin());
        generate_synthetic_episode(&theta, &leader, dt, 20.0, &SynthOptions::default()).unwrap()
    }

    #[test]
    fn per_step_gof_examples() {
        let theta = IdmParams::new(20.0, 1.4, 2.0, 1.5, 2.0);
        let ep = synthetic(theta);
        for k in [0, 100, 400] {
            assert!(per_step_gof(&theta, &ep, k, 5, Mop::Spacing).unwrap() <= 1e-9);
        }
        let halved = IdmParams { v0: 10.0, ..theta };
        assert!(per_step_gof(&halved, &ep, 100, 5, Mop::Spacing).unwrap() > 0.0);

        // one residual: the absolute single-step spacing error
        let other = IdmParams::new(20.0, 2.5, 3.0, 1.5, 2.0);
        let g1 = per_step_gof(&other, &ep, 100, 1, Mop::Spacing).unwrap();
        let a = idm_acceleration(&other, &ep.frames[100].condition()).unwrap();
        let next = ballistic_step(ep.follower_state(100), a, ep.dt);
        let s_sim = ep.frames[101].x_l - next.x - ep.leader_length;
        assert!((g1 - (ep.frames[101].s - s_sim).abs()).abs() < 1e-12);
    }

    #[test]
    fn per_step_gof_truncates_at_end() {
        let theta = IdmParams::new(20.0, 1.4, 2.0, 1.5, 2.0);
        let ep = synthetic(theta);
        let n = ep.len();
        let other = IdmParams { t_headway: 2.0, ..theta };
        let trunc = per_step_gof(&other, &ep, n - 3, 5, Mop::Spacing).unwrap();
        let exact = per_step_gof(&other, &ep, n - 3, 2, Mop::Spacing).unwrap();
        assert_eq!(trunc, exact);
        assert!(per_step_gof(&theta, &ep, n - 1, 5, Mop::Spacing).is_err());
    }

    #[test]
    fn closed_loop_reproduces_generator() {
        let theta = IdmParams::new(20.0, 1.4, 2.0, 1.5, 2.0);
        let ep = synthetic(theta);
        let r = closed_loop_rollout(&ep, |_| theta);
        for (f, g) in ep.frames.iter().zip(&r.frames) {
            assert!((f.s - g.s).abs() < 1e-6);
        }
        assert!(fixed_rmse(&ep, &theta, Mop::Spacing) < 1e-9);
    }

    #[test]
    fn config_validation() {
        CalibConfig::default().validate().unwrap();
        let bad = CalibConfig {
            n_min: 6000,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = CalibConfig {
            p_pct: 1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bounds = ParamBounds::default();
        let s = CalibConfig::default().sigma_for(&bounds);
        assert!((s[0] - 0.05 * 39.0).abs() < 1e-12);
    }
}
