use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::{
    fit_gaussian, window_gof, CalibConfig, CalibError, GaussianParams, ParamPosteriorSeries,
};
use crate::idm::{IdmParams, ParamBounds};
use crate::rng;
use crate::trajectory::CfEpisode;

/// Hooks into [`calibrate_time_varying`]; every method defaults to a no-op.
pub trait CalibrationObserver {
    /// Called once per step with the prior the step starts from.
    fn step_started(&mut self, _step: usize, _prior: &GaussianParams) {}
    /// Called for every sample added to the accepted set.
    fn sample_accepted(&mut self, _step: usize, _theta: &[f64; 5], _gof: f64) {}
    /// Called with the finalised posterior of a step.
    fn step_finished(&mut self, _step: usize, _posterior: &GaussianParams, _fell_back: bool) {}
}

pub struct NoObserver;

impl CalibrationObserver for NoObserver {}

/// Draws `n` samples from a diagonal Gaussian, redrawing samples that leave
/// the bounds. After `10·n` attempts the remaining samples are clipped.
fn draw_in_bounds<R: Rng>(
    r: &mut R,
    prior: &GaussianParams,
    bounds: &ParamBounds,
    n: usize,
) -> Vec<[f64; 5]> {
    let sd = prior.std();
    let budget = 10 * n;
    let mut attempts = 0;
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let x: [f64; 5] = std::array::from_fn(|i| {
            let z: f64 = r.sample(StandardNormal);
            prior.mean[i] + sd[i] * z
        });
        attempts += 1;
        if bounds.contains_array(&x) {
            out.push(x);
        } else if attempts >= budget {
            out.push(bounds.clip_array(&x));
        }
    }
    out
}

fn clip_mean(g: GaussianParams, bounds: &ParamBounds) -> GaussianParams {
    GaussianParams {
        mean: bounds.clip_array(&g.mean),
        var: g.var,
    }
}

/// Sequential sample-and-accept calibration of per-step parameter posteriors.
///
/// The episode is cut into steps of `cfg.stride` frames. The first step
/// starts from `N(theta_fix, Σ²)`, later steps from the previous step's
/// posterior. Within a step, up to `max_iters` rounds each draw `n_samples`
/// parameter vectors from the current prior and accept those whose
/// [`super::per_step_gof`] is below `eps`:
///
/// * nothing accepted so far in the step: the prior is re-centred on the
///   best sample of the round with covariance `Σ²`;
/// * more than `n_min` accepted: a Gaussian is fitted to them, becomes the
///   prior, and the accepted set is cleared;
/// * more than `p_pct` of the round accepted: the current prior is the
///   step's posterior.
///
/// When the rounds run out, the step keeps the current prior if anything was
/// accepted during the step and falls back to `N(theta_fix, Σ²)` otherwise.
pub fn calibrate_time_varying(
    episode: &CfEpisode,
    theta_fix: &IdmParams,
    cfg: &CalibConfig,
    bounds: &ParamBounds,
    seed: u64,
    observer: &mut dyn CalibrationObserver,
) -> Result<ParamPosteriorSeries, CalibError> {
    cfg.validate()?;
    if episode.len() < 2 {
        return Err(CalibError::TooShort(episode.len(), 2));
    }
    let sigma = cfg.sigma_for(bounds);
    let sigma2 = sigma.map(|s| s * s);
    let floor = cfg.var_floor_for(bounds);
    let long_term = GaussianParams::new(bounds.clip(theta_fix).to_array(), sigma2);
    let n = episode.len();
    let n_steps = (n - 1).div_ceil(cfg.stride);

    let mut series = ParamPosteriorSeries {
        driver_id: episode.follower_id,
        seed,
        config: cfg.clone(),
        theta_fix: *theta_fix,
        times: Vec::with_capacity(n_steps),
        posteriors: Vec::with_capacity(n_steps),
        fell_back: Vec::with_capacity(n_steps),
    };
    let mut r = rng::stream(seed, "time-varying", episode.follower_id as u64);
    let mut prior = long_term;

    for step in 0..n_steps {
        let k = step * cfg.stride;
        let end = (k + cfg.stride).min(n - 1);
        observer.step_started(step, &prior);

        let mut accepted: Vec<[f64; 5]> = Vec::new();
        let mut any_accepted = false;
        let mut finalized = None;
        for _ in 0..cfg.max_iters {
            let draw = draw_in_bounds(&mut r, &prior, bounds, cfg.n_samples);
            let gofs: Vec<f64> = draw
                .par_iter()
                .map(|x| window_gof(&IdmParams::from_array(*x), episode, k, end, cfg.mop))
                .collect();
            let mut accepted_now = 0;
            for (x, g) in draw.iter().zip(&gofs) {
                if *g < cfg.eps {
                    observer.sample_accepted(step, x, *g);
                    accepted.push(*x);
                    accepted_now += 1;
                }
            }
            any_accepted |= accepted_now > 0;

            if accepted.is_empty() {
                let best = gofs
                    .iter()
                    .enumerate()
                    .min_by(|a, b| a.1.total_cmp(b.1))
                    .map(|(i, _)| i)
                    .unwrap_or(0);
                prior = GaussianParams::new(draw[best], sigma2);
            } else if accepted.len() > cfg.n_min {
                prior = clip_mean(fit_gaussian(&accepted, floor)?, bounds);
                accepted.clear();
            }
            if accepted_now as f64 / cfg.n_samples as f64 > cfg.p_pct {
                finalized = Some(prior);
                break;
            }
        }
        let (posterior, fell_back) = match finalized {
            Some(p) => (p, false),
            None if any_accepted => (prior, false),
            None => (long_term, true),
        };
        observer.step_finished(step, &posterior, fell_back);
        series.times.push(episode.frames[k].t);
        series.posteriors.push(posterior);
        series.fell_back.push(fell_back);
        prior = posterior;
    }
    Ok(series)
}
