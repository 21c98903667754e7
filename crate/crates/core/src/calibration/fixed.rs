use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{fixed_rmse, CalibError};
use crate::idm::{IdmParams, Mop, ParamBounds};
use crate::rng;
use crate::trajectory::CfEpisode;

/// Minimum episode length accepted by [`calibrate_fixed`].
pub const MIN_FRAMES: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FixedConfig {
    /// Independent Nelder-Mead starts; the first is `initial`.
    pub starts: usize,
    /// Total objective evaluations over all starts and restarts.
    pub max_evals: usize,
    /// Convergence threshold on the simplex value spread.
    pub tol: f64,
    pub initial: IdmParams,
    pub mop: Mop,
    pub seed: u64,
}

impl Default for FixedConfig {
    fn default() -> Self {
        Self {
            starts: 4,
            max_evals: 6000,
            tol: 1e-12,
            initial: IdmParams::default(),
            mop: Mop::Spacing,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedCalibration {
    pub theta: IdmParams,
    pub rmse: f64,
    pub initial_rmse: f64,
    pub evaluations: usize,
    /// Set when the optimiser did not improve on the initial guess.
    pub no_improvement: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub fx: f64,
    pub evaluations: usize,
}

/// Nelder-Mead over the unit box. Every trial point is projected onto
/// `[0, 1]^d` before evaluation.
pub fn nelder_mead(
    f: &mut dyn FnMut(&[f64]) -> f64,
    start: &[f64],
    step: f64,
    tol: f64,
    max_evals: usize,
) -> NelderMeadResult {
    let d = start.len();
    let project = |x: &mut Vec<f64>| x.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    let mut evals = 0;
    let mut eval = |x: &Vec<f64>, evals: &mut usize| {
        *evals += 1;
        f(x)
    };

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(d + 1);
    let mut x0 = start.to_vec();
    project(&mut x0);
    let f0 = eval(&x0, &mut evals);
    simplex.push((x0.clone(), f0));
    for i in 0..d {
        let mut x = x0.clone();
        // step inwards when the start sits on the upper face
        x[i] += if x[i] + step <= 1.0 { step } else { -step };
        project(&mut x);
        let fx = eval(&x, &mut evals);
        simplex.push((x, fx));
    }

    while evals < max_evals {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].1;
        let worst = simplex[d].1;
        if (worst - best).abs() <= tol {
            break;
        }
        let centroid: Vec<f64> = (0..d)
            .map(|j| simplex[..d].iter().map(|(x, _)| x[j]).sum::<f64>() / d as f64)
            .collect();
        let along = |coef: f64| -> Vec<f64> {
            let mut x: Vec<f64> = (0..d)
                .map(|j| centroid[j] + coef * (simplex[d].0[j] - centroid[j]))
                .collect();
            x.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
            x
        };
        let xr = along(-1.0);
        let fr = eval(&xr, &mut evals);
        if fr < simplex[0].1 {
            let xe = along(-2.0);
            let fe = eval(&xe, &mut evals);
            simplex[d] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[d - 1].1 {
            simplex[d] = (xr, fr);
        } else {
            let (xc, fc) = if fr < worst {
                let xc = along(-0.5);
                let fc = eval(&xc, &mut evals);
                (xc, fc)
            } else {
                let xc = along(0.5);
                let fc = eval(&xc, &mut evals);
                (xc, fc)
            };
            if fc < worst.min(fr) {
                simplex[d] = (xc, fc);
            } else {
                let x_best = simplex[0].0.clone();
                for v in simplex.iter_mut().skip(1) {
                    for j in 0..d {
                        v.0[j] = x_best[j] + 0.5 * (v.0[j] - x_best[j]);
                    }
                    v.1 = eval(&v.0, &mut evals);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, fx) = simplex.swap_remove(0);
    NelderMeadResult {
        x,
        fx,
        evaluations: evals,
    }
}

/// Fits one parameter vector to the whole episode by minimising the
/// closed-loop MoP error from the first observed state.
///
/// Multi-start Nelder-Mead in bound-normalised coordinates, followed by
/// restarts around the incumbent until the budget is spent or a restart no
/// longer improves.
pub fn calibrate_fixed(
    episode: &CfEpisode,
    bounds: &ParamBounds,
    cfg: &FixedConfig,
) -> Result<FixedCalibration, CalibError> {
    if episode.len() < MIN_FRAMES {
        return Err(CalibError::TooShort(episode.len(), MIN_FRAMES));
    }
    bounds
        .validate()
        .map_err(|e| CalibError::Invalid(e.to_string()))?;
    let mut objective = |u: &[f64]| {
        let theta = IdmParams::from_array(bounds.denormalize(&[u[0], u[1], u[2], u[3], u[4]]));
        fixed_rmse(episode, &theta, cfg.mop)
    };

    let initial = bounds.clip(&cfg.initial);
    let u0 = bounds.normalize(&initial.to_array());
    let initial_rmse = objective(&u0);
    let mut evals = 1;

    let mut r = rng::stream(cfg.seed, "fixed-starts", episode.follower_id as u64);
    let starts: Vec<[f64; 5]> = std::iter::once(u0)
        .chain((1..cfg.starts.max(1)).map(|_| std::array::from_fn(|_| r.random_range(0.05..0.95))))
        .collect();
    let per_start = cfg.max_evals / (2 * starts.len()).max(1);

    let mut best = NelderMeadResult {
        x: u0.to_vec(),
        fx: initial_rmse,
        evaluations: 0,
    };
    for s in &starts {
        let res = nelder_mead(&mut objective, s, 0.1, cfg.tol, per_start);
        evals += res.evaluations;
        if res.fx < best.fx {
            best = res;
        }
    }
    // polish around the incumbent with shrinking simplices
    let mut step = 0.05;
    while evals < cfg.max_evals {
        let budget = (cfg.max_evals - evals).min(per_start.max(200));
        let res = nelder_mead(&mut objective, &best.x, step, cfg.tol, budget);
        evals += res.evaluations;
        let improved = res.fx < best.fx * (1.0 - 1e-9);
        if res.fx < best.fx {
            best = res;
        }
        if !improved {
            if step < 1e-4 {
                break;
            }
            step *= 0.3;
        }
    }

    let theta = IdmParams::from_array(bounds.denormalize(&[
        best.x[0], best.x[1], best.x[2], best.x[3], best.x[4],
    ]));
    Ok(FixedCalibration {
        theta,
        rmse: best.fx,
        initial_rmse,
        evaluations: evals,
        no_improvement: !(best.fx < initial_rmse),
    })
}
