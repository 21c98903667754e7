use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Activation, NpArchitecture, NpError, NpModel, PointSet, Standardizer};
use crate::rng;

/// Minimum number of points per driver accepted by [`train`].
pub const MIN_POINTS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    /// Factor applied to the learning rate every `decay_every` epochs. The
    /// default keeps 90 % of the rate; 0.1 drops 90 % instead.
    pub lr_decay: f64,
    pub decay_every: usize,
    pub epochs: usize,
    /// Inclusive range of the context size.
    pub context_range: (usize, usize),
    /// Inclusive range of the number of extra target points.
    pub extra_range: (usize, usize),
    pub seed: u64,
    pub activation: Activation,
    pub arch: NpArchitecture,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            lr_decay: 0.9,
            decay_every: 50,
            epochs: 200,
            context_range: (5, 50),
            extra_range: (5, 50),
            seed: 0,
            activation: Activation::Silu,
            arch: NpArchitecture::default(),
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NpError> {
        if !(self.lr > 0.0) || self.epochs == 0 || self.decay_every == 0 {
            return Err(NpError::Invalid("need lr > 0, epochs ≥ 1, decay_every ≥ 1".into()));
        }
        let ok = |r: (usize, usize)| r.0 >= 1 && r.0 <= r.1;
        if !ok(self.context_range) || !ok(self.extra_range) {
            return Err(NpError::Invalid("context and extra ranges must be 1 ≤ lo ≤ hi".into()));
        }
        Ok(())
    }
}

/// Learning rate in effect during `epoch` (0-based).
pub fn lr_at(cfg: &TrainConfig, epoch: usize) -> f64 {
    cfg.lr * cfg.lr_decay.powi((epoch / cfg.decay_every) as i32)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub lr: f64,
    pub nll: f64,
    pub kl: f64,
    pub residual: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainReport {
    /// Mean loss terms over the drivers of each epoch.
    pub epochs: Vec<EpochLoss>,
}

/// Random context set and a target set containing it, drawn without
/// replacement: `n_c` from `context_range`, plus `extra_range` more targets,
/// both capped by the number of points.
pub fn sample_batch<R: Rng>(set: &PointSet, cfg: &TrainConfig, r: &mut R) -> (PointSet, PointSet) {
    let n = set.len();
    let n_c = r.random_range(cfg.context_range.0..=cfg.context_range.1).min(n);
    let extra = r.random_range(cfg.extra_range.0..=cfg.extra_range.1);
    let n_t = (n_c + extra).min(n);
    let idx = index::sample(r, n, n_t).into_vec();
    (set.select(&idx[..n_c]), set.select(&idx))
}

/// Trains a fresh model with Adam, one step per driver per epoch in a
/// shuffled driver order.
pub fn train(sets: &[PointSet], cfg: &TrainConfig) -> Result<(NpModel, TrainReport), NpError> {
    cfg.validate()?;
    if sets.len() < 2 {
        return Err(NpError::Invalid(format!("need at least 2 drivers, got {}", sets.len())));
    }
    if let Some(s) = sets.iter().find(|s| s.len() < MIN_POINTS) {
        return Err(NpError::Invalid(format!(
            "driver {} has {} points, need {MIN_POINTS}",
            s.driver_id,
            s.len()
        )));
    }
    let mut model = NpModel::new(
        cfg.arch.clone(),
        cfg.activation,
        &mut rng::stream(cfg.seed, "np-init", 0),
    );
    model.standardizer = Standardizer::fit(sets);

    let n_p = model.n_params();
    let mut m = vec![0.0; n_p];
    let mut v = vec![0.0; n_p];
    let mut grad = vec![0.0; n_p];
    let mut step = 0i32;
    let mut report = TrainReport::default();

    for epoch in 0..cfg.epochs {
        let lr = lr_at(cfg, epoch);
        let mut r = rng::stream(cfg.seed, "np-epoch", epoch as u64);
        let mut order: Vec<usize> = (0..sets.len()).collect();
        order.shuffle(&mut r);
        let mut acc = EpochLoss {
            epoch,
            lr,
            nll: 0.0,
            kl: 0.0,
            residual: 0.0,
            total: 0.0,
        };
        for &d in &order {
            let (context, target) = sample_batch(&sets[d], cfg, &mut r);
            let xi: f64 = r.sample(StandardNormal);
            grad.iter_mut().for_each(|g| *g = 0.0);
            let loss = model.loss(&context, &target, xi, Some(&mut grad))?;
            if !loss.total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(NpError::NonFinite {
                    epoch,
                    driver_id: sets[d].driver_id,
                    detail: format!(
                        "loss {loss:?} on {} context / {} target points",
                        context.len(),
                        target.len()
                    ),
                });
            }
            step += 1;
            let bc1 = 1.0 - cfg.beta1.powi(step);
            let bc2 = 1.0 - cfg.beta2.powi(step);
            for i in 0..n_p {
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grad[i];
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
                model.params[i] -= lr * (m[i] / bc1) / ((v[i] / bc2).sqrt() + cfg.adam_eps);
            }
            acc.nll += loss.nll;
            acc.kl += loss.kl;
            acc.residual += loss.residual;
            acc.total += loss.total;
        }
        let k = sets.len() as f64;
        acc.nll /= k;
        acc.kl /= k;
        acc.residual /= k;
        acc.total /= k;
        report.epochs.push(acc);
    }
    Ok((model, report))
}
