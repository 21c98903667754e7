//! Aggressiveness index of a posterior series, and the map from that index to
//! a style vector of the neural process.
//!
//! Per parameter `i` the index combines statistics of the posterior-mean
//! series `θ_i(t)` and of its step differences, split by sign:
//!
//! ```text
//! H = Σ_i R_i · (M_i + Q1_i + Q3_i + M⁺_i + S⁺_i − M⁻_i − S⁻_i)
//! R = [+1, −1, −1, +1, −1]   for (v0, T, s0, a_max, b)
//! ```
//!
//! `M`, `Q1`, `Q3` are mean and quartiles of the series min-max normalised by
//! the parameter bounds; `M±`, `S±` are mean and standard deviation of the
//! increases and of the decrease magnitudes, each min-max scaled with
//! constants pooled over a whole population.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Matrix5, SymmetricEigen, Vector5};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibration::ParamPosteriorSeries;
use crate::idm::ParamBounds;
use crate::np::{StyleVector, STYLE_DIM};
use crate::stats::{mean, pearson, quantile_sorted, sorted, std_pop};

/// Sign of each parameter's contribution to the index.
pub const R_SIGNS: [f64; 5] = [1.0, -1.0, -1.0, 1.0, -1.0];

#[derive(Debug, Error)]
pub enum StyleError {
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("malformed style mapping file: {0}")]
    Format(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Step differences of `x` split by sign; zeros are dropped and decreases
/// keep their sign.
pub fn differential_sequences(x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for w in x.windows(2) {
        let d = w[1] - w[0];
        if d > 0.0 {
            pos.push(d);
        } else if d < 0.0 {
            neg.push(d);
        }
    }
    (pos, neg)
}

/// Pooled min-max constants of the increase and decrease magnitudes of every
/// parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffScaling {
    pub pos_min: [f64; 5],
    pub pos_max: [f64; 5],
    pub neg_min: [f64; 5],
    pub neg_max: [f64; 5],
}

impl Default for DiffScaling {
    fn default() -> Self {
        Self {
            pos_min: [0.0; 5],
            pos_max: [1.0; 5],
            neg_min: [0.0; 5],
            neg_max: [1.0; 5],
        }
    }
}

fn scale(v: f64, lo: f64, hi: f64) -> f64 {
    // all magnitudes equal: nothing to rank them by
    if hi > lo {
        ((v - lo) / (hi - lo)).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

impl DiffScaling {
    /// Pools the differences of every driver's mean series. Parameters
    /// without any increase (decrease) keep the range `[0, 1]`.
    pub fn fit(population: &[[Vec<f64>; 5]]) -> Self {
        let mut s = Self {
            pos_min: [f64::INFINITY; 5],
            pos_max: [f64::NEG_INFINITY; 5],
            neg_min: [f64::INFINITY; 5],
            neg_max: [f64::NEG_INFINITY; 5],
        };
        for series in population {
            for i in 0..5 {
                let (pos, neg) = differential_sequences(&series[i]);
                for d in pos {
                    s.pos_min[i] = s.pos_min[i].min(d);
                    s.pos_max[i] = s.pos_max[i].max(d);
                }
                for d in neg {
                    s.neg_min[i] = s.neg_min[i].min(-d);
                    s.neg_max[i] = s.neg_max[i].max(-d);
                }
            }
        }
        for i in 0..5 {
            if !s.pos_min[i].is_finite() {
                (s.pos_min[i], s.pos_max[i]) = (0.0, 1.0);
            }
            if !s.neg_min[i].is_finite() {
                (s.neg_min[i], s.neg_max[i]) = (0.0, 1.0);
            }
        }
        s
    }

    pub fn fit_series(population: &[ParamPosteriorSeries]) -> Self {
        let means: Vec<[Vec<f64>; 5]> = population.iter().map(|s| s.mean_series()).collect();
        Self::fit(&means)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IndexConfig {
    /// Min-max normalise parameter values by the bounds before taking mean
    /// and quartiles.
    pub normalize: bool,
    pub bounds: ParamBounds,
}

impl Default for IndexConfig {
    fn default() -> Self {
        Self {
            normalize: true,
            bounds: ParamBounds::default(),
        }
    }
}

/// Statistics entering the index for one parameter.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ParamTerms {
    pub mean: f64,
    pub q1: f64,
    pub q3: f64,
    pub pos_mean: f64,
    pub pos_std: f64,
    pub neg_mean: f64,
    pub neg_std: f64,
}

impl ParamTerms {
    /// `M + Q1 + Q3 + M⁺ + S⁺ − M⁻ − S⁻`.
    pub fn combined(&self) -> f64 {
        self.mean + self.q1 + self.q3 + self.pos_mean + self.pos_std - self.neg_mean - self.neg_std
    }
}

/// Index terms of a driver from its posterior-mean series, one per parameter.
pub fn index_terms(means: &[Vec<f64>; 5], scaling: &DiffScaling, cfg: &IndexConfig) -> [ParamTerms; 5] {
    let (lb, width) = (cfg.bounds.lb.to_array(), cfg.bounds.width());
    std::array::from_fn(|i| {
        let x = &means[i];
        let values: Vec<f64> = if cfg.normalize {
            x.iter().map(|v| (v - lb[i]) / width[i]).collect()
        } else {
            x.clone()
        };
        let s = sorted(&values);
        let (pos, neg) = differential_sequences(x);
        let pos: Vec<f64> = pos
            .iter()
            .map(|d| scale(*d, scaling.pos_min[i], scaling.pos_max[i]))
            .collect();
        let neg: Vec<f64> = neg
            .iter()
            .map(|d| scale(-d, scaling.neg_min[i], scaling.neg_max[i]))
            .collect();
        ParamTerms {
            mean: mean(&values),
            q1: quantile_sorted(&s, 0.25),
            q3: quantile_sorted(&s, 0.75),
            pos_mean: mean(&pos),
            pos_std: std_pop(&pos),
            neg_mean: mean(&neg),
            neg_std: std_pop(&neg),
        }
    })
}

/// Aggressiveness index of a series of per-parameter means.
pub fn index_of_means(means: &[Vec<f64>; 5], scaling: &DiffScaling, cfg: &IndexConfig) -> f64 {
    index_terms(means, scaling, cfg)
        .iter()
        .zip(R_SIGNS)
        .map(|(t, r)| r * t.combined())
        .sum()
}

/// Aggressiveness index of a driver's posterior series.
pub fn aggressiveness_index(
    series: &ParamPosteriorSeries,
    scaling: &DiffScaling,
    cfg: &IndexConfig,
) -> Result<f64, StyleError> {
    if series.is_empty() {
        return Err(StyleError::Invalid(format!(
            "driver {} has an empty posterior series",
            series.driver_id
        )));
    }
    Ok(index_of_means(&series.mean_series(), scaling, cfg))
}

/// First principal component of a style cloud.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pca {
    /// Unit component; its first non-zero entry is positive.
    pub w: [f64; STYLE_DIM],
    pub u: [f64; STYLE_DIM],
    /// Share of the total variance along `w`.
    pub explained: f64,
}

impl Pca {
    pub fn project(&self, r: &StyleVector) -> f64 {
        (0..STYLE_DIM).map(|j| (r.0[j] - self.u[j]) * self.w[j]).sum()
    }

    pub fn reconstruct(&self, reduced: f64) -> StyleVector {
        StyleVector(std::array::from_fn(|j| reduced * self.w[j] + self.u[j]))
    }
}

/// Mean and top eigenvector of the sample covariance of `styles`.
pub fn fit_pca(styles: &[StyleVector]) -> Result<Pca, StyleError> {
    if styles.len() < 3 {
        return Err(StyleError::Invalid(format!("need at least 3 styles, got {}", styles.len())));
    }
    let n = styles.len() as f64;
    let u: [f64; STYLE_DIM] = std::array::from_fn(|j| styles.iter().map(|r| r.0[j]).sum::<f64>() / n);
    let mut cov = Matrix5::<f64>::zeros();
    for r in styles {
        let d = Vector5::from_fn(|j, _| r.0[j] - u[j]);
        cov += d * d.transpose();
    }
    cov /= n - 1.0;
    let total = cov.trace();
    let scale = u.iter().map(|v| v.abs()).fold(1.0, f64::max);
    if !(total > 1e-24 * scale * scale) {
        return Err(StyleError::Degenerate("styles have zero covariance".into()));
    }
    let eig = SymmetricEigen::new(cov);
    let top = eig.eigenvalues.imax();
    let col = eig.eigenvectors.column(top);
    let norm = col.norm();
    let mut w: [f64; STYLE_DIM] = std::array::from_fn(|j| col[j] / norm);
    let tiny = 1e-12;
    if w.iter().find(|v| v.abs() > tiny).is_some_and(|v| *v < 0.0) {
        w.iter_mut().for_each(|v| *v = -*v);
    }
    Ok(Pca {
        w,
        u,
        explained: eig.eigenvalues[top] / total,
    })
}

/// Least-squares line `r̃ = alpha·H + beta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearMap {
    pub alpha: f64,
    pub beta: f64,
    /// Pearson correlation of `H` and `r̃`.
    pub correlation: f64,
}

impl LinearMap {
    pub fn apply(&self, h: f64) -> f64 {
        self.alpha * h + self.beta
    }
}

pub fn fit_style_map(h: &[f64], reduced: &[f64]) -> Result<LinearMap, StyleError> {
    if h.len() != reduced.len() || h.len() < 3 {
        return Err(StyleError::Invalid(format!(
            "need equally long series of at least 3 values, got {} and {}",
            h.len(),
            reduced.len()
        )));
    }
    let (mh, mr) = (mean(h), mean(reduced));
    let sxx: f64 = h.iter().map(|x| (x - mh).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(StyleError::Degenerate("aggressiveness index has zero variance".into()));
    }
    let sxy: f64 = h.iter().zip(reduced).map(|(x, y)| (x - mh) * (y - mr)).sum();
    let alpha = sxy / sxx;
    Ok(LinearMap {
        alpha,
        beta: mr - alpha * mh,
        correlation: pearson(h, reduced),
    })
}

/// Everything needed to turn an index into a style vector, with fit
/// diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StyleMapping {
    pub pca: Pca,
    pub map: LinearMap,
    pub scaling: DiffScaling,
    pub index: IndexConfig,
    pub n_drivers: usize,
    /// Root mean squared Euclidean distance between each driver's style and
    /// its reconstruction from the index.
    pub reconstruction_rmse: f64,
}

/// Style vector `(alpha·H + beta)·W + u` for index `h`.
pub fn style_from_index(h: f64, mapping: &StyleMapping) -> StyleVector {
    mapping.pca.reconstruct(mapping.map.apply(h))
}

/// Fits PCA on `styles` and the line from `h` to the reduced styles.
pub fn fit_mapping(
    h: &[f64],
    styles: &[StyleVector],
    scaling: DiffScaling,
    index: IndexConfig,
) -> Result<StyleMapping, StyleError> {
    if h.len() != styles.len() {
        return Err(StyleError::Invalid(format!(
            "{} indices for {} styles",
            h.len(),
            styles.len()
        )));
    }
    let pca = fit_pca(styles)?;
    let reduced: Vec<f64> = styles.iter().map(|r| pca.project(r)).collect();
    let map = fit_style_map(h, &reduced)?;
    let mut mapping = StyleMapping {
        pca,
        map,
        scaling,
        index,
        n_drivers: styles.len(),
        reconstruction_rmse: 0.0,
    };
    let sse: f64 = h
        .iter()
        .zip(styles)
        .map(|(hi, r)| style_from_index(*hi, &mapping).distance(r).powi(2))
        .sum();
    mapping.reconstruction_rmse = (sse / styles.len() as f64).sqrt();
    Ok(mapping)
}

/// Largest pairwise distance in a style cloud.
pub fn cloud_diameter(styles: &[StyleVector]) -> f64 {
    let mut d: f64 = 0.0;
    for (i, a) in styles.iter().enumerate() {
        for b in &styles[i + 1..] {
            d = d.max(a.distance(b));
        }
    }
    d
}

const MAGIC: &str = "# hybridcf-style v1";

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

/// `key=value` text record of a mapping.
pub fn write_mapping(m: &StyleMapping) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC}");
    let lines: [(&str, String); 16] = [
        ("w", join(&m.pca.w)),
        ("u", join(&m.pca.u)),
        ("explained_variance", m.pca.explained.to_string()),
        ("alpha", m.map.alpha.to_string()),
        ("beta", m.map.beta.to_string()),
        ("correlation", m.map.correlation.to_string()),
        ("reconstruction_rmse", m.reconstruction_rmse.to_string()),
        ("n_drivers", m.n_drivers.to_string()),
        ("normalize", m.index.normalize.to_string()),
        ("bounds_lb", join(&m.index.bounds.lb.to_array())),
        ("bounds_ub", join(&m.index.bounds.ub.to_array())),
        ("pos_min", join(&m.scaling.pos_min)),
        ("pos_max", join(&m.scaling.pos_max)),
        ("neg_min", join(&m.scaling.neg_min)),
        ("neg_max", join(&m.scaling.neg_max)),
        ("signs", join(&R_SIGNS)),
    ];
    for (k, v) in lines {
        let _ = writeln!(out, "{k}={v}");
    }
    out
}

pub fn read_mapping(text: &str) -> Result<StyleMapping, StyleError> {
    let mut lines = text.lines();
    if lines.next() != Some(MAGIC) {
        return Err(StyleError::Format("not a style mapping file".into()));
    }
    let mut kv = std::collections::HashMap::new();
    for l in lines.filter(|l| !l.trim().is_empty()) {
        let (k, v) = l
            .split_once('=')
            .ok_or_else(|| StyleError::Format(format!("bad line `{l}`")))?;
        kv.insert(k.trim(), v.trim());
    }
    let get = |k: &str| kv.get(k).copied().ok_or_else(|| StyleError::Format(format!("missing `{k}`")));
    let num = |k: &str| -> Result<f64, StyleError> {
        get(k)?.parse().map_err(|_| StyleError::Format(format!("bad number for `{k}`")))
    };
    let arr = |k: &str| -> Result<[f64; 5], StyleError> {
        let v: Vec<f64> = get(k)?
            .split(',')
            .map(|x| x.trim().parse())
            .collect::<Result<_, _>>()
            .map_err(|_| StyleError::Format(format!("bad list for `{k}`")))?;
        v.try_into().map_err(|_| StyleError::Format(format!("`{k}` needs 5 values")))
    };
    let bounds = ParamBounds::new(
        crate::idm::IdmParams::from_array(arr("bounds_lb")?),
        crate::idm::IdmParams::from_array(arr("bounds_ub")?),
    )
    .map_err(|e| StyleError::Format(e.to_string()))?;
    Ok(StyleMapping {
        pca: Pca {
            w: arr("w")?,
            u: arr("u")?,
            explained: num("explained_variance")?,
        },
        map: LinearMap {
            alpha: num("alpha")?,
            beta: num("beta")?,
            correlation: num("correlation")?,
        },
        scaling: DiffScaling {
            pos_min: arr("pos_min")?,
            pos_max: arr("pos_max")?,
            neg_min: arr("neg_min")?,
            neg_max: arr("neg_max")?,
        },
        index: IndexConfig {
            normalize: get("normalize")?
                .parse()
                .map_err(|_| StyleError::Format("bad `normalize`".into()))?,
            bounds,
        },
        n_drivers: get("n_drivers")?
            .parse()
            .map_err(|_| StyleError::Format("bad `n_drivers`".into()))?,
        reconstruction_rmse: num("reconstruction_rmse")?,
    })
}

pub fn write_mapping_file(path: &Path, m: &StyleMapping) -> Result<(), StyleError> {
    std::fs::write(path, write_mapping(m))?;
    Ok(())
}

pub fn read_mapping_file(path: &Path) -> Result<StyleMapping, StyleError> {
    read_mapping(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests;
