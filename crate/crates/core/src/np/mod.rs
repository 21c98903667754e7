//! Neural process over car-following data.
//!
//! Each point pairs a traffic condition `x` (6 values) with the follower's
//! acceleration `y`. A deterministic encoder maps context points to the style
//! vector `r` (mean of per-point codes), a latent encoder maps them to a
//! one-dimensional Gaussian over `z`, and the decoder turns `(x, r, z)` into a
//! Gaussian over the acceleration.
//!
//! Parameters live in one flat buffer ordered deterministic encoder, latent
//! encoder, latent heads, decoder; within a network layer by layer, each as
//! the row-major `in × out` weight matrix followed by the bias.

mod io;
pub mod mlp;
mod train;

pub use io::{read_model, read_model_file, write_model, write_model_file};
pub use mlp::Activation;
pub use train::{lr_at, sample_batch, train, EpochLoss, TrainConfig, TrainReport};

use ndarray::{s, Array2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trajectory::CfEpisode;
use mlp::{sigmoid, softplus, MlpLayout, MlpTrace};

pub const INPUT_DIM: usize = 6;
pub const STYLE_DIM: usize = 5;
/// Added to every softplus-transformed standard deviation.
pub const SIGMA_FLOOR: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum NpError {
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("non-finite loss at epoch {epoch}, driver {driver_id}: {detail}")]
    NonFinite {
        epoch: usize,
        driver_id: i64,
        detail: String,
    },
    #[error("malformed model file: {0}")]
    Format(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Conditions and accelerations of one driver.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointSet {
    pub driver_id: i64,
    pub x: Vec<[f64; INPUT_DIM]>,
    pub y: Vec<f64>,
}

impl PointSet {
    pub fn new(driver_id: i64, x: Vec<[f64; INPUT_DIM]>, y: Vec<f64>) -> Self {
        assert_eq!(x.len(), y.len(), "x and y lengths differ");
        Self { driver_id, x, y }
    }

    /// Observed condition of every frame of `episode` paired with `y`.
    pub fn from_episode(episode: &CfEpisode, y: Vec<f64>) -> Self {
        let x = episode.frames.iter().map(|f| f.condition().to_array()).collect();
        Self::new(episode.follower_id, x, y)
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn select(&self, idx: &[usize]) -> PointSet {
        PointSet {
            driver_id: self.driver_id,
            x: idx.iter().map(|&i| self.x[i]).collect(),
            y: idx.iter().map(|&i| self.y[i]).collect(),
        }
    }

    pub fn range(&self, r: std::ops::Range<usize>) -> PointSet {
        PointSet {
            driver_id: self.driver_id,
            x: self.x[r.clone()].to_vec(),
            y: self.y[r].to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StyleVector(pub [f64; STYLE_DIM]);

impl StyleVector {
    pub fn distance(&self, other: &StyleVector) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatentDist {
    pub mu: f64,
    pub sigma: f64,
}

impl LatentDist {
    /// `KL(self ‖ other)` between univariate Gaussians.
    pub fn kl(&self, other: &LatentDist) -> f64 {
        (other.sigma / self.sigma).ln()
            + (self.sigma.powi(2) + (self.mu - other.mu).powi(2)) / (2.0 * other.sigma.powi(2))
            - 0.5
    }
}

/// Hidden layer widths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NpArchitecture {
    pub det_hidden: Vec<usize>,
    pub lat_hidden: Vec<usize>,
    pub dec_hidden: Vec<usize>,
}

impl Default for NpArchitecture {
    fn default() -> Self {
        Self {
            det_hidden: vec![128, 128, 128],
            lat_hidden: vec![5, 5],
            dec_hidden: vec![128, 128, 128],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Layouts {
    det: MlpLayout,
    lat: MlpLayout,
    head: MlpLayout,
    dec: MlpLayout,
}

impl Layouts {
    fn new(arch: &NpArchitecture) -> Self {
        let dims = |first: usize, hidden: &[usize], last: usize| {
            let mut d = vec![first];
            d.extend_from_slice(hidden);
            d.push(last);
            d
        };
        let det = MlpLayout::new(dims(INPUT_DIM + 1, &arch.det_hidden, STYLE_DIM), false, 0);
        let mut lat_dims = vec![INPUT_DIM + 1];
        lat_dims.extend_from_slice(&arch.lat_hidden);
        let lat_out = *lat_dims.last().expect("dims");
        let lat = MlpLayout::new(lat_dims, true, det.offset + det.n_params());
        let head = MlpLayout::new(vec![lat_out, 2], false, lat.offset + lat.n_params());
        let dec = MlpLayout::new(
            dims(INPUT_DIM + STYLE_DIM + 1, &arch.dec_hidden, 2),
            false,
            head.offset + head.n_params(),
        );
        Self { det, lat, head, dec }
    }

    fn total(&self) -> usize {
        self.dec.offset + self.dec.n_params()
    }

    fn all(&self) -> [&MlpLayout; 4] {
        [&self.det, &self.lat, &self.head, &self.dec]
    }
}

/// Mean and unit-variance scaling of the condition vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: [f64; INPUT_DIM],
    pub std: [f64; INPUT_DIM],
}

impl Default for Standardizer {
    fn default() -> Self {
        Self {
            mean: [0.0; INPUT_DIM],
            std: [1.0; INPUT_DIM],
        }
    }
}

impl Standardizer {
    /// Fits to all points; components with (near) zero spread keep scale 1.
    pub fn fit(sets: &[PointSet]) -> Self {
        let n: usize = sets.iter().map(|s| s.len()).sum();
        if n == 0 {
            return Self::default();
        }
        let mut mean = [0.0; INPUT_DIM];
        for x in sets.iter().flat_map(|s| &s.x) {
            for i in 0..INPUT_DIM {
                mean[i] += x[i];
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = [0.0; INPUT_DIM];
        for x in sets.iter().flat_map(|s| &s.x) {
            for i in 0..INPUT_DIM {
                var[i] += (x[i] - mean[i]).powi(2);
            }
        }
        let std = var.map(|v| {
            let s = (v / n as f64).sqrt();
            if s > 1e-9 {
                s
            } else {
                1.0
            }
        });
        Self { mean, std }
    }

    pub fn apply(&self, x: &[f64; INPUT_DIM]) -> [f64; INPUT_DIM] {
        std::array::from_fn(|i| (x[i] - self.mean[i]) / self.std[i])
    }
}

/// Loss terms of one batch.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub nll: f64,
    pub kl: f64,
    pub residual: f64,
    pub total: f64,
}

/// How the decoder's `z` is chosen at prediction time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ZMode {
    /// Mean of the latent distribution (zero without context).
    Mean,
    /// One draw from the latent distribution with the given seed.
    Sample(u64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NpModel {
    pub arch: NpArchitecture,
    pub activation: Activation,
    pub accel_lb: f64,
    pub accel_ub: f64,
    pub standardizer: Standardizer,
    pub params: Vec<f64>,
    layouts: Layouts,
}

struct Encoded {
    xy: Array2<f64>,
    trace: MlpTrace,
}

impl NpModel {
    /// Glorot-uniform weights and zero biases.
    pub fn new<R: Rng>(arch: NpArchitecture, activation: Activation, rng: &mut R) -> Self {
        let layouts = Layouts::new(&arch);
        let mut params = vec![0.0; layouts.total()];
        for layout in layouts.all() {
            for l in 0..layout.n_layers() {
                let (i, o) = (layout.dims[l], layout.dims[l + 1]);
                let lim = (6.0 / (i + o) as f64).sqrt();
                let (wo, _) = layout.layer_offsets(l);
                for w in &mut params[wo..wo + i * o] {
                    *w = rng.random_range(-lim..lim);
                }
            }
        }
        Self {
            arch,
            activation,
            accel_lb: -5.0,
            accel_ub: 5.0,
            standardizer: Standardizer::default(),
            params,
            layouts,
        }
    }

    pub(crate) fn from_parts(
        arch: NpArchitecture,
        activation: Activation,
        accel_lb: f64,
        accel_ub: f64,
        standardizer: Standardizer,
        params: Vec<f64>,
    ) -> Result<Self, NpError> {
        let layouts = Layouts::new(&arch);
        if params.len() != layouts.total() {
            return Err(NpError::Format(format!(
                "{} parameters, architecture needs {}",
                params.len(),
                layouts.total()
            )));
        }
        Ok(Self {
            arch,
            activation,
            accel_lb,
            accel_ub,
            standardizer,
            params,
            layouts,
        })
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    /// `(name, start, len)` of every weight matrix and bias vector, in buffer order.
    pub fn param_blocks(&self) -> Vec<(String, usize, usize)> {
        let names = ["det", "lat", "lat_head", "dec"];
        let mut out = vec![];
        for (name, layout) in names.iter().zip(self.layouts.all()) {
            for l in 0..layout.n_layers() {
                let (wo, bo) = layout.layer_offsets(l);
                let o = layout.dims[l + 1];
                out.push((format!("{name}.{l}.w"), wo, bo - wo));
                out.push((format!("{name}.{l}.b"), bo, o));
            }
        }
        out
    }

    fn xy_matrix(&self, set: &PointSet) -> Array2<f64> {
        let mut m = Array2::zeros((set.len(), INPUT_DIM + 1));
        for (i, (x, y)) in set.x.iter().zip(&set.y).enumerate() {
            let xs = self.standardizer.apply(x);
            for j in 0..INPUT_DIM {
                m[[i, j]] = xs[j];
            }
            m[[i, INPUT_DIM]] = *y;
        }
        m
    }

    fn run_det(&self, set: &PointSet) -> Encoded {
        let xy = self.xy_matrix(set);
        let trace = mlp::forward(&self.layouts.det, self.activation, &self.params, xy.clone());
        Encoded { xy, trace }
    }

    fn run_lat(&self, set: &PointSet) -> (Encoded, MlpTrace, LatentDist) {
        let xy = self.xy_matrix(set);
        let trace = mlp::forward(&self.layouts.lat, self.activation, &self.params, xy.clone());
        let pooled = trace.output.mean_axis(Axis(0)).expect("non-empty").insert_axis(Axis(0));
        let head = mlp::forward(&self.layouts.head, self.activation, &self.params, pooled);
        let dist = LatentDist {
            mu: head.output[[0, 0]],
            sigma: softplus(head.output[[0, 1]]) + SIGMA_FLOOR,
        };
        (Encoded { xy, trace }, head, dist)
    }

    /// Style vector of a point set: mean of the per-point encoder outputs.
    pub fn encode_deterministic(&self, set: &PointSet) -> Result<StyleVector, NpError> {
        if set.is_empty() {
            return Err(NpError::Invalid("cannot encode an empty point set".into()));
        }
        let r = self.run_det(set).trace.output.mean_axis(Axis(0)).expect("non-empty");
        Ok(StyleVector(std::array::from_fn(|i| r[i])))
    }

    pub fn encode_latent(&self, set: &PointSet) -> Result<LatentDist, NpError> {
        if set.is_empty() {
            return Err(NpError::Invalid("cannot encode an empty point set".into()));
        }
        Ok(self.run_lat(set).2)
    }

    fn decoder_input(&self, xs: &[[f64; INPUT_DIM]], r: &StyleVector, z: f64) -> Array2<f64> {
        let width = INPUT_DIM + STYLE_DIM + 1;
        let mut m = Array2::zeros((xs.len(), width));
        for (i, x) in xs.iter().enumerate() {
            let x = self.standardizer.apply(x);
            for j in 0..INPUT_DIM {
                m[[i, j]] = x[j];
            }
            for j in 0..STYLE_DIM {
                m[[i, INPUT_DIM + j]] = r.0[j];
            }
            m[[i, width - 1]] = z;
        }
        m
    }

    /// Unclipped mean and raw σ outputs of the decoder for one condition.
    pub fn decode_raw(&self, x: &[f64; INPUT_DIM], r: &StyleVector, z: f64) -> (f64, f64) {
        let input = self.decoder_input(std::slice::from_ref(x), r, z);
        let out = mlp::forward_row(
            &self.layouts.dec,
            self.activation,
            &self.params,
            input.row(0).as_slice().expect("contiguous"),
        );
        (out[0], out[1])
    }

    /// Acceleration mean (clipped to the bounds) and standard deviation.
    pub fn decode(&self, x: &[f64; INPUT_DIM], r: &StyleVector, z: f64) -> (f64, f64) {
        let (mu, rho) = self.decode_raw(x, r, z);
        (self.clip(mu), softplus(rho) + SIGMA_FLOOR)
    }

    pub fn clip(&self, mu: f64) -> f64 {
        mu.clamp(self.accel_lb, self.accel_ub)
    }

    /// Predicts the targets from a context set. Without context, `z` comes
    /// from a standard normal and `fallback_r` must supply the style.
    pub fn predict(
        &self,
        context: &PointSet,
        x_targets: &[[f64; INPUT_DIM]],
        z_mode: ZMode,
        fallback_r: Option<&StyleVector>,
    ) -> Result<Vec<(f64, f64)>, NpError> {
        let (r, latent) = if context.is_empty() {
            let r = fallback_r.ok_or_else(|| {
                NpError::Invalid("empty context needs a caller-supplied style vector".into())
            })?;
            (*r, LatentDist { mu: 0.0, sigma: 1.0 })
        } else {
            (self.encode_deterministic(context)?, self.encode_latent(context)?)
        };
        let z = self.choose_z(&latent, z_mode);
        Ok(self.decode_batch(x_targets, &r, z))
    }

    pub fn choose_z(&self, latent: &LatentDist, mode: ZMode) -> f64 {
        match mode {
            ZMode::Mean => latent.mu,
            ZMode::Sample(seed) => {
                let mut r = crate::rng::stream(seed, "np-z", 0);
                let xi: f64 = r.sample(StandardNormal);
                latent.mu + latent.sigma * xi
            }
        }
    }

    pub fn decode_batch(&self, xs: &[[f64; INPUT_DIM]], r: &StyleVector, z: f64) -> Vec<(f64, f64)> {
        if xs.is_empty() {
            return vec![];
        }
        let out = mlp::forward(
            &self.layouts.dec,
            self.activation,
            &self.params,
            self.decoder_input(xs, r, z),
        )
        .output;
        out.rows()
            .into_iter()
            .map(|row| (self.clip(row[0]), softplus(row[1]) + SIGMA_FLOOR))
            .collect()
    }

    /// Training loss of one batch with `z = μ_T + σ_T·xi`, and, when `grad` is
    /// given, its gradient added into `grad`.
    ///
    /// `r` and the context latent come from `context`; the decoder predicts
    /// every point of `target`, which should include the context points.
    pub fn loss(
        &self,
        context: &PointSet,
        target: &PointSet,
        xi: f64,
        grad: Option<&mut [f64]>,
    ) -> Result<LossBreakdown, NpError> {
        if context.is_empty() || target.is_empty() {
            return Err(NpError::Invalid("context and target must be non-empty".into()));
        }
        let act = self.activation;
        let p = &self.params;
        let det = self.run_det(context);
        let r_arr = det.trace.output.mean_axis(Axis(0)).expect("non-empty");
        let r = StyleVector(std::array::from_fn(|i| r_arr[i]));
        let (lat_c, head_c, zc) = self.run_lat(context);
        let (lat_t, head_t, zt) = self.run_lat(target);
        let z = zt.mu + zt.sigma * xi;

        let dec_in = self.decoder_input(&target.x, &r, z);
        let dec = mlp::forward(&self.layouts.dec, act, p, dec_in);
        let n_t = target.len();
        let mut nll = 0.0;
        let mut sq = 0.0;
        let mut mu = vec![0.0; n_t];
        let mut sigma = vec![0.0; n_t];
        for i in 0..n_t {
            mu[i] = self.clip(dec.output[[i, 0]]);
            sigma[i] = softplus(dec.output[[i, 1]]) + SIGMA_FLOOR;
            let e = target.y[i] - mu[i];
            nll += 0.5 * (2.0 * std::f64::consts::PI).ln() + sigma[i].ln() + e * e / (2.0 * sigma[i] * sigma[i]);
            sq += e * e;
        }
        let residual = sq.sqrt();
        let kl = zc.kl(&zt);
        let out = LossBreakdown {
            nll,
            kl,
            residual,
            total: nll + kl + residual,
        };
        let Some(grad) = grad else {
            return Ok(out);
        };

        // decoder heads
        let mut d_dec = Array2::zeros((n_t, 2));
        for i in 0..n_t {
            let e = mu[i] - target.y[i];
            let raw = dec.output[[i, 0]];
            let inside = raw > self.accel_lb && raw < self.accel_ub;
            let d_mu = e / sigma[i].powi(2) + if residual > 0.0 { e / residual } else { 0.0 };
            d_dec[[i, 0]] = if inside { d_mu } else { 0.0 };
            let d_sigma = 1.0 / sigma[i] - e * e / sigma[i].powi(3);
            d_dec[[i, 1]] = d_sigma * sigmoid(dec.output[[i, 1]]);
        }
        let d_in = mlp::backward(&self.layouts.dec, act, p, &dec, d_dec, grad);
        let d_r = d_in.slice(s![.., INPUT_DIM..INPUT_DIM + STYLE_DIM]).sum_axis(Axis(0));
        let d_z = d_in.column(INPUT_DIM + STYLE_DIM).sum();

        // latent path: KL plus reparameterised z
        let diff = zc.mu - zt.mu;
        let vt = zt.sigma * zt.sigma;
        let d_mu_c = diff / vt;
        let d_sig_c = -1.0 / zc.sigma + zc.sigma / vt;
        let d_mu_t = -diff / vt + d_z;
        let d_sig_t = 1.0 / zt.sigma - (zc.sigma * zc.sigma + diff * diff) / (vt * zt.sigma) + d_z * xi;
        for (enc, head, d_mu, d_sig) in [
            (&lat_c, &head_c, d_mu_c, d_sig_c),
            (&lat_t, &head_t, d_mu_t, d_sig_t),
        ] {
            let mut d_head = Array2::zeros((1, 2));
            d_head[[0, 0]] = d_mu;
            d_head[[0, 1]] = d_sig * sigmoid(head.output[[0, 1]]);
            let d_pooled = mlp::backward(&self.layouts.head, act, p, head, d_head, grad);
            let n = enc.xy.nrows();
            let d_rows = Array2::from_shape_fn((n, d_pooled.ncols()), |(_, j)| d_pooled[[0, j]] / n as f64);
            mlp::backward(&self.layouts.lat, act, p, &enc.trace, d_rows, grad);
        }

        // deterministic encoder through the mean
        let n_c = det.xy.nrows();
        let d_det = Array2::from_shape_fn((n_c, STYLE_DIM), |(_, j)| d_r[j] / n_c as f64);
        mlp::backward(&self.layouts.det, act, p, &det.trace, d_det, grad);
        Ok(out)
    }
}
