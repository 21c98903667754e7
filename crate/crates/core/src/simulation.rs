//! Closed-loop follower rollouts driven by the neural-process decoder, with
//! the safe-distance override and spacing/speed/TTC analytics.

use std::fmt::Write as _;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::idm::{simulate_follower, FollowerFrame, KinematicState};
use crate::np::{LatentDist, NpError, NpModel, PointSet, StyleVector};
use crate::rng;
use crate::stats::{shared_histograms, tv_distance, Histogram, SeriesStats};
use crate::trajectory::{CfEpisode, LeaderTrack, DEFAULT_DT};

/// Default number of histogram bins.
pub const DEFAULT_BINS: usize = 30;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("time to collision needs a positive spacing, got {0}")]
    Domain(f64),
    #[error(transparent)]
    Np(#[from] NpError),
}

/// Emergency braking rule: while the spacing is below `response_time · v`,
/// the follower brakes at `brake_decel`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SafetyConfig {
    pub enabled: bool,
    pub response_time: f64,
    pub brake_decel: f64,
}

impl Default for SafetyConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            response_time: 1.5,
            brake_decel: 5.0,
        }
    }
}

impl SafetyConfig {
    pub fn off() -> Self {
        Self {
            enabled: false,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.response_time > 0.0 && self.brake_decel > 0.0) {
            return Err(SimError::Invalid(
                "response_time and brake_decel must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Whether the override applies at spacing `s` and speed `v`.
    pub fn engaged(&self, s: f64, v: f64) -> bool {
        self.enabled && s < self.response_time * v
    }
}

/// Signed time to collision `s / dv`; `None` when the relative speed is zero.
/// A negative value means the gap is opening.
pub fn ttc(s: f64, dv: f64) -> Result<Option<f64>, SimError> {
    if !(s > 0.0) {
        return Err(SimError::Domain(s));
    }
    Ok((dv != 0.0).then(|| s / dv))
}

/// Where the style of a rollout comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum StyleSource {
    /// Observed driver: `r` and the latent distribution are encoded from the
    /// points.
    Observed(PointSet),
    /// Synthesized style with `z` from a standard normal.
    Synthesized(StyleVector),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimOptions {
    pub dt: f64,
    pub safety: SafetyConfig,
    /// Draw `z` once from its distribution instead of taking its mean.
    pub sample_z: bool,
    /// Draw every acceleration from `N(μ, σ²)` instead of taking `μ`.
    pub sample_accel: bool,
    pub seed: u64,
    /// Index of the rollout within a run; selects the random stream.
    pub rollout: u64,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            dt: DEFAULT_DT,
            safety: SafetyConfig::default(),
            sample_z: false,
            sample_accel: false,
            seed: 0,
            rollout: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    /// Leader frames as given.
    pub leader: LeaderTrack,
    pub frames: Vec<FollowerFrame>,
    /// Leader frame at which the spacing became non-positive.
    pub collision_step: Option<usize>,
    /// Frames at which the safety override set the acceleration.
    pub override_steps: Vec<usize>,
    pub r: StyleVector,
    pub z: f64,
}

impl SimResult {
    pub fn collided(&self) -> bool {
        self.collision_step.is_some()
    }

    pub fn spacing(&self) -> Vec<f64> {
        self.frames.iter().map(|f| f.s).collect()
    }

    pub fn speed(&self) -> Vec<f64> {
        self.frames.iter().map(|f| f.v).collect()
    }

    /// Defined TTC values and the number of frames with `dv = 0`.
    pub fn ttc(&self) -> (Vec<f64>, usize) {
        ttc_series(self.frames.iter().map(|f| (f.s, f.dv)))
    }
}

fn ttc_series(it: impl Iterator<Item = (f64, f64)>) -> (Vec<f64>, usize) {
    let mut out = Vec::new();
    let mut undefined = 0;
    for (s, dv) in it {
        match ttc(s, dv) {
            Ok(Some(v)) => out.push(v),
            _ => undefined += 1,
        }
    }
    (out, undefined)
}

/// Rolls the follower out behind `leader` with accelerations from the
/// decoder.
///
/// `z` is fixed for the whole rollout. At every frame where the safety rule
/// is engaged the acceleration is exactly `-brake_decel`; otherwise it is the
/// decoder mean, or a draw from `N(μ, σ²)` with `sample_accel`.
pub fn simulate_with_style(
    leader: &LeaderTrack,
    initial: KinematicState,
    model: &NpModel,
    style: &StyleSource,
    opts: &SimOptions,
) -> Result<SimResult, SimError> {
    if !(opts.dt > 0.0) {
        return Err(SimError::Invalid(format!("dt must be positive, got {}", opts.dt)));
    }
    if opts.safety.enabled {
        opts.safety.validate()?;
    }
    let Some(first) = leader.frames.first() else {
        return Err(SimError::Invalid("empty leader track".into()));
    };
    let s0 = first.x - initial.x - leader.length;
    if !(s0 > 0.0) {
        return Err(SimError::Invalid(format!("initial spacing {s0} is not positive")));
    }

    let (r, latent) = match style {
        StyleSource::Observed(points) => (
            model.encode_deterministic(points)?,
            model.encode_latent(points)?,
        ),
        StyleSource::Synthesized(r) => (*r, LatentDist { mu: 0.0, sigma: 1.0 }),
    };
    let z = if opts.sample_z {
        let xi: f64 = rand_distr::StandardNormal.sample(&mut rng::stream(opts.seed, "sim-z", opts.rollout));
        latent.mu + latent.sigma * xi
    } else {
        latent.mu
    };

    let mut accel_rng = rng::stream(opts.seed, "sim-accel", opts.rollout);
    let mut overrides = Vec::new();
    let mut step = 0usize;
    let rollout = simulate_follower(
        leader,
        initial,
        |_, cond| {
            let k = step;
            step += 1;
            if opts.safety.engaged(cond.s, cond.v) {
                overrides.push(k);
                return -opts.safety.brake_decel;
            }
            let (mu, sigma) = model.decode(&cond.to_array(), &r, z);
            if opts.sample_accel {
                let d = Normal::new(mu, sigma).expect("σ is positive");
                model.clip(d.sample(&mut accel_rng))
            } else {
                mu
            }
        },
        opts.dt,
    );
    Ok(SimResult {
        leader: leader.clone(),
        frames: rollout.frames,
        collision_step: rollout.collision_step,
        override_steps: overrides,
        r,
        z,
    })
}

/// Statistics of one series, and its comparison with a reference when one is
/// given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesReport {
    pub name: String,
    pub stats: SeriesStats,
    pub histogram: Histogram,
    pub reference_stats: Option<SeriesStats>,
    pub reference_histogram: Option<Histogram>,
    /// Total-variation distance between the two histograms.
    pub tv_distance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub collided: bool,
    pub override_count: usize,
    /// Frames with zero relative speed, excluded from the TTC series.
    pub ttc_undefined: usize,
    pub reference_ttc_undefined: Option<usize>,
    /// Spacing, speed and TTC, in that order.
    pub series: Vec<SeriesReport>,
}

impl MetricsReport {
    pub fn get(&self, name: &str) -> Option<&SeriesReport> {
        self.series.iter().find(|s| s.name == name)
    }

    /// Plain-text export: a `series,stat,value` block followed by a
    /// `series,source,lo,hi,count` histogram block.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "series,stat,value");
        let _ = writeln!(out, "all,collided,{}", self.collided as u8);
        let _ = writeln!(out, "all,override_count,{}", self.override_count);
        let _ = writeln!(out, "ttc,undefined,{}", self.ttc_undefined);
        if let Some(u) = self.reference_ttc_undefined {
            let _ = writeln!(out, "ttc,reference_undefined,{u}");
        }
        for s in &self.series {
            let mut rows = vec![("", s.stats)];
            if let Some(r) = s.reference_stats {
                rows.push(("reference_", r));
            }
            for (prefix, st) in rows {
                for (k, v) in [
                    ("n", st.n as f64),
                    ("mean", st.mean),
                    ("std", st.std),
                    ("min", st.min),
                    ("q1", st.q1),
                    ("median", st.median),
                    ("q3", st.q3),
                    ("max", st.max),
                ] {
                    let _ = writeln!(out, "{},{prefix}{k},{v}", s.name);
                }
            }
            if let Some(d) = s.tv_distance {
                let _ = writeln!(out, "{},tv_distance,{d}", s.name);
            }
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "series,source,lo,hi,count");
        for s in &self.series {
            let mut hs = vec![("simulated", &s.histogram)];
            if let Some(h) = &s.reference_histogram {
                hs.push(("reference", h));
            }
            for (src, h) in hs {
                for (i, c) in h.counts.iter().enumerate() {
                    let _ = writeln!(out, "{},{src},{},{},{c}", s.name, h.edges[i], h.edges[i + 1]);
                }
            }
        }
        out
    }
}

/// Statistics and histograms of spacing, speed and TTC. With a reference
/// episode both sides share bin edges over their pooled range and the
/// total-variation distance is reported per series.
pub fn summarize(result: &SimResult, reference: Option<&CfEpisode>, bins: usize) -> MetricsReport {
    let (ttc_sim, undefined) = result.ttc();
    let sim = [
        ("spacing", result.spacing()),
        ("speed", result.speed()),
        ("ttc", ttc_sim),
    ];
    let (refs, ref_undefined) = match reference {
        Some(ep) => {
            let (t, u) = ttc_series(ep.frames.iter().map(|f| (f.s, f.dv)));
            (Some([ep.spacing(), ep.speed(), t]), Some(u))
        }
        None => (None, None),
    };
    let series = sim
        .into_iter()
        .enumerate()
        .map(|(i, (name, x))| {
            let y = refs.as_ref().map(|r| &r[i]);
            let (h, rh) = match y {
                Some(y) => {
                    let (a, b) = shared_histograms(&x, y, bins);
                    (a, Some(b))
                }
                None => (shared_histograms(&x, &[], bins).0, None),
            };
            SeriesReport {
                name: name.to_string(),
                stats: SeriesStats::of(&x),
                tv_distance: rh.as_ref().map(|b| tv_distance(&h, b)),
                reference_stats: y.map(|y| SeriesStats::of(y)),
                histogram: h,
                reference_histogram: rh,
            }
        })
        .collect();
    MetricsReport {
        collided: result.collided(),
        override_count: result.override_steps.len(),
        ttc_undefined: undefined,
        reference_ttc_undefined: ref_undefined,
        series,
    }
}

/// The simulated follower as an episode behind the same leader, so it can
/// serve as a reference or be written with the episode file format.
pub fn result_episode(result: &SimResult, follower_id: i64, leader_id: i64, dt: f64) -> CfEpisode {
    let frames = result
        .frames
        .iter()
        .zip(&result.leader.frames)
        .map(|(f, l)| crate::trajectory::CfFrame {
            t: f.t,
            v_f: f.v,
            v_l: l.v,
            x_f: f.x,
            x_l: l.x,
            s: f.s,
            dv: f.dv,
            a_f: f.a,
            a_lat_l: l.a_lat,
            a_lon_l: l.a_lon,
        })
        .collect();
    CfEpisode {
        follower_id,
        leader_id,
        leader_length: result.leader.length,
        dt,
        frames,
    }
}

/// Mean of the positive TTC values of a rollout; `None` when there are none.
pub fn mean_positive_ttc(result: &SimResult) -> Option<f64> {
    let pos: Vec<f64> = result.ttc().0.into_iter().filter(|v| *v > 0.0).collect();
    (!pos.is_empty()).then(|| crate::stats::mean(&pos))
}

/// Follower state `gap` metres behind the leader's first frame at speed `v`.
pub fn initial_behind(leader: &LeaderTrack, gap: f64, v: f64) -> KinematicState {
    let x = leader.frames.first().map(|f| f.x).unwrap_or(0.0) - leader.length - gap;
    KinematicState { x, v }
}
