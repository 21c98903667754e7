//! Trajectory ingestion, car-following episode extraction and episode files.

mod episode_io;
mod extract;
mod load;

pub use episode_io::{read_episode, read_episode_file, write_episode, write_episode_file};
pub use extract::{extract_cf_episodes, ExtractConfig, ExtractReport, Extraction};
pub use load::{load_trajectories, ColumnMap, LoadReport, TrajectoryFormat};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::idm::KinematicState;

/// Frame interval of the drone dataset, seconds.
pub const DEFAULT_DT: f64 = 0.04;

/// Leader length used when the data file carries none, meters.
pub const DEFAULT_VEHICLE_LENGTH: f64 = 4.0;

/// Tolerance for matching a time stamp to the frame grid.
pub const TIME_EPS: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum TrajectoryError {
    #[error("input not found: {0}")]
    NotFound(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("data error for vehicle {vehicle}: {reason}")]
    Data { vehicle: i64, reason: String },
    #[error("no frame at t = {0} s")]
    Lookup(f64),
    #[error("follower collided with leader at t = {0} s during generation")]
    Collision(f64),
    #[error("invalid argument: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VehicleClass {
    Car,
    Other,
}

/// One time-stamped sample of a vehicle track.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryFrame {
    pub time: f64,
    /// Longitudinal arc length along the lane, m.
    pub position: f64,
    pub speed: f64,
    pub accel_lon: f64,
    pub accel_lat: f64,
    pub lane_id: i64,
    pub vehicle_id: i64,
    pub vehicle_class: VehicleClass,
}

/// All frames of one vehicle, strictly increasing in time.
#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub vehicle_id: i64,
    pub class: VehicleClass,
    pub length: f64,
    pub frames: Vec<TrajectoryFrame>,
}

/// Six-component input of the car-following models, in the order
/// `(Δv, v, s, v_lead, a_lat_lead, a_lon_lead)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrafficCondition {
    /// Follower speed minus leader speed, m/s.
    pub dv: f64,
    pub v: f64,
    /// Bumper-to-bumper gap, m.
    pub s: f64,
    pub v_lead: f64,
    pub a_lat_lead: f64,
    pub a_lon_lead: f64,
}

impl TrafficCondition {
    pub fn to_array(&self) -> [f64; 6] {
        [
            self.dv,
            self.v,
            self.s,
            self.v_lead,
            self.a_lat_lead,
            self.a_lon_lead,
        ]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        Self {
            dv: a[0],
            v: a[1],
            s: a[2],
            v_lead: a[3],
            a_lat_lead: a[4],
            a_lon_lead: a[5],
        }
    }
}

/// One aligned leader/follower sample of an episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CfFrame {
    pub t: f64,
    pub v_f: f64,
    pub v_l: f64,
    pub x_f: f64,
    pub x_l: f64,
    /// `x_l - x_f - leader_length`.
    pub s: f64,
    /// `v_f - v_l`.
    pub dv: f64,
    pub a_f: f64,
    pub a_lat_l: f64,
    pub a_lon_l: f64,
}

impl CfFrame {
    pub fn condition(&self) -> TrafficCondition {
        TrafficCondition {
            dv: self.dv,
            v: self.v_f,
            s: self.s,
            v_lead: self.v_l,
            a_lat_lead: self.a_lat_l,
            a_lon_lead: self.a_lon_l,
        }
    }
}

/// A contiguous car-following episode between one follower and one leader.
#[derive(Debug, Clone, PartialEq)]
pub struct CfEpisode {
    pub follower_id: i64,
    pub leader_id: i64,
    pub leader_length: f64,
    pub dt: f64,
    pub frames: Vec<CfFrame>,
}

/// Observed leader sample driving a closed-loop rollout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeaderFrame {
    pub t: f64,
    pub x: f64,
    pub v: f64,
    pub a_lat: f64,
    pub a_lon: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeaderTrack {
    pub length: f64,
    pub frames: Vec<LeaderFrame>,
}

impl LeaderTrack {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

impl CfEpisode {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// `(n - 1) * dt`, zero for fewer than two frames.
    pub fn duration(&self) -> f64 {
        self.frames.len().saturating_sub(1) as f64 * self.dt
    }

    /// Index of the frame stamped `t`, if `t` lies on the frame grid.
    pub fn frame_index(&self, t: f64) -> Option<usize> {
        let first = self.frames.first()?.t;
        let k = ((t - first) / self.dt).round();
        if k < 0.0 || k as usize >= self.frames.len() {
            return None;
        }
        let k = k as usize;
        ((self.frames[k].t - t).abs() <= TIME_EPS).then_some(k)
    }

    /// Traffic condition observed at frame time `t`.
    pub fn derive_condition(&self, t: f64) -> Result<TrafficCondition, TrajectoryError> {
        self.frame_index(t)
            .map(|k| self.frames[k].condition())
            .ok_or(TrajectoryError::Lookup(t))
    }

    pub fn leader_track(&self) -> LeaderTrack {
        LeaderTrack {
            length: self.leader_length,
            frames: self
                .frames
                .iter()
                .map(|f| LeaderFrame {
                    t: f.t,
                    x: f.x_l,
                    v: f.v_l,
                    a_lat: f.a_lat_l,
                    a_lon: f.a_lon_l,
                })
                .collect(),
        }
    }

    /// Observed follower state at frame `k`.
    pub fn follower_state(&self, k: usize) -> KinematicState {
        KinematicState {
            x: self.frames[k].x_f,
            v: self.frames[k].v_f,
        }
    }

    /// Frames `range` as a standalone episode.
    pub fn slice(&self, range: std::ops::Range<usize>) -> CfEpisode {
        CfEpisode {
            follower_id: self.follower_id,
            leader_id: self.leader_id,
            leader_length: self.leader_length,
            dt: self.dt,
            frames: self.frames[range].to_vec(),
        }
    }

    pub fn spacing(&self) -> Vec<f64> {
        self.frames.iter().map(|f| f.s).collect()
    }

    pub fn speed(&self) -> Vec<f64> {
        self.frames.iter().map(|f| f.v_f).collect()
    }
}

/// Central finite differences of `values` sampled every `dt`; one-sided at
/// both ends.
pub fn central_difference(values: &[f64], dt: f64) -> Vec<f64> {
    let n = values.len();
    match n {
        0 => vec![],
        1 => vec![0.0],
        _ => (0..n)
            .map(|k| {
                if k == 0 {
                    (values[1] - values[0]) / dt
                } else if k == n - 1 {
                    (values[n - 1] - values[n - 2]) / dt
                } else {
                    (values[k + 1] - values[k - 1]) / (2.0 * dt)
                }
            })
            .collect(),
    }
}
