use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{CfEpisode, CfFrame, Track, VehicleClass, DEFAULT_DT};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractConfig {
    pub dt: f64,
    /// Episodes spanning less than this are dropped, s.
    pub min_duration: f64,
    /// Frames within this window of a lane change are removed, s.
    pub trim_window: f64,
    pub stop_speed_eps: f64,
    pub stop_min_duration: f64,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        Self {
            dt: DEFAULT_DT,
            min_duration: 10.0,
            trim_window: 2.0,
            stop_speed_eps: 0.1,
            stop_min_duration: 3.0,
        }
    }
}

/// Frame and segment counts of one extraction run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExtractReport {
    pub vehicles: usize,
    pub car_vehicles: usize,
    pub follower_frames: usize,
    pub frames_without_leader: usize,
    pub frames_non_car_leader: usize,
    pub frames_lane_change: usize,
    pub frames_non_positive_gap: usize,
    pub frames_stopped: usize,
    pub segments_too_short: usize,
    pub episodes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    pub episodes: Vec<CfEpisode>,
    pub report: ExtractReport,
}

struct Slot {
    track: usize,
    frame: usize,
}

fn grid_index(t: f64, dt: f64) -> i64 {
    (t / dt).round() as i64
}

/// Lane change instants of a track: times of the first frame in a new lane.
fn lane_changes(track: &Track) -> Vec<f64> {
    track
        .frames
        .windows(2)
        .filter(|w| w[0].lane_id != w[1].lane_id)
        .map(|w| w[1].time)
        .collect()
}

fn near_any(t: f64, instants: &[f64], window: f64) -> bool {
    instants.iter().any(|c| (t - c).abs() <= window + 1e-9)
}

/// Splits per-vehicle tracks into car-following episodes.
///
/// The leader of a follower frame is the vehicle in the same lane with the
/// smallest position ahead of it. Frames near lane changes of either vehicle,
/// frames with a non-car leader, frames with non-positive gap and long joint
/// stops are removed; remaining contiguous runs with one leader become
/// episodes when they span at least `min_duration`.
pub fn extract_cf_episodes(tracks: &[Track], cfg: &ExtractConfig) -> Extraction {
    let dt = cfg.dt;
    let mut report = ExtractReport {
        vehicles: tracks.len(),
        car_vehicles: tracks.iter().filter(|t| t.class == VehicleClass::Car).count(),
        ..Default::default()
    };

    let mut occupancy: HashMap<(i64, i64), Vec<Slot>> = HashMap::new();
    for (ti, tr) in tracks.iter().enumerate() {
        for (fi, f) in tr.frames.iter().enumerate() {
            occupancy
                .entry((grid_index(f.time, dt), f.lane_id))
                .or_default()
                .push(Slot {
                    track: ti,
                    frame: fi,
                });
        }
    }
    let changes: Vec<Vec<f64>> = tracks.iter().map(lane_changes).collect();

    let mut order: Vec<usize> = (0..tracks.len()).collect();
    order.sort_by_key(|&i| tracks[i].vehicle_id);

    let mut episodes = Vec::new();
    for &fi_track in &order {
        let follower = &tracks[fi_track];
        if follower.class != VehicleClass::Car {
            continue;
        }
        // (leader track, grid index, frame) for every usable follower frame
        let mut usable: Vec<(usize, i64, CfFrame)> = Vec::new();
        for f in &follower.frames {
            report.follower_frames += 1;
            let k = grid_index(f.time, dt);
            let Some(slots) = occupancy.get(&(k, f.lane_id)) else {
                report.frames_without_leader += 1;
                continue;
            };
            let leader = slots
                .iter()
                .filter(|s| s.track != fi_track)
                .filter(|s| tracks[s.track].frames[s.frame].position > f.position)
                .min_by(|a, b| {
                    let pa = tracks[a.track].frames[a.frame].position;
                    let pb = tracks[b.track].frames[b.frame].position;
                    pa.total_cmp(&pb)
                });
            let Some(slot) = leader else {
                report.frames_without_leader += 1;
                continue;
            };
            let lt = &tracks[slot.track];
            if lt.class != VehicleClass::Car {
                report.frames_non_car_leader += 1;
                continue;
            }
            if near_any(f.time, &changes[fi_track], cfg.trim_window)
                || near_any(f.time, &changes[slot.track], cfg.trim_window)
            {
                report.frames_lane_change += 1;
                continue;
            }
            let lf = &lt.frames[slot.frame];
            let s = lf.position - f.position - lt.length;
            if !(s > 0.0) {
                report.frames_non_positive_gap += 1;
                continue;
            }
            usable.push((
                slot.track,
                k,
                CfFrame {
                    t: f.time,
                    v_f: f.speed,
                    v_l: lf.speed,
                    x_f: f.position,
                    x_l: lf.position,
                    s,
                    dv: f.speed - lf.speed,
                    a_f: f.accel_lon,
                    a_lat_l: lf.accel_lat,
                    a_lon_l: lf.accel_lon,
                },
            ));
        }

        for run in split_runs(&usable) {
            for seg in remove_stops(run, cfg, &mut report) {
                let span = (seg.len().saturating_sub(1)) as f64 * dt;
                if span + 1e-9 < cfg.min_duration || seg.is_empty() {
                    report.segments_too_short += 1;
                    continue;
                }
                let leader = &tracks[seg[0].0];
                episodes.push(CfEpisode {
                    follower_id: follower.vehicle_id,
                    leader_id: leader.vehicle_id,
                    leader_length: leader.length,
                    dt,
                    frames: seg.iter().map(|(_, _, f)| *f).collect(),
                });
            }
        }
    }
    report.episodes = episodes.len();
    Extraction { episodes, report }
}

/// Maximal runs of consecutive grid indices with one leader.
fn split_runs(frames: &[(usize, i64, CfFrame)]) -> Vec<&[(usize, i64, CfFrame)]> {
    let mut runs = Vec::new();
    let mut start = 0;
    for i in 1..=frames.len() {
        let boundary = i == frames.len()
            || frames[i].0 != frames[i - 1].0
            || frames[i].1 != frames[i - 1].1 + 1;
        if boundary {
            if i > start {
                runs.push(&frames[start..i]);
            }
            start = i;
        }
    }
    runs
}

/// Removes joint stops of follower and leader lasting at least
/// `stop_min_duration` and returns the remaining pieces.
fn remove_stops<'a>(
    run: &'a [(usize, i64, CfFrame)],
    cfg: &ExtractConfig,
    report: &mut ExtractReport,
) -> Vec<&'a [(usize, i64, CfFrame)]> {
    let stopped: Vec<bool> = run
        .iter()
        .map(|(_, _, f)| f.v_f < cfg.stop_speed_eps && f.v_l < cfg.stop_speed_eps)
        .collect();
    let mut drop = vec![false; run.len()];
    let mut i = 0;
    while i < run.len() {
        if !stopped[i] {
            i += 1;
            continue;
        }
        let mut j = i;
        while j + 1 < run.len() && stopped[j + 1] {
            j += 1;
        }
        if (j - i) as f64 * cfg.dt + 1e-9 >= cfg.stop_min_duration {
            drop[i..=j].iter_mut().for_each(|d| *d = true);
            report.frames_stopped += j - i + 1;
        }
        i = j + 1;
    }
    let mut pieces = Vec::new();
    let mut start = None;
    for k in 0..=run.len() {
        let keep = k < run.len() && !drop[k];
        match (keep, start) {
            (true, None) => start = Some(k),
            (false, Some(s)) => {
                pieces.push(&run[s..k]);
                start = None;
            }
            _ => {}
        }
    }
    pieces
}
