use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    central_difference, Track, TrajectoryError, TrajectoryFrame, VehicleClass,
    DEFAULT_VEHICLE_LENGTH,
};

/// Column names of a delimited trajectory file. Optional columns fall back to
/// derived values when absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColumnMap {
    pub id: String,
    pub time: String,
    pub position: String,
    pub speed: String,
    pub lane: String,
    pub accel_lon: Option<String>,
    pub accel_lat: Option<String>,
    pub class: Option<String>,
    pub length: Option<String>,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            id: "track_id".into(),
            time: "time".into(),
            position: "position".into(),
            speed: "speed".into(),
            lane: "lane".into(),
            accel_lon: Some("lon_acc".into()),
            accel_lat: Some("lat_acc".into()),
            class: Some("type".into()),
            length: Some("length".into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrajectoryFormat {
    pub delimiter: char,
    pub columns: ColumnMap,
    /// Values of the class column that denote passenger cars.
    pub car_labels: Vec<String>,
    pub default_length: f64,
}

impl Default for TrajectoryFormat {
    fn default() -> Self {
        Self {
            delimiter: ',',
            columns: ColumnMap::default(),
            car_labels: vec!["car".into(), "Car".into()],
            default_length: DEFAULT_VEHICLE_LENGTH,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadReport {
    pub tracks: Vec<Track>,
    pub rows: usize,
    /// Rows skipped because a numeric field failed to parse.
    pub malformed_rows: usize,
}

struct Indices {
    id: usize,
    time: usize,
    position: usize,
    speed: usize,
    lane: usize,
    accel_lon: Option<usize>,
    accel_lat: Option<usize>,
    class: Option<usize>,
    length: Option<usize>,
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize, TrajectoryError> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| TrajectoryError::Schema(format!("missing required column `{name}`")))
}

fn optional_column(headers: &csv::StringRecord, name: &Option<String>) -> Option<usize> {
    name.as_ref()
        .and_then(|n| headers.iter().position(|h| h.trim() == n))
}

struct RawRow {
    time: f64,
    position: f64,
    speed: f64,
    lane: i64,
    accel_lon: Option<f64>,
    accel_lat: Option<f64>,
    class: VehicleClass,
    length: Option<f64>,
}

/// Reads a delimited multi-vehicle trajectory file into per-vehicle tracks.
///
/// Rows of one vehicle must appear with strictly increasing time. A required
/// value that is empty is a schema error; a value that does not parse as a
/// number marks the row as malformed and it is skipped.
pub fn load_trajectories(
    path: &Path,
    format: &TrajectoryFormat,
) -> Result<LoadReport, TrajectoryError> {
    if !path.exists() {
        return Err(TrajectoryError::NotFound(path.display().to_string()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(format.delimiter as u8)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| TrajectoryError::Schema(e.to_string()))?;
    let headers = reader
        .headers()
        .map_err(|e| TrajectoryError::Schema(e.to_string()))?
        .clone();
    let c = &format.columns;
    let idx = Indices {
        id: column(&headers, &c.id)?,
        time: column(&headers, &c.time)?,
        position: column(&headers, &c.position)?,
        speed: column(&headers, &c.speed)?,
        lane: column(&headers, &c.lane)?,
        accel_lon: optional_column(&headers, &c.accel_lon),
        accel_lat: optional_column(&headers, &c.accel_lat),
        class: optional_column(&headers, &c.class),
        length: optional_column(&headers, &c.length),
    };

    let mut by_vehicle: BTreeMap<i64, Vec<RawRow>> = BTreeMap::new();
    let mut rows = 0;
    let mut malformed = 0;
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| TrajectoryError::Schema(e.to_string()))?;
        rows += 1;
        let required = |i: usize, name: &str| -> Result<&str, TrajectoryError> {
            match record.get(i) {
                Some(v) if !v.is_empty() => Ok(v),
                _ => Err(TrajectoryError::Schema(format!(
                    "row {} has no value for required column `{name}`",
                    line + 2
                ))),
            }
        };
        let id_s = required(idx.id, &c.id)?;
        let time_s = required(idx.time, &c.time)?;
        let pos_s = required(idx.position, &c.position)?;
        let speed_s = required(idx.speed, &c.speed)?;
        let lane_s = required(idx.lane, &c.lane)?;
        let opt = |i: Option<usize>| i.and_then(|i| record.get(i)).filter(|v| !v.is_empty());

        let parsed = (|| -> Option<(i64, RawRow)> {
            let id = id_s.parse::<i64>().ok()?;
            let number = |s: &str| s.parse::<f64>().ok().filter(|x| x.is_finite());
            let row = RawRow {
                time: number(time_s)?,
                position: number(pos_s)?,
                speed: number(speed_s)?,
                lane: lane_s.parse::<i64>().ok()?,
                accel_lon: match opt(idx.accel_lon) {
                    Some(s) => Some(number(s)?),
                    None => None,
                },
                accel_lat: match opt(idx.accel_lat) {
                    Some(s) => Some(number(s)?),
                    None => None,
                },
                class: match opt(idx.class) {
                    Some(s) if format.car_labels.iter().any(|l| l == s) => VehicleClass::Car,
                    Some(_) => VehicleClass::Other,
                    None => VehicleClass::Car,
                },
                length: match opt(idx.length) {
                    Some(s) => Some(number(s)?),
                    None => None,
                },
            };
            (row.speed >= 0.0).then_some((id, row))
        })();
        match parsed {
            Some((id, row)) => by_vehicle.entry(id).or_default().push(row),
            None => malformed += 1,
        }
    }

    let mut tracks = Vec::with_capacity(by_vehicle.len());
    for (vehicle_id, raw) in by_vehicle {
        if let Some(w) = raw.windows(2).find(|w| !(w[1].time > w[0].time)) {
            return Err(TrajectoryError::Data {
                vehicle: vehicle_id,
                reason: format!("time not strictly increasing at t = {}", w[1].time),
            });
        }
        let needs_lon = raw.iter().any(|r| r.accel_lon.is_none());
        let derived_lon = if needs_lon {
            let dt = if raw.len() > 1 {
                (raw[raw.len() - 1].time - raw[0].time) / (raw.len() - 1) as f64
            } else {
                1.0
            };
            let speeds: Vec<f64> = raw.iter().map(|r| r.speed).collect();
            central_difference(&speeds, dt)
        } else {
            vec![]
        };
        let class = raw[0].class;
        let length = raw
            .iter()
            .find_map(|r| r.length)
            .filter(|l| *l > 0.0)
            .unwrap_or(format.default_length);
        let frames = raw
            .iter()
            .enumerate()
            .map(|(k, r)| TrajectoryFrame {
                time: r.time,
                position: r.position,
                speed: r.speed,
                accel_lon: r.accel_lon.unwrap_or_else(|| derived_lon[k]),
                accel_lat: r.accel_lat.unwrap_or(0.0),
                lane_id: r.lane,
                vehicle_id,
                vehicle_class: class,
            })
            .collect();
        tracks.push(Track {
            vehicle_id,
            class,
            length,
            frames,
        });
    }
    Ok(LoadReport {
        tracks,
        rows,
        malformed_rows: malformed,
    })
}
