//! Episode record files.
//!
//! ```text
//! # hybridcf-episode v1
//! follower_id=2
//! leader_id=1
//! leader_length=4
//! dt=0.04
//! t,v_f,v_l,x_f,x_l,s,dv,a_f,a_lat_l,a_lon_l
//! 0,10,12,0,30,26,-2,0.1,0,0
//! ...
//! ```
//!
//! Floats are written in Rust's shortest round-trip form, so reading a file
//! back reproduces every field bit for bit.

use std::fmt::Write as _;
use std::path::Path;

use super::{CfEpisode, CfFrame, TrajectoryError};

const MAGIC: &str = "# hybridcf-episode v1";
const COLUMNS: &str = "t,v_f,v_l,x_f,x_l,s,dv,a_f,a_lat_l,a_lon_l";

pub fn write_episode(ep: &CfEpisode) -> String {
    let mut out = String::with_capacity(64 * (ep.frames.len() + 6));
    let _ = writeln!(out, "{MAGIC}");
    let _ = writeln!(out, "follower_id={}", ep.follower_id);
    let _ = writeln!(out, "leader_id={}", ep.leader_id);
    let _ = writeln!(out, "leader_length={}", ep.leader_length);
    let _ = writeln!(out, "dt={}", ep.dt);
    let _ = writeln!(out, "{COLUMNS}");
    for f in &ep.frames {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            f.t, f.v_f, f.v_l, f.x_f, f.x_l, f.s, f.dv, f.a_f, f.a_lat_l, f.a_lon_l
        );
    }
    out
}

fn header_value<'a>(line: Option<&'a str>, key: &str) -> Result<&'a str, TrajectoryError> {
    line.and_then(|l| l.strip_prefix(key))
        .and_then(|l| l.strip_prefix('='))
        .ok_or_else(|| TrajectoryError::Schema(format!("episode header missing `{key}`")))
}

fn parse<T: std::str::FromStr>(s: &str, what: &str) -> Result<T, TrajectoryError> {
    s.trim()
        .parse()
        .map_err(|_| TrajectoryError::Schema(format!("cannot parse {what} from `{s}`")))
}

pub fn read_episode(text: &str) -> Result<CfEpisode, TrajectoryError> {
    let mut lines = text.lines();
    if lines.next() != Some(MAGIC) {
        return Err(TrajectoryError::Schema("not an episode file".into()));
    }
    let follower_id = parse(header_value(lines.next(), "follower_id")?, "follower_id")?;
    let leader_id = parse(header_value(lines.next(), "leader_id")?, "leader_id")?;
    let leader_length = parse(header_value(lines.next(), "leader_length")?, "leader_length")?;
    let dt = parse(header_value(lines.next(), "dt")?, "dt")?;
    if lines.next() != Some(COLUMNS) {
        return Err(TrajectoryError::Schema("episode column header mismatch".into()));
    }
    let mut frames = Vec::new();
    for line in lines.filter(|l| !l.is_empty()) {
        let v: Vec<f64> = line
            .split(',')
            .map(|x| parse::<f64>(x, "frame value"))
            .collect::<Result<_, _>>()?;
        if v.len() != 10 {
            return Err(TrajectoryError::Schema(format!(
                "episode row has {} fields, expected 10",
                v.len()
            )));
        }
        frames.push(CfFrame {
            t: v[0],
            v_f: v[1],
            v_l: v[2],
            x_f: v[3],
            x_l: v[4],
            s: v[5],
            dv: v[6],
            a_f: v[7],
            a_lat_l: v[8],
            a_lon_l: v[9],
        });
    }
    Ok(CfEpisode {
        follower_id,
        leader_id,
        leader_length,
        dt,
        frames,
    })
}

pub fn write_episode_file(path: &Path, ep: &CfEpisode) -> Result<(), TrajectoryError> {
    std::fs::write(path, write_episode(ep))?;
    Ok(())
}

pub fn read_episode_file(path: &Path) -> Result<CfEpisode, TrajectoryError> {
    if !path.exists() {
        return Err(TrajectoryError::NotFound(path.display().to_string()));
    }
    read_episode(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn arb_frame() -> impl Strategy<Value = CfFrame> {
        proptest::array::uniform10(-1e4f64..1e4).prop_map(|v| CfFrame {
            t: v[0],
            v_f: v[1],
            v_l: v[2],
            x_f: v[3],
            x_l: v[4],
            s: v[5],
            dv: v[6],
            a_f: v[7],
            a_lat_l: v[8],
            a_lon_l: v[9],
        })
    }

    proptest! {
        #[test]
        fn round_trip_is_exact(frames in proptest::collection::vec(arb_frame(), 0..20),
                               len in 0.5f64..20.0, fid in any::<i64>()) {
            let ep = CfEpisode { follower_id: fid, leader_id: 3, leader_length: len, dt: 0.04, frames };
            let back = read_episode(&write_episode(&ep)).unwrap();
            prop_assert_eq!(back, ep);
        }
    }

    #[test]
    fn rejects_foreign_text() {
        assert!(read_episode("hello").is_err());
    }
}
