//! IDM accelerations and a closed-loop follower behind an oscillating leader.

use hybridcf::idm::{equilibrium_spacing, idm_acceleration, simulate_follower, IdmParams, KinematicState};
use hybridcf::trajectory::{LeaderFrame, LeaderTrack, TrafficCondition};

fn main() {
    let theta = IdmParams::new(15.0, 1.5, 2.0, 1.2, 2.0);
    for v in [5.0, 10.0] {
        let s = equilibrium_spacing(&theta, v);
        let cond = TrafficCondition { dv: 0.0, v, s, v_lead: v, a_lat_lead: 0.0, a_lon_lead: 0.0 };
        println!("v {v}: equilibrium gap {s:.2} m, acceleration there {:.2e}", idm_acceleration(&theta, &cond).unwrap());
    }

    let dt = 0.04;
    let mut x = 40.0;
    let frames = (0..1500)
        .map(|k| {
            let t = k as f64 * dt;
            let v = 9.0 + 2.0 * (t / 4.0).sin();
            let f = LeaderFrame { t, x, v, a_lat: 0.0, a_lon: 0.5 * (t / 4.0).cos() };
            x += v * dt;
            f
        })
        .collect();
    let leader = LeaderTrack { length: 4.0, frames };
    let rollout = simulate_follower(
        &leader,
        KinematicState { x: 0.0, v: 9.0 },
        |_, c| idm_acceleration(&theta, c).unwrap_or(-9.0),
        dt,
    );
    let s = rollout.spacing();
    println!(
        "{} frames, spacing {:.1}..{:.1} m, collided {}",
        s.len(),
        s.iter().cloned().fold(f64::INFINITY, f64::min),
        s.iter().cloned().fold(0.0, f64::max),
        rollout.collided()
    );
}
