//! Rolls out an observed style and two synthesized ones behind the same
//! leader and compares spacing, speed and TTC.

use hybridcf::np::{train, PointSet, StyleVector, TrainConfig};
use hybridcf::simulation::{mean_positive_ttc, simulate_with_style, summarize, SimOptions, StyleSource, DEFAULT_BINS};
use hybridcf::synthetic::{synthetic_population, PopulationConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let drivers = synthetic_population(&PopulationConfig { n_drivers: 6, ..Default::default() })?;
    let sets: Vec<PointSet> = drivers
        .iter()
        .map(|d| PointSet::from_episode(&d.episode, d.episode.frames.iter().map(|f| f.a_f).collect()))
        .collect();
    let (model, _) = train(&sets, &TrainConfig { epochs: 100, ..Default::default() })?;

    let ep = &drivers[0].episode;
    let observed = model.encode_deterministic(&sets[0])?;
    // push the style a unit along the line between the calmest and boldest driver
    let (calm, bold) = (model.encode_deterministic(&sets[5])?, model.encode_deterministic(&sets[4])?);
    let shift = |k: f64| StyleVector(std::array::from_fn(|j| observed.0[j] + k * (bold.0[j] - calm.0[j])));

    for (name, style) in [
        ("observed", StyleSource::Observed(sets[0].clone())),
        ("calmer", StyleSource::Synthesized(shift(-1.0))),
        ("bolder", StyleSource::Synthesized(shift(1.0))),
    ] {
        let res = simulate_with_style(&ep.leader_track(), ep.follower_state(0), &model, &style, &SimOptions::default())?;
        let rep = summarize(&res, Some(ep), DEFAULT_BINS);
        let m = |s: &str| rep.get(s).map(|r| r.stats.mean).unwrap_or(f64::NAN);
        println!(
            "{name:>8}: spacing {:.2} m, speed {:.2} m/s, mean positive TTC {:.1} s, overrides {}, spacing TV distance {:.3}",
            m("spacing"),
            m("speed"),
            mean_positive_ttc(&res).unwrap_or(f64::NAN),
            rep.override_count,
            rep.get("spacing").and_then(|r| r.tv_distance).unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
