//! Writes a synthetic trajectory file, loads it back and extracts
//! car-following episodes.

use hybridcf::synthetic::{synthetic_population, write_trajectory_file, PopulationConfig};
use hybridcf::trajectory::{extract_cf_episodes, load_trajectories, ExtractConfig, TrajectoryFormat};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("trajectories.csv");
    let drivers = synthetic_population(&PopulationConfig { n_drivers: 4, ..Default::default() })?;
    let episodes: Vec<_> = drivers.into_iter().map(|d| d.episode).collect();
    write_trajectory_file(&path, &episodes)?;

    let loaded = load_trajectories(&path, &TrajectoryFormat::default())?;
    let extraction = extract_cf_episodes(&loaded.tracks, &ExtractConfig::default());
    println!("{} vehicles, {} rows, {} malformed", loaded.tracks.len(), loaded.rows, loaded.malformed_rows);
    for ep in &extraction.episodes {
        println!(
            "follower {} behind {}: {} frames, mean spacing {:.1} m",
            ep.follower_id,
            ep.leader_id,
            ep.len(),
            ep.spacing().iter().sum::<f64>() / ep.len() as f64
        );
    }
    println!("{:?}", extraction.report);
    Ok(())
}
