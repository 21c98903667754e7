//! Trains the neural process on a few drivers and predicts held-out points.

use hybridcf::np::{train, write_model_file, PointSet, TrainConfig, ZMode};
use hybridcf::synthetic::{synthetic_population, PopulationConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let drivers = synthetic_population(&PopulationConfig { n_drivers: 6, ..Default::default() })?;
    // observed accelerations stand in for calibrated ones here
    let sets: Vec<PointSet> = drivers
        .iter()
        .map(|d| PointSet::from_episode(&d.episode, d.episode.frames.iter().map(|f| f.a_f).collect()))
        .collect();
    let (model, report) = train(&sets, &TrainConfig { epochs: 100, ..Default::default() })?;
    for e in report.epochs.iter().step_by(20) {
        println!("epoch {:>3}  loss {:>8.3}  kl {:.3}", e.epoch, e.total, e.kl);
    }

    let set = &sets[0];
    let context = set.range(0..800);
    let targets: Vec<_> = set.x[800..].to_vec();
    let pred = model.predict(&context, &targets, ZMode::Mean, None)?;
    let rmse = (pred.iter().zip(&set.y[800..]).map(|((m, _), y)| (m - y).powi(2)).sum::<f64>() / pred.len() as f64).sqrt();
    println!("held-out acceleration RMSE {rmse:.3} m/s²");
    println!("style of driver {}: {:?}", set.driver_id, model.encode_deterministic(&context)?.0);

    let dir = tempfile::tempdir()?;
    write_model_file(&dir.path().join("model.bin"), &model)?;
    Ok(())
}
