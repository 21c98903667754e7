//! Aggressiveness index of synthetic drivers and the index-to-style map.

use hybridcf::calibration::{calibrate_fixed, calibrate_time_varying, tv_accelerations, CalibConfig, FixedConfig, NoObserver};
use hybridcf::idm::ParamBounds;
use hybridcf::np::{train, PointSet, TrainConfig};
use hybridcf::style::{aggressiveness_index, fit_mapping, style_from_index, DiffScaling, IndexConfig};
use hybridcf::synthetic::{synthetic_population, PopulationConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let drivers = synthetic_population(&PopulationConfig { n_drivers: 6, ..Default::default() })?;
    let bounds = ParamBounds::default();
    let cfg = CalibConfig { n_samples: 200, max_iters: 20, stride: 25, eps: 0.001, ..Default::default() };
    let mut series = vec![];
    let mut sets = vec![];
    for d in &drivers {
        let fixed = calibrate_fixed(&d.episode, &bounds, &FixedConfig::default())?;
        let s = calibrate_time_varying(&d.episode, &fixed.theta, &cfg, &bounds, 1, &mut NoObserver)?;
        sets.push(PointSet::from_episode(&d.episode, tv_accelerations(&d.episode, &s)));
        series.push(s);
    }
    let scaling = DiffScaling::fit_series(&series);
    let index = IndexConfig::default();
    let h: Vec<f64> = series.iter().map(|s| aggressiveness_index(s, &scaling, &index)).collect::<Result<_, _>>()?;
    for (d, hi) in drivers.iter().zip(&h) {
        println!("driver {}  true aggressiveness {:.2}  H {hi:.3}", d.driver_id, d.aggressiveness);
    }

    let (model, _) = train(&sets, &TrainConfig { epochs: 100, ..Default::default() })?;
    let styles: Vec<_> = sets.iter().map(|s| model.encode_deterministic(s)).collect::<Result<_, _>>()?;
    let mapping = fit_mapping(&h, &styles, scaling, index)?;
    println!(
        "correlation {:.3}, explained variance {:.3}, reconstruction RMSE {:.4}",
        mapping.map.correlation, mapping.pca.explained, mapping.reconstruction_rmse
    );
    println!("style at H = 0: {:?}", style_from_index(0.0, &mapping).0);
    println!("style at H = 5: {:?}", style_from_index(5.0, &mapping).0);
    Ok(())
}
