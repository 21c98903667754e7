//! Fixed and time-varying calibration of one synthetic driver.

use hybridcf::calibration::{
    calibrate_fixed, calibrate_time_varying, time_varying_rmse, CalibConfig, FixedConfig, NoObserver,
};
use hybridcf::idm::{Mop, ParamBounds};
use hybridcf::synthetic::{synthetic_population, PopulationConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let driver = synthetic_population(&PopulationConfig {
        n_drivers: 1,
        modulation: 0.02,
        drift: 0.02,
        ..Default::default()
    })?
    .remove(0);
    let ep = &driver.episode;
    let bounds = ParamBounds::default();

    let fixed = calibrate_fixed(ep, &bounds, &FixedConfig::default())?;
    println!("truth  {:?}", driver.base);
    println!("fixed  {:?}  spacing RMSE {:.4} m", fixed.theta, fixed.rmse);

    // desk scale: fewer samples than the defaults, one-second steps
    let cfg = CalibConfig { n_samples: 500, max_iters: 50, stride: 25, eps: 0.001, ..Default::default() };
    let series = calibrate_time_varying(ep, &fixed.theta, &cfg, &bounds, 1, &mut NoObserver)?;
    println!(
        "time-varying: {} steps, {} fallbacks, spacing RMSE {:.4} m",
        series.len(),
        series.fallback_count(),
        time_varying_rmse(ep, &series, Mop::Spacing)
    );
    for (t, p) in series.times.iter().zip(&series.posteriors).step_by(8) {
        println!("  t {t:>5.1}  T {:.3}  a {:.3}", p.mean[1], p.mean[3]);
    }
    Ok(())
}
