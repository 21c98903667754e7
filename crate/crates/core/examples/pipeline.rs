//! The whole on-disk pipeline in a temporary directory, as the command-line
//! tool runs it.

use hybridcf::pipeline::{run, Command, PipelineConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let root = dir.path();
    let mut cfg = PipelineConfig::default().with_seed(7);
    cfg.synth.n_drivers = 6;
    cfg.paths.data = root.join("synth/trajectories.csv");
    cfg.paths.episodes = root.join("ingest");
    cfg.paths.posteriors = root.join("calibrate");
    cfg.paths.model = root.join("train/model.bin");
    cfg.paths.mapping = root.join("style/style_mapping.txt");
    cfg.calib.n_samples = 200;
    cfg.calib.max_iters = 20;
    cfg.calib.stride = 25;
    cfg.train.epochs = 50;
    cfg.simulate.index = Some(5.0);
    cfg.simulate.leader = Some(1);

    for cmd in [Command::Synth, Command::Ingest, Command::Calibrate, Command::Train, Command::Style, Command::Simulate] {
        let summary = run(cmd, &cfg, &root.join(cmd.name()))?;
        println!("{:>9}: {summary}", cmd.name());
    }
    Ok(())
}
