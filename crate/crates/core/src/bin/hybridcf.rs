use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hybridcf::pipeline::{run, Command, PipelineConfig, PipelineError};

#[derive(Parser)]
#[command(name = "hybridcf", version, about = "Hybrid car-following calibration, learning and simulation")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
struct Common {
    /// TOML configuration; defaults apply when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write a synthetic trajectory file with known ground truth
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        drivers: Option<usize>,
    },
    /// Extract car-following episodes from a trajectory file
    Ingest {
        #[command(flatten)]
        common: Common,
        /// Trajectory file
        #[arg(long, env = "HYBRIDCF_DATA")]
        input: Option<PathBuf>,
    },
    /// Fixed and time-varying IDM calibration per driver
    Calibrate {
        #[command(flatten)]
        common: Common,
        #[arg(long, env = "HYBRIDCF_EPISODES")]
        episodes: Option<PathBuf>,
        /// Calibrate only the first N drivers and reserve the rest
        #[arg(long)]
        train_split: Option<usize>,
    },
    /// Train the neural process on calibrated drivers
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long, env = "HYBRIDCF_EPISODES")]
        episodes: Option<PathBuf>,
        #[arg(long, env = "HYBRIDCF_POSTERIORS")]
        posteriors: Option<PathBuf>,
    },
    /// Fit the aggressiveness index to style mapping
    Style {
        #[command(flatten)]
        common: Common,
        #[arg(long, env = "HYBRIDCF_EPISODES")]
        episodes: Option<PathBuf>,
        #[arg(long, env = "HYBRIDCF_POSTERIORS")]
        posteriors: Option<PathBuf>,
        #[arg(long, env = "HYBRIDCF_MODEL")]
        model: Option<PathBuf>,
    },
    /// Roll out a follower with an observed or synthesized style
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, env = "HYBRIDCF_EPISODES")]
        episodes: Option<PathBuf>,
        #[arg(long, env = "HYBRIDCF_POSTERIORS")]
        posteriors: Option<PathBuf>,
        #[arg(long, env = "HYBRIDCF_MODEL")]
        model: Option<PathBuf>,
        #[arg(long, env = "HYBRIDCF_MAPPING")]
        mapping: Option<PathBuf>,
        /// Replay this driver's style
        #[arg(long, conflicts_with = "index")]
        driver: Option<i64>,
        /// Synthesize a style from this aggressiveness index
        #[arg(long)]
        index: Option<f64>,
        /// Driver whose leader profile and initial state are used
        #[arg(long)]
        leader: Option<i64>,
    },
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn load(common: &Common) -> Result<PipelineConfig, PipelineError> {
    let cfg = match &common.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    Ok(cfg.with_seed(common.seed))
}

fn execute(cli: Cli) -> Result<String, PipelineError> {
    let (command, cfg, out) = match cli.command {
        Cmd::Synth { common, drivers } => {
            let mut cfg = load(&common)?;
            set(&mut cfg.synth.n_drivers, drivers);
            (Command::Synth, cfg, common.out)
        }
        Cmd::Ingest { common, input } => {
            let mut cfg = load(&common)?;
            set(&mut cfg.paths.data, input);
            (Command::Ingest, cfg, common.out)
        }
        Cmd::Calibrate { common, episodes, train_split } => {
            let mut cfg = load(&common)?;
            set(&mut cfg.paths.episodes, episodes);
            if train_split.is_some() {
                cfg.train_split = train_split;
            }
            (Command::Calibrate, cfg, common.out)
        }
        Cmd::Train { common, episodes, posteriors } => {
            let mut cfg = load(&common)?;
            set(&mut cfg.paths.episodes, episodes);
            set(&mut cfg.paths.posteriors, posteriors);
            (Command::Train, cfg, common.out)
        }
        Cmd::Style { common, episodes, posteriors, model } => {
            let mut cfg = load(&common)?;
            set(&mut cfg.paths.episodes, episodes);
            set(&mut cfg.paths.posteriors, posteriors);
            set(&mut cfg.paths.model, model);
            (Command::Style, cfg, common.out)
        }
        Cmd::Simulate { common, episodes, posteriors, model, mapping, driver, index, leader } => {
            let mut cfg = load(&common)?;
            set(&mut cfg.paths.episodes, episodes);
            set(&mut cfg.paths.posteriors, posteriors);
            set(&mut cfg.paths.model, model);
            set(&mut cfg.paths.mapping, mapping);
            if driver.is_some() || index.is_some() {
                cfg.simulate.driver = driver;
                cfg.simulate.index = index;
            }
            if leader.is_some() {
                cfg.simulate.leader = leader;
            }
            (Command::Simulate, cfg, common.out)
        }
    };
    run(command, &cfg, &out)
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
