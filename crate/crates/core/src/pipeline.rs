//! On-disk pipeline behind the `hybridcf` command-line tool.
//!
//! Every command reads a [`PipelineConfig`], writes its outputs into one
//! directory and echoes the fully resolved configuration there as
//! `config.toml`; running again with that file reproduces the outputs.
//!
//! | command | reads | writes |
//! |---|---|---|
//! | `synth` | | `trajectories.csv`, `ground_truth.csv` |
//! | `ingest` | `paths.data` | `episodes.csv`, `episode_*.txt`, `ingest_report.csv` |
//! | `calibrate` | `paths.episodes` | `posterior_*.txt`, `calibration_rmse.csv`, `split.csv` |
//! | `train` | `paths.episodes`, `paths.posteriors` | `model.bin`, `loss.csv` |
//! | `style` | the above and `paths.model` | `style_mapping.txt`, `drivers.csv`, `histograms.csv`, `diagnostics.csv` |
//! | `simulate` | `paths.episodes`, `paths.model`, `paths.mapping` | `frames.csv`, `metrics.csv` |

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibration::{
    calibrate_fixed, calibrate_time_varying, fixed_rmse, read_posteriors_file, time_varying_rmse,
    tv_accelerations, write_posteriors_file, CalibConfig, FixedConfig, NoObserver,
    ParamPosteriorSeries,
};
use crate::idm::ParamBounds;
use crate::np::{read_model_file, train, write_model_file, NpError, NpModel, PointSet, TrainConfig};
use crate::simulation::{
    simulate_with_style, summarize, SafetyConfig, SimOptions, StyleSource, DEFAULT_BINS,
};
use crate::stats::{shared_histograms, Histogram};
use crate::style::{
    aggressiveness_index, fit_mapping, read_mapping_file, style_from_index, write_mapping_file,
    DiffScaling, IndexConfig, StyleError,
};
use crate::synthetic::{synthetic_population, write_trajectory_file, PopulationConfig};
use crate::trajectory::{
    extract_cf_episodes, load_trajectories, read_episode_file, write_episode_file, CfEpisode,
    ExtractConfig, TrajectoryError, TrajectoryFormat,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("input not found: {0}")]
    NotFound(String),
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Failed(String),
    #[error("{0}")]
    TooFewDrivers(String),
    #[error("unknown driver {0}")]
    UnknownDriver(i64),
}

impl PipelineError {
    /// Process exit code: 2 bad or missing input, 3 computation failed,
    /// 4 too few drivers for a style fit, 5 unknown driver.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::NotFound(_) | PipelineError::Input(_) => 2,
            PipelineError::Failed(_) => 3,
            PipelineError::TooFewDrivers(_) => 4,
            PipelineError::UnknownDriver(_) => 5,
        }
    }
}

impl From<std::io::Error> for PipelineError {
    fn from(e: std::io::Error) -> Self {
        PipelineError::Input(format!("i/o error: {e}"))
    }
}

impl From<TrajectoryError> for PipelineError {
    fn from(e: TrajectoryError) -> Self {
        match e {
            TrajectoryError::NotFound(p) => PipelineError::NotFound(p),
            e => PipelineError::Input(e.to_string()),
        }
    }
}

impl From<NpError> for PipelineError {
    fn from(e: NpError) -> Self {
        match e {
            NpError::NonFinite { .. } => PipelineError::Failed(e.to_string()),
            e => PipelineError::Input(e.to_string()),
        }
    }
}

impl From<StyleError> for PipelineError {
    fn from(e: StyleError) -> Self {
        match e {
            StyleError::Degenerate(_) => PipelineError::Failed(e.to_string()),
            e => PipelineError::Input(e.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    /// Raw trajectory file read by `ingest`.
    pub data: PathBuf,
    /// Output directory of `ingest`.
    pub episodes: PathBuf,
    /// Output directory of `calibrate`.
    pub posteriors: PathBuf,
    pub model: PathBuf,
    pub mapping: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            data: "trajectories.csv".into(),
            episodes: "out/ingest".into(),
            posteriors: "out/calibrate".into(),
            model: "out/train/model.bin".into(),
            mapping: "out/style/style_mapping.txt".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulateConfig {
    /// Replay the style of this driver.
    pub driver: Option<i64>,
    /// Synthesize the style of this aggressiveness index.
    pub index: Option<f64>,
    /// Driver whose leader and initial state are used; defaults to `driver`.
    pub leader: Option<i64>,
    pub dt: f64,
    pub sample_z: bool,
    pub sample_accel: bool,
    pub bins: usize,
    /// Leading share of a replayed driver's points used as context.
    pub context_fraction: f64,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            driver: None,
            index: None,
            leader: None,
            dt: crate::trajectory::DEFAULT_DT,
            sample_z: false,
            sample_accel: false,
            bins: DEFAULT_BINS,
            context_fraction: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Root seed; every random stream of a command derives from it.
    pub seed: u64,
    /// Calibrate only the first `train_split` drivers (by id) and reserve
    /// the rest.
    pub train_split: Option<usize>,
    pub paths: Paths,
    pub format: TrajectoryFormat,
    pub extract: ExtractConfig,
    pub bounds: ParamBounds,
    pub fixed: FixedConfig,
    pub calib: CalibConfig,
    pub train: TrainConfig,
    /// Normalise parameter values by the bounds in the aggressiveness index.
    pub normalize_index: bool,
    pub safety: SafetyConfig,
    pub simulate: SimulateConfig,
    pub synth: PopulationConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            train_split: None,
            paths: Paths::default(),
            format: TrajectoryFormat::default(),
            extract: ExtractConfig::default(),
            bounds: ParamBounds::default(),
            fixed: FixedConfig::default(),
            calib: CalibConfig::default(),
            train: TrainConfig::default(),
            normalize_index: true,
            safety: SafetyConfig::default(),
            simulate: SimulateConfig::default(),
            synth: PopulationConfig::default(),
        }
    }
}

impl PipelineConfig {
    /// Reads a TOML file; a missing file is a [`PipelineError::NotFound`].
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        if !path.exists() {
            return Err(PipelineError::NotFound(path.display().to_string()));
        }
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| PipelineError::Input(format!("config {}: {e}", path.display())))
    }

    /// Sets the root seed and propagates it to the nested configurations.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.resolve_seeds();
        self
    }

    fn resolve_seeds(&mut self) {
        self.fixed.seed = self.seed;
        self.train.seed = self.seed;
        self.synth.seed = self.seed;
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serialises")
    }

    fn validate(&self) -> Result<(), PipelineError> {
        self.bounds
            .validate()
            .map_err(|e| PipelineError::Input(format!("bounds: {e}")))?;
        self.calib
            .validate()
            .map_err(|e| PipelineError::Input(format!("calib: {e}")))?;
        self.train
            .validate()
            .map_err(|e| PipelineError::Input(format!("train: {e}")))?;
        Ok(())
    }
}

/// Which stage to run; see the module table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Synth,
    Ingest,
    Calibrate,
    Train,
    Style,
    Simulate,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Synth => "synth",
            Command::Ingest => "ingest",
            Command::Calibrate => "calibrate",
            Command::Train => "train",
            Command::Style => "style",
            Command::Simulate => "simulate",
        }
    }
}

/// Runs `command` and returns a short human-readable summary.
pub fn run(command: Command, cfg: &PipelineConfig, out: &Path) -> Result<String, PipelineError> {
    let mut cfg = cfg.clone();
    cfg.resolve_seeds();
    cfg.validate()?;
    std::fs::create_dir_all(out)?;
    let summary = match command {
        Command::Synth => cmd_synth(&cfg, out)?,
        Command::Ingest => cmd_ingest(&cfg, out)?,
        Command::Calibrate => cmd_calibrate(&cfg, out)?,
        Command::Train => cmd_train(&cfg, out)?,
        Command::Style => cmd_style(&cfg, out)?,
        Command::Simulate => cmd_simulate(&cfg, out)?,
    };
    let echo = format!(
        "# resolved configuration of `hybridcf {}`\n{}",
        command.name(),
        cfg.to_toml()
    );
    std::fs::write(out.join("config.toml"), echo)?;
    Ok(summary)
}

fn require(path: &Path) -> Result<(), PipelineError> {
    if path.exists() {
        Ok(())
    } else {
        Err(PipelineError::NotFound(path.display().to_string()))
    }
}

/// Writes a synthetic population as a trajectory file plus its ground truth.
pub fn cmd_synth(cfg: &PipelineConfig, out: &Path) -> Result<String, PipelineError> {
    let drivers = synthetic_population(&cfg.synth)?;
    let episodes: Vec<CfEpisode> = drivers.iter().map(|d| d.episode.clone()).collect();
    write_trajectory_file(&out.join("trajectories.csv"), &episodes)?;
    let mut gt = String::from("driver_id,aggressiveness,v0,T,s0,a_max,b\n");
    for d in &drivers {
        let b = d.base;
        let _ = writeln!(
            gt,
            "{},{},{},{},{},{},{}",
            d.driver_id, d.aggressiveness, b.v0, b.t_headway, b.s0, b.a_max, b.b
        );
    }
    std::fs::write(out.join("ground_truth.csv"), gt)?;
    Ok(format!("{} synthetic drivers written", drivers.len()))
}

const EPISODE_INDEX: &str = "episodes.csv";

pub fn cmd_ingest(cfg: &PipelineConfig, out: &Path) -> Result<String, PipelineError> {
    require(&cfg.paths.data)?;
    let loaded = load_trajectories(&cfg.paths.data, &cfg.format)?;
    let extraction = extract_cf_episodes(&loaded.tracks, &cfg.extract);
    let mut index = String::from("file,follower_id,leader_id,frames,duration\n");
    for (i, ep) in extraction.episodes.iter().enumerate() {
        let name = format!("episode_{i:05}.txt");
        write_episode_file(&out.join(&name), ep)?;
        let _ = writeln!(
            index,
            "{name},{},{},{},{}",
            ep.follower_id,
            ep.leader_id,
            ep.len(),
            ep.duration()
        );
    }
    std::fs::write(out.join(EPISODE_INDEX), index)?;

    let mut report = String::from("key,value\n");
    let _ = writeln!(report, "raw_vehicles,{}", loaded.tracks.len());
    let _ = writeln!(report, "rows,{}", loaded.rows);
    let _ = writeln!(report, "malformed_rows,{}", loaded.malformed_rows);
    if let serde_json::Value::Object(m) = serde_json::to_value(&extraction.report).expect("report serialises") {
        for (k, v) in m {
            let _ = writeln!(report, "{k},{v}");
        }
    }
    std::fs::write(out.join("ingest_report.csv"), report)?;
    if extraction.episodes.is_empty() {
        eprintln!("warning: no car-following episodes found in {}", cfg.paths.data.display());
    }
    Ok(format!(
        "{} vehicles, {} episodes kept, {} malformed rows",
        loaded.tracks.len(),
        extraction.episodes.len(),
        loaded.malformed_rows
    ))
}

/// Every episode of a store written by `ingest`, in index order.
pub fn read_episode_store(dir: &Path) -> Result<Vec<CfEpisode>, PipelineError> {
    let index = dir.join(EPISODE_INDEX);
    require(&index)?;
    let mut rdr = csv::Reader::from_path(&index).map_err(|e| PipelineError::Input(e.to_string()))?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| PipelineError::Input(e.to_string()))?;
        out.push(read_episode_file(&dir.join(&rec[0]))?);
    }
    Ok(out)
}

/// One episode per driver, the longest (first on ties), ordered by driver id.
pub fn episodes_by_driver(episodes: &[CfEpisode]) -> BTreeMap<i64, CfEpisode> {
    let mut m: BTreeMap<i64, CfEpisode> = BTreeMap::new();
    for ep in episodes {
        match m.get(&ep.follower_id) {
            Some(e) if e.len() >= ep.len() => {}
            _ => {
                m.insert(ep.follower_id, ep.clone());
            }
        }
    }
    m
}

/// Result of calibrating one driver.
#[derive(Debug, Clone, PartialEq)]
pub struct DriverCalibration {
    pub series: ParamPosteriorSeries,
    pub fixed_rmse: f64,
    pub tv_rmse: f64,
}

/// Fixed and time-varying calibration of one episode with the pipeline's
/// configuration.
pub fn calibrate_driver(ep: &CfEpisode, cfg: &PipelineConfig) -> Result<DriverCalibration, String> {
    let fixed = calibrate_fixed(ep, &cfg.bounds, &cfg.fixed).map_err(|e| e.to_string())?;
    let series = calibrate_time_varying(ep, &fixed.theta, &cfg.calib, &cfg.bounds, cfg.seed, &mut NoObserver)
        .map_err(|e| e.to_string())?;
    Ok(DriverCalibration {
        fixed_rmse: fixed_rmse(ep, &fixed.theta, cfg.calib.mop),
        tv_rmse: time_varying_rmse(ep, &series, cfg.calib.mop),
        series,
    })
}

fn posterior_name(id: i64) -> String {
    format!("posterior_{id}.txt")
}

pub fn cmd_calibrate(cfg: &PipelineConfig, out: &Path) -> Result<String, PipelineError> {
    let drivers = episodes_by_driver(&read_episode_store(&cfg.paths.episodes)?);
    if drivers.is_empty() {
        return Err(PipelineError::Input(format!(
            "episode store {} is empty",
            cfg.paths.episodes.display()
        )));
    }
    let n_cal = cfg.train_split.unwrap_or(drivers.len()).min(drivers.len());
    let mut split = String::from("driver_id,role\n");
    for (i, id) in drivers.keys().enumerate() {
        let _ = writeln!(split, "{id},{}", if i < n_cal { "calibrated" } else { "reserved" });
    }
    std::fs::write(out.join("split.csv"), split)?;

    let selected: Vec<&CfEpisode> = drivers.values().take(n_cal).collect();
    let results: Vec<Result<DriverCalibration, String>> =
        selected.par_iter().map(|ep| calibrate_driver(ep, cfg)).collect();

    let mut table = String::from("driver_id,status,fixed_rmse,tv_rmse,steps,fallback_steps\n");
    let mut ok = 0;
    for (ep, res) in selected.iter().zip(&results) {
        match res {
            Ok(c) => {
                write_posteriors_file(&out.join(posterior_name(ep.follower_id)), &c.series)
                    .map_err(|e| PipelineError::Input(e.to_string()))?;
                let _ = writeln!(
                    table,
                    "{},ok,{},{},{},{}",
                    ep.follower_id,
                    c.fixed_rmse,
                    c.tv_rmse,
                    c.series.len(),
                    c.series.fallback_count()
                );
                ok += 1;
            }
            Err(e) => {
                eprintln!("driver {}: calibration failed: {e}", ep.follower_id);
                let _ = writeln!(table, "{},failed,,,,", ep.follower_id);
            }
        }
    }
    std::fs::write(out.join("calibration_rmse.csv"), table)?;
    if ok == 0 {
        return Err(PipelineError::Failed("calibration failed for every driver".into()));
    }
    Ok(format!(
        "{ok} of {n_cal} drivers calibrated, {} reserved",
        drivers.len() - n_cal
    ))
}

/// Posterior series found in a calibration output directory, by driver id.
pub fn read_posterior_store(dir: &Path) -> Result<BTreeMap<i64, ParamPosteriorSeries>, PipelineError> {
    require(dir)?;
    let mut out = BTreeMap::new();
    let mut names: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("posterior_") && n.ends_with(".txt"))
        })
        .collect();
    names.sort();
    for p in names {
        let s = read_posteriors_file(&p).map_err(|e| PipelineError::Input(format!("{}: {e}", p.display())))?;
        out.insert(s.driver_id, s);
    }
    Ok(out)
}

/// Training points of every calibrated driver: observed conditions with the
/// accelerations of the calibrated time-varying IDM.
pub fn training_sets(
    episodes: &BTreeMap<i64, CfEpisode>,
    posteriors: &BTreeMap<i64, ParamPosteriorSeries>,
) -> Vec<PointSet> {
    posteriors
        .iter()
        .filter_map(|(id, s)| {
            episodes
                .get(id)
                .map(|ep| PointSet::from_episode(ep, tv_accelerations(ep, s)))
        })
        .collect()
}

pub fn cmd_train(cfg: &PipelineConfig, out: &Path) -> Result<String, PipelineError> {
    let episodes = episodes_by_driver(&read_episode_store(&cfg.paths.episodes)?);
    let posteriors = read_posterior_store(&cfg.paths.posteriors)?;
    let sets = training_sets(&episodes, &posteriors);
    if sets.is_empty() {
        return Err(PipelineError::Input("no calibrated drivers to train on".into()));
    }
    let (model, report) = train(&sets, &cfg.train)?;
    write_model_file(&out.join("model.bin"), &model)?;
    let mut loss = String::from("epoch,lr,nll,kl,residual,total\n");
    for e in &report.epochs {
        let _ = writeln!(loss, "{},{},{},{},{},{}", e.epoch, e.lr, e.nll, e.kl, e.residual, e.total);
    }
    std::fs::write(out.join("loss.csv"), loss)?;
    let (first, last) = (report.epochs[0].total, report.epochs[report.epochs.len() - 1].total);
    Ok(format!(
        "trained on {} drivers for {} epochs, loss {first:.3} -> {last:.3}",
        sets.len(),
        report.epochs.len()
    ))
}

fn load_model(path: &Path) -> Result<NpModel, PipelineError> {
    require(path)?;
    Ok(read_model_file(path)?)
}

fn histogram_rows(out: &mut String, name: &str, h: &Histogram) {
    for (i, c) in h.counts.iter().enumerate() {
        let _ = writeln!(out, "{name},{},{},{c}", h.edges[i], h.edges[i + 1]);
    }
}

pub fn cmd_style(cfg: &PipelineConfig, out: &Path) -> Result<String, PipelineError> {
    let episodes = episodes_by_driver(&read_episode_store(&cfg.paths.episodes)?);
    let posteriors = read_posterior_store(&cfg.paths.posteriors)?;
    let model = load_model(&cfg.paths.model)?;
    let drivers: Vec<(&ParamPosteriorSeries, &CfEpisode)> = posteriors
        .iter()
        .filter_map(|(id, s)| episodes.get(id).map(|ep| (s, ep)))
        .collect();
    if drivers.len() < 3 {
        return Err(PipelineError::TooFewDrivers(format!(
            "style fit needs at least 3 calibrated drivers, found {}",
            drivers.len()
        )));
    }
    let index_cfg = IndexConfig {
        normalize: cfg.normalize_index,
        bounds: cfg.bounds,
    };
    let all: Vec<ParamPosteriorSeries> = drivers.iter().map(|(s, _)| (*s).clone()).collect();
    let scaling = DiffScaling::fit_series(&all);
    let mut h = Vec::with_capacity(drivers.len());
    let mut styles = Vec::with_capacity(drivers.len());
    for (s, ep) in &drivers {
        h.push(aggressiveness_index(s, &scaling, &index_cfg)?);
        let points = PointSet::from_episode(ep, tv_accelerations(ep, s));
        styles.push(model.encode_deterministic(&points)?);
    }
    let mapping = fit_mapping(&h, &styles, scaling, index_cfg)?;
    write_mapping_file(&out.join("style_mapping.txt"), &mapping)?;

    let reduced: Vec<f64> = styles.iter().map(|r| mapping.pca.project(r)).collect();
    let mut table = String::from("driver_id,H,r1,r2,r3,r4,r5,r_reduced,reconstruction_error\n");
    for (((s, _), hi), (r, rt)) in drivers.iter().zip(&h).zip(styles.iter().zip(&reduced)) {
        let err = style_from_index(*hi, &mapping).distance(r);
        let rs: Vec<String> = r.0.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(table, "{},{hi},{},{rt},{err}", s.driver_id, rs.join(","));
    }
    std::fs::write(out.join("drivers.csv"), table)?;

    let mut hist = String::from("series,lo,hi,count\n");
    histogram_rows(&mut hist, "H", &shared_histograms(&h, &[], cfg.simulate.bins).0);
    histogram_rows(&mut hist, "r_reduced", &shared_histograms(&reduced, &[], cfg.simulate.bins).0);
    std::fs::write(out.join("histograms.csv"), hist)?;

    let mut diag = String::from("key,value\n");
    for (k, v) in [
        ("n_drivers", mapping.n_drivers as f64),
        ("correlation", mapping.map.correlation),
        ("reconstruction_rmse", mapping.reconstruction_rmse),
        ("explained_variance", mapping.pca.explained),
        ("alpha", mapping.map.alpha),
        ("beta", mapping.map.beta),
    ] {
        let _ = writeln!(diag, "{k},{v}");
    }
    std::fs::write(out.join("diagnostics.csv"), diag)?;
    Ok(format!(
        "style mapping over {} drivers: correlation {:.3}, reconstruction RMSE {:.4}",
        mapping.n_drivers, mapping.map.correlation, mapping.reconstruction_rmse
    ))
}

pub fn cmd_simulate(cfg: &PipelineConfig, out: &Path) -> Result<String, PipelineError> {
    let sc = &cfg.simulate;
    let episodes = episodes_by_driver(&read_episode_store(&cfg.paths.episodes)?);
    let model = load_model(&cfg.paths.model)?;
    let leader_id = sc.leader.or(sc.driver).ok_or_else(|| {
        PipelineError::Input("simulate needs a driver, or a leader driver with an index".into())
    })?;
    let reference = episodes
        .get(&leader_id)
        .ok_or(PipelineError::UnknownDriver(leader_id))?;

    let (style, label) = match (sc.driver, sc.index) {
        (_, Some(h)) => {
            require(&cfg.paths.mapping)?;
            let mapping = read_mapping_file(&cfg.paths.mapping)?;
            (StyleSource::Synthesized(style_from_index(h, &mapping)), format!("index {h}"))
        }
        (Some(id), None) => {
            let ep = episodes.get(&id).ok_or(PipelineError::UnknownDriver(id))?;
            // calibrated accelerations when available, observed ones otherwise
            let y = match read_posterior_store(&cfg.paths.posteriors)
                .ok()
                .and_then(|m| m.get(&id).cloned())
            {
                Some(s) => tv_accelerations(ep, &s),
                None => ep.frames.iter().map(|f| f.a_f).collect(),
            };
            let points = PointSet::from_episode(ep, y);
            let n = ((points.len() as f64 * sc.context_fraction).round() as usize).clamp(1, points.len());
            (StyleSource::Observed(points.range(0..n)), format!("driver {id}"))
        }
        (None, None) => unreachable!("leader_id needs driver or index"),
    };
    let opts = SimOptions {
        dt: sc.dt,
        safety: cfg.safety,
        sample_z: sc.sample_z,
        sample_accel: sc.sample_accel,
        seed: cfg.seed,
        rollout: 0,
    };
    let result = simulate_with_style(
        &reference.leader_track(),
        reference.follower_state(0),
        &model,
        &style,
        &opts,
    )
    .map_err(|e| PipelineError::Input(e.to_string()))?;

    let mut frames = String::from("t,x,v,s,dv,a,override\n");
    let mut ov = result.override_steps.iter().peekable();
    for (k, f) in result.frames.iter().enumerate() {
        let o = ov.next_if_eq(&&k).is_some();
        let _ = writeln!(frames, "{},{},{},{},{},{},{}", f.t, f.x, f.v, f.s, f.dv, f.a, o as u8);
    }
    std::fs::write(out.join("frames.csv"), frames)?;
    let metrics = summarize(&result, Some(reference), sc.bins);
    std::fs::write(out.join("metrics.csv"), metrics.to_csv())?;
    let mean = |name: &str| metrics.get(name).map(|s| s.stats.mean).unwrap_or(f64::NAN);
    Ok(format!(
        "{label} behind the leader of driver {leader_id}: {} frames, mean spacing {:.2} m, mean speed {:.2} m/s, {} override steps{}",
        result.frames.len(),
        mean("spacing"),
        mean("speed"),
        result.override_steps.len(),
        if result.collided() { ", collision" } else { "" }
    ))
}
