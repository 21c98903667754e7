//! Posterior series files.
//!
//! ```text
//! # hybridcf-posteriors v1
//! driver_id=7
//! seed=42
//! theta_fix=24.1,1.6,2.2,1.9,1.8
//! config={"n_samples":5000,...}
//! fallback_steps=3,17
//! t,param,mean,var
//! 0,v0,24.3,0.95
//! ...
//! ```

use std::fmt::Write as _;
use std::path::Path;

use super::{CalibConfig, CalibError, GaussianParams, ParamPosteriorSeries};
use crate::idm::{IdmParams, PARAM_NAMES};

const MAGIC: &str = "# hybridcf-posteriors v1";
const COLUMNS: &str = "t,param,mean,var";

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

pub fn write_posteriors(series: &ParamPosteriorSeries) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC}");
    let _ = writeln!(out, "driver_id={}", series.driver_id);
    let _ = writeln!(out, "seed={}", series.seed);
    let _ = writeln!(out, "theta_fix={}", join(&series.theta_fix.to_array()));
    let cfg = serde_json::to_string(&series.config).expect("config serialises");
    let _ = writeln!(out, "config={cfg}");
    let fb: Vec<String> = series
        .fell_back
        .iter()
        .enumerate()
        .filter(|(_, b)| **b)
        .map(|(i, _)| i.to_string())
        .collect();
    let _ = writeln!(out, "fallback_steps={}", fb.join(","));
    let _ = writeln!(out, "{COLUMNS}");
    for (t, p) in series.times.iter().zip(&series.posteriors) {
        for (i, name) in PARAM_NAMES.iter().enumerate() {
            let _ = writeln!(out, "{t},{name},{},{}", p.mean[i], p.var[i]);
        }
    }
    out
}

fn header<'a>(line: Option<&'a str>, key: &str) -> Result<&'a str, CalibError> {
    line.and_then(|l| l.strip_prefix(key))
        .and_then(|l| l.strip_prefix('='))
        .ok_or_else(|| CalibError::Format(format!("missing `{key}`")))
}

fn num<T: std::str::FromStr>(s: &str, what: &str) -> Result<T, CalibError> {
    s.trim()
        .parse()
        .map_err(|_| CalibError::Format(format!("cannot parse {what} from `{s}`")))
}

pub fn read_posteriors(text: &str) -> Result<ParamPosteriorSeries, CalibError> {
    let mut lines = text.lines();
    if lines.next() != Some(MAGIC) {
        return Err(CalibError::Format("not a posterior file".into()));
    }
    let driver_id = num(header(lines.next(), "driver_id")?, "driver_id")?;
    let seed = num(header(lines.next(), "seed")?, "seed")?;
    let theta: Vec<f64> = header(lines.next(), "theta_fix")?
        .split(',')
        .map(|x| num(x, "theta_fix"))
        .collect::<Result<_, _>>()?;
    if theta.len() != 5 {
        return Err(CalibError::Format("theta_fix needs 5 values".into()));
    }
    let theta_fix = IdmParams::from_slice(&theta);
    let config: CalibConfig = serde_json::from_str(header(lines.next(), "config")?)
        .map_err(|e| CalibError::Format(format!("config: {e}")))?;
    let fb_line = header(lines.next(), "fallback_steps")?;
    let fallback: Vec<usize> = if fb_line.is_empty() {
        vec![]
    } else {
        fb_line
            .split(',')
            .map(|x| num(x, "fallback step"))
            .collect::<Result<_, _>>()?
    };
    if lines.next() != Some(COLUMNS) {
        return Err(CalibError::Format("column header mismatch".into()));
    }

    let rows: Vec<&str> = lines.filter(|l| !l.is_empty()).collect();
    if rows.len() % 5 != 0 {
        return Err(CalibError::Format(format!(
            "{} rows is not a whole number of steps",
            rows.len()
        )));
    }
    let mut times = Vec::with_capacity(rows.len() / 5);
    let mut posteriors = Vec::with_capacity(rows.len() / 5);
    for chunk in rows.chunks(5) {
        let mut g = GaussianParams::new([0.0; 5], [0.0; 5]);
        let mut t0 = None;
        for (i, row) in chunk.iter().enumerate() {
            let f: Vec<&str> = row.split(',').collect();
            if f.len() != 4 {
                return Err(CalibError::Format(format!("bad row `{row}`")));
            }
            if f[1] != PARAM_NAMES[i] {
                return Err(CalibError::Format(format!(
                    "expected parameter {}, found {}",
                    PARAM_NAMES[i], f[1]
                )));
            }
            let t: f64 = num(f[0], "t")?;
            if t0.is_some_and(|x: f64| x.to_bits() != t.to_bits()) {
                return Err(CalibError::Format(format!("inconsistent time in step at t={t}")));
            }
            t0 = Some(t);
            g.mean[i] = num(f[2], "mean")?;
            g.var[i] = num(f[3], "var")?;
        }
        times.push(t0.unwrap_or(0.0));
        posteriors.push(g);
    }
    let mut fell_back = vec![false; posteriors.len()];
    for i in fallback {
        *fell_back
            .get_mut(i)
            .ok_or_else(|| CalibError::Format(format!("fallback step {i} out of range")))? = true;
    }
    Ok(ParamPosteriorSeries {
        driver_id,
        seed,
        config,
        theta_fix,
        times,
        posteriors,
        fell_back,
    })
}

pub fn write_posteriors_file(path: &Path, series: &ParamPosteriorSeries) -> Result<(), CalibError> {
    std::fs::write(path, write_posteriors(series))?;
    Ok(())
}

pub fn read_posteriors_file(path: &Path) -> Result<ParamPosteriorSeries, CalibError> {
    read_posteriors(&std::fs::read_to_string(path)?)
}
