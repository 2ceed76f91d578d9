//! Result files and plot tables.
//!
//! `results.json` holds everything that is a function of the configuration
//! and is byte-identical across runs; wall-clock measurements go to
//! `timing.json` alongside it.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{Algorithm, ExperimentResult};
use crate::error::{Error, Result};

pub const RESULTS_FILE: &str = "results.json";
pub const TIMING_FILE: &str = "timing.json";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const RUNS_FILE: &str = "runs.csv";
pub const RESERVES_FILE: &str = "reserves.csv";

/// Predicted reserve for one test record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReserveRow {
    pub algorithm: String,
    pub record: usize,
    pub reserve_price: f64,
    pub b1: f64,
    pub b2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitTime {
    pub algorithm: Algorithm,
    pub sample_size: usize,
    pub repetition: usize,
    pub seconds: f64,
}

impl From<(Algorithm, usize, usize, f64)> for FitTime {
    fn from((algorithm, sample_size, repetition, seconds): (Algorithm, usize, usize, f64)) -> Self {
        Self {
            algorithm,
            sample_size,
            repetition,
            seconds,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Timing {
    pub total_seconds: f64,
    /// Tuning plus test evaluation per cell and algorithm.
    pub fits: Vec<FitTime>,
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

pub fn write_results(result: &ExperimentResult, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let json = serde_json::to_string_pretty(result).map_err(|e| Error::Experiment(e.to_string()))?;
    write_file(&dir.join(RESULTS_FILE), &(json + "\n"))?;
    let timing = serde_json::to_string_pretty(&result.timing).map_err(|e| Error::Experiment(e.to_string()))?;
    write_file(&dir.join(TIMING_FILE), &(timing + "\n"))?;

    let mut s = String::from("algorithm,sample_size,count,mean,std,revenue_mean,revenue_std\n");
    for r in &result.summaries {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.algorithm,
            r.sample_size,
            r.count,
            fmt_opt(r.mean),
            fmt_opt(r.std),
            r.revenue_mean,
            r.revenue_std
        );
    }
    write_file(&dir.join(SUMMARY_FILE), &s)?;

    let mut s = String::from("algorithm,sample_size,repetition,seed,validation_revenue,test_revenue,normalized\n");
    for r in &result.runs {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.algorithm.label(),
            r.sample_size,
            r.repetition,
            r.seed,
            r.validation_revenue,
            r.test_revenue,
            fmt_opt(r.normalized)
        );
    }
    write_file(&dir.join(RUNS_FILE), &s)?;
    write_reserves(&result.reserves, &dir.join(RESERVES_FILE))
}

fn write_reserves(rows: &[ReserveRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Experiment(format!("{}: {e}", path.display())))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::Experiment(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn results_dir(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.to_path_buf()
    } else {
        path.parent().map_or_else(PathBuf::new, Path::to_path_buf)
    }
}

/// Loads a results directory (or its `results.json`), including the
/// reserve dump when present.
pub fn read_results(path: &Path) -> Result<ExperimentResult> {
    let dir = results_dir(path);
    let file = dir.join(RESULTS_FILE);
    let text = std::fs::read_to_string(&file).map_err(|e| Error::io(&file, e))?;
    let mut result: ExperimentResult =
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", file.display())))?;
    let reserves = dir.join(RESERVES_FILE);
    if reserves.exists() {
        let mut r = csv::Reader::from_path(&reserves).map_err(|e| Error::Config(format!("{}: {e}", reserves.display())))?;
        result.reserves = r
            .deserialize()
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Config(format!("{}: {e}", reserves.display())))?;
    }
    Ok(result)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Figure {
    /// Normalized revenue against sample size; one panel per data setting.
    Fig6a,
    Fig6b,
    Fig6c,
    Fig6d,
    /// Predicted reserve prices on the test set.
    Fig7a,
    /// Raw revenue, with the no-reserve and highest-bid anchors.
    Fig7b,
}

impl FromStr for Figure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "fig6a" => Figure::Fig6a,
            "fig6b" => Figure::Fig6b,
            "fig6c" => Figure::Fig6c,
            "fig6d" => Figure::Fig6d,
            "fig7a" => Figure::Fig7a,
            "fig7b" => Figure::Fig7b,
            _ => return Err(Error::Config(format!("unknown figure `{s}`"))),
        })
    }
}

impl Figure {
    pub fn name(self) -> &'static str {
        match self {
            Figure::Fig6a => "fig6a",
            Figure::Fig6b => "fig6b",
            Figure::Fig6c => "fig6c",
            Figure::Fig6d => "fig6d",
            Figure::Fig7a => "fig7a",
            Figure::Fig7b => "fig7b",
        }
    }
}

/// Renders the table for `figure` as CSV text.
pub fn plot_table(result: &ExperimentResult, figure: Figure) -> Result<String> {
    let algorithms: Vec<&str> = result.config.algorithms.iter().map(|a| a.label()).collect();
    let mut s = String::new();
    match figure {
        Figure::Fig6a | Figure::Fig6b | Figure::Fig6c | Figure::Fig6d => {
            s.push_str("algorithm,sample_size,mean,std\n");
            for r in result.summaries.iter().filter(|r| algorithms.contains(&r.algorithm.as_str())) {
                let _ = writeln!(s, "{},{},{},{}", r.algorithm, r.sample_size, fmt_opt(r.mean), fmt_opt(r.std));
            }
        }
        Figure::Fig7a => {
            if result.reserves.is_empty() {
                return Err(Error::Config("results carry no reserve dump".into()));
            }
            s.push_str("algorithm,reserve_price\n");
            for r in &result.reserves {
                let _ = writeln!(s, "{},{}", r.algorithm, r.reserve_price);
            }
        }
        Figure::Fig7b => {
            s.push_str("algorithm,sample_size,mean,std\n");
            for r in &result.summaries {
                let _ = writeln!(s, "{},{},{},{}", r.algorithm, r.sample_size, r.revenue_mean, r.revenue_std);
            }
        }
    }
    Ok(s)
}

/// Writes `<figure>.csv` (or `out`) next to the results and returns its path.
pub fn emit_plot_data(results: &Path, figure: &str, out: Option<&Path>) -> Result<PathBuf> {
    let figure: Figure = figure.parse()?;
    let result = read_results(results)?;
    let table = plot_table(&result, figure)?;
    let path = out.map_or_else(|| results_dir(results).join(format!("{}.csv", figure.name())), Path::to_path_buf);
    write_file(&path, &table)?;
    Ok(path)
}
