use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::CvxConfig;
use crate::data::GenKind;
use crate::dc::DcConfig;
use crate::error::{Error, Result};
use crate::losses::{Alpha, Gamma};
use crate::optim::Regularization;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Dc,
    Cvx,
    Ridge,
    NoFeature,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Algorithm::Dc, Algorithm::Cvx, Algorithm::Ridge, Algorithm::NoFeature];

    /// Short label used in tables.
    pub fn label(self) -> &'static str {
        match self {
            Algorithm::Dc => "DC",
            Algorithm::Cvx => "CVX",
            Algorithm::Ridge => "Reg",
            Algorithm::NoFeature => "NF",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dc" => Ok(Algorithm::Dc),
            "cvx" => Ok(Algorithm::Cvx),
            "ridge" | "reg" => Ok(Algorithm::Ridge),
            "nofeat" | "no_feature" | "nf" => Ok(Algorithm::NoFeature),
            _ => Err(Error::Config(format!("unknown algorithm `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Source {
    Generator {
        kind: GenKind,
        #[serde(default)]
        noise_std: f64,
    },
    /// A CSV file; the schema defaults to the `.schema.json` sidecar.
    Csv {
        path: PathBuf,
        #[serde(default)]
        schema: Option<PathBuf>,
    },
}

fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.log10(), hi.log10());
    (0..n)
        .map(|i| {
            let e = a + (b - a) * i as f64 / (n - 1) as f64;
            // round to avoid 0.09999999 style grid values
            let v = 10f64.powf(e);
            let digits = 12 - v.log10().floor() as i32;
            let scale = 10f64.powi(digits);
            (v * scale).round() / scale
        })
        .collect()
}

/// Hyperparameter grids, searched in the declared order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Grids {
    pub gamma: Vec<f64>,
    pub alpha: Vec<f64>,
    /// Ridge penalties on the surrogate objectives (per-record mean scale).
    pub lambda: Vec<f64>,
    /// Norm caps on the weight vector.
    pub cap: Vec<f64>,
    pub ridge_lambda: Vec<f64>,
}

impl Default for Grids {
    fn default() -> Self {
        Self {
            gamma: vec![0.01, 0.02, 0.05, 0.1, 0.25, 0.5],
            alpha: vec![0.05, 0.1, 0.25, 0.5, 1.0],
            lambda: log_spaced(1e-4, 1e2, 7),
            cap: log_spaced(1e0, 1e6, 7),
            ridge_lambda: log_spaced(1e-4, 1e2, 7),
        }
    }
}

/// How the surrogate learners control the weight norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegMode {
    /// Searches the `cap` grid.
    NormCap,
    /// Searches the `lambda` grid.
    RidgePenalty,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DcSettings {
    pub regularization: RegMode,
    pub inner_budget: usize,
    pub inner_tol: f64,
    pub dca_max: usize,
    pub outer_max: usize,
    pub outer_tol: f64,
    pub step: f64,
    pub restarts: usize,
}

impl Default for DcSettings {
    fn default() -> Self {
        let d = DcConfig::new(Gamma::new(0.1).expect("valid"), Regularization::None);
        Self {
            regularization: RegMode::NormCap,
            inner_budget: d.inner_budget,
            inner_tol: d.inner_tol,
            dca_max: d.dca_max,
            outer_max: d.outer_max,
            outer_tol: d.outer_tol,
            step: d.step,
            restarts: d.restarts,
        }
    }
}

impl DcSettings {
    pub fn config(&self, gamma: Gamma, reg: Regularization, seed: u64) -> DcConfig {
        DcConfig {
            gamma,
            reg,
            inner_budget: self.inner_budget,
            inner_tol: self.inner_tol,
            dca_max: self.dca_max,
            outer_max: self.outer_max,
            outer_tol: self.outer_tol,
            step: self.step,
            seed,
            restarts: self.restarts,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvxSettings {
    pub regularization: RegMode,
    pub budget: usize,
    pub tol: f64,
    pub step: f64,
}

impl Default for CvxSettings {
    fn default() -> Self {
        let d = CvxConfig::new(Alpha::new(1.0).expect("valid"), Regularization::None);
        Self {
            regularization: RegMode::RidgePenalty,
            budget: d.budget,
            tol: d.tol,
            step: d.step,
        }
    }
}

impl CvxSettings {
    pub fn config(&self, alpha: Alpha, reg: Regularization, seed: u64) -> CvxConfig {
        CvxConfig {
            alpha,
            reg,
            budget: self.budget,
            tol: self.tol,
            step: self.step,
            seed,
        }
    }
}

/// Grids and solver settings; shared by `experiment` and single fits.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSettings {
    pub grids: Grids,
    pub dc: DcSettings,
    pub cvx: CvxSettings,
}

impl FitSettings {
    pub fn validate(&self) -> Result<()> {
        let g = &self.grids;
        for (name, grid) in [
            ("gamma", &g.gamma),
            ("alpha", &g.alpha),
            ("lambda", &g.lambda),
            ("cap", &g.cap),
            ("ridge_lambda", &g.ridge_lambda),
        ] {
            if grid.is_empty() {
                return Err(Error::Config(format!("grid `{name}` is empty")));
            }
        }
        for &v in &g.gamma {
            Gamma::new(v).map_err(|e| Error::Config(e.to_string()))?;
        }
        for &v in &g.alpha {
            Alpha::new(v).map_err(|e| Error::Config(e.to_string()))?;
        }
        for &v in &g.lambda {
            Regularization::RidgePenalty(v).validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        for &v in &g.ridge_lambda {
            Regularization::RidgePenalty(v).validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        for &v in &g.cap {
            Regularization::NormCap(v).validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        let probe = self.dc.config(Gamma::new(g.gamma[0]).expect("checked"), Regularization::None, 0);
        probe.validate().map_err(|e| Error::Config(e.to_string()))?;
        let cvx = self.cvx.config(Alpha::new(g.alpha[0]).expect("checked"), Regularization::None, 0);
        crate::optim::SubgradientConfig {
            budget: cvx.budget,
            tol: cvx.tol,
            step: cvx.step,
        }
        .validate()
        .map_err(|e| Error::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub source: Source,
    #[serde(default = "default_sizes")]
    pub sample_sizes: Vec<usize>,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default = "default_test_size")]
    pub test_size: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_algorithms")]
    pub algorithms: Vec<Algorithm>,
    #[serde(default)]
    pub grids: Grids,
    #[serde(default)]
    pub dc: DcSettings,
    #[serde(default)]
    pub cvx: CvxSettings,
    /// Sample size whose first repetition's test-set reserves are dumped;
    /// defaults to 800 when swept, else the largest size.
    #[serde(default)]
    pub reserve_sample_size: Option<usize>,
    /// Output directory; the command line may override it.
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default = "default_parallel")]
    pub parallel: bool,
}

fn default_sizes() -> Vec<usize> {
    vec![100, 200, 400, 800, 1600, 3200, 6400]
}

fn default_repetitions() -> usize {
    10
}

fn default_test_size() -> usize {
    5000
}

fn default_algorithms() -> Vec<Algorithm> {
    Algorithm::ALL.to_vec()
}

fn default_parallel() -> bool {
    true
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_json(&text)?;
        // relative CSV paths are taken relative to the config file
        if let Source::Csv { path: data, schema } = &mut cfg.source {
            let base = path.parent().unwrap_or(Path::new(""));
            if data.is_relative() {
                *data = base.join(&*data);
            }
            if let Some(s) = schema.as_mut().filter(|s| s.is_relative()) {
                *s = base.join(&*s);
            }
        }
        Ok(cfg)
    }

    pub fn fit_settings(&self) -> FitSettings {
        FitSettings {
            grids: self.grids.clone(),
            dc: self.dc,
            cvx: self.cvx,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_sizes.is_empty() || self.sample_sizes.contains(&0) {
            return Err(Error::Config("sample_sizes must be non-empty and positive".into()));
        }
        if self.repetitions == 0 {
            return Err(Error::Config("repetitions must be at least 1".into()));
        }
        if self.test_size == 0 {
            return Err(Error::Config("test_size must be positive".into()));
        }
        if self.algorithms.is_empty() {
            return Err(Error::Config("no algorithms selected".into()));
        }
        if let Source::Generator { noise_std, .. } = self.source {
            if !(noise_std >= 0.0) || !noise_std.is_finite() {
                return Err(Error::Config(format!("noise_std must be >= 0, got {noise_std}")));
            }
        }
        self.fit_settings().validate()
    }

    pub fn reserve_size(&self) -> usize {
        self.reserve_sample_size.unwrap_or_else(|| {
            if self.sample_sizes.contains(&800) {
                800
            } else {
                *self.sample_sizes.iter().max().expect("validated non-empty")
            }
        })
    }
}
