//! Reproduction harness: per repetition and sample size, tune every
//! algorithm on validation revenue, evaluate on a held-out test set and
//! aggregate normalized revenue.

mod config;
mod report;

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{anchor_revenues, cvx_surrogate_fit, no_feature_fit, ridge_fit, Anchors};
use crate::data::{generate, read_schema, read_table, schema_path_for, split_indices, AuctionDataset, FeatureEncoder, GenSpec, RawTable};
use crate::dc;
use crate::error::{Error, Result};
use crate::losses::{revenue, Alpha, Gamma};
use crate::model::Predictor;
use crate::optim::Regularization;

pub use self::config::{
    Algorithm, CvxSettings, DcSettings, ExperimentConfig, FitSettings, Grids, RegMode, Source,
};
pub use self::report::{emit_plot_data, read_results, write_results, Figure, ReserveRow, Timing};

/// Mean revenue of `predictor` over `data`.
pub fn evaluate_revenue(predictor: &Predictor, data: &AuctionDataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Empty("cannot evaluate revenue on an empty dataset"));
    }
    let mut total = 0.0;
    for r in data.records() {
        total += revenue(predictor.predict(&r.x)?, &r.b);
    }
    Ok(total / data.len() as f64)
}

/// Maps the no-reserve revenue to 0 and the highest-bid revenue to 1.
/// Returns `None` when the anchors coincide and the scale is undefined.
pub fn normalize(rev: f64, anchors: &Anchors) -> Option<f64> {
    let span = anchors.highest_bid - anchors.no_reserve;
    (span > 0.0 && rev.is_finite()).then(|| (rev - anchors.no_reserve) / span)
}

/// The grid point an algorithm was fitted with.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hyperparameters {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cap: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ridge_lambda: Option<f64>,
}

impl Hyperparameters {
    fn regularization(&self) -> Regularization {
        match (self.cap, self.lambda) {
            (Some(c), _) => Regularization::NormCap(c),
            (None, Some(l)) => Regularization::RidgePenalty(l),
            _ => Regularization::None,
        }
    }
}

fn reg_points(mode: RegMode, grids: &Grids) -> Vec<Hyperparameters> {
    match mode {
        RegMode::NormCap => grids
            .cap
            .iter()
            .map(|&c| Hyperparameters {
                cap: Some(c),
                ..Default::default()
            })
            .collect(),
        RegMode::RidgePenalty => grids
            .lambda
            .iter()
            .map(|&l| Hyperparameters {
                lambda: Some(l),
                ..Default::default()
            })
            .collect(),
    }
}

/// Grid points for `algorithm`, in search order.
pub fn grid_points(algorithm: Algorithm, settings: &FitSettings) -> Vec<Hyperparameters> {
    let g = &settings.grids;
    match algorithm {
        Algorithm::Dc => g
            .gamma
            .iter()
            .flat_map(|&gamma| {
                reg_points(settings.dc.regularization, g).into_iter().map(move |h| Hyperparameters {
                    gamma: Some(gamma),
                    ..h
                })
            })
            .collect(),
        Algorithm::Cvx => g
            .alpha
            .iter()
            .flat_map(|&alpha| {
                reg_points(settings.cvx.regularization, g).into_iter().map(move |h| Hyperparameters {
                    alpha: Some(alpha),
                    ..h
                })
            })
            .collect(),
        Algorithm::Ridge => g
            .ridge_lambda
            .iter()
            .map(|&l| Hyperparameters {
                ridge_lambda: Some(l),
                ..Default::default()
            })
            .collect(),
        // the empirical optimum has nothing to tune
        Algorithm::NoFeature => vec![Hyperparameters::default()],
    }
}

/// Fits one algorithm at one grid point.
pub fn fit(
    algorithm: Algorithm,
    hyper: &Hyperparameters,
    settings: &FitSettings,
    train: &AuctionDataset,
    seed: u64,
) -> Result<Predictor> {
    let missing = |name: &str| Error::Config(format!("{algorithm} fit needs `{name}`"));
    Ok(match algorithm {
        Algorithm::Dc => {
            let gamma = Gamma::new(hyper.gamma.ok_or_else(|| missing("gamma"))?)?;
            let cfg = settings.dc.config(gamma, hyper.regularization(), seed);
            dc::train(train, &cfg)?.model.into()
        }
        Algorithm::Cvx => {
            let alpha = Alpha::new(hyper.alpha.ok_or_else(|| missing("alpha"))?)?;
            let cfg = settings.cvx.config(alpha, hyper.regularization(), seed);
            cvx_surrogate_fit(train, &cfg)?.into()
        }
        Algorithm::Ridge => ridge_fit(train, hyper.ridge_lambda.ok_or_else(|| missing("ridge_lambda"))?)?.into(),
        Algorithm::NoFeature => Predictor::Constant {
            reserve: no_feature_fit(train, None)?,
        },
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tuned {
    pub hyper: Hyperparameters,
    pub predictor: Predictor,
    pub validation_revenue: f64,
}

/// Fits every grid point on `train` and keeps the one with the highest
/// revenue on `val`; ties go to the earliest grid point.
pub fn tune(
    algorithm: Algorithm,
    settings: &FitSettings,
    train: &AuctionDataset,
    val: &AuctionDataset,
    seed: u64,
) -> Result<Tuned> {
    tune_over(&grid_points(algorithm, settings), val, |h| fit(algorithm, h, settings, train, seed))
        .map_err(|e| Error::Experiment(format!("{algorithm}: {e}")))
}

/// Selection core of `tune`: validation revenue of each candidate's
/// predictor, first maximum wins. Failed candidates are skipped.
pub fn tune_over<F>(grid: &[Hyperparameters], val: &AuctionDataset, mut fit_one: F) -> Result<Tuned>
where
    F: FnMut(&Hyperparameters) -> Result<Predictor>,
{
    if grid.is_empty() {
        return Err(Error::Config("empty hyperparameter grid".into()));
    }
    let mut best: Option<Tuned> = None;
    let mut last_error = None;
    for hyper in grid {
        let predictor = match fit_one(hyper) {
            Ok(p) => p,
            Err(e) => {
                log::warn!("fit at {hyper:?} failed: {e}");
                last_error = Some(e);
                continue;
            }
        };
        let validation_revenue = evaluate_revenue(&predictor, val)?;
        if best.as_ref().is_none_or(|b| validation_revenue > b.validation_revenue) {
            best = Some(Tuned {
                hyper: *hyper,
                predictor,
                validation_revenue,
            });
        }
    }
    best.ok_or_else(|| {
        Error::Experiment(format!(
            "every grid point failed; last error: {}",
            last_error.map_or_else(String::new, |e| e.to_string())
        ))
    })
}

/// One algorithm's outcome on one (repetition, sample size) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub algorithm: Algorithm,
    pub sample_size: usize,
    pub repetition: usize,
    pub seed: u64,
    pub hyperparameters: Hyperparameters,
    pub validation_revenue: f64,
    pub test_revenue: f64,
    /// `None` when the test anchors coincide.
    pub normalized: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorRecord {
    pub sample_size: usize,
    pub repetition: usize,
    pub no_reserve: f64,
    pub highest_bid: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub sample_size: usize,
    pub repetition: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub algorithm: Option<Algorithm>,
    pub message: String,
}

/// Mean and sample standard deviation over repetitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub algorithm: String,
    pub sample_size: usize,
    pub count: usize,
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub revenue_mean: f64,
    pub revenue_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub summaries: Vec<Summary>,
    pub runs: Vec<RunRecord>,
    pub anchors: Vec<AnchorRecord>,
    pub failures: Vec<Failure>,
    #[serde(skip)]
    pub reserves: Vec<ReserveRow>,
    #[serde(skip)]
    pub timing: Timing,
}

impl ExperimentResult {
    pub fn summary(&self, algorithm: Algorithm, sample_size: usize) -> Option<&Summary> {
        self.summaries
            .iter()
            .find(|s| s.algorithm == algorithm.label() && s.sample_size == sample_size)
    }

    /// Normalized test revenues of one algorithm at one size, by repetition.
    pub fn normalized(&self, algorithm: Algorithm, sample_size: usize) -> Vec<f64> {
        self.runs
            .iter()
            .filter(|r| r.algorithm == algorithm && r.sample_size == sample_size)
            .filter_map(|r| r.normalized)
            .collect()
    }
}

pub(crate) fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Train, validation and test data for one cell.
struct Cell {
    train: AuctionDataset,
    val: AuctionDataset,
    test: AuctionDataset,
}

enum Loaded {
    Generated,
    Table(RawTable),
}

fn load_source(cfg: &ExperimentConfig) -> Result<Loaded> {
    match &cfg.source {
        Source::Generator { .. } => Ok(Loaded::Generated),
        Source::Csv { path, schema } => {
            let schema_path = schema.clone().unwrap_or_else(|| schema_path_for(path));
            let schema = read_schema(&schema_path)?;
            Ok(Loaded::Table(read_table(path, &schema)?))
        }
    }
}

/// Generated data: one stream per repetition, the test set first, then
/// nested training and validation prefixes shared across sample sizes.
fn generated_cells(cfg: &ExperimentConfig, rep: usize) -> Result<Vec<(usize, Cell)>> {
    let Source::Generator { kind, noise_std } = cfg.source else {
        unreachable!("called for generator sources only")
    };
    let max = *cfg.sample_sizes.iter().max().expect("validated");
    let all = generate(&GenSpec {
        kind,
        n: cfg.test_size + 2 * max,
        noise_std,
        seed: cfg.base_seed + rep as u64,
    })?;
    let range = |a: usize, b: usize| (a..b).collect::<Vec<_>>();
    let test = all.subset(&range(0, cfg.test_size))?;
    cfg.sample_sizes
        .iter()
        .map(|&m| {
            let start = cfg.test_size;
            Ok((
                m,
                Cell {
                    train: all.subset(&range(start, start + m))?,
                    val: all.subset(&range(start + max, start + max + m))?,
                    test: test.clone(),
                },
            ))
        })
        .collect()
}

/// File data: a fresh seeded split per cell, features standardized with
/// training-split statistics.
fn table_cell(table: &RawTable, cfg: &ExperimentConfig, m: usize, rep: usize) -> Result<Cell> {
    let n = table.len();
    if 2 * m >= n {
        return Err(Error::Experiment(format!(
            "sample size {m} leaves no test records in a file of {n}"
        )));
    }
    let test_n = cfg.test_size.min(n - 2 * m);
    let seed = cfg.base_seed + rep as u64;
    let parts = split_indices(n, &[m, m, test_n], seed)?;
    let encoder = FeatureEncoder::fit(table, &parts[0])?;
    Ok(Cell {
        train: table.to_dataset(&encoder, &parts[0])?,
        val: table.to_dataset(&encoder, &parts[1])?,
        test: table.to_dataset(&encoder, &parts[2])?,
    })
}

#[derive(Default)]
struct CellOutcome {
    runs: Vec<RunRecord>,
    anchors: Vec<AnchorRecord>,
    failures: Vec<Failure>,
    reserves: Vec<ReserveRow>,
    seconds: Vec<(Algorithm, usize, usize, f64)>,
}

fn run_cell(cfg: &ExperimentConfig, settings: &FitSettings, rep: usize, m: usize, cell: &Cell) -> CellOutcome {
    let mut out = CellOutcome::default();
    let seed = cfg.base_seed + rep as u64;
    let anchors = anchor_revenues(&cell.test);
    out.anchors.push(AnchorRecord {
        sample_size: m,
        repetition: rep,
        no_reserve: anchors.no_reserve,
        highest_bid: anchors.highest_bid,
    });
    let dump = rep == 0 && m == cfg.reserve_size();
    for &algorithm in &cfg.algorithms {
        let started = Instant::now();
        let outcome = tune(algorithm, settings, &cell.train, &cell.val, seed).and_then(|t| {
            let test_revenue = evaluate_revenue(&t.predictor, &cell.test)?;
            if dump {
                for (i, r) in cell.test.records().iter().enumerate() {
                    out.reserves.push(ReserveRow {
                        algorithm: algorithm.label().to_owned(),
                        record: i,
                        reserve_price: t.predictor.predict(&r.x)?,
                        b1: r.b.b1(),
                        b2: r.b.b2(),
                    });
                }
            }
            Ok(RunRecord {
                algorithm,
                sample_size: m,
                repetition: rep,
                seed,
                hyperparameters: t.hyper,
                validation_revenue: t.validation_revenue,
                test_revenue,
                normalized: normalize(test_revenue, &anchors),
            })
        });
        out.seconds.push((algorithm, m, rep, started.elapsed().as_secs_f64()));
        match outcome {
            Ok(run) => {
                log::info!("rep {rep} m {m} {algorithm}: normalized {:?}", run.normalized);
                out.runs.push(run);
            }
            Err(e) => out.failures.push(Failure {
                sample_size: m,
                repetition: rep,
                algorithm: Some(algorithm),
                message: e.to_string(),
            }),
        }
    }
    out
}

fn run_repetition(cfg: &ExperimentConfig, loaded: &Loaded, rep: usize) -> Vec<CellOutcome> {
    let settings = cfg.fit_settings();
    let fail = |m: usize, e: Error| CellOutcome {
        failures: vec![Failure {
            sample_size: m,
            repetition: rep,
            algorithm: None,
            message: e.to_string(),
        }],
        ..Default::default()
    };
    match loaded {
        Loaded::Generated => match generated_cells(cfg, rep) {
            Ok(cells) => cells.iter().map(|(m, c)| run_cell(cfg, &settings, rep, *m, c)).collect(),
            Err(e) => cfg
                .sample_sizes
                .iter()
                .map(|&m| fail(m, Error::Experiment(e.to_string())))
                .collect(),
        },
        Loaded::Table(table) => cfg
            .sample_sizes
            .iter()
            .map(|&m| match table_cell(table, cfg, m, rep) {
                Ok(c) => run_cell(cfg, &settings, rep, m, &c),
                Err(e) => fail(m, e),
            })
            .collect(),
    }
}

fn summarize(cfg: &ExperimentConfig, runs: &[RunRecord], anchors: &[AnchorRecord]) -> Vec<Summary> {
    let mut out = Vec::new();
    for &m in &cfg.sample_sizes {
        for &algorithm in &cfg.algorithms {
            let cell: Vec<&RunRecord> = runs
                .iter()
                .filter(|r| r.algorithm == algorithm && r.sample_size == m)
                .collect();
            if cell.is_empty() {
                continue;
            }
            let normalized: Vec<f64> = cell.iter().filter_map(|r| r.normalized).collect();
            let raw: Vec<f64> = cell.iter().map(|r| r.test_revenue).collect();
            let (mean, std) = mean_std(&normalized);
            let (revenue_mean, revenue_std) = mean_std(&raw);
            out.push(Summary {
                algorithm: algorithm.label().to_owned(),
                sample_size: m,
                count: cell.len(),
                mean: (!normalized.is_empty()).then_some(mean),
                std: (!normalized.is_empty()).then_some(std),
                revenue_mean,
                revenue_std,
            });
        }
        // the anchors as pseudo-algorithms, for raw-revenue plots
        let cell: Vec<&AnchorRecord> = anchors.iter().filter(|a| a.sample_size == m).collect();
        if !cell.is_empty() {
            for (label, values, norm) in [
                ("NR", cell.iter().map(|a| a.no_reserve).collect::<Vec<_>>(), 0.0),
                ("HB", cell.iter().map(|a| a.highest_bid).collect::<Vec<_>>(), 1.0),
            ] {
                let (revenue_mean, revenue_std) = mean_std(&values);
                out.push(Summary {
                    algorithm: label.to_owned(),
                    sample_size: m,
                    count: values.len(),
                    mean: Some(norm),
                    std: Some(0.0),
                    revenue_mean,
                    revenue_std,
                });
            }
        }
    }
    out
}

/// Runs the full protocol. Cells are independent, so running them in
/// parallel gives the same result as running them in order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let started = Instant::now();
    let loaded = load_source(cfg)?;
    let reps: Vec<usize> = (0..cfg.repetitions).collect();
    let outcomes: Vec<CellOutcome> = if cfg.parallel {
        reps.par_iter().flat_map_iter(|&rep| run_repetition(cfg, &loaded, rep)).collect()
    } else {
        reps.iter().flat_map(|&rep| run_repetition(cfg, &loaded, rep)).collect()
    };
    let mut result = ExperimentResult {
        config: cfg.clone(),
        summaries: Vec::new(),
        runs: Vec::new(),
        anchors: Vec::new(),
        failures: Vec::new(),
        reserves: Vec::new(),
        timing: Timing::default(),
    };
    for o in outcomes {
        result.runs.extend(o.runs);
        result.anchors.extend(o.anchors);
        result.failures.extend(o.failures);
        result.reserves.extend(o.reserves);
        result.timing.fits.extend(o.seconds.into_iter().map(Into::into));
    }
    let key = |r: &RunRecord| (r.sample_size, r.repetition, r.algorithm);
    result.runs.sort_by_key(key);
    result.anchors.sort_by_key(|a| (a.sample_size, a.repetition));
    result
        .failures
        .sort_by_key(|a| (a.sample_size, a.repetition, a.algorithm));
    result.summaries = summarize(cfg, &result.runs, &result.anchors);
    result.timing.total_seconds = started.elapsed().as_secs_f64();
    if result.runs.is_empty() {
        let first = result.failures.first().map_or(String::new(), |f| f.message.clone());
        return Err(Error::Experiment(format!("no run succeeded; first failure: {first}")));
    }
    Ok(result)
}

/// Runs and writes the result files into `out_dir`.
pub fn run_and_write(cfg: &ExperimentConfig, out_dir: &Path) -> Result<ExperimentResult> {
    let result = run_experiment(cfg)?;
    write_results(&result, out_dir)?;
    Ok(result)
}
