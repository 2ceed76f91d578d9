use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use reserve::baselines::anchor_revenues;
use reserve::data::{
    generate, read_schema, read_table, schema_path_for, write_csv, write_schema, AuctionDataset, FeatureEncoder,
    GenKind, GenSpec, RawTable,
};
use reserve::experiment::{
    emit_plot_data, evaluate_revenue, normalize, run_and_write, tune, Algorithm, ExperimentConfig, FitSettings,
    Hyperparameters,
};
use reserve::model::Predictor;
use reserve::{Error, Result};

#[derive(Parser)]
#[command(name = "reserve", version, about = "Learn reserve prices for second-price auctions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    GaussianSum,
    Lognormal,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset and its schema sidecar.
    Datagen {
        #[arg(long, value_enum)]
        kind: Kind,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Tune one algorithm on a train/validation pair and save the model.
    Fit {
        #[arg(long)]
        algo: Algorithm,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        val: PathBuf,
        /// JSON with `grids`, `dc` and `cvx` sections; defaults otherwise.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out_model: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Revenue of a saved model on a dataset.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Run the full repetition protocol and write result files.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the CSV table behind one figure.
    EmitPlot {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        figure: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// What `fit` writes and `eval` reads.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SavedModel {
    algorithm: Algorithm,
    hyperparameters: Hyperparameters,
    validation_revenue: f64,
    encoder: FeatureEncoder,
    predictor: Predictor,
}

fn load_table(path: &Path) -> Result<RawTable> {
    let schema = read_schema(&schema_path_for(path))?;
    read_table(path, &schema)
}

fn encode_all(table: &RawTable, encoder: &FeatureEncoder) -> Result<AuctionDataset> {
    let rows: Vec<usize> = (0..table.len()).collect();
    table.to_dataset(encoder, &rows)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Experiment(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::Experiment(format!("{}: {e}", path.display())))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Datagen {
            kind,
            n,
            noise,
            seed,
            out,
        } => {
            let kind = match kind {
                Kind::GaussianSum => GenKind::GaussianSum,
                Kind::Lognormal => GenKind::Lognormal,
            };
            let data = generate(&GenSpec {
                kind,
                n,
                noise_std: noise,
                seed,
            })?;
            let schema = write_csv(&data, &out)?;
            write_schema(&schema_path_for(&out), &schema)?;
            log::info!("wrote {n} records to {}", out.display());
        }
        Command::Fit {
            algo,
            train,
            val,
            config,
            out_model,
            seed,
        } => {
            let settings: FitSettings = match config {
                Some(p) => read_json(&p)?,
                None => FitSettings::default(),
            };
            settings.validate()?;
            let train_table = load_table(&train)?;
            let rows: Vec<usize> = (0..train_table.len()).collect();
            let encoder = FeatureEncoder::fit(&train_table, &rows)?;
            let train_data = train_table.to_dataset(&encoder, &rows)?;
            let val_data = encode_all(&load_table(&val)?, &encoder)?;
            let tuned = tune(algo, &settings, &train_data, &val_data, seed)?;
            log::info!("{algo}: chose {:?}, validation revenue {}", tuned.hyper, tuned.validation_revenue);
            write_json(
                &out_model,
                &SavedModel {
                    algorithm: algo,
                    hyperparameters: tuned.hyper,
                    validation_revenue: tuned.validation_revenue,
                    encoder,
                    predictor: tuned.predictor,
                },
            )?;
        }
        Command::Eval { model, data } => {
            let model: SavedModel = read_json(&model)?;
            let data = encode_all(&load_table(&data)?, &model.encoder)?;
            let revenue = evaluate_revenue(&model.predictor, &data)?;
            let anchors = anchor_revenues(&data);
            let report = serde_json::json!({
                "algorithm": model.algorithm,
                "records": data.len(),
                "revenue": revenue,
                "no_reserve": anchors.no_reserve,
                "highest_bid": anchors.highest_bid,
                "normalized": normalize(revenue, &anchors),
            });
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
        }
        Command::Experiment { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let result = run_and_write(&cfg, &out)?;
            for s in &result.summaries {
                log::info!("{} m={} mean={:?} std={:?}", s.algorithm, s.sample_size, s.mean, s.std);
            }
            if !result.failures.is_empty() {
                log::warn!("{} fits failed; see results.json", result.failures.len());
            }
        }
        Command::EmitPlot { results, figure, out } => {
            let path = emit_plot_data(&results, &figure, out.as_deref())?;
            println!("{}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
