use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use reserve::baselines::anchor_revenues;
use reserve::data::{generate, GenKind, GenSpec};
use reserve::experiment::{
    evaluate_revenue, normalize, read_results, run_and_write, run_experiment, Algorithm, ExperimentConfig,
};
use reserve::model::Predictor;

/// A marketplace-style log: categorical seller, continuous rating, repeated
/// items and only the second bid, so the highest bid must be imputed.
fn write_market_csv(path: &std::path::Path, n: usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut text = String::from("seller,rating,item,price,comment\n");
    for i in 0..n {
        let seller = ["ann", "bo", "cy"][rng.gen_range(0..3)];
        let rating: f64 = rng.gen_range(1.0..5.0);
        let item = i % (n / 3);
        let base = 2.0 + item as f64 % 7.0 + if seller == "cy" { 3.0 } else { 0.0 };
        let price = base * rating / 3.0 * rng.gen_range(0.5..1.5);
        let _ = writeln!(text, "{seller},{rating},item{item},{price},free text");
    }
    std::fs::write(path, text).unwrap();
    std::fs::write(
        path.with_extension("schema.json"),
        r#"{"seller": "categorical", "rating": "continuous", "item": "item_id", "price": "bid2"}"#,
    )
    .unwrap();
}

#[test]
fn csv_experiment_with_imputed_bids() {
    let dir = tempfile::tempdir().unwrap();
    write_market_csv(&dir.path().join("market.csv"), 600);
    let config = dir.path().join("config.json");
    std::fs::write(
        &config,
        r#"{"source": {"type": "csv", "path": "market.csv"}, "sample_sizes": [60, 120], "repetitions": 3,
            "test_size": 300, "algorithms": ["dc", "cvx", "no_feature"],
            "grids": {"gamma": [0.05, 0.2], "alpha": [0.5], "cap": [10.0, 100.0], "lambda": [1e-3]},
            "dc": {"outer_max": 3, "inner_budget": 200}, "cvx": {"budget": 200}}"#,
    )
    .unwrap();
    let mut cfg = ExperimentConfig::load(&config).unwrap();
    let out = dir.path().join("out");
    let result = run_and_write(&cfg, &out).unwrap();
    assert!(result.failures.is_empty(), "{:?}", result.failures);
    assert_eq!(result.runs.len(), 3 * 2 * 3);
    assert!(result.runs.iter().all(|r| r.normalized.is_some_and(f64::is_finite)));
    // the seller is informative, so features help
    let dc = result.summary(Algorithm::Dc, 120).unwrap().mean.unwrap();
    let nf = result.summary(Algorithm::NoFeature, 120).unwrap().mean.unwrap();
    assert!(dc > nf, "DC {dc} vs NF {nf}");

    let back = read_results(&out).unwrap();
    assert_eq!(back.runs, result.runs);
    assert_eq!(back.summaries, result.summaries);

    cfg.parallel = false;
    let sequential = run_experiment(&cfg).unwrap();
    assert_eq!(sequential.runs, result.runs);
    assert_eq!(sequential.summaries, result.summaries);
    assert_eq!(sequential.reserves, result.reserves);
}

#[test]
fn anchors_normalize_to_zero_and_one() {
    for (kind, seed) in [(GenKind::GaussianSum, 1), (GenKind::Lognormal, 2), (GenKind::GaussianSum, 3)] {
        let data = generate(&GenSpec {
            kind,
            n: 500,
            noise_std: 0.3,
            seed,
        })
        .unwrap();
        let anchors = anchor_revenues(&data);
        assert_eq!(normalize(anchors.highest_bid, &anchors), Some(1.0));
        assert_eq!(normalize(anchors.no_reserve, &anchors), Some(0.0));
        let none = evaluate_revenue(&Predictor::Constant { reserve: 0.0 }, &data).unwrap();
        assert_eq!(normalize(none, &anchors), Some(0.0));
    }
}

#[test]
fn config_errors_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    for bad in [
        r#"{"source": {"type": "generator", "kind": "gaussian_sum"}, "repetitions": 0}"#,
        r#"{"source": {"type": "generator", "kind": "gaussian_sum"}, "grids": {"cap": []}}"#,
        r#"{"source": {"type": "generator", "kind": "gaussian_sum"}, "unknown": 1}"#,
        r#"{"source": {"type": "parquet", "path": "x"}}"#,
    ] {
        std::fs::write(&config, bad).unwrap();
        let err = ExperimentConfig::load(&config).and_then(|c| run_experiment(&c).map(|_| ()));
        assert_eq!(err.unwrap_err().exit_code(), 2, "{bad}");
    }
}
