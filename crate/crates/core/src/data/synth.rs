//! Synthetic bid generators.
//!
//! Randomness comes from ChaCha8 seeded with the dataset seed. Record `i`
//! draws from stream `i + 1` of that generator and dataset-level draws (the
//! lognormal weight vector) use stream 0, so any record can be produced
//! independently and parallel generation equals sequential generation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{AuctionDataset, AuctionRecord};
use crate::error::{Error, Result};
use crate::losses::BidPair;

/// Feature dimension of the synthetic tasks, offset included.
pub const SYNTH_DIM: usize = 21;

const LOGNORMAL_SCALE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenKind {
    GaussianSum,
    Lognormal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenSpec {
    pub kind: GenKind,
    pub n: usize,
    #[serde(default)]
    pub noise_std: f64,
    pub seed: u64,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn features(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut x: Vec<f64> = (0..SYNTH_DIM - 1).map(|_| StandardNormal.sample(rng)).collect();
    x.push(1.0);
    x
}

fn ordered(v1: f64, v2: f64) -> Result<BidPair> {
    BidPair::new(v1.max(v2).max(0.0), v1.min(v2).max(0.0))
}

fn check(spec: &GenSpec, kind: GenKind) -> Result<()> {
    if spec.kind != kind {
        return Err(Error::Param(format!("generator expects {kind:?}, spec has {:?}", spec.kind)));
    }
    if spec.n == 0 {
        return Err(Error::Param("generator needs n >= 1".into()));
    }
    if !(spec.noise_std >= 0.0) || !spec.noise_std.is_finite() {
        return Err(Error::Param(format!("noise_std must be >= 0, got {}", spec.noise_std)));
    }
    Ok(())
}

/// Bids built from the feature sum `s`: `|s| + e1` and `|s / 2 + e2|`, with
/// Gaussian noise of standard deviation `noise_std`.
pub fn gen_gaussian_sum(spec: &GenSpec) -> Result<AuctionDataset> {
    check(spec, GenKind::GaussianSum)?;
    let sigma = spec.noise_std;
    let records = (0..spec.n)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(spec.seed, i as u64 + 1);
            let x = features(&mut rng);
            let e1: f64 = StandardNormal.sample(&mut rng);
            let e2: f64 = StandardNormal.sample(&mut rng);
            let s: f64 = x.iter().sum();
            let v1 = s.abs() + sigma * e1;
            let v2 = (0.5 * s + sigma * e2).abs();
            Ok(AuctionRecord::new(x, ordered(v1, v2)?))
        })
        .collect::<Result<Vec<_>>>()?;
    AuctionDataset::new(records)
}

/// Bids drawn as two lognormals with log-space locations `x.w` and `x.w / 2`
/// and log-space scale 0.5, `w` standard normal and shared by the dataset.
pub fn gen_lognormal(spec: &GenSpec) -> Result<AuctionDataset> {
    check(spec, GenKind::Lognormal)?;
    let mut head = stream(spec.seed, 0);
    let w: Vec<f64> = (0..SYNTH_DIM).map(|_| StandardNormal.sample(&mut head)).collect();
    let records = (0..spec.n)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(spec.seed, i as u64 + 1);
            let x = features(&mut rng);
            let loc: f64 = x.iter().zip(&w).map(|(a, b)| a * b).sum();
            let (s1, s2) = lognormal_draws(loc, &mut rng);
            Ok(AuctionRecord::new(x, ordered(s1, s2)?))
        })
        .collect::<Result<Vec<_>>>()?;
    AuctionDataset::new(records)
}

fn lognormal_draws(loc: f64, rng: &mut ChaCha8Rng) -> (f64, f64) {
    let z1: f64 = StandardNormal.sample(rng);
    let z2: f64 = StandardNormal.sample(rng);
    (
        (loc + LOGNORMAL_SCALE * z1).exp(),
        (0.5 * loc + LOGNORMAL_SCALE * z2).exp(),
    )
}

pub fn generate(spec: &GenSpec) -> Result<AuctionDataset> {
    match spec.kind {
        GenKind::GaussianSum => gen_gaussian_sum(spec),
        GenKind::Lognormal => gen_lognormal(spec),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gauss(n: usize, noise_std: f64, seed: u64) -> GenSpec {
        GenSpec {
            kind: GenKind::GaussianSum,
            n,
            noise_std,
            seed,
        }
    }

    #[test]
    fn noiseless_bids_are_exactly_double() {
        let d = gen_gaussian_sum(&gauss(500, 0.0, 3)).unwrap();
        assert_eq!(d.dim(), 21);
        for r in d.records() {
            assert_eq!(*r.x.last().unwrap(), 1.0);
            let s: f64 = r.x.iter().sum();
            assert_eq!(r.b.b1(), s.abs());
            assert_eq!(r.b.b1(), 2.0 * r.b.b2());
        }
    }

    #[test]
    fn noisy_bids_are_valid() {
        let d = gen_gaussian_sum(&gauss(2000, 0.5, 4)).unwrap();
        assert!(d.records().iter().all(|r| r.b.b1() >= r.b.b2() && r.b.b2() >= 0.0));
        assert_eq!(d.max_bid(), d.records().iter().map(|r| r.b.b1()).fold(0.0, f64::max));
    }

    #[test]
    fn seeds_reproduce_and_prefixes_agree() {
        let a = gen_gaussian_sum(&gauss(50, 0.25, 9)).unwrap();
        let b = gen_gaussian_sum(&gauss(50, 0.25, 9)).unwrap();
        assert_eq!(a, b);
        let longer = gen_gaussian_sum(&gauss(80, 0.25, 9)).unwrap();
        assert_eq!(&longer.records()[..50], a.records());
        let other = gen_gaussian_sum(&gauss(50, 0.25, 10)).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn lognormal_bids_positive_and_reproducible() {
        let spec = GenSpec {
            kind: GenKind::Lognormal,
            n: 300,
            noise_std: 0.0,
            seed: 1,
        };
        let a = gen_lognormal(&spec).unwrap();
        assert!(a.records().iter().all(|r| r.b.b1() >= r.b.b2() && r.b.b2() > 0.0));
        assert_eq!(a, gen_lognormal(&spec).unwrap());
    }

    #[test]
    fn kind_mismatch_and_bad_specs() {
        let spec = gauss(10, 0.0, 1);
        assert!(gen_lognormal(&spec).is_err());
        assert!(gen_gaussian_sum(&gauss(0, 0.0, 1)).is_err());
        assert!(gen_gaussian_sum(&gauss(1, -1.0, 1)).is_err());
    }

    /// With `x` held fixed, the mean of `log s1` over many draws sits within
    /// three standard errors of `x.w`, and `log s2` near `x.w / 2`.
    #[test]
    fn lognormal_location_parameterization() {
        let mut head = stream(17, 0);
        let w: Vec<f64> = (0..SYNTH_DIM).map(|_| StandardNormal.sample(&mut head)).collect();
        let mut xr = stream(17, 1);
        let x = features(&mut xr);
        let loc: f64 = x.iter().zip(&w).map(|(a, b)| a * b).sum();
        let n = 100_000;
        let mut rng = stream(17, 999_999);
        let (mut sum1, mut sum2) = (0.0, 0.0);
        for _ in 0..n {
            let (s1, s2) = lognormal_draws(loc, &mut rng);
            sum1 += s1.ln();
            sum2 += s2.ln();
        }
        let se = 3.0 * 0.5 / (n as f64).sqrt();
        assert!((sum1 / n as f64 - loc).abs() < se);
        assert!((sum2 / n as f64 - 0.5 * loc).abs() < se);
    }
}
