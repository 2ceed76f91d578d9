//! Auction datasets: in-memory representation, synthetic generators, CSV
//! ingestion and seeded splitting.

mod csv;
mod synth;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::BidPair;

pub use self::csv::{
    load_csv, read_schema, read_table, schema_path_for, write_csv, write_schema, ColumnEncoding,
    ColumnKind, FeatureEncoder, RawTable, Schema,
};
pub use self::synth::{gen_gaussian_sum, gen_lognormal, generate, GenKind, GenSpec, SYNTH_DIM};

/// One logged auction: features (ending with the constant offset 1) and the
/// two highest bids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuctionRecord {
    pub x: Vec<f64>,
    pub b: BidPair,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub item_id: Option<String>,
}

impl AuctionRecord {
    pub fn new(x: Vec<f64>, b: BidPair) -> Self {
        Self { x, b, item_id: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuctionDataset {
    records: Vec<AuctionRecord>,
    dim: usize,
    max_bid: f64,
}

impl AuctionDataset {
    /// Validates that all records share one dimension and end with the
    /// offset coordinate 1.
    pub fn new(records: Vec<AuctionRecord>) -> Result<Self> {
        let Some(first) = records.first() else {
            return Err(Error::Empty("dataset has no records"));
        };
        let dim = first.x.len();
        if dim == 0 {
            return Err(Error::Param("feature vectors must contain the offset".into()));
        }
        for r in &records {
            if r.x.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: r.x.len(),
                });
            }
            if r.x[dim - 1] != 1.0 {
                return Err(Error::Param("last feature must be the offset 1".into()));
            }
            if r.x.iter().any(|v| !v.is_finite()) {
                return Err(Error::Param("non-finite feature value".into()));
            }
        }
        let max_bid = records.iter().map(|r| r.b.b1()).fold(0.0, f64::max);
        Ok(Self {
            records,
            dim,
            max_bid,
        })
    }

    pub fn records(&self) -> &[AuctionRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Largest highest bid, `M`.
    pub fn max_bid(&self) -> f64 {
        self.max_bid
    }

    pub fn bids(&self) -> Vec<BidPair> {
        self.records.iter().map(|r| r.b).collect()
    }

    pub fn check_dim(&self, dim: usize) -> Result<()> {
        if dim == self.dim {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: self.dim,
                got: dim,
            })
        }
    }

    /// Records at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let records = indices
            .iter()
            .map(|&i| {
                self.records
                    .get(i)
                    .cloned()
                    .ok_or_else(|| Error::Param(format!("record index {i} out of range")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(records)
    }

    /// Multiplies every bid by `bid_factor` and every non-offset feature by
    /// `feature_factor`.
    pub fn rescaled(&self, bid_factor: f64, feature_factor: f64) -> Result<Self> {
        let records = self
            .records
            .iter()
            .map(|r| {
                let mut x: Vec<f64> = r.x.iter().map(|v| v * feature_factor).collect();
                *x.last_mut().expect("non-empty") = 1.0;
                Ok(AuctionRecord {
                    x,
                    b: r.b.scaled(bid_factor)?,
                    item_id: r.item_id.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(records)
    }
}

/// Replaces each record's highest bid by `max(mean price of its item, b2)`,
/// where the observed sale price is carried in `b2`. Every record must have
/// an item id.
pub fn impute_highest_bid(records: Vec<AuctionRecord>) -> Result<AuctionDataset> {
    let mut totals: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
    for r in &records {
        let id = r
            .item_id
            .as_deref()
            .ok_or_else(|| Error::Param("imputation requires an item id on every record".into()))?;
        let entry = totals.entry(id).or_insert((0.0, 0));
        entry.0 += r.b.b2();
        entry.1 += 1;
    }
    let means: BTreeMap<String, f64> = totals
        .into_iter()
        .map(|(id, (sum, n))| (id.to_owned(), sum / n as f64))
        .collect();
    let imputed = records
        .into_iter()
        .map(|mut r| {
            let price = r.b.b2();
            let mean = means[r.item_id.as_deref().expect("checked above")];
            r.b = BidPair::new(mean.max(price), price)?;
            Ok(r)
        })
        .collect::<Result<Vec<_>>>()?;
    AuctionDataset::new(imputed)
}

/// Disjoint uniform samples without replacement of the requested sizes.
pub fn split_indices(total: usize, sizes: &[usize], seed: u64) -> Result<Vec<Vec<usize>>> {
    let needed: usize = sizes.iter().sum();
    if needed > total {
        return Err(Error::Param(format!(
            "split needs {needed} records but only {total} are available"
        )));
    }
    let mut idx: Vec<usize> = (0..total).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut out = Vec::with_capacity(sizes.len());
    let mut start = 0;
    for &n in sizes {
        out.push(idx[start..start + n].to_vec());
        start += n;
    }
    Ok(out)
}

/// Splits into train, validation and test sets.
pub fn split(
    data: &AuctionDataset,
    train_n: usize,
    val_n: usize,
    test_n: usize,
    seed: u64,
) -> Result<(AuctionDataset, AuctionDataset, AuctionDataset)> {
    for (name, n) in [("train", train_n), ("validation", val_n), ("test", test_n)] {
        if n == 0 {
            return Err(Error::Param(format!("{name} split must be non-empty")));
        }
    }
    let parts = split_indices(data.len(), &[train_n, val_n, test_n], seed)?;
    Ok((
        data.subset(&parts[0])?,
        data.subset(&parts[1])?,
        data.subset(&parts[2])?,
    ))
}
