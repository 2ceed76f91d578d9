//! CSV ingestion driven by a JSON schema sidecar.
//!
//! The schema maps column names to one of `continuous`, `categorical`,
//! `bid1`, `bid2` or `item_id`; other columns in the file are ignored.
//! Feature columns are encoded in file order: categorical columns one-hot
//! over their sorted level set, continuous columns standardized, and the
//! constant offset appended last. When `bid1` is absent the highest bid is
//! imputed per item from the `item_id` column.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{impute_highest_bid, AuctionDataset, AuctionRecord};
use crate::error::{Error, LoadError, Result};
use crate::losses::BidPair;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Continuous,
    Categorical,
    Bid1,
    Bid2,
    ItemId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Schema {
    pub columns: BTreeMap<String, ColumnKind>,
}

impl Schema {
    fn column_of(&self, kind: ColumnKind) -> Option<&str> {
        self.columns
            .iter()
            .find(|(_, k)| **k == kind)
            .map(|(name, _)| name.as_str())
    }

    fn validate(&self, path: &str) -> Result<()> {
        for kind in [ColumnKind::Bid1, ColumnKind::Bid2, ColumnKind::ItemId] {
            if self.columns.values().filter(|k| **k == kind).count() > 1 {
                return Err(LoadError::Schema {
                    path: path.into(),
                    reason: format!("more than one {kind:?} column"),
                }
                .into());
            }
        }
        if self.column_of(ColumnKind::Bid2).is_none() {
            return Err(LoadError::Schema {
                path: path.into(),
                reason: "no bid2 column declared".into(),
            }
            .into());
        }
        if self.column_of(ColumnKind::Bid1).is_none() && self.column_of(ColumnKind::ItemId).is_none() {
            return Err(LoadError::Schema {
                path: path.into(),
                reason: "without a bid1 column an item_id column is needed for imputation".into(),
            }
            .into());
        }
        Ok(())
    }
}

/// Sidecar location for a data file: `foo.csv` -> `foo.schema.json`.
pub fn schema_path_for(data: &Path) -> PathBuf {
    data.with_extension("schema.json")
}

pub fn read_schema(path: &Path) -> Result<Schema> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| {
        LoadError::Schema {
            path: path.display().to_string(),
            reason: e.to_string(),
        }
        .into()
    })
}

pub fn write_schema(path: &Path, schema: &Schema) -> Result<()> {
    let text = serde_json::to_string_pretty(schema).expect("schema serializes");
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq)]
enum ColumnData {
    Continuous(Vec<f64>),
    Categorical(Vec<String>),
}

/// Parsed file contents before feature encoding.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    features: Vec<(String, ColumnData)>,
    bids: Vec<BidPair>,
    item_ids: Option<Vec<String>>,
}

impl RawTable {
    pub fn len(&self) -> usize {
        self.bids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bids.is_empty()
    }

    pub fn bids(&self) -> &[BidPair] {
        &self.bids
    }

    /// Encodes the rows at `rows` with `encoder`.
    pub fn to_dataset(&self, encoder: &FeatureEncoder, rows: &[usize]) -> Result<AuctionDataset> {
        let records = rows
            .iter()
            .map(|&i| {
                Ok(AuctionRecord {
                    x: encoder.encode_row(self, i)?,
                    b: self.bids[i],
                    item_id: self.item_ids.as_ref().map(|ids| ids[i].clone()),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        AuctionDataset::new(records)
    }
}

fn parse_number(path: &str, line: usize, column: &str, value: &str) -> Result<f64> {
    value
        .trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| {
            LoadError::NonNumeric {
                path: path.into(),
                row: line,
                column: column.into(),
                value: value.into(),
            }
            .into()
        })
}

/// Reads and type-checks a CSV file against `schema`. Row numbers in errors
/// are line numbers in the file, the header being line 1.
pub fn read_table(path: &Path, schema: &Schema) -> Result<RawTable> {
    let shown = path.display().to_string();
    schema.validate(&shown)?;
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = ::csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| LoadError::Malformed {
            path: shown.clone(),
            row: 1,
            reason: e.to_string(),
        })?
        .clone();
    let position = |name: &str| -> Result<usize> {
        headers.iter().position(|h| h == name).ok_or_else(|| {
            LoadError::MissingColumn {
                path: shown.clone(),
                column: name.into(),
            }
            .into()
        })
    };
    let mut feature_cols = Vec::new();
    for (i, h) in headers.iter().enumerate() {
        match schema.columns.get(h) {
            Some(ColumnKind::Continuous) => feature_cols.push((h.to_owned(), i, true)),
            Some(ColumnKind::Categorical) => feature_cols.push((h.to_owned(), i, false)),
            _ => {}
        }
    }
    for name in schema.columns.keys() {
        position(name)?;
    }
    let bid1_col = schema.column_of(ColumnKind::Bid1).map(position).transpose()?;
    let bid2_name = schema.column_of(ColumnKind::Bid2).expect("validated");
    let bid2_col = position(bid2_name)?;
    let item_col = schema.column_of(ColumnKind::ItemId).map(position).transpose()?;

    let mut columns: Vec<ColumnData> = feature_cols
        .iter()
        .map(|(_, _, continuous)| {
            if *continuous {
                ColumnData::Continuous(Vec::new())
            } else {
                ColumnData::Categorical(Vec::new())
            }
        })
        .collect();
    let mut firsts = Vec::new();
    let mut seconds = Vec::new();
    let mut items = Vec::new();
    let mut lines = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| LoadError::Malformed {
            path: shown.clone(),
            row: e.position().map_or(0, |p| p.line() as usize),
            reason: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        for ((name, idx, _), data) in feature_cols.iter().zip(columns.iter_mut()) {
            let cell = &record[*idx];
            match data {
                ColumnData::Continuous(v) => v.push(parse_number(&shown, line, name, cell)?),
                ColumnData::Categorical(v) => v.push(cell.trim().to_owned()),
            }
        }
        seconds.push(parse_number(&shown, line, bid2_name, &record[bid2_col])?);
        if let Some(c) = bid1_col {
            let name = schema.column_of(ColumnKind::Bid1).expect("present");
            firsts.push(parse_number(&shown, line, name, &record[c])?);
        }
        if let Some(c) = item_col {
            items.push(record[c].trim().to_owned());
        }
        lines.push(line);
    }
    if lines.is_empty() {
        return Err(LoadError::EmptyFile { path: shown }.into());
    }
    let bid_error = |line: usize, e: Error| -> Error {
        LoadError::Malformed {
            path: shown.clone(),
            row: line,
            reason: e.to_string(),
        }
        .into()
    };
    let bids = if bid1_col.is_some() {
        firsts
            .iter()
            .zip(&seconds)
            .zip(&lines)
            .map(|((&b1, &b2), &line)| BidPair::new(b1, b2).map_err(|e| bid_error(line, e)))
            .collect::<Result<Vec<_>>>()?
    } else {
        let observed = seconds
            .iter()
            .zip(&items)
            .zip(&lines)
            .map(|((&p, id), &line)| {
                Ok(AuctionRecord {
                    x: vec![1.0],
                    b: BidPair::new(p, p).map_err(|e| bid_error(line, e))?,
                    item_id: Some(id.clone()),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        impute_highest_bid(observed)?.bids()
    };
    Ok(RawTable {
        features: feature_cols
            .into_iter()
            .map(|(name, _, _)| name)
            .zip(columns)
            .collect(),
        bids,
        item_ids: item_col.map(|_| items),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ColumnEncoding {
    Continuous { name: String, mean: f64, std: f64 },
    Categorical { name: String, levels: Vec<String> },
}

/// Feature encoding fitted on a set of rows, reusable on other rows or
/// files with the same schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureEncoder {
    pub columns: Vec<ColumnEncoding>,
}

impl FeatureEncoder {
    pub fn fit(table: &RawTable, rows: &[usize]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Empty("no rows to fit the feature encoder"));
        }
        let columns = table
            .features
            .iter()
            .map(|(name, data)| match data {
                ColumnData::Continuous(v) => {
                    let n = rows.len() as f64;
                    let mean = rows.iter().map(|&i| v[i]).sum::<f64>() / n;
                    let var = rows.iter().map(|&i| (v[i] - mean).powi(2)).sum::<f64>() / n;
                    let std = var.sqrt();
                    ColumnEncoding::Continuous {
                        name: name.clone(),
                        mean,
                        std: if std > 0.0 && std.is_finite() { std } else { 1.0 },
                    }
                }
                ColumnData::Categorical(v) => {
                    let levels: BTreeSet<&str> = rows.iter().map(|&i| v[i].as_str()).collect();
                    ColumnEncoding::Categorical {
                        name: name.clone(),
                        levels: levels.into_iter().map(str::to_owned).collect(),
                    }
                }
            })
            .collect();
        Ok(Self { columns })
    }

    /// Encoded dimension, offset included.
    pub fn dim(&self) -> usize {
        1 + self
            .columns
            .iter()
            .map(|c| match c {
                ColumnEncoding::Continuous { .. } => 1,
                ColumnEncoding::Categorical { levels, .. } => levels.len(),
            })
            .sum::<usize>()
    }

    fn encode_row(&self, table: &RawTable, row: usize) -> Result<Vec<f64>> {
        if self.columns.len() != table.features.len() {
            return Err(Error::DimensionMismatch {
                expected: self.columns.len(),
                got: table.features.len(),
            });
        }
        let mut x = Vec::with_capacity(self.dim());
        for (enc, (name, data)) in self.columns.iter().zip(&table.features) {
            match (enc, data) {
                (ColumnEncoding::Continuous { name: n, mean, std }, ColumnData::Continuous(v)) if n == name => {
                    x.push((v[row] - mean) / std);
                }
                (ColumnEncoding::Categorical { name: n, levels }, ColumnData::Categorical(v)) if n == name => {
                    // unseen levels encode as all zeros
                    x.extend(levels.iter().map(|l| if *l == v[row] { 1.0 } else { 0.0 }));
                }
                _ => {
                    return Err(Error::Param(format!(
                        "encoder column does not match table column `{name}`"
                    )))
                }
            }
        }
        x.push(1.0);
        Ok(x)
    }
}

/// Reads `path` and encodes every row with statistics from the whole file.
pub fn load_csv(path: &Path, schema: &Schema) -> Result<AuctionDataset> {
    let table = read_table(path, schema)?;
    let rows: Vec<usize> = (0..table.len()).collect();
    let encoder = FeatureEncoder::fit(&table, &rows)?;
    table.to_dataset(&encoder, &rows)
}

/// Writes features (offset dropped) as `x0, x1, ...`, then `b1`, `b2` and,
/// when every record carries one, `item_id`. Returns the matching schema.
pub fn write_csv(data: &AuctionDataset, path: &Path) -> Result<Schema> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let nfeat = data.dim() - 1;
    let with_items = data.records().iter().all(|r| r.item_id.is_some());
    let mut columns = BTreeMap::new();
    let mut header: Vec<String> = (0..nfeat).map(|i| format!("x{i}")).collect();
    for h in &header {
        columns.insert(h.clone(), ColumnKind::Continuous);
    }
    header.push("b1".into());
    header.push("b2".into());
    columns.insert("b1".into(), ColumnKind::Bid1);
    columns.insert("b2".into(), ColumnKind::Bid2);
    if with_items {
        header.push("item_id".into());
        columns.insert("item_id".into(), ColumnKind::ItemId);
    }
    let io = |e| Error::io(path, e);
    writeln!(out, "{}", header.join(",")).map_err(io)?;
    for r in data.records() {
        let mut fields: Vec<String> = r.x[..nfeat].iter().map(|v| v.to_string()).collect();
        fields.push(r.b.b1().to_string());
        fields.push(r.b.b2().to_string());
        if with_items {
            fields.push(r.item_id.clone().unwrap_or_default());
        }
        writeln!(out, "{}", fields.join(",")).map_err(io)?;
    }
    out.flush().map_err(io)?;
    Ok(Schema { columns })
}
