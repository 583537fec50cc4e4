//! Distribution meta-features of an implicit-feedback dataset.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interactions::InteractionDataset;

pub const N_META_FEATURES: usize = 12;

pub const FEATURE_NAMES: [&str; N_META_FEATURES] = [
    "n_users",
    "n_items",
    "n_interactions",
    "density",
    "user_item_ratio",
    "item_user_ratio",
    "max_user_degree",
    "min_user_degree",
    "max_item_degree",
    "min_item_degree",
    "mean_user_degree",
    "mean_item_degree",
];

/// Positions of the integer count columns, which span orders of magnitude.
pub const COUNT_FEATURES: [usize; 7] = [0, 1, 2, 6, 7, 8, 9];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetaFeatureVector {
    pub n_users: f64,
    pub n_items: f64,
    pub n_interactions: f64,
    pub density: f64,
    pub user_item_ratio: f64,
    pub item_user_ratio: f64,
    pub max_user_degree: f64,
    pub min_user_degree: f64,
    pub max_item_degree: f64,
    pub min_item_degree: f64,
    pub mean_user_degree: f64,
    pub mean_item_degree: f64,
}

impl MetaFeatureVector {
    pub fn to_array(&self) -> [f64; N_META_FEATURES] {
        [
            self.n_users,
            self.n_items,
            self.n_interactions,
            self.density,
            self.user_item_ratio,
            self.item_user_ratio,
            self.max_user_degree,
            self.min_user_degree,
            self.max_item_degree,
            self.min_item_degree,
            self.mean_user_degree,
            self.mean_item_degree,
        ]
    }

    pub fn from_array(v: [f64; N_META_FEATURES]) -> Self {
        Self {
            n_users: v[0],
            n_items: v[1],
            n_interactions: v[2],
            density: v[3],
            user_item_ratio: v[4],
            item_user_ratio: v[5],
            max_user_degree: v[6],
            min_user_degree: v[7],
            max_item_degree: v[8],
            min_item_degree: v[9],
            mean_user_degree: v[10],
            mean_item_degree: v[11],
        }
    }
}

pub fn extract(dataset: &InteractionDataset) -> Result<MetaFeatureVector> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let nu = dataset.n_users() as f64;
    let ni = dataset.n_items() as f64;
    let n = dataset.n_interactions() as f64;
    let ud = dataset.user_degrees();
    let id = dataset.item_degrees();
    let max = |d: &[usize]| *d.iter().max().expect("non-empty") as f64;
    let min = |d: &[usize]| *d.iter().min().expect("non-empty") as f64;
    Ok(MetaFeatureVector {
        n_users: nu,
        n_items: ni,
        n_interactions: n,
        density: n / (nu * ni),
        user_item_ratio: nu / ni,
        item_user_ratio: ni / nu,
        max_user_degree: max(&ud),
        min_user_degree: min(&ud),
        max_item_degree: max(&id),
        min_item_degree: min(&id),
        mean_user_degree: n / nu,
        mean_item_degree: n / ni,
    })
}

/// Writes `dataset` followed by the twelve feature columns, one row per entry.
pub fn write_csv<W: Write>(rows: &[(String, MetaFeatureVector)], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["dataset"];
    header.extend(FEATURE_NAMES);
    w.write_record(&header)?;
    for (name, mf) in rows {
        let mut rec = vec![name.clone()];
        rec.extend(mf.to_array().iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(reader: R) -> Result<Vec<(String, MetaFeatureVector)>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut expect = vec!["dataset"];
    expect.extend(FEATURE_NAMES);
    if headers.iter().collect::<Vec<_>>() != expect {
        return Err(Error::SchemaMismatch(format!("unexpected meta-feature header {headers:?}")));
    }
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let mut v = [0.0; N_META_FEATURES];
        for (slot, field) in v.iter_mut().zip(record.iter().skip(1)) {
            *slot = field.parse().map_err(|_| Error::Parse {
                line,
                message: format!("bad meta-feature value {field:?}"),
            })?;
        }
        if record.len() != N_META_FEATURES + 1 {
            return Err(Error::SchemaMismatch(format!("line {line}: expected 13 columns")));
        }
        out.push((record[0].to_owned(), MetaFeatureVector::from_array(v)));
    }
    Ok(out)
}
