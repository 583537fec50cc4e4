//! Binary-relevance top-k ranking metrics.

use std::collections::HashSet;
use std::fmt;
use std::hash::Hash;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algos::FittedModel;
use crate::error::{Error, Result};
use crate::preprocess::FoldSplit;

pub const THRESHOLDS: [usize; 5] = [1, 3, 5, 10, 20];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Metric {
    NDCG,
    Recall,
    HitRate,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::NDCG, Metric::Recall, Metric::HitRate];

    pub fn name(self) -> &'static str {
        match self {
            Metric::NDCG => "NDCG",
            Metric::Recall => "Recall",
            Metric::HitRate => "HitRate",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::SchemaMismatch(format!("unknown metric {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricResult {
    pub metric: Metric,
    pub k: usize,
    pub value: f64,
}

fn discount(position: usize) -> f64 {
    1.0 / ((position + 2) as f64).log2()
}

/// DCG of the top `k` over the ideal DCG of `min(k, |relevant|)` hits.
pub fn ndcg_at_k<T: Eq + Hash>(ranked: &[T], relevant: &HashSet<T>, k: usize) -> Result<f64> {
    if relevant.is_empty() {
        return Err(Error::EmptyRelevantSet);
    }
    let dcg: f64 = ranked
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, item)| relevant.contains(item))
        .map(|(pos, _)| discount(pos))
        .sum();
    let idcg: f64 = (0..k.min(relevant.len())).map(discount).sum();
    Ok(dcg / idcg)
}

fn hits<T: Eq + Hash>(ranked: &[T], relevant: &HashSet<T>, k: usize) -> Result<usize> {
    if relevant.is_empty() {
        return Err(Error::EmptyRelevantSet);
    }
    Ok(ranked.iter().take(k).filter(|item| relevant.contains(item)).count())
}

pub fn recall_at_k<T: Eq + Hash>(ranked: &[T], relevant: &HashSet<T>, k: usize) -> Result<f64> {
    Ok(hits(ranked, relevant, k)? as f64 / relevant.len() as f64)
}

pub fn hitrate_at_k<T: Eq + Hash>(ranked: &[T], relevant: &HashSet<T>, k: usize) -> Result<f64> {
    Ok(if hits(ranked, relevant, k)? > 0 { 1.0 } else { 0.0 })
}

pub fn metric_at_k<T: Eq + Hash>(metric: Metric, ranked: &[T], relevant: &HashSet<T>, k: usize) -> Result<f64> {
    match metric {
        Metric::NDCG => ndcg_at_k(ranked, relevant, k),
        Metric::Recall => recall_at_k(ranked, relevant, k),
        Metric::HitRate => hitrate_at_k(ranked, relevant, k),
    }
}

/// Mean of every metric at every threshold over the users with test items.
///
/// Results are ordered metric-major (`NDCG`, `Recall`, `HitRate`), then by
/// threshold in the order given. Each user counts once. Per-user values are
/// reduced in user order, so the result does not depend on thread count.
pub fn evaluate_fold(model: &FittedModel, split: &FoldSplit, thresholds: &[usize]) -> Result<Vec<MetricResult>> {
    let depth = thresholds.iter().copied().max().unwrap_or(0);
    if depth == 0 {
        return Err(Error::InvalidArgument("thresholds must be positive".into()));
    }
    let group = |pairs: &[(u32, u32)]| -> Vec<(u32, Vec<u32>)> {
        let mut out: Vec<(u32, Vec<u32>)> = Vec::new();
        for &(u, i) in pairs {
            match out.last_mut() {
                Some((last, items)) if *last == u => items.push(i),
                _ => out.push((u, vec![i])),
            }
        }
        out
    };
    let train = group(&split.train);
    let test = group(&split.test);
    let train_of = |u: u32| -> &[u32] {
        train
            .binary_search_by_key(&u, |(x, _)| *x)
            .map_or(&[][..], |pos| &train[pos].1)
    };

    let per_user: Vec<Vec<f64>> = test
        .par_iter()
        .map(|(u, test_items)| -> Result<Vec<f64>> {
            let rec = model.recommend(*u, depth, train_of(*u))?;
            let relevant: HashSet<u32> = test_items.iter().copied().collect();
            let mut row = Vec::with_capacity(3 * thresholds.len());
            for metric in Metric::ALL {
                for &k in thresholds {
                    row.push(metric_at_k(metric, &rec.ranked_items, &relevant, k)?);
                }
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;

    let n = per_user.len().max(1) as f64;
    let mut sums = vec![0.0; 3 * thresholds.len()];
    for row in &per_user {
        for (s, v) in sums.iter_mut().zip(row) {
            *s += v;
        }
    }
    let mut out = Vec::with_capacity(sums.len());
    for (mi, metric) in Metric::ALL.into_iter().enumerate() {
        for (ki, &k) in thresholds.iter().enumerate() {
            out.push(MetricResult {
                metric,
                k,
                value: sums[mi * thresholds.len() + ki] / n,
            });
        }
    }
    Ok(out)
}
