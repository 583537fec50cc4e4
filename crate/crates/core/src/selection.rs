//! Leave-one-out evaluation of meta-learners as algorithm selectors.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::algos::AlgoComboId;
use crate::error::{Error, Result};
use crate::learn::{fit_regressor, grid_search, Family, Hyperparams, DEFAULT_INNER_FOLDS};
use crate::meta_dataset::{ground_truth, GroundTruth, PerformanceTable};
use crate::meta_features::MetaFeatureVector;
use crate::metrics::Metric;
use crate::seed;

pub const MIN_DATASETS: usize = 3;
pub const SIGNIFICANCE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Objective {
    PerformancePrediction,
    RankingPrediction,
}

impl Objective {
    pub const ALL: [Objective; 2] = [Objective::PerformancePrediction, Objective::RankingPrediction];

    pub fn name(self) -> &'static str {
        match self {
            Objective::PerformancePrediction => "PerformancePrediction",
            Objective::RankingPrediction => "RankingPrediction",
        }
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Objective::ALL
            .into_iter()
            .find(|o| o.name() == s)
            .ok_or_else(|| Error::SchemaMismatch(format!("unknown objective {s:?}")))
    }
}

/// `labels[c][d]`: fold-mean NDCG@10, or the true rank (1 = best).
pub fn make_labels(gt: &GroundTruth, objective: Objective) -> Vec<Vec<f64>> {
    (0..gt.combos.len())
        .map(|c| {
            (0..gt.datasets.len())
                .map(|d| match objective {
                    Objective::PerformancePrediction => gt.labels[d][c],
                    Objective::RankingPrediction => gt.ranks[d][c] as f64,
                })
                .collect()
        })
        .collect()
}

/// Average ranks, ascending (smallest value gets rank 1).
fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && v[order[end]] == v[order[start]] {
            end += 1;
        }
        // positions start+1 ..= end share their mean
        let r = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = r;
        }
        start = end;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0)
}

/// Spearman's rho with average-rank ties and a two-sided Student-t p-value.
///
/// A constant input gives `(0, 1)`.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "spearman needs at least 3 values, got {}",
            a.len()
        )));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput("spearman input".into()));
    }
    let constant = |v: &[f64]| v.iter().all(|x| *x == v[0]);
    if constant(a) || constant(b) {
        return Ok((0.0, 1.0));
    }
    let rho = pearson(&average_ranks(a), &average_ranks(b));
    Ok((rho, correlation_p_value(rho, a.len())))
}

/// Two-sided p-value of a correlation over `n >= 3` pairs, via Student's t
/// with `n - 2` degrees of freedom.
pub fn correlation_p_value(rho: f64, n: usize) -> f64 {
    if rho.abs() >= 1.0 {
        return 0.0;
    }
    let df = (n - 2) as f64;
    let t = rho * (df / (1.0 - rho * rho)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("df is positive");
    (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0)
}

/// Share of the true top `n` found in the predicted top `n`.
pub fn selection_recall(predicted: &[AlgoComboId], truth: &[AlgoComboId], n: usize) -> Result<f64> {
    let mut p = predicted.to_vec();
    let mut t = truth.to_vec();
    p.sort_unstable();
    t.sort_unstable();
    if p != t || p.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::MalformedRanking(
            "rankings are not permutations of the same combos".into(),
        ));
    }
    if n == 0 || n > predicted.len() {
        return Err(Error::MalformedRanking(format!(
            "cutoff {n} outside 1..={}",
            predicted.len()
        )));
    }
    let hits = predicted[..n].iter().filter(|c| truth[..n].contains(c)).count();
    Ok(hits as f64 / n as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LooRecord {
    pub dataset: String,
    pub learner: Family,
    pub objective: Objective,
    /// One per combo, in table order. Empty when read back from CSV.
    #[serde(default)]
    pub predicted_values: Vec<f64>,
    pub predicted_ranking: Vec<AlgoComboId>,
    pub true_ranking: Vec<AlgoComboId>,
    pub rho: f64,
    pub p: f64,
    pub recall_at_1: f64,
    pub recall_at_3: f64,
}

#[derive(Debug, Clone)]
pub struct LooOptions {
    pub inner_folds: usize,
    pub seed: u64,
}

impl Default for LooOptions {
    fn default() -> Self {
        Self {
            inner_folds: DEFAULT_INNER_FOLDS,
            seed: 0,
        }
    }
}

/// Orders combos by prediction under the objective's direction; ties by id.
pub fn predicted_ranking(combos: &[AlgoComboId], values: &[f64], objective: Objective) -> Vec<AlgoComboId> {
    let mut order: Vec<usize> = (0..combos.len()).collect();
    order.sort_by(|&a, &b| {
        let by_value = match objective {
            Objective::PerformancePrediction => values[b].total_cmp(&values[a]),
            Objective::RankingPrediction => values[a].total_cmp(&values[b]),
        };
        by_value.then(combos[a].cmp(&combos[b]))
    });
    order.into_iter().map(|i| combos[i]).collect()
}

fn true_ranking(gt: &GroundTruth, d: usize) -> Vec<AlgoComboId> {
    let mut order: Vec<usize> = (0..gt.combos.len()).collect();
    order.sort_by_key(|&c| gt.ranks[d][c]);
    order.into_iter().map(|c| gt.combos[c]).collect()
}

/// Scores a held-out dataset's predictions against its ground truth.
///
/// rho compares rank positions, so predicted-value ties resolve the same way
/// as ground-truth ties. A constant prediction carries no ordering and
/// scores rho = 0, p = 1.
pub fn score_prediction(
    gt: &GroundTruth,
    d: usize,
    learner: Family,
    objective: Objective,
    values: Vec<f64>,
) -> Result<LooRecord> {
    let predicted = predicted_ranking(&gt.combos, &values, objective);
    let truth = true_ranking(gt, d);
    let (rho, p) = if values.iter().all(|v| *v == values[0]) {
        (0.0, 1.0)
    } else {
        let position = |c: &AlgoComboId| predicted.iter().position(|x| x == c).expect("permutation") as f64 + 1.0;
        let a: Vec<f64> = gt.combos.iter().map(position).collect();
        let b: Vec<f64> = gt.ranks[d].iter().map(|&r| r as f64).collect();
        spearman(&a, &b)?
    };
    let n3 = 3.min(gt.combos.len());
    Ok(LooRecord {
        dataset: gt.datasets[d].clone(),
        learner,
        objective,
        recall_at_1: selection_recall(&predicted, &truth, 1)?,
        recall_at_3: selection_recall(&predicted, &truth, n3)?,
        predicted_values: values,
        predicted_ranking: predicted,
        true_ranking: truth,
        rho,
        p,
    })
}

pub fn loo_evaluate(
    table: &PerformanceTable,
    learner: Family,
    grid: &[Hyperparams],
    objective: Objective,
    opts: &LooOptions,
) -> Result<Vec<LooRecord>> {
    let gt = ground_truth(table, Metric::NDCG, 10);
    loo_evaluate_gt(&gt, table.meta_features(), learner, grid, objective, opts)
}

/// Leave-one-out over the datasets of `gt`, one regressor per combo.
pub fn loo_evaluate_gt(
    gt: &GroundTruth,
    meta: &[MetaFeatureVector],
    learner: Family,
    grid: &[Hyperparams],
    objective: Objective,
    opts: &LooOptions,
) -> Result<Vec<LooRecord>> {
    let n_d = gt.datasets.len();
    if n_d < MIN_DATASETS {
        return Err(Error::TooFewDatasets {
            found: n_d,
            needed: MIN_DATASETS,
        });
    }
    if meta.len() != n_d {
        return Err(Error::DimensionMismatch(format!(
            "{} meta-feature rows for {n_d} datasets",
            meta.len()
        )));
    }
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    if let Some(g) = grid.iter().find(|g| g.family() != learner) {
        return Err(Error::InvalidHyperparameter(format!(
            "{} grid contains a {} point",
            learner,
            g.family()
        )));
    }
    let labels = make_labels(gt, objective);
    (0..n_d)
        .into_par_iter()
        .map(|held| {
            let train_x: Vec<MetaFeatureVector> = (0..n_d).filter(|&d| d != held).map(|d| meta[d]).collect();
            let values = (0..gt.combos.len())
                .map(|c| {
                    let train_y: Vec<f64> = (0..n_d).filter(|&d| d != held).map(|d| labels[c][d]).collect();
                    let s = seed::derive(
                        opts.seed,
                        &[
                            seed::str_key(&gt.datasets[held]),
                            seed::str_key(&gt.combos[c].to_string()),
                            objective as u64,
                        ],
                    );
                    let spec = grid_search(grid, &train_x, &train_y, opts.inner_folds, s)?;
                    fit_regressor(&spec, &train_x, &train_y)?.predict(&meta[held])
                })
                .collect::<Result<Vec<f64>>>()?;
            score_prediction(gt, held, learner, objective, values)
        })
        .collect()
}

pub fn filter_significant(records: &[LooRecord]) -> Vec<LooRecord> {
    records.iter().filter(|r| r.p < SIGNIFICANCE).cloned().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallLevel {
    pub value: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub learner: Family,
    pub objective: Objective,
    pub n_records: usize,
    pub median_rho: f64,
    pub mean_recall1: f64,
    pub mean_recall3: f64,
    /// Median rho under ranking minus under performance; 0 on performance rows.
    pub rho_delta_vs_performance: f64,
    pub recall1_distribution: Vec<RecallLevel>,
    pub recall3_distribution: Vec<RecallLevel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LooReport {
    pub records: Vec<LooRecord>,
    pub aggregates: Vec<Aggregate>,
}

/// Lower median: the smaller middle value for even counts.
pub fn lower_median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v[(v.len() - 1) / 2]
}

fn order_free_mean(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.iter().sum::<f64>() / v.len() as f64
}

fn distribution(values: &[f64], n: usize) -> Vec<RecallLevel> {
    (0..=n)
        .map(|j| {
            let value = j as f64 / n as f64;
            RecallLevel {
                value,
                count: values.iter().filter(|&&v| v == value).count(),
            }
        })
        .collect()
}

pub fn aggregate(records: &[LooRecord]) -> Result<LooReport> {
    if records.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut groups: Vec<(Family, Objective)> = records.iter().map(|r| (r.learner, r.objective)).collect();
    groups.sort_unstable();
    groups.dedup();
    let n3 = 3.min(records[0].true_ranking.len()).max(1);
    let mut aggregates: Vec<Aggregate> = groups
        .iter()
        .map(|&(learner, objective)| {
            let rs: Vec<&LooRecord> = records
                .iter()
                .filter(|r| r.learner == learner && r.objective == objective)
                .collect();
            let rho: Vec<f64> = rs.iter().map(|r| r.rho).collect();
            let r1: Vec<f64> = rs.iter().map(|r| r.recall_at_1).collect();
            let r3: Vec<f64> = rs.iter().map(|r| r.recall_at_3).collect();
            Aggregate {
                learner,
                objective,
                n_records: rs.len(),
                median_rho: lower_median(&rho),
                mean_recall1: order_free_mean(&r1),
                mean_recall3: order_free_mean(&r3),
                rho_delta_vs_performance: 0.0,
                recall1_distribution: distribution(&r1, 1),
                recall3_distribution: distribution(&r3, n3),
            }
        })
        .collect();
    let medians: Vec<(Family, Objective, f64)> =
        aggregates.iter().map(|a| (a.learner, a.objective, a.median_rho)).collect();
    for a in &mut aggregates {
        if a.objective != Objective::RankingPrediction {
            continue;
        }
        if let Some(perf) = medians
            .iter()
            .find(|m| m.0 == a.learner && m.1 == Objective::PerformancePrediction)
        {
            a.rho_delta_vs_performance = a.median_rho - perf.2;
        }
    }
    Ok(LooReport {
        records: records.to_vec(),
        aggregates,
    })
}

fn join(ranking: &[AlgoComboId]) -> String {
    ranking.iter().map(|c| c.to_string()).collect::<Vec<_>>().join("|")
}

fn split_ranking(s: &str) -> Result<Vec<AlgoComboId>> {
    s.split('|').map(str::parse).collect()
}

pub const RECORD_HEADER: [&str; 9] = [
    "dataset",
    "learner",
    "objective",
    "rho",
    "p",
    "recall1",
    "recall3",
    "predicted_ranking",
    "true_ranking",
];

pub const AGGREGATE_HEADER: [&str; 6] = [
    "learner",
    "objective",
    "median_rho",
    "mean_recall1",
    "mean_recall3",
    "rho_delta_vs_performance",
];

pub fn write_records_csv<W: Write>(records: &[LooRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(RECORD_HEADER)?;
    for r in records {
        w.write_record([
            r.dataset.clone(),
            r.learner.to_string(),
            r.objective.to_string(),
            r.rho.to_string(),
            r.p.to_string(),
            r.recall_at_1.to_string(),
            r.recall_at_3.to_string(),
            join(&r.predicted_ranking),
            join(&r.true_ranking),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records_csv<R: Read>(reader: R) -> Result<Vec<LooRecord>> {
    let mut rdr = csv::Reader::from_reader(reader);
    if rdr.headers()?.iter().ne(RECORD_HEADER) {
        return Err(Error::SchemaMismatch("unexpected records header".into()));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != RECORD_HEADER.len() {
            return Err(Error::SchemaMismatch(format!("line {line}: expected 9 columns")));
        }
        let num = |i: usize| -> Result<f64> {
            rec[i].parse().map_err(|_| Error::Parse {
                line,
                message: format!("bad {} value {:?}", RECORD_HEADER[i], &rec[i]),
            })
        };
        let learner = Family::parse(&rec[1])
            .ok_or_else(|| Error::SchemaMismatch(format!("line {line}: unknown learner {:?}", &rec[1])))?;
        out.push(LooRecord {
            dataset: rec[0].to_owned(),
            learner,
            objective: rec[2].parse()?,
            predicted_values: Vec::new(),
            rho: num(3)?,
            p: num(4)?,
            recall_at_1: num(5)?,
            recall_at_3: num(6)?,
            predicted_ranking: split_ranking(&rec[7])?,
            true_ranking: split_ranking(&rec[8])?,
        });
    }
    Ok(out)
}

pub fn write_aggregates_csv<W: Write>(aggregates: &[Aggregate], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(AGGREGATE_HEADER)?;
    for a in aggregates {
        w.write_record([
            a.learner.to_string(),
            a.objective.to_string(),
            a.median_rho.to_string(),
            a.mean_recall1.to_string(),
            a.mean_recall3.to_string(),
            a.rho_delta_vs_performance.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

/// Writes `records.csv` + `aggregates.csv`, or `report.json`, into `dir`.
pub fn emit_report(report: &LooReport, dir: impl AsRef<std::path::Path>, format: ReportFormat) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    match format {
        ReportFormat::Csv => {
            write_records_csv(&report.records, std::fs::File::create(dir.join("records.csv"))?)?;
            write_aggregates_csv(&report.aggregates, std::fs::File::create(dir.join("aggregates.csv"))?)?;
        }
        ReportFormat::Json => {
            let mut text = serde_json::to_string_pretty(report)?;
            text.push('\n');
            std::fs::write(dir.join("report.json"), text)?;
        }
    }
    Ok(())
}
