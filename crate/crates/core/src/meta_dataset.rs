//! The ground-truth performance table: every combo evaluated on every fold of
//! every dataset, joined with the datasets' meta-features.

use std::collections::HashMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;
use std::time::Duration;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::algos::{fit, AlgoComboId, ComboSpec, TrainMatrix, TrainingTag};
use crate::error::{Error, Result};
use crate::interactions::InteractionDataset;
use crate::meta_features::{self, MetaFeatureVector};
use crate::metrics::{evaluate_fold, Metric, THRESHOLDS};
use crate::preprocess::{k_core_prune, make_cv_plan, CvPlan, DEFAULT_CORE, N_FOLDS};
use crate::seed;

/// Datasets with fewer interactions after pruning are excluded.
pub const MIN_INTERACTIONS: usize = 50;
pub const DEFAULT_BUDGET: Duration = Duration::from_secs(60);

const CELLS_PER_COMBO: usize = 3 * THRESHOLDS.len() * N_FOLDS;

/// A pruned dataset with its split plan and meta-features.
#[derive(Debug, Clone)]
pub struct PreparedDataset {
    pub name: String,
    pub dataset: InteractionDataset,
    pub plan: CvPlan,
    pub meta: MetaFeatureVector,
}

/// Prunes to the `core_k`-core, rejects datasets left with fewer than
/// [`MIN_INTERACTIONS`], then plans the folds and extracts meta-features.
pub fn prepare(name: &str, raw: &InteractionDataset, core_k: usize, seed: u64) -> Result<PreparedDataset> {
    let dataset = k_core_prune(raw, core_k);
    if dataset.n_interactions() < MIN_INTERACTIONS {
        return Err(Error::DatasetTooSmall {
            name: name.to_owned(),
            interactions: dataset.n_interactions(),
            minimum: MIN_INTERACTIONS,
        });
    }
    let plan = make_cv_plan(&dataset, N_FOLDS, seed::derive(seed, &[seed::str_key(name)]))?;
    let meta = meta_features::extract(&dataset)?;
    Ok(PreparedDataset {
        name: name.to_owned(),
        dataset,
        plan,
        meta,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub seed: u64,
    pub budget_seconds: f64,
    pub zoo: Vec<ComboSpec>,
    pub zoo_hash: String,
}

impl Fingerprint {
    pub fn new(seed: u64, budget: Duration, zoo: &[ComboSpec]) -> Self {
        let json = serde_json::to_vec(zoo).expect("combo specs serialize");
        let zoo_hash = Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect();
        Self {
            seed,
            budget_seconds: budget.as_secs_f64(),
            zoo: zoo.to_vec(),
            zoo_hash,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Manifest {
    tool_version: String,
    datasets: Vec<String>,
    #[serde(flatten)]
    fingerprint: Fingerprint,
}

/// Scores for every `(dataset, combo, metric, k, fold)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct PerformanceTable {
    datasets: Vec<String>,
    combos: Vec<AlgoComboId>,
    scores: Vec<f64>,
    meta_features: Vec<MetaFeatureVector>,
    pub fingerprint: Fingerprint,
}

fn metric_pos(metric: Metric) -> usize {
    Metric::ALL.iter().position(|&m| m == metric).expect("known metric")
}

fn threshold_pos(k: usize) -> Option<usize> {
    THRESHOLDS.iter().position(|&t| t == k)
}

impl PerformanceTable {
    /// Assembles a table from a dense score vector in
    /// dataset/combo/metric/threshold/fold order.
    pub fn from_parts(
        datasets: Vec<String>,
        combos: Vec<AlgoComboId>,
        scores: Vec<f64>,
        meta_features: Vec<MetaFeatureVector>,
        fingerprint: Fingerprint,
    ) -> Result<Self> {
        let cells = datasets.len() * combos.len() * CELLS_PER_COMBO;
        if scores.len() != cells {
            return Err(Error::IncompleteGrid(format!("expected {cells} cells, got {}", scores.len())));
        }
        if meta_features.len() != datasets.len() {
            return Err(Error::SchemaMismatch("one meta-feature vector per dataset required".into()));
        }
        if combos.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::SchemaMismatch("combos must be unique and in id order".into()));
        }
        if let Some(bad) = scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
            return Err(Error::SchemaMismatch(format!("score {bad} outside [0, 1]")));
        }
        Ok(Self {
            datasets,
            combos,
            scores,
            meta_features,
            fingerprint,
        })
    }

    pub fn datasets(&self) -> &[String] {
        &self.datasets
    }

    pub fn combos(&self) -> &[AlgoComboId] {
        &self.combos
    }

    pub fn meta_features(&self) -> &[MetaFeatureVector] {
        &self.meta_features
    }

    pub fn n_cells(&self) -> usize {
        self.scores.len()
    }

    fn index(&self, d: usize, c: usize, metric: Metric, k_pos: usize, fold: usize) -> usize {
        (((d * self.combos.len() + c) * 3 + metric_pos(metric)) * THRESHOLDS.len() + k_pos) * N_FOLDS + fold
    }

    pub fn score(&self, dataset: usize, combo: usize, metric: Metric, k: usize, fold: usize) -> f64 {
        let k_pos = threshold_pos(k).expect("k is one of the fixed thresholds");
        self.scores[self.index(dataset, combo, metric, k_pos, fold)]
    }

    /// Writes `dataset,combo,metric,k,fold,score` rows in grid order.
    pub fn write_performance_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["dataset", "combo", "metric", "k", "fold", "score"])?;
        let mut pos = 0;
        for d in &self.datasets {
            for c in &self.combos {
                let c = c.to_string();
                for m in Metric::ALL {
                    for k in THRESHOLDS {
                        for fold in 0..N_FOLDS {
                            w.write_record([
                                d.as_str(),
                                c.as_str(),
                                m.name(),
                                &k.to_string(),
                                &fold.to_string(),
                                &self.scores[pos].to_string(),
                            ])?;
                            pos += 1;
                        }
                    }
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Parses a performance CSV and checks that every grid cell appears once.
    ///
    /// Returns datasets in first-appearance order, combos in id order and the
    /// dense score vector.
    pub fn read_performance_csv<R: Read>(reader: R) -> Result<(Vec<String>, Vec<AlgoComboId>, Vec<f64>)> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["dataset", "combo", "metric", "k", "fold", "score"] {
            return Err(Error::SchemaMismatch(format!("unexpected performance header {headers:?}")));
        }
        let mut datasets: Vec<String> = Vec::new();
        let mut dataset_pos: HashMap<String, usize> = HashMap::new();
        let mut rows = Vec::new();
        for record in rdr.records() {
            let record = record?;
            let line = record.position().map_or(0, |p| p.line());
            let bad = |m: String| Error::SchemaMismatch(format!("line {line}: {m}"));
            if record.len() != 6 {
                return Err(bad("expected 6 columns".into()));
            }
            let d = match dataset_pos.get(&record[0]) {
                Some(&d) => d,
                None => {
                    dataset_pos.insert(record[0].to_owned(), datasets.len());
                    datasets.push(record[0].to_owned());
                    datasets.len() - 1
                }
            };
            let combo: AlgoComboId = record[1].parse()?;
            let metric: Metric = record[2].parse()?;
            let k: usize = record[3].parse().map_err(|_| bad(format!("bad k {:?}", &record[3])))?;
            let k_pos = threshold_pos(k).ok_or_else(|| bad(format!("k {k} is not a threshold")))?;
            let fold: usize = record[4].parse().map_err(|_| bad(format!("bad fold {:?}", &record[4])))?;
            if fold >= N_FOLDS {
                return Err(bad(format!("fold {fold} out of range")));
            }
            let score: f64 = record[5].parse().map_err(|_| bad(format!("bad score {:?}", &record[5])))?;
            if !(0.0..=1.0).contains(&score) {
                return Err(bad(format!("score {score} outside [0, 1]")));
            }
            rows.push((d, combo, metric, k_pos, fold, score));
        }
        let mut combos: Vec<AlgoComboId> = rows.iter().map(|r| r.1).collect();
        combos.sort_unstable();
        combos.dedup();
        let combo_pos: HashMap<AlgoComboId, usize> = combos.iter().enumerate().map(|(i, &c)| (c, i)).collect();

        let cells = datasets.len() * combos.len() * CELLS_PER_COMBO;
        let mut scores = vec![f64::NAN; cells];
        for (d, combo, metric, k_pos, fold, score) in rows {
            let idx = (((d * combos.len() + combo_pos[&combo]) * 3 + metric_pos(metric)) * THRESHOLDS.len() + k_pos)
                * N_FOLDS
                + fold;
            if !scores[idx].is_nan() {
                return Err(Error::SchemaMismatch(format!(
                    "duplicate cell {} {combo} {metric} k={} fold={fold}",
                    datasets[d], THRESHOLDS[k_pos]
                )));
            }
            scores[idx] = score;
        }
        let missing = scores.iter().filter(|s| s.is_nan()).count();
        if missing > 0 || cells == 0 {
            return Err(Error::IncompleteGrid(format!("{missing} of {cells} cells missing")));
        }
        Ok((datasets, combos, scores))
    }

    /// Writes `performance.csv`, `meta_features.csv` and `manifest.json`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let mut perf = Vec::new();
        self.write_performance_csv(&mut perf)?;
        fs::write(dir.join("performance.csv"), perf)?;

        let rows: Vec<_> = self
            .datasets
            .iter()
            .cloned()
            .zip(self.meta_features.iter().copied())
            .collect();
        let mut meta = Vec::new();
        meta_features::write_csv(&rows, &mut meta)?;
        fs::write(dir.join("meta_features.csv"), meta)?;

        let manifest = Manifest {
            tool_version: env!("CARGO_PKG_VERSION").to_owned(),
            datasets: self.datasets.clone(),
            fingerprint: self.fingerprint.clone(),
        };
        let mut json = serde_json::to_vec_pretty(&manifest)?;
        json.push(b'\n');
        fs::write(dir.join("manifest.json"), json)?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let (datasets, combos, scores) =
            Self::read_performance_csv(fs::File::open(dir.join("performance.csv"))?)?;
        let manifest: Manifest = serde_json::from_reader(fs::File::open(dir.join("manifest.json"))?)?;
        let meta_rows = meta_features::read_csv(fs::File::open(dir.join("meta_features.csv"))?)?;
        let meta_map: HashMap<_, _> = meta_rows.into_iter().collect();
        let meta = datasets
            .iter()
            .map(|d| {
                meta_map
                    .get(d)
                    .copied()
                    .ok_or_else(|| Error::SchemaMismatch(format!("no meta-features for dataset {d}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut zoo_ids: Vec<_> = manifest.fingerprint.zoo.iter().map(|c| c.id).collect();
        zoo_ids.sort_unstable();
        if zoo_ids != combos {
            return Err(Error::SchemaMismatch("performance combos differ from manifest zoo".into()));
        }
        Self::from_parts(datasets, combos, scores, meta, manifest.fingerprint)
    }
}

#[derive(Debug, Clone)]
pub struct BuildOptions {
    pub budget: Duration,
    pub seed: u64,
    /// Worker threads; results never depend on this.
    pub jobs: usize,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self {
            budget: DEFAULT_BUDGET,
            seed: 0,
            jobs: 1,
        }
    }
}

/// Builds the table from a raw corpus: prepare, then [`build_prepared`].
/// Datasets too small after pruning are logged and returned as exclusions.
pub fn build(
    corpus: &[(String, InteractionDataset)],
    zoo: &[ComboSpec],
    opts: &BuildOptions,
) -> Result<(PerformanceTable, Vec<Error>)> {
    check_unique(corpus.iter().map(|(n, _)| n.as_str()))?;
    let mut prepared = Vec::new();
    let mut excluded = Vec::new();
    for (name, raw) in corpus {
        match prepare(name, raw, DEFAULT_CORE, opts.seed) {
            Ok(p) => prepared.push(p),
            Err(e @ Error::DatasetTooSmall { .. }) => {
                warn!("excluding dataset: {e}");
                excluded.push(e);
            }
            Err(e) => return Err(e),
        }
    }
    Ok((build_prepared(&prepared, zoo, opts)?, excluded))
}

fn check_unique<'a>(names: impl Iterator<Item = &'a str>) -> Result<()> {
    let mut seen = std::collections::HashSet::new();
    for n in names {
        if !seen.insert(n) {
            return Err(Error::InvalidArgument(format!("duplicate dataset name {n:?}")));
        }
    }
    Ok(())
}

/// Runs fit + evaluate for every `(dataset, fold, combo)` job.
pub fn build_prepared(prepared: &[PreparedDataset], zoo: &[ComboSpec], opts: &BuildOptions) -> Result<PerformanceTable> {
    check_unique(prepared.iter().map(|p| p.name.as_str()))?;
    if prepared.is_empty() {
        return Err(Error::TooFewDatasets { found: 0, needed: 1 });
    }
    let mut zoo = zoo.to_vec();
    zoo.sort_by_key(|c| c.id);
    if zoo.windows(2).any(|w| w[0].id == w[1].id) {
        return Err(Error::InvalidArgument("duplicate combo in zoo".into()));
    }
    for c in &zoo {
        c.validate()?;
    }
    for p in prepared {
        if p.plan.n_folds() != N_FOLDS {
            return Err(Error::InvalidArgument(format!("{}: plan must have {N_FOLDS} folds", p.name)));
        }
    }

    let trains: Vec<Vec<TrainMatrix>> = prepared
        .iter()
        .map(|p| {
            p.plan
                .folds
                .iter()
                .map(|f| TrainMatrix::new(p.dataset.n_users(), p.dataset.n_items(), &f.train))
                .collect()
        })
        .collect();

    let n_c = zoo.len();
    let jobs: Vec<(usize, usize, usize)> = (0..prepared.len())
        .flat_map(|d| (0..N_FOLDS).flat_map(move |f| (0..n_c).map(move |c| (d, f, c))))
        .collect();
    info!("running {} fit jobs on {} worker(s)", jobs.len(), opts.jobs.max(1));

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let results: Vec<Vec<f64>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(d, f, c)| -> Result<Vec<f64>> {
                let p = &prepared[d];
                let combo = &zoo[c];
                let fit_seed = seed::derive(
                    opts.seed,
                    &[seed::str_key(&p.name), f as u64, seed::str_key(&combo.id.to_string())],
                );
                let mut model = fit(combo, &trains[d][f], opts.budget, fit_seed)?;
                model.trained_on = TrainingTag {
                    dataset: p.name.clone(),
                    fold: f,
                };
                if model.budget_exhausted() {
                    warn!("{} {} fold {f}: fit budget exhausted, using partial model", p.name, combo.id);
                }
                let res = evaluate_fold(&model, &p.plan.folds[f], &THRESHOLDS)?;
                info!("fit {} {} fold {f} done", p.name, combo.id);
                Ok(res.into_iter().map(|r| r.value).collect())
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let mut scores = vec![0.0; prepared.len() * n_c * CELLS_PER_COMBO];
    for (&(d, f, c), values) in jobs.iter().zip(&results) {
        // values are metric-major then threshold
        for (pos, &v) in values.iter().enumerate() {
            let m = pos / THRESHOLDS.len();
            let k = pos % THRESHOLDS.len();
            scores[(((d * n_c + c) * 3 + m) * THRESHOLDS.len() + k) * N_FOLDS + f] = v;
        }
    }
    PerformanceTable::from_parts(
        prepared.iter().map(|p| p.name.clone()).collect(),
        zoo.iter().map(|c| c.id).collect(),
        scores,
        prepared.iter().map(|p| p.meta).collect(),
        Fingerprint::new(opts.seed, opts.budget, &zoo),
    )
}

/// Per-dataset fold-mean labels and the ranking they induce.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub datasets: Vec<String>,
    pub combos: Vec<AlgoComboId>,
    /// `labels[d][c]`: mean over folds.
    pub labels: Vec<Vec<f64>>,
    /// `ranks[d][c]`: 1 for the best combo; ties go to the lower combo id.
    pub ranks: Vec<Vec<usize>>,
}

/// Ranks `values` descending (1 = largest); equal values rank by position.
pub fn rank_descending(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let mut ranks = vec![0; values.len()];
    for (r, &c) in order.iter().enumerate() {
        ranks[c] = r + 1;
    }
    ranks
}

/// Mean that does not depend on the order of `values`.
pub fn order_free_mean(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn ground_truth(table: &PerformanceTable, metric: Metric, k: usize) -> GroundTruth {
    let labels: Vec<Vec<f64>> = (0..table.datasets.len())
        .map(|d| {
            (0..table.combos.len())
                .map(|c| {
                    let folds: Vec<f64> = (0..N_FOLDS).map(|f| table.score(d, c, metric, k, f)).collect();
                    order_free_mean(&folds)
                })
                .collect()
        })
        .collect();
    let ranks = labels.iter().map(|l| rank_descending(l)).collect();
    GroundTruth {
        datasets: table.datasets.clone(),
        combos: table.combos.clone(),
        labels,
        ranks,
    }
}
