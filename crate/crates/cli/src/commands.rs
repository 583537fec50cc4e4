//! The pipeline stages. Each reads and writes only files under the output
//! directory, so any stage can be rerun on its own.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use log::{info, warn};
use recsel_core::interactions::{build_dataset, ingest_csv};
use recsel_core::meta_dataset::{self, build_prepared, ground_truth, BuildOptions};
use recsel_core::selection::{
    aggregate, emit_report, filter_significant, loo_evaluate_gt, read_records_csv, LooOptions, ReportFormat,
};
use recsel_core::synth::{generate_corpus, DatasetSpec};
use recsel_core::{meta_features, seed, CsvSchema, CvPlan, Error, InteractionDataset, LooReport, Metric};
use recsel_core::{PerformanceTable, PreparedDataset};
use serde::{Deserialize, Serialize};

use crate::config::{check_name, CorpusEntry, StudyConfig};
use crate::error::CliError;

pub const INTERACTIONS_FILE: &str = "interactions.csv";
pub const SPLITS_FILE: &str = "splits.csv";
pub const META_FILE: &str = "meta_features.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const SUMMARY_FILE: &str = "summary.txt";

#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    pub jobs: usize,
    pub filter_significant: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            jobs: 1,
            filter_significant: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthEntry {
    pub name: String,
    pub spec: DatasetSpec,
    pub interactions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthManifest {
    pub seed: u64,
    pub rule: String,
    pub datasets: Vec<SynthEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreparedEntry {
    pub name: String,
    pub users: usize,
    pub items: usize,
    pub interactions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub name: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrepareManifest {
    pub seed: u64,
    pub core_k: usize,
    pub datasets: Vec<PreparedEntry>,
    pub excluded: Vec<Exclusion>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn missing(path: &Path, stage: &str) -> CliError {
    CliError::data("missing_input", format!("{} not found; run `{stage}` first", path.display()))
}

/// Removes a stage's own output directory so stale files never survive a rerun.
fn reset_dir(dir: &Path) -> Result<(), CliError> {
    if dir.exists() {
        fs::remove_dir_all(dir)?;
    }
    fs::create_dir_all(dir)?;
    Ok(())
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| CliError::new(crate::error::ExitKind::Internal, "thread_pool", e.to_string()))
}

pub fn cmd_synth(cfg: &StudyConfig) -> Result<SynthManifest, CliError> {
    let synth = cfg
        .synth
        .as_ref()
        .ok_or_else(|| CliError::data("config", "no [synth] section in config"))?;
    let corpus = generate_corpus(synth)?;
    let dir = cfg.synth_dir();
    reset_dir(&dir)?;
    let mut datasets = Vec::new();
    for d in &corpus {
        let file = BufWriter::new(File::create(dir.join(format!("{}.csv", d.name)))?);
        d.dataset.write_csv(file)?;
        datasets.push(SynthEntry {
            name: d.name.clone(),
            spec: d.spec,
            interactions: d.dataset.n_interactions(),
        });
    }
    let manifest = SynthManifest {
        seed: synth.seed,
        rule: synth.rule.id().to_owned(),
        datasets,
    };
    write_json(&dir.join(MANIFEST_FILE), &manifest)?;
    info!("wrote {} synthetic datasets to {}", corpus.len(), dir.display());
    Ok(manifest)
}

/// Explicit corpus entries, then `corpus_dir` files sorted by name. With
/// neither, a configured synthetic corpus is used.
pub fn resolve_corpus(cfg: &StudyConfig) -> Result<Vec<CorpusEntry>, CliError> {
    let mut out = cfg.corpus.clone();
    let dir = match (&cfg.corpus_dir, &cfg.synth) {
        (Some(d), _) => Some(d.clone()),
        (None, Some(_)) if out.is_empty() => Some(cfg.synth_dir()),
        _ => None,
    };
    let schema = if cfg.corpus_dir.is_some() {
        cfg.corpus_schema.clone()
    } else {
        CsvSchema::default()
    };
    if let Some(dir) = dir {
        let listing = fs::read_dir(&dir).map_err(|e| CliError::data("missing_input", format!("{}: {e}", dir.display())))?;
        let mut files: Vec<PathBuf> = listing
            .map(|e| e.map(|e| e.path()))
            .collect::<Result<_, _>>()?;
        files.retain(|p| p.extension().is_some_and(|e| e == "csv") && p.is_file());
        files.sort();
        for path in files {
            let name = path
                .file_stem()
                .and_then(|s| s.to_str())
                .ok_or_else(|| CliError::data("config", format!("{}: unusable file name", path.display())))?
                .to_owned();
            check_name(&name)?;
            out.push(CorpusEntry {
                name,
                path,
                schema: schema.clone(),
            });
        }
    }
    for (i, c) in out.iter().enumerate() {
        if out[..i].iter().any(|o| o.name == c.name) {
            return Err(CliError::data("config", format!("duplicate dataset name {:?}", c.name)));
        }
    }
    if out.is_empty() {
        return Err(CliError::data("empty_corpus", "the corpus has no datasets"));
    }
    Ok(out)
}

pub fn cmd_prepare(cfg: &StudyConfig) -> Result<PrepareManifest, CliError> {
    let corpus = resolve_corpus(cfg)?;
    let dir = cfg.prepared_dir();
    reset_dir(&dir)?;
    let mut datasets = Vec::new();
    let mut excluded = Vec::new();
    for entry in &corpus {
        let rows = ingest_csv(&entry.path, &entry.schema).map_err(|e| CliError::from(e).context(entry.path.display()))?;
        let raw = build_dataset(&rows).map_err(|e| CliError::from(e).context(&entry.name))?;
        let p = match meta_dataset::prepare(&entry.name, &raw, cfg.core_k, cfg.seed) {
            Ok(p) => p,
            Err(e @ Error::DatasetTooSmall { .. }) => {
                warn!("excluding dataset: {e}");
                excluded.push(Exclusion {
                    name: entry.name.clone(),
                    reason: e.to_string(),
                });
                continue;
            }
            Err(e) => return Err(CliError::from(e).context(&entry.name)),
        };
        let sub = dir.join(&p.name);
        fs::create_dir_all(&sub)?;
        p.dataset.write_csv(BufWriter::new(File::create(sub.join(INTERACTIONS_FILE))?))?;
        p.plan.write_csv(&p.dataset, BufWriter::new(File::create(sub.join(SPLITS_FILE))?))?;
        meta_features::write_csv(&[(p.name.clone(), p.meta)], File::create(sub.join(META_FILE))?)?;
        info!(
            "prepared {}: {} users, {} items, {} interactions",
            p.name,
            p.dataset.n_users(),
            p.dataset.n_items(),
            p.dataset.n_interactions()
        );
        datasets.push(PreparedEntry {
            name: p.name,
            users: p.dataset.n_users(),
            items: p.dataset.n_items(),
            interactions: p.dataset.n_interactions(),
        });
    }
    let manifest = PrepareManifest {
        seed: cfg.seed,
        core_k: cfg.core_k,
        datasets,
        excluded,
    };
    write_json(&dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

fn open(path: &Path, stage: &str) -> Result<File, CliError> {
    File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => missing(path, stage),
        _ => CliError::from(e).context(path.display()),
    })
}

/// Loads what `prepare` wrote for one dataset.
pub fn load_prepared(dir: &Path, name: &str, root_seed: u64) -> Result<PreparedDataset, CliError> {
    let sub = dir.join(name);
    let ctx = |e: Error| CliError::from(e).context(name);
    let dataset = InteractionDataset::read_csv(open(&sub.join(INTERACTIONS_FILE), "prepare")?).map_err(ctx)?;
    let plan_seed = seed::derive(root_seed, &[seed::str_key(name)]);
    let plan = CvPlan::read_csv(&dataset, plan_seed, open(&sub.join(SPLITS_FILE), "prepare")?).map_err(ctx)?;
    let meta = meta_features::read_csv(open(&sub.join(META_FILE), "prepare")?).map_err(ctx)?;
    let meta = match meta.as_slice() {
        [(n, m)] if n == name => *m,
        _ => return Err(CliError::data("schema_mismatch", format!("{name}: {META_FILE} must hold one row for {name}"))),
    };
    Ok(PreparedDataset {
        name: name.to_owned(),
        dataset,
        plan,
        meta,
    })
}

pub fn cmd_build_meta(cfg: &StudyConfig, opts: &RunOptions) -> Result<PerformanceTable, CliError> {
    let dir = cfg.prepared_dir();
    let path = dir.join(MANIFEST_FILE);
    let manifest: PrepareManifest = serde_json::from_reader(open(&path, "prepare")?)
        .map_err(|e| CliError::from(Error::from(e)).context(path.display()))?;
    if manifest.seed != cfg.seed || manifest.core_k != cfg.core_k {
        return Err(CliError::data(
            "stale_input",
            format!(
                "prepared with seed {} and core_k {}, config has seed {} and core_k {}; rerun `prepare`",
                manifest.seed, manifest.core_k, cfg.seed, cfg.core_k
            ),
        ));
    }
    let prepared = manifest
        .datasets
        .iter()
        .map(|d| load_prepared(&dir, &d.name, cfg.seed))
        .collect::<Result<Vec<_>, _>>()?;
    let build = BuildOptions {
        budget: cfg.budget(),
        seed: cfg.seed,
        jobs: opts.jobs,
    };
    let table = build_prepared(&prepared, &cfg.zoo, &build)?;
    let out = cfg.meta_dir();
    reset_dir(&out)?;
    table.save(&out)?;
    info!("wrote performance table for {} datasets to {}", table.datasets().len(), out.display());
    Ok(table)
}

pub fn cmd_select(cfg: &StudyConfig, opts: &RunOptions) -> Result<LooReport, CliError> {
    let dir = cfg.meta_dir();
    let perf = dir.join("performance.csv");
    if !perf.exists() {
        return Err(missing(&perf, "build-meta"));
    }
    let table = PerformanceTable::load(&dir)?;
    let gt = ground_truth(&table, Metric::NDCG, 10);
    let loo = LooOptions {
        inner_folds: cfg.inner_folds,
        seed: cfg.seed,
    };
    let pool = pool(opts.jobs)?;
    let mut records = Vec::new();
    for learner in &cfg.learners {
        for &objective in &cfg.objectives {
            info!("leave-one-out: {} {objective}", learner.family);
            let r = pool.install(|| {
                loo_evaluate_gt(&gt, table.meta_features(), learner.family, &learner.grid, objective, &loo)
            })?;
            records.extend(r);
        }
    }
    if opts.filter_significant || cfg.filter_significant {
        let before = records.len();
        records = filter_significant(&records);
        info!("kept {} of {before} records with p < 0.05", records.len());
    }
    let report = aggregate(&records)?;
    let out = cfg.report_dir();
    reset_dir(&out)?;
    emit_report(&report, &out, ReportFormat::Csv)?;
    emit_report(&report, &out, ReportFormat::Json)?;
    fs::write(out.join(SUMMARY_FILE), summary(&report))?;
    Ok(report)
}

/// Re-aggregates the written records and returns the summary table.
pub fn cmd_report(cfg: &StudyConfig, opts: &RunOptions) -> Result<String, CliError> {
    let dir = cfg.report_dir();
    let path = dir.join("records.csv");
    let mut records = read_records_csv(open(&path, "select")?).map_err(|e| CliError::from(e).context(path.display()))?;
    if opts.filter_significant || cfg.filter_significant {
        records = filter_significant(&records);
    }
    let text = summary(&aggregate(&records)?);
    fs::write(dir.join(SUMMARY_FILE), &text)?;
    Ok(text)
}

pub fn summary(report: &LooReport) -> String {
    let mut s = format!(
        "{:<22} {:<22} {:>4} {:>10} {:>9} {:>9} {:>9}\n",
        "learner", "objective", "n", "median_rho", "recall@1", "recall@3", "rho_delta"
    );
    for a in &report.aggregates {
        let _ = writeln!(
            s,
            "{:<22} {:<22} {:>4} {:>10.4} {:>9.4} {:>9.4} {:>9.4}",
            a.learner.name(),
            a.objective.name(),
            a.n_records,
            a.median_rho,
            a.mean_recall1,
            a.mean_recall3,
            a.rho_delta_vs_performance
        );
    }
    s
}
