//! The study config: one TOML file describing a whole run.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::time::Duration;

use recsel_core::algos::default_zoo;
use recsel_core::learn::{default_grid, DEFAULT_INNER_FOLDS};
use recsel_core::metrics::THRESHOLDS;
use recsel_core::preprocess::{DEFAULT_CORE, N_FOLDS};
use recsel_core::{ComboSpec, CsvSchema, Family, Hyperparams, Objective, SynthConfig};
use serde::Deserialize;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusEntry {
    pub name: String,
    pub path: PathBuf,
    #[serde(default)]
    pub schema: CsvSchema,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLearner {
    family: Family,
    grid: Option<Vec<toml::Table>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    seed: Option<u64>,
    output_dir: PathBuf,
    #[serde(default)]
    corpus: Vec<CorpusEntry>,
    corpus_dir: Option<PathBuf>,
    corpus_schema: Option<CsvSchema>,
    core_k: Option<usize>,
    n_folds: Option<usize>,
    thresholds: Option<Vec<usize>>,
    fit_budget_seconds: Option<f64>,
    zoo: Option<Vec<ComboSpec>>,
    learners: Option<Vec<RawLearner>>,
    objectives: Option<Vec<Objective>>,
    inner_folds: Option<usize>,
    #[serde(default)]
    filter_significant: bool,
    synth: Option<toml::Table>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Learner {
    pub family: Family,
    pub grid: Vec<Hyperparams>,
}

/// A validated config with paths resolved against the config file's directory.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub corpus: Vec<CorpusEntry>,
    /// Every `*.csv` here joins the corpus, named by file stem.
    pub corpus_dir: Option<PathBuf>,
    pub corpus_schema: CsvSchema,
    pub core_k: usize,
    pub fit_budget_seconds: f64,
    pub zoo: Vec<ComboSpec>,
    pub learners: Vec<Learner>,
    pub objectives: Vec<Objective>,
    pub inner_folds: usize,
    pub filter_significant: bool,
    pub synth: Option<SynthConfig>,
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::data("config", msg)
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

impl StudyConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::data("config", format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    /// Parses `text`; relative paths are taken against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, CliError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| {
            let msg = e.message().trim().to_owned();
            match e.span() {
                Some(span) => config_err(format!("line {}: {msg}", line_of(text, span.start))),
                None => config_err(msg),
            }
        })?;
        let seed = raw.seed.ok_or_else(|| config_err("seed is required"))?;
        if let Some(n) = raw.n_folds {
            if n != N_FOLDS {
                return Err(config_err(format!("n_folds is fixed at {N_FOLDS}, got {n}")));
            }
        }
        if let Some(t) = &raw.thresholds {
            if t[..] != THRESHOLDS[..] {
                return Err(config_err(format!("thresholds are fixed at {THRESHOLDS:?}, got {t:?}")));
            }
        }
        let core_k = raw.core_k.unwrap_or(DEFAULT_CORE);
        if core_k == 0 {
            return Err(config_err("core_k must be >= 1"));
        }
        let fit_budget_seconds = raw.fit_budget_seconds.unwrap_or(60.0);
        check_budget(fit_budget_seconds)?;

        let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
        let mut corpus = raw.corpus;
        for c in &mut corpus {
            c.path = resolve(&c.path);
        }
        let mut names = HashSet::new();
        for c in &corpus {
            check_name(&c.name)?;
            if !names.insert(c.name.as_str()) {
                return Err(config_err(format!("duplicate dataset name {:?}", c.name)));
            }
        }

        let zoo = raw.zoo.unwrap_or_else(default_zoo);
        if zoo.is_empty() {
            return Err(config_err("zoo must not be empty"));
        }
        let mut ids = HashSet::new();
        for c in &zoo {
            c.validate().map_err(|e| config_err(format!("zoo: {e}")))?;
            if !ids.insert(c.id) {
                return Err(config_err(format!("zoo: duplicate combo {}", c.id)));
            }
        }

        let learners = match raw.learners {
            None => Family::ALL
                .iter()
                .map(|&family| Learner {
                    family,
                    grid: default_grid(family),
                })
                .collect(),
            Some(list) => {
                let mut out: Vec<Learner> = Vec::new();
                for l in list {
                    if out.iter().any(|o| o.family == l.family) {
                        return Err(config_err(format!("learner {} listed twice", l.family)));
                    }
                    let grid = match l.grid {
                        None => default_grid(l.family),
                        Some(points) => points
                            .into_iter()
                            .map(|t| grid_point(l.family, t))
                            .collect::<Result<Vec<_>, _>>()?,
                    };
                    if grid.is_empty() {
                        return Err(config_err(format!("learner {}: grid is empty", l.family)));
                    }
                    out.push(Learner { family: l.family, grid });
                }
                out
            }
        };
        if learners.is_empty() {
            return Err(config_err("no learners"));
        }

        let objectives = raw.objectives.unwrap_or_else(|| Objective::ALL.to_vec());
        if objectives.is_empty() {
            return Err(config_err("no objectives"));
        }
        let inner_folds = raw.inner_folds.unwrap_or(DEFAULT_INNER_FOLDS);
        if inner_folds < 2 {
            return Err(config_err("inner_folds must be >= 2"));
        }

        let synth = match raw.synth {
            None => None,
            Some(table) => {
                if table.contains_key("seed") {
                    return Err(config_err("synth.seed is not allowed; the root seed is used"));
                }
                let mut s: SynthConfig = table.try_into().map_err(|e: toml::de::Error| {
                    config_err(format!("synth: {}", e.message().trim()))
                })?;
                s.seed = seed;
                s.validate().map_err(|e| config_err(format!("synth: {e}")))?;
                Some(s)
            }
        };

        Ok(Self {
            seed,
            output_dir: resolve(&raw.output_dir),
            corpus,
            corpus_dir: raw.corpus_dir.as_deref().map(resolve),
            corpus_schema: raw.corpus_schema.unwrap_or_default(),
            core_k,
            fit_budget_seconds,
            zoo,
            learners,
            objectives,
            inner_folds,
            filter_significant: raw.filter_significant,
            synth,
        })
    }

    pub fn budget(&self) -> Duration {
        Duration::from_secs_f64(self.fit_budget_seconds)
    }

    pub fn set_budget(&mut self, seconds: f64) -> Result<(), CliError> {
        check_budget(seconds)?;
        self.fit_budget_seconds = seconds;
        Ok(())
    }

    /// The seed also drives synthesis, so an override applies there too.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        if let Some(s) = &mut self.synth {
            s.seed = seed;
        }
    }

    pub fn synth_dir(&self) -> PathBuf {
        self.output_dir.join("synth")
    }

    pub fn prepared_dir(&self) -> PathBuf {
        self.output_dir.join("prepared")
    }

    pub fn meta_dir(&self) -> PathBuf {
        self.output_dir.join("meta")
    }

    pub fn report_dir(&self) -> PathBuf {
        self.output_dir.join("report")
    }
}

fn check_budget(seconds: f64) -> Result<(), CliError> {
    if !(seconds.is_finite() && seconds > 0.0) {
        return Err(config_err(format!("fit budget must be positive, got {seconds}")));
    }
    Ok(())
}

/// Dataset names become directory names.
pub fn check_name(name: &str) -> Result<(), CliError> {
    let ok = !name.is_empty()
        && !name.starts_with('.')
        && name.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
    if !ok {
        return Err(config_err(format!(
            "dataset name {name:?} must be non-empty ASCII letters, digits, '-', '_' or '.'"
        )));
    }
    Ok(())
}

fn grid_point(family: Family, mut table: toml::Table) -> Result<Hyperparams, CliError> {
    table.insert("family".into(), toml::Value::String(family.name().into()));
    let h: Hyperparams = table
        .try_into()
        .map_err(|e: toml::de::Error| config_err(format!("{family} grid: {}", e.message().trim())))?;
    h.validate().map_err(|e| config_err(format!("{family} grid: {e}")))?;
    Ok(h)
}
