//! Regression meta-learners over dataset meta-features.
//!
//! All families share one preprocessing step: `log1p` on the count-valued
//! columns, then standardization with the training mean and standard
//! deviation. Training rows are put in a canonical order before fitting, so
//! row order in the caller's data never changes a model.

mod forest;
mod gbt;
mod knn;
mod linear;
pub mod tree;

use std::cmp::Ordering;
use std::fmt;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::meta_features::{MetaFeatureVector, COUNT_FEATURES};
use crate::seed;

pub use forest::RandomForest;
pub use gbt::GradientBoostedTrees;
pub use knn::KnnRegressor;
pub use linear::LinearRegression;
pub use tree::{RegressionTree, TreeParams};

pub const DEFAULT_INNER_FOLDS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Family {
    LinearRegression,
    KnnRegressor,
    RandomForest,
    GradientBoostedTrees,
}

impl Family {
    pub const ALL: [Family; 4] = [
        Family::LinearRegression,
        Family::KnnRegressor,
        Family::RandomForest,
        Family::GradientBoostedTrees,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::LinearRegression => "LinearRegression",
            Family::KnnRegressor => "KnnRegressor",
            Family::RandomForest => "RandomForest",
            Family::GradientBoostedTrees => "GradientBoostedTrees",
        }
    }

    pub fn parse(s: &str) -> Option<Family> {
        Family::ALL.into_iter().find(|f| f.name() == s)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    Uniform,
    InverseDistance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    Sqrt,
    All,
}

impl MaxFeatures {
    pub fn count(self, n_features: usize) -> usize {
        match self {
            MaxFeatures::Sqrt => ((n_features as f64).sqrt().floor() as usize).max(1),
            MaxFeatures::All => n_features,
        }
    }
}

/// Family-specific hyperparameters; the variant names the family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family")]
pub enum Hyperparams {
    LinearRegression {
        ridge: f64,
    },
    KnnRegressor {
        neighbors: usize,
        weighting: Weighting,
    },
    RandomForest {
        trees: usize,
        /// `None` grows trees until leaves are pure.
        max_depth: Option<usize>,
        max_features: MaxFeatures,
    },
    GradientBoostedTrees {
        trees: usize,
        max_depth: usize,
        learning_rate: f64,
        subsample: f64,
    },
}

impl Hyperparams {
    pub fn family(&self) -> Family {
        match self {
            Hyperparams::LinearRegression { .. } => Family::LinearRegression,
            Hyperparams::KnnRegressor { .. } => Family::KnnRegressor,
            Hyperparams::RandomForest { .. } => Family::RandomForest,
            Hyperparams::GradientBoostedTrees { .. } => Family::GradientBoostedTrees,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidHyperparameter(format!("{}: {m}", self.family())));
        match *self {
            Hyperparams::LinearRegression { ridge } => {
                if !(ridge > 0.0 && ridge.is_finite()) {
                    return bad("ridge must be positive and finite");
                }
            }
            Hyperparams::KnnRegressor { neighbors, .. } => {
                if neighbors == 0 {
                    return bad("neighbors must be >= 1");
                }
            }
            Hyperparams::RandomForest { trees, max_depth, .. } => {
                if trees == 0 {
                    return bad("trees must be >= 1");
                }
                if max_depth == Some(0) {
                    return bad("max_depth must be >= 1");
                }
            }
            Hyperparams::GradientBoostedTrees {
                trees,
                learning_rate,
                subsample,
                ..
            } => {
                if trees == 0 {
                    return bad("trees must be >= 1");
                }
                if !(learning_rate > 0.0 && learning_rate <= 1.0) {
                    return bad("learning_rate must be in (0, 1]");
                }
                if !(subsample > 0.0 && subsample <= 1.0) {
                    return bad("subsample must be in (0, 1]");
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressorSpec {
    #[serde(flatten)]
    pub params: Hyperparams,
    pub seed: u64,
}

impl RegressorSpec {
    pub fn new(params: Hyperparams, seed: u64) -> Self {
        Self { params, seed }
    }

    pub fn family(&self) -> Family {
        self.params.family()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(s)?;
        spec.params.validate()?;
        Ok(spec)
    }
}

/// The stated default search grid for a family.
pub fn default_grid(family: Family) -> Vec<Hyperparams> {
    let mut grid = Vec::new();
    match family {
        Family::LinearRegression => {
            for ridge in [1e-8, 1e-2, 1.0] {
                grid.push(Hyperparams::LinearRegression { ridge });
            }
        }
        Family::KnnRegressor => {
            for neighbors in [1, 3, 5, 7] {
                for weighting in [Weighting::Uniform, Weighting::InverseDistance] {
                    grid.push(Hyperparams::KnnRegressor { neighbors, weighting });
                }
            }
        }
        Family::RandomForest => {
            for trees in [100, 300] {
                for max_depth in [Some(4), Some(8), None] {
                    for max_features in [MaxFeatures::Sqrt, MaxFeatures::All] {
                        grid.push(Hyperparams::RandomForest {
                            trees,
                            max_depth,
                            max_features,
                        });
                    }
                }
            }
        }
        Family::GradientBoostedTrees => {
            for trees in [100, 300] {
                for max_depth in [2, 3] {
                    for learning_rate in [0.05, 0.1] {
                        for subsample in [0.8, 1.0] {
                            grid.push(Hyperparams::GradientBoostedTrees {
                                trees,
                                max_depth,
                                learning_rate,
                                subsample,
                            });
                        }
                    }
                }
            }
        }
    }
    grid
}

/// `log1p` on selected columns, then per-column standardization.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTransform {
    log_columns: Vec<usize>,
    shift: Vec<f64>,
    scale: Vec<f64>,
}

impl FeatureTransform {
    pub fn fit(rows: &[Vec<f64>], log_columns: &[usize]) -> Self {
        let p = rows.first().map_or(0, Vec::len);
        let mut logged: Vec<Vec<f64>> = rows.to_vec();
        for row in &mut logged {
            for &c in log_columns {
                row[c] = row[c].ln_1p();
            }
        }
        let n = rows.len() as f64;
        let mut shift = vec![0.0; p];
        let mut scale = vec![1.0; p];
        for j in 0..p {
            let col = || logged.iter().map(|r| r[j]);
            let mean = col().sum::<f64>() / n;
            let constant = col().all(|v| v == logged[0][j]);
            let var = col().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            shift[j] = mean;
            scale[j] = if constant || var <= 0.0 { 1.0 } else { var.sqrt() };
        }
        Self {
            log_columns: log_columns.to_vec(),
            shift,
            scale,
        }
    }

    pub fn apply(&self, row: &[f64]) -> Vec<f64> {
        let mut out = row.to_vec();
        for &c in &self.log_columns {
            out[c] = out[c].ln_1p();
        }
        for ((v, s), sc) in out.iter_mut().zip(&self.shift).zip(&self.scale) {
            *v = (*v - s) / sc;
        }
        out
    }
}

#[derive(Debug, Clone)]
enum FittedFamily {
    Linear(LinearRegression),
    Knn(KnnRegressor),
    Forest(RandomForest),
    Boosted(GradientBoostedTrees),
}

#[derive(Debug, Clone)]
pub struct TrainedRegressor {
    spec: RegressorSpec,
    transform: FeatureTransform,
    n_features: usize,
    model: FittedFamily,
}

fn check_finite(values: &[f64], what: &str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteInput(what.to_owned()))
    }
}

fn lexicographic(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Fits on meta-feature vectors with the count columns log-transformed.
pub fn fit_regressor(spec: &RegressorSpec, x: &[MetaFeatureVector], y: &[f64]) -> Result<TrainedRegressor> {
    let rows: Vec<Vec<f64>> = x.iter().map(|m| m.to_array().to_vec()).collect();
    fit_rows(spec, &rows, y, &COUNT_FEATURES)
}

/// Fits on arbitrary feature rows; `log_columns` selects the `log1p` columns.
pub fn fit_rows(spec: &RegressorSpec, rows: &[Vec<f64>], y: &[f64], log_columns: &[usize]) -> Result<TrainedRegressor> {
    spec.params.validate()?;
    if rows.len() != y.len() {
        return Err(Error::DimensionMismatch(format!("{} rows but {} labels", rows.len(), y.len())));
    }
    if rows.len() < 2 {
        return Err(Error::DimensionMismatch("at least two training rows required".into()));
    }
    let p = rows[0].len();
    if p == 0 || rows.iter().any(|r| r.len() != p) {
        return Err(Error::DimensionMismatch("rows must share a positive width".into()));
    }
    if let Some(&c) = log_columns.iter().find(|&&c| c >= p) {
        return Err(Error::DimensionMismatch(format!("log column {c} out of range")));
    }
    for r in rows {
        check_finite(r, "feature value")?;
    }
    check_finite(y, "label")?;
    if log_columns.iter().any(|&c| rows.iter().any(|r| r[c] <= -1.0)) {
        return Err(Error::NonFiniteInput("log1p column has a value <= -1".into()));
    }

    // canonical row order: sort by (features, label)
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.sort_by(|&a, &b| lexicographic(&rows[a], &rows[b]).then(y[a].total_cmp(&y[b])));
    let rows: Vec<Vec<f64>> = order.iter().map(|&i| rows[i].clone()).collect();
    let y: Vec<f64> = order.iter().map(|&i| y[i]).collect();

    let transform = FeatureTransform::fit(&rows, log_columns);
    let z: Vec<Vec<f64>> = rows.iter().map(|r| transform.apply(r)).collect();
    let model = match spec.params {
        Hyperparams::LinearRegression { ridge } => FittedFamily::Linear(LinearRegression::fit(&z, &y, ridge)?),
        Hyperparams::KnnRegressor { neighbors, weighting } => {
            FittedFamily::Knn(KnnRegressor::fit(&z, &y, neighbors, weighting))
        }
        Hyperparams::RandomForest {
            trees,
            max_depth,
            max_features,
        } => FittedFamily::Forest(RandomForest::fit(&z, &y, trees, max_depth, max_features, spec.seed)),
        Hyperparams::GradientBoostedTrees {
            trees,
            max_depth,
            learning_rate,
            subsample,
        } => FittedFamily::Boosted(GradientBoostedTrees::fit(
            &z,
            &y,
            trees,
            max_depth,
            learning_rate,
            subsample,
            spec.seed,
        )),
    };
    Ok(TrainedRegressor {
        spec: spec.clone(),
        transform,
        n_features: p,
        model,
    })
}

impl TrainedRegressor {
    pub fn spec(&self) -> &RegressorSpec {
        &self.spec
    }

    pub fn predict(&self, x: &MetaFeatureVector) -> Result<f64> {
        self.predict_row(&x.to_array())
    }

    pub fn predict_row(&self, row: &[f64]) -> Result<f64> {
        if row.len() != self.n_features {
            return Err(Error::DimensionMismatch(format!(
                "expected {} features, got {}",
                self.n_features,
                row.len()
            )));
        }
        check_finite(row, "feature value")?;
        let z = self.transform.apply(row);
        check_finite(&z, "transformed feature value")?;
        let out = match &self.model {
            FittedFamily::Linear(m) => m.predict(&z),
            FittedFamily::Knn(m) => m.predict(&z),
            FittedFamily::Forest(m) => m.predict(&z),
            FittedFamily::Boosted(m) => m.predict(&z),
        };
        if out.is_finite() {
            Ok(out)
        } else {
            Err(Error::NonFiniteInput("prediction overflowed".into()))
        }
    }
}

/// Picks the grid point with the lowest mean inner-fold RMSE; ties go to
/// the earlier grid point. Fold assignment is drawn from `seed` over the
/// canonical row order, so it does not depend on the caller's row order.
pub fn grid_search(
    grid: &[Hyperparams],
    x: &[MetaFeatureVector],
    y: &[f64],
    inner_folds: usize,
    seed: u64,
) -> Result<RegressorSpec> {
    let rows: Vec<Vec<f64>> = x.iter().map(|m| m.to_array().to_vec()).collect();
    grid_search_rows(grid, &rows, y, &COUNT_FEATURES, inner_folds, seed)
}

pub fn grid_search_rows(
    grid: &[Hyperparams],
    rows: &[Vec<f64>],
    y: &[f64],
    log_columns: &[usize],
    inner_folds: usize,
    seed: u64,
) -> Result<RegressorSpec> {
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    for g in grid {
        g.validate()?;
    }
    if rows.len() != y.len() {
        return Err(Error::DimensionMismatch(format!("{} rows but {} labels", rows.len(), y.len())));
    }
    if inner_folds < 2 || y.len() < inner_folds {
        return Err(Error::DimensionMismatch(format!(
            "{} rows cannot form {inner_folds} inner folds",
            y.len()
        )));
    }
    if grid.len() == 1 {
        return Ok(RegressorSpec::new(grid[0].clone(), seed));
    }

    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.sort_by(|&a, &b| lexicographic(&rows[a], &rows[b]).then(y[a].total_cmp(&y[b])));
    order.shuffle(&mut seed::rng(seed, &[0x6121D]));
    let mut fold_of = vec![0; rows.len()];
    for (pos, &i) in order.iter().enumerate() {
        fold_of[i] = pos % inner_folds;
    }

    let scores: Vec<Result<f64>> = grid
        .par_iter()
        .map(|params| {
            let spec = RegressorSpec::new(params.clone(), seed);
            let mut total = 0.0;
            for f in 0..inner_folds {
                let (mut tr_x, mut tr_y, mut te_x, mut te_y) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
                for i in 0..rows.len() {
                    if fold_of[i] == f {
                        te_x.push(rows[i].clone());
                        te_y.push(y[i]);
                    } else {
                        tr_x.push(rows[i].clone());
                        tr_y.push(y[i]);
                    }
                }
                let model = fit_rows(&spec, &tr_x, &tr_y, log_columns)?;
                let mut sq = 0.0;
                for (r, t) in te_x.iter().zip(&te_y) {
                    let e = model.predict_row(r)? - t;
                    sq += e * e;
                }
                total += (sq / te_y.len() as f64).sqrt();
            }
            Ok(total / inner_folds as f64)
        })
        .collect();

    let mut best: Option<(usize, f64)> = None;
    for (i, s) in scores.into_iter().enumerate() {
        let s = s?;
        if best.is_none_or(|(_, b)| s < b) {
            best = Some((i, s));
        }
    }
    let (i, _) = best.expect("grid is non-empty");
    Ok(RegressorSpec::new(grid[i].clone(), seed))
}

#[cfg(test)]
mod tests;
