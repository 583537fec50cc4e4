//! Implicit-feedback top-k recommenders behind one fit/recommend contract.
//!
//! Every algorithm scores all items for a user from the binary training
//! matrix. [`FittedModel::recommend`] then drops the user's training items and
//! returns the best `k` by score, ties going to the lower item index.

mod als;
mod ease;
mod knn;

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

pub use als::AlsModel;
pub use ease::EaseModel;
pub use knn::{cosine_neighbors, Neighbor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    Random,
    Popularity,
    UserKNN,
    ItemKNN,
    ImplicitALS,
    EASE,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] = [
        Algorithm::Random,
        Algorithm::Popularity,
        Algorithm::UserKNN,
        Algorithm::ItemKNN,
        Algorithm::ImplicitALS,
        Algorithm::EASE,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Random => "Random",
            Algorithm::Popularity => "Popularity",
            Algorithm::UserKNN => "UserKNN",
            Algorithm::ItemKNN => "ItemKNN",
            Algorithm::ImplicitALS => "ImplicitALS",
            Algorithm::EASE => "EASE",
        }
    }

    pub fn has_hyperparameters(self) -> bool {
        !matches!(self, Algorithm::Random | Algorithm::Popularity)
    }
}

/// One algorithm with one fixed configuration, e.g. `ItemKNN-1`.
///
/// Ordering is by algorithm then configuration, which is the zoo order and
/// the tie-break order used throughout ranking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AlgoComboId {
    pub algorithm: Algorithm,
    pub config_index: u8,
}

impl AlgoComboId {
    pub fn new(algorithm: Algorithm, config_index: u8) -> Self {
        Self {
            algorithm,
            config_index,
        }
    }
}

impl fmt::Display for AlgoComboId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.algorithm.name(), self.config_index)
    }
}

impl FromStr for AlgoComboId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::SchemaMismatch(format!("bad combo id {s:?}"));
        let (name, cfg) = s.rsplit_once('-').ok_or_else(bad)?;
        let algorithm = Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == name)
            .ok_or_else(bad)?;
        let config_index = cfg.parse().map_err(|_| bad())?;
        Ok(Self::new(algorithm, config_index))
    }
}

impl Serialize for AlgoComboId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for AlgoComboId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Hyperparameters {
    None,
    Knn {
        neighbors: usize,
    },
    Als {
        factors: usize,
        regularization: f64,
        epochs: usize,
        alpha: f64,
    },
    Ease {
        penalty: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComboSpec {
    pub id: AlgoComboId,
    pub params: Hyperparameters,
}

impl ComboSpec {
    pub fn validate(&self) -> Result<()> {
        use Algorithm::*;
        let bad = |m: &str| Err(Error::InvalidHyperparameter(format!("{}: {m}", self.id)));
        match (self.id.algorithm, &self.params) {
            (Random | Popularity, Hyperparameters::None) => {
                if self.id.config_index != 0 {
                    return bad("algorithms without hyperparameters have a single config");
                }
                Ok(())
            }
            (UserKNN | ItemKNN, Hyperparameters::Knn { neighbors }) => {
                if *neighbors == 0 {
                    return bad("neighbors must be >= 1");
                }
                Ok(())
            }
            (ImplicitALS, Hyperparameters::Als {
                factors,
                regularization,
                epochs,
                alpha,
            }) => {
                if *factors == 0 || *epochs == 0 {
                    return bad("factors and epochs must be >= 1");
                }
                if !(*regularization >= 0.0 && *alpha >= 0.0) {
                    return bad("regularization and alpha must be non-negative");
                }
                Ok(())
            }
            (EASE, Hyperparameters::Ease { penalty }) => {
                if !(*penalty > 0.0) {
                    return bad("penalty must be positive");
                }
                Ok(())
            }
            _ => bad("hyperparameters do not match algorithm"),
        }
    }
}

pub const ALS_ALPHA: f64 = 40.0;
pub const ALS_EPOCHS: usize = 20;

/// The ten default algorithm configurations.
pub fn default_zoo() -> Vec<ComboSpec> {
    use Algorithm::*;
    let combo = |a, c, params| ComboSpec {
        id: AlgoComboId::new(a, c),
        params,
    };
    let als = |factors, regularization| Hyperparameters::Als {
        factors,
        regularization,
        epochs: ALS_EPOCHS,
        alpha: ALS_ALPHA,
    };
    vec![
        combo(Random, 0, Hyperparameters::None),
        combo(Popularity, 0, Hyperparameters::None),
        combo(UserKNN, 0, Hyperparameters::Knn { neighbors: 20 }),
        combo(UserKNN, 1, Hyperparameters::Knn { neighbors: 100 }),
        combo(ItemKNN, 0, Hyperparameters::Knn { neighbors: 20 }),
        combo(ItemKNN, 1, Hyperparameters::Knn { neighbors: 100 }),
        combo(ImplicitALS, 0, als(32, 0.01)),
        combo(ImplicitALS, 1, als(128, 0.1)),
        combo(EASE, 0, Hyperparameters::Ease { penalty: 10.0 }),
        combo(EASE, 1, Hyperparameters::Ease { penalty: 500.0 }),
    ]
}

/// Binary user-item training matrix with both row and column adjacency.
#[derive(Debug, Clone)]
pub struct TrainMatrix {
    n_users: usize,
    n_items: usize,
    user_items: Vec<Vec<u32>>,
    item_users: Vec<Vec<u32>>,
}

impl TrainMatrix {
    /// `pairs` must be distinct and inside the given dimensions.
    pub fn new(n_users: usize, n_items: usize, pairs: &[(u32, u32)]) -> Self {
        let mut user_items = vec![Vec::new(); n_users];
        let mut item_users = vec![Vec::new(); n_items];
        for &(u, i) in pairs {
            user_items[u as usize].push(i);
            item_users[i as usize].push(u);
        }
        user_items.iter_mut().for_each(|v| v.sort_unstable());
        item_users.iter_mut().for_each(|v| v.sort_unstable());
        Self {
            n_users,
            n_items,
            user_items,
            item_users,
        }
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn nnz(&self) -> usize {
        self.user_items.iter().map(Vec::len).sum()
    }

    pub fn user_items(&self, user: u32) -> &[u32] {
        &self.user_items[user as usize]
    }

    pub fn item_users(&self, item: u32) -> &[u32] {
        &self.item_users[item as usize]
    }

    pub(crate) fn rows(&self) -> &[Vec<u32>] {
        &self.user_items
    }

    pub(crate) fn cols(&self) -> &[Vec<u32>] {
        &self.item_users
    }
}

/// Where a model came from; informational only.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TrainingTag {
    pub dataset: String,
    pub fold: usize,
}

#[derive(Debug, Clone)]
enum ModelState {
    Random { seed: u64 },
    Popularity { counts: Vec<f64> },
    UserKnn { neighbors: Vec<Vec<Neighbor>>, user_items: Vec<Vec<u32>> },
    ItemKnn { reverse: Vec<Vec<Neighbor>> },
    Als(AlsModel),
    Ease(EaseModel),
}

#[derive(Debug, Clone)]
pub struct FittedModel {
    combo: AlgoComboId,
    state: ModelState,
    n_items: usize,
    known_users: Vec<bool>,
    budget_exhausted: bool,
    pub trained_on: TrainingTag,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopKRecommendations {
    pub user: u32,
    pub ranked_items: Vec<u32>,
}

/// Wall-clock budget shared by the iterative parts of a fit.
#[derive(Debug, Clone, Copy)]
pub struct Deadline {
    start: Instant,
    budget: Duration,
}

impl Deadline {
    pub fn new(budget: Duration) -> Self {
        Self {
            start: Instant::now(),
            budget,
        }
    }

    pub fn passed(&self) -> bool {
        self.start.elapsed() >= self.budget
    }
}

/// Trains one combo on a training matrix.
///
/// Iterative algorithms check `budget` between epochs and stop early, setting
/// [`FittedModel::budget_exhausted`]; the model at that point is kept.
pub fn fit(spec: &ComboSpec, train: &TrainMatrix, budget: Duration, seed: u64) -> Result<FittedModel> {
    spec.validate()?;
    if train.nnz() == 0 {
        return Err(Error::EmptyInput);
    }
    if budget.is_zero() {
        return Err(Error::InvalidArgument("budget must be positive".into()));
    }
    let deadline = Deadline::new(budget);
    let (state, exhausted) = match (&spec.params, spec.id.algorithm) {
        (_, Algorithm::Random) => (ModelState::Random { seed }, false),
        (_, Algorithm::Popularity) => (
            ModelState::Popularity {
                counts: train.cols().iter().map(|c| c.len() as f64).collect(),
            },
            false,
        ),
        (Hyperparameters::Knn { neighbors }, Algorithm::ItemKNN) => {
            let (lists, exhausted) = cosine_neighbors(train.cols(), train.rows(), *neighbors, &deadline);
            // item i scores from u's history j through j -> i links
            let mut reverse = vec![Vec::new(); train.n_items()];
            for (i, list) in lists.iter().enumerate() {
                for nb in list {
                    reverse[nb.index as usize].push(Neighbor {
                        index: i as u32,
                        similarity: nb.similarity,
                    });
                }
            }
            (ModelState::ItemKnn { reverse }, exhausted)
        }
        (Hyperparameters::Knn { neighbors }, Algorithm::UserKNN) => {
            let (lists, exhausted) = cosine_neighbors(train.rows(), train.cols(), *neighbors, &deadline);
            (
                ModelState::UserKnn {
                    neighbors: lists,
                    user_items: train.rows().to_vec(),
                },
                exhausted,
            )
        }
        (
            Hyperparameters::Als {
                factors,
                regularization,
                epochs,
                alpha,
            },
            Algorithm::ImplicitALS,
        ) => {
            let model = AlsModel::fit(train, *factors, *regularization, *alpha, *epochs, seed, &deadline);
            let exhausted = model.epochs_run() < *epochs;
            (ModelState::Als(model), exhausted)
        }
        (Hyperparameters::Ease { penalty }, Algorithm::EASE) => {
            let (model, exhausted) = EaseModel::fit(train, *penalty, &deadline);
            (ModelState::Ease(model), exhausted)
        }
        _ => unreachable!("validated above"),
    };
    Ok(FittedModel {
        combo: spec.id,
        state,
        n_items: train.n_items(),
        known_users: train.rows().iter().map(|r| !r.is_empty()).collect(),
        budget_exhausted: exhausted,
        trained_on: TrainingTag::default(),
    })
}

impl FittedModel {
    pub fn combo(&self) -> AlgoComboId {
        self.combo
    }

    pub fn budget_exhausted(&self) -> bool {
        self.budget_exhausted
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn als(&self) -> Option<&AlsModel> {
        match &self.state {
            ModelState::Als(m) => Some(m),
            _ => None,
        }
    }

    pub fn ease(&self) -> Option<&EaseModel> {
        match &self.state {
            ModelState::Ease(m) => Some(m),
            _ => None,
        }
    }

    /// Item popularity counts, for the popularity model only.
    pub fn popularity(&self) -> Option<&[f64]> {
        match &self.state {
            ModelState::Popularity { counts } => Some(counts),
            _ => None,
        }
    }

    /// Scores every item for `user`. `seen` is the user's training history.
    pub fn score_all(&self, user: u32, seen: &[u32]) -> Result<Vec<f64>> {
        if !self.known_users.get(user as usize).copied().unwrap_or(false) {
            return Err(Error::UnknownUser(user));
        }
        let mut scores = vec![0.0; self.n_items];
        match &self.state {
            ModelState::Random { seed } => {
                for (i, s) in scores.iter_mut().enumerate() {
                    *s = seed::unit_f64(seed::derive(*seed, &[user as u64, i as u64]));
                }
            }
            ModelState::Popularity { counts } => scores.copy_from_slice(counts),
            ModelState::ItemKnn { reverse } => {
                for &j in seen {
                    for nb in &reverse[j as usize] {
                        scores[nb.index as usize] += nb.similarity;
                    }
                }
            }
            ModelState::UserKnn {
                neighbors,
                user_items,
            } => {
                for nb in &neighbors[user as usize] {
                    for &i in &user_items[nb.index as usize] {
                        scores[i as usize] += nb.similarity;
                    }
                }
            }
            ModelState::Als(m) => m.score_into(user, &mut scores),
            ModelState::Ease(m) => m.score_into(seen, &mut scores),
        }
        Ok(scores)
    }

    /// Top-`k` unseen items for `user`; ties go to the lower item index.
    pub fn recommend(&self, user: u32, k: usize, seen: &[u32]) -> Result<TopKRecommendations> {
        if k == 0 {
            return Err(Error::InvalidArgument("k must be >= 1".into()));
        }
        let scores = self.score_all(user, seen)?;
        Ok(TopKRecommendations {
            user,
            ranked_items: top_k(&scores, k, seen),
        })
    }
}

/// Indices of the `k` largest scores not in `exclude`, descending, ties by index.
pub fn top_k(scores: &[f64], k: usize, exclude: &[u32]) -> Vec<u32> {
    let mut blocked = vec![false; scores.len()];
    for &i in exclude {
        if let Some(b) = blocked.get_mut(i as usize) {
            *b = true;
        }
    }
    let mut cand: Vec<(f64, u32)> = scores
        .iter()
        .enumerate()
        .filter(|(i, _)| !blocked[*i])
        .map(|(i, &s)| (s + 0.0, i as u32))
        .collect();
    let order = |a: &(f64, u32), b: &(f64, u32)| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1));
    if cand.len() > k {
        cand.select_nth_unstable_by(k - 1, order);
        cand.truncate(k);
    }
    cand.sort_unstable_by(order);
    cand.into_iter().map(|(_, i)| i).collect()
}

#[cfg(test)]
mod tests;
