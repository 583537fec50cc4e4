//! Synthetic corpora whose best algorithm is governed by a planted rule.

use std::collections::HashSet;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::algos::Algorithm;
use crate::error::{Error, Result};
use crate::interactions::InteractionDataset;
use crate::meta_features::MetaFeatureVector;
use crate::seed;

/// How interactions are drawn for one dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Regime {
    /// Every user samples items from one shared Zipf popularity curve.
    Skewed { exponent: f64 },
    /// Items sit on a ring; each user holds `interests` random centres and
    /// draws items within `width` ring steps of one of them.
    Local { interests: usize, width: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub n_users: usize,
    pub n_items: usize,
    /// Target fraction of the user-item matrix that is filled.
    pub density: f64,
    pub regime: Regime,
}

fn zipf_weights(n: usize, exponent: f64) -> Vec<f64> {
    (0..n).map(|r| 1.0 / ((r + 1) as f64).powf(exponent)).collect()
}

/// Draws `count` distinct indices with probability proportional to `weights`.
fn sample_distinct(rng: &mut ChaCha8Rng, dist: &WeightedIndex<f64>, count: usize, out: &mut Vec<u32>) {
    let mut seen = HashSet::with_capacity(count);
    while seen.len() < count {
        let i = dist.sample(rng) as u32;
        if seen.insert(i) {
            out.push(i);
        }
    }
}

/// Generates `(user, item)` index pairs for one dataset.
pub fn generate_pairs(spec: &DatasetSpec, rng: &mut ChaCha8Rng) -> Result<Vec<(u32, u32)>> {
    let DatasetSpec {
        n_users,
        n_items,
        density,
        regime,
    } = *spec;
    if n_users == 0 || n_items == 0 || !(density > 0.0 && density <= 1.0) {
        return Err(Error::InvalidArgument(format!("invalid synthetic dataset spec {spec:?}")));
    }
    let mean_degree = density * n_items as f64;
    let mut pairs = Vec::with_capacity((mean_degree * n_users as f64) as usize + n_users);
    match regime {
        Regime::Skewed { exponent } => {
            // item identities are shuffled so popularity is not tied to index
            let mut perm: Vec<u32> = (0..n_items as u32).collect();
            perm.shuffle(rng);
            let dist = WeightedIndex::new(zipf_weights(n_items, exponent)).expect("positive weights");
            let mut items = Vec::new();
            for u in 0..n_users as u32 {
                let degree = ((mean_degree * rng.gen_range(0.5..1.5)).round() as usize).clamp(1, n_items);
                items.clear();
                sample_distinct(rng, &dist, degree, &mut items);
                pairs.extend(items.iter().map(|&i| (u, perm[i as usize])));
            }
        }
        Regime::Local { interests, width } => {
            if interests == 0 || width == 0 || 2 * width + 1 > n_items {
                return Err(Error::InvalidArgument(format!("invalid local regime {regime:?}")));
            }
            let mut perm: Vec<u32> = (0..n_items as u32).collect();
            perm.shuffle(rng);
            let window = (2 * width + 1) * interests;
            for u in 0..n_users as u32 {
                let centres: Vec<usize> = (0..interests).map(|_| rng.gen_range(0..n_items)).collect();
                let degree = ((mean_degree * rng.gen_range(0.5..1.5)).round() as usize).clamp(1, window.min(n_items));
                let mut seen = HashSet::with_capacity(degree);
                let mut guard = 0;
                while seen.len() < degree && guard < 100 * degree {
                    guard += 1;
                    let c = centres[rng.gen_range(0..interests)];
                    let offset = rng.gen_range(0..=2 * width);
                    seen.insert(perm[(c + n_items + offset - width) % n_items]);
                }
                let mut items: Vec<u32> = seen.into_iter().collect();
                items.sort_unstable();
                pairs.extend(items.into_iter().map(|i| (u, i)));
            }
        }
    }
    Ok(pairs)
}

/// Wraps index pairs as a dataset with tokens `u<i>` / `i<j>`.
pub fn to_dataset(pairs: &[(u32, u32)]) -> InteractionDataset {
    let tokens: Vec<(String, String)> = pairs.iter().map(|&(u, i)| (format!("u{u}"), format!("i{i}"))).collect();
    InteractionDataset::from_token_pairs(tokens.iter().map(|(u, i)| (u.as_str(), i.as_str())))
}

pub fn generate_dataset(spec: &DatasetSpec, seed: u64) -> Result<InteractionDataset> {
    let mut rng = seed::rng(seed, &[0x5E7]);
    Ok(to_dataset(&generate_pairs(spec, &mut rng)?))
}

/// Which meta-feature decides the planted winner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlantedRule {
    /// Density above 0.2 ⇒ ItemKNN-0 wins; sparse popularity-skewed ⇒ Popularity wins.
    DensityItemknn,
}

impl PlantedRule {
    pub const DENSITY_THRESHOLD: f64 = 0.2;

    pub fn id(self) -> &'static str {
        match self {
            PlantedRule::DensityItemknn => "density-itemknn",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        (s == "density-itemknn").then_some(PlantedRule::DensityItemknn)
    }

    /// The algorithm the rule says should win on a dataset with these features.
    pub fn expected_winner(self, meta: &MetaFeatureVector) -> Algorithm {
        match self {
            PlantedRule::DensityItemknn if meta.density > Self::DENSITY_THRESHOLD => Algorithm::ItemKNN,
            PlantedRule::DensityItemknn => Algorithm::Popularity,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_datasets: usize,
    pub seed: u64,
    pub rule: PlantedRule,
    /// Upper bound on generated interactions per dataset.
    pub max_interactions: usize,
    pub dense_users: (usize, usize),
    pub dense_items: (usize, usize),
    pub dense_density: (f64, f64),
    pub sparse_users: (usize, usize),
    pub sparse_items: (usize, usize),
    pub sparse_density: (f64, f64),
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_datasets: 24,
            seed: 0,
            rule: PlantedRule::DensityItemknn,
            max_interactions: 12_000,
            dense_users: (60, 110),
            dense_items: (250, 400),
            dense_density: (0.26, 0.36),
            sparse_users: (800, 2000),
            sparse_items: (500, 1000),
            sparse_density: (0.008, 0.015),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.n_datasets < 3 {
            return bad(format!("n_datasets must be >= 3, got {}", self.n_datasets));
        }
        for (name, (lo, hi)) in [
            ("dense_users", self.dense_users),
            ("dense_items", self.dense_items),
            ("sparse_users", self.sparse_users),
            ("sparse_items", self.sparse_items),
        ] {
            if lo == 0 || lo > hi {
                return bad(format!("{name}: invalid range {lo}..={hi}"));
            }
        }
        for (name, (lo, hi)) in [("dense_density", self.dense_density), ("sparse_density", self.sparse_density)] {
            if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
                return bad(format!("{name}: invalid range {lo}..={hi}"));
            }
        }
        if self.sparse_density.1 >= PlantedRule::DENSITY_THRESHOLD || self.dense_density.0 <= PlantedRule::DENSITY_THRESHOLD {
            return bad("density ranges must straddle the rule threshold 0.2".into());
        }
        if self.max_interactions < 1000 {
            return bad(format!("max_interactions must be >= 1000, got {}", self.max_interactions));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub name: String,
    pub spec: DatasetSpec,
    pub dataset: InteractionDataset,
}

/// Width of each interest window for a dense dataset: items within a window
/// are close on the ring, so a 20-item neighbourhood covers one window.
const LOCAL_WIDTH: usize = 10;

/// Alternates dense local-interest datasets (even positions) with sparse
/// popularity-skewed ones (odd positions).
pub fn generate_corpus(config: &SynthConfig) -> Result<Vec<SynthDataset>> {
    config.validate()?;
    (0..config.n_datasets)
        .map(|d| {
            let mut rng = seed::rng(config.seed, &[0xC0, d as u64]);
            let dense = d % 2 == 0;
            let (users, items, density) = if dense {
                (config.dense_users, config.dense_items, config.dense_density)
            } else {
                (config.sparse_users, config.sparse_items, config.sparse_density)
            };
            let n_users = rng.gen_range(users.0..=users.1);
            let n_items = rng.gen_range(items.0..=items.1);
            // per-user degrees vary, so aim below the cap and truncate any overshoot
            let cap = 0.9 * config.max_interactions as f64 / (n_users * n_items) as f64;
            let density = rng.gen_range(density.0..=density.1).min(cap);
            let regime = if dense {
                let degree = density * n_items as f64;
                let window = 2 * LOCAL_WIDTH + 1;
                Regime::Local {
                    interests: ((1.6 * degree / window as f64).ceil() as usize).max(1),
                    width: LOCAL_WIDTH.min((n_items - 1) / 2),
                }
            } else {
                Regime::Skewed {
                    exponent: rng.gen_range(0.9..1.2),
                }
            };
            let spec = DatasetSpec {
                n_users,
                n_items,
                density,
                regime,
            };
            let mut pairs = generate_pairs(&spec, &mut rng)?;
            pairs.truncate(config.max_interactions);
            Ok(SynthDataset {
                name: format!("synth-{d:02}"),
                spec,
                dataset: to_dataset(&pairs),
            })
        })
        .collect()
}
