//! k-core pruning and per-user cross-validation plans.

use std::collections::{HashMap, VecDeque};
use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::interactions::InteractionDataset;
use crate::seed;

pub const DEFAULT_CORE: usize = 5;
pub const N_FOLDS: usize = 5;

/// Returns the k-core: the largest sub-dataset in which every user and every
/// item keeps at least `k` interactions. The result may be empty.
pub fn k_core_prune(dataset: &InteractionDataset, k: usize) -> InteractionDataset {
    let k = k.max(1);
    let pairs = dataset.pairs();
    let mut user_deg = dataset.user_degrees();
    let mut item_deg = dataset.item_degrees();

    let mut user_edges = vec![Vec::new(); dataset.n_users()];
    let mut item_edges = vec![Vec::new(); dataset.n_items()];
    for (e, &(u, i)) in pairs.iter().enumerate() {
        user_edges[u as usize].push(e);
        item_edges[i as usize].push(e);
    }

    let mut alive = vec![true; pairs.len()];
    let mut user_gone = vec![false; dataset.n_users()];
    let mut item_gone = vec![false; dataset.n_items()];

    #[derive(Clone, Copy)]
    enum Node {
        User(usize),
        Item(usize),
    }
    let mut queue: VecDeque<Node> = VecDeque::new();
    for (u, &d) in user_deg.iter().enumerate() {
        if d < k {
            user_gone[u] = true;
            queue.push_back(Node::User(u));
        }
    }
    for (i, &d) in item_deg.iter().enumerate() {
        if d < k {
            item_gone[i] = true;
            queue.push_back(Node::Item(i));
        }
    }

    while let Some(node) = queue.pop_front() {
        let edges = match node {
            Node::User(u) => &user_edges[u],
            Node::Item(i) => &item_edges[i],
        };
        for &e in edges {
            if !alive[e] {
                continue;
            }
            alive[e] = false;
            let (u, i) = (pairs[e].0 as usize, pairs[e].1 as usize);
            user_deg[u] -= 1;
            item_deg[i] -= 1;
            if !user_gone[u] && user_deg[u] < k {
                user_gone[u] = true;
                queue.push_back(Node::User(u));
            }
            if !item_gone[i] && item_deg[i] < k {
                item_gone[i] = true;
                queue.push_back(Node::Item(i));
            }
        }
    }

    dataset.retain_pairs(|e| alive[e])
}

/// One train/test partition of a dataset's interactions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldSplit {
    pub fold_index: usize,
    /// Sorted by (user, item).
    pub train: Vec<(u32, u32)>,
    /// Sorted by (user, item).
    pub test: Vec<(u32, u32)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CvPlan {
    pub seed: u64,
    pub folds: Vec<FoldSplit>,
}

/// Deals each user's interactions into `n_folds` test buckets.
///
/// A user's items are shuffled by a generator seeded from `(seed, user)` and
/// dealt round-robin starting at a random bucket, so each interaction is
/// tested exactly once and per-fold test counts differ by at most one.
pub fn make_cv_plan(dataset: &InteractionDataset, n_folds: usize, seed: u64) -> Result<CvPlan> {
    if n_folds < 2 {
        return Err(Error::InvalidArgument(format!("n_folds must be >= 2, got {n_folds}")));
    }
    let mut by_user: Vec<Vec<u32>> = vec![Vec::new(); dataset.n_users()];
    for &(u, i) in dataset.pairs() {
        by_user[u as usize].push(i);
    }

    let mut buckets: Vec<Vec<(u32, u32)>> = vec![Vec::new(); n_folds];
    let mut all: Vec<(u32, u32)> = Vec::with_capacity(dataset.n_interactions());
    for (u, items) in by_user.iter_mut().enumerate() {
        if items.len() < n_folds {
            return Err(Error::InsufficientInteractions {
                user: u as u32,
                count: items.len(),
                needed: n_folds,
            });
        }
        items.sort_unstable();
        let mut rng = seed::rng(seed, &[u as u64]);
        items.shuffle(&mut rng);
        let offset = rng.gen_range(0..n_folds);
        for (pos, &i) in items.iter().enumerate() {
            buckets[(offset + pos) % n_folds].push((u as u32, i));
            all.push((u as u32, i));
        }
    }
    all.sort_unstable();

    let folds = buckets
        .into_iter()
        .enumerate()
        .map(|(f, mut test)| {
            test.sort_unstable();
            let train = sorted_difference(&all, &test);
            FoldSplit {
                fold_index: f,
                train,
                test,
            }
        })
        .collect();
    Ok(CvPlan { seed, folds })
}

fn sorted_difference(all: &[(u32, u32)], remove: &[(u32, u32)]) -> Vec<(u32, u32)> {
    let mut out = Vec::with_capacity(all.len() - remove.len());
    let mut j = 0;
    for &p in all {
        while j < remove.len() && remove[j] < p {
            j += 1;
        }
        if j < remove.len() && remove[j] == p {
            continue;
        }
        out.push(p);
    }
    out
}

impl CvPlan {
    pub fn n_folds(&self) -> usize {
        self.folds.len()
    }

    /// Writes `fold,user,item,role` rows with original tokens.
    pub fn write_csv<W: Write>(&self, dataset: &InteractionDataset, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["fold", "user", "item", "role"])?;
        for fold in &self.folds {
            let f = fold.fold_index.to_string();
            for (role, pairs) in [("train", &fold.train), ("test", &fold.test)] {
                for &(u, i) in pairs.iter() {
                    w.write_record([f.as_str(), dataset.user_token(u), dataset.item_token(i), role])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a plan written by [`CvPlan::write_csv`] against the same dataset.
    pub fn read_csv<R: Read>(dataset: &InteractionDataset, seed: u64, reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["fold", "user", "item", "role"] {
            return Err(Error::SchemaMismatch(format!("unexpected split header {headers:?}")));
        }
        let mut folds: HashMap<usize, FoldSplit> = HashMap::new();
        for record in rdr.records() {
            let record = record?;
            let line = record.position().map_or(0, |p| p.line());
            let bad = |m: &str| Error::Parse {
                line,
                message: m.to_owned(),
            };
            if record.len() != 4 {
                return Err(bad("expected 4 columns"));
            }
            let f: usize = record[0].parse().map_err(|_| bad("fold is not an integer"))?;
            let u = dataset.user_of(&record[1]).ok_or_else(|| bad("unknown user token"))?;
            let i = dataset.item_of(&record[2]).ok_or_else(|| bad("unknown item token"))?;
            let fold = folds.entry(f).or_insert_with(|| FoldSplit {
                fold_index: f,
                train: Vec::new(),
                test: Vec::new(),
            });
            match &record[3] {
                "train" => fold.train.push((u, i)),
                "test" => fold.test.push((u, i)),
                _ => return Err(bad("role must be train or test")),
            }
        }
        let n = folds.len();
        let mut out = Vec::with_capacity(n);
        for f in 0..n {
            let mut fold = folds
                .remove(&f)
                .ok_or_else(|| Error::SchemaMismatch(format!("fold {f} missing from split file")))?;
            fold.train.sort_unstable();
            fold.test.sort_unstable();
            out.push(fold);
        }
        Ok(CvPlan { seed, folds: out })
    }
}
