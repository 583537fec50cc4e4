//! CART regression trees with variance-reduction splits.

use rand::seq::SliceRandom;
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitChoice {
    pub feature: usize,
    /// Rows with `x[feature] <= threshold` go left.
    pub threshold: f64,
    /// Summed squared error of both children.
    pub sse: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeParams {
    /// `None` grows until leaves are pure or hold one row.
    pub max_depth: Option<usize>,
    /// `None` considers every feature at every node.
    pub max_features: Option<usize>,
}

#[derive(Debug, Clone)]
enum Node {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone)]
pub struct RegressionTree {
    nodes: Vec<Node>,
}

/// Best split of `sample` (row indices, repeats allowed) over `features`.
///
/// Candidates are scanned feature by feature in the given order and, within
/// a feature, by ascending threshold. A later candidate replaces the current
/// best only if it is lower by more than rounding noise, so candidates that
/// induce the same partition resolve to the first one.
pub fn best_split(rows: &[Vec<f64>], y: &[f64], sample: &[usize], features: &[usize]) -> Option<SplitChoice> {
    let n = sample.len();
    if n < 2 {
        return None;
    }
    let total: f64 = sample.iter().map(|&i| y[i]).sum();
    let total_sq: f64 = sample.iter().map(|&i| y[i] * y[i]).sum();
    let eps = 1e-12 * (1.0 + total_sq);
    let mut order = sample.to_vec();
    let mut best: Option<SplitChoice> = None;
    for &f in features {
        order.sort_by(|&a, &b| rows[a][f].total_cmp(&rows[b][f]).then(a.cmp(&b)));
        let (mut s, mut sq) = (0.0, 0.0);
        for pos in 0..n - 1 {
            let i = order[pos];
            s += y[i];
            sq += y[i] * y[i];
            let (lo, hi) = (rows[i][f], rows[order[pos + 1]][f]);
            if lo == hi {
                continue;
            }
            let nl = (pos + 1) as f64;
            let nr = (n - pos - 1) as f64;
            let sse = (sq - s * s / nl) + ((total_sq - sq) - (total - s) * (total - s) / nr);
            if best.is_none_or(|b| sse < b.sse - eps) {
                let mid = lo + (hi - lo) / 2.0;
                best = Some(SplitChoice {
                    feature: f,
                    threshold: if mid < hi { mid } else { lo },
                    sse,
                });
            }
        }
    }
    best
}

impl RegressionTree {
    pub fn fit<R: Rng>(rows: &[Vec<f64>], y: &[f64], sample: &[usize], params: TreeParams, rng: &mut R) -> Self {
        let mut tree = Self { nodes: Vec::new() };
        tree.grow(rows, y, sample.to_vec(), 0, params, rng);
        tree
    }

    fn grow<R: Rng>(
        &mut self,
        rows: &[Vec<f64>],
        y: &[f64],
        sample: Vec<usize>,
        depth: usize,
        params: TreeParams,
        rng: &mut R,
    ) -> usize {
        let id = self.nodes.len();
        let mean = sample.iter().map(|&i| y[i]).sum::<f64>() / sample.len() as f64;
        self.nodes.push(Node::Leaf(mean));
        let pure = sample.iter().all(|&i| y[i] == y[sample[0]]);
        if sample.len() < 2 || pure || params.max_depth.is_some_and(|d| depth >= d) {
            return id;
        }
        let p = rows[0].len();
        let mut features: Vec<usize> = (0..p).collect();
        if let Some(m) = params.max_features.filter(|&m| m < p) {
            features.partial_shuffle(rng, m);
            features.truncate(m);
            features.sort_unstable();
        }
        let Some(split) = best_split(rows, y, &sample, &features) else {
            return id;
        };
        let (left, right): (Vec<usize>, Vec<usize>) =
            sample.iter().partition(|&&i| rows[i][split.feature] <= split.threshold);
        let l = self.grow(rows, y, left, depth + 1, params, rng);
        let r = self.grow(rows, y, right, depth + 1, params, rng);
        self.nodes[id] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left: l,
            right: r,
        };
        id
    }

    pub fn predict(&self, z: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf(v) => return v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if z[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf(_))).count()
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match nodes[at] {
                Node::Leaf(_) => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }
}
