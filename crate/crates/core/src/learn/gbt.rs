use rand::seq::index;

use super::tree::{RegressionTree, TreeParams};
use crate::seed;

/// Squared-loss boosting of shallow trees from a constant start.
#[derive(Debug, Clone)]
pub struct GradientBoostedTrees {
    init: f64,
    learning_rate: f64,
    stages: Vec<RegressionTree>,
}

impl GradientBoostedTrees {
    pub(crate) fn fit(
        rows: &[Vec<f64>],
        y: &[f64],
        n_trees: usize,
        max_depth: usize,
        learning_rate: f64,
        subsample: f64,
        seed: u64,
    ) -> Self {
        let n = rows.len();
        let init = y.iter().sum::<f64>() / n as f64;
        let mut current = vec![init; n];
        let params = TreeParams {
            max_depth: Some(max_depth),
            max_features: None,
        };
        let take = ((subsample * n as f64).floor() as usize).clamp(1, n);
        let mut stages = Vec::with_capacity(n_trees);
        for t in 0..n_trees {
            let residual: Vec<f64> = y.iter().zip(&current).map(|(a, b)| a - b).collect();
            let mut rng = seed::rng(seed, &[0xB0, t as u64]);
            let mut sample: Vec<usize> = if take == n {
                (0..n).collect()
            } else {
                index::sample(&mut rng, n, take).into_vec()
            };
            sample.sort_unstable();
            let tree = RegressionTree::fit(rows, &residual, &sample, params, &mut rng);
            for (c, r) in current.iter_mut().zip(rows) {
                *c += learning_rate * tree.predict(r);
            }
            stages.push(tree);
        }
        Self {
            init,
            learning_rate,
            stages,
        }
    }

    pub(crate) fn predict(&self, z: &[f64]) -> f64 {
        self.init + self.learning_rate * self.stages.iter().map(|t| t.predict(z)).sum::<f64>()
    }
}
