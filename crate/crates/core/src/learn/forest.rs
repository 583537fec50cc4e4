use rand::Rng;

use super::tree::{RegressionTree, TreeParams};
use super::MaxFeatures;
use crate::seed;

#[derive(Debug, Clone)]
pub struct RandomForest {
    trees: Vec<RegressionTree>,
}

impl RandomForest {
    pub(crate) fn fit(
        rows: &[Vec<f64>],
        y: &[f64],
        n_trees: usize,
        max_depth: Option<usize>,
        max_features: MaxFeatures,
        seed: u64,
    ) -> Self {
        let n = rows.len();
        let params = TreeParams {
            max_depth,
            max_features: Some(max_features.count(rows[0].len())),
        };
        let trees = (0..n_trees)
            .map(|t| {
                let mut rng = seed::rng(seed, &[0xF0, t as u64]);
                let sample: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
                RegressionTree::fit(rows, y, &sample, params, &mut rng)
            })
            .collect();
        Self { trees }
    }

    pub(crate) fn predict(&self, z: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(z)).sum::<f64>() / self.trees.len() as f64
    }
}
