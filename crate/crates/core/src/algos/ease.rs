use nalgebra::DMatrix;

use super::{Deadline, TrainMatrix};

/// Item catalogs up to this size always run the closed form to completion.
pub const EASE_BUDGET_EXEMPT_ITEMS: usize = 4096;

/// Item-item weights `B` from the ridge closed form with a zero diagonal.
#[derive(Debug, Clone)]
pub struct EaseModel {
    weights: DMatrix<f64>,
}

impl EaseModel {
    pub(crate) fn fit(train: &TrainMatrix, penalty: f64, deadline: &Deadline) -> (Self, bool) {
        let n = train.n_items();
        let mut gram = DMatrix::<f64>::zeros(n, n);
        for items in train.rows() {
            for &a in items {
                for &b in items {
                    gram[(a as usize, b as usize)] += 1.0;
                }
            }
        }
        if n > EASE_BUDGET_EXEMPT_ITEMS && deadline.passed() {
            return (
                Self {
                    weights: DMatrix::zeros(n, n),
                },
                true,
            );
        }
        for i in 0..n {
            gram[(i, i)] += penalty;
        }
        let inverse = gram
            .cholesky()
            .expect("gram plus positive ridge is positive definite")
            .inverse();
        let mut weights = DMatrix::<f64>::zeros(n, n);
        for j in 0..n {
            let pjj = inverse[(j, j)];
            for i in 0..n {
                if i != j {
                    weights[(i, j)] = -inverse[(i, j)] / pjj;
                }
            }
        }
        (Self { weights }, false)
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub(crate) fn score_into(&self, seen: &[u32], scores: &mut [f64]) {
        for &j in seen {
            let j = j as usize;
            for (i, s) in scores.iter_mut().enumerate() {
                *s += self.weights[(j, i)];
            }
        }
    }
}
