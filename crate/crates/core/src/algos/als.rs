//! Weighted-regularized matrix factorization for binary implicit data.
//!
//! Observed cells carry preference 1 with confidence `1 + alpha`, all other
//! cells preference 0 with confidence 1. Each half-epoch fixes one side and
//! refines every row of the other with a few warm-started conjugate-gradient
//! steps on its ridge system, which never increases the loss.

use std::time::Duration;

use rand::Rng;

use super::{Deadline, TrainMatrix};
use crate::seed;

const CG_STEPS: usize = 3;
const INIT_SCALE: f64 = 0.01;

#[derive(Debug, Clone)]
pub struct AlsModel {
    factors: usize,
    regularization: f64,
    alpha: f64,
    user_factors: Vec<f64>,
    item_factors: Vec<f64>,
    epochs_run: usize,
}

impl AlsModel {
    pub(crate) fn fit(
        train: &TrainMatrix,
        factors: usize,
        regularization: f64,
        alpha: f64,
        epochs: usize,
        seed: u64,
        deadline: &Deadline,
    ) -> Self {
        Self::train(train, factors, regularization, alpha, epochs, seed, deadline, |_| {})
    }

    /// Runs training and reports the loss before the first and after every epoch.
    pub fn fit_traced(
        train: &TrainMatrix,
        factors: usize,
        regularization: f64,
        alpha: f64,
        epochs: usize,
        seed: u64,
        budget: Duration,
    ) -> (Self, Vec<f64>) {
        let deadline = Deadline::new(budget);
        let mut trace = Vec::new();
        let model = Self::train(train, factors, regularization, alpha, epochs, seed, &deadline, |m| {
            trace.push(m.loss(train))
        });
        (model, trace)
    }

    #[allow(clippy::too_many_arguments)]
    fn train(
        train: &TrainMatrix,
        factors: usize,
        regularization: f64,
        alpha: f64,
        epochs: usize,
        seed: u64,
        deadline: &Deadline,
        mut on_epoch: impl FnMut(&Self),
    ) -> Self {
        let mut rng = seed::rng(seed, &[0xA15]);
        let mut init = |n: usize| -> Vec<f64> {
            (0..n * factors).map(|_| rng.gen::<f64>() * INIT_SCALE).collect()
        };
        let mut model = Self {
            factors,
            regularization,
            alpha,
            user_factors: init(train.n_users()),
            item_factors: init(train.n_items()),
            epochs_run: 0,
        };
        on_epoch(&model);
        for epoch in 0..epochs {
            half_step(&mut model.user_factors, &model.item_factors, train.rows(), factors, regularization, alpha);
            half_step(&mut model.item_factors, &model.user_factors, train.cols(), factors, regularization, alpha);
            model.epochs_run = epoch + 1;
            on_epoch(&model);
            if epoch + 1 < epochs && deadline.passed() {
                break;
            }
        }
        model
    }

    pub fn epochs_run(&self) -> usize {
        self.epochs_run
    }

    pub fn factors(&self) -> usize {
        self.factors
    }

    pub fn user_vector(&self, user: u32) -> &[f64] {
        let f = self.factors;
        &self.user_factors[user as usize * f..(user as usize + 1) * f]
    }

    pub fn item_vector(&self, item: u32) -> &[f64] {
        let f = self.factors;
        &self.item_factors[item as usize * f..(item as usize + 1) * f]
    }

    pub(crate) fn score_into(&self, user: u32, scores: &mut [f64]) {
        let x = self.user_vector(user);
        for (i, s) in scores.iter_mut().enumerate() {
            *s = dot(x, self.item_vector(i as u32));
        }
    }

    /// Full weighted squared loss plus ridge penalty, computed densely.
    pub fn loss(&self, train: &TrainMatrix) -> f64 {
        let mut total = 0.0;
        for u in 0..train.n_users() as u32 {
            let observed = train.user_items(u);
            let x = self.user_vector(u);
            for i in 0..train.n_items() as u32 {
                let pred = dot(x, self.item_vector(i));
                let (p, c) = if observed.binary_search(&i).is_ok() {
                    (1.0, 1.0 + self.alpha)
                } else {
                    (0.0, 1.0)
                };
                total += c * (p - pred) * (p - pred);
            }
        }
        let sq = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>();
        total + self.regularization * (sq(&self.user_factors) + sq(&self.item_factors))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Updates every row of `solve` given the fixed factors `fixed`.
fn half_step(solve: &mut [f64], fixed: &[f64], adjacency: &[Vec<u32>], f: usize, reg: f64, alpha: f64) {
    // gram = fixedᵀ fixed + reg·I
    let mut gram = vec![0.0; f * f];
    for row in fixed.chunks_exact(f) {
        for a in 0..f {
            let ra = row[a];
            if ra == 0.0 {
                continue;
            }
            let g = &mut gram[a * f..(a + 1) * f];
            for (gb, &rb) in g.iter_mut().zip(row) {
                *gb += ra * rb;
            }
        }
    }
    for a in 0..f {
        gram[a * f + a] += reg;
    }

    let mut r = vec![0.0; f];
    let mut p = vec![0.0; f];
    let mut ap = vec![0.0; f];
    for (row, neighbors) in solve.chunks_exact_mut(f).zip(adjacency) {
        let x = row;
        // A v = gram v + alpha Σ_{j∈N} (y_j·v) y_j ; b = (1 + alpha) Σ_{j∈N} y_j
        let apply = |v: &[f64], out: &mut [f64]| {
            for a in 0..f {
                out[a] = dot(&gram[a * f..(a + 1) * f], v);
            }
            for &j in neighbors {
                let y = &fixed[j as usize * f..(j as usize + 1) * f];
                let w = alpha * dot(y, v);
                for (o, &yv) in out.iter_mut().zip(y) {
                    *o += w * yv;
                }
            }
        };
        apply(x, &mut ap);
        r.iter_mut().zip(&ap).for_each(|(ri, a)| *ri = -a);
        for &j in neighbors {
            let y = &fixed[j as usize * f..(j as usize + 1) * f];
            for (ri, &yv) in r.iter_mut().zip(y) {
                *ri += (1.0 + alpha) * yv;
            }
        }
        p.copy_from_slice(&r);
        let mut rs_old = dot(&r, &r);
        for _ in 0..CG_STEPS {
            if rs_old < 1e-20 {
                break;
            }
            apply(&p, &mut ap);
            let denom = dot(&p, &ap);
            if denom <= 0.0 {
                break;
            }
            let step = rs_old / denom;
            for a in 0..f {
                x[a] += step * p[a];
                r[a] -= step * ap[a];
            }
            let rs_new = dot(&r, &r);
            let beta = rs_new / rs_old;
            for a in 0..f {
                p[a] = r[a] + beta * p[a];
            }
            rs_old = rs_new;
        }
    }
}
