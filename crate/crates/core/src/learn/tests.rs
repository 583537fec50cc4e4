use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::tree::best_split;
use super::*;
use crate::meta_features::N_META_FEATURES;

fn random_meta(rng: &mut ChaCha8Rng) -> MetaFeatureVector {
    let mut v = [0.0; N_META_FEATURES];
    for (j, slot) in v.iter_mut().enumerate() {
        *slot = if COUNT_FEATURES.contains(&j) {
            rng.gen_range(5..5000) as f64
        } else {
            rng.gen_range(0.001..1.0)
        };
    }
    MetaFeatureVector::from_array(v)
}

fn r_squared(model: &TrainedRegressor, x: &[MetaFeatureVector], y: &[f64]) -> f64 {
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
    let ss_res: f64 = x
        .iter()
        .zip(y)
        .map(|(m, t)| (model.predict(m).unwrap() - t).powi(2))
        .sum();
    1.0 - ss_res / ss_tot
}

fn linear(ridge: f64) -> RegressorSpec {
    RegressorSpec::new(Hyperparams::LinearRegression { ridge }, 0)
}

fn knn(neighbors: usize, weighting: Weighting) -> RegressorSpec {
    RegressorSpec::new(Hyperparams::KnnRegressor { neighbors, weighting }, 0)
}

fn forest(seed: u64) -> RegressorSpec {
    RegressorSpec::new(
        Hyperparams::RandomForest {
            trees: 100,
            max_depth: None,
            max_features: MaxFeatures::Sqrt,
        },
        seed,
    )
}

fn boosted(seed: u64) -> RegressorSpec {
    RegressorSpec::new(
        Hyperparams::GradientBoostedTrees {
            trees: 100,
            max_depth: 3,
            learning_rate: 0.1,
            subsample: 0.8,
        },
        seed,
    )
}

#[test]
fn linear_recovers_planted_density_function() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x: Vec<_> = (0..20).map(|_| random_meta(&mut rng)).collect();
    let y: Vec<f64> = x.iter().map(|m| 3.0 * m.density + 1.0).collect();
    let model = fit_regressor(&linear(1e-8), &x, &y).unwrap();
    for _ in 0..50 {
        let probe = random_meta(&mut rng);
        let err = (model.predict(&probe).unwrap() - (3.0 * probe.density + 1.0)).abs();
        assert!(err < 1e-8, "error {err}");
    }
}

#[test]
fn linear_is_affine() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x: Vec<_> = (0..30).map(|_| random_meta(&mut rng)).collect();
    let y: Vec<f64> = (0..30).map(|_| rng.gen_range(0.0..1.0)).collect();
    // raw features pass through log1p, so midpoints are taken in a space
    // without count columns
    let rows: Vec<Vec<f64>> = x.iter().map(|m| m.to_array().to_vec()).collect();
    let model = fit_rows(&linear(1e-2), &rows, &y, &[]).unwrap();
    for w in rows.windows(2) {
        let mid: Vec<f64> = w[0].iter().zip(&w[1]).map(|(a, b)| (a + b) / 2.0).collect();
        let want = (model.predict_row(&w[0]).unwrap() + model.predict_row(&w[1]).unwrap()) / 2.0;
        assert!((model.predict_row(&mid).unwrap() - want).abs() < 1e-10);
    }
}

#[test]
fn one_nn_interpolates() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x: Vec<_> = (0..25).map(|_| random_meta(&mut rng)).collect();
    let y: Vec<f64> = (0..25).map(|_| rng.gen_range(-5.0..5.0)).collect();
    for w in [Weighting::Uniform, Weighting::InverseDistance] {
        let model = fit_regressor(&knn(1, w), &x, &y).unwrap();
        for (m, t) in x.iter().zip(&y) {
            assert_eq!(model.predict(m).unwrap(), *t);
        }
    }
}

#[test]
fn knn_ties_break_by_label() {
    let rows = vec![vec![0.0], vec![2.0], vec![-2.0]];
    let y = vec![0.0, 5.0, 1.0];
    let model = fit_rows(&knn(2, Weighting::Uniform), &rows, &y, &[]).unwrap();
    // both outer points are equidistant from 0; the lower label is taken
    assert_eq!(model.predict_row(&[0.0]).unwrap(), 0.5);
}

fn smooth_target(m: &MetaFeatureVector) -> f64 {
    (m.density * 4.0).sin() + (m.n_users.ln() / 3.0).powi(2)
}

#[test]
fn ensembles_fit_planted_smooth_function() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x: Vec<_> = (0..200).map(|_| random_meta(&mut rng)).collect();
    let y: Vec<f64> = x.iter().map(smooth_target).collect();
    for spec in [forest(5), boosted(5)] {
        let model = fit_regressor(&spec, &x, &y).unwrap();
        let r2 = r_squared(&model, &x, &y);
        assert!(r2 >= 0.9, "{} R2 {r2}", spec.family());
    }
}

#[test]
fn forest_recovers_step_in_n_users() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x: Vec<_> = (0..100).map(|_| random_meta(&mut rng)).collect();
    let y: Vec<f64> = x.iter().map(|m| if m.n_users > 1000.0 { 1.0 } else { 0.0 }).collect();
    let model = fit_regressor(&forest(0), &x, &y).unwrap();
    assert!(r_squared(&model, &x, &y) >= 0.9);
}

#[test]
fn degenerate_booster_predicts_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x: Vec<_> = (0..15).map(|_| random_meta(&mut rng)).collect();
    let y: Vec<f64> = (0..15).map(|_| rng.gen_range(0.0..1.0)).collect();
    let mean = y.iter().sum::<f64>() / 15.0;
    let spec = RegressorSpec::new(
        Hyperparams::GradientBoostedTrees {
            trees: 1,
            max_depth: 0,
            learning_rate: 1e-9,
            subsample: 1.0,
        },
        0,
    );
    let model = fit_regressor(&spec, &x, &y).unwrap();
    for _ in 0..10 {
        assert!((model.predict(&random_meta(&mut rng)).unwrap() - mean).abs() < 1e-12);
    }
}

#[test]
fn identical_features_do_not_blow_up() {
    let m = MetaFeatureVector::from_array([3.0; N_META_FEATURES]);
    let x = vec![m; 6];
    let y = vec![0.5; 6];
    for spec in [linear(1e-8), knn(3, Weighting::InverseDistance), forest(0), boosted(0)] {
        let v = fit_regressor(&spec, &x, &y).unwrap().predict(&m).unwrap();
        assert!((v - 0.5).abs() < 1e-12, "{:?} {v}", spec.family());
    }
}

#[test]
fn bad_inputs_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut x: Vec<_> = (0..5).map(|_| random_meta(&mut rng)).collect();
    let y = vec![1.0; 5];
    assert!(matches!(
        fit_regressor(&linear(1e-8), &x, &y[..4]),
        Err(Error::DimensionMismatch(_))
    ));
    assert!(matches!(
        fit_regressor(&knn(0, Weighting::Uniform), &x, &y),
        Err(Error::InvalidHyperparameter(_))
    ));
    x[2].density = f64::NAN;
    assert!(matches!(fit_regressor(&linear(1e-8), &x, &y), Err(Error::NonFiniteInput(_))));
    let model = fit_rows(&linear(1.0), &[vec![0.0], vec![1.0]], &[0.0, 1.0], &[]).unwrap();
    assert!(matches!(model.predict_row(&[0.0, 1.0]), Err(Error::DimensionMismatch(_))));
}

#[test]
fn spec_json_round_trip() {
    for family in Family::ALL {
        for params in default_grid(family) {
            let spec = RegressorSpec::new(params, 42);
            let json = spec.to_json().unwrap();
            assert!(json.contains(family.name()));
            assert_eq!(RegressorSpec::from_json(&json).unwrap(), spec);
        }
    }
    let json = r#"{"family":"RandomForest","trees":100,"max_depth":null,"max_features":"sqrt","seed":3}"#;
    assert_eq!(RegressorSpec::from_json(json).unwrap(), forest(3));
}

#[test]
fn default_grid_sizes() {
    let sizes: Vec<usize> = Family::ALL.iter().map(|&f| default_grid(f).len()).collect();
    assert_eq!(sizes, [3, 8, 12, 16]);
}

#[test]
fn grid_of_one_returns_it() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x: Vec<_> = (0..6).map(|_| random_meta(&mut rng)).collect();
    let y = vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0];
    let grid = vec![Hyperparams::KnnRegressor {
        neighbors: 3,
        weighting: Weighting::Uniform,
    }];
    assert_eq!(grid_search(&grid, &x, &y, 3, 11).unwrap(), RegressorSpec::new(grid[0].clone(), 11));
    assert!(matches!(grid_search(&[], &x, &y, 3, 11), Err(Error::EmptyGrid)));
}

/// Independent inner-CV oracle: mean fold RMSE for one spec.
fn cv_rmse(spec: &RegressorSpec, rows: &[Vec<f64>], y: &[f64], folds: &[usize], k: usize) -> f64 {
    (0..k)
        .map(|f| {
            let train: Vec<usize> = (0..y.len()).filter(|&i| folds[i] != f).collect();
            let test: Vec<usize> = (0..y.len()).filter(|&i| folds[i] == f).collect();
            let tx: Vec<Vec<f64>> = train.iter().map(|&i| rows[i].clone()).collect();
            let ty: Vec<f64> = train.iter().map(|&i| y[i]).collect();
            let m = fit_rows(spec, &tx, &ty, &COUNT_FEATURES).unwrap();
            let mse = test
                .iter()
                .map(|&i| (m.predict_row(&rows[i]).unwrap() - y[i]).powi(2))
                .sum::<f64>()
                / test.len() as f64;
            mse.sqrt()
        })
        .sum::<f64>()
        / k as f64
}

#[test]
fn linear_wins_on_planted_linear_data() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let x: Vec<_> = (0..30).map(|_| random_meta(&mut rng)).collect();
    let y: Vec<f64> = x.iter().map(|m| 2.0 * m.density - m.user_item_ratio + 0.5).collect();
    let grid = vec![
        Hyperparams::KnnRegressor {
            neighbors: 1,
            weighting: Weighting::Uniform,
        },
        Hyperparams::LinearRegression { ridge: 1e-8 },
    ];
    let chosen = grid_search(&grid, &x, &y, 3, 5).unwrap();
    assert_eq!(chosen.family(), Family::LinearRegression);

    // any 3-fold assignment agrees on which family is better
    let rows: Vec<Vec<f64>> = x.iter().map(|m| m.to_array().to_vec()).collect();
    let folds: Vec<usize> = (0..30).map(|i| i % 3).collect();
    let lin = cv_rmse(&RegressorSpec::new(grid[1].clone(), 5), &rows, &y, &folds, 3);
    let nn = cv_rmse(&RegressorSpec::new(grid[0].clone(), 5), &rows, &y, &folds, 3);
    assert!(lin < nn);
}

#[test]
fn grid_search_ignores_row_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let x: Vec<_> = (0..18).map(|_| random_meta(&mut rng)).collect();
    let y: Vec<f64> = (0..18).map(|_| rng.gen_range(0.0..1.0)).collect();
    let grid = default_grid(Family::KnnRegressor);
    let a = grid_search(&grid, &x, &y, 3, 1).unwrap();
    let mut idx: Vec<usize> = (0..18).collect();
    idx.reverse();
    let xr: Vec<_> = idx.iter().map(|&i| x[i]).collect();
    let yr: Vec<_> = idx.iter().map(|&i| y[i]).collect();
    assert_eq!(grid_search(&grid, &xr, &yr, 3, 1).unwrap(), a);
}

/// Exhaustive reference: every feature, every gap between distinct values,
/// SSE by two passes over explicit partitions.
fn oracle_split(rows: &[Vec<f64>], y: &[f64]) -> Option<(usize, f64)> {
    let sse = |idx: &[usize]| {
        let m = idx.iter().map(|&i| y[i]).sum::<f64>() / idx.len() as f64;
        idx.iter().map(|&i| (y[i] - m).powi(2)).sum::<f64>()
    };
    let total_sq: f64 = y.iter().map(|v| v * v).sum();
    let eps = 1e-12 * (1.0 + total_sq);
    let mut best: Option<(usize, f64, f64)> = None;
    for f in 0..rows[0].len() {
        let mut vals: Vec<f64> = rows.iter().map(|r| r[f]).collect();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        for w in vals.windows(2) {
            let t = w[0] + (w[1] - w[0]) / 2.0;
            let left: Vec<usize> = (0..y.len()).filter(|&i| rows[i][f] <= t).collect();
            let right: Vec<usize> = (0..y.len()).filter(|&i| rows[i][f] > t).collect();
            let s = sse(&left) + sse(&right);
            if best.is_none_or(|b| s < b.2 - eps) {
                best = Some((f, t, s));
            }
        }
    }
    best.map(|b| (b.0, b.1))
}

#[test]
fn cart_split_matches_exhaustive_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for case in 0..100 {
        let n = rng.gen_range(2..=50);
        let p = rng.gen_range(1..=5);
        // half the cases use small integer features so many values tie
        let coarse = case % 2 == 0;
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                (0..p)
                    .map(|_| {
                        if coarse {
                            rng.gen_range(0..4) as f64
                        } else {
                            rng.gen_range(-1.0..1.0)
                        }
                    })
                    .collect()
            })
            .collect();
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let all: Vec<usize> = (0..n).collect();
        let features: Vec<usize> = (0..p).collect();
        let got = best_split(&rows, &y, &all, &features).map(|s| (s.feature, s.threshold));
        assert_eq!(got, oracle_split(&rows, &y), "case {case}");
    }
}

#[test]
fn tree_depth_limits_hold() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let rows: Vec<Vec<f64>> = (0..64).map(|_| vec![rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)]).collect();
    let y: Vec<f64> = (0..64).map(|_| rng.gen_range(0.0..1.0)).collect();
    let all: Vec<usize> = (0..64).collect();
    for d in 0..5 {
        let params = TreeParams {
            max_depth: Some(d),
            max_features: None,
        };
        let t = RegressionTree::fit(&rows, &y, &all, params, &mut rng);
        assert!(t.depth() <= d && t.n_leaves() <= 1 << d);
    }
    let full = TreeParams {
        max_depth: None,
        max_features: None,
    };
    let t = RegressionTree::fit(&rows, &y, &all, full, &mut rng);
    for (r, v) in rows.iter().zip(&y) {
        assert_eq!(t.predict(r), *v);
    }
}

fn arb_problem() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>, Vec<f64>)> {
    (4usize..14, 1usize..4).prop_flat_map(|(n, p)| {
        (
            prop::collection::vec(prop::collection::vec(-10.0f64..10.0, p), n),
            prop::collection::vec(-5.0f64..5.0, n),
            prop::collection::vec(-12.0f64..12.0, p),
        )
    })
}

fn small_specs() -> Vec<RegressorSpec> {
    vec![
        knn(3, Weighting::Uniform),
        knn(2, Weighting::InverseDistance),
        RegressorSpec::new(
            Hyperparams::RandomForest {
                trees: 10,
                max_depth: Some(4),
                max_features: MaxFeatures::All,
            },
            3,
        ),
        RegressorSpec::new(
            Hyperparams::GradientBoostedTrees {
                trees: 10,
                max_depth: 2,
                learning_rate: 0.5,
                subsample: 0.8,
            },
            3,
        ),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn predictions_stay_in_label_range((rows, y, probe) in arb_problem()) {
        let (lo, hi) = y.iter().fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
        let range = hi - lo;
        for spec in small_specs() {
            let m = fit_rows(&spec, &rows, &y, &[]).unwrap();
            let v = m.predict_row(&probe).unwrap();
            if spec.family() == Family::GradientBoostedTrees {
                prop_assert!(v >= lo - range - 1e-9 && v <= hi + range + 1e-9);
            } else {
                prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
            }
        }
    }

    #[test]
    fn column_scaling_is_invisible((rows, y, probe) in arb_problem(), c in 0.01f64..100.0, col in 0usize..3) {
        let col = col % rows[0].len();
        let scale = |r: &Vec<f64>| { let mut r = r.clone(); r[col] *= c; r };
        let scaled: Vec<Vec<f64>> = rows.iter().map(scale).collect();
        for spec in small_specs() {
            let a = fit_rows(&spec, &rows, &y, &[]).unwrap().predict_row(&probe).unwrap();
            let b = fit_rows(&spec, &scaled, &y, &[]).unwrap().predict_row(&scale(&probe)).unwrap();
            prop_assert!((a - b).abs() < 1e-9, "{:?}: {} vs {}", spec.family(), a, b);
        }
    }

    #[test]
    fn row_order_is_invisible((rows, y, probe) in arb_problem(), rot in 0usize..14) {
        let rot = rot % rows.len();
        let mut r2 = rows.clone();
        let mut y2 = y.clone();
        r2.rotate_left(rot);
        y2.rotate_left(rot);
        for spec in small_specs() {
            let a = fit_rows(&spec, &rows, &y, &[]).unwrap().predict_row(&probe).unwrap();
            let b = fit_rows(&spec, &r2, &y2, &[]).unwrap().predict_row(&probe).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
