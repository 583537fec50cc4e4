use std::collections::HashSet;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

const LONG: Duration = Duration::from_secs(600);

fn spec(algorithm: Algorithm, params: Hyperparameters) -> ComboSpec {
    ComboSpec {
        id: AlgoComboId::new(algorithm, 0),
        params,
    }
}

fn random_pairs(rng: &mut ChaCha8Rng, nu: u32, ni: u32, p: f64) -> Vec<(u32, u32)> {
    let mut pairs = Vec::new();
    for u in 0..nu {
        for i in 0..ni {
            if rng.gen_bool(p) {
                pairs.push((u, i));
            }
        }
        // every user keeps at least one item
        if !pairs.iter().any(|&(x, _)| x == u) {
            pairs.push((u, rng.gen_range(0..ni)));
        }
    }
    pairs
}

#[test]
fn zoo_shape() {
    let zoo = default_zoo();
    assert_eq!(zoo.len(), 10);
    let ids: HashSet<_> = zoo.iter().map(|c| c.id).collect();
    assert_eq!(ids.len(), 10);
    for alg in [Algorithm::Random, Algorithm::Popularity] {
        let configs: Vec<_> = zoo.iter().filter(|c| c.id.algorithm == alg).map(|c| c.id.config_index).collect();
        assert_eq!(configs, vec![0]);
    }
    for c in &zoo {
        c.validate().unwrap();
    }
    let mut sorted = zoo.iter().map(|c| c.id).collect::<Vec<_>>();
    sorted.sort();
    assert_eq!(sorted, zoo.iter().map(|c| c.id).collect::<Vec<_>>());
}

#[test]
fn combo_id_text_round_trip() {
    for c in default_zoo() {
        let s = c.id.to_string();
        assert_eq!(s.parse::<AlgoComboId>().unwrap(), c.id);
    }
    assert_eq!(AlgoComboId::new(Algorithm::ItemKNN, 1).to_string(), "ItemKNN-1");
    assert!("Bogus-0".parse::<AlgoComboId>().is_err());
}

#[test]
fn mismatched_params_rejected() {
    let bad = spec(Algorithm::ItemKNN, Hyperparameters::None);
    assert!(matches!(bad.validate(), Err(Error::InvalidHyperparameter(_))));
    let bad = ComboSpec {
        id: AlgoComboId::new(Algorithm::Random, 1),
        params: Hyperparameters::None,
    };
    assert!(bad.validate().is_err());
}

#[test]
fn popularity_counts_and_tie_break() {
    let train = TrainMatrix::new(2, 2, &[(0, 0), (1, 0), (1, 1)]);
    let m = fit(&spec(Algorithm::Popularity, Hyperparameters::None), &train, LONG, 0).unwrap();
    assert_eq!(m.popularity().unwrap(), &[2.0, 1.0]);

    let train = TrainMatrix::new(3, 3, &[(0, 0), (1, 0), (1, 1), (2, 2)]);
    let m = fit(&spec(Algorithm::Popularity, Hyperparameters::None), &train, LONG, 0).unwrap();
    let rec = m.recommend(0, 2, train.user_items(0)).unwrap();
    assert_eq!(rec.ranked_items, vec![1, 2]);
}

#[test]
fn random_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let train = TrainMatrix::new(10, 30, &random_pairs(&mut rng, 10, 30, 0.2));
    let s = spec(Algorithm::Random, Hyperparameters::None);
    let a = fit(&s, &train, LONG, 42).unwrap();
    let b = fit(&s, &train, LONG, 42).unwrap();
    let c = fit(&s, &train, LONG, 43).unwrap();
    let ra = a.recommend(3, 10, train.user_items(3)).unwrap();
    assert_eq!(ra, a.recommend(3, 10, train.user_items(3)).unwrap());
    assert_eq!(ra, b.recommend(3, 10, train.user_items(3)).unwrap());
    assert_ne!(ra, c.recommend(3, 10, train.user_items(3)).unwrap());
}

#[test]
fn item_cosine_on_binary_vectors() {
    // items 0 and 1 share users {0, 1}; item 2 belongs to user 2 only
    let train = TrainMatrix::new(3, 3, &[(0, 0), (0, 1), (1, 0), (1, 1), (2, 2)]);
    let (lists, exhausted) = cosine_neighbors(train.cols(), train.rows(), 10, &Deadline::new(LONG));
    assert!(!exhausted);
    assert_eq!(lists[0], vec![Neighbor { index: 1, similarity: 1.0 }]);
    // zero similarity never becomes a neighbor
    assert!(lists[0].iter().all(|n| n.index != 2));
    assert!(lists[2].is_empty());
}

#[test]
fn cosine_matches_dense_computation() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let pairs = random_pairs(&mut rng, 25, 20, 0.3);
    let train = TrainMatrix::new(25, 20, &pairs);
    let (lists, _) = cosine_neighbors(train.cols(), train.rows(), 5, &Deadline::new(LONG));
    for i in 0..20u32 {
        let ui: HashSet<_> = train.item_users(i).iter().collect();
        let mut dense: Vec<(f64, u32)> = (0..20u32)
            .filter(|&j| j != i)
            .map(|j| {
                let uj: HashSet<_> = train.item_users(j).iter().collect();
                let inter = ui.intersection(&uj).count() as f64;
                (inter / ((ui.len() * uj.len()) as f64).sqrt(), j)
            })
            .filter(|(s, _)| *s > 0.0)
            .collect();
        dense.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        dense.truncate(5);
        let got: Vec<_> = lists[i as usize].iter().map(|n| n.index).collect();
        let want: Vec<_> = dense.iter().map(|d| d.1).collect();
        assert_eq!(got, want);
        for (n, d) in lists[i as usize].iter().zip(&dense) {
            assert!((n.similarity - d.0).abs() < 1e-12);
        }
    }
}

/// Dense user-based scoring written directly from the definition.
fn dense_user_knn_scores(pairs: &[(u32, u32)], nu: u32, ni: u32, n: usize, user: u32) -> Vec<f64> {
    let mut m = vec![vec![0.0; ni as usize]; nu as usize];
    for &(u, i) in pairs {
        m[u as usize][i as usize] = 1.0;
    }
    let cos = |a: &[f64], b: &[f64]| {
        let d: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na: f64 = a.iter().sum();
        let nb: f64 = b.iter().sum();
        d / (na * nb).sqrt()
    };
    let mut sims: Vec<(f64, u32)> = (0..nu)
        .filter(|&v| v != user)
        .map(|v| (cos(&m[user as usize], &m[v as usize]), v))
        .filter(|(s, _)| *s > 0.0)
        .collect();
    sims.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    sims.truncate(n);
    let mut scores = vec![0.0; ni as usize];
    for (s, v) in sims {
        for i in 0..ni as usize {
            scores[i] += s * m[v as usize][i];
        }
    }
    scores
}

#[test]
fn user_knn_twin_user_matches_dense_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (nu, ni) = (30u32, 25u32);
    let mut pairs = random_pairs(&mut rng, nu, ni, 0.25);
    // user 30 copies user 0 plus nothing else; user 0 additionally holds item "held out from the twin"
    let twin = nu;
    let base: Vec<u32> = pairs.iter().filter(|&&(u, _)| u == 0).map(|&(_, i)| i).collect();
    let extra = (0..ni).find(|i| !base.contains(i)).unwrap();
    pairs.retain(|&(u, _)| u != 0);
    for &i in &base {
        pairs.push((0, i));
        pairs.push((twin, i));
    }
    pairs.push((0, extra));
    let train = TrainMatrix::new(nu as usize + 1, ni as usize, &pairs);

    let s = spec(Algorithm::UserKNN, Hyperparameters::Knn { neighbors: 10 });
    let m = fit(&s, &train, LONG, 0).unwrap();
    let scores = m.score_all(twin, train.user_items(twin)).unwrap();
    let oracle = dense_user_knn_scores(&pairs, nu + 1, ni, 10, twin);
    for (a, b) in scores.iter().zip(&oracle) {
        assert!((a - b).abs() < 1e-12);
    }
    let rec = m.recommend(twin, 1, train.user_items(twin)).unwrap();
    let want = top_k(&oracle, 1, train.user_items(twin));
    assert_eq!(rec.ranked_items, want);
}

#[test]
fn item_knn_matches_dense_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let (nu, ni) = (20u32, 18u32);
    let pairs = random_pairs(&mut rng, nu, ni, 0.3);
    let train = TrainMatrix::new(nu as usize, ni as usize, &pairs);
    let s = spec(Algorithm::ItemKNN, Hyperparameters::Knn { neighbors: 4 });
    let m = fit(&s, &train, LONG, 0).unwrap();
    let (lists, _) = cosine_neighbors(train.cols(), train.rows(), 4, &Deadline::new(LONG));
    for u in 0..nu {
        let seen = train.user_items(u);
        let got = m.score_all(u, seen).unwrap();
        for i in 0..ni as usize {
            let want: f64 = lists[i]
                .iter()
                .filter(|n| seen.contains(&n.index))
                .map(|n| n.similarity)
                .sum();
            assert!((got[i] - want).abs() < 1e-12);
        }
    }
}

#[test]
fn recommend_excludes_training_items_for_all_algorithms() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let (nu, ni) = (40u32, 35u32);
    let pairs = random_pairs(&mut rng, nu, ni, 0.15);
    let train = TrainMatrix::new(nu as usize, ni as usize, &pairs);
    let models: Vec<_> = default_zoo()
        .iter()
        .map(|c| fit(c, &train, LONG, 3).unwrap())
        .collect();
    for q in 0..1000 {
        let m = &models[q % models.len()];
        let u = rng.gen_range(0..nu);
        let k = rng.gen_range(1..40);
        let seen = train.user_items(u);
        let rec = m.recommend(u, k, seen).unwrap();
        let distinct: HashSet<_> = rec.ranked_items.iter().collect();
        assert_eq!(distinct.len(), rec.ranked_items.len());
        assert!(rec.ranked_items.iter().all(|i| !seen.contains(i)));
        assert_eq!(rec.ranked_items.len(), k.min(ni as usize - seen.len()));
    }
}

#[test]
fn fit_and_recommend_are_reproducible() {
    let mut rng = ChaCha8Rng::seed_from_u64(34);
    let pairs = random_pairs(&mut rng, 30, 30, 0.2);
    let train = TrainMatrix::new(30, 30, &pairs);
    for c in default_zoo() {
        let a = fit(&c, &train, LONG, 9).unwrap();
        let b = fit(&c, &train, LONG, 9).unwrap();
        for u in 0..30 {
            let seen = train.user_items(u);
            assert_eq!(a.recommend(u, 10, seen).unwrap(), b.recommend(u, 10, seen).unwrap());
        }
    }
}

#[test]
fn unknown_user_rejected() {
    let train = TrainMatrix::new(3, 2, &[(0, 0), (1, 1)]);
    let m = fit(&spec(Algorithm::Popularity, Hyperparameters::None), &train, LONG, 0).unwrap();
    assert!(matches!(m.recommend(2, 1, &[]), Err(Error::UnknownUser(2))));
    assert!(matches!(m.recommend(7, 1, &[]), Err(Error::UnknownUser(7))));
}

#[test]
fn fewer_unseen_items_than_k() {
    let train = TrainMatrix::new(1, 3, &[(0, 0), (0, 1)]);
    let m = fit(&spec(Algorithm::Popularity, Hyperparameters::None), &train, LONG, 0).unwrap();
    assert_eq!(m.recommend(0, 5, train.user_items(0)).unwrap().ranked_items, vec![2]);
}

#[test]
fn als_loss_never_increases() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for trial in 0..5 {
        let pairs = random_pairs(&mut rng, 50, 50, 0.1);
        let train = TrainMatrix::new(50, 50, &pairs);
        let (model, trace) = AlsModel::fit_traced(&train, 8, 0.05, ALS_ALPHA, 10, trial, LONG);
        assert_eq!(model.epochs_run(), 10);
        assert_eq!(trace.len(), 11);
        for w in trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-9 * w[0].abs(), "loss rose: {} -> {}", w[0], w[1]);
        }
        assert!(trace[10] < trace[0]);
    }
}

#[test]
fn als_stops_on_tiny_budget() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let pairs = random_pairs(&mut rng, 400, 300, 0.05);
    let train = TrainMatrix::new(400, 300, &pairs);
    let s = ComboSpec {
        id: AlgoComboId::new(Algorithm::ImplicitALS, 1),
        params: Hyperparameters::Als {
            factors: 128,
            regularization: 0.1,
            epochs: 20,
            alpha: ALS_ALPHA,
        },
    };
    let m = fit(&s, &train, Duration::from_micros(1000), 0).unwrap();
    assert!(m.budget_exhausted());
    assert!(m.als().unwrap().epochs_run() <= 1);
    // still answers queries
    m.recommend(0, 5, train.user_items(0)).unwrap();
}

#[test]
fn ease_diagonal_is_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let pairs = random_pairs(&mut rng, 30, 20, 0.3);
    let train = TrainMatrix::new(30, 20, &pairs);
    for penalty in [10.0, 500.0] {
        let s = spec(Algorithm::EASE, Hyperparameters::Ease { penalty });
        let m = fit(&s, &train, LONG, 0).unwrap();
        let w = m.ease().unwrap().weights();
        for i in 0..20 {
            assert_eq!(w[(i, i)], 0.0);
        }
        assert!(w.iter().any(|&x| x != 0.0));
    }
}

#[test]
fn ease_solves_its_ridge_system() {
    // off-diagonal columns satisfy (G + λI) B_j = λ e_j-like stationarity: G b_j = g_j - λ b_j for i≠j
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let pairs = random_pairs(&mut rng, 25, 10, 0.4);
    let train = TrainMatrix::new(25, 10, &pairs);
    let penalty = 10.0;
    let s = spec(Algorithm::EASE, Hyperparameters::Ease { penalty });
    let m = fit(&s, &train, LONG, 0).unwrap();
    let w = m.ease().unwrap().weights();
    let mut g = nalgebra::DMatrix::<f64>::zeros(10, 10);
    for u in 0..25 {
        for &a in train.user_items(u) {
            for &b in train.user_items(u) {
                g[(a as usize, b as usize)] += 1.0;
            }
        }
    }
    // gradient of ||X - XB||² + λ||B||² wrt off-diagonal B_ij vanishes
    let grad = &g * w - &g + w * penalty;
    for i in 0..10 {
        for j in 0..10 {
            if i != j {
                assert!(grad[(i, j)].abs() < 1e-9, "grad[{i},{j}] = {}", grad[(i, j)]);
            }
        }
    }
}
