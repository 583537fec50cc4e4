//! Fixtures shared by the benchmarks.

use recsel_core::algos::TrainMatrix;
use recsel_core::meta_features::MetaFeatureVector;
use recsel_core::seed;
use recsel_core::synth::{generate_dataset, DatasetSpec, Regime};
use recsel_core::InteractionDataset;

pub fn skewed_dataset(n_users: usize, n_items: usize, density: f64) -> InteractionDataset {
    let spec = DatasetSpec {
        n_users,
        n_items,
        density,
        regime: Regime::Skewed { exponent: 1.0 },
    };
    generate_dataset(&spec, 42).expect("valid spec")
}

pub fn train_matrix(ds: &InteractionDataset) -> TrainMatrix {
    TrainMatrix::new(ds.n_users(), ds.n_items(), ds.pairs())
}

/// `n` meta-feature rows with a smooth label.
pub fn meta_rows(n: usize) -> (Vec<MetaFeatureVector>, Vec<f64>) {
    let x: Vec<MetaFeatureVector> = (0..n as u64)
        .map(|r| {
            let mut v = [0.0; 12];
            for (j, slot) in v.iter_mut().enumerate() {
                *slot = 1.0 + 1000.0 * seed::unit_f64(seed::derive(r, &[j as u64]));
            }
            MetaFeatureVector::from_array(v)
        })
        .collect();
    let y = x.iter().map(|m| (m.density / 300.0).sin() + m.n_users.ln()).collect();
    (x, y)
}
