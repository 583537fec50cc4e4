pub mod algos;
pub mod error;
pub mod interactions;
pub mod learn;
pub mod meta_dataset;
pub mod meta_features;
pub mod metrics;
pub mod preprocess;
pub mod seed;
pub mod selection;
pub mod synth;

pub use error::{Error, Result};
pub use algos::{Algorithm, AlgoComboId, ComboSpec, Hyperparameters};
pub use interactions::{CsvSchema, InteractionDataset, RawInteraction};
pub use learn::{Family, Hyperparams, RegressorSpec, TrainedRegressor};
pub use meta_dataset::{GroundTruth, PerformanceTable, PreparedDataset};
pub use meta_features::MetaFeatureVector;
pub use metrics::Metric;
pub use preprocess::CvPlan;
pub use selection::{Aggregate, LooRecord, LooReport, Objective};
pub use synth::{PlantedRule, SynthConfig};
