//! Shared fixtures for the criterion benches.

use xaiunc_core::analysis::sample_instances;
use xaiunc_core::data::generate_synthetic;
use xaiunc_core::explainers::Background;
use xaiunc_core::models::train;
use xaiunc_core::{BlackboxModel, Dataset, ModelKind, SyntheticSpec, TrainConfig};

pub struct Fixture {
    pub dataset: Dataset,
    pub model: BlackboxModel,
    pub background: Background,
    pub instances: Vec<Vec<f64>>,
}

/// Eight-feature synthetic data with a trained classifier of `kind`.
pub fn fixture(kind: ModelKind) -> Fixture {
    let mut spec = SyntheticSpec::with_default_mixture(8, 768, 11);
    spec.train_fraction = 0.8;
    let dataset = generate_synthetic(&spec).expect("valid spec");
    let config = TrainConfig {
        epochs: 300,
        ..TrainConfig::default()
    };
    let model = train(&dataset, &config, kind).expect("training succeeds");
    let background = Background::from_dataset(&dataset).expect("non-empty");
    let instances = sample_instances(&dataset, 8, 1);
    Fixture {
        dataset,
        model,
        background,
        instances,
    }
}
