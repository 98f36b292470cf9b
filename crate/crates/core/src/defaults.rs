//! The built-in model, shipped as JSON and reproducible from a fixed seed.

use std::sync::OnceLock;

use crate::features::Feature;
use crate::model::{load_model, GroupingModel, ModelMetadata};
use crate::trainlab::oracle::{oracle_examples, OracleConfig};
use crate::trainlab::{ModelSpec, TrainError, TreeParams};

pub const DEFAULT_MODEL_ID: &str = "default-v1";
pub const DEFAULT_MODEL_JSON: &str = include_str!("../models/default-v1.json");

const TRAINING_SEED: u64 = 20_240_601;
const CHARTS_PER_SIZE: usize = 60;
const CHART_SIZES: [usize; 4] = [5, 6, 7, 8];

/// The shipped model: size-routed depth-3 trees that never read slope.
pub fn default_model() -> &'static GroupingModel {
    static MODEL: OnceLock<GroupingModel> = OnceLock::new();
    MODEL.get_or_init(|| load_model(DEFAULT_MODEL_JSON).expect("bundled model document is valid"))
}

pub fn default_metadata() -> ModelMetadata {
    ModelMetadata {
        name: DEFAULT_MODEL_ID.into(),
        version: "1".into(),
        provenance: format!(
            "size-routed depth-3 trees fitted to synthetic oracle labels \
             ({CHARTS_PER_SIZE} random charts per size {CHART_SIZES:?}, seed {TRAINING_SEED}); \
             not fitted to human selection data"
        ),
    }
}

/// Rebuilds the default model from scratch.
pub fn train_default_model() -> Result<GroupingModel, TrainError> {
    let config = OracleConfig::default();
    let mut examples = Vec::new();
    for (i, &size) in CHART_SIZES.iter().enumerate() {
        examples.extend(oracle_examples(
            CHARTS_PER_SIZE,
            size,
            TRAINING_SEED + i as u64,
            &config,
        )?);
    }
    let features: Vec<Feature> = Feature::ALL
        .iter()
        .copied()
        .filter(|f| *f != Feature::Slope)
        .collect();
    let tree = || Box::new(ModelSpec::Tree(TreeParams::with_features(&features)));
    ModelSpec::SizeRouted {
        edge: tree(),
        intermediate: tree(),
    }
    .fit_with(&examples, default_metadata())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::save_model;

    #[test]
    fn bundled_model_matches_retraining() {
        let retrained = train_default_model().unwrap();
        assert_eq!(default_model(), &retrained);
        assert_eq!(save_model(&retrained).trim(), DEFAULT_MODEL_JSON.trim());
    }

    #[test]
    fn bundled_model_is_slope_free() {
        assert!(!default_model().reads_slope());
        assert_eq!(default_model().metadata.name, DEFAULT_MODEL_ID);
    }
}
