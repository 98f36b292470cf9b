//! Training data construction, model fitting, evaluation and attribution.
//!
//! Everything here runs either on ingested participant selections (see
//! [`ingest`]) or on labels from the synthetic [`oracle`].

mod corr;
mod eval;
pub mod ingest;
mod logistic;
mod negatives;
pub mod oracle;
mod shap;
mod split;
mod studies;
mod tree;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chart::ChartError;
use crate::features::{Feature, FeatureError, FeatureVector, Group, GroupError};
use crate::model::{ModelError, PredictError};

pub use corr::{correlation_matrix, pearson, CorrelationMatrix};
pub use eval::{
    cross_validate, evaluate, metrics_from_predictions, EvalReport, FoldStats, MeanSd, ModelSpec,
};
pub use logistic::{
    train_logistic, variance_inflation_factors, vif_prune, LogisticFit, LogisticParams, VifOutcome,
};
pub use negatives::{meets_negative_criteria, synthesize_negatives};
pub use shap::{mean_abs_shap, shap_exact, shapley_values, ShapExplanation, MAX_SHAP_FEATURES};
pub use split::{split_dataset, stratified_folds, DatasetSplit};
pub use studies::{cascade_study, single_feature_study, CascadeStudy};
pub use tree::{train_decision_tree, TreeParams};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("no training examples")]
    Empty,
    #[error("need at least {needed} examples, got {got}")]
    TooFewExamples { needed: usize, got: usize },
    #[error("no features to train on")]
    NoFeatures,
    #[error("exact attribution supports at most {max} features, got {got}")]
    TooManyFeatures { max: usize, got: usize },
    #[error("background set is empty")]
    EmptyBackground,
    #[error("no selected groups in any chart; cannot derive an error baseline")]
    NoSelections,
    #[error("unknown chart id {0:?}")]
    UnknownChart(String),
    #[error("chart {chart_id}: {source}")]
    Group {
        chart_id: String,
        source: GroupError,
    },
    #[error(transparent)]
    Chart(#[from] ChartError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Predict(#[from] PredictError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: String,
        source: serde_json::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExampleSource {
    Participant,
    SyntheticNegative,
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub chart_id: String,
    pub group: Group,
    pub chart_size: usize,
    pub features: FeatureVector,
    pub label: bool,
    pub source: ExampleSource,
}

impl LabeledExample {
    pub fn group_size(&self) -> usize {
        self.group.len()
    }
}

/// Feature values restricted to `features`, in the given order.
pub(crate) fn project(fv: &FeatureVector, features: &[Feature]) -> Vec<f64> {
    features.iter().map(|f| fv.get(*f)).collect()
}
