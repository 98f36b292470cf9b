use serde::{Deserialize, Serialize};

use super::eval::{evaluate, metrics_from_predictions, EvalReport};
use super::split::split_dataset;
use super::tree::{train_decision_tree, TreeParams};
use super::{LabeledExample, TrainError};
use crate::features::Feature;
use crate::model::{GroupingModel, ModelKind, ModelMetadata};

/// Trains a tree on the train split using only `features` and scores it on
/// the holdout split.
pub fn single_feature_study(
    examples: &[LabeledExample],
    features: &[Feature],
    max_depth: usize,
    seed: u64,
) -> Result<EvalReport, TrainError> {
    if features.is_empty() {
        return Err(TrainError::NoFeatures);
    }
    let split = split_dataset(examples, seed)?;
    let params = TreeParams {
        max_depth,
        features: features.to_vec(),
        ..Default::default()
    };
    let tree = train_decision_tree(&split.train, &params)?;
    let model = GroupingModel::with_policy(
        ModelKind::Tree(tree),
        features.iter().copied(),
        ModelMetadata::default(),
    )?;
    evaluate(&model, &split.holdout)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeStudy {
    /// Cluster-feature tree on the test split.
    pub cluster_stage: EvalReport,
    /// Co-linearity tree on the test rows the cluster stage got wrong.
    pub colinear_stage: EvalReport,
    /// Fraction of test rows where both stages are individually correct.
    pub both_correct_fraction: f64,
    pub test_size: usize,
    pub cluster_errors: usize,
}

/// Fits a cluster-feature tree and a co-linearity tree on the train split,
/// where the second is trained only on rows the first misclassifies, then
/// measures both on the test split.
pub fn cascade_study(
    examples: &[LabeledExample],
    max_depth: usize,
    seed: u64,
) -> Result<CascadeStudy, TrainError> {
    let split = split_dataset(examples, seed)?;
    let cluster_params = TreeParams {
        max_depth,
        features: Feature::CLUSTER.to_vec(),
        ..Default::default()
    };
    let cluster = train_decision_tree(&split.train, &cluster_params)?;
    let wrong_train: Vec<LabeledExample> = split
        .train
        .iter()
        .filter(|e| (cluster.predict(&e.features) >= 0.5) != e.label)
        .cloned()
        .collect();
    let colinear_params = TreeParams {
        max_depth,
        features: Feature::COLINEAR.to_vec(),
        ..Default::default()
    };
    let colinear = if wrong_train.is_empty() {
        train_decision_tree(&split.train, &colinear_params)?
    } else {
        train_decision_tree(&wrong_train, &colinear_params)?
    };

    let actual: Vec<bool> = split.test.iter().map(|e| e.label).collect();
    let first: Vec<bool> = split
        .test
        .iter()
        .map(|e| cluster.predict(&e.features) >= 0.5)
        .collect();
    let second: Vec<bool> = split
        .test
        .iter()
        .map(|e| colinear.predict(&e.features) >= 0.5)
        .collect();
    let wrong: Vec<usize> = (0..actual.len())
        .filter(|&i| first[i] != actual[i])
        .collect();
    let both = (0..actual.len())
        .filter(|&i| first[i] == actual[i] && second[i] == actual[i])
        .count();
    Ok(CascadeStudy {
        cluster_stage: metrics_from_predictions(&first, &actual),
        colinear_stage: metrics_from_predictions(
            &wrong.iter().map(|&i| second[i]).collect::<Vec<_>>(),
            &wrong.iter().map(|&i| actual[i]).collect::<Vec<_>>(),
        ),
        both_correct_fraction: both as f64 / actual.len().max(1) as f64,
        test_size: actual.len(),
        cluster_errors: wrong.len(),
    })
}
