use serde::{Deserialize, Serialize};

use super::logistic::{train_logistic, LogisticParams};
use super::split::stratified_folds;
use super::tree::{train_decision_tree, TreeParams};
use super::{LabeledExample, TrainError};
use crate::features::Feature;
use crate::model::{
    is_edge_size, DecisionTree, GroupingModel, ModelKind, ModelMetadata, DEFAULT_MAX_DEPTH,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
}

impl MeanSd {
    /// Mean and sample standard deviation (zero for a single value).
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { mean, sd }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldStats {
    pub folds: usize,
    pub precision: MeanSd,
    pub recall: MeanSd,
    pub f1: MeanSd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub true_negatives: usize,
    /// Precision is undefined; reported as 0.
    pub no_positive_predictions: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fold_stats: Option<FoldStats>,
}

/// Precision, recall and F1 of the positive class. Undefined ratios are 0.
pub fn metrics_from_predictions(predicted: &[bool], actual: &[bool]) -> EvalReport {
    let mut tp = 0;
    let mut fp = 0;
    let mut fn_ = 0;
    let mut tn = 0;
    for (&p, &a) in predicted.iter().zip(actual) {
        match (p, a) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    let ratio = |num: usize, den: usize| {
        if den == 0 {
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    EvalReport {
        precision,
        recall,
        f1,
        support: predicted.len().min(actual.len()),
        true_positives: tp,
        false_positives: fp,
        false_negatives: fn_,
        true_negatives: tn,
        no_positive_predictions: tp + fp == 0,
        fold_stats: None,
    }
}

/// Scores `model` on `examples`, predicting positive at probability >= 0.5.
pub fn evaluate(
    model: &GroupingModel,
    examples: &[LabeledExample],
) -> Result<EvalReport, TrainError> {
    let predicted = examples
        .iter()
        .map(|e| Ok(model.predict(&e.features, e.group_size(), e.chart_size)? >= 0.5))
        .collect::<Result<Vec<bool>, TrainError>>()?;
    let actual: Vec<bool> = examples.iter().map(|e| e.label).collect();
    Ok(metrics_from_predictions(&predicted, &actual))
}

/// What to fit. Composite specs recurse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    Tree(TreeParams),
    Logistic(LogisticParams),
    /// Cluster-feature tree, then a co-linearity tree fitted to the rows the
    /// first stage gets wrong.
    Cascade {
        #[serde(default = "default_depth")]
        max_depth: usize,
    },
    SizeRouted {
        edge: Box<ModelSpec>,
        intermediate: Box<ModelSpec>,
    },
}

fn default_depth() -> usize {
    DEFAULT_MAX_DEPTH
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec::Tree(TreeParams::default())
    }
}

impl ModelSpec {
    pub fn fit(&self, examples: &[LabeledExample]) -> Result<GroupingModel, TrainError> {
        self.fit_with(examples, ModelMetadata::default())
    }

    pub fn fit_with(
        &self,
        examples: &[LabeledExample],
        metadata: ModelMetadata,
    ) -> Result<GroupingModel, TrainError> {
        if examples.is_empty() {
            return Err(TrainError::Empty);
        }
        let model = match self {
            ModelSpec::Tree(params) => GroupingModel::with_policy(
                ModelKind::Tree(train_decision_tree(examples, params)?),
                params.features.iter().copied(),
                metadata,
            )?,
            ModelSpec::Logistic(params) => {
                let fit = train_logistic(examples, params)?;
                GroupingModel::with_policy(
                    ModelKind::Logistic(fit.model),
                    params.features.iter().copied(),
                    metadata,
                )?
            }
            ModelSpec::Cascade { max_depth } => fit_cascade(examples, *max_depth, metadata)?,
            ModelSpec::SizeRouted { edge, intermediate } => {
                let (edge_rows, mid_rows): (Vec<LabeledExample>, Vec<LabeledExample>) = examples
                    .iter()
                    .cloned()
                    .partition(|e| is_edge_size(e.group_size(), e.chart_size));
                let pick = |rows: &[LabeledExample]| -> Vec<LabeledExample> {
                    if rows.is_empty() {
                        examples.to_vec()
                    } else {
                        rows.to_vec()
                    }
                };
                let edge = edge.fit(&pick(&edge_rows))?;
                let intermediate = intermediate.fit(&pick(&mid_rows))?;
                GroupingModel::new(
                    ModelKind::SizeRouted {
                        edge: Box::new(edge),
                        intermediate: Box::new(intermediate),
                    },
                    metadata,
                )?
            }
        };
        Ok(model)
    }
}

fn fit_cascade(
    examples: &[LabeledExample],
    max_depth: usize,
    metadata: ModelMetadata,
) -> Result<GroupingModel, TrainError> {
    let cluster_params = TreeParams {
        max_depth,
        features: Feature::CLUSTER.to_vec(),
        min_samples_split: 2,
    };
    let cluster = train_decision_tree(examples, &cluster_params)?;
    let wrong: Vec<LabeledExample> = examples
        .iter()
        .filter(|e| (cluster.predict(&e.features) >= 0.5) != e.label)
        .cloned()
        .collect();
    let colinear_params = TreeParams {
        features: Feature::COLINEAR.to_vec(),
        ..cluster_params.clone()
    };
    let colinear = if wrong.is_empty() {
        let base = examples.iter().filter(|e| e.label).count() as f64 / examples.len() as f64;
        DecisionTree {
            max_depth,
            ..DecisionTree::leaf(base)
        }
    } else {
        train_decision_tree(&wrong, &colinear_params)?
    };
    let stage = |tree: DecisionTree, features: &[Feature]| {
        GroupingModel::with_policy(
            ModelKind::Tree(tree),
            features.iter().copied(),
            ModelMetadata::default(),
        )
    };
    Ok(GroupingModel::new(
        ModelKind::Cascade {
            cluster_stage: Box::new(stage(cluster, &Feature::CLUSTER)?),
            colinear_stage: Box::new(stage(colinear, &Feature::COLINEAR)?),
        },
        metadata,
    )?)
}

/// Stratified k-fold cross validation. Headline numbers are fold means;
/// confusion counts are summed over folds.
pub fn cross_validate(
    spec: &ModelSpec,
    examples: &[LabeledExample],
    k: usize,
    seed: u64,
) -> Result<EvalReport, TrainError> {
    if k < 2 || examples.len() < k {
        return Err(TrainError::TooFewExamples {
            needed: k.max(2),
            got: examples.len(),
        });
    }
    let folds = stratified_folds(examples, k, seed);
    let mut reports = Vec::with_capacity(k);
    for fold in 0..k {
        let mut train = Vec::new();
        let mut test = Vec::new();
        for (e, f) in examples.iter().zip(&folds) {
            if *f == fold {
                test.push(e.clone())
            } else {
                train.push(e.clone())
            }
        }
        let model = spec.fit(&train)?;
        reports.push(evaluate(&model, &test)?);
    }
    let collect = |f: fn(&EvalReport) -> f64| reports.iter().map(f).collect::<Vec<f64>>();
    let precision = MeanSd::of(&collect(|r| r.precision));
    let recall = MeanSd::of(&collect(|r| r.recall));
    let f1 = MeanSd::of(&collect(|r| r.f1));
    let sum = |f: fn(&EvalReport) -> usize| reports.iter().map(f).sum::<usize>();
    let tp = sum(|r| r.true_positives);
    let fp = sum(|r| r.false_positives);
    Ok(EvalReport {
        precision: precision.mean,
        recall: recall.mean,
        f1: f1.mean,
        support: examples.len(),
        true_positives: tp,
        false_positives: fp,
        false_negatives: sum(|r| r.false_negatives),
        true_negatives: sum(|r| r.true_negatives),
        no_positive_predictions: tp + fp == 0,
        fold_stats: Some(FoldStats {
            folds: k,
            precision,
            recall,
            f1,
        }),
    })
}
