//! Predictors mapping a [`FeatureVector`] to the probability that a viewer
//! perceives the group.

mod document;

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::features::{Feature, FeatureVector};

pub use document::{load_model, save_model, ModelDocument, MODEL_FORMAT_VERSION};

pub const DEFAULT_MAX_DEPTH: usize = 3;

/// A cascade's cluster stage is trusted when its output is at or below this.
pub const DECISIVE_LOW: f64 = 0.1;
/// A cascade's cluster stage is trusted when its output is at or above this.
pub const DECISIVE_HIGH: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("malformed model document: {0}")]
    Malformed(String),
    #[error("unsupported model format version {0}")]
    UnsupportedVersion(u32),
    #[error("tree depth {depth} exceeds max_depth {max_depth}")]
    DepthViolation { depth: usize, max_depth: usize },
    #[error("feature {feature} is not permitted by the {context} feature policy")]
    PolicyViolation {
        feature: Feature,
        context: &'static str,
    },
    #[error("unknown feature {0:?}")]
    UnknownFeature(String),
    #[error("invalid model structure: {0}")]
    InvalidStructure(String),
}

impl ModelError {
    pub fn code(&self) -> &'static str {
        match self {
            ModelError::Malformed(_) => "malformed_document",
            ModelError::UnsupportedVersion(_) => "unsupported_version",
            ModelError::DepthViolation { .. } => "depth_violation",
            ModelError::PolicyViolation { .. } => "policy_violation",
            ModelError::UnknownFeature(_) => "unknown_feature",
            ModelError::InvalidStructure(_) => "invalid_structure",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PredictError {
    #[error("feature {0} is missing (non-finite)")]
    MissingFeature(Feature),
    #[error("group size {group_size} is outside 2..={} for a chart of {chart_size}", chart_size.saturating_sub(1))]
    SizeOutOfRange {
        group_size: usize,
        chart_size: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    Split {
        feature: Feature,
        threshold: f64,
        left: usize,
        right: usize,
        /// Positive fraction of the training rows reaching this node.
        probability: Option<f64>,
        samples: Option<usize>,
    },
    Leaf {
        probability: f64,
        samples: Option<usize>,
    },
}

/// Binary decision tree; node 0 is the root. `feature < threshold` descends
/// left, everything else (ties included) descends right.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    pub nodes: Vec<TreeNode>,
    pub max_depth: usize,
}

impl DecisionTree {
    pub fn leaf(probability: f64) -> Self {
        Self {
            nodes: vec![TreeNode::Leaf {
                probability,
                samples: None,
            }],
            max_depth: DEFAULT_MAX_DEPTH,
        }
    }

    /// A single split with two leaves.
    pub fn stump(feature: Feature, threshold: f64, left: f64, right: f64) -> Self {
        Self {
            nodes: vec![
                TreeNode::Split {
                    feature,
                    threshold,
                    left: 1,
                    right: 2,
                    probability: None,
                    samples: None,
                },
                TreeNode::Leaf {
                    probability: left,
                    samples: None,
                },
                TreeNode::Leaf {
                    probability: right,
                    samples: None,
                },
            ],
            max_depth: DEFAULT_MAX_DEPTH,
        }
    }

    pub fn predict(&self, features: &FeatureVector) -> f64 {
        let mut idx = 0;
        loop {
            match &self.nodes[idx] {
                TreeNode::Leaf { probability, .. } => return *probability,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    idx = if features.get(*feature) < *threshold {
                        *left
                    } else {
                        *right
                    };
                }
            }
        }
    }

    /// Checks shape: single root, every child exists, no cycles or orphans.
    /// Returns the depth (a lone leaf has depth 0).
    pub fn check_structure(&self) -> Result<usize, ModelError> {
        if self.nodes.is_empty() {
            return Err(ModelError::InvalidStructure("tree has no nodes".into()));
        }
        let mut visited = vec![false; self.nodes.len()];
        let mut depth = 0;
        let mut stack = vec![(0usize, 0usize)];
        while let Some((idx, d)) = stack.pop() {
            let node = self.nodes.get(idx).ok_or_else(|| {
                ModelError::InvalidStructure(format!("child index {idx} does not exist"))
            })?;
            if std::mem::replace(&mut visited[idx], true) {
                return Err(ModelError::InvalidStructure(format!(
                    "node {idx} is reachable twice (cycle or shared child)"
                )));
            }
            depth = depth.max(d);
            match node {
                TreeNode::Leaf { probability, .. } => {
                    if !(0.0..=1.0).contains(probability) {
                        return Err(ModelError::InvalidStructure(format!(
                            "leaf {idx} probability {probability} outside [0, 1]"
                        )));
                    }
                }
                TreeNode::Split {
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    if !threshold.is_finite() {
                        return Err(ModelError::InvalidStructure(format!(
                            "split {idx} has a non-finite threshold"
                        )));
                    }
                    stack.push((*right, d + 1));
                    stack.push((*left, d + 1));
                }
            }
        }
        if let Some(orphan) = visited.iter().position(|v| !v) {
            return Err(ModelError::InvalidStructure(format!(
                "node {orphan} is unreachable"
            )));
        }
        Ok(depth)
    }

    pub fn depth(&self) -> usize {
        self.check_structure().unwrap_or(usize::MAX)
    }

    pub fn features_read(&self) -> BTreeSet<Feature> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                TreeNode::Split { feature, .. } => Some(*feature),
                TreeNode::Leaf { .. } => None,
            })
            .collect()
    }

    pub fn leaf_probabilities(&self) -> Vec<f64> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                TreeNode::Leaf { probability, .. } => Some(*probability),
                TreeNode::Split { .. } => None,
            })
            .collect()
    }

    /// Collapses every split deeper than `depth` into a leaf carrying the
    /// split's own positive fraction.
    pub fn pruned(&self, depth: usize) -> DecisionTree {
        let mut nodes = Vec::new();
        self.copy_pruned(0, 0, depth, &mut nodes);
        DecisionTree {
            nodes,
            max_depth: self.max_depth.min(depth),
        }
    }

    fn copy_pruned(&self, idx: usize, d: usize, limit: usize, out: &mut Vec<TreeNode>) -> usize {
        let slot = out.len();
        match &self.nodes[idx] {
            TreeNode::Leaf { .. } => out.push(self.nodes[idx].clone()),
            TreeNode::Split { samples, .. } if d >= limit => {
                let probability = self.subtree_probability(idx);
                out.push(TreeNode::Leaf {
                    probability,
                    samples: *samples,
                });
            }
            TreeNode::Split {
                feature,
                threshold,
                left,
                right,
                probability,
                samples,
            } => {
                out.push(TreeNode::Leaf {
                    probability: 0.0,
                    samples: None,
                });
                let l = self.copy_pruned(*left, d + 1, limit, out);
                let r = self.copy_pruned(*right, d + 1, limit, out);
                out[slot] = TreeNode::Split {
                    feature: *feature,
                    threshold: *threshold,
                    left: l,
                    right: r,
                    probability: *probability,
                    samples: *samples,
                };
            }
        }
        slot
    }

    fn subtree_probability(&self, idx: usize) -> f64 {
        match &self.nodes[idx] {
            TreeNode::Leaf { probability, .. } => *probability,
            TreeNode::Split {
                probability: Some(p),
                ..
            } => *p,
            TreeNode::Split { left, right, .. } => {
                let weight = |i: usize| match &self.nodes[i] {
                    TreeNode::Leaf { samples, .. } | TreeNode::Split { samples, .. } => {
                        samples.unwrap_or(1) as f64
                    }
                };
                let (wl, wr) = (weight(*left), weight(*right));
                (wl * self.subtree_probability(*left) + wr * self.subtree_probability(*right))
                    / (wl + wr)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel {
    pub weights: BTreeMap<Feature, f64>,
    pub intercept: f64,
}

impl LogisticModel {
    pub fn included_features(&self) -> BTreeSet<Feature> {
        self.weights.keys().copied().collect()
    }

    pub fn score(&self, features: &FeatureVector) -> f64 {
        self.intercept
            + self
                .weights
                .iter()
                .map(|(f, w)| w * features.get(*f))
                .sum::<f64>()
    }

    pub fn predict(&self, features: &FeatureVector) -> f64 {
        sigmoid(self.score(features))
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelKind {
    Tree(DecisionTree),
    Logistic(LogisticModel),
    /// Cluster-feature stage first; undecided cases fall through to the
    /// co-linearity stage.
    Cascade {
        cluster_stage: Box<GroupingModel>,
        colinear_stage: Box<GroupingModel>,
    },
    /// Edge sizes {2, n-1} and intermediate sizes {3..n-2} get separate models.
    SizeRouted {
        edge: Box<GroupingModel>,
        intermediate: Box<GroupingModel>,
    },
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModelMetadata {
    pub name: String,
    pub version: String,
    pub provenance: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupingModel {
    pub kind: ModelKind,
    pub feature_policy: BTreeSet<Feature>,
    pub metadata: ModelMetadata,
}

/// Whether a group size belongs to the edge class for a chart of `chart_size`.
pub fn is_edge_size(group_size: usize, chart_size: usize) -> bool {
    group_size == 2 || group_size + 1 == chart_size
}

impl GroupingModel {
    /// Wraps `kind`, deriving the feature policy from what it reads.
    pub fn new(kind: ModelKind, metadata: ModelMetadata) -> Result<Self, ModelError> {
        let feature_policy = kind_features(&kind);
        let model = Self {
            kind,
            feature_policy,
            metadata,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn with_policy(
        kind: ModelKind,
        feature_policy: impl IntoIterator<Item = Feature>,
        metadata: ModelMetadata,
    ) -> Result<Self, ModelError> {
        let model = Self {
            kind,
            feature_policy: feature_policy.into_iter().collect(),
            metadata,
        };
        model.validate()?;
        Ok(model)
    }

    /// The metadata version, falling back to the name.
    pub fn version_label(&self) -> String {
        match (
            self.metadata.name.is_empty(),
            self.metadata.version.is_empty(),
        ) {
            (false, false) => format!("{}@{}", self.metadata.name, self.metadata.version),
            (false, true) => self.metadata.name.clone(),
            (true, false) => self.metadata.version.clone(),
            (true, true) => "unversioned".into(),
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        self.validate_in("model")
    }

    fn validate_in(&self, context: &'static str) -> Result<(), ModelError> {
        let permitted = |features: BTreeSet<Feature>, ctx: &'static str| match features
            .into_iter()
            .find(|f| !self.feature_policy.contains(f))
        {
            Some(feature) => Err(ModelError::PolicyViolation {
                feature,
                context: ctx,
            }),
            None => Ok(()),
        };
        match &self.kind {
            ModelKind::Tree(tree) => {
                let depth = tree.check_structure()?;
                if depth > tree.max_depth {
                    return Err(ModelError::DepthViolation {
                        depth,
                        max_depth: tree.max_depth,
                    });
                }
                permitted(tree.features_read(), context)
            }
            ModelKind::Logistic(logistic) => {
                if !logistic.intercept.is_finite()
                    || logistic.weights.values().any(|w| !w.is_finite())
                {
                    return Err(ModelError::InvalidStructure(
                        "logistic coefficients must be finite".into(),
                    ));
                }
                permitted(logistic.included_features(), context)
            }
            ModelKind::Cascade {
                cluster_stage,
                colinear_stage,
            } => {
                cluster_stage.validate_in("cluster_stage")?;
                colinear_stage.validate_in("colinear_stage")?;
                stage_within(cluster_stage, &Feature::CLUSTER, "cluster_stage")?;
                stage_within(colinear_stage, &Feature::COLINEAR, "colinear_stage")?;
                permitted(cluster_stage.feature_policy.clone(), context)?;
                permitted(colinear_stage.feature_policy.clone(), context)
            }
            ModelKind::SizeRouted { edge, intermediate } => {
                edge.validate_in("edge")?;
                intermediate.validate_in("intermediate")?;
                permitted(edge.feature_policy.clone(), context)?;
                permitted(intermediate.feature_policy.clone(), context)
            }
        }
    }

    pub fn predict(
        &self,
        features: &FeatureVector,
        group_size: usize,
        chart_size: usize,
    ) -> Result<f64, PredictError> {
        if group_size < 2 || group_size + 1 > chart_size {
            return Err(PredictError::SizeOutOfRange {
                group_size,
                chart_size,
            });
        }
        if let Some(f) = self
            .feature_policy
            .iter()
            .find(|f| !features.get(**f).is_finite())
        {
            return Err(PredictError::MissingFeature(*f));
        }
        Ok(self.predict_unchecked(features, group_size, chart_size))
    }

    fn predict_unchecked(
        &self,
        features: &FeatureVector,
        group_size: usize,
        chart_size: usize,
    ) -> f64 {
        match &self.kind {
            ModelKind::Tree(tree) => tree.predict(features),
            ModelKind::Logistic(logistic) => logistic.predict(features),
            ModelKind::Cascade {
                cluster_stage,
                colinear_stage,
            } => {
                let p = cluster_stage.predict_unchecked(features, group_size, chart_size);
                if p <= DECISIVE_LOW || p >= DECISIVE_HIGH {
                    p
                } else {
                    colinear_stage.predict_unchecked(features, group_size, chart_size)
                }
            }
            ModelKind::SizeRouted { edge, intermediate } => {
                if is_edge_size(group_size, chart_size) {
                    edge.predict_unchecked(features, group_size, chart_size)
                } else {
                    intermediate.predict_unchecked(features, group_size, chart_size)
                }
            }
        }
    }

    /// Whether the model (under its policy) can read the slope feature.
    pub fn reads_slope(&self) -> bool {
        self.feature_policy.contains(&Feature::Slope)
    }
}

fn stage_within(
    stage: &GroupingModel,
    allowed: &[Feature],
    context: &'static str,
) -> Result<(), ModelError> {
    match stage.feature_policy.iter().find(|f| !allowed.contains(f)) {
        Some(feature) => Err(ModelError::PolicyViolation {
            feature: *feature,
            context,
        }),
        None => Ok(()),
    }
}

fn kind_features(kind: &ModelKind) -> BTreeSet<Feature> {
    match kind {
        ModelKind::Tree(tree) => tree.features_read(),
        ModelKind::Logistic(logistic) => logistic.included_features(),
        ModelKind::Cascade {
            cluster_stage: a,
            colinear_stage: b,
        }
        | ModelKind::SizeRouted {
            edge: a,
            intermediate: b,
        } => a.feature_policy.union(&b.feature_policy).copied().collect(),
    }
}

pub fn predict(
    model: &GroupingModel,
    features: &FeatureVector,
    group_size: usize,
    chart_size: usize,
) -> Result<f64, PredictError> {
    model.predict(features, group_size, chart_size)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tree_model(tree: DecisionTree) -> GroupingModel {
        GroupingModel::new(ModelKind::Tree(tree), ModelMetadata::default()).unwrap()
    }

    fn fv_with(feature: Feature, value: f64) -> FeatureVector {
        let mut fv = FeatureVector::default();
        fv.set(feature, value);
        fv
    }

    #[test]
    fn constant_tree() {
        let model = tree_model(DecisionTree::leaf(0.37));
        for v in [0.0, 3.0, 1e6] {
            assert_eq!(
                model.predict(&fv_with(Feature::YSep, v), 3, 6).unwrap(),
                0.37
            );
        }
    }

    #[test]
    fn zero_logistic_is_one_half() {
        let logistic = LogisticModel {
            weights: Feature::ALL.iter().map(|f| (*f, 0.0)).collect(),
            intercept: 0.0,
        };
        let model =
            GroupingModel::new(ModelKind::Logistic(logistic), ModelMetadata::default()).unwrap();
        let fv = FeatureVector::from_array([1.0, 2.0, 3.0, 4.0, 0.5, 0.1, 9.0, 3.0]);
        assert_eq!(model.predict(&fv, 2, 6).unwrap(), 0.5);
    }

    #[test]
    fn stump_on_error() {
        let model = tree_model(DecisionTree::stump(Feature::Error, 5.0, 0.95, 0.05));
        assert_eq!(
            model.predict(&fv_with(Feature::Error, 2.0), 3, 6).unwrap(),
            0.95
        );
        assert_eq!(
            model.predict(&fv_with(Feature::Error, 9.0), 3, 6).unwrap(),
            0.05
        );
        // Ties go right.
        assert_eq!(
            model.predict(&fv_with(Feature::Error, 5.0), 3, 6).unwrap(),
            0.05
        );
    }

    #[test]
    fn size_and_missing_checks() {
        let model = tree_model(DecisionTree::stump(Feature::Error, 5.0, 0.95, 0.05));
        let fv = FeatureVector::default();
        assert!(matches!(
            model.predict(&fv, 1, 6),
            Err(PredictError::SizeOutOfRange { .. })
        ));
        assert!(matches!(
            model.predict(&fv, 6, 6),
            Err(PredictError::SizeOutOfRange { .. })
        ));
        let missing = fv_with(Feature::Error, f64::NAN);
        assert_eq!(
            model.predict(&missing, 3, 6),
            Err(PredictError::MissingFeature(Feature::Error))
        );
        // A feature outside the policy may be missing.
        assert!(model
            .predict(&fv_with(Feature::Slope, f64::NAN), 3, 6)
            .is_ok());
    }

    #[test]
    fn size_routing() {
        let edge = tree_model(DecisionTree::leaf(0.2));
        let mid = tree_model(DecisionTree::leaf(0.7));
        let model = GroupingModel::new(
            ModelKind::SizeRouted {
                edge: Box::new(edge),
                intermediate: Box::new(mid),
            },
            ModelMetadata::default(),
        )
        .unwrap();
        let fv = FeatureVector::default();
        let got: Vec<f64> = (2..=5).map(|s| model.predict(&fv, s, 6).unwrap()).collect();
        assert_eq!(got, vec![0.2, 0.7, 0.7, 0.2]);
    }

    #[test]
    fn cascade_delegates_when_undecided() {
        let cluster = tree_model(DecisionTree::stump(Feature::YSep, 10.0, 0.5, 0.95));
        let colinear = tree_model(DecisionTree::stump(Feature::Error, 4.0, 0.99, 0.01));
        let model = GroupingModel::new(
            ModelKind::Cascade {
                cluster_stage: Box::new(cluster),
                colinear_stage: Box::new(colinear),
            },
            ModelMetadata::default(),
        )
        .unwrap();
        let decisive = FeatureVector {
            y_sep: 20.0,
            error: 100.0,
            ..Default::default()
        };
        assert_eq!(model.predict(&decisive, 3, 6).unwrap(), 0.95);
        let undecided = FeatureVector {
            y_sep: 1.0,
            error: 1.0,
            ..Default::default()
        };
        assert_eq!(model.predict(&undecided, 3, 6).unwrap(), 0.99);
    }

    #[test]
    fn cascade_stage_policy_enforced() {
        let cluster = tree_model(DecisionTree::stump(Feature::Error, 10.0, 0.5, 0.95));
        let colinear = tree_model(DecisionTree::leaf(0.5));
        let err = GroupingModel::new(
            ModelKind::Cascade {
                cluster_stage: Box::new(cluster),
                colinear_stage: Box::new(colinear),
            },
            ModelMetadata::default(),
        )
        .unwrap_err();
        assert_eq!(err.code(), "policy_violation");
    }

    #[test]
    fn structure_checks() {
        let mut tree = DecisionTree::stump(Feature::Error, 1.0, 0.1, 0.9);
        if let TreeNode::Split { right, .. } = &mut tree.nodes[0] {
            *right = 0;
        }
        assert!(matches!(
            tree.check_structure(),
            Err(ModelError::InvalidStructure(_))
        ));

        let mut tree = DecisionTree::stump(Feature::Error, 1.0, 0.1, 0.9);
        if let TreeNode::Split { right, .. } = &mut tree.nodes[0] {
            *right = 7;
        }
        assert!(tree.check_structure().is_err());

        let mut tree = DecisionTree::stump(Feature::Error, 1.0, 0.1, 0.9);
        tree.nodes.push(TreeNode::Leaf {
            probability: 0.3,
            samples: None,
        });
        assert!(tree.check_structure().is_err());
    }

    #[test]
    fn pruning_to_root_uses_weighted_fraction() {
        let tree = DecisionTree {
            nodes: vec![
                TreeNode::Split {
                    feature: Feature::Error,
                    threshold: 1.0,
                    left: 1,
                    right: 2,
                    probability: None,
                    samples: Some(4),
                },
                TreeNode::Leaf {
                    probability: 1.0,
                    samples: Some(1),
                },
                TreeNode::Leaf {
                    probability: 0.0,
                    samples: Some(3),
                },
            ],
            max_depth: 3,
        };
        let root = tree.pruned(0);
        assert_eq!(
            root.nodes,
            vec![TreeNode::Leaf {
                probability: 0.25,
                samples: Some(4)
            }]
        );
        assert_eq!(
            tree.pruned(1),
            DecisionTree {
                max_depth: 1,
                ..tree.clone()
            }
        );
    }
}
