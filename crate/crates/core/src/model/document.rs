//! JSON model documents.
//!
//! ```json
//! {"version":1,"kind":"tree","feature_policy":["error"],
//!  "tree":{"max_depth":3,"nodes":[...]},"metadata":{...}}
//! ```
//!
//! Composite kinds nest full documents under `stages`: `cluster`/`colinear`
//! for a cascade, `edge`/`intermediate` for a size-routed model.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{
    DecisionTree, GroupingModel, LogisticModel, ModelError, ModelKind, ModelMetadata, TreeNode,
    DEFAULT_MAX_DEPTH,
};
use crate::features::Feature;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDocument {
    pub version: u32,
    pub kind: String,
    #[serde(default)]
    pub feature_policy: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tree: Option<TreeDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logistic: Option<LogisticDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stages: Option<BTreeMap<String, ModelDocument>>,
    #[serde(default)]
    pub metadata: MetadataDoc,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetadataDoc {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub version: String,
    #[serde(default)]
    pub provenance: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeDoc {
    #[serde(default = "default_max_depth")]
    pub max_depth: usize,
    pub nodes: Vec<NodeDoc>,
}

fn default_max_depth() -> usize {
    DEFAULT_MAX_DEPTH
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NodeDoc {
    Split {
        feature: String,
        threshold: f64,
        left: usize,
        right: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        probability: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        samples: Option<usize>,
    },
    Leaf {
        probability: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        samples: Option<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogisticDoc {
    pub weights: BTreeMap<String, f64>,
    pub intercept: f64,
    pub included_features: Vec<String>,
}

fn parse_feature(name: &str) -> Result<Feature, ModelError> {
    name.parse()
        .map_err(|_| ModelError::UnknownFeature(name.to_string()))
}

impl ModelDocument {
    pub fn from_model(model: &GroupingModel) -> Self {
        let mut doc = ModelDocument {
            version: MODEL_FORMAT_VERSION,
            kind: String::new(),
            feature_policy: model
                .feature_policy
                .iter()
                .map(|f| f.name().to_string())
                .collect(),
            tree: None,
            logistic: None,
            stages: None,
            metadata: MetadataDoc {
                name: model.metadata.name.clone(),
                version: model.metadata.version.clone(),
                provenance: model.metadata.provenance.clone(),
            },
        };
        match &model.kind {
            ModelKind::Tree(tree) => {
                doc.kind = "tree".into();
                doc.tree = Some(TreeDoc {
                    max_depth: tree.max_depth,
                    nodes: tree.nodes.iter().map(node_doc).collect(),
                });
            }
            ModelKind::Logistic(logistic) => {
                doc.kind = "logistic".into();
                doc.logistic = Some(LogisticDoc {
                    weights: logistic
                        .weights
                        .iter()
                        .map(|(f, w)| (f.name().to_string(), *w))
                        .collect(),
                    intercept: logistic.intercept,
                    included_features: logistic
                        .weights
                        .keys()
                        .map(|f| f.name().to_string())
                        .collect(),
                });
            }
            ModelKind::Cascade {
                cluster_stage,
                colinear_stage,
            } => {
                doc.kind = "cascade".into();
                doc.stages = Some(BTreeMap::from([
                    ("cluster".to_string(), Self::from_model(cluster_stage)),
                    ("colinear".to_string(), Self::from_model(colinear_stage)),
                ]));
            }
            ModelKind::SizeRouted { edge, intermediate } => {
                doc.kind = "size_routed".into();
                doc.stages = Some(BTreeMap::from([
                    ("edge".to_string(), Self::from_model(edge)),
                    ("intermediate".to_string(), Self::from_model(intermediate)),
                ]));
            }
        }
        doc
    }

    pub fn into_model(self) -> Result<GroupingModel, ModelError> {
        if self.version != MODEL_FORMAT_VERSION {
            return Err(ModelError::UnsupportedVersion(self.version));
        }
        let feature_policy = self
            .feature_policy
            .iter()
            .map(|f| parse_feature(f))
            .collect::<Result<Vec<_>, _>>()?;
        let kind = match self.kind.as_str() {
            "tree" => {
                let tree = self.tree.ok_or_else(|| {
                    ModelError::Malformed("kind tree requires a tree object".into())
                })?;
                let nodes = tree
                    .nodes
                    .into_iter()
                    .map(tree_node)
                    .collect::<Result<Vec<_>, _>>()?;
                ModelKind::Tree(DecisionTree {
                    nodes,
                    max_depth: tree.max_depth,
                })
            }
            "logistic" => {
                let doc = self.logistic.ok_or_else(|| {
                    ModelError::Malformed("kind logistic requires a logistic object".into())
                })?;
                let mut weights = BTreeMap::new();
                for (name, w) in &doc.weights {
                    weights.insert(parse_feature(name)?, *w);
                }
                let mut included = doc
                    .included_features
                    .iter()
                    .map(|f| parse_feature(f))
                    .collect::<Result<Vec<_>, _>>()?;
                included.sort();
                included.dedup();
                if !included.iter().copied().eq(weights.keys().copied()) {
                    return Err(ModelError::InvalidStructure(
                        "logistic weights must cover exactly the included features".into(),
                    ));
                }
                ModelKind::Logistic(LogisticModel {
                    weights,
                    intercept: doc.intercept,
                })
            }
            "cascade" => {
                let (cluster, colinear) = take_stages(self.stages, "cluster", "colinear")?;
                ModelKind::Cascade {
                    cluster_stage: Box::new(cluster.into_model()?),
                    colinear_stage: Box::new(colinear.into_model()?),
                }
            }
            "size_routed" => {
                let (edge, intermediate) = take_stages(self.stages, "edge", "intermediate")?;
                ModelKind::SizeRouted {
                    edge: Box::new(edge.into_model()?),
                    intermediate: Box::new(intermediate.into_model()?),
                }
            }
            other => {
                return Err(ModelError::Malformed(format!(
                    "unknown model kind {other:?}"
                )))
            }
        };
        let metadata = ModelMetadata {
            name: self.metadata.name,
            version: self.metadata.version,
            provenance: self.metadata.provenance,
        };
        GroupingModel::with_policy(kind, feature_policy, metadata)
    }
}

fn take_stages(
    stages: Option<BTreeMap<String, ModelDocument>>,
    first: &str,
    second: &str,
) -> Result<(ModelDocument, ModelDocument), ModelError> {
    let mut stages =
        stages.ok_or_else(|| ModelError::Malformed("composite model requires stages".into()))?;
    let a = stages
        .remove(first)
        .ok_or_else(|| ModelError::Malformed(format!("missing stage {first:?}")))?;
    let b = stages
        .remove(second)
        .ok_or_else(|| ModelError::Malformed(format!("missing stage {second:?}")))?;
    if let Some(extra) = stages.keys().next() {
        return Err(ModelError::Malformed(format!("unexpected stage {extra:?}")));
    }
    Ok((a, b))
}

fn node_doc(node: &TreeNode) -> NodeDoc {
    match node {
        TreeNode::Split {
            feature,
            threshold,
            left,
            right,
            probability,
            samples,
        } => NodeDoc::Split {
            feature: feature.name().to_string(),
            threshold: *threshold,
            left: *left,
            right: *right,
            probability: *probability,
            samples: *samples,
        },
        TreeNode::Leaf {
            probability,
            samples,
        } => NodeDoc::Leaf {
            probability: *probability,
            samples: *samples,
        },
    }
}

fn tree_node(doc: NodeDoc) -> Result<TreeNode, ModelError> {
    Ok(match doc {
        NodeDoc::Split {
            feature,
            threshold,
            left,
            right,
            probability,
            samples,
        } => TreeNode::Split {
            feature: parse_feature(&feature)?,
            threshold,
            left,
            right,
            probability,
            samples,
        },
        NodeDoc::Leaf {
            probability,
            samples,
        } => TreeNode::Leaf {
            probability,
            samples,
        },
    })
}

pub fn save_model(model: &GroupingModel) -> String {
    serde_json::to_string_pretty(&ModelDocument::from_model(model))
        .expect("model documents serialize")
}

pub fn load_model(document: &str) -> Result<GroupingModel, ModelError> {
    let doc: ModelDocument =
        serde_json::from_str(document).map_err(|e| ModelError::Malformed(e.to_string()))?;
    doc.into_model()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Split chain continuing through the right child; leaves at odd indices.
    fn depth_chain(depth: usize) -> String {
        let mut nodes = Vec::new();
        for d in 0..depth {
            nodes.push(format!(
                r#"{{"kind":"split","feature":"error","threshold":{d},"left":{},"right":{}}}"#,
                2 * d + 1,
                2 * d + 2
            ));
            nodes.push(r#"{"kind":"leaf","probability":0.1}"#.to_string());
        }
        nodes.push(r#"{"kind":"leaf","probability":0.9}"#.to_string());
        format!(
            r#"{{"version":1,"kind":"tree","feature_policy":["error"],"tree":{{"max_depth":3,"nodes":[{}]}}}}"#,
            nodes.join(",")
        )
    }

    #[test]
    fn depth_limit_enforced_on_load() {
        assert!(load_model(&depth_chain(3)).is_ok());
        let err = load_model(&depth_chain(4)).unwrap_err();
        assert_eq!(
            err,
            ModelError::DepthViolation {
                depth: 4,
                max_depth: 3
            }
        );
        assert_eq!(err.code(), "depth_violation");
    }

    #[test]
    fn unknown_feature_rejected() {
        let doc = r#"{"version":1,"kind":"tree","feature_policy":["hue"],
            "tree":{"nodes":[{"kind":"split","feature":"hue","threshold":1,"left":1,"right":2},
            {"kind":"leaf","probability":0.1},{"kind":"leaf","probability":0.9}]}}"#;
        let err = load_model(doc).unwrap_err();
        assert_eq!(err, ModelError::UnknownFeature("hue".into()));
        assert_eq!(err.code(), "unknown_feature");
    }

    #[test]
    fn unknown_version_and_policy_violations() {
        let doc =
            r#"{"version":2,"kind":"tree","tree":{"nodes":[{"kind":"leaf","probability":0.5}]}}"#;
        assert_eq!(load_model(doc).unwrap_err().code(), "unsupported_version");

        let doc = r#"{"version":1,"kind":"tree","feature_policy":["y_sep"],
            "tree":{"nodes":[{"kind":"split","feature":"slope","threshold":1,"left":1,"right":2},
            {"kind":"leaf","probability":0.1},{"kind":"leaf","probability":0.9}]}}"#;
        assert_eq!(load_model(doc).unwrap_err().code(), "policy_violation");

        assert_eq!(
            load_model("{not json").unwrap_err().code(),
            "malformed_document"
        );
        assert_eq!(
            load_model(r#"{"version":1,"kind":"forest"}"#)
                .unwrap_err()
                .code(),
            "malformed_document"
        );
    }

    #[test]
    fn round_trip_composites() {
        let leaf = |p| {
            GroupingModel::new(
                ModelKind::Tree(DecisionTree::leaf(p)),
                ModelMetadata::default(),
            )
            .unwrap()
        };
        let logistic = GroupingModel::new(
            ModelKind::Logistic(LogisticModel {
                weights: BTreeMap::from([(Feature::Error, -0.5), (Feature::YSep, 0.25)]),
                intercept: 0.125,
            }),
            ModelMetadata::default(),
        )
        .unwrap();
        let routed = GroupingModel::new(
            ModelKind::SizeRouted {
                edge: Box::new(leaf(0.25)),
                intermediate: Box::new(logistic),
            },
            ModelMetadata {
                name: "m".into(),
                version: "3".into(),
                provenance: "test".into(),
            },
        )
        .unwrap();
        let text = save_model(&routed);
        let back = load_model(&text).unwrap();
        assert_eq!(back, routed);
        assert_eq!(save_model(&back), text);
    }
}
