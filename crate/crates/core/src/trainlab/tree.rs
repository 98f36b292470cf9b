use serde::{Deserialize, Serialize};

use super::{project, LabeledExample, TrainError};
use crate::features::Feature;
use crate::model::{DecisionTree, TreeNode, DEFAULT_MAX_DEPTH};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TreeParams {
    pub max_depth: usize,
    /// Features the tree may split on.
    pub features: Vec<Feature>,
    /// Nodes with fewer rows become leaves.
    pub min_samples_split: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: DEFAULT_MAX_DEPTH,
            features: Feature::ALL.to_vec(),
            min_samples_split: 2,
        }
    }
}

impl TreeParams {
    pub fn with_features(features: &[Feature]) -> Self {
        Self {
            features: features.to_vec(),
            ..Default::default()
        }
    }
}

/// CART with Gini impurity. Thresholds sit at midpoints between adjacent
/// distinct values; equal-impurity candidates resolve to the earlier feature in
/// canonical order, then the lower threshold. The result does not depend on
/// the order of `examples`.
pub fn train_decision_tree(
    examples: &[LabeledExample],
    params: &TreeParams,
) -> Result<DecisionTree, TrainError> {
    if examples.is_empty() {
        return Err(TrainError::Empty);
    }
    let mut features = params.features.clone();
    features.sort();
    features.dedup();
    let rows: Vec<Vec<f64>> = examples
        .iter()
        .map(|e| project(&e.features, &features))
        .collect();
    let labels: Vec<bool> = examples.iter().map(|e| e.label).collect();
    let mut builder = Builder {
        rows: &rows,
        labels: &labels,
        features: &features,
        max_depth: params.max_depth,
        min_split: params.min_samples_split.max(2),
        nodes: Vec::new(),
    };
    let all: Vec<usize> = (0..rows.len()).collect();
    builder.grow(all, 0);
    Ok(DecisionTree {
        nodes: builder.nodes,
        max_depth: params.max_depth,
    })
}

struct Builder<'a> {
    rows: &'a [Vec<f64>],
    labels: &'a [bool],
    features: &'a [Feature],
    max_depth: usize,
    min_split: usize,
    nodes: Vec<TreeNode>,
}

fn gini(pos: usize, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let p = pos as f64 / n as f64;
    2.0 * p * (1.0 - p)
}

struct Split {
    column: usize,
    threshold: f64,
    impurity: f64,
}

impl Builder<'_> {
    fn grow(&mut self, idx: Vec<usize>, depth: usize) -> usize {
        let n = idx.len();
        let pos = idx.iter().filter(|&&i| self.labels[i]).count();
        let probability = pos as f64 / n as f64;
        let id = self.nodes.len();
        self.nodes.push(TreeNode::Leaf {
            probability,
            samples: Some(n),
        });
        if depth >= self.max_depth || pos == 0 || pos == n || n < self.min_split {
            return id;
        }
        let Some(split) = self.best_split(&idx, pos) else {
            return id;
        };
        let (left, right): (Vec<usize>, Vec<usize>) = idx
            .into_iter()
            .partition(|&i| self.rows[i][split.column] < split.threshold);
        let l = self.grow(left, depth + 1);
        let r = self.grow(right, depth + 1);
        self.nodes[id] = TreeNode::Split {
            feature: self.features[split.column],
            threshold: split.threshold,
            left: l,
            right: r,
            probability: Some(probability),
            samples: Some(n),
        };
        id
    }

    fn best_split(&self, idx: &[usize], pos: usize) -> Option<Split> {
        let n = idx.len();
        let parent = gini(pos, n);
        let mut best: Option<Split> = None;
        let mut sorted = idx.to_vec();
        for column in 0..self.features.len() {
            sorted.sort_by(|&a, &b| self.rows[a][column].total_cmp(&self.rows[b][column]));
            let mut left_pos = 0;
            for k in 1..n {
                if self.labels[sorted[k - 1]] {
                    left_pos += 1;
                }
                let (a, b) = (
                    self.rows[sorted[k - 1]][column],
                    self.rows[sorted[k]][column],
                );
                if a == b {
                    continue;
                }
                let impurity = (k as f64 * gini(left_pos, k)
                    + (n - k) as f64 * gini(pos - left_pos, n - k))
                    / n as f64;
                if impurity < best.as_ref().map_or(parent, |s| s.impurity) - 1e-12 {
                    let mid = a + (b - a) / 2.0;
                    let threshold = if mid > a { mid } else { b };
                    best = Some(Split {
                        column,
                        threshold,
                        impurity,
                    });
                }
            }
        }
        best
    }
}
