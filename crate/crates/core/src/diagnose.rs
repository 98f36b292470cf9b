//! Finds the groups a viewer is likely to perceive in a chart and flags the
//! ones the designer did not ask for.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chart::{self, Chart, ChartError};
use crate::features::{features_for_mask, FeatureError, FeatureVector, Group, GroupError};
use crate::model::{GroupingModel, PredictError};

pub const DEFAULT_THRESHOLD: f64 = 0.9;
/// Largest linear-fit error (px) at which a group still counts as co-linear.
pub const DEFAULT_EPSILON_LINE: f64 = 4.0;
/// Candidate enumeration is exponential; refuse beyond this many points.
pub const MAX_DIAGNOSE_POINTS: usize = 20;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiagnoseError {
    #[error(transparent)]
    Chart(#[from] ChartError),
    #[error("diagnosis needs at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("diagnosis supports at most {MAX_DIAGNOSE_POINTS} points, got {0}")]
    TooManyPoints(usize),
    #[error("desired group {index}: {source}")]
    DesiredGroup { index: usize, source: GroupError },
    #[error("threshold {0} outside [0, 1]")]
    InvalidThreshold(f64),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Predict(#[from] PredictError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnoseConfig {
    pub threshold: f64,
    pub epsilon_line: f64,
}

impl Default for DiagnoseConfig {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
            epsilon_line: DEFAULT_EPSILON_LINE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectedGroup {
    pub group: Group,
    pub prob: f64,
    pub violation: bool,
    pub colinear: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosisReport {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chart_id: Option<String>,
    pub desired: Vec<Group>,
    pub detected: Vec<DetectedGroup>,
    pub missed_desired: Vec<Group>,
    pub threshold: f64,
    pub epsilon_line: f64,
    pub model_version: String,
}

impl DiagnosisReport {
    pub fn violations(&self) -> usize {
        self.detected.iter().filter(|d| d.violation).count()
    }

    pub fn desired_met(&self) -> usize {
        self.detected.iter().filter(|d| !d.violation).count()
    }

    /// Total probability of the desired groups that were detected.
    pub fn desired_probability(&self) -> f64 {
        probability_sum(
            self.detected
                .iter()
                .filter(|d| !d.violation)
                .map(|d| d.prob),
        )
    }
}

/// Sum in descending order, so the result does not depend on input order.
pub(crate) fn probability_sum(probs: impl Iterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = probs.collect();
    v.sort_by(|a, b| b.total_cmp(a));
    v.into_iter().fold(0.0, |acc, p| acc + p)
}

pub fn is_colinear(features: &FeatureVector, epsilon_line: f64) -> bool {
    features.error <= epsilon_line
}

/// Masks of every subset with 2..=n-1 members: by size, then lexicographic
/// in point index.
pub fn candidate_masks(n: usize) -> Vec<u64> {
    fn combos(n: usize, k: usize, start: usize, mask: u64, out: &mut Vec<u64>) {
        if k == 0 {
            out.push(mask);
            return;
        }
        for i in start..=n - k {
            combos(n, k - 1, i + 1, mask | 1 << i, out);
        }
    }
    let mut out = Vec::new();
    for k in 2..n {
        combos(n, k, 0, 0, &mut out);
    }
    out
}

pub fn enumerate_candidates(chart: &Chart) -> Result<Vec<Group>, DiagnoseError> {
    check_size(chart.len())?;
    Ok(candidate_masks(chart.len())
        .into_iter()
        .map(|m| Group::from_mask(chart, m))
        .collect())
}

fn check_size(n: usize) -> Result<(), DiagnoseError> {
    if n < 3 {
        return Err(DiagnoseError::TooFewPoints(n));
    }
    if n > MAX_DIAGNOSE_POINTS {
        return Err(DiagnoseError::TooManyPoints(n));
    }
    Ok(())
}

/// A detected group before it is turned back into labels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Hit {
    pub mask: u64,
    pub prob: f64,
    pub colinear: bool,
    pub desired: bool,
}

/// Scores every candidate of an already validated chart, keeps the ones at or
/// above threshold, and prunes co-linear groups nested in other co-linear
/// groups.
pub(crate) fn detect(
    chart: &Chart,
    candidates: &[u64],
    desired: &[u64],
    model: &GroupingModel,
    config: &DiagnoseConfig,
) -> Result<Vec<Hit>, DiagnoseError> {
    let n = chart.len();
    let coords = chart::layout_unchecked(chart).coords;
    let mut hits = Vec::new();
    for &mask in candidates {
        let features = features_for_mask(&coords, mask, &chart.plot)?;
        let size = mask.count_ones() as usize;
        let prob = model.predict(&features, size, n)?;
        if prob >= config.threshold {
            hits.push(Hit {
                mask,
                prob,
                colinear: is_colinear(&features, config.epsilon_line),
                desired: desired.contains(&mask),
            });
        }
    }
    let lines: Vec<u64> = hits.iter().filter(|h| h.colinear).map(|h| h.mask).collect();
    hits.retain(|h| {
        !h.colinear
            || !lines
                .iter()
                .any(|&other| other != h.mask && other & h.mask == h.mask)
    });
    Ok(hits)
}

pub(crate) fn desired_masks(chart: &Chart, desired: &[Group]) -> Result<Vec<u64>, DiagnoseError> {
    desired
        .iter()
        .enumerate()
        .map(|(index, g)| {
            g.mask(chart)
                .map_err(|source| DiagnoseError::DesiredGroup { index, source })
        })
        .collect()
}

pub(crate) fn dedup_groups(groups: &[Group]) -> Vec<Group> {
    let mut out: Vec<Group> = Vec::with_capacity(groups.len());
    for g in groups {
        if !out.contains(g) {
            out.push(g.clone());
        }
    }
    out
}

pub(crate) fn build_report(
    chart: &Chart,
    desired: Vec<Group>,
    hits: &[Hit],
    model: &GroupingModel,
    config: &DiagnoseConfig,
) -> DiagnosisReport {
    let mut detected: Vec<DetectedGroup> = hits
        .iter()
        .map(|h| DetectedGroup {
            group: Group::from_mask(chart, h.mask),
            prob: h.prob,
            violation: !h.desired,
            colinear: h.colinear,
        })
        .collect();
    // Label order as the last key keeps reports independent of x order.
    detected.sort_by(|a, b| {
        a.group
            .len()
            .cmp(&b.group.len())
            .then(b.prob.total_cmp(&a.prob))
            .then_with(|| a.group.cmp(&b.group))
    });
    let missed_desired = desired
        .iter()
        .filter(|g| !detected.iter().any(|d| &d.group == *g))
        .cloned()
        .collect();
    DiagnosisReport {
        chart_id: None,
        desired,
        detected,
        missed_desired,
        threshold: config.threshold,
        epsilon_line: config.epsilon_line,
        model_version: model.version_label(),
    }
}

pub(crate) fn check_config(config: &DiagnoseConfig) -> Result<(), DiagnoseError> {
    if !(0.0..=1.0).contains(&config.threshold) {
        return Err(DiagnoseError::InvalidThreshold(config.threshold));
    }
    Ok(())
}

pub fn diagnose(
    chart: &Chart,
    desired: &[Group],
    model: &GroupingModel,
    config: &DiagnoseConfig,
) -> Result<DiagnosisReport, DiagnoseError> {
    chart.validate()?;
    check_size(chart.len())?;
    check_config(config)?;
    let desired = dedup_groups(desired);
    let desired_ids = desired_masks(chart, &desired)?;
    let hits = detect(
        chart,
        &candidate_masks(chart.len()),
        &desired_ids,
        model,
        config,
    )?;
    Ok(build_report(chart, desired, &hits, model, config))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::generate_random_chart;
    use crate::features::Feature;
    use crate::model::{DecisionTree, ModelKind, ModelMetadata};

    fn tree(t: DecisionTree) -> GroupingModel {
        GroupingModel::new(ModelKind::Tree(t), ModelMetadata::default()).unwrap()
    }

    #[test]
    fn candidate_counts() {
        assert_eq!(candidate_masks(6).len(), 15 + 20 + 15 + 6);
        assert_eq!(candidate_masks(3), vec![0b011, 0b101, 0b110]);
        let chart = generate_random_chart(6, 0).unwrap();
        let groups = enumerate_candidates(&chart).unwrap();
        let mut unique = groups.clone();
        unique.sort();
        unique.dedup();
        assert_eq!(unique.len(), 56);
        assert!(groups.iter().all(|g| (2..6).contains(&g.len())));
        assert_eq!(groups[0], Group::new(["A", "B"]));
        assert!(matches!(
            enumerate_candidates(&generate_random_chart(2, 0).unwrap()),
            Err(DiagnoseError::TooFewPoints(2))
        ));
    }

    #[test]
    fn colinear_threshold_is_closed() {
        let at = FeatureVector {
            error: 4.0,
            ..Default::default()
        };
        assert!(is_colinear(&at, 4.0));
        assert!(is_colinear(&FeatureVector::default(), 4.0));
        assert!(!is_colinear(
            &FeatureVector {
                error: 40.0,
                ..Default::default()
            },
            4.0
        ));
    }

    #[test]
    fn unreachable_threshold_detects_nothing() {
        let chart = generate_random_chart(6, 5).unwrap();
        let desired = vec![Group::new(["A", "B"]), Group::new(["C", "D", "E"])];
        let model = tree(DecisionTree::leaf(0.99));
        let config = DiagnoseConfig {
            threshold: 1.0,
            ..Default::default()
        };
        let report = diagnose(&chart, &desired, &model, &config).unwrap();
        assert!(report.detected.is_empty());
        assert_eq!(report.missed_desired, desired);
    }

    #[test]
    fn desired_only_detection_has_no_violations() {
        let chart = generate_random_chart(6, 5).unwrap();
        // Constant model detects everything; pruning then leaves the maximal
        // co-linear groups and every non-co-linear group.
        let model = tree(DecisionTree::leaf(0.95));
        let report = diagnose(&chart, &[], &model, &DiagnoseConfig::default()).unwrap();
        assert!(report.detected.iter().all(|d| d.violation));
        let desired: Vec<Group> = report.detected.iter().map(|d| d.group.clone()).collect();
        let again = diagnose(&chart, &desired, &model, &DiagnoseConfig::default()).unwrap();
        assert_eq!(again.violations(), 0);
        assert!(again.missed_desired.is_empty());
    }

    #[test]
    fn report_sorted_by_size_then_probability() {
        let chart = generate_random_chart(6, 9).unwrap();
        let model = tree(DecisionTree::stump(Feature::YSep, 5.0, 0.91, 0.97));
        let report = diagnose(&chart, &[], &model, &DiagnoseConfig::default()).unwrap();
        for w in report.detected.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            assert!(
                a.group.len() < b.group.len()
                    || (a.group.len() == b.group.len() && a.prob >= b.prob)
            );
        }
    }

    #[test]
    fn invalid_desired_group_rejected() {
        let chart = generate_random_chart(6, 5).unwrap();
        let model = tree(DecisionTree::leaf(0.5));
        let err = diagnose(
            &chart,
            &[Group::new(["A", "Q"])],
            &model,
            &DiagnoseConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, DiagnoseError::DesiredGroup { index: 0, .. }));
    }
}
