//! Rule-based stand-in for human labels.
//!
//! A group is positive when it is a tight line of three or more points, a
//! well separated cluster whose hull stays clear of the rest, or is far from
//! the rest along y.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ExampleSource, LabeledExample, TrainError};
use crate::chart::{self, generate_random_chart, Chart};
use crate::diagnose::candidate_masks;
use crate::features::{features_for_mask, FeatureVector, Group};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleConfig {
    /// Maximum line-fit error (px) for the line rule.
    pub tau_line: f64,
    /// Minimum centroid ratio for the cluster rule.
    pub tau_ratio: f64,
    /// Minimum y separation (px) for the separation rule.
    pub tau_y: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            tau_line: 4.0,
            tau_ratio: 3.0,
            tau_y: 30.0,
        }
    }
}

pub fn oracle_label(features: &FeatureVector, group_size: usize, config: &OracleConfig) -> bool {
    let line = features.error <= config.tau_line && group_size >= 3;
    let cluster = features.centroid_ratio >= config.tau_ratio && features.cvx_overlap == 0.0;
    let separated = features.y_sep >= config.tau_y;
    line || cluster || separated
}

/// Every candidate group of `chart`, labeled by the oracle.
pub fn label_chart(
    chart_id: &str,
    chart: &Chart,
    config: &OracleConfig,
) -> Result<Vec<LabeledExample>, TrainError> {
    let coords = chart::layout(chart)?.coords;
    candidate_masks(chart.len())
        .into_iter()
        .map(|mask| {
            let features = features_for_mask(&coords, mask, &chart.plot)?;
            let size = mask.count_ones() as usize;
            Ok(LabeledExample {
                chart_id: chart_id.to_string(),
                group: Group::from_mask(chart, mask),
                chart_size: chart.len(),
                features,
                label: oracle_label(&features, size, config),
                source: ExampleSource::Oracle,
            })
        })
        .collect()
}

/// Random charts, each seeded from a stream derived from `seed`.
pub fn random_charts(
    count: usize,
    points: usize,
    seed: u64,
) -> Result<Vec<(String, Chart)>, TrainError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let chart = generate_random_chart(points, rng.next_u64())?;
            Ok((format!("synthetic-{seed}-{i}"), chart))
        })
        .collect()
}

/// Oracle-labeled candidate groups from `charts` random charts.
pub fn oracle_examples(
    charts: usize,
    points: usize,
    seed: u64,
    config: &OracleConfig,
) -> Result<Vec<LabeledExample>, TrainError> {
    let mut out = Vec::new();
    for (id, chart) in random_charts(charts, points, seed)? {
        out.extend(label_chart(&id, &chart, config)?);
    }
    Ok(out)
}

/// Exactly `count` oracle-labeled examples drawn chart by chart.
pub fn oracle_dataset(
    count: usize,
    points: usize,
    seed: u64,
    config: &OracleConfig,
) -> Result<Vec<LabeledExample>, TrainError> {
    let per_chart = candidate_masks(points).len().max(1);
    let mut out = oracle_examples(count.div_ceil(per_chart), points, seed, config)?;
    out.truncate(count);
    Ok(out)
}
