use std::collections::{BTreeMap, BTreeSet};

use super::{ExampleSource, LabeledExample, TrainError};
use crate::chart::{self, Chart};
use crate::diagnose::candidate_masks;
use crate::features::{features_for_mask, FeatureVector, Group};

/// A candidate is a sound negative when nobody selected it, it fits a line
/// worse than the selected groups do on average, and its hull is disjoint
/// from the rest of the chart.
pub fn meets_negative_criteria(
    features: &FeatureVector,
    selected: bool,
    error_baseline: f64,
) -> bool {
    !selected && features.error > error_baseline && features.cvx_overlap == 0.0
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Negative examples for every chart in `charts`. `selected` maps chart ids
/// to the groups participants picked there. The error baseline is the mean
/// line-fit error of a chart's selected groups, or the mean over all charts
/// when a chart has no selections.
pub fn synthesize_negatives(
    charts: &BTreeMap<String, Chart>,
    selected: &BTreeMap<String, Vec<Group>>,
) -> Result<Vec<LabeledExample>, TrainError> {
    let mut selected_masks: BTreeMap<&str, BTreeSet<u64>> = BTreeMap::new();
    let mut chart_errors: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for (id, groups) in selected {
        let chart = charts
            .get(id)
            .ok_or_else(|| TrainError::UnknownChart(id.clone()))?;
        chart.validate()?;
        let coords = chart::layout(chart)?.coords;
        for g in groups {
            let mask = g.mask(chart).map_err(|source| TrainError::Group {
                chart_id: id.clone(),
                source,
            })?;
            if selected_masks.entry(id).or_default().insert(mask) {
                let fv = features_for_mask(&coords, mask, &chart.plot)?;
                chart_errors.entry(id).or_default().push(fv.error);
            }
        }
    }
    let all_errors: Vec<f64> = chart_errors.values().flatten().copied().collect();
    let global = mean(&all_errors).ok_or(TrainError::NoSelections)?;

    let mut out = Vec::new();
    for (id, chart) in charts {
        chart.validate()?;
        let coords = chart::layout(chart)?.coords;
        let baseline = chart_errors
            .get(id.as_str())
            .and_then(|e| mean(e))
            .unwrap_or(global);
        let picked = selected_masks.get(id.as_str());
        for mask in candidate_masks(chart.len()) {
            let fv = features_for_mask(&coords, mask, &chart.plot)?;
            let was_selected = picked.is_some_and(|s| s.contains(&mask));
            if meets_negative_criteria(&fv, was_selected, baseline) {
                out.push(LabeledExample {
                    chart_id: id.clone(),
                    group: Group::from_mask(chart, mask),
                    chart_size: chart.len(),
                    features: fv,
                    label: false,
                    source: ExampleSource::SyntheticNegative,
                });
            }
        }
    }
    Ok(out)
}
