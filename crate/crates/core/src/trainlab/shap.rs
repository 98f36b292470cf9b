use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::features::{Feature, FeatureVector};
use crate::model::GroupingModel;

/// Coalitions are enumerated exhaustively, so the feature count is bounded.
pub const MAX_SHAP_FEATURES: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapExplanation {
    pub base_value: f64,
    pub prediction: f64,
    pub contributions: BTreeMap<Feature, f64>,
}

/// Exact interventional Shapley values of `f` at `instance`. The value of a
/// coalition is the mean of `f` over `background` rows with the coalition's
/// columns replaced by the instance's. Returns (values, base value).
pub fn shapley_values<F: Fn(&[f64]) -> f64>(
    f: F,
    instance: &[f64],
    background: &[Vec<f64>],
) -> Result<(Vec<f64>, f64), TrainError> {
    let m = instance.len();
    if m > MAX_SHAP_FEATURES {
        return Err(TrainError::TooManyFeatures {
            max: MAX_SHAP_FEATURES,
            got: m,
        });
    }
    if background.is_empty() {
        return Err(TrainError::EmptyBackground);
    }
    let mut value = vec![0.0; 1 << m];
    let mut row = vec![0.0; m];
    for (coalition, v) in value.iter_mut().enumerate() {
        let mut total = 0.0;
        for b in background {
            for j in 0..m {
                row[j] = if coalition >> j & 1 == 1 {
                    instance[j]
                } else {
                    b[j]
                };
            }
            total += f(&row);
        }
        *v = total / background.len() as f64;
    }
    // weight[s] = s! (m - s - 1)! / m!
    let mut weight = vec![0.0; m.max(1)];
    for (s, w) in weight.iter_mut().enumerate().take(m) {
        let mut x = 1.0 / m as f64;
        // 1 / (m * C(m-1, s))
        for t in 0..s {
            x *= (t + 1) as f64 / (m - 1 - t) as f64;
        }
        *w = x;
    }
    let phi = (0..m)
        .map(|i| {
            (0..1usize << m)
                .filter(|c| c >> i & 1 == 0)
                .map(|c| weight[c.count_ones() as usize] * (value[c | 1 << i] - value[c]))
                .sum()
        })
        .collect();
    Ok((phi, value[0]))
}

/// Attribution of a model's probability over all eight features.
pub fn shap_exact(
    model: &GroupingModel,
    instance: &FeatureVector,
    group_size: usize,
    chart_size: usize,
    background: &[FeatureVector],
) -> Result<ShapExplanation, TrainError> {
    let prediction = model.predict(instance, group_size, chart_size)?;
    let bg: Vec<Vec<f64>> = background.iter().map(|b| b.to_array().to_vec()).collect();
    let f = |row: &[f64]| {
        let mut arr = [0.0; 8];
        arr.copy_from_slice(row);
        model
            .predict(&FeatureVector::from_array(arr), group_size, chart_size)
            .unwrap_or(f64::NAN)
    };
    let (phi, base_value) = shapley_values(f, &instance.to_array(), &bg)?;
    Ok(ShapExplanation {
        base_value,
        prediction,
        contributions: Feature::ALL.iter().copied().zip(phi).collect(),
    })
}

/// Mean absolute attribution of each feature over `instances`, each given as
/// (features, group size, chart size).
pub fn mean_abs_shap(
    model: &GroupingModel,
    instances: &[(FeatureVector, usize, usize)],
    background: &[FeatureVector],
) -> Result<BTreeMap<Feature, f64>, TrainError> {
    if instances.is_empty() {
        return Err(TrainError::Empty);
    }
    let mut out: BTreeMap<Feature, f64> = Feature::ALL.iter().map(|f| (*f, 0.0)).collect();
    for (fv, g, n) in instances {
        for (f, v) in shap_exact(model, fv, *g, *n, background)?.contributions {
            *out.get_mut(&f).unwrap() += v.abs() / instances.len() as f64;
        }
    }
    Ok(out)
}
