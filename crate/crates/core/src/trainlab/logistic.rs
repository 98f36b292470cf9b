use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{project, LabeledExample, TrainError};
use crate::features::Feature;
use crate::model::{sigmoid, LogisticModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogisticParams {
    /// Candidate features, before VIF pruning.
    pub features: Vec<Feature>,
    pub vif_threshold: f64,
    pub max_iterations: usize,
    /// Convergence when the largest gradient component drops below this.
    pub tolerance: f64,
    /// Largest allowed standardized coefficient; reaching it signals separation.
    pub coefficient_cap: f64,
}

impl Default for LogisticParams {
    fn default() -> Self {
        Self {
            features: Feature::ALL.to_vec(),
            vif_threshold: 5.0,
            max_iterations: 10_000,
            tolerance: 1e-8,
            coefficient_cap: 50.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VifOutcome {
    /// Indices of retained columns, ascending.
    pub kept: Vec<usize>,
    /// Removed columns with the VIF they had when removed, in removal order.
    pub dropped: Vec<(usize, f64)>,
    /// VIF of each retained column after pruning.
    pub final_vif: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticFit {
    pub model: LogisticModel,
    pub kept: Vec<Feature>,
    pub dropped: Vec<(Feature, f64)>,
    pub vif: BTreeMap<Feature, f64>,
    pub converged: bool,
    pub separated: bool,
    pub iterations: usize,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Variance inflation factor of every column: 1 / (1 - R^2) from regressing
/// it on the others with an intercept. Constant or exactly collinear columns
/// get infinity.
pub fn variance_inflation_factors(columns: &[Vec<f64>]) -> Vec<f64> {
    let p = columns.len();
    let n = columns.first().map_or(0, Vec::len);
    (0..p)
        .map(|j| {
            let y = &columns[j];
            let my = mean(y);
            let ss_tot: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
            if ss_tot <= f64::EPSILON * n as f64 * my.abs().max(1.0).powi(2) {
                return f64::INFINITY;
            }
            if p == 1 {
                return 1.0;
            }
            let others: Vec<usize> = (0..p).filter(|&k| k != j).collect();
            let x = DMatrix::from_fn(n, others.len() + 1, |r, c| {
                if c == 0 {
                    1.0
                } else {
                    columns[others[c - 1]][r]
                }
            });
            let yv = DVector::from_column_slice(y);
            let svd = x.clone().svd(true, true);
            let Ok(beta) = svd.solve(&yv, 1e-12) else {
                return f64::INFINITY;
            };
            let ss_res: f64 = (yv - x * beta).iter().map(|r| r * r).sum();
            let r2 = 1.0 - ss_res / ss_tot;
            if r2 >= 1.0 - 1e-12 {
                f64::INFINITY
            } else {
                1.0 / (1.0 - r2)
            }
        })
        .collect()
}

/// Repeatedly drops the column with the largest VIF while it exceeds
/// `threshold`. Among equal VIFs the later column goes first.
pub fn vif_prune(columns: &[Vec<f64>], threshold: f64) -> VifOutcome {
    let mut kept: Vec<usize> = (0..columns.len()).collect();
    let mut dropped = Vec::new();
    loop {
        let current: Vec<Vec<f64>> = kept.iter().map(|&i| columns[i].clone()).collect();
        let vif = variance_inflation_factors(&current);
        let worst = (0..kept.len()).max_by(|&a, &b| vif[a].total_cmp(&vif[b]));
        match worst {
            Some(w) if vif[w] > threshold => {
                dropped.push((kept[w], vif[w]));
                kept.remove(w);
            }
            _ => {
                return VifOutcome {
                    kept,
                    dropped,
                    final_vif: vif,
                }
            }
        }
    }
}

/// VIF pruning followed by maximum-likelihood logistic regression (Newton's
/// method on standardized features).
pub fn train_logistic(
    examples: &[LabeledExample],
    params: &LogisticParams,
) -> Result<LogisticFit, TrainError> {
    if examples.is_empty() {
        return Err(TrainError::Empty);
    }
    let mut features = params.features.clone();
    features.sort();
    features.dedup();
    if features.is_empty() {
        return Err(TrainError::NoFeatures);
    }
    let rows: Vec<Vec<f64>> = examples
        .iter()
        .map(|e| project(&e.features, &features))
        .collect();
    let columns: Vec<Vec<f64>> = (0..features.len())
        .map(|j| rows.iter().map(|r| r[j]).collect())
        .collect();
    let vif = vif_prune(&columns, params.vif_threshold);
    let kept: Vec<Feature> = vif.kept.iter().map(|&i| features[i]).collect();
    let dropped = vif.dropped.iter().map(|&(i, v)| (features[i], v)).collect();

    let n = examples.len();
    let stats: Vec<(f64, f64)> = vif
        .kept
        .iter()
        .map(|&i| {
            let m = mean(&columns[i]);
            let sd = (columns[i].iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64).sqrt();
            (m, if sd > 0.0 { sd } else { 1.0 })
        })
        .collect();
    let x = DMatrix::from_fn(n, kept.len() + 1, |r, c| {
        if c == 0 {
            1.0
        } else {
            let (m, sd) = stats[c - 1];
            (columns[vif.kept[c - 1]][r] - m) / sd
        }
    });
    let y = DVector::from_iterator(n, examples.iter().map(|e| if e.label { 1.0 } else { 0.0 }));
    let newton = newton_fit(&x, &y, params);

    let mut weights = BTreeMap::new();
    let mut intercept = newton.beta[0];
    for (j, f) in kept.iter().enumerate() {
        let (m, sd) = stats[j];
        let w = newton.beta[j + 1] / sd;
        intercept -= w * m;
        weights.insert(*f, w);
    }
    Ok(LogisticFit {
        model: LogisticModel { weights, intercept },
        vif: kept
            .iter()
            .copied()
            .zip(vif.final_vif.iter().copied())
            .collect(),
        kept,
        dropped,
        converged: newton.converged,
        separated: newton.separated,
        iterations: newton.iterations,
    })
}

struct Newton {
    beta: DVector<f64>,
    converged: bool,
    separated: bool,
    iterations: usize,
}

fn log_likelihood(x: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>) -> f64 {
    let z = x * beta;
    z.iter()
        .zip(y.iter())
        .map(|(&z, &y)| {
            // log(1 + e^z) computed stably.
            let softplus = if z > 0.0 {
                z + (-z).exp().ln_1p()
            } else {
                z.exp().ln_1p()
            };
            y * z - softplus
        })
        .sum()
}

fn newton_fit(x: &DMatrix<f64>, y: &DVector<f64>, params: &LogisticParams) -> Newton {
    let (n, p) = x.shape();
    let mut beta = DVector::zeros(p);
    let mut ll = log_likelihood(x, y, &beta);
    for iter in 0..params.max_iterations {
        let mu = (x * &beta).map(sigmoid);
        let grad = x.transpose() * (y - &mu) / n as f64;
        if grad.amax() < params.tolerance {
            return Newton {
                beta,
                converged: true,
                separated: false,
                iterations: iter,
            };
        }
        let w = mu.map(|m| m * (1.0 - m));
        let mut hess = DMatrix::zeros(p, p);
        for r in 0..n {
            let row = x.row(r);
            hess += row.transpose() * row * (w[r] / n as f64);
        }
        let step = hess
            .clone()
            .cholesky()
            .map(|c| c.solve(&grad))
            .unwrap_or_else(|| {
                let ridge = &hess + DMatrix::identity(p, p) * 1e-9;
                ridge.lu().solve(&grad).unwrap_or_else(|| grad.clone())
            });
        let mut t = 1.0;
        let mut next = &beta + &step * t;
        let mut next_ll = log_likelihood(x, y, &next);
        while next_ll < ll && t > 1e-10 {
            t /= 2.0;
            next = &beta + &step * t;
            next_ll = log_likelihood(x, y, &next);
        }
        if next
            .iter()
            .skip(1)
            .any(|b| b.abs() > params.coefficient_cap)
        {
            let capped = next.map(|b| b.clamp(-params.coefficient_cap, params.coefficient_cap));
            return Newton {
                beta: capped,
                converged: false,
                separated: true,
                iterations: iter + 1,
            };
        }
        if next_ll < ll {
            return Newton {
                beta,
                converged: false,
                separated: false,
                iterations: iter + 1,
            };
        }
        beta = next;
        ll = next_ll;
    }
    Newton {
        beta,
        converged: false,
        separated: false,
        iterations: params.max_iterations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{FeatureVector, Group};
    use crate::trainlab::ExampleSource;

    #[test]
    fn vif_of_correlated_pair() {
        // Orthogonal, zero-mean, equal-norm bases give sample correlation 0.8.
        let z1 = [1.0, -1.0, 1.0, -1.0];
        let z2 = [1.0, 1.0, -1.0, -1.0];
        let a: Vec<f64> = z1.to_vec();
        let b: Vec<f64> = z1.iter().zip(z2).map(|(u, v)| 0.8 * u + 0.6 * v).collect();
        let vif = variance_inflation_factors(&[a.clone(), b.clone()]);
        for v in &vif {
            assert!((v - 1.0 / (1.0 - 0.64)).abs() < 1e-9, "{v}");
        }
        let out = vif_prune(&[a, b], 5.0);
        assert_eq!(out.kept, vec![0, 1]);
    }

    #[test]
    fn duplicate_column_dropped_once() {
        let a = vec![1.0, 4.0, 2.0, 8.0, 5.0, 7.0];
        let c = vec![3.0, 1.0, 4.0, 1.0, 5.0, 9.0];
        let out = vif_prune(&[a.clone(), c, a], 5.0);
        assert_eq!(out.kept, vec![0, 1]);
        assert_eq!(out.dropped.len(), 1);
        assert_eq!(out.dropped[0].0, 2);
        assert!(out.dropped[0].1.is_infinite());
    }

    #[test]
    fn constant_column_dropped() {
        let out = vif_prune(&[vec![1.0, 2.0, 4.0], vec![5.0, 5.0, 5.0]], 5.0);
        assert_eq!(out.kept, vec![0]);
    }

    fn ex(error: f64, label: bool) -> LabeledExample {
        LabeledExample {
            chart_id: "c".into(),
            group: Group::new(["A", "B", "C"]),
            chart_size: 6,
            features: FeatureVector {
                error,
                ..Default::default()
            },
            label,
            source: ExampleSource::Oracle,
        }
    }

    #[test]
    fn fits_overlapping_classes() {
        let data: Vec<_> = (0..40)
            .map(|i| ex(i as f64, (i % 7 < 5) ^ (i >= 20)))
            .collect();
        let params = LogisticParams {
            features: vec![Feature::Error],
            ..Default::default()
        };
        let fit = train_logistic(&data, &params).unwrap();
        assert!(fit.converged && !fit.separated);
        assert!(fit.model.weights[&Feature::Error] < 0.0);
        // At the optimum the predicted and observed positive counts agree.
        let total: f64 = data.iter().map(|e| fit.model.predict(&e.features)).sum();
        let pos = data.iter().filter(|e| e.label).count() as f64;
        assert!((total - pos).abs() < 1e-6);
    }

    #[test]
    fn flags_separation() {
        let data: Vec<_> = (0..20).map(|i| ex(i as f64, i < 10)).collect();
        let params = LogisticParams {
            features: vec![Feature::Error],
            ..Default::default()
        };
        let fit = train_logistic(&data, &params).unwrap();
        assert!(fit.separated);
        assert!(!fit.converged);
        assert!(fit.model.weights[&Feature::Error].is_finite());
    }
}
