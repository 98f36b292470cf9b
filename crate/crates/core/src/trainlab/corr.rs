use serde::{Deserialize, Serialize};

use super::{LabeledExample, TrainError};
use crate::features::Feature;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub features: Vec<Feature>,
    /// `None` where a column is constant and the coefficient is undefined.
    pub values: Vec<Vec<Option<f64>>>,
}

impl CorrelationMatrix {
    pub fn get(&self, a: Feature, b: Feature) -> Option<f64> {
        let i = self.features.iter().position(|f| *f == a)?;
        let j = self.features.iter().position(|f| *f == b)?;
        self.values[i][j]
    }
}

pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len().min(b.len());
    if n < 2 {
        return None;
    }
    let ma = a[..n].iter().sum::<f64>() / n as f64;
    let mb = b[..n].iter().sum::<f64>() / n as f64;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let (da, db) = (a[i] - ma, b[i] - mb);
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Pearson correlation between every pair of the eight features.
pub fn correlation_matrix(examples: &[LabeledExample]) -> Result<CorrelationMatrix, TrainError> {
    if examples.len() < 2 {
        return Err(TrainError::TooFewExamples {
            needed: 2,
            got: examples.len(),
        });
    }
    let columns: Vec<Vec<f64>> = Feature::ALL
        .iter()
        .map(|f| examples.iter().map(|e| e.features.get(*f)).collect())
        .collect();
    let values = (0..columns.len())
        .map(|i| {
            (0..columns.len())
                .map(|j| {
                    if i == j {
                        pearson(&columns[i], &columns[i]).map(|_| 1.0)
                    } else {
                        pearson(&columns[i], &columns[j])
                    }
                })
                .collect()
        })
        .collect();
    Ok(CorrelationMatrix {
        features: Feature::ALL.to_vec(),
        values,
    })
}
