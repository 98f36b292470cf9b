//! Dot-plot charts, their pixel layout, and randomized stimuli.
//!
//! Points sit at evenly spaced x slots in list order; values map linearly onto
//! a vertical band that leaves `pad_fraction` of the plot height free at the
//! top and bottom. Screen y grows downward.

use std::collections::{HashMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_WIDTH_PX: f64 = 400.0;
pub const DEFAULT_HEIGHT_PX: f64 = 300.0;
pub const DEFAULT_PAD_FRACTION: f64 = 0.05;
pub const DEFAULT_VALUE_MIN: f64 = 0.0;
pub const DEFAULT_VALUE_MAX: f64 = 100.0;

/// Number of points in a study stimulus.
pub const DEFAULT_CHART_SIZE: usize = 6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChartError {
    #[error("chart needs at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("point {index} has an empty label")]
    EmptyLabel { index: usize },
    #[error("duplicate label {label:?} at point {index}")]
    DuplicateLabel { index: usize, label: String },
    #[error("point {index} has a non-finite value")]
    NonFiniteValue { index: usize },
    #[error("point {index} value {value} lies outside the plot domain")]
    ValueOutOfRange { index: usize, value: f64 },
    #[error("hierarchy category {category} references unknown label {label:?}")]
    UnknownHierarchyMember { category: usize, label: String },
    #[error("label {label:?} appears in more than one hierarchy category")]
    DuplicateHierarchyMember { category: usize, label: String },
    #[error("hierarchy category {category} is empty")]
    EmptyCategory { category: usize },
    #[error("label {label:?} is not covered by the hierarchy")]
    HierarchyIncomplete { label: String },
    #[error("invalid plot geometry: {field} {reason}")]
    InvalidPlot {
        field: &'static str,
        reason: &'static str,
    },
    #[error("degenerate value scale: value_min equals value_max")]
    DegenerateScale,
    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),
}

impl ChartError {
    /// JSON path of the offending field, relative to the chart document.
    pub fn path(&self) -> String {
        match self {
            ChartError::TooFewPoints(_) => "points".into(),
            ChartError::EmptyLabel { index } | ChartError::DuplicateLabel { index, .. } => {
                format!("points[{index}].label")
            }
            ChartError::NonFiniteValue { index } | ChartError::ValueOutOfRange { index, .. } => {
                format!("points[{index}].value")
            }
            ChartError::UnknownHierarchyMember { category, .. }
            | ChartError::DuplicateHierarchyMember { category, .. }
            | ChartError::EmptyCategory { category } => format!("hierarchy[{category}].members"),
            ChartError::HierarchyIncomplete { .. } => "hierarchy".into(),
            ChartError::InvalidPlot { field, .. } => format!("plot.{field}"),
            ChartError::DegenerateScale => "plot.value_max".into(),
            ChartError::InvalidPermutation(_) => "order".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub label: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Category {
    #[serde(default)]
    pub name: String,
    pub members: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlotGeometry {
    pub width_px: f64,
    pub height_px: f64,
    pub pad_fraction: f64,
    pub value_min: f64,
    pub value_max: f64,
}

impl Default for PlotGeometry {
    fn default() -> Self {
        Self {
            width_px: DEFAULT_WIDTH_PX,
            height_px: DEFAULT_HEIGHT_PX,
            pad_fraction: DEFAULT_PAD_FRACTION,
            value_min: DEFAULT_VALUE_MIN,
            value_max: DEFAULT_VALUE_MAX,
        }
    }
}

impl PlotGeometry {
    pub fn diagonal(&self) -> f64 {
        self.width_px.hypot(self.height_px)
    }

    pub fn validate(&self) -> Result<(), ChartError> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.width_px) {
            return Err(ChartError::InvalidPlot {
                field: "width_px",
                reason: "must be positive",
            });
        }
        if !positive(self.height_px) {
            return Err(ChartError::InvalidPlot {
                field: "height_px",
                reason: "must be positive",
            });
        }
        if !(0.0..0.5).contains(&self.pad_fraction) {
            return Err(ChartError::InvalidPlot {
                field: "pad_fraction",
                reason: "must lie in [0, 0.5)",
            });
        }
        if !self.value_min.is_finite() || !self.value_max.is_finite() {
            return Err(ChartError::InvalidPlot {
                field: "value_min",
                reason: "must be finite",
            });
        }
        if self.value_min == self.value_max {
            return Err(ChartError::DegenerateScale);
        }
        if self.value_min > self.value_max {
            return Err(ChartError::InvalidPlot {
                field: "value_max",
                reason: "must exceed value_min",
            });
        }
        Ok(())
    }

    /// Maps a data value to a screen y coordinate.
    pub fn value_to_y(&self, value: f64) -> f64 {
        let pad = self.height_px * self.pad_fraction;
        let t = (value - self.value_min) / (self.value_max - self.value_min);
        // value_max lands on the top band edge, value_min on the bottom one.
        (self.height_px - pad) - t * (self.height_px - 2.0 * pad)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chart {
    pub points: Vec<Point>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hierarchy: Option<Vec<Category>>,
    #[serde(default)]
    pub plot: PlotGeometry,
}

/// Pixel coordinates of a chart's points, in point order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PixelLayout {
    pub coords: Vec<(f64, f64)>,
}

impl Chart {
    pub fn new(
        points: Vec<Point>,
        hierarchy: Option<Vec<Category>>,
        plot: PlotGeometry,
    ) -> Result<Self, ChartError> {
        let chart = Self {
            points,
            hierarchy,
            plot,
        };
        chart.validate()?;
        Ok(chart)
    }

    /// Builds a chart on the default plot from `(label, value)` pairs.
    pub fn from_values<S: Into<String>>(
        values: impl IntoIterator<Item = (S, f64)>,
    ) -> Result<Self, ChartError> {
        let points = values
            .into_iter()
            .map(|(label, value)| Point {
                label: label.into(),
                value,
            })
            .collect();
        Self::new(points, None, PlotGeometry::default())
    }

    /// Points labeled A, B, C, ... in order.
    pub fn from_slot_values(values: &[f64]) -> Result<Self, ChartError> {
        Self::from_values(values.iter().enumerate().map(|(i, v)| (slot_label(i), *v)))
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn labels(&self) -> Vec<String> {
        self.points.iter().map(|p| p.label.clone()).collect()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.points.iter().position(|p| p.label == label)
    }

    pub fn validate(&self) -> Result<(), ChartError> {
        if self.points.len() < 2 {
            return Err(ChartError::TooFewPoints(self.points.len()));
        }
        self.plot.validate()?;
        let mut seen = HashSet::with_capacity(self.points.len());
        for (index, point) in self.points.iter().enumerate() {
            if point.label.is_empty() {
                return Err(ChartError::EmptyLabel { index });
            }
            if !seen.insert(point.label.as_str()) {
                return Err(ChartError::DuplicateLabel {
                    index,
                    label: point.label.clone(),
                });
            }
            if !point.value.is_finite() {
                return Err(ChartError::NonFiniteValue { index });
            }
            if point.value < self.plot.value_min || point.value > self.plot.value_max {
                return Err(ChartError::ValueOutOfRange {
                    index,
                    value: point.value,
                });
            }
        }
        if let Some(hierarchy) = &self.hierarchy {
            let mut assigned = HashSet::with_capacity(self.points.len());
            for (category, cat) in hierarchy.iter().enumerate() {
                if cat.members.is_empty() {
                    return Err(ChartError::EmptyCategory { category });
                }
                for label in &cat.members {
                    if !seen.contains(label.as_str()) {
                        return Err(ChartError::UnknownHierarchyMember {
                            category,
                            label: label.clone(),
                        });
                    }
                    if !assigned.insert(label.as_str()) {
                        return Err(ChartError::DuplicateHierarchyMember {
                            category,
                            label: label.clone(),
                        });
                    }
                }
            }
            if let Some(missing) = self
                .points
                .iter()
                .find(|p| !assigned.contains(p.label.as_str()))
            {
                return Err(ChartError::HierarchyIncomplete {
                    label: missing.label.clone(),
                });
            }
        }
        Ok(())
    }

    /// Category index of every point, in point order.
    pub fn category_of_points(&self) -> Option<Vec<usize>> {
        let hierarchy = self.hierarchy.as_ref()?;
        let lookup: HashMap<&str, usize> = hierarchy
            .iter()
            .enumerate()
            .flat_map(|(c, cat)| cat.members.iter().map(move |m| (m.as_str(), c)))
            .collect();
        self.points
            .iter()
            .map(|p| lookup.get(p.label.as_str()).copied())
            .collect()
    }

    /// The same chart with its points in reverse x order.
    pub fn mirrored(&self) -> Chart {
        let mut out = self.clone();
        out.points.reverse();
        out
    }
}

pub fn layout(chart: &Chart) -> Result<PixelLayout, ChartError> {
    chart.validate()?;
    Ok(layout_unchecked(chart))
}

/// Layout without re-validating; callers must hold a validated chart.
pub(crate) fn layout_unchecked(chart: &Chart) -> PixelLayout {
    let plot = &chart.plot;
    let n = chart.points.len() as f64;
    let coords = chart
        .points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            (
                plot.width_px * (i as f64 + 0.5) / n,
                plot.value_to_y(p.value),
            )
        })
        .collect();
    PixelLayout { coords }
}

/// Spreadsheet-style label for slot `i`: A..Z, AA, AB, ...
pub fn slot_label(mut i: usize) -> String {
    let mut out = Vec::new();
    loop {
        out.push(b'A' + (i % 26) as u8);
        if i < 26 {
            break;
        }
        i = i / 26 - 1;
    }
    out.reverse();
    String::from_utf8(out).expect("ascii")
}

pub fn generate_random_chart(n: usize, seed: u64) -> Result<Chart, ChartError> {
    if n < 2 {
        return Err(ChartError::TooFewPoints(n));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = (0..n)
        .map(|i| Point {
            label: slot_label(i),
            value: rng.gen_range(DEFAULT_VALUE_MIN..=DEFAULT_VALUE_MAX),
        })
        .collect();
    Ok(Chart {
        points,
        hierarchy: None,
        plot: PlotGeometry::default(),
    })
}

pub fn apply_permutation<S: AsRef<str>>(chart: &Chart, order: &[S]) -> Result<Chart, ChartError> {
    if order.len() != chart.points.len() {
        return Err(ChartError::InvalidPermutation(format!(
            "expected {} labels, got {}",
            chart.points.len(),
            order.len()
        )));
    }
    let mut used = vec![false; chart.points.len()];
    let mut points = Vec::with_capacity(order.len());
    for label in order {
        let label = label.as_ref();
        let idx = chart
            .index_of(label)
            .ok_or_else(|| ChartError::InvalidPermutation(format!("unknown label {label:?}")))?;
        if std::mem::replace(&mut used[idx], true) {
            return Err(ChartError::InvalidPermutation(format!(
                "label {label:?} repeated"
            )));
        }
        points.push(chart.points[idx].clone());
    }
    Ok(Chart {
        points,
        hierarchy: chart.hierarchy.clone(),
        plot: chart.plot,
    })
}

/// Reorders points by slot indices into the current order.
pub(crate) fn permute_by_index(chart: &Chart, order: &[usize]) -> Chart {
    Chart {
        points: order.iter().map(|&i| chart.points[i].clone()).collect(),
        hierarchy: chart.hierarchy.clone(),
        plot: chart.plot,
    }
}
