//! Geometric features of a candidate group `g` against the rest `r` of a
//! chart, all measured in pixel space.

mod fit;
pub mod hull;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chart::{self, Chart, ChartError, PlotGeometry};

pub use fit::linear_fit;
pub use hull::convex_hull_overlap;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FeatureError {
    #[error("need at least 2 points for a line fit, got {0}")]
    TooFewPoints(usize),
    #[error("all x coordinates coincide; slope undefined")]
    VerticalFit,
    #[error("empty point set")]
    EmptySet,
    #[error("group has zero diameter")]
    ZeroDiameter,
    #[error(transparent)]
    Group(#[from] GroupError),
    #[error(transparent)]
    Chart(#[from] ChartError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GroupError {
    #[error("group of {size} points is outside 2..={max} for a chart of {chart_size}")]
    SizeOutOfRange {
        size: usize,
        chart_size: usize,
        max: usize,
    },
    #[error("group member {0:?} is not in the chart")]
    UnknownLabel(String),
    #[error("chart too large for group masks ({0} points)")]
    ChartTooLarge(usize),
}

/// The eight features, in canonical (CSV column) order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feature {
    Slope,
    Error,
    XSep,
    YSep,
    CvxOverlap,
    CentroidDistance,
    CentroidDiameter,
    CentroidRatio,
}

impl Feature {
    pub const ALL: [Feature; 8] = [
        Feature::Slope,
        Feature::Error,
        Feature::XSep,
        Feature::YSep,
        Feature::CvxOverlap,
        Feature::CentroidDistance,
        Feature::CentroidDiameter,
        Feature::CentroidRatio,
    ];

    /// Features a cluster-stage model may read.
    pub const CLUSTER: [Feature; 6] = [
        Feature::XSep,
        Feature::YSep,
        Feature::CvxOverlap,
        Feature::CentroidDistance,
        Feature::CentroidDiameter,
        Feature::CentroidRatio,
    ];

    /// Features a co-linearity-stage model may read.
    pub const COLINEAR: [Feature; 2] = [Feature::Slope, Feature::Error];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Feature::Slope => "slope",
            Feature::Error => "error",
            Feature::XSep => "x_sep",
            Feature::YSep => "y_sep",
            Feature::CvxOverlap => "cvx_overlap",
            Feature::CentroidDistance => "centroid_distance",
            Feature::CentroidDiameter => "centroid_diameter",
            Feature::CentroidRatio => "centroid_ratio",
        }
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown feature {0:?}")]
pub struct UnknownFeature(pub String);

impl FromStr for Feature {
    type Err = UnknownFeature;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Feature::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| UnknownFeature(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FeatureVector {
    pub slope: f64,
    pub error: f64,
    pub x_sep: f64,
    pub y_sep: f64,
    pub cvx_overlap: f64,
    pub centroid_distance: f64,
    pub centroid_diameter: f64,
    pub centroid_ratio: f64,
}

impl FeatureVector {
    pub const CSV_HEADER: &'static str =
        "slope,error,x_sep,y_sep,cvx_overlap,centroid_distance,centroid_diameter,centroid_ratio";

    pub fn get(&self, feature: Feature) -> f64 {
        self.to_array()[feature.index()]
    }

    pub fn set(&mut self, feature: Feature, value: f64) {
        let mut values = self.to_array();
        values[feature.index()] = value;
        *self = Self::from_array(values);
    }

    pub fn to_array(&self) -> [f64; 8] {
        [
            self.slope,
            self.error,
            self.x_sep,
            self.y_sep,
            self.cvx_overlap,
            self.centroid_distance,
            self.centroid_diameter,
            self.centroid_ratio,
        ]
    }

    pub fn from_array(v: [f64; 8]) -> Self {
        Self {
            slope: v[0],
            error: v[1],
            x_sep: v[2],
            y_sep: v[3],
            cvx_overlap: v[4],
            centroid_distance: v[5],
            centroid_diameter: v[6],
            centroid_ratio: v[7],
        }
    }

    pub fn to_csv_row(&self) -> String {
        self.to_array()
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(",")
    }
}

/// A candidate group: a set of point labels.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Group {
    pub members: BTreeSet<String>,
}

impl Group {
    pub fn new<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> Self {
        Self {
            members: labels.into_iter().map(Into::into).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, label: &str) -> bool {
        self.members.contains(label)
    }

    pub fn is_strict_subset(&self, other: &Group) -> bool {
        self.len() < other.len() && self.members.is_subset(&other.members)
    }

    /// Bit mask over the chart's point indices.
    pub fn mask(&self, chart: &Chart) -> Result<u64, GroupError> {
        self.validate(chart)?;
        let mut mask = 0u64;
        for label in &self.members {
            let idx = chart
                .index_of(label)
                .ok_or_else(|| GroupError::UnknownLabel(label.clone()))?;
            mask |= 1 << idx;
        }
        Ok(mask)
    }

    pub fn validate(&self, chart: &Chart) -> Result<(), GroupError> {
        let n = chart.len();
        if n > 63 {
            return Err(GroupError::ChartTooLarge(n));
        }
        if self.len() < 2 || self.len() + 1 > n {
            return Err(GroupError::SizeOutOfRange {
                size: self.len(),
                chart_size: n,
                max: n.saturating_sub(1),
            });
        }
        if let Some(missing) = self.members.iter().find(|l| chart.index_of(l).is_none()) {
            return Err(GroupError::UnknownLabel(missing.clone()));
        }
        Ok(())
    }

    pub fn from_mask(chart: &Chart, mask: u64) -> Self {
        Self::new(
            chart
                .points
                .iter()
                .enumerate()
                .filter(|(i, _)| mask >> i & 1 == 1)
                .map(|(_, p)| p.label.clone()),
        )
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for label in &self.members {
            f.write_str(label)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterFeatures {
    pub centroid_distance: f64,
    pub centroid_diameter: f64,
    pub centroid_ratio: f64,
    pub x_sep: f64,
    pub y_sep: f64,
}

fn centroid(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    let (sx, sy) = points
        .iter()
        .fold((0.0, 0.0), |acc, p| (acc.0 + p.0, acc.1 + p.1));
    (sx / n, sy / n)
}

pub fn cluster_features(
    g: &[(f64, f64)],
    r: &[(f64, f64)],
    plot: &PlotGeometry,
) -> Result<ClusterFeatures, FeatureError> {
    if g.is_empty() || r.is_empty() {
        return Err(FeatureError::EmptySet);
    }
    let cg = centroid(g);
    let cr = centroid(r);
    let centroid_distance = (cg.0 - cr.0).hypot(cg.1 - cr.1) / plot.diagonal();
    let centroid_diameter = g
        .iter()
        .map(|p| (p.0 - cg.0).hypot(p.1 - cg.1))
        .sum::<f64>()
        / g.len() as f64;
    if centroid_diameter == 0.0 {
        return Err(FeatureError::ZeroDiameter);
    }
    let (mut min_dist, mut x_sep, mut y_sep) = (f64::INFINITY, f64::INFINITY, f64::INFINITY);
    for p in g {
        for q in r {
            min_dist = min_dist.min((p.0 - q.0).hypot(p.1 - q.1));
            x_sep = x_sep.min((p.0 - q.0).abs());
            y_sep = y_sep.min((p.1 - q.1).abs());
        }
    }
    Ok(ClusterFeatures {
        centroid_distance,
        centroid_diameter,
        centroid_ratio: min_dist / centroid_diameter,
        x_sep,
        y_sep,
    })
}

/// Features from pixel point sets directly.
pub fn features_from_pixels(
    g: &[(f64, f64)],
    r: &[(f64, f64)],
    plot: &PlotGeometry,
) -> Result<FeatureVector, FeatureError> {
    let (slope, error) = linear_fit(g)?;
    let cluster = cluster_features(g, r, plot)?;
    Ok(FeatureVector {
        slope,
        error,
        x_sep: cluster.x_sep,
        y_sep: cluster.y_sep,
        cvx_overlap: convex_hull_overlap(g, r),
        centroid_distance: cluster.centroid_distance,
        centroid_diameter: cluster.centroid_diameter,
        centroid_ratio: cluster.centroid_ratio,
    })
}

/// Features of the points selected by `mask` against the remaining points.
pub fn features_for_mask(
    coords: &[(f64, f64)],
    mask: u64,
    plot: &PlotGeometry,
) -> Result<FeatureVector, FeatureError> {
    let mut g = Vec::with_capacity(coords.len());
    let mut r = Vec::with_capacity(coords.len());
    for (i, &c) in coords.iter().enumerate() {
        if mask >> i & 1 == 1 {
            g.push(c);
        } else {
            r.push(c);
        }
    }
    features_from_pixels(&g, &r, plot)
}

pub fn feature_vector(chart: &Chart, group: &Group) -> Result<FeatureVector, FeatureError> {
    let layout = chart::layout(chart)?;
    let mask = group.mask(chart)?;
    features_for_mask(&layout.coords, mask, &chart.plot)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::generate_random_chart;

    #[test]
    fn cluster_features_hand_example() {
        let plot = PlotGeometry::default();
        let f = cluster_features(
            &[(0.0, 0.0), (2.0, 0.0)],
            &[(10.0, 0.0), (12.0, 0.0)],
            &plot,
        )
        .unwrap();
        assert!((f.centroid_distance - 0.02).abs() < 1e-15);
        assert_eq!(f.centroid_diameter, 1.0);
        assert_eq!(f.centroid_ratio, 8.0);
        assert_eq!(f.x_sep, 8.0);
        assert_eq!(f.y_sep, 0.0);
    }

    #[test]
    fn coincident_centroids_have_zero_distance() {
        let plot = PlotGeometry::default();
        let f =
            cluster_features(&[(0.0, 0.0), (2.0, 2.0)], &[(0.0, 2.0), (2.0, 0.0)], &plot).unwrap();
        assert_eq!(f.centroid_distance, 0.0);
        let f = cluster_features(&[(5.0, 5.0), (5.0, 7.0)], &[(40.0, 40.0)], &plot).unwrap();
        assert_eq!(f.centroid_diameter, 1.0);
    }

    #[test]
    fn pairs_have_zero_error() {
        let chart = generate_random_chart(6, 3).unwrap();
        for pair in [["A", "B"], ["A", "F"], ["C", "E"]] {
            let fv = feature_vector(&chart, &Group::new(pair)).unwrap();
            assert_eq!(fv.error, 0.0);
        }
    }

    #[test]
    fn complement_of_one_point() {
        let chart = generate_random_chart(6, 11).unwrap();
        let group = Group::new(["A", "B", "C", "D", "E"]);
        let fv = feature_vector(&chart, &group).unwrap();
        let coords = chart::layout(&chart).unwrap().coords;
        let leftover = coords[5];
        let nearest = coords[..5]
            .iter()
            .map(|p| (p.0 - leftover.0).hypot(p.1 - leftover.1))
            .fold(f64::INFINITY, f64::min);
        assert!((fv.centroid_ratio * fv.centroid_diameter - nearest).abs() < 1e-9);
    }

    #[test]
    fn group_validation() {
        let chart = generate_random_chart(4, 0).unwrap();
        assert!(matches!(
            Group::new(["A"]).validate(&chart),
            Err(GroupError::SizeOutOfRange { .. })
        ));
        assert!(matches!(
            Group::new(["A", "B", "C", "D"]).validate(&chart),
            Err(GroupError::SizeOutOfRange { .. })
        ));
        assert_eq!(
            Group::new(["A", "Z"]).validate(&chart),
            Err(GroupError::UnknownLabel("Z".into()))
        );
        assert_eq!(Group::new(["B", "D"]).mask(&chart).unwrap(), 0b1010);
        assert_eq!(Group::from_mask(&chart, 0b1010), Group::new(["D", "B"]));
    }

    #[test]
    fn feature_names_round_trip() {
        for f in Feature::ALL {
            assert_eq!(f.name().parse::<Feature>().unwrap(), f);
            assert_eq!(
                serde_json::to_string(&f).unwrap(),
                format!("\"{}\"", f.name())
            );
        }
        assert!("hue".parse::<Feature>().is_err());
        assert_eq!(
            FeatureVector::CSV_HEADER.split(',').collect::<Vec<_>>(),
            Feature::ALL.iter().map(|f| f.name()).collect::<Vec<_>>()
        );
    }
}
