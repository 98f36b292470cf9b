//! Predicts which subsets of a dot plot's points a viewer will perceive as a
//! group, diagnoses unintended groupings, and searches x-axis orders that
//! bring out the groups a designer wants.

pub mod chart;
pub mod defaults;
pub mod diagnose;
pub mod features;
pub mod model;
pub mod redesign;
pub mod trainlab;

pub use chart::{Chart, PixelLayout, PlotGeometry};
pub use defaults::{default_model, DEFAULT_MODEL_ID};
pub use diagnose::{diagnose, DiagnoseConfig, DiagnosisReport};
pub use features::{feature_vector, Feature, FeatureVector, Group};
pub use model::{load_model, save_model, GroupingModel};
pub use redesign::{redesign, PermutationScore, SearchConfig};
