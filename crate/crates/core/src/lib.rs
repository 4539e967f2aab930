//! Counterfactual estimation of firm-level shock effects on export survival.
//!
//! The pipeline featurizes customs export records into firm-month panels,
//! trains a shock-unaware machine on a pre-shock cohort and a shock-aware
//! machine (out of fold) on the treated cohort, and reads per-firm effects
//! off the difference of their predicted survival probabilities. The
//! remaining modules select the prediction model, validate effects in placebo
//! months and describe their heterogeneity.

pub mod counterfactual;
pub mod dataset;
pub mod ensemble;
pub mod error;
pub mod folds;
pub mod heterogeneity;
pub mod linalg;
pub mod metrics;
pub mod models;
pub mod panel;
pub mod synthgen;
pub mod util;

mod par;

pub use dataset::{Column, ColumnKind, Design, FeatureGroup};
pub use error::{Error, Result};
