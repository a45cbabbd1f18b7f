//! Metric learning and hierarchical segmentation for tabular object data.

pub mod clustering;
pub mod constraints;
pub mod dataset;
pub mod dendrogram;
pub mod error;
pub mod evaluation;
pub mod learners;
pub mod metrics;
pub mod pipeline;
pub mod prototypes;
pub mod stats;

pub use error::{Error, Result};
