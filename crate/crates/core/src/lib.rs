//! Slanted Stixels: a compact column-wise scene representation.
//!
//! Each image column is divided into vertical segments (Stixels) labelled
//! ground, object or sky, each carrying a semantic class and a planar
//! disparity model `d(v) = b * v + a`. The segmentation minimizes a
//! probabilistic energy over disparity and semantic inputs by dynamic
//! programming, optionally restricted to a precomputed set of candidate
//! boundaries.
//!
//! Row indices are 1-based and count upwards from the bottom of the column.

pub mod config;
pub mod error;
pub mod image;
pub mod inference;
pub mod io;
pub mod likelihood;
pub mod metrics;
mod numeric;
pub mod overseg;
pub mod plane_fit;
pub mod priors;
pub mod scene;
pub mod types;

pub use config::{DownsampleMode, OrderingPrior, PiecewisePrior, PlanePrior, StixelModelConfig};
pub use error::{Error, Result};
pub use image::{ConfidenceImage, DisparityImage, Grid, LabelImage, SemanticImage, StixelGrid};
pub use inference::{
    brute_force_column, segment_column, segment_column_full, segment_image, ColumnSolution, CutPlan, Frame,
    FrameSolution, Segmenter,
};
pub use metrics::EvaluationReport;
pub use priors::CutSet;
pub use scene::{generate, Scene, SceneSpec};
pub use types::*;
