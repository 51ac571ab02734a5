//! Numerical core of the prior-guided depth estimator: sparse prior
//! extraction and densification, bin math, objectives, metrics and data.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases at the bottom fix the common instantiations.

pub mod bins;
pub mod dataset;
pub mod densify;
pub mod detect;
pub mod error;
pub mod evaluation;
pub mod extract;
pub mod fundamental;
pub mod grid;
pub mod matching;
pub mod objectives;
pub mod rng;
pub mod sample;
pub mod scalar;
pub mod sparse;
pub mod synthetic;

pub use densify::{densify, densify_or_zero, downsample_prior, nearest_index_map, zero_prior_maps, PriorMaps};
pub use error::{CoreError, Result};
pub use evaluation::{evaluate, evaluate_ranges, MetricReport, Metrics};
pub use grid::Grid;
pub use objectives::{LossBreakdown, LossConfig};
pub use sample::{augment, AugmentConfig, DepthSample};
pub use scalar::Scalar;
pub use sparse::{PriorPoint, SparsePrior};

pub type GridF32 = Grid<f32>;
pub type GridF64 = Grid<f64>;
pub type PriorMapsF32 = PriorMaps<f32>;
pub type PriorMapsF64 = PriorMaps<f64>;
pub type SparsePriorF32 = SparsePrior<f32>;
pub type SparsePriorF64 = SparsePrior<f64>;
pub type DepthSampleF32 = DepthSample<f32>;
pub type DepthSampleF64 = DepthSample<f64>;
