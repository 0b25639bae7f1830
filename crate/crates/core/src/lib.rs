//! Random-forest regression with out-of-bag prediction intervals and a
//! Monte-Carlo harness for their coverage.

pub mod data;
pub mod dist;
pub mod error;
pub mod forest;
pub mod intervals;
pub mod rng;
pub mod sim;
pub mod variance;

pub use data::Dataset;
pub use error::{Error, Result};
pub use forest::{build_forest, Forest, ForestConfig, OobResiduals, ResampleMode};
pub use intervals::{ForestIntervals, IntervalKind, PredictionInterval};
pub use sim::{run_grid, CoverageReport, CoverageType, Method, MethodCoverage, ScenarioConfig};
pub use variance::{VarianceEstimate, VarianceEstimates, VarianceMethod};
