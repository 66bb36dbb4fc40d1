//! Transportation-mode classification for GPS trajectories.
//!
//! The pipeline rasterizes each trajectory into a three-channel feature
//! image for a residual CNN, feeds the raw point sequence (with a seasonal
//! timestamp component injected) into a dilated causal TCN, and trains both
//! branches jointly on an accuracy-weighted sum of their losses. Training can
//! be split over spatial partitions that run in parallel.

pub mod error;
pub mod geo;
pub mod ingest;
pub mod mapping;
pub mod metrics;
pub mod model;
pub mod partition;
pub mod pipeline;
pub mod stl;
pub mod synthetic;
pub mod tensor;
pub mod trajectory;

pub use error::{Error, Result};
pub use trajectory::{ClassLabel, GpsPoint, LabelMap, Trajectory};
