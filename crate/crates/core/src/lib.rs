//! Metric localization of a ground LiDAR scan inside an overhead map patch of
//! unknown scale.
//!
//! The pipeline encodes the scan into a bird's-eye-view (BEV) feature grid and
//! a skeleton mask, encodes the overhead raster the same way, estimates the
//! scale ratio between the two grids, and then runs an exhaustive
//! rotation × translation template match in the Fourier domain. Feature and
//! skeleton score volumes are fused into a probability volume whose argmax is
//! the pose estimate.
//!
//! Besides the localizer itself the crate carries a procedural scene
//! generator ([`synth`]) with exact ground truth and the metrics harness
//! ([`eval`]) used to check the whole thing end to end.

pub mod bev;
pub mod cloud;
pub mod config;
pub mod error;
pub mod eval;
mod fft;
pub mod geometry;
pub mod grid;
pub mod losses;
pub mod map;
pub mod matcher;
pub mod pgm;
pub mod pipeline;
pub mod scale;
pub mod synth;
mod thinning;

pub use error::{Error, Result};
pub use geometry::{apply_pose, pose_error, wrap_angle, Pose};
pub use grid::{Grid2D, SkeletonMask};
pub use cloud::PointCloud;
