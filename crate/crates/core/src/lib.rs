//! Point-cloud registration and change detection.
//!
//! The crate aligns a current (inspection) point cloud onto a reference
//! cloud with iterative closest point, classifies per-point deviations
//! against a distance threshold, clusters the deviations into defect
//! regions, and scores the result against ground truth.

pub mod diff;
pub mod error;
pub mod geom;
pub mod io;
pub mod kdtree;
pub mod metrics;
pub mod pipeline;
pub mod registration;
pub mod synth;

pub use diff::{diff, DiffConfig, DiffReport, PointLabel, Side};
pub use error::{Error, Result};
pub use geom::{Point3, PointCloud, Rgb, SimilarityTransform};
pub use kdtree::KdTree;
pub use metrics::{evaluate, EvalResult, GroundTruth, StageTimer, TimingRecord};
pub use registration::{icp, IcpConfig, IcpResult};
