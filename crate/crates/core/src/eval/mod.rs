//! Trajectory metrics and input saliency.

mod drift;
mod saliency;
mod tum;

pub use drift::{
    kitti_drift, path_lengths, speed_table, Aggregation, DriftOptions, DriftReport, LengthRow, SegmentError,
    SpeedRow, KITTI_LENGTHS,
};
pub use saliency::{saliency_maps, SaliencyMap, SaliencyMode};
pub use tum::{associate, tum_rmse_drift, TumDrift, TumDriftOptions};
