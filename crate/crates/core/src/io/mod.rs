//! Pose files, the on-disk sequence container and CSV export.

pub(crate) mod container;
mod csv;
mod kitti;
mod trajectory;
mod tum;

pub use container::{
    read_dataset, read_sequence, write_dataset, write_sequence, Sequence, SequenceManifest, DATASET_MANIFEST,
    SEQUENCE_MANIFEST,
};
pub use csv::{format_decimal, CsvTable};
pub use kitti::{parse_kitti_poses, read_kitti_file, write_kitti_file, write_kitti_poses};
pub use trajectory::Trajectory;
pub use tum::{parse_tum_trajectory, write_tum_trajectory};

/// Deviation from orthonormality above which a parsed rotation is reported.
pub const ROTATION_WARN_TOL: f64 = 1e-3;
