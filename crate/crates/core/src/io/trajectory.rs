use crate::error::{invalid, Result};
use crate::geometry::PoseSE3;

/// Poses keyed by a strictly increasing frame index or timestamp.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    stamps: Vec<f64>,
    poses: Vec<PoseSE3>,
}

impl Trajectory {
    pub fn new(stamps: Vec<f64>, poses: Vec<PoseSE3>) -> Result<Self> {
        if stamps.len() != poses.len() {
            return Err(invalid(format!(
                "{} stamps for {} poses",
                stamps.len(),
                poses.len()
            )));
        }
        if let Some(i) = stamps.iter().position(|s| !s.is_finite()) {
            return Err(invalid(format!("stamp {i} is not finite")));
        }
        if let Some(i) = stamps.windows(2).position(|w| w[1] <= w[0]) {
            return Err(invalid(format!(
                "stamps must increase strictly, but {} follows {}",
                stamps[i + 1],
                stamps[i]
            )));
        }
        Ok(Self { stamps, poses })
    }

    /// Frame-indexed trajectory: stamps `0, 1, 2, …`.
    pub fn from_poses(poses: Vec<PoseSE3>) -> Self {
        let stamps = (0..poses.len()).map(|i| i as f64).collect();
        Self { stamps, poses }
    }

    pub fn stamps(&self) -> &[f64] {
        &self.stamps
    }

    pub fn poses(&self) -> &[PoseSE3] {
        &self.poses
    }

    pub fn into_poses(self) -> Vec<PoseSE3> {
        self.poses
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }
}
