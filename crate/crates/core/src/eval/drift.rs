//! Subsegment drift in the style of the KITTI odometry benchmark.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::geometry::{rotation_angle, PoseSE3};

/// Subsegment lengths in meters.
pub const KITTI_LENGTHS: [f64; 8] = [100.0, 200.0, 300.0, 400.0, 500.0, 600.0, 700.0, 800.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    /// Arithmetic mean over subsegments, as in the benchmark devkit.
    #[default]
    Mean,
    /// Root mean square over subsegments.
    Rmse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftOptions {
    pub lengths: Vec<f64>,
    pub aggregation: Aggregation,
    /// Frame rate used to turn subsegment durations into speeds.
    pub frame_rate: f64,
}

impl Default for DriftOptions {
    fn default() -> Self {
        Self {
            lengths: KITTI_LENGTHS.to_vec(),
            aggregation: Aggregation::Mean,
            frame_rate: 10.0,
        }
    }
}

/// Error of one `(start, length)` subsegment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentError {
    pub start: usize,
    pub end: usize,
    pub length: f64,
    /// Meters of translation error per meter travelled.
    pub t_err: f64,
    /// Radians of rotation error per meter travelled.
    pub r_err: f64,
    /// Meters per second over the subsegment.
    pub speed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LengthRow {
    pub length: f64,
    pub count: usize,
    /// Percent.
    pub t_rel: f64,
    /// Degrees per 100 m.
    pub r_rel: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeedRow {
    /// Lower edge of the speed bin in m/s.
    pub speed: f64,
    pub count: usize,
    pub t_rel: f64,
    pub r_rel: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriftReport {
    /// Percent; zero when no subsegment fits in the trajectory.
    pub t_rel: f64,
    /// Degrees per 100 m; zero when no subsegment fits.
    pub r_rel: f64,
    pub segments: Vec<SegmentError>,
    pub per_length: Vec<LengthRow>,
    pub aggregation: Aggregation,
}

/// Cumulative path length along a trajectory, starting at 0.
pub fn path_lengths(poses: &[PoseSE3]) -> Vec<f64> {
    let mut out = Vec::with_capacity(poses.len());
    let mut acc = 0.0;
    for (i, p) in poses.iter().enumerate() {
        if i > 0 {
            acc += (p.translation() - poses[i - 1].translation()).norm();
        }
        out.push(acc);
    }
    out
}

fn aggregate(values: impl Iterator<Item = f64>, mode: Aggregation) -> (f64, usize) {
    let (mut sum, mut n) = (0.0, 0usize);
    for v in values {
        sum += match mode {
            Aggregation::Mean => v,
            Aggregation::Rmse => v * v,
        };
        n += 1;
    }
    if n == 0 {
        return (0.0, 0);
    }
    let mean = sum / n as f64;
    match mode {
        Aggregation::Mean => (mean, n),
        Aggregation::Rmse => (mean.sqrt(), n),
    }
}

fn summarize(segments: &[&SegmentError], mode: Aggregation) -> (f64, f64, usize) {
    let (t, n) = aggregate(segments.iter().map(|s| s.t_err), mode);
    let (r, _) = aggregate(segments.iter().map(|s| s.r_err), mode);
    (t * 100.0, r.to_degrees() * 100.0, n)
}

/// Translational (%) and rotational (°/100 m) drift over every start frame
/// and every subsegment length. The end frame is the first whose cumulative
/// ground-truth path length reaches `start + length`; subsegments running
/// past the end of the trajectory are skipped.
pub fn kitti_drift(est: &[PoseSE3], gt: &[PoseSE3], options: &DriftOptions) -> Result<DriftReport> {
    if est.len() != gt.len() {
        return Err(invalid(format!(
            "trajectories differ in length: {} estimated, {} ground truth",
            est.len(),
            gt.len()
        )));
    }
    if options.lengths.iter().any(|l| !(*l > 0.0)) || !(options.frame_rate > 0.0) {
        return Err(invalid("subsegment lengths and frame rate must be positive"));
    }
    let dist = path_lengths(gt);
    let mut segments = Vec::new();
    for start in 0..gt.len() {
        for &length in &options.lengths {
            let target = dist[start] + length;
            // `dist` is non-decreasing, so the first frame reaching the
            // target is a partition point.
            let end = start + dist[start..].partition_point(|&d| d < target);
            if end >= gt.len() {
                continue;
            }
            let gt_delta = gt[start].between(&gt[end]);
            let est_delta = est[start].between(&est[end]);
            // Unprojected on purpose: for equal deltas RᵀR is exactly
            // symmetric, so identical trajectories score exactly zero.
            let error_rotation = gt_delta.rotation().transpose() * est_delta.rotation();
            let error_translation =
                gt_delta.rotation().transpose() * (est_delta.translation() - gt_delta.translation());
            let frames = (end - start + 1) as f64;
            segments.push(SegmentError {
                start,
                end,
                length,
                t_err: error_translation.norm() / length,
                r_err: rotation_angle(&error_rotation) / length,
                speed: length * options.frame_rate / frames,
            });
        }
    }
    let all: Vec<&SegmentError> = segments.iter().collect();
    let (t_rel, r_rel, _) = summarize(&all, options.aggregation);
    let per_length = options
        .lengths
        .iter()
        .map(|&length| {
            let subset: Vec<&SegmentError> = segments.iter().filter(|s| s.length == length).collect();
            let (t_rel, r_rel, count) = summarize(&subset, options.aggregation);
            LengthRow {
                length,
                count,
                t_rel,
                r_rel,
            }
        })
        .collect();
    Ok(DriftReport {
        t_rel,
        r_rel,
        segments,
        per_length,
        aggregation: options.aggregation,
    })
}

/// Drift grouped into speed bins of width `bin` m/s. Empty bins are omitted.
pub fn speed_table(report: &DriftReport, bin: f64) -> Result<Vec<SpeedRow>> {
    if !(bin > 0.0) {
        return Err(invalid("speed bin width must be positive"));
    }
    let mut bins: Vec<(i64, Vec<&SegmentError>)> = Vec::new();
    for s in &report.segments {
        let key = (s.speed / bin).floor() as i64;
        match bins.binary_search_by_key(&key, |(k, _)| *k) {
            Ok(i) => bins[i].1.push(s),
            Err(i) => bins.insert(i, (key, vec![s])),
        }
    }
    Ok(bins
        .into_iter()
        .map(|(key, subset)| {
            let (t_rel, r_rel, count) = summarize(&subset, report.aggregation);
            SpeedRow {
                speed: key as f64 * bin,
                count,
                t_rel,
                r_rel,
            }
        })
        .collect())
}
