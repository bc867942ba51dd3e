//! Translational drift per second after similarity alignment.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{umeyama_align, PoseSE3, Similarity};
use crate::io::Trajectory;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TumDriftOptions {
    /// Maximum timestamp difference for association, seconds.
    pub max_difference: f64,
    /// Time between the two poses of a compared pair, seconds.
    pub delta: f64,
}

impl Default for TumDriftOptions {
    fn default() -> Self {
        Self {
            max_difference: 0.02,
            delta: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TumDrift {
    /// RMSE of translational drift, m/s.
    pub rmse: f64,
    pub pairs: usize,
    pub associated: usize,
    pub alignment: Similarity,
}

/// Greedy one-to-one nearest-timestamp association: candidate pairs within
/// `max_difference` are accepted in order of increasing time difference.
/// Returned pairs `(est, gt)` are sorted by estimate index.
pub fn associate(est: &[f64], gt: &[f64], max_difference: f64) -> Vec<(usize, usize)> {
    let mut candidates = Vec::new();
    for (i, &s) in est.iter().enumerate() {
        let lo = gt.partition_point(|&g| g < s - max_difference);
        for (j, &g) in gt.iter().enumerate().skip(lo) {
            if g > s + max_difference {
                break;
            }
            candidates.push(((s - g).abs(), i, j));
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_e = vec![false; est.len()];
    let mut used_g = vec![false; gt.len()];
    let mut pairs = Vec::new();
    for (_, i, j) in candidates {
        if !used_e[i] && !used_g[j] {
            used_e[i] = true;
            used_g[j] = true;
            pairs.push((i, j));
        }
    }
    pairs.sort_unstable();
    pairs
}

/// Time stamps closer than this to the requested pair spacing still count.
const DELTA_SLACK: f64 = 1e-6;

/// Associate, align `est` onto `gt` with a similarity transform, then take
/// the RMSE over pose pairs `delta` seconds apart of the relative-pose
/// translation error divided by the elapsed time.
pub fn tum_rmse_drift(est: &Trajectory, gt: &Trajectory, options: &TumDriftOptions) -> Result<TumDrift> {
    if !(options.delta > 0.0) || !(options.max_difference >= 0.0) {
        return Err(invalid("delta must be positive and max difference non-negative"));
    }
    let pairs = associate(est.stamps(), gt.stamps(), options.max_difference);
    if pairs.is_empty() {
        return Err(Error::Degenerate("no associable timestamps".into()));
    }
    let est_pos: Vec<_> = pairs
        .iter()
        .map(|&(i, _)| *est.poses()[i].translation())
        .collect();
    let gt_pos: Vec<_> = pairs.iter().map(|&(_, j)| *gt.poses()[j].translation()).collect();
    let alignment = umeyama_align(&est_pos, &gt_pos, true)?;
    let aligned: Vec<PoseSE3> = pairs
        .iter()
        .map(|&(i, _)| alignment.apply_pose(&est.poses()[i]))
        .collect();
    let stamps: Vec<f64> = pairs.iter().map(|&(_, j)| gt.stamps()[j]).collect();
    let gt_poses: Vec<PoseSE3> = pairs.iter().map(|&(_, j)| gt.poses()[j]).collect();

    let mut sum_sq = 0.0;
    let mut count = 0usize;
    for a in 0..stamps.len() {
        let target = stamps[a] + options.delta - DELTA_SLACK;
        let b = stamps.partition_point(|&s| s < target);
        if b >= stamps.len() {
            break;
        }
        let dt = stamps[b] - stamps[a];
        let gt_rel = gt_poses[a].between(&gt_poses[b]);
        let est_rel = aligned[a].between(&aligned[b]);
        let err = gt_rel.between(&est_rel).translation().norm() / dt;
        sum_sq += err * err;
        count += 1;
    }
    if count == 0 {
        return Err(Error::Degenerate(format!(
            "no associated pose pairs {} s apart",
            options.delta
        )));
    }
    Ok(TumDrift {
        rmse: (sum_sq / count as f64).sqrt(),
        pairs: count,
        associated: pairs.len(),
        alignment,
    })
}
