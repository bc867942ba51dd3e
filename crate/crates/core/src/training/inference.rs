use memvo_tensor::Tensor;

use crate::error::{invalid, Result};
use crate::geometry::PoseSE3;
use crate::model::VoModel;
use crate::pipeline::{infer_window, PipelineOptions};

/// Frame ranges `[start, end)` visited by the sliding window. Consecutive
/// windows always share at least their boundary frame so every window can be
/// anchored on an already estimated pose; the effective stride is therefore
/// `min(stride, length − 1)`. A stream shorter than the window is one window.
pub fn window_ranges(frames: usize, length: usize, stride: usize) -> Result<Vec<(usize, usize)>> {
    if length < 2 {
        return Err(invalid("window length must be at least 2"));
    }
    if stride == 0 {
        return Err(invalid("stride must be at least 1"));
    }
    if frames < 2 {
        return Err(invalid("a stream needs at least two frames"));
    }
    let step = stride.min(length - 1);
    let mut out = Vec::new();
    let mut start = 0;
    loop {
        let end = (start + length).min(frames);
        out.push((start, end));
        if end == frames {
            break;
        }
        start += step;
    }
    Ok(out)
}

/// Drive any window estimator over a stream. `estimate(start, end)` returns
/// the poses of frames `start..end` relative to frame `start` (so its first
/// entry is the identity). Each window is re-anchored on the current
/// trajectory pose of its first frame; later windows overwrite earlier
/// estimates.
pub fn sliding_window_with(
    frames: usize,
    length: usize,
    stride: usize,
    mut estimate: impl FnMut(usize, usize) -> Result<Vec<PoseSE3>>,
) -> Result<Vec<PoseSE3>> {
    let ranges = window_ranges(frames, length, stride)?;
    let mut trajectory = vec![PoseSE3::identity(); frames];
    for (start, end) in ranges {
        let local = estimate(start, end)?;
        if local.len() != end - start {
            return Err(invalid(format!(
                "window {start}..{end} produced {} poses",
                local.len()
            )));
        }
        if start == 0 {
            // The stream origin is the identity; copying avoids a needless
            // re-projection of the rotations.
            trajectory[..end].copy_from_slice(&local);
            continue;
        }
        let anchor = trajectory[start];
        for (offset, pose) in local.iter().enumerate().skip(1) {
            trajectory[start + offset] = anchor.compose(pose);
        }
    }
    Ok(trajectory)
}

/// Refined absolute poses for every frame of a stream, starting at identity.
pub fn sliding_window_infer(
    model: &VoModel,
    frames: &[Tensor],
    length: usize,
    stride: usize,
    options: &PipelineOptions,
) -> Result<Vec<PoseSE3>> {
    sliding_window_with(frames.len(), length, stride, |start, end| {
        Ok(infer_window(model, &frames[start..end], options)?.refined_poses())
    })
}

/// Same windows, but using the integrated tracking poses instead of the
/// refined ones.
pub fn sliding_window_tracking(
    model: &VoModel,
    frames: &[Tensor],
    length: usize,
    stride: usize,
    options: &PipelineOptions,
) -> Result<Vec<PoseSE3>> {
    sliding_window_with(frames.len(), length, stride, |start, end| {
        Ok(infer_window(model, &frames[start..end], options)?.tracking_poses)
    })
}
