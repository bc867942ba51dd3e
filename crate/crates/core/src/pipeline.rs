//! One window through the full model: tracking, memory selection, refining.

use memvo_tensor::{Tape, Tensor, Var};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{integrate_relative, Pose6DoF, PoseSE3};
use crate::memory::{MemoryBuffer, MemoryPolicy};
use crate::model::{ModelConfig, VoModel, Weights};
use crate::net::{track_sequence, TrackOutput};
use crate::refining::{refine_sequence, RefineOutput};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineOptions {
    pub policy: MemoryPolicy,
    /// Treat stored hidden states as constants on the refining side.
    pub detach_memory: bool,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            policy: MemoryPolicy::kitti(),
            detach_memory: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct WindowOutput {
    pub track: TrackOutput,
    pub refine: RefineOutput,
    /// Window-local indices (1-based step numbers) of the stored states.
    pub stored_frames: Vec<usize>,
    /// Integrated tracking trajectory, `T + 1` poses starting at identity.
    pub tracking_poses: Vec<PoseSE3>,
}

pub fn pose_value(tape: &Tape, v: Var) -> Pose6DoF {
    Pose6DoF::from_slice(tape.value(v).data()).expect("pose heads emit 6 values")
}

pub fn pose_values(tape: &Tape, vars: &[Var]) -> Vec<Pose6DoF> {
    vars.iter().map(|&v| pose_value(tape, v)).collect()
}

/// Track the window, select memory from the integrated tracking poses, then
/// refine every step against that memory.
pub fn run_window(
    tape: &mut Tape,
    frames: &[Var],
    config: &ModelConfig,
    weights: &Weights<Var>,
    options: &PipelineOptions,
) -> Result<WindowOutput> {
    let track = track_sequence(
        tape,
        frames,
        &config.encoder,
        &weights.encoder,
        &weights.tracking_cell,
        &weights.tracking_head,
    )?;
    let relative = pose_values(tape, &track.relative);
    if let Some(step) = relative.iter().position(|p| !p.is_finite()) {
        return Err(Error::NonFiniteOutput(format!(
            "tracking pose at step {}",
            step + 1
        )));
    }
    let tracking_poses = integrate_relative(&relative, &PoseSE3::identity());

    let mut memory = MemoryBuffer::new(options.policy)?;
    for (step, &h) in track.hidden.iter().enumerate() {
        let slot = if options.detach_memory {
            tape.constant(tape.value(h).clone())
        } else {
            h
        };
        memory.observe(slot, tracking_poses[step + 1], step + 1)?;
    }
    let slots = memory.snapshot();
    let states: Vec<Var> = slots.iter().map(|s| s.state).collect();
    let refine = refine_sequence(
        tape,
        &track.features,
        &states,
        &weights.fusion,
        &weights.refining_cell,
        &weights.refining_head,
    )?;
    Ok(WindowOutput {
        track,
        refine,
        stored_frames: slots.iter().map(|s| s.frame).collect(),
        tracking_poses,
    })
}

/// Plain-value result of running a window without gradients.
#[derive(Debug, Clone)]
pub struct WindowEstimate {
    /// Tracking relative poses, one per step.
    pub relative: Vec<Pose6DoF>,
    /// Refined absolute poses of frames `1..=T` relative to frame 0.
    pub absolute: Vec<Pose6DoF>,
    pub tracking_poses: Vec<PoseSE3>,
    pub stored_frames: Vec<usize>,
}

impl WindowEstimate {
    /// Refined trajectory including the identity origin.
    pub fn refined_poses(&self) -> Vec<PoseSE3> {
        std::iter::once(PoseSE3::identity())
            .chain(self.absolute.iter().map(Pose6DoF::to_se3))
            .collect()
    }
}

pub fn infer_window(model: &VoModel, frames: &[Tensor], options: &PipelineOptions) -> Result<WindowEstimate> {
    let mut tape = Tape::new();
    let weights = model.weights.bind(&mut tape, false);
    let vars: Vec<Var> = frames.iter().map(|f| tape.constant(f.clone())).collect();
    let out = run_window(&mut tape, &vars, &model.config, &weights, options)?;
    Ok(WindowEstimate {
        relative: pose_values(&tape, &out.track.relative),
        absolute: pose_values(&tape, &out.refine.absolute),
        tracking_poses: out.tracking_poses,
        stored_frames: out.stored_frames,
    })
}
