//! Per-pixel sensitivity of a pose output to the input images.

use memvo_tensor::{Tape, Tensor, Var};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::model::VoModel;
use crate::net::track_sequence;
use crate::pipeline::{run_window, PipelineOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SaliencyMode {
    /// Differentiate the refined absolute pose of the target frame.
    #[default]
    Refined,
    /// Differentiate the tracking relative pose of the target step only.
    TrackingOnly,
}

/// `H × W` map of non-negative sensitivities.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMap {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
}

impl SaliencyMap {
    /// Maximum over channels of the absolute gradient.
    fn from_gradient(grad: &Tensor) -> Self {
        let [c, h, w] = [grad.shape()[0], grad.shape()[1], grad.shape()[2]];
        let plane = h * w;
        let values = (0..plane)
            .map(|p| {
                (0..c)
                    .map(|ch| grad.data()[ch * plane + p].abs())
                    .fold(0.0, f64::max)
            })
            .collect();
        Self {
            height: h,
            width: w,
            values,
        }
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(vec![self.height, self.width], self.values.clone())
            .expect("map dimensions match its values")
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| *v == 0.0)
    }
}

/// Saliency of every input frame of a window with respect to the mean of the
/// six pose outputs at step `target` (`1..=frames.len() − 1`).
pub fn saliency_maps(
    model: &VoModel,
    frames: &[Tensor],
    target: usize,
    mode: SaliencyMode,
    options: &PipelineOptions,
) -> Result<Vec<SaliencyMap>> {
    if target == 0 || target >= frames.len() {
        return Err(invalid(format!(
            "target step {target} outside 1..={}",
            frames.len().saturating_sub(1)
        )));
    }
    let mut tape = Tape::new();
    let weights = model.weights.bind(&mut tape, false);
    let inputs: Vec<Var> = frames.iter().map(|f| tape.leaf(f.clone())).collect();
    let pose = match mode {
        SaliencyMode::Refined => {
            let out = run_window(&mut tape, &inputs, &model.config, &weights, options)?;
            out.refine.absolute[target - 1]
        }
        SaliencyMode::TrackingOnly => {
            let out = track_sequence(
                &mut tape,
                &inputs,
                &model.config.encoder,
                &weights.encoder,
                &weights.tracking_cell,
                &weights.tracking_head,
            )?;
            out.relative[target - 1]
        }
    };
    let total = tape.sum(pose);
    let mean = tape.scale(total, 1.0 / 6.0);
    tape.backward(mean)?;
    Ok(inputs
        .iter()
        .map(|&v| {
            let grad = tape.grad(v).expect("frames are trainable leaves");
            SaliencyMap::from_gradient(grad)
        })
        .collect())
}
