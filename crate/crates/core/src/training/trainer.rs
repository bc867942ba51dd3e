use log::{debug, info};
use memvo_tensor::{Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{AdamConfig, LrSchedule, OptimizerState};
use super::loss::{loss_global, loss_local, loss_total};
use crate::error::{invalid, Error, Result};
use crate::geometry::Pose6DoF;
use crate::io::Sequence;
use crate::memory::{Combine, MemoryPolicy};
use crate::model::{ModelConfig, Preset, VoModel, Weights};
use crate::pipeline::{run_window, PipelineOptions, WindowOutput};

/// Everything needed to reproduce a training run. Missing fields take
/// desk-scale defaults; unknown fields are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub window_length: usize,
    pub batch_size: usize,
    pub iterations: usize,
    pub base_lr: f64,
    pub decay_every: u64,
    /// Rotation weight in both losses.
    pub k: f64,
    pub theta_rot: f64,
    pub theta_trans: f64,
    pub memory_size: usize,
    pub combine: Combine,
    pub seed: u64,
    pub preset: Preset,
    /// Treat stored hidden states as constants for the refining loss.
    pub detach_memory: bool,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            window_length: 11,
            batch_size: 4,
            iterations: 500,
            base_lr: 1e-3,
            decay_every: 60_000,
            k: 1.0,
            theta_rot: 0.01,
            theta_trans: 0.05,
            memory_size: 11,
            combine: Combine::Or,
            seed: 0,
            preset: Preset::Desk,
            detach_memory: true,
            weight_decay: adam.weight_decay,
            beta1: adam.beta1,
            beta2: adam.beta2,
            eps: adam.eps,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_length < 2 {
            return Err(invalid("window_length must be at least 2"));
        }
        if self.batch_size == 0 {
            return Err(invalid("batch_size must be at least 1"));
        }
        if !(self.base_lr >= 0.0) || self.decay_every == 0 {
            return Err(invalid("base_lr must be non-negative and decay_every positive"));
        }
        if !(self.k > 0.0) {
            return Err(invalid("k must be positive"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.eps > 0.0) {
            return Err(invalid("Adam betas must lie in [0, 1) and eps be positive"));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(invalid("weight_decay must be non-negative"));
        }
        self.policy()?;
        Ok(())
    }

    pub fn policy(&self) -> Result<MemoryPolicy> {
        let mut p = MemoryPolicy::new(self.theta_rot, self.theta_trans, self.memory_size)?;
        p.combine = self.combine;
        Ok(p)
    }

    pub fn pipeline_options(&self) -> Result<PipelineOptions> {
        Ok(PipelineOptions {
            policy: self.policy()?,
            detach_memory: self.detach_memory,
        })
    }

    pub fn schedule(&self) -> LrSchedule {
        LrSchedule {
            base: self.base_lr,
            decay_every: self.decay_every,
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            weight_decay: self.weight_decay,
        }
    }
}

/// Loss nodes of one window.
#[derive(Debug, Clone, Copy)]
pub struct WindowLoss {
    pub local: Var,
    pub global: Var,
    pub total: Var,
}

/// Run the full model on a window and attach the training losses: the local
/// loss supervises tracking relative poses, the global loss the refined
/// absolute poses.
#[allow(clippy::too_many_arguments)]
pub fn window_loss(
    tape: &mut Tape,
    frames: &[Var],
    config: &ModelConfig,
    weights: &Weights<Var>,
    options: &PipelineOptions,
    gt_relative: &[Pose6DoF],
    gt_absolute: &[Pose6DoF],
    k: f64,
) -> Result<(WindowLoss, WindowOutput)> {
    let out = run_window(tape, frames, config, weights, options)?;
    let local = loss_local(tape, &out.track.relative, gt_relative, k)?;
    let global = loss_global(tape, &out.refine.absolute, gt_absolute, k)?;
    let total = loss_total(tape, local, global)?;
    Ok((WindowLoss { local, global, total }, out))
}

/// Batch-mean losses of one iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    pub iteration: usize,
    pub local: f64,
    pub global: f64,
    pub total: f64,
}

pub const LOSS_CSV_HEADER: &str = "iteration,loss_local,loss_global,loss_total";

/// Values of one window's loss and its parameter gradients.
pub struct WindowGradient {
    pub local: f64,
    pub global: f64,
    pub total: f64,
    pub gradients: Weights<Tensor>,
}

pub fn window_gradient(
    model: &VoModel,
    frames: &[Tensor],
    gt_relative: &[Pose6DoF],
    gt_absolute: &[Pose6DoF],
    options: &PipelineOptions,
    k: f64,
) -> Result<WindowGradient> {
    let mut tape = Tape::new();
    let weights = model.weights.bind(&mut tape, true);
    let inputs: Vec<Var> = frames.iter().map(|f| tape.constant(f.clone())).collect();
    let (loss, _) = window_loss(
        &mut tape,
        &inputs,
        &model.config,
        &weights,
        options,
        gt_relative,
        gt_absolute,
        k,
    )?;
    let total = tape.value(loss.total).item();
    if !total.is_finite() {
        return Ok(WindowGradient {
            local: tape.value(loss.local).item(),
            global: tape.value(loss.global).item(),
            total,
            gradients: model.weights.zeros_like(),
        });
    }
    tape.backward(loss.total)?;
    Ok(WindowGradient {
        local: tape.value(loss.local).item(),
        global: tape.value(loss.global).item(),
        total,
        gradients: weights.gradients(&tape),
    })
}

fn accumulate(acc: &mut [Tensor], grads: &Weights<Tensor>) -> Result<()> {
    for (a, (_, g)) in acc.iter_mut().zip(grads.flatten()) {
        let sum: Vec<f64> = a.data().iter().zip(g.data()).map(|(x, y)| x + y).collect();
        *a = Tensor::new(a.shape().to_vec(), sum)?;
    }
    Ok(())
}

/// Every `(sequence, start)` pair that fits a full window.
pub fn window_index(data: &[Sequence], window: usize) -> Vec<(usize, usize)> {
    data.iter()
        .enumerate()
        .flat_map(|(s, seq)| (0..(seq.len() + 1).saturating_sub(window)).map(move |start| (s, start)))
        .collect()
}

/// Train in place with Adam. Windows are drawn uniformly at random from
/// every full window in the dataset; each iteration averages gradients over
/// the batch in a fixed order, so a run is reproducible from its seed.
/// `on_iteration` sees every loss record as it is produced.
pub fn train(
    model: &mut VoModel,
    data: &[Sequence],
    config: &TrainConfig,
    mut on_iteration: impl FnMut(&LossRecord),
) -> Result<Vec<LossRecord>> {
    config.validate()?;
    if model.config.preset != config.preset {
        return Err(invalid(format!(
            "model preset `{}` does not match configured preset `{}`",
            model.config.preset.name(),
            config.preset.name()
        )));
    }
    if data.is_empty() {
        return Err(invalid("training needs at least one sequence"));
    }
    let enc = &model.config.encoder;
    if let Some(seq) = data
        .iter()
        .find(|s| s.height() != enc.height || s.width() != enc.width)
    {
        return Err(invalid(format!(
            "sequence frames are {}×{}, the model expects {}×{}",
            seq.height(),
            seq.width(),
            enc.height,
            enc.width
        )));
    }
    let windows = window_index(data, config.window_length);
    if windows.is_empty() {
        return Err(invalid(format!(
            "no sequence has {} frames for a full window",
            config.window_length
        )));
    }
    let options = config.pipeline_options()?;
    let schedule = config.schedule();
    let mut optimizer = OptimizerState::new(config.adam());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let names = model.weights.names();
    let mut history = Vec::with_capacity(config.iterations);
    info!(
        "training {} parameters on {} windows for {} iterations",
        model.weights.param_count(),
        windows.len(),
        config.iterations
    );

    for iteration in 0..config.iterations {
        let mut acc: Vec<Tensor> = model
            .weights
            .zeros_like()
            .flatten()
            .into_iter()
            .map(|(_, t)| t)
            .collect();
        let (mut local, mut global, mut total) = (0.0, 0.0, 0.0);
        for _ in 0..config.batch_size {
            let (s, start) = windows[rng.random_range(0..windows.len())];
            let (frames, gt_rel, gt_abs) = data[s].window(start, config.window_length)?;
            let g = match window_gradient(model, &frames, &gt_rel, &gt_abs, &options, config.k) {
                Err(Error::NonFiniteOutput(_)) => {
                    return Err(Error::Diverged {
                        iteration,
                        loss: f64::NAN,
                    })
                }
                other => other?,
            };
            if !g.total.is_finite() {
                return Err(Error::Diverged {
                    iteration,
                    loss: g.total,
                });
            }
            accumulate(&mut acc, &g.gradients)?;
            local += g.local;
            global += g.global;
            total += g.total;
        }
        let b = config.batch_size as f64;
        let mean: Vec<Tensor> = acc.iter().map(|t| t.map(|x| x / b)).collect();
        let mut params: Vec<Tensor> = model.weights.flatten().into_iter().map(|(_, t)| t).collect();
        optimizer.step_tensors(&names, &mut params, &mean, schedule.lr_at(iteration as u64))?;
        model.weights = model.weights.unflatten(params)?;

        let record = LossRecord {
            iteration,
            local: local / b,
            global: global / b,
            total: total / b,
        };
        debug!(
            "iteration {iteration}: local {:.6} global {:.6} total {:.6}",
            record.local, record.global, record.total
        );
        on_iteration(&record);
        history.push(record);
    }
    Ok(history)
}

pub fn loss_csv(history: &[LossRecord]) -> String {
    let mut table = crate::io::CsvTable::new(&LOSS_CSV_HEADER.split(',').collect::<Vec<_>>());
    for r in history {
        table
            .push(vec![r.iteration as f64, r.local, r.global, r.total])
            .expect("four columns");
    }
    table.to_csv()
}
