//! Refining path: attention over stored hidden states, guided observation,
//! feature fusion and the absolute-pose recurrence.
//!
//! Attention is parameter-free. Guidance is the previous refining output;
//! temporal weights `α` come from a softmax over slot-level cosine
//! similarities, channel weights `β` from a softmax over per-channel cosine
//! similarities rescaled by the channel count, so uniform correlation leaves
//! features untouched.

use memvo_tensor::{Tape, Tensor, Var};

use crate::error::{invalid, Result};
use crate::model::{Conv, ConvLstm, Se3Head};
use crate::net::{convlstm_step, se3_head, CellState};

/// Attention weights read back from a tape.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionWeights {
    /// One weight per memory slot.
    pub alpha: Vec<f64>,
    /// Slots × channels.
    pub beta: Vec<Vec<f64>>,
}

/// `α = softmax_i cos(guidance, m_i)`.
pub fn temporal_weights(tape: &mut Tape, guidance: Var, memory: &[Var]) -> Result<Var> {
    if memory.is_empty() {
        return Err(invalid("temporal attention over an empty memory"));
    }
    let scores = memory
        .iter()
        .map(|&m| tape.cosine_similarity(guidance, m))
        .collect::<Result<Vec<_>, _>>()?;
    let logits = tape.concat(&scores)?;
    Ok(tape.softmax(logits)?)
}

/// `β = C · softmax_j cos(guidance[j], m[j])` over the channels `j` of one slot.
pub fn spatial_weights(tape: &mut Tape, guidance: Var, slot: Var) -> Result<Var> {
    let scores = tape.channel_cosine(guidance, slot)?;
    let channels = tape.shape(scores)[0];
    let soft = tape.softmax(scores)?;
    Ok(tape.scale(soft, channels as f64))
}

#[derive(Debug, Clone)]
pub struct GuidedMemory {
    /// `M'_t`, same shape as a slot.
    pub value: Var,
    pub alpha: Var,
    pub betas: Vec<Var>,
}

impl GuidedMemory {
    pub fn weights(&self, tape: &Tape) -> AttentionWeights {
        AttentionWeights {
            alpha: tape.value(self.alpha).to_vec(),
            beta: self.betas.iter().map(|&b| tape.value(b).to_vec()).collect(),
        }
    }
}

/// `M'_t = Σ_i α_i · (β_i ⊙_channel m_i)`.
pub fn guided_memory(tape: &mut Tape, guidance: Var, memory: &[Var]) -> Result<GuidedMemory> {
    let alpha = temporal_weights(tape, guidance, memory)?;
    let mut betas = Vec::with_capacity(memory.len());
    let mut terms = Vec::with_capacity(memory.len());
    for (i, &m) in memory.iter().enumerate() {
        let beta = spatial_weights(tape, guidance, m)?;
        let reweighted = tape.scale_channels(m, beta)?;
        let a = tape.slice(alpha, i, 1)?;
        terms.push(tape.scale_by(reweighted, a)?);
        betas.push(beta);
    }
    let value = tape.add_all(&terms)?;
    Ok(GuidedMemory { value, alpha, betas })
}

/// Channel reweighting of the current observation by its correlation with
/// the guidance.
pub fn guided_observation(tape: &mut Tape, guidance: Var, observation: Var) -> Result<Var> {
    let beta = spatial_weights(tape, guidance, observation)?;
    Ok(tape.scale_channels(observation, beta)?)
}

/// Concatenate memory and observation, then 3×3 conv → tanh → 3×3 conv.
pub fn fuse_features(tape: &mut Tape, memory: Var, observation: Var, fusion: &[Conv<Var>; 2]) -> Result<Var> {
    let (ms, os) = (tape.shape(memory), tape.shape(observation));
    if ms.len() != 3 || os.len() != 3 || ms[1..] != os[1..] {
        return Err(invalid(format!(
            "fusion inputs {ms:?} and {os:?} differ in spatial extents"
        )));
    }
    let stacked = tape.concat(&[memory, observation])?;
    let a = tape.conv2d(stacked, fusion[0].weight, fusion[0].bias, 1, 1)?;
    let a = tape.tanh(a);
    Ok(tape.conv2d(a, fusion[1].weight, fusion[1].bias, 1, 1)?)
}

/// The refining recurrent unit; same cell equations as tracking, separate
/// parameters.
pub fn refine_step(
    tape: &mut Tape,
    fused: Var,
    state: CellState,
    params: &ConvLstm<Var>,
) -> Result<(Var, CellState)> {
    convlstm_step(tape, fused, state, params)
}

#[derive(Debug, Clone)]
pub struct RefineOutput {
    /// Absolute 6-DoF pose of frames `1..=T` with respect to frame 0.
    pub absolute: Vec<Var>,
    /// Refining outputs `O^A_1..O^A_T`.
    pub outputs: Vec<Var>,
    pub attention: Vec<GuidedMemory>,
}

/// Run the refining recurrence over encoded features `X_1..X_T` with a fixed
/// memory. Guidance at the first step is a zero tensor.
pub fn refine_sequence(
    tape: &mut Tape,
    features: &[Var],
    memory: &[Var],
    fusion: &[Conv<Var>; 2],
    cell: &ConvLstm<Var>,
    head: &Se3Head<Var>,
) -> Result<RefineOutput> {
    let first = *features
        .first()
        .ok_or_else(|| invalid("refining needs at least one encoded step"))?;
    if memory.is_empty() {
        return Err(invalid("refining needs a populated memory"));
    }
    let hidden = tape.shape(cell.wh)[1];
    let fs = tape.shape(first).to_vec();
    let shape = [hidden, fs[1], fs[2]];
    let mut state = CellState::zeros(tape, shape);
    let mut guidance = tape.constant(Tensor::zeros(shape.to_vec()));
    let mut out = RefineOutput {
        absolute: Vec::with_capacity(features.len()),
        outputs: Vec::with_capacity(features.len()),
        attention: Vec::with_capacity(features.len()),
    };
    for &x in features {
        let selected = guided_memory(tape, guidance, memory)?;
        let observed = guided_observation(tape, guidance, x)?;
        let fused = fuse_features(tape, selected.value, observed, fusion)?;
        let (o, next) = refine_step(tape, fused, state, cell)?;
        out.absolute.push(se3_head(tape, o, head)?);
        out.outputs.push(o);
        out.attention.push(selected);
        guidance = o;
        state = next;
    }
    Ok(out)
}
