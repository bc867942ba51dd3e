//! Tracking path: pairwise encoder, convolutional LSTM and SE(3) head.

use memvo_tensor::{Tape, Tensor, Var};

use crate::error::{invalid, Result};
use crate::model::{Conv, ConvLstm, EncoderConfig, Se3Head};

/// Recurrent state `(H, C)` of a convolutional LSTM.
#[derive(Debug, Clone, Copy)]
pub struct CellState {
    pub hidden: Var,
    pub cell: Var,
}

impl CellState {
    pub fn zeros(tape: &mut Tape, shape: [usize; 3]) -> Self {
        Self {
            hidden: tape.constant(Tensor::zeros(shape.to_vec())),
            cell: tape.constant(Tensor::zeros(shape.to_vec())),
        }
    }
}

/// Stack `I_{t−1}` and `I_t` along channels and run the nine encoder layers,
/// each followed by a ReLU.
pub fn encode_pair(
    tape: &mut Tape,
    prev: Var,
    cur: Var,
    cfg: &EncoderConfig,
    layers: &[Conv<Var>],
) -> Result<Var> {
    let expected = [3, cfg.height, cfg.width];
    for v in [prev, cur] {
        if tape.shape(v) != expected {
            return Err(invalid(format!(
                "encoder expects frames of shape {expected:?}, got {:?}",
                tape.shape(v)
            )));
        }
    }
    if layers.len() != cfg.layers.len() {
        return Err(invalid("encoder parameter count does not match its config"));
    }
    let mut x = tape.concat(&[prev, cur])?;
    for (spec, conv) in cfg.layers.iter().zip(layers) {
        let y = tape.conv2d(x, conv.weight, conv.bias, spec.stride, spec.padding)?;
        x = tape.relu(y);
    }
    Ok(x)
}

/// One ConvLSTM step without peepholes:
///
/// ```text
/// [i f o g] = W_x * X + W_h * H + b
/// C' = σ(f) ⊙ C + σ(i) ⊙ tanh(g)
/// H' = σ(o) ⊙ tanh(C')
/// ```
///
/// Returns `(O, state')` with `O = H'`.
pub fn convlstm_step(
    tape: &mut Tape,
    x: Var,
    state: CellState,
    params: &ConvLstm<Var>,
) -> Result<(Var, CellState)> {
    let hs = tape.shape(state.hidden).to_vec();
    let xs = tape.shape(x).to_vec();
    if xs.len() != 3 || hs.len() != 3 || xs[1..] != hs[1..] {
        return Err(invalid(format!(
            "input {xs:?} and hidden state {hs:?} must share spatial extents"
        )));
    }
    if tape.shape(state.cell) != hs.as_slice() {
        return Err(invalid("cell and hidden state shapes differ"));
    }
    let wx = tape.shape(params.wx).to_vec();
    let hidden = hs[0];
    if wx.len() != 4 || wx[0] != 4 * hidden {
        return Err(invalid(format!(
            "gate kernel {wx:?} does not produce 4×{hidden} channels"
        )));
    }
    let pad = wx[2] / 2;
    let zero_bias = tape.constant(Tensor::zeros(vec![4 * hidden]));
    let zx = tape.conv2d(x, params.wx, params.bias, 1, pad)?;
    let zh = tape.conv2d(state.hidden, params.wh, zero_bias, 1, pad)?;
    let z = tape.add(zx, zh)?;

    let gate = |tape: &mut Tape, k: usize| tape.slice(z, k * hidden, hidden);
    let (zi, zf, zo, zg) = (gate(tape, 0)?, gate(tape, 1)?, gate(tape, 2)?, gate(tape, 3)?);
    let i = tape.sigmoid(zi);
    let f = tape.sigmoid(zf);
    let o = tape.sigmoid(zo);
    let g = tape.tanh(zg);

    let keep = tape.mul(f, state.cell)?;
    let write = tape.mul(i, g)?;
    let cell = tape.add(keep, write)?;
    let squashed = tape.tanh(cell);
    let hidden = tape.mul(o, squashed)?;
    Ok((hidden, CellState { hidden, cell }))
}

/// Global average pooling followed by a linear map to
/// `[px, py, pz, φx, φy, φz]`.
pub fn se3_head(tape: &mut Tape, output: Var, head: &Se3Head<Var>) -> Result<Var> {
    let pooled = tape.global_avg_pool(output)?;
    Ok(tape.linear(head.weight, pooled, head.bias)?)
}

/// Per-step results of the tracking recurrence over `N+1` frames.
#[derive(Debug, Clone)]
pub struct TrackOutput {
    /// Encoded pair features `X_1..X_N`.
    pub features: Vec<Var>,
    /// Recurrent outputs `O_1..O_N`.
    pub outputs: Vec<Var>,
    /// Hidden states `H_1..H_N` (identical values to `outputs`).
    pub hidden: Vec<Var>,
    /// Relative 6-DoF poses, one `[6]` vector per step.
    pub relative: Vec<Var>,
}

/// Run encoder → ConvLSTM → SE(3) head over consecutive frame pairs,
/// starting from a zero state.
pub fn track_sequence(
    tape: &mut Tape,
    frames: &[Var],
    cfg: &EncoderConfig,
    encoder: &[Conv<Var>],
    cell: &ConvLstm<Var>,
    head: &Se3Head<Var>,
) -> Result<TrackOutput> {
    if frames.len() < 2 {
        return Err(invalid("tracking needs at least two frames"));
    }
    let wh = tape.shape(cell.wh).to_vec();
    let [_, h, w] = cfg.output_shape();
    let mut state = CellState::zeros(tape, [wh[1], h, w]);
    let mut out = TrackOutput {
        features: Vec::new(),
        outputs: Vec::new(),
        hidden: Vec::new(),
        relative: Vec::new(),
    };
    for pair in frames.windows(2) {
        let x = encode_pair(tape, pair[0], pair[1], cfg, encoder)?;
        let (o, next) = convlstm_step(tape, x, state, cell)?;
        let pose = se3_head(tape, o, head)?;
        out.features.push(x);
        out.outputs.push(o);
        out.hidden.push(next.hidden);
        out.relative.push(pose);
        state = next;
    }
    Ok(out)
}
