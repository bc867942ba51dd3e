use memvo_tensor::{Tape, Tensor, Var};

use crate::error::{invalid, Result};
use crate::geometry::Pose6DoF;

/// `‖p̂ − p‖₂ + k·‖φ̂ − φ‖₂` for one `[6]` prediction.
fn pose_error(tape: &mut Tape, pred: Var, target: &Pose6DoF, k: f64) -> Result<Var> {
    let t = target.translation;
    let r = target.rotation;
    let gt_t = tape.constant(Tensor::vector(vec![t.x, t.y, t.z]));
    let gt_r = tape.constant(Tensor::vector(vec![r.x, r.y, r.z]));
    let pt = tape.slice(pred, 0, 3)?;
    let pr = tape.slice(pred, 3, 3)?;
    let dt = tape.sub(pt, gt_t)?;
    let dr = tape.sub(pr, gt_r)?;
    let et = tape.norm(dt);
    let er = tape.norm(dr);
    let er = tape.scale(er, k);
    Ok(tape.add(et, er)?)
}

fn check_lengths(pred: usize, gt: usize, k: f64) -> Result<()> {
    if pred != gt {
        return Err(invalid(format!(
            "loss needs equal lengths, got {pred} predictions and {gt} targets"
        )));
    }
    if pred == 0 {
        return Err(invalid("loss over an empty sequence"));
    }
    if !(k > 0.0) {
        return Err(invalid("rotation weight k must be positive"));
    }
    Ok(())
}

/// Mean relative-pose error: `(1/t) Σ_i (‖p̂_i − p_i‖ + k‖φ̂_i − φ_i‖)`.
pub fn loss_local(tape: &mut Tape, pred: &[Var], gt: &[Pose6DoF], k: f64) -> Result<Var> {
    check_lengths(pred.len(), gt.len(), k)?;
    let terms = pred
        .iter()
        .zip(gt)
        .map(|(&p, g)| pose_error(tape, p, g, k))
        .collect::<Result<Vec<_>>>()?;
    let sum = tape.add_all(&terms)?;
    Ok(tape.scale(sum, 1.0 / pred.len() as f64))
}

/// Index-weighted absolute-pose error: `Σ_i (1/i)(‖p̂_{0,i} − p_{0,i}‖ + k‖φ̂_{0,i} − φ_{0,i}‖)`.
pub fn loss_global(tape: &mut Tape, pred: &[Var], gt: &[Pose6DoF], k: f64) -> Result<Var> {
    check_lengths(pred.len(), gt.len(), k)?;
    let mut terms = Vec::with_capacity(pred.len());
    for (i, (&p, g)) in pred.iter().zip(gt).enumerate() {
        let e = pose_error(tape, p, g, k)?;
        terms.push(tape.scale(e, 1.0 / (i + 1) as f64));
    }
    Ok(tape.add_all(&terms)?)
}

pub fn loss_total(tape: &mut Tape, local: Var, global: Var) -> Result<Var> {
    Ok(tape.add(local, global)?)
}

fn constants(tape: &mut Tape, poses: &[Pose6DoF]) -> Vec<Var> {
    poses
        .iter()
        .map(|p| tape.constant(Tensor::vector(p.to_array().to_vec())))
        .collect()
}

/// [`loss_local`] on plain values.
pub fn local_value(pred: &[Pose6DoF], gt: &[Pose6DoF], k: f64) -> Result<f64> {
    let mut tape = Tape::new();
    let vars = constants(&mut tape, pred);
    let l = loss_local(&mut tape, &vars, gt, k)?;
    Ok(tape.value(l).item())
}

/// [`loss_global`] on plain values.
pub fn global_value(pred: &[Pose6DoF], gt: &[Pose6DoF], k: f64) -> Result<f64> {
    let mut tape = Tape::new();
    let vars = constants(&mut tape, pred);
    let l = loss_global(&mut tape, &vars, gt, k)?;
    Ok(tape.value(l).item())
}
