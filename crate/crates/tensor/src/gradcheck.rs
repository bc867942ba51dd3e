//! Central finite-difference checks against tape gradients.

use crate::error::Result;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Error measure used by every gradient check in the workspace:
/// `|analytic − numeric| / max(1, |analytic|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(1.0)
}

/// Maximum relative error between the tape gradient of `f` at `x` and a
/// central difference with step `h`, over every coordinate of `x`.
///
/// `f` receives a fresh tape and the leaf holding `x`, and must return a
/// one-element result.
pub fn finite_diff_check<F>(f: F, x: &Tensor, h: f64) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    let coords: Vec<usize> = (0..x.numel()).collect();
    finite_diff_check_at(f, x, h, &coords)
}

/// Like [`finite_diff_check`] but only over the listed coordinates.
pub fn finite_diff_check_at<F>(f: F, x: &Tensor, h: f64, coords: &[usize]) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    let mut tape = Tape::new();
    let leaf = tape.leaf(x.clone());
    let root = f(&mut tape, leaf)?;
    tape.backward(root)?;
    let analytic = tape.grad(leaf).expect("leaf gradient").clone();

    let eval = |point: Tensor| -> Result<f64> {
        let mut t = Tape::new();
        let v = t.constant(point);
        let r = f(&mut t, v)?;
        Ok(t.value(r).item())
    };

    let mut worst = 0.0f64;
    for &i in coords {
        let plus = eval(x.perturbed(i, h))?;
        let minus = eval(x.perturbed(i, -h))?;
        let numeric = (plus - minus) / (2.0 * h);
        worst = worst.max(relative_error(analytic.data()[i], numeric));
    }
    Ok(worst)
}
