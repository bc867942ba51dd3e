//! KITTI odometry pose files: one line per frame holding the top three rows
//! of the 4×4 camera-to-world matrix, row-major, whitespace separated.

use std::fmt::Write as _;
use std::path::Path;

use log::warn;
use nalgebra::{Matrix3, Vector3};

use super::{Trajectory, ROTATION_WARN_TOL};
use crate::error::{io_err, Error, Result};
use crate::geometry::{orthonormality_error, PoseSE3};

/// Rotations closer than this to SO(3) are kept bit-for-bit.
const EXACT_TOL: f64 = 1e-12;

fn parse_error(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

/// Parse a KITTI pose file. Blank lines are ignored; every other line must
/// hold exactly 12 finite numbers.
pub fn parse_kitti_poses(text: &str) -> Result<Trajectory> {
    let mut poses = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let values = line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| parse_error(line_no, format!("`{tok}` is not a finite number")))
            })
            .collect::<Result<Vec<_>>>()?;
        if values.len() != 12 {
            return Err(parse_error(
                line_no,
                format!("expected 12 values, found {}", values.len()),
            ));
        }
        let rotation = Matrix3::new(
            values[0], values[1], values[2], values[4], values[5], values[6], values[8], values[9],
            values[10],
        );
        let translation = Vector3::new(values[3], values[7], values[11]);
        let deviation = orthonormality_error(&rotation);
        let pose = if deviation < EXACT_TOL && rotation.determinant() > 0.0 {
            PoseSE3::from_orthonormal(rotation, translation)
        } else {
            if deviation > ROTATION_WARN_TOL {
                warn!("line {line_no}: rotation deviates from orthonormal by {deviation:.3e}; projecting");
            }
            PoseSE3::new_projected(rotation, translation)
                .map_err(|_| parse_error(line_no, "rotation block is not a proper rotation"))?
        };
        poses.push(pose);
    }
    Ok(Trajectory::from_poses(poses))
}

/// Format poses with 17 significant digits, enough for an exact round trip.
pub fn write_kitti_poses(poses: &[PoseSE3]) -> String {
    let mut out = String::new();
    for p in poses {
        let (r, t) = (p.rotation(), p.translation());
        let row = [
            r[(0, 0)],
            r[(0, 1)],
            r[(0, 2)],
            t.x,
            r[(1, 0)],
            r[(1, 1)],
            r[(1, 2)],
            t.y,
            r[(2, 0)],
            r[(2, 1)],
            r[(2, 2)],
            t.z,
        ];
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                out.push(' ');
            }
            // `+ 0.0` folds negative zero so identical poses print identically.
            write!(out, "{:.16e}", v + 0.0).expect("writing to a String");
        }
        out.push('\n');
    }
    out
}

pub fn read_kitti_file(path: &Path) -> Result<Trajectory> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    parse_kitti_poses(&text)
}

pub fn write_kitti_file(path: &Path, poses: &[PoseSE3]) -> Result<()> {
    std::fs::write(path, write_kitti_poses(poses)).map_err(io_err(path))
}
