//! TUM RGB-D trajectory files: `timestamp tx ty tz qx qy qz qw` per line,
//! `#` starts a comment line.

use std::fmt::Write as _;

use log::warn;
use nalgebra::Vector3;

use super::{Trajectory, ROTATION_WARN_TOL};
use crate::error::{Error, Result};
use crate::geometry::{PoseSE3, Quaternion};

fn parse_error(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

pub fn parse_tum_trajectory(text: &str) -> Result<Trajectory> {
    let mut stamps = Vec::new();
    let mut poses = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let v = trimmed
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| parse_error(line_no, format!("`{tok}` is not a finite number")))
            })
            .collect::<Result<Vec<_>>>()?;
        if v.len() != 8 {
            return Err(parse_error(
                line_no,
                format!("expected 8 values, found {}", v.len()),
            ));
        }
        let stamp = v[0];
        if let Some(&last) = stamps.last() {
            if stamp <= last {
                return Err(parse_error(
                    line_no,
                    format!("timestamp {stamp} does not follow {last}"),
                ));
            }
        }
        let norm = (v[4] * v[4] + v[5] * v[5] + v[6] * v[6] + v[7] * v[7]).sqrt();
        if (norm - 1.0).abs() > ROTATION_WARN_TOL {
            warn!("line {line_no}: quaternion norm {norm:.6}; normalizing");
        }
        let q = Quaternion::new(v[4], v[5], v[6], v[7]).map_err(|e| parse_error(line_no, e.to_string()))?;
        stamps.push(stamp);
        poses.push(PoseSE3::from_orthonormal(
            q.to_matrix(),
            Vector3::new(v[1], v[2], v[3]),
        ));
    }
    Trajectory::new(stamps, poses)
}

pub fn write_tum_trajectory(trajectory: &Trajectory) -> Result<String> {
    let mut out = String::from("# timestamp tx ty tz qx qy qz qw\n");
    for (s, p) in trajectory.stamps().iter().zip(trajectory.poses()) {
        let q = Quaternion::from_matrix(p.rotation())?;
        let t = p.translation();
        let vals = [*s, t.x, t.y, t.z, q.x, q.y, q.z, q.w];
        for (j, v) in vals.iter().enumerate() {
            if j > 0 {
                out.push(' ');
            }
            write!(out, "{:.16e}", v + 0.0).expect("writing to a String");
        }
        out.push('\n');
    }
    Ok(out)
}
