//! Rigid-body pose algebra.
//!
//! Conventions used throughout the crate:
//!
//! * Euler angles `(φx, φy, φz)` compose as `R = Rz(φz) · Ry(φy) · Rx(φx)`.
//! * A relative [`Pose6DoF`] between frames `t−1` and `t` is the pose of
//!   frame `t` expressed in frame `t−1`, so trajectories integrate by
//!   right-multiplication: `P_t = P_{t−1} · T(rel_t)`.
//! * Quaternions are stored `(x, y, z, w)`, matching the TUM file layout.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Matrix4, Vector3};

use crate::error::{Error, Result};

/// Tolerance on `‖RᵀR − I‖∞` accepted from external rotation matrices.
pub const ORTHONORMAL_TOL: f64 = 1e-6;

/// `|cos φy|` below this is treated as gimbal lock.
const GIMBAL_EPS: f64 = 1e-7;

/// Wrap an angle into `(−π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

pub fn rot_x(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

pub fn rot_y(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

pub fn rot_z(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

pub fn euler_to_matrix(euler: &Vector3<f64>) -> Matrix3<f64> {
    rot_z(euler.z) * rot_y(euler.y) * rot_x(euler.x)
}

/// `‖RᵀR − I‖∞`, the largest absolute entry.
pub fn orthonormality_error(r: &Matrix3<f64>) -> f64 {
    (r.transpose() * r - Matrix3::identity()).abs().max()
}

/// Inverse of [`euler_to_matrix`]. Angles come back in `(−π, π]`; under
/// gimbal lock the representative with `φx = 0` is returned.
pub fn matrix_to_euler(r: &Matrix3<f64>) -> Result<Vector3<f64>> {
    let deviation = orthonormality_error(r);
    if !(deviation < ORTHONORMAL_TOL) || r.determinant() < 0.0 {
        return Err(Error::NotOrthonormal { deviation });
    }
    let cy = r[(0, 0)].hypot(r[(1, 0)]);
    let y = (-r[(2, 0)]).atan2(cy);
    let (x, z) = if cy < GIMBAL_EPS {
        (0.0, (-r[(0, 1)]).atan2(r[(1, 1)]))
    } else {
        (r[(2, 1)].atan2(r[(2, 2)]), r[(1, 0)].atan2(r[(0, 0)]))
    };
    Ok(Vector3::new(wrap_angle(x), wrap_angle(y), wrap_angle(z)))
}

/// Nearest rotation in the Frobenius sense (polar decomposition).
pub fn orthonormalize(r: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = r.svd(true, true);
    let (u, v_t) = (svd.u.expect("u"), svd.v_t.expect("v_t"));
    let mut fix = Matrix3::identity();
    if (u * v_t).determinant() < 0.0 {
        fix[(2, 2)] = -1.0;
    }
    u * fix * v_t
}

/// Rotation angle in `[0, π]`, well conditioned near zero.
pub fn rotation_angle(r: &Matrix3<f64>) -> f64 {
    let s = Vector3::new(
        r[(2, 1)] - r[(1, 2)],
        r[(0, 2)] - r[(2, 0)],
        r[(1, 0)] - r[(0, 1)],
    )
    .norm()
        * 0.5;
    let c = (r.trace() - 1.0) * 0.5;
    s.atan2(c)
}

/// Translation (meters) plus Euler rotation (radians).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Pose6DoF {
    pub translation: Vector3<f64>,
    pub rotation: Vector3<f64>,
}

impl Pose6DoF {
    pub fn new(translation: Vector3<f64>, rotation: Vector3<f64>) -> Self {
        Self {
            translation,
            rotation,
        }
    }

    pub fn identity() -> Self {
        Self::default()
    }

    /// `[px, py, pz, φx, φy, φz]`, the network output layout.
    pub fn from_array(v: [f64; 6]) -> Self {
        Self::new(Vector3::new(v[0], v[1], v[2]), Vector3::new(v[3], v[4], v[5]))
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        let arr: [f64; 6] = v
            .try_into()
            .map_err(|_| Error::InvalidInput(format!("pose needs 6 values, got {}", v.len())))?;
        Ok(Self::from_array(arr))
    }

    pub fn to_array(&self) -> [f64; 6] {
        let (t, r) = (&self.translation, &self.rotation);
        [t.x, t.y, t.z, r.x, r.y, r.z]
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|x| x.is_finite())
    }

    /// Same pose with every Euler angle wrapped into `(−π, π]`.
    pub fn normalized(&self) -> Self {
        Self::new(self.translation, self.rotation.map(wrap_angle))
    }

    pub fn to_se3(&self) -> PoseSE3 {
        PoseSE3 {
            rotation: euler_to_matrix(&self.rotation),
            translation: self.translation,
        }
    }
}

/// Rigid transform `[R | t]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseSE3 {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl Default for PoseSE3 {
    fn default() -> Self {
        Self::identity()
    }
}

impl PoseSE3 {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Build from a rotation that is orthonormal to within
    /// [`ORTHONORMAL_TOL`]; the block is snapped onto SO(3).
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let deviation = orthonormality_error(&rotation);
        if !(deviation < ORTHONORMAL_TOL) || rotation.determinant() <= 0.0 {
            return Err(Error::NotOrthonormal { deviation });
        }
        Ok(Self {
            rotation: orthonormalize(&rotation),
            translation,
        })
    }

    /// Like [`PoseSE3::new`] but accepts any rotation with positive
    /// determinant, projecting it onto SO(3).
    pub fn new_projected(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        if !rotation.iter().all(|x| x.is_finite()) || rotation.determinant() <= 0.0 {
            return Err(Error::NotOrthonormal {
                deviation: orthonormality_error(&rotation),
            });
        }
        Ok(Self {
            rotation: orthonormalize(&rotation),
            translation,
        })
    }

    /// Store a rotation the caller has already verified to be orthonormal,
    /// without re-projecting it.
    pub(crate) fn from_orthonormal(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: t,
        }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn to_matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// `self · other`, with the rotation block re-orthonormalized.
    pub fn compose(&self, other: &PoseSE3) -> PoseSE3 {
        PoseSE3 {
            rotation: orthonormalize(&(self.rotation * other.rotation)),
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> PoseSE3 {
        let rt = self.rotation.transpose();
        PoseSE3 {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// `self⁻¹ · other`: `other` expressed in the frame of `self`.
    pub fn between(&self, other: &PoseSE3) -> PoseSE3 {
        self.inverse().compose(other)
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn to_pose6(&self) -> Pose6DoF {
        let euler = matrix_to_euler(&self.rotation).expect("PoseSE3 holds a rotation");
        Pose6DoF::new(self.translation, euler)
    }

    pub fn rotation_angle(&self) -> f64 {
        rotation_angle(&self.rotation)
    }
}

/// Chain relative poses onto `origin`; the result starts with `origin` and
/// has `rel.len() + 1` entries.
pub fn integrate_relative(rel: &[Pose6DoF], origin: &PoseSE3) -> Vec<PoseSE3> {
    let mut out = Vec::with_capacity(rel.len() + 1);
    out.push(*origin);
    let mut current = *origin;
    for r in rel {
        current = current.compose(&r.to_se3());
        out.push(current);
    }
    out
}

/// Consecutive relative poses `P_{i−1}⁻¹ · P_i` of a trajectory.
pub fn relative_poses(trajectory: &[PoseSE3]) -> Vec<Pose6DoF> {
    trajectory
        .windows(2)
        .map(|w| w[0].between(&w[1]).to_pose6())
        .collect()
}

/// Unit quaternion `(x, y, z, w)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quaternion {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub w: f64,
}

impl Quaternion {
    /// Normalizes the input; a zero-norm quaternion is rejected.
    pub fn new(x: f64, y: f64, z: f64, w: f64) -> Result<Self> {
        let n = (x * x + y * y + z * z + w * w).sqrt();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::InvalidInput(format!(
                "quaternion ({x}, {y}, {z}, {w}) cannot be normalized"
            )));
        }
        Ok(Self {
            x: x / n,
            y: y / n,
            z: z / n,
            w: w / n,
        })
    }

    pub fn identity() -> Self {
        Self {
            x: 0.0,
            y: 0.0,
            z: 0.0,
            w: 1.0,
        }
    }

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z + self.w * self.w).sqrt()
    }

    pub fn to_matrix(&self) -> Matrix3<f64> {
        let Quaternion { x, y, z, w } = *self;
        Matrix3::new(
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - z * w),
            2.0 * (x * z + y * w),
            2.0 * (x * y + z * w),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - x * w),
            2.0 * (x * z - y * w),
            2.0 * (y * z + x * w),
            1.0 - 2.0 * (x * x + y * y),
        )
    }

    /// Shepperd's method; the returned sign has `w ≥ 0` where possible.
    pub fn from_matrix(r: &Matrix3<f64>) -> Result<Self> {
        let deviation = orthonormality_error(r);
        if !(deviation < ORTHONORMAL_TOL) {
            return Err(Error::NotOrthonormal { deviation });
        }
        let tr = r.trace();
        let (x, y, z, w);
        if tr > 0.0 {
            let s = (tr + 1.0).sqrt() * 2.0;
            w = 0.25 * s;
            x = (r[(2, 1)] - r[(1, 2)]) / s;
            y = (r[(0, 2)] - r[(2, 0)]) / s;
            z = (r[(1, 0)] - r[(0, 1)]) / s;
        } else if r[(0, 0)] > r[(1, 1)] && r[(0, 0)] > r[(2, 2)] {
            let s = (1.0 + r[(0, 0)] - r[(1, 1)] - r[(2, 2)]).sqrt() * 2.0;
            w = (r[(2, 1)] - r[(1, 2)]) / s;
            x = 0.25 * s;
            y = (r[(0, 1)] + r[(1, 0)]) / s;
            z = (r[(0, 2)] + r[(2, 0)]) / s;
        } else if r[(1, 1)] > r[(2, 2)] {
            let s = (1.0 + r[(1, 1)] - r[(0, 0)] - r[(2, 2)]).sqrt() * 2.0;
            w = (r[(0, 2)] - r[(2, 0)]) / s;
            x = (r[(0, 1)] + r[(1, 0)]) / s;
            y = 0.25 * s;
            z = (r[(1, 2)] + r[(2, 1)]) / s;
        } else {
            let s = (1.0 + r[(2, 2)] - r[(0, 0)] - r[(1, 1)]).sqrt() * 2.0;
            w = (r[(1, 0)] - r[(0, 1)]) / s;
            x = (r[(0, 2)] + r[(2, 0)]) / s;
            y = (r[(1, 2)] + r[(2, 1)]) / s;
            z = 0.25 * s;
        }
        let q = Self::new(x, y, z, w)?;
        Ok(if q.w < 0.0 {
            Self {
                x: -q.x,
                y: -q.y,
                z: -q.z,
                w: -q.w,
            }
        } else {
            q
        })
    }
}

/// `p ↦ s·R·p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Similarity {
    pub scale: f64,
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Similarity {
    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.scale * (self.rotation * p) + self.translation
    }

    /// Apply to a camera pose: the position is transformed as a point and the
    /// orientation is rotated.
    pub fn apply_pose(&self, pose: &PoseSE3) -> PoseSE3 {
        PoseSE3 {
            rotation: orthonormalize(&(self.rotation * pose.rotation())),
            translation: self.apply(pose.translation()),
        }
    }
}

/// Least-squares similarity (or rigid, when `with_scale` is false) mapping
/// `est` onto `gt`, minimizing `Σ‖gt_i − (s·R·est_i + t)‖²`.
pub fn umeyama_align(est: &[Vector3<f64>], gt: &[Vector3<f64>], with_scale: bool) -> Result<Similarity> {
    if est.len() != gt.len() {
        return Err(Error::InvalidInput(format!(
            "alignment needs equal point counts, got {} and {}",
            est.len(),
            gt.len()
        )));
    }
    if est.is_empty() {
        return Err(Error::Degenerate("no points".into()));
    }
    let n = est.len() as f64;
    let mean_e = est.iter().sum::<Vector3<f64>>() / n;
    let mean_g = gt.iter().sum::<Vector3<f64>>() / n;

    let var_e = est.iter().map(|e| (e - mean_e).norm_squared()).sum::<f64>() / n;
    let var_g = gt.iter().map(|g| (g - mean_g).norm_squared()).sum::<f64>() / n;
    if var_e == 0.0 || var_g == 0.0 {
        return Err(Error::Degenerate("all points coincide".into()));
    }

    let mut cov = Matrix3::zeros();
    for (e, g) in est.iter().zip(gt) {
        cov += (g - mean_g) * (e - mean_e).transpose();
    }
    cov /= n;

    let svd = cov.svd(true, true);
    let (u, v_t) = (svd.u.expect("u"), svd.v_t.expect("v_t"));
    let mut fix = Matrix3::identity();
    if u.determinant() * v_t.determinant() < 0.0 {
        fix[(2, 2)] = -1.0;
    }
    let rotation = u * fix * v_t;
    let scale = if with_scale {
        let d = svd.singular_values;
        (d[0] * fix[(0, 0)] + d[1] * fix[(1, 1)] + d[2] * fix[(2, 2)]) / var_e
    } else {
        1.0
    };
    let translation = mean_g - scale * (rotation * mean_e);
    Ok(Similarity {
        scale,
        rotation,
        translation,
    })
}
