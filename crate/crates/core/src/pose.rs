//! Rigid transforms and their conversions.
//!
//! A [`Pose`] is an element of SE(3) stored as a unit quaternion plus a translation.
//! Device poses arrive on the wire as column-major 4×4 matrices; the helpers here
//! validate and convert them.

use nalgebra::{Isometry3, Matrix3, Rotation3, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Real;

pub type Pose<T> = Isometry3<T>;

/// Orthonormality tolerance for rotation blocks read from matrices.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PoseError {
    #[error("pose contains non-finite values")]
    NonFinite,
    #[error("rotation block is not orthonormal (deviation {0:e})")]
    NotOrthonormal(f64),
    #[error("rotation block has determinant {0}, expected +1")]
    Reflection(f64),
    #[error("homogeneous bottom row is not (0, 0, 0, 1)")]
    BadBottomRow,
}

pub fn pose_is_finite<T: Real>(pose: &Pose<T>) -> bool {
    pose.translation.vector.iter().all(|v| v.is_finite())
        && pose.rotation.coords.iter().all(|v| v.is_finite())
}

/// Builds a pose from a column-major 4×4 homogeneous matrix.
pub fn pose_from_column_major<T: Real>(m: &[T; 16], tolerance: T) -> Result<Pose<T>, PoseError> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(PoseError::NonFinite);
    }
    if m[3] != T::zero() || m[7] != T::zero() || m[11] != T::zero() || m[15] != T::one() {
        return Err(PoseError::BadBottomRow);
    }
    let rot = Matrix3::new(m[0], m[4], m[8], m[1], m[5], m[9], m[2], m[6], m[10]);
    rotation_from_matrix(&rot, tolerance).map(|r| {
        Pose::from_parts(Translation3::new(m[12], m[13], m[14]), r)
    })
}

/// Writes a pose as a column-major 4×4 homogeneous matrix.
pub fn pose_to_column_major<T: Real>(pose: &Pose<T>) -> [T; 16] {
    let h = pose.to_homogeneous();
    let mut out = [T::zero(); 16];
    for (i, v) in h.as_slice().iter().enumerate() {
        out[i] = *v;
    }
    out
}

pub fn rotation_from_matrix<T: Real>(m: &Matrix3<T>, tolerance: T) -> Result<UnitQuaternion<T>, PoseError> {
    let dev = (m.transpose() * m - Matrix3::identity()).abs().max();
    if dev > tolerance {
        return Err(PoseError::NotOrthonormal(dev.as_f64()));
    }
    let det = m.determinant();
    if (det - T::one()).abs() > tolerance {
        return Err(PoseError::Reflection(det.as_f64()));
    }
    Ok(UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(*m)))
}

/// Axis-angle vector of `target · currentᵀ`: the rotation taking `current` onto `target`, in the base frame.
pub fn orientation_error<T: Real>(target: &UnitQuaternion<T>, current: &UnitQuaternion<T>) -> Vector3<T> {
    (target * current.inverse()).scaled_axis()
}

/// Rotation angle between two orientations, in [0, π].
pub fn angle_between<T: Real>(a: &UnitQuaternion<T>, b: &UnitQuaternion<T>) -> T {
    a.angle_to(b)
}

/// Linear interpolation of translation with spherical interpolation of rotation.
pub fn interpolate<T: Real>(a: &Pose<T>, b: &Pose<T>, s: T) -> Pose<T> {
    let t = a.translation.vector.lerp(&b.translation.vector, s);
    let r = a
        .rotation
        .try_slerp(&b.rotation, s, T::default_epsilon())
        .unwrap_or(a.rotation);
    Pose::from_parts(Translation3::from(t), r)
}

pub fn pose_cast_f64<T: Real>(pose: &Pose<T>) -> Pose<f64> {
    let t = pose.translation.vector.map(|v| v.as_f64());
    let q = pose.rotation.coords.map(|v| v.as_f64());
    Pose::from_parts(
        Translation3::from(t),
        UnitQuaternion::new_unchecked(nalgebra::Quaternion::new(q[3], q[0], q[1], q[2])),
    )
}

/// Serializable pose: translation and quaternion `[x, y, z, w]`, stored exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseRecord {
    pub translation: [f64; 3],
    pub quaternion: [f64; 4],
}

impl Default for PoseRecord {
    /// The identity pose.
    fn default() -> Self {
        PoseRecord { translation: [0.0; 3], quaternion: [0.0, 0.0, 0.0, 1.0] }
    }
}

impl From<&Pose<f64>> for PoseRecord {
    fn from(p: &Pose<f64>) -> Self {
        let t = p.translation.vector;
        let q = p.rotation.coords;
        PoseRecord {
            translation: [t.x, t.y, t.z],
            quaternion: [q[0], q[1], q[2], q[3]],
        }
    }
}

impl From<&PoseRecord> for Pose<f64> {
    fn from(r: &PoseRecord) -> Self {
        let [x, y, z, w] = r.quaternion;
        Pose::from_parts(
            Translation3::new(r.translation[0], r.translation[1], r.translation[2]),
            UnitQuaternion::new_unchecked(nalgebra::Quaternion::new(w, x, y, z)),
        )
    }
}
