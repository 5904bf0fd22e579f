use nalgebra::{Matrix3, UnitQuaternion};

use super::ReplayError;
use crate::pose::rotation_from_matrix;
use crate::{Pose, Real};

/// Rotation taking tracker axes onto robot-base axes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameRemap<T: Real> {
    rotation: UnitQuaternion<T>,
}

impl<T: Real> FrameRemap<T> {
    pub fn identity() -> Self {
        FrameRemap { rotation: UnitQuaternion::identity() }
    }

    /// Tracker (x right, y up, z toward the user) to robot base (x forward, y left, z up):
    /// x_r = −z_t, y_r = −x_t, z_r = y_t.
    pub fn tracker_to_robot() -> Self {
        let (o, z) = (T::one(), T::zero());
        let m = Matrix3::new(z, z, -o, -o, z, z, z, o, z);
        Self::from_matrix(&m).expect("signed permutation with det +1")
    }

    /// Accepts any proper rotation matrix (orthonormal, det +1).
    pub fn from_matrix(m: &Matrix3<T>) -> Result<Self, ReplayError> {
        rotation_from_matrix(m, T::lit(1e-9).max(T::default_epsilon() * T::lit(64.0)))
            .map(|rotation| FrameRemap { rotation })
            .map_err(|e| ReplayError::InvalidRemap(e.to_string()))
    }

    pub fn from_rotation(rotation: UnitQuaternion<T>) -> Self {
        FrameRemap { rotation }
    }

    pub fn rotation(&self) -> &UnitQuaternion<T> {
        &self.rotation
    }

    pub fn matrix(&self) -> Matrix3<T> {
        self.rotation.to_rotation_matrix().into_inner()
    }

    /// `R2 ∘ R1`: remap by `self` first, then by `outer`.
    pub fn then(&self, outer: &FrameRemap<T>) -> Self {
        FrameRemap { rotation: outer.rotation * self.rotation }
    }

    /// Expresses a relative motion in robot axes: M Δ Mᵀ.
    pub fn apply(&self, delta: &Pose<T>) -> Pose<T> {
        let m = Pose::from_parts(nalgebra::Translation3::identity(), self.rotation);
        m * delta * m.inverse()
    }
}

impl<T: Real> Default for FrameRemap<T> {
    fn default() -> Self {
        Self::tracker_to_robot()
    }
}

/// command_i = anchor ∘ remap(pose_0⁻¹ ∘ pose_i). The first command is the anchor exactly.
pub fn retarget<T: Real>(poses: &[Pose<T>], anchor: &Pose<T>, remap: &FrameRemap<T>) -> Result<Vec<Pose<T>>, ReplayError> {
    let first = poses.first().ok_or(ReplayError::EmptyEpisode)?;
    let inv0 = first.inverse();
    Ok(std::iter::once(*anchor)
        .chain(poses[1..].iter().map(|p| anchor * remap.apply(&(inv0 * p))))
        .collect())
}
