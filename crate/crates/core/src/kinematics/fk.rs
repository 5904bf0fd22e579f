use nalgebra::{DMatrix, DVector, Translation3, UnitQuaternion, Vector3};

use super::model::{JointKind, RobotModel};
use super::KinematicsError;
use crate::{Pose, Real};

/// Result of forward kinematics at one configuration, all in the base frame.
#[derive(Debug, Clone)]
pub struct ChainPoses<T: Real> {
    /// One pose per link, `link_poses[0]` being the base.
    pub link_poses: Vec<Pose<T>>,
    pub ee_pose: Pose<T>,
    /// Origin of each actuated joint frame.
    pub joint_origins: Vec<Vector3<T>>,
    /// Axis of each actuated joint.
    pub joint_axes: Vec<Vector3<T>>,
}

pub fn forward_kinematics<T: Real>(model: &RobotModel<T>, q: &DVector<T>) -> Result<ChainPoses<T>, KinematicsError> {
    model.check_dimension(q)?;
    let mut link_poses = Vec::with_capacity(model.links.len());
    let mut joint_origins = Vec::with_capacity(model.dof);
    let mut joint_axes = Vec::with_capacity(model.dof);
    let mut current = Pose::identity();
    link_poses.push(current);
    let mut k = 0;
    for joint in &model.joints {
        let frame = current * joint.origin;
        current = match joint.kind {
            JointKind::Fixed => frame,
            JointKind::Revolute => {
                joint_origins.push(frame.translation.vector);
                joint_axes.push(frame.rotation * joint.axis.into_inner());
                let motion = UnitQuaternion::from_axis_angle(&joint.axis, q[k]);
                k += 1;
                frame * motion
            }
            JointKind::Prismatic => {
                joint_origins.push(frame.translation.vector);
                joint_axes.push(frame.rotation * joint.axis.into_inner());
                let motion = Translation3::from(joint.axis.into_inner() * q[k]);
                k += 1;
                frame * motion
            }
        };
        link_poses.push(current);
    }
    Ok(ChainPoses { ee_pose: link_poses[model.ee_link], link_poses, joint_origins, joint_axes })
}

/// Geometric Jacobian at the end-effector point: linear rows then angular rows, base frame.
pub fn jacobian<T: Real>(model: &RobotModel<T>, q: &DVector<T>) -> Result<DMatrix<T>, KinematicsError> {
    let fk = forward_kinematics(model, q)?;
    Ok(jacobian_from_poses(model, &fk))
}

pub fn jacobian_from_poses<T: Real>(model: &RobotModel<T>, fk: &ChainPoses<T>) -> DMatrix<T> {
    let p_ee = fk.ee_pose.translation.vector;
    let mut j = DMatrix::zeros(6, model.dof);
    for (col, &ji) in model.actuated_joints().iter().enumerate() {
        let z = fk.joint_axes[col];
        match model.joints[ji].kind {
            JointKind::Prismatic => {
                j.fixed_view_mut::<3, 1>(0, col).copy_from(&z);
            }
            _ => {
                let lin = z.cross(&(p_ee - fk.joint_origins[col]));
                j.fixed_view_mut::<3, 1>(0, col).copy_from(&lin);
                j.fixed_view_mut::<3, 1>(3, col).copy_from(&z);
            }
        }
    }
    j
}
