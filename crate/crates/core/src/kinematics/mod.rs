//! Serial-chain kinematics: URDF loading, forward kinematics, geometric Jacobian,
//! damped-least-squares IK and the manipulability index.

mod fk;
mod ik;
mod manipulability;
mod model;
mod urdf;

use thiserror::Error;

pub use fk::{forward_kinematics, jacobian, jacobian_from_poses, ChainPoses};
pub use ik::{dls_ik, IkParams, IkSolution, NullspaceBias};
pub use manipulability::manipulability;
pub use model::{Joint, JointConfig, JointKind, JointLimits, Link, RobotModel};
pub use urdf::{load_urdf, load_urdf_with, UrdfOptions};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KinematicsError {
    #[error("malformed robot description: {0}")]
    MalformedDocument(String),
    #[error("kinematic tree branches at link {0}")]
    BranchingChain(String),
    #[error("joint {0} lacks finite position or velocity limits")]
    MissingLimits(String),
    #[error("configuration has {got} entries, model has {expected} DoF")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite input")]
    NonFiniteInput,
}
