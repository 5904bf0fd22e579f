//! Real-time feasibility checking for robot-free demonstrations.
//!
//! Each tracked end-effector pose is checked against a target robot model for
//! reachability, joint-rate admissibility, self-collision and manipulability, and the
//! outcome is reduced to a debounced feasible / warning / infeasible state. Sessions are
//! recorded as multi-channel episodes and can be replayed on a simulated arm under
//! Cartesian velocity limits.
//!
//! The kinematics, collision and replay math is generic over [`Real`]; the aliases
//! below fix the scalar for the common cases.

pub mod collision;
pub mod demosim;
pub mod guidance;
pub mod kinematics;
pub mod pose;
pub mod profiling;
pub mod recording;
pub mod replay;
pub mod robots;
mod scalar;

pub use pose::{Pose, PoseRecord};
pub use scalar::Real;

pub type RobotModel64 = kinematics::RobotModel<f64>;
pub type RobotModel32 = kinematics::RobotModel<f32>;
pub type Pose64 = Pose<f64>;
pub type Pose32 = Pose<f32>;
pub type IkParams64 = kinematics::IkParams<f64>;
pub type IkParams32 = kinematics::IkParams<f32>;
pub type CollisionSet64 = collision::CollisionSet<f64>;
pub type CollisionSet32 = collision::CollisionSet<f32>;
pub type Capsule64 = collision::Capsule<f64>;
pub type FrameRemap64 = replay::FrameRemap<f64>;
pub type ReplayPlan64 = replay::ReplayPlan<f64>;
pub type SimulatedRobot64 = replay::SimulatedRobot<f64>;
