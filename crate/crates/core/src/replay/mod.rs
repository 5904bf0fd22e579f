//! Episode replay: first-frame-relative retargeting onto the robot's current TCP, a
//! tracker→robot axis remap, resampling onto a 100 Hz grid under Cartesian velocity
//! limits, and execution on a simulated arm.

mod plan;
mod retarget;
mod sim;

use thiserror::Error;

use crate::kinematics::KinematicsError;

pub use plan::{resample_and_clamp, resample_and_clamp_with_gripper, ReplayCommand, ReplayLimits, ReplayPlan};
pub use retarget::{retarget, FrameRemap};
pub use sim::{execute, execute_with, ExecutionReport, SimulatedRobot, StepOutcome, TickRecord};

mod source;
pub use source::{
    episode_source, plan_episode, recorded_remap, remap_metadata, ReplaySource, CALIBRATION_KEY, REMAP_KEY,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReplayError {
    #[error("episode has no poses to replay")]
    EmptyEpisode,
    #[error("source timestamps must be finite and non-decreasing")]
    DegenerateTimestamps,
    #[error("speed scale must be finite and positive, got {0}")]
    InvalidSpeedScale(f64),
    #[error("remap must be a proper rotation: {0}")]
    InvalidRemap(String),
    #[error("{0} poses but {1} timestamps")]
    LengthMismatch(usize, usize),
    #[error("episode: {0}")]
    Episode(String),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
}
