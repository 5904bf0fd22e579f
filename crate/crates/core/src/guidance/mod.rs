//! The per-frame feasibility pipeline: target derivation from tracker frames, IK, FK,
//! self-collision, windowed joint-rate ratio and manipulability, reduced to a debounced
//! three-state output with its feedback cue.

mod debounce;
mod rate;
mod session;
mod state;

use thiserror::Error;

use crate::collision::CollisionError;
use crate::kinematics::KinematicsError;

pub use debounce::Debouncer;
pub use rate::{rate_ratio, RateSmoothing};
pub use session::{
    calibrate, set_base_anchor, BaseAnchor, Calibration, ClutchState, FrameRecord, GuidanceConfig,
    GuidanceOutput, GuidanceSession, GuidanceSnapshot, StageTimings, TrackerFrame,
};
pub use state::{classify, FeasibilityState, Feedback, GhostColor, Haptic, StateThresholds};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GuidanceError {
    #[error("tracking lost: non-finite device pose or timestamp")]
    TrackingLost,
    #[error("session not configured: missing {0}")]
    NotConfigured(&'static str),
    #[error("timestamps must be strictly increasing")]
    DegenerateTimestamps,
    #[error("invalid guidance configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error(transparent)]
    Collision(#[from] CollisionError),
}
