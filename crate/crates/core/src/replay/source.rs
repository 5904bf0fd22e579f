use super::{resample_and_clamp_with_gripper, FrameRemap, ReplayError, ReplayLimits, ReplayPlan};
use crate::pose::{pose_from_column_major, ROTATION_TOLERANCE};
use crate::recording::{Episode, HARDWARE_TOPIC};
use crate::{Pose, PoseRecord};

/// Episode metadata key holding the device→TCP calibration as a JSON [`PoseRecord`].
pub const CALIBRATION_KEY: &str = "calibration";
/// Episode metadata key holding the tracker→robot remap as a JSON row-major 3×3 matrix.
/// Recorders that already log in robot-aligned axes store the identity here.
pub const REMAP_KEY: &str = "remap";

/// The remap stored with the episode, if any.
pub fn recorded_remap(episode: &Episode) -> Result<Option<FrameRemap<f64>>, ReplayError> {
    let Some(text) = episode.metadata.get(REMAP_KEY) else {
        return Ok(None);
    };
    let rows: [[f64; 3]; 3] = serde_json::from_str(text).map_err(|e| ReplayError::InvalidRemap(e.to_string()))?;
    let m = nalgebra::Matrix3::from_fn(|r, c| rows[r][c]);
    FrameRemap::from_matrix(&m).map(Some)
}

pub fn remap_metadata(remap: &FrameRemap<f64>) -> String {
    let m = remap.matrix();
    let rows: [[f64; 3]; 3] = std::array::from_fn(|r| std::array::from_fn(|c| m[(r, c)]));
    serde_json::to_string(&rows).expect("matrix serializes")
}

/// Replayable view of an episode: TCP-equivalent poses in the tracker frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplaySource {
    pub poses: Vec<Pose<f64>>,
    pub timestamps: Vec<f64>,
    pub gripper: Option<Vec<f64>>,
}

/// Reads `/iphone_pose`, applying the recorded calibration when present. The gripper channel
/// is taken from `/hardware_mask` when it carries one little-endian f64 per pose frame.
pub fn episode_source(episode: &Episode) -> Result<ReplaySource, ReplayError> {
    let frames = episode.pose_frames().map_err(|e| ReplayError::Episode(e.to_string()))?;
    if frames.is_empty() {
        return Err(ReplayError::EmptyEpisode);
    }
    let cal = match episode.metadata.get(CALIBRATION_KEY) {
        Some(s) => {
            let r: PoseRecord = serde_json::from_str(s).map_err(|e| ReplayError::Episode(format!("calibration: {e}")))?;
            Pose::from(&r)
        }
        None => Pose::identity(),
    };
    let mut poses = Vec::with_capacity(frames.len());
    for f in &frames {
        let p = pose_from_column_major(&f.pose, ROTATION_TOLERANCE).map_err(|e| ReplayError::Episode(e.to_string()))?;
        poses.push(p * cal);
    }
    let gripper = episode.channels.get(HARDWARE_TOPIC).and_then(|c| {
        (c.messages.len() == frames.len() && c.messages.iter().all(|m| m.data.len() == 8))
            .then(|| c.messages.iter().map(|m| f64::from_le_bytes(m.data[..8].try_into().expect("8 bytes"))).collect())
    });
    Ok(ReplaySource { poses, timestamps: frames.iter().map(|f| f.tracker_timestamp).collect(), gripper })
}

/// Retargets an episode onto `anchor` and builds the clamped plan.
pub fn plan_episode(
    episode: &Episode,
    anchor: &Pose<f64>,
    remap: &FrameRemap<f64>,
    limits: &ReplayLimits<f64>,
    speed_scale: f64,
) -> Result<ReplayPlan<f64>, ReplayError> {
    let src = episode_source(episode)?;
    let commands = super::retarget(&src.poses, anchor, remap)?;
    let mut plan = resample_and_clamp_with_gripper(&commands, &src.timestamps, src.gripper.as_deref(), limits, speed_scale)?;
    plan.anchor = *anchor;
    Ok(plan)
}

