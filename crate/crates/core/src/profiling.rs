//! Per-stage latency profiling of the guidance pipeline on a synthetic trajectory.
//!
//! Frames arrive on a virtual 60 Hz clock; the pipeline takes the measured compute time of
//! each frame. A frame still waiting more than one period after it arrived has been
//! superseded by its successor and counts as dropped (it is not processed).

use std::sync::Arc;
use std::time::Instant;

use nalgebra::{Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::guidance::{Calibration, GuidanceConfig, GuidanceError, GuidanceSession, TrackerFrame};
use crate::kinematics::{forward_kinematics, RobotModel};
use crate::robots::ready_configuration;
use crate::Pose;

pub const FRAME_BUDGET_MS: f64 = 1000.0 / 60.0;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageStats {
    pub mean_us: f64,
    pub p99_us: f64,
    pub max_us: f64,
}

impl StageStats {
    pub fn from_samples(samples: &[f64]) -> Self {
        if samples.is_empty() {
            return Self::default();
        }
        let mut s = samples.to_vec();
        s.sort_by(f64::total_cmp);
        let idx = ((0.99 * s.len() as f64).ceil() as usize).clamp(1, s.len()) - 1;
        StageStats { mean_us: s.iter().sum::<f64>() / s.len() as f64, p99_us: s[idx], max_us: s[s.len() - 1] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileReport {
    pub frames: usize,
    pub processed_frames: usize,
    pub dropped_frames: usize,
    pub budget_ms: f64,
    pub pose: StageStats,
    pub ik: StageStats,
    pub fk: StageStats,
    pub collision: StageStats,
    pub state: StageStats,
    pub total: StageStats,
    pub wall_seconds: f64,
}

impl ProfileReport {
    pub fn mean_frame_ms(&self) -> f64 {
        self.total.mean_us / 1000.0
    }

    /// Name of the stage with the largest mean time.
    pub fn dominant_stage(&self) -> &'static str {
        [("pose", self.pose), ("ik", self.ik), ("fk", self.fk), ("collision", self.collision), ("state", self.state)]
            .into_iter()
            .max_by(|a, b| a.1.mean_us.total_cmp(&b.1.mean_us))
            .map(|(n, _)| n)
            .expect("non-empty")
    }

    pub fn render(&self) -> String {
        let mut out = format!(
            "frames {}  processed {}  dropped {}  budget {:.1} ms  wall {:.2} s\n",
            self.frames, self.processed_frames, self.dropped_frames, self.budget_ms, self.wall_seconds
        );
        out.push_str(&format!("{:<10} {:>10} {:>10} {:>10}\n", "stage", "mean µs", "p99 µs", "max µs"));
        for (name, s) in [
            ("pose", self.pose),
            ("ik", self.ik),
            ("fk", self.fk),
            ("collision", self.collision),
            ("state", self.state),
            ("total", self.total),
        ] {
            out.push_str(&format!("{:<10} {:>10.1} {:>10.1} {:>10.1}\n", name, s.mean_us, s.p99_us, s.max_us));
        }
        out
    }
}

/// Smooth figure-eight around the ready posture: continuous, reachable, and brisk enough
/// to keep the IK solver iterating.
pub fn synthetic_trajectory(model: &RobotModel<f64>, frames: usize) -> Vec<TrackerFrame> {
    let start = forward_kinematics(model, &ready_configuration(model)).expect("ready configuration fits").ee_pose;
    let w = 2.0 * std::f64::consts::PI / 4.0;
    (0..frames)
        .map(|k| {
            let t = k as f64 / 60.0;
            let d = Vector3::new(0.08 * (w * t).sin(), 0.06 * (2.0 * w * t).sin(), 0.04 * (3.0 * w * t).sin());
            let r = UnitQuaternion::from_scaled_axis(Vector3::new(0.15 * (w * t).sin(), 0.1 * (w * t).cos() - 0.1, 0.0));
            let pose = Translation3::from(d) * start * r;
            TrackerFrame { device_pose: pose, tracker_timestamp: t, wall_clock: t, image: Vec::new() }
        })
        .collect()
}

/// Runs the full per-frame pipeline over `frames` synthetic frames.
pub fn run_profile(
    model: Arc<RobotModel<f64>>,
    config: GuidanceConfig,
    frames: usize,
) -> Result<ProfileReport, GuidanceError> {
    let config = GuidanceConfig { initial_q: Some(ready_configuration(&model).as_slice().to_vec()), ..config };
    let trajectory = synthetic_trajectory(&model, frames);
    let mut session = GuidanceSession::new(model, config)?;
    session.set_calibration(Calibration { cam_to_tcp: Pose::identity() });
    session.set_base_anchor(&Pose::identity());

    let period_us = FRAME_BUDGET_MS * 1000.0;
    let mut busy_until = 0.0_f64;
    let mut dropped = 0;
    let mut stages: [Vec<f64>; 6] = Default::default();
    let wall = Instant::now();
    for (k, frame) in trajectory.iter().enumerate() {
        let arrival = k as f64 * period_us;
        let start = busy_until.max(arrival);
        if start - arrival > period_us {
            dropped += 1;
            continue;
        }
        let out = session.process_frame(frame)?;
        busy_until = start + out.compute_micros;
        let t = out.timings;
        for (v, x) in stages.iter_mut().zip([t.pose, t.ik, t.fk, t.collision, t.state, out.compute_micros]) {
            v.push(x);
        }
    }
    let s = |i: usize| StageStats::from_samples(&stages[i]);
    Ok(ProfileReport {
        frames,
        processed_frames: stages[5].len(),
        dropped_frames: dropped,
        budget_ms: FRAME_BUDGET_MS,
        pose: s(0),
        ik: s(1),
        fk: s(2),
        collision: s(3),
        state: s(4),
        total: s(5),
        wall_seconds: wall.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentile_of_hundred() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        let s = StageStats::from_samples(&v);
        assert_eq!(s.p99_us, 99.0);
        assert_eq!(s.max_us, 100.0);
        assert_eq!(s.mean_us, 50.5);
    }
}
