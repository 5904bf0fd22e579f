use std::collections::VecDeque;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::{DVector, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::debounce::Debouncer;
use super::rate::{rate_ratio, RateSmoothing};
use super::state::{classify, FeasibilityState, Feedback, StateThresholds};
use super::GuidanceError;
use crate::collision::{build_collision_set, check_self_collision, CollisionSet};
use crate::kinematics::{dls_ik, forward_kinematics, jacobian_from_poses, manipulability, IkParams, RobotModel};
use crate::pose::pose_is_finite;
use crate::{Pose, PoseRecord};

/// One tracker sample: the device pose in the tracker world frame plus its timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackerFrame {
    pub device_pose: Pose<f64>,
    pub tracker_timestamp: f64,
    pub wall_clock: f64,
    pub image: Vec<u8>,
}

/// Fixed transform from the device camera frame to the tool center point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    pub cam_to_tcp: Pose<f64>,
}

/// Virtual robot base pose in the tracker world frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaseAnchor {
    pub base_pose: Pose<f64>,
}

/// Captures the camera→TCP offset that maps `device_pose` onto `desired_tcp_pose`.
pub fn calibrate(device_pose: &Pose<f64>, desired_tcp_pose: &Pose<f64>) -> Calibration {
    Calibration { cam_to_tcp: device_pose.inverse() * desired_tcp_pose }
}

pub fn set_base_anchor(world_pose: &Pose<f64>) -> BaseAnchor {
    BaseAnchor { base_pose: *world_pose }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClutchState {
    pub engaged: bool,
    pub frozen_target: Option<Pose<f64>>,
}

#[derive(Debug, Clone)]
pub struct GuidanceConfig {
    pub tau_r: f64,
    pub tau_w: f64,
    pub rate_window: usize,
    pub rate_smoothing: RateSmoothing,
    pub debounce_frames: usize,
    pub ik_params: IkParams<f64>,
    pub margin: f64,
    /// ‖q_t − q_{t−1}‖ above this flags the frame as a probable solver branch jump.
    pub jump_threshold: f64,
    /// IK seed for the first frame; the neutral configuration when absent.
    pub initial_q: Option<Vec<f64>>,
}

impl Default for GuidanceConfig {
    fn default() -> Self {
        GuidanceConfig {
            tau_r: 0.8,
            tau_w: 0.01,
            rate_window: 5,
            rate_smoothing: RateSmoothing::Mean,
            debounce_frames: 3,
            ik_params: IkParams::default(),
            margin: crate::collision::DEFAULT_MARGIN,
            jump_threshold: 0.5,
            initial_q: None,
        }
    }
}

impl GuidanceConfig {
    pub fn validate(&self) -> Result<(), GuidanceError> {
        let bad = |m: &str| Err(GuidanceError::InvalidConfig(m.to_string()));
        if !(self.tau_r > 0.0 && self.tau_r < 1.0) {
            return bad("tau_r must lie in (0, 1)");
        }
        if !(self.tau_w >= 0.0) {
            return bad("tau_w must be non-negative");
        }
        if self.rate_window < 1 {
            return bad("rate_window must be at least 1");
        }
        if !(1..=10).contains(&self.debounce_frames) {
            return bad("debounce_frames must lie in 1..=10");
        }
        if !(self.margin >= 0.0) {
            return bad("margin must be non-negative");
        }
        let ik = &self.ik_params;
        if !(ik.damping > 0.0 && ik.residual_threshold > 0.0) || ik.max_iterations == 0 {
            return bad("IK damping, residual threshold and iteration cap must be positive");
        }
        Ok(())
    }

    pub fn thresholds(&self) -> StateThresholds {
        StateThresholds { epsilon: self.ik_params.residual_threshold, tau_r: self.tau_r, tau_w: self.tau_w }
    }
}

/// Per-stage compute time of one frame, in microseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub pose: f64,
    pub ik: f64,
    pub fk: f64,
    pub collision: f64,
    pub state: f64,
}

#[derive(Debug, Clone)]
pub struct GuidanceOutput {
    pub frame_index: u64,
    pub tracker_timestamp: f64,
    pub wall_clock: f64,
    pub state: FeasibilityState,
    pub raw_state: FeasibilityState,
    pub q: DVector<f64>,
    pub e: f64,
    pub r: f64,
    pub c: bool,
    pub w: f64,
    /// Target pose in the robot base frame.
    pub ee_target: Pose<f64>,
    pub link_poses: Vec<Pose<f64>>,
    pub feedback: Feedback,
    pub min_clearance: f64,
    pub ik_iterations: usize,
    pub ik_jump: bool,
    pub clutch_engaged: bool,
    pub compute_micros: f64,
    pub timings: StageTimings,
}

/// Per-frame log record, stored on the `/feasibility` channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub frame_index: u64,
    pub tracker_timestamp: f64,
    pub wall_clock: f64,
    pub s_t: FeasibilityState,
    pub raw_state: FeasibilityState,
    pub e_t: f64,
    pub r_t: f64,
    pub c_t: bool,
    pub w_t: f64,
    pub q_t: Vec<f64>,
    pub p_t: PoseRecord,
    pub compute_micros: f64,
    #[serde(default)]
    pub ik_jump: bool,
}

impl From<&GuidanceOutput> for FrameRecord {
    fn from(o: &GuidanceOutput) -> Self {
        FrameRecord {
            frame_index: o.frame_index,
            tracker_timestamp: o.tracker_timestamp,
            wall_clock: o.wall_clock,
            s_t: o.state,
            raw_state: o.raw_state,
            e_t: o.e,
            r_t: o.r,
            c_t: o.c,
            w_t: o.w,
            q_t: o.q.iter().copied().collect(),
            p_t: PoseRecord::from(&o.ee_target),
            compute_micros: o.compute_micros,
            ik_jump: o.ik_jump,
        }
    }
}

/// JSON snapshot pushed to state-feed subscribers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuidanceSnapshot {
    pub frame_index: u64,
    pub tracker_timestamp: f64,
    pub wall_clock: f64,
    pub state: FeasibilityState,
    pub raw_state: FeasibilityState,
    pub q: Vec<f64>,
    pub e: f64,
    pub r: f64,
    pub c: bool,
    pub w: f64,
    pub ee_target: PoseRecord,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub link_poses: Option<Vec<PoseRecord>>,
    pub feedback: Feedback,
    pub clutch_engaged: bool,
    pub compute_micros: f64,
}

impl GuidanceOutput {
    pub fn record(&self) -> FrameRecord {
        FrameRecord::from(self)
    }

    pub fn snapshot(&self, with_links: bool) -> GuidanceSnapshot {
        GuidanceSnapshot {
            frame_index: self.frame_index,
            tracker_timestamp: self.tracker_timestamp,
            wall_clock: self.wall_clock,
            state: self.state,
            raw_state: self.raw_state,
            q: self.q.iter().copied().collect(),
            e: self.e,
            r: self.r,
            c: self.c,
            w: self.w,
            ee_target: PoseRecord::from(&self.ee_target),
            link_poses: with_links.then(|| self.link_poses.iter().map(PoseRecord::from).collect()),
            feedback: self.feedback,
            clutch_engaged: self.clutch_engaged,
            compute_micros: self.compute_micros,
        }
    }
}

/// Re-anchoring offset applied while the clutch is engaged: world-aligned translation and
/// rotation deltas so that re-engaging continues from the frozen pose without a jump.
#[derive(Debug, Clone, Copy)]
struct ClutchOffset {
    translation: Vector3<f64>,
    rotation: UnitQuaternion<f64>,
}

impl ClutchOffset {
    fn identity() -> Self {
        ClutchOffset { translation: Vector3::zeros(), rotation: UnitQuaternion::identity() }
    }

    fn between(frozen: &Pose<f64>, raw: &Pose<f64>) -> Self {
        ClutchOffset {
            translation: frozen.translation.vector - raw.translation.vector,
            rotation: frozen.rotation * raw.rotation.inverse(),
        }
    }

    fn apply(&self, raw: &Pose<f64>) -> Pose<f64> {
        Pose::from_parts(
            Translation3::from(raw.translation.vector + self.translation),
            self.rotation * raw.rotation,
        )
    }
}

/// Sequential per-frame feasibility pipeline for one demonstration session.
pub struct GuidanceSession {
    model: Arc<RobotModel<f64>>,
    collision: CollisionSet<f64>,
    config: GuidanceConfig,
    vel_limits: DVector<f64>,
    calibration: Option<Calibration>,
    anchor: Option<BaseAnchor>,
    engaged: bool,
    frozen: Option<Pose<f64>>,
    offset: ClutchOffset,
    reanchor_pending: bool,
    last_target: Option<Pose<f64>>,
    q_prev: DVector<f64>,
    history: VecDeque<(f64, DVector<f64>)>,
    debouncer: Debouncer,
    frame_index: u64,
    log: Vec<FrameRecord>,
}

impl GuidanceSession {
    pub fn new(model: Arc<RobotModel<f64>>, config: GuidanceConfig) -> Result<Self, GuidanceError> {
        config.validate()?;
        let q0 = match &config.initial_q {
            Some(q) => {
                if q.len() != model.dof {
                    return Err(GuidanceError::InvalidConfig(format!(
                        "initial_q has {} entries, model has {} DoF",
                        q.len(),
                        model.dof
                    )));
                }
                let mut q = DVector::from_column_slice(q);
                model.clamp(&mut q);
                q
            }
            None => model.neutral_configuration(),
        };
        Ok(GuidanceSession {
            collision: build_collision_set(&model, config.margin),
            vel_limits: model.velocity_limits(),
            debouncer: Debouncer::new(config.debounce_frames),
            model,
            config,
            calibration: None,
            anchor: None,
            engaged: true,
            frozen: None,
            offset: ClutchOffset::identity(),
            reanchor_pending: false,
            last_target: None,
            q_prev: q0,
            history: VecDeque::new(),
            frame_index: 0,
            log: Vec::new(),
        })
    }

    pub fn model(&self) -> &Arc<RobotModel<f64>> {
        &self.model
    }

    pub fn config(&self) -> &GuidanceConfig {
        &self.config
    }

    pub fn collision_set(&self) -> &CollisionSet<f64> {
        &self.collision
    }

    pub fn calibration(&self) -> Option<Calibration> {
        self.calibration
    }

    pub fn base_anchor(&self) -> Option<BaseAnchor> {
        self.anchor
    }

    pub fn current_q(&self) -> &DVector<f64> {
        &self.q_prev
    }

    /// Records the camera→TCP offset mapping `device_pose` onto `desired_tcp_pose` (world frame).
    pub fn calibrate(&mut self, device_pose: &Pose<f64>, desired_tcp_pose: &Pose<f64>) -> Calibration {
        let c = calibrate(device_pose, desired_tcp_pose);
        self.calibration = Some(c);
        c
    }

    pub fn set_calibration(&mut self, calibration: Calibration) {
        self.calibration = Some(calibration);
    }

    pub fn set_base_anchor(&mut self, world_pose: &Pose<f64>) -> BaseAnchor {
        let a = set_base_anchor(world_pose);
        self.anchor = Some(a);
        a
    }

    pub fn clutch(&self) -> ClutchState {
        ClutchState { engaged: self.engaged, frozen_target: self.frozen }
    }

    pub fn set_clutch(&mut self, engaged: bool) -> ClutchState {
        if engaged != self.engaged {
            if engaged {
                self.reanchor_pending = self.frozen.is_some();
            } else {
                self.frozen = self.last_target;
            }
            self.engaged = engaged;
        }
        self.clutch()
    }

    pub fn frames_processed(&self) -> u64 {
        self.frame_index
    }

    pub fn log(&self) -> &[FrameRecord] {
        &self.log
    }

    pub fn take_log(&mut self) -> Vec<FrameRecord> {
        std::mem::take(&mut self.log)
    }

    /// Target TCP pose in the base frame before clutch handling.
    fn raw_target(&self, device_pose: &Pose<f64>) -> Result<Pose<f64>, GuidanceError> {
        let cal = self.calibration.ok_or(GuidanceError::NotConfigured("calibration"))?;
        let anchor = self.anchor.ok_or(GuidanceError::NotConfigured("base anchor"))?;
        Ok(anchor.base_pose.inverse() * (device_pose * cal.cam_to_tcp))
    }

    fn target(&mut self, device_pose: &Pose<f64>) -> Result<Pose<f64>, GuidanceError> {
        let raw = self.raw_target(device_pose)?;
        if !self.engaged {
            return Ok(*self.frozen.get_or_insert(raw));
        }
        if self.reanchor_pending {
            if let Some(frozen) = self.frozen {
                self.offset = ClutchOffset::between(&frozen, &raw);
            }
            self.reanchor_pending = false;
            self.frozen = None;
        }
        Ok(self.offset.apply(&raw))
    }

    pub fn process_frame(&mut self, frame: &TrackerFrame) -> Result<GuidanceOutput, GuidanceError> {
        let start = Instant::now();
        if !pose_is_finite(&frame.device_pose) || !frame.tracker_timestamp.is_finite() {
            return Err(GuidanceError::TrackingLost);
        }
        if let Some((t_last, _)) = self.history.back() {
            if frame.tracker_timestamp <= *t_last {
                return Err(GuidanceError::DegenerateTimestamps);
            }
        }
        let target = self.target(&frame.device_pose)?;
        let t_pose = start.elapsed();

        let ik = dls_ik(&self.model, &target, &self.q_prev, &self.config.ik_params)?;
        let t_ik = start.elapsed();

        let chain = forward_kinematics(&self.model, &ik.q)?;
        let j = jacobian_from_poses(&self.model, &chain);
        let t_fk = start.elapsed();

        let report = check_self_collision(&self.collision, &chain.link_poses)?;
        let t_col = start.elapsed();

        self.history.push_back((frame.tracker_timestamp, ik.q.clone()));
        while self.history.len() > self.config.rate_window + 1 {
            self.history.pop_front();
        }
        let (ts, qs): (Vec<f64>, Vec<DVector<f64>>) = self.history.iter().cloned().unzip();
        let r = rate_ratio(&qs, &ts, &self.vel_limits, self.config.rate_smoothing)?;
        let w = manipulability(&j)?;
        let raw_state = classify(ik.residual, report.colliding, r, w, &self.config.thresholds());
        let state = self.debouncer.next(raw_state);
        let ik_jump = self.frame_index > 0 && (&ik.q - &self.q_prev).norm() > self.config.jump_threshold;
        let t_state = start.elapsed();

        self.q_prev = ik.q.clone();
        self.last_target = Some(target);
        let micros = |d: std::time::Duration| d.as_secs_f64() * 1e6;
        let output = GuidanceOutput {
            frame_index: self.frame_index,
            tracker_timestamp: frame.tracker_timestamp,
            wall_clock: frame.wall_clock,
            state,
            raw_state,
            q: ik.q,
            e: ik.residual,
            r,
            c: report.colliding,
            w,
            ee_target: target,
            link_poses: chain.link_poses,
            feedback: state.feedback(),
            min_clearance: report.min_clearance,
            ik_iterations: ik.iterations,
            ik_jump,
            clutch_engaged: self.engaged,
            compute_micros: micros(start.elapsed()),
            timings: StageTimings {
                pose: micros(t_pose),
                ik: micros(t_ik - t_pose),
                fk: micros(t_fk - t_ik),
                collision: micros(t_col - t_fk),
                state: micros(t_state - t_col),
            },
        };
        self.frame_index += 1;
        self.log.push(output.record());
        Ok(output)
    }
}
