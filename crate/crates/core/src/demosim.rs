//! Synthetic demonstrator.
//!
//! Generates 60 Hz tracker streams for pick-and-place and tossing, optionally reacting to the
//! guidance state the way an attentive demonstrator would: slow down while the cue is yellow
//! or red, speed back up gradually once it clears. The reaction is a deliberately simple
//! model (proportional slowdown after a fixed latency), not a claim about human behavior.
//!
//! Motion runs on a *nominal* clock: each waypoint segment follows a trapezoidal speed profile
//! in nominal time, and every frame advances the nominal clock by `dt × speed multiplier`. The
//! toss release adds a wrist flick whose angular speed is a sin² bump; the flick always runs
//! at full speed because the throw needs it.

use std::f64::consts::PI;

use nalgebra::{DVector, Translation3, Unit, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::guidance::{Calibration, FeasibilityState, FrameRecord, GuidanceError, GuidanceSession, TrackerFrame};
use crate::kinematics::{forward_kinematics, RobotModel};
use crate::pose::interpolate;
use crate::recording::{
    stats_from_states, ChannelMessage, Episode, EpisodeError, FeasibilityStats, FramePacket, HARDWARE_TOPIC,
};
use crate::replay::{remap_metadata, FrameRemap, CALIBRATION_KEY, REMAP_KEY};
use crate::{Pose, PoseRecord};

#[derive(Debug, Error)]
pub enum DemoError {
    #[error("invalid demo profile: {0}")]
    InvalidProfile(String),
    #[error(transparent)]
    Guidance(#[from] GuidanceError),
    #[error(transparent)]
    Episode(#[from] EpisodeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    PickPlace,
    Toss,
}

impl Task {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "pick_place" | "pick-place" | "pickplace" => Some(Task::PickPlace),
            "toss" => Some(Task::Toss),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Task::PickPlace => "pick_place",
            Task::Toss => "toss",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    /// TCP pose in the robot base frame.
    pub pose: PoseRecord,
    /// Multiplier on the cruise speeds for the segment arriving here.
    #[serde(default = "one")]
    pub speed_scale: f64,
    /// Pause after arriving, s.
    #[serde(default)]
    pub dwell: f64,
    /// Gripper opening recorded on the hardware channel while heading here, m.
    #[serde(default)]
    pub gripper: f64,
}

fn one() -> f64 {
    1.0
}

/// Trapezoidal speed profile parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedProfile {
    /// m/s
    pub cruise_speed: f64,
    /// rad/s
    pub cruise_angular_speed: f64,
    /// m/s²; the angular ramp uses the same ramp time.
    pub accel: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TossSpike {
    /// Center of the flick on the nominal clock, s.
    pub time: f64,
    /// rad/s
    pub peak_angular_speed: f64,
    /// s
    pub duration: f64,
    /// Flick axis in the tool frame.
    pub axis: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub seed: u64,
    /// Std-dev of the low-passed hand tremor, m.
    pub position_std: f64,
    /// rad
    pub orientation_std: f64,
    /// Per-seed uniform perturbation of waypoint positions, ± m.
    #[serde(default)]
    pub waypoint_jitter: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoProfile {
    pub name: String,
    pub task: Task,
    pub waypoints: Vec<Waypoint>,
    pub speed: SpeedProfile,
    #[serde(default)]
    pub toss_spike: Option<TossSpike>,
    pub noise: NoiseSpec,
    #[serde(default = "default_rate")]
    pub frame_rate: f64,
    /// Robot base in the tracker world frame.
    pub base: PoseRecord,
    /// Device camera → TCP.
    pub calibration: PoseRecord,
    /// Joint configuration at the first waypoint, used to seed IK.
    #[serde(default)]
    pub initial_q: Option<Vec<f64>>,
}

fn default_rate() -> f64 {
    60.0
}

fn trapezoid_time(d: f64, v: f64, a: f64) -> f64 {
    if d <= 0.0 {
        0.0
    } else if d >= v * v / a {
        d / v + v / a
    } else {
        2.0 * (d / a).sqrt()
    }
}

/// Normalized trapezoid: progress in [0, 1] at normalized time u ∈ [0, 1] with ramp fraction ρ.
fn trapezoid_progress(u: f64, rho: f64) -> f64 {
    let u = u.clamp(0.0, 1.0);
    if rho <= 0.0 {
        return u;
    }
    let vp = 1.0 / (1.0 - rho);
    let a = vp / rho;
    if u < rho {
        0.5 * a * u * u
    } else if u <= 1.0 - rho {
        0.5 * a * rho * rho + vp * (u - rho)
    } else {
        let r = 1.0 - u;
        1.0 - 0.5 * a * r * r
    }
}

impl DemoProfile {
    pub fn from_json(text: &str) -> Result<Self, DemoError> {
        let p: DemoProfile = serde_json::from_str(text).map_err(|e| DemoError::InvalidProfile(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("profile serializes")
    }

    pub fn validate(&self) -> Result<(), DemoError> {
        let bad = |m: String| Err(DemoError::InvalidProfile(m));
        if self.waypoints.len() < 2 {
            return bad("at least two waypoints are required".into());
        }
        let s = &self.speed;
        if !(s.cruise_speed > 0.0 && s.cruise_angular_speed > 0.0 && s.accel > 0.0) {
            return bad("speeds and acceleration must be positive".into());
        }
        if !(self.frame_rate > 0.0) {
            return bad("frame_rate must be positive".into());
        }
        if let Some(w) = self.waypoints.iter().find(|w| !(w.speed_scale > 0.0) || !(w.dwell >= 0.0)) {
            return bad(format!("waypoint speed_scale {} / dwell {} out of range", w.speed_scale, w.dwell));
        }
        match (self.task, &self.toss_spike) {
            (Task::Toss, None) => return bad("toss profile needs exactly one spike".into()),
            (Task::PickPlace, Some(_)) => return bad("pick_place profile has no spike".into()),
            (_, Some(sp)) if !(sp.peak_angular_speed >= 0.0 && sp.duration > 0.0) => {
                return bad("spike needs peak ≥ 0 and positive duration".into())
            }
            (_, Some(sp)) if Vector3::from(sp.axis).norm() == 0.0 => return bad("spike axis is zero".into()),
            _ => {}
        }
        if self.noise.position_std < 0.0 || self.noise.orientation_std < 0.0 || self.noise.waypoint_jitter < 0.0 {
            return bad("noise amplitudes must be non-negative".into());
        }
        Ok(())
    }

    /// Arrival time of each waypoint on the nominal clock (before its dwell).
    pub fn arrival_times(&self) -> Vec<f64> {
        schedule(&self.waypoints.iter().map(|w| Pose::from(&w.pose)).collect::<Vec<_>>(), self).0
    }

    /// Builds waypoints from joint configurations through forward kinematics.
    pub fn waypoints_from_configs(model: &RobotModel<f64>, configs: &[(&[f64], f64, f64, f64)]) -> Vec<Waypoint> {
        configs
            .iter()
            .map(|(q, speed_scale, dwell, gripper)| {
                let fk = forward_kinematics(model, &DVector::from_column_slice(q)).expect("config matches model");
                Waypoint { pose: PoseRecord::from(&fk.ee_pose), speed_scale: *speed_scale, dwell: *dwell, gripper: *gripper }
            })
            .collect()
    }

    /// Moderate pick-and-place on the bundled 7-joint arm; the transfer moves are brisk.
    pub fn pick_place(model: &RobotModel<f64>) -> Self {
        let ready: &[f64] = &[0.0, 0.5, 0.0, 1.3, 0.0, 1.0, 0.0];
        let configs: &[(&[f64], f64, f64, f64)] = &[
            (ready, 1.0, 0.0, 0.08),
            (&[-0.5, 0.6, 0.0, 1.2, 0.0, 1.3, 0.0], 2.5, 0.0, 0.08),
            (&[-0.5, 0.85, 0.0, 1.25, 0.0, 1.0, 0.0], 0.4, 0.4, 0.08),
            (&[-0.5, 0.6, 0.0, 1.2, 0.0, 1.3, 0.0], 0.6, 0.0, 0.02),
            (&[0.6, 0.6, 0.0, 1.2, 0.0, 1.3, 0.0], 2.5, 0.0, 0.02),
            (&[0.6, 0.85, 0.0, 1.25, 0.0, 1.0, 0.0], 0.4, 0.4, 0.02),
            (ready, 2.5, 0.0, 0.08),
        ];
        DemoProfile {
            name: "pick_place".into(),
            task: Task::PickPlace,
            waypoints: Self::waypoints_from_configs(model, configs),
            speed: SpeedProfile { cruise_speed: 1.0, cruise_angular_speed: 2.0, accel: 2.5 },
            toss_spike: None,
            noise: NoiseSpec { seed: 0, position_std: 0.002, orientation_std: 0.01, waypoint_jitter: 0.01 },
            frame_rate: 60.0,
            base: PoseRecord::from(&Pose::translation(0.0, -1.0, 0.0)),
            calibration: PoseRecord::from(&Pose::identity()),
            initial_q: Some(ready.to_vec()),
        }
    }

    /// Tossing: an exaggerated wind-up swing, a fast forward throw and a wrist flick at release.
    pub fn toss(model: &RobotModel<f64>) -> Self {
        let ready: &[f64] = &[0.0, 0.5, 0.0, 1.3, 0.0, 1.0, 0.0];
        let configs: &[(&[f64], f64, f64, f64)] = &[
            (ready, 1.0, 0.0, 0.08),
            (&[-0.9, 0.85, 0.0, 1.2, 0.0, 1.0, 0.0], 1.2, 0.3, 0.08),
            (&[0.7, -0.1, 0.0, 1.7, 0.0, 1.1, 0.0], 1.6, 0.0, 0.02),
            (&[-0.3, 0.9, 0.0, 0.7, 0.0, 0.8, 0.0], 1.8, 0.0, 0.02),
            (&[-0.4, 1.0, 0.0, 0.6, 0.0, 0.9, 0.0], 0.5, 0.0, 0.08),
        ];
        let mut p = DemoProfile {
            name: "toss".into(),
            task: Task::Toss,
            waypoints: Self::waypoints_from_configs(model, configs),
            speed: SpeedProfile { cruise_speed: 1.0, cruise_angular_speed: 2.0, accel: 2.5 },
            toss_spike: None,
            noise: NoiseSpec { seed: 0, position_std: 0.002, orientation_std: 0.01, waypoint_jitter: 0.01 },
            frame_rate: 60.0,
            base: PoseRecord::from(&Pose::translation(0.0, -1.0, 0.0)),
            calibration: PoseRecord::from(&Pose::identity()),
            initial_q: Some(ready.to_vec()),
        };
        let release = p.arrival_times()[3];
        p.toss_spike = Some(TossSpike { time: release, peak_angular_speed: 12.0, duration: 0.15, axis: [0.0, 0.0, 1.0] });
        p
    }

    pub fn builtin(task: Task, model: &RobotModel<f64>) -> Self {
        match task {
            Task::PickPlace => Self::pick_place(model),
            Task::Toss => Self::toss(model),
        }
    }
}

/// Per-segment start times and durations on the nominal clock; returns (arrivals, starts, durations, total).
fn schedule(poses: &[Pose<f64>], profile: &DemoProfile) -> (Vec<f64>, Vec<f64>, Vec<f64>, f64) {
    let s = &profile.speed;
    let ramp = s.cruise_speed / s.accel;
    let mut arrivals = vec![0.0];
    let mut starts = Vec::new();
    let mut durations = Vec::new();
    let mut t = profile.waypoints[0].dwell;
    for k in 0..poses.len() - 1 {
        let scale = profile.waypoints[k + 1].speed_scale;
        let d = (poses[k + 1].translation.vector - poses[k].translation.vector).norm();
        let ang = poses[k].rotation.angle_to(&poses[k + 1].rotation);
        let (v, w) = (s.cruise_speed * scale, s.cruise_angular_speed * scale);
        let dur = trapezoid_time(d, v, v / ramp).max(trapezoid_time(ang, w, w / ramp));
        starts.push(t);
        durations.push(dur);
        t += dur;
        arrivals.push(t);
        t += profile.waypoints[k + 1].dwell;
    }
    (arrivals, starts, durations, t)
}

/// Stateful frame generator driven by a speed multiplier.
pub struct DemoGenerator {
    profile: DemoProfile,
    poses: Vec<Pose<f64>>,
    starts: Vec<f64>,
    durations: Vec<f64>,
    ramp: f64,
    total: f64,
    base: Pose<f64>,
    cal_inv: Pose<f64>,
    rng: ChaCha8Rng,
    tremor_p: Vector3<f64>,
    tremor_r: Vector3<f64>,
    tau: f64,
    frame: u64,
    done: bool,
    spike_frame: Option<u64>,
}

/// AR(1) coefficient of the tremor filter at 60 Hz.
const TREMOR_POLE: f64 = 0.9;

impl DemoGenerator {
    pub fn new(profile: &DemoProfile, seed: u64) -> Result<Self, DemoError> {
        profile.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ profile.noise.seed.rotate_left(32));
        let j = profile.noise.waypoint_jitter;
        let poses: Vec<Pose<f64>> = profile
            .waypoints
            .iter()
            .map(|w| {
                let mut p = Pose::from(&w.pose);
                if j > 0.0 {
                    let d = Vector3::from_fn(|_, _| rng.random_range(-j..=j));
                    p.translation.vector += d;
                }
                p
            })
            .collect();
        let (_, starts, durations, total) = schedule(&poses, profile);
        let ramp = profile.speed.cruise_speed / profile.speed.accel;
        Ok(DemoGenerator {
            poses,
            starts,
            durations,
            ramp,
            total,
            base: Pose::from(&profile.base),
            cal_inv: Pose::from(&profile.calibration).inverse(),
            rng,
            tremor_p: Vector3::zeros(),
            tremor_r: Vector3::zeros(),
            tau: 0.0,
            frame: 0,
            done: false,
            spike_frame: None,
            profile: profile.clone(),
        })
    }

    pub fn nominal_duration(&self) -> f64 {
        self.total
    }

    pub fn nominal_time(&self) -> f64 {
        self.tau
    }

    /// First frame at or past the flick center.
    pub fn spike_frame(&self) -> Option<u64> {
        self.spike_frame
    }

    pub fn in_spike(&self) -> bool {
        self.profile
            .toss_spike
            .is_some_and(|s| (self.tau - s.time).abs() <= s.duration / 2.0)
    }

    fn path(&self, tau: f64) -> (Pose<f64>, f64) {
        let n = self.poses.len();
        let mut k = self.starts.partition_point(|s| *s <= tau).saturating_sub(1);
        k = k.min(n - 2);
        let u = if self.durations[k] > 0.0 { (tau - self.starts[k]) / self.durations[k] } else { 1.0 };
        let rho = (self.ramp / self.durations[k].max(1e-12)).min(0.5);
        let s = trapezoid_progress(u, rho);
        let g = if u >= 1.0 { self.profile.waypoints[k + 1].gripper } else { self.profile.waypoints[k].gripper };
        (interpolate(&self.poses[k], &self.poses[k + 1], s), g)
    }

    fn flick_angle(&self, tau: f64) -> f64 {
        let Some(sp) = self.profile.toss_spike else { return 0.0 };
        let x = (tau - (sp.time - sp.duration / 2.0)).clamp(0.0, sp.duration);
        sp.peak_angular_speed * (x / 2.0 - sp.duration / (4.0 * PI) * (2.0 * PI * x / sp.duration).sin())
    }

    /// TCP target in the robot base frame at the current nominal time, before tremor.
    pub fn clean_target(&self) -> Pose<f64> {
        let (p, _) = self.path(self.tau);
        match self.profile.toss_spike {
            Some(sp) => {
                let axis = Unit::new_normalize(Vector3::from(sp.axis));
                p * UnitQuaternion::from_axis_angle(&axis, self.flick_angle(self.tau))
            }
            None => p,
        }
    }

    /// Emits the next frame, then advances the nominal clock by `dt × speed` (full speed
    /// during the flick). Returns `None` once the final waypoint has been emitted.
    pub fn next_frame(&mut self, speed: f64) -> Option<(TrackerFrame, f64)> {
        if self.done {
            return None;
        }
        let dt = 1.0 / self.profile.frame_rate;
        let noise = &self.profile.noise;
        let a = (1.0 - TREMOR_POLE * TREMOR_POLE).sqrt();
        let mut gauss = || -> f64 { self.rng.sample(StandardNormal) };
        let np = Vector3::new(gauss(), gauss(), gauss()) * (noise.position_std * a);
        let nr = Vector3::new(gauss(), gauss(), gauss()) * (noise.orientation_std * a);
        self.tremor_p = self.tremor_p * TREMOR_POLE + np;
        self.tremor_r = self.tremor_r * TREMOR_POLE + nr;

        let clean = self.clean_target();
        let target = Pose::from_parts(Translation3::from(self.tremor_p), UnitQuaternion::identity())
            * clean
            * UnitQuaternion::from_scaled_axis(self.tremor_r);
        let device = self.base * target * self.cal_inv;
        let (_, gripper) = self.path(self.tau);
        let t = self.frame as f64 * dt;
        let frame = TrackerFrame { device_pose: device, tracker_timestamp: t, wall_clock: t, image: Vec::new() };
        if let (None, Some(sp)) = (self.spike_frame, self.profile.toss_spike) {
            if self.tau >= sp.time {
                self.spike_frame = Some(self.frame);
            }
        }
        self.frame += 1;
        if self.tau >= self.total {
            self.done = true;
        } else {
            let m = if self.in_spike() { 1.0 } else { speed.clamp(0.0, 1.0) };
            self.tau = (self.tau + dt * m).min(self.total);
        }
        Some((frame, gripper))
    }
}

/// Open-loop generation at full speed: deterministic given `(profile, seed)`.
pub fn generate(profile: &DemoProfile, seed: u64) -> Result<Vec<TrackerFrame>, DemoError> {
    let mut g = DemoGenerator::new(profile, seed)?;
    let mut out = Vec::new();
    while let Some((f, _)) = g.next_frame(1.0) {
        out.push(f);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReactionModel {
    /// `false` reproduces the unguided baseline.
    pub attends: bool,
    /// Per-frame speed reduction while the cue is warning or infeasible, ∈ [0, 1].
    pub slowdown_gain: f64,
    /// Frames between a cue and its effect on motion.
    pub reaction_latency: usize,
    /// Speed regained per frame once the cue clears.
    #[serde(default = "default_recovery")]
    pub recovery_rate: f64,
    #[serde(default = "default_min_speed")]
    pub min_speed: f64,
    /// After a cue, speed recovers only up to `(1 − slowdown_gain) ×` the speed that drew it:
    /// the demonstrator remembers what was too fast.
    #[serde(default = "default_true")]
    pub remembers: bool,
}

fn default_true() -> bool {
    true
}

fn default_recovery() -> f64 {
    0.01
}

fn default_min_speed() -> f64 {
    0.05
}

impl Default for ReactionModel {
    fn default() -> Self {
        ReactionModel {
            attends: true,
            slowdown_gain: 0.5,
            reaction_latency: 6,
            recovery_rate: 0.01,
            min_speed: 0.05,
            remembers: true,
        }
    }
}

impl ReactionModel {
    pub fn unguided() -> Self {
        ReactionModel { attends: false, ..Self::default() }
    }

    fn validate(&self) -> Result<(), DemoError> {
        if !(0.0..=1.0).contains(&self.slowdown_gain) || !(self.recovery_rate >= 0.0) || !(0.0..=1.0).contains(&self.min_speed) {
            return Err(DemoError::InvalidProfile("reaction gain, recovery or min speed out of range".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ClosedLoopRun {
    pub episode: Episode,
    pub records: Vec<FrameRecord>,
    pub stats: FeasibilityStats,
    pub spike_frame: Option<u64>,
}

impl ClosedLoopRun {
    /// Fraction of infeasible frames within `radius` frames of the flick; `None` without a spike
    /// or without infeasible frames.
    pub fn spike_concentration(&self, radius: u64) -> Option<f64> {
        let spike = self.spike_frame?;
        let bad: Vec<u64> =
            self.records.iter().filter(|r| r.s_t == FeasibilityState::Infeasible).map(|r| r.frame_index).collect();
        if bad.is_empty() {
            return None;
        }
        let near = bad.iter().filter(|f| f.abs_diff(spike) <= radius).count();
        Some(near as f64 / bad.len() as f64)
    }
}

const MAX_FRAMES: usize = 200_000;

/// Drives `session` with the generator, letting the emitted state feed back into the speed.
///
/// The session's calibration and base anchor are set from the profile. The returned episode
/// carries every frame on the standard channels (gripper opening on the hardware channel).
pub fn closed_loop_run(
    profile: &DemoProfile,
    seed: u64,
    reaction: &ReactionModel,
    session: &mut GuidanceSession,
) -> Result<ClosedLoopRun, DemoError> {
    reaction.validate()?;
    let mut gen = DemoGenerator::new(profile, seed)?;
    let cal = Pose::from(&profile.calibration);
    session.set_calibration(Calibration { cam_to_tcp: cal });
    session.set_base_anchor(&Pose::from(&profile.base));

    let mode = if reaction.attends { "guided" } else { "unguided" };
    let mut episode = Episode::new(format!("{}-{}-{}", profile.name, mode, seed));
    episode.metadata.insert("task".into(), profile.task.as_str().into());
    episode.metadata.insert("robot".into(), session.model().name.clone());
    // the synthetic world is already z-up and base-aligned
    episode.metadata.insert(REMAP_KEY.into(), remap_metadata(&FrameRemap::identity()));
    episode.metadata.insert(
        CALIBRATION_KEY.into(),
        serde_json::to_string(&PoseRecord::from(&cal)).expect("pose record serializes"),
    );

    let mut records = Vec::new();
    let mut states = Vec::new();
    // speeds[k]: multiplier used to advance after frame k
    let mut speeds: Vec<f64> = Vec::new();
    let mut speed = 1.0;
    let mut ceiling = 1.0_f64;
    while let Some((frame, gripper)) = gen.next_frame(speed) {
        let out = session.process_frame(&frame)?;
        let index = out.frame_index;
        let packet = FramePacket::from_frame(&frame);
        episode.push_frame(index, &packet)?;
        let (pose_msg, _) = crate::recording::frame_messages(index, &packet);
        episode.push(
            HARDWARE_TOPIC,
            ChannelMessage { data: gripper.to_le_bytes().to_vec(), ..pose_msg },
        )?;
        let rec = out.record();
        episode.push_feasibility(&rec)?;
        states.push(out.state);
        records.push(rec);

        if reaction.attends && states.len() > reaction.reaction_latency {
            let k = states.len() - 1 - reaction.reaction_latency;
            let seen = states[k];
            let onset = seen != FeasibilityState::Feasible && (k == 0 || states[k - 1] == FeasibilityState::Feasible);
            if onset && reaction.remembers {
                // the cued frame was produced at the speed in force back then
                let cued_speed = if k == 0 { 1.0 } else { speeds[k - 1] };
                ceiling = ceiling.min(cued_speed * (1.0 - reaction.slowdown_gain)).max(reaction.min_speed);
            }
            speed = if seen == FeasibilityState::Feasible {
                (speed + reaction.recovery_rate).min(ceiling)
            } else {
                (speed * (1.0 - reaction.slowdown_gain)).max(reaction.min_speed)
            };
        }
        speeds.push(speed);
        if records.len() >= MAX_FRAMES {
            break;
        }
    }
    if let (Some(first), Some(last)) = (records.first(), records.last()) {
        episode.start_wall_clock = first.wall_clock;
        episode.end_wall_clock = last.wall_clock;
    }
    Ok(ClosedLoopRun { stats: stats_from_states(&states), episode, records, spike_frame: gen.spike_frame() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub task: Task,
    pub guided: bool,
    pub seeds: Vec<u64>,
    pub infeasible_ratios: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation (0 for a single seed).
    pub sd: f64,
}

/// Runs one closed-loop trial per seed with a fresh session each.
pub fn run_batch(
    profile: &DemoProfile,
    reaction: &ReactionModel,
    seeds: &[u64],
    mut make_session: impl FnMut() -> Result<GuidanceSession, GuidanceError>,
) -> Result<(BatchSummary, Vec<ClosedLoopRun>), DemoError> {
    let mut runs = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let mut session = make_session()?;
        runs.push(closed_loop_run(profile, seed, reaction, &mut session)?);
    }
    let ratios: Vec<f64> = runs.iter().map(|r| r.stats.infeasible_ratio).collect();
    let n = ratios.len() as f64;
    let mean = if ratios.is_empty() { 0.0 } else { ratios.iter().sum::<f64>() / n };
    let sd = if ratios.len() > 1 {
        (ratios.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok((
        BatchSummary { task: profile.task, guided: reaction.attends, seeds: seeds.to_vec(), infeasible_ratios: ratios, mean, sd },
        runs,
    ))
}
