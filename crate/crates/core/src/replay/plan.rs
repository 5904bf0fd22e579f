use serde::{Deserialize, Serialize};

use super::ReplayError;
use crate::pose::{angle_between, interpolate};
use crate::{Pose, Real};

/// Cartesian TCP limits and the command period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplayLimits<T> {
    /// m/s
    pub max_translation_speed: T,
    /// rad/s
    pub max_rotation_speed: T,
    /// s
    pub tick: T,
}

impl<T: Real> Default for ReplayLimits<T> {
    fn default() -> Self {
        ReplayLimits { max_translation_speed: T::lit(0.25), max_rotation_speed: T::lit(0.5), tick: T::lit(0.01) }
    }
}

impl<T: Real> ReplayLimits<T> {
    pub fn max_translation_step(&self) -> T {
        self.max_translation_speed * self.tick
    }

    pub fn max_rotation_step(&self) -> T {
        self.max_rotation_speed * self.tick
    }

    /// Largest fraction of a per-tick limit used by the step `a → b`; ≤ 1 is admissible.
    pub fn step_ratio(&self, a: &Pose<T>, b: &Pose<T>) -> T {
        let dp = (b.translation.vector - a.translation.vector).norm();
        let dr = angle_between(&a.rotation, &b.rotation);
        (dp / self.max_translation_step()).max(dr / self.max_rotation_step())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayCommand<T: Real> {
    pub t: T,
    pub tcp_pose: Pose<T>,
    /// The step into this command was shortened to respect the limits.
    pub clamped: bool,
    pub gripper: Option<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayPlan<T: Real> {
    pub commands: Vec<ReplayCommand<T>>,
    pub anchor: Pose<T>,
    pub limits: ReplayLimits<T>,
}

impl<T: Real> ReplayPlan<T> {
    pub fn empty(anchor: Pose<T>, limits: ReplayLimits<T>) -> Self {
        ReplayPlan { commands: Vec::new(), anchor, limits }
    }

    pub fn len(&self) -> usize {
        self.commands.len()
    }

    pub fn is_empty(&self) -> bool {
        self.commands.is_empty()
    }

    pub fn duration(&self) -> T {
        self.commands.last().map_or(T::zero(), |c| c.t)
    }

    pub fn clamped_count(&self) -> usize {
        self.commands.iter().filter(|c| c.clamped).count()
    }
}

/// Piecewise path through the source samples, parameterized by s ∈ [0, n−1].
struct SourcePath<'a, T: Real> {
    poses: &'a [Pose<T>],
    times: Vec<T>,
    gripper: Option<&'a [T]>,
}

impl<T: Real> SourcePath<'_, T> {
    fn last(&self) -> T {
        T::lit((self.poses.len() - 1) as f64)
    }

    fn split(&self, s: T) -> (usize, T) {
        let n = self.poses.len();
        if n < 2 {
            return (0, T::zero());
        }
        let j = s.floor().as_f64().max(0.0) as usize;
        let j = j.min(n - 2);
        (j, s - T::lit(j as f64))
    }

    fn pose_at(&self, s: T) -> Pose<T> {
        if self.poses.len() < 2 {
            return self.poses[0];
        }
        let (j, f) = self.split(s);
        if f == T::zero() {
            self.poses[j]
        } else if f == T::one() {
            self.poses[j + 1]
        } else {
            interpolate(&self.poses[j], &self.poses[j + 1], f)
        }
    }

    fn gripper_at(&self, s: T) -> Option<T> {
        let g = self.gripper?;
        if g.len() < 2 {
            return g.first().copied();
        }
        let (j, f) = self.split(s);
        Some(g[j] + (g[j + 1] - g[j]) * f)
    }

    fn time_at(&self, s: T) -> T {
        if self.poses.len() < 2 {
            return T::zero();
        }
        let (j, f) = self.split(s);
        self.times[j] + (self.times[j + 1] - self.times[j]) * f
    }

    /// Largest s whose time does not exceed τ. Zero-duration segments are passed whole.
    fn s_at_time(&self, tau: T) -> T {
        let n = self.poses.len();
        if n < 2 || tau >= self.times[n - 1] {
            return self.last();
        }
        // first segment that ends after τ
        let j = self.times[1..].partition_point(|t| *t <= tau);
        let (t0, t1) = (self.times[j], self.times[j + 1]);
        T::lit(j as f64) + ((tau - t0) / (t1 - t0)).max(T::zero()).min(T::one())
    }
}

const BISECTION_STEPS: usize = 64;
const MAX_TICKS: usize = 50_000_000;

/// Resamples onto the command grid and enforces the Cartesian limits.
///
/// Timestamps are dilated by `1 / speed_scale`. Each tick advances a virtual source clock by
/// one period; if the pose that far along the path breaks a limit, the command stops at the
/// farthest admissible point on the interpolation arc and the clock resumes from there, so the
/// remainder of the trajectory is delayed rather than skipped. Limits hold to a relative
/// 1e-10 (floating point slack on exactly-at-limit steps).
pub fn resample_and_clamp<T: Real>(
    poses: &[Pose<T>],
    timestamps: &[T],
    limits: &ReplayLimits<T>,
    speed_scale: T,
) -> Result<ReplayPlan<T>, ReplayError> {
    resample_and_clamp_with_gripper(poses, timestamps, None, limits, speed_scale)
}

/// As [`resample_and_clamp`], carrying a scalar gripper channel through by linear interpolation.
pub fn resample_and_clamp_with_gripper<T: Real>(
    poses: &[Pose<T>],
    timestamps: &[T],
    gripper: Option<&[T]>,
    limits: &ReplayLimits<T>,
    speed_scale: T,
) -> Result<ReplayPlan<T>, ReplayError> {
    if poses.is_empty() {
        return Err(ReplayError::EmptyEpisode);
    }
    if poses.len() != timestamps.len() {
        return Err(ReplayError::LengthMismatch(poses.len(), timestamps.len()));
    }
    if let Some(g) = gripper {
        if g.len() != poses.len() {
            return Err(ReplayError::LengthMismatch(poses.len(), g.len()));
        }
    }
    if !(speed_scale.is_finite() && speed_scale > T::zero()) {
        return Err(ReplayError::InvalidSpeedScale(speed_scale.as_f64()));
    }
    if timestamps.iter().any(|t| !t.is_finite()) || timestamps.windows(2).any(|w| w[1] < w[0]) {
        return Err(ReplayError::DegenerateTimestamps);
    }
    let t0 = timestamps[0];
    let path = SourcePath { poses, times: timestamps.iter().map(|t| (*t - t0) / speed_scale).collect(), gripper };
    let slack = T::one() + T::lit(1e-10);
    let end = path.last();

    let mut commands = vec![ReplayCommand { t: T::zero(), tcp_pose: poses[0], clamped: false, gripper: path.gripper_at(T::zero()) }];
    let (mut s, mut tau) = (T::zero(), T::zero());
    let mut current = poses[0];
    while s < end && commands.len() < MAX_TICKS {
        let goal_tau = tau + limits.tick;
        let goal = path.s_at_time(goal_tau).max(s);
        let candidate = path.pose_at(goal);
        let (next_s, pose, clamped) = if limits.step_ratio(&current, &candidate) <= slack {
            tau = goal_tau;
            (goal, candidate, false)
        } else {
            let (mut lo, mut hi) = (s, goal);
            let mut best = current;
            for _ in 0..BISECTION_STEPS {
                let mid = (lo + hi) * T::lit(0.5);
                if mid <= lo || mid >= hi {
                    break;
                }
                let p = path.pose_at(mid);
                if limits.step_ratio(&current, &p) <= T::one() {
                    lo = mid;
                    best = p;
                } else {
                    hi = mid;
                }
            }
            tau = tau.max(path.time_at(lo));
            (lo, best, true)
        };
        s = next_s;
        current = pose;
        commands.push(ReplayCommand {
            t: T::lit(commands.len() as f64) * limits.tick,
            tcp_pose: pose,
            clamped,
            gripper: path.gripper_at(s),
        });
    }
    Ok(ReplayPlan { commands, anchor: poses[0], limits: *limits })
}
