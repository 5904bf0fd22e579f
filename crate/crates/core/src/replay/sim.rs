use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{ReplayError, ReplayPlan};
use crate::kinematics::{dls_ik, forward_kinematics, IkParams, RobotModel};
use crate::pose::angle_between;
use crate::{Pose, Real};

/// Kinematic stand-in for the physical arm: one IK solve per tick, joint motion capped by
/// the velocity limits.
#[derive(Debug, Clone)]
pub struct SimulatedRobot<T: Real> {
    model: RobotModel<T>,
    q: DVector<T>,
    pub ik_params: IkParams<T>,
    trace: Vec<DVector<T>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome<T> {
    pub position_error: T,
    pub orientation_error: T,
    pub ik_residual: T,
    pub reachable: bool,
    pub saturated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub tick: usize,
    pub t: f64,
    /// Commanded vs. reached TCP after the tick, m.
    pub position_error: f64,
    /// rad
    pub orientation_error: f64,
    pub ik_residual: f64,
    pub reachable: bool,
    /// The IK step had to be slowed to respect a joint velocity limit.
    pub saturated: bool,
}

impl TickRecord {
    pub fn infeasible(&self) -> bool {
        !self.reachable || self.saturated
    }
}

impl<T: Real> SimulatedRobot<T> {
    pub fn new(model: RobotModel<T>, q: DVector<T>) -> Result<Self, ReplayError> {
        model.check_dimension(&q)?;
        let mut q = q;
        model.clamp(&mut q);
        Ok(SimulatedRobot { model, trace: vec![q.clone()], q, ik_params: IkParams::default() })
    }

    pub fn model(&self) -> &RobotModel<T> {
        &self.model
    }

    pub fn q(&self) -> &DVector<T> {
        &self.q
    }

    /// Joint configurations, one per executed tick plus the initial one.
    pub fn trace(&self) -> &[DVector<T>] {
        &self.trace
    }

    pub fn tcp(&self) -> Pose<T> {
        forward_kinematics(&self.model, &self.q).expect("dimension checked").ee_pose
    }

    /// Advances exactly one tick of length `dt` toward `target`.
    pub fn step(&mut self, target: &Pose<T>, dt: T) -> Result<StepOutcome<T>, ReplayError> {
        let sol = dls_ik(&self.model, target, &self.q, &self.ik_params)?;
        let mut dq = &sol.q - &self.q;
        let vmax = self.model.velocity_limits();
        let ratio = dq.iter().zip(vmax.iter()).map(|(d, v)| d.abs() / (*v * dt)).fold(T::zero(), T::max);
        let saturated = ratio > T::one() + T::lit(1e-9);
        if ratio > T::one() {
            dq /= ratio;
        }
        self.q += dq;
        self.model.clamp(&mut self.q);
        self.trace.push(self.q.clone());
        let reached = self.tcp();
        Ok(StepOutcome {
            position_error: (reached.translation.vector - target.translation.vector).norm(),
            orientation_error: angle_between(&reached.rotation, &target.rotation),
            ik_residual: sol.residual,
            reachable: sol.is_reachable(&self.ik_params),
            saturated,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionReport {
    pub ticks: usize,
    pub planned_ticks: usize,
    /// All planned ticks ran (not cancelled).
    pub completed: bool,
    /// Completed with no infeasible tick.
    pub success: bool,
    pub duration: f64,
    pub max_tracking_error: f64,
    pub mean_tracking_error: f64,
    pub max_orientation_error: f64,
    pub saturated_ticks: usize,
    pub infeasible_ticks: Vec<usize>,
    pub tracking_errors: Vec<f64>,
}

pub fn execute<T: Real>(plan: &ReplayPlan<T>, robot: &mut SimulatedRobot<T>) -> Result<ExecutionReport, ReplayError> {
    execute_with(plan, robot, |_| true)
}

/// Runs the plan tick by tick; `observer` sees every tick and stops execution by returning false.
pub fn execute_with<T: Real>(
    plan: &ReplayPlan<T>,
    robot: &mut SimulatedRobot<T>,
    mut observer: impl FnMut(&TickRecord) -> bool,
) -> Result<ExecutionReport, ReplayError> {
    let mut report = ExecutionReport {
        ticks: 0,
        planned_ticks: plan.len(),
        completed: true,
        success: true,
        duration: 0.0,
        max_tracking_error: 0.0,
        mean_tracking_error: 0.0,
        max_orientation_error: 0.0,
        saturated_ticks: 0,
        infeasible_ticks: Vec::new(),
        tracking_errors: Vec::with_capacity(plan.len()),
    };
    for (i, cmd) in plan.commands.iter().enumerate() {
        let out = robot.step(&cmd.tcp_pose, plan.limits.tick)?;
        let rec = TickRecord {
            tick: i,
            t: cmd.t.as_f64(),
            position_error: out.position_error.as_f64(),
            orientation_error: out.orientation_error.as_f64(),
            ik_residual: out.ik_residual.as_f64(),
            reachable: out.reachable,
            saturated: out.saturated,
        };
        report.ticks += 1;
        report.duration = rec.t;
        report.max_tracking_error = report.max_tracking_error.max(rec.position_error);
        report.max_orientation_error = report.max_orientation_error.max(rec.orientation_error);
        report.saturated_ticks += rec.saturated as usize;
        if rec.infeasible() {
            report.infeasible_ticks.push(i);
        }
        report.tracking_errors.push(rec.position_error);
        if !observer(&rec) {
            report.completed = i + 1 == plan.len();
            break;
        }
    }
    if report.ticks > 0 {
        report.mean_tracking_error = report.tracking_errors.iter().sum::<f64>() / report.ticks as f64;
    }
    report.success = report.completed && report.infeasible_ticks.is_empty();
    Ok(report)
}
