use nalgebra::{DMatrix, DVector, Vector6};

use super::fk::{forward_kinematics, jacobian_from_poses, ChainPoses};
use super::model::RobotModel;
use super::KinematicsError;
use crate::pose::{orientation_error, pose_is_finite};
use crate::{Pose, Real};

/// Optional secondary objective pulling the redundant DoF toward a rest posture.
#[derive(Debug, Clone)]
pub struct NullspaceBias<T: Real> {
    pub rest: DVector<T>,
    pub gain: T,
}

#[derive(Debug, Clone)]
pub struct IkParams<T: Real> {
    /// Damping λ in Jᵀ(JJᵀ + λ²I)⁻¹.
    pub damping: T,
    pub max_iterations: usize,
    /// Reachability threshold ε on the weighted residual.
    pub residual_threshold: T,
    pub position_tolerance: T,
    pub orientation_tolerance: T,
    /// Weight on the orientation error (rad) when combining it with position error (m).
    pub orientation_weight: T,
    /// Iteration stops early once the weighted residual drops below this.
    pub convergence_tolerance: T,
    pub nullspace: Option<NullspaceBias<T>>,
}

impl<T: Real> Default for IkParams<T> {
    fn default() -> Self {
        IkParams {
            damping: T::lit(0.05),
            max_iterations: 50,
            residual_threshold: T::lit(0.005),
            position_tolerance: T::lit(0.002),
            orientation_tolerance: T::lit(0.5_f64.to_radians()),
            orientation_weight: T::lit(0.1),
            convergence_tolerance: T::lit(1e-6),
            nullspace: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct IkSolution<T: Real> {
    pub q: DVector<T>,
    /// Weighted twist error ‖[Δp; w·Δθ]‖, raised to at least ε whenever either the
    /// position or the orientation tolerance is violated.
    pub residual: T,
    pub iterations: usize,
    pub position_error: T,
    pub orientation_error: T,
    /// Forward kinematics at `q`.
    pub chain: ChainPoses<T>,
}

impl<T: Real> IkSolution<T> {
    pub fn is_reachable(&self, params: &IkParams<T>) -> bool {
        self.residual < params.residual_threshold
    }
}

fn twist_error<T: Real>(target: &Pose<T>, current: &Pose<T>) -> Vector6<T> {
    let dp = target.translation.vector - current.translation.vector;
    let dr = orientation_error(&target.rotation, &current.rotation);
    Vector6::new(dp.x, dp.y, dp.z, dr.x, dr.y, dr.z)
}

/// Damped-least-squares IK warm-started from `seed`.
///
/// Each update is Δq = Jᵀ(JJᵀ + λ²I)⁻¹e where e stacks position error and the axis-angle
/// of R_target·R_currentᵀ; every iterate is clamped to the position limits.
pub fn dls_ik<T: Real>(
    model: &RobotModel<T>,
    target: &Pose<T>,
    seed: &DVector<T>,
    params: &IkParams<T>,
) -> Result<IkSolution<T>, KinematicsError> {
    model.check_dimension(seed)?;
    if !pose_is_finite(target) || seed.iter().any(|v| !v.is_finite()) {
        return Err(KinematicsError::NonFiniteInput);
    }
    let mut q = seed.clone();
    model.clamp(&mut q);
    let lambda2 = params.damping * params.damping;
    let (lower, upper) = (model.lower_limits(), model.upper_limits());
    let w = params.orientation_weight;
    let mut iterations = 0;
    let mut stalled = false;
    loop {
        let chain = forward_kinematics(model, &q)?;
        let e = twist_error(target, &chain.ee_pose);
        let pos = e.fixed_rows::<3>(0).norm();
        let rot = e.fixed_rows::<3>(3).norm();
        let weighted = (pos * pos + w * w * rot * rot).sqrt();
        if stalled || weighted < params.convergence_tolerance || iterations >= params.max_iterations {
            let mut residual = weighted;
            if pos >= params.position_tolerance || rot >= params.orientation_tolerance {
                residual = residual.max(params.residual_threshold);
            }
            return Ok(IkSolution { q, residual, iterations, position_error: pos, orientation_error: rot, chain });
        }

        let full = jacobian_from_poses(model, &chain);
        let e_dyn = DVector::from_column_slice(e.as_slice());
        // Joints resting on a limit and pushed further out are frozen and the step re-solved
        // over the rest; otherwise the clamp swallows their share and the iteration stalls.
        let mut free = vec![true; model.dof];
        let dq = loop {
            let mut j = full.clone();
            for (c, f) in free.iter().enumerate() {
                if !f {
                    j.column_mut(c).fill(T::zero());
                }
            }
            let jt = j.transpose();
            let mut a = &j * &jt;
            for i in 0..a.nrows() {
                a[(i, i)] += lambda2;
            }
            let chol = a.cholesky().ok_or(KinematicsError::NonFiniteInput)?;
            let mut dq = &jt * chol.solve(&e_dyn);
            if let Some(bias) = &params.nullspace {
                let mut grad = (&bias.rest - &q) * bias.gain;
                for (c, f) in free.iter().enumerate() {
                    if !f {
                        grad[c] = T::zero();
                    }
                }
                // (I − J⁺J) applied to the posture gradient, with the damped pseudo-inverse
                let pinv_j: DMatrix<T> = &jt * chol.solve(&j);
                dq += &grad - pinv_j * &grad;
            }
            let mut changed = false;
            for i in 0..model.dof {
                let pushing = (q[i] <= lower[i] && dq[i] < T::zero()) || (q[i] >= upper[i] && dq[i] > T::zero());
                if free[i] && pushing {
                    free[i] = false;
                    changed = true;
                }
            }
            if !changed {
                break dq;
            }
        };
        let prev = q.clone();
        q += dq;
        model.clamp(&mut q);
        iterations += 1;
        // pinned against limits or at a local minimum
        stalled = (&q - &prev).amax() < T::default_epsilon();
    }
}
