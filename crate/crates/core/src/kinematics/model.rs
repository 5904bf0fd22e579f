use nalgebra::{DVector, Unit, Vector3};

use super::KinematicsError;
use crate::collision::CollisionShape;
use crate::{Pose, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JointKind {
    Revolute,
    Prismatic,
    Fixed,
}

impl JointKind {
    pub fn is_actuated(self) -> bool {
        !matches!(self, JointKind::Fixed)
    }
}

/// Position limits in rad or m, velocity limit in rad/s or m/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointLimits<T> {
    pub lower: T,
    pub upper: T,
    pub velocity: T,
}

#[derive(Debug, Clone)]
pub struct Joint<T: Real> {
    pub name: String,
    pub kind: JointKind,
    pub axis: Unit<Vector3<T>>,
    /// Parent link frame to joint frame.
    pub origin: Pose<T>,
    /// Present for every actuated joint.
    pub limits: Option<JointLimits<T>>,
}

#[derive(Debug, Clone)]
pub struct Link<T: Real> {
    pub name: String,
    pub collision_shapes: Vec<CollisionShape<T>>,
}

impl<T: Real> Link<T> {
    pub fn new(name: impl Into<String>) -> Self {
        Link { name: name.into(), collision_shapes: Vec::new() }
    }

    pub fn with_shapes(name: impl Into<String>, shapes: Vec<CollisionShape<T>>) -> Self {
        Link { name: name.into(), collision_shapes: shapes }
    }
}

pub type JointConfig<T> = DVector<T>;

/// A serial kinematic chain from the base link to the end-effector link.
///
/// `links[0]` is the base; `joints[i]` connects `links[i]` to `links[i + 1]`, so the
/// end-effector is always the last link.
#[derive(Debug, Clone)]
pub struct RobotModel<T: Real> {
    pub name: String,
    pub joints: Vec<Joint<T>>,
    pub links: Vec<Link<T>>,
    pub ee_link: usize,
    pub dof: usize,
    actuated: Vec<usize>,
    /// Unsupported elements skipped while loading.
    pub warnings: Vec<String>,
}

impl<T: Real> RobotModel<T> {
    /// Assembles a chain, checking axis normalization and limit validity.
    pub fn from_chain(
        name: impl Into<String>,
        base: Link<T>,
        chain: Vec<(Joint<T>, Link<T>)>,
    ) -> Result<Self, KinematicsError> {
        let mut joints = Vec::with_capacity(chain.len());
        let mut links = Vec::with_capacity(chain.len() + 1);
        links.push(base);
        for (joint, link) in chain {
            joints.push(joint);
            links.push(link);
        }
        let tol = T::lit(1e-9);
        let mut actuated = Vec::new();
        for (i, j) in joints.iter().enumerate() {
            if !j.kind.is_actuated() {
                continue;
            }
            if (j.axis.norm() - T::one()).abs() > tol {
                return Err(KinematicsError::MalformedDocument(format!(
                    "joint {} axis is not unit length",
                    j.name
                )));
            }
            let lim = j
                .limits
                .ok_or_else(|| KinematicsError::MissingLimits(j.name.clone()))?;
            let finite = lim.lower.is_finite() && lim.upper.is_finite() && lim.velocity.is_finite();
            if !finite || lim.lower >= lim.upper || lim.velocity <= T::zero() {
                return Err(KinematicsError::MissingLimits(j.name.clone()));
            }
            actuated.push(i);
        }
        for l in &links {
            if l.collision_shapes.iter().any(|s| !(s.radius() > T::zero())) {
                return Err(KinematicsError::MalformedDocument(format!(
                    "link {} has a collision shape with non-positive radius",
                    l.name
                )));
            }
        }
        let ee_link = links.len() - 1;
        Ok(RobotModel {
            name: name.into(),
            dof: actuated.len(),
            joints,
            links,
            ee_link,
            actuated,
            warnings: Vec::new(),
        })
    }

    /// Indices into `joints` of the actuated joints, base to tip.
    pub fn actuated_joints(&self) -> &[usize] {
        &self.actuated
    }

    pub fn link_index(&self, name: &str) -> Option<usize> {
        self.links.iter().position(|l| l.name == name)
    }

    pub fn ee_link_name(&self) -> &str {
        &self.links[self.ee_link].name
    }

    fn limit(&self, k: usize) -> JointLimits<T> {
        self.joints[self.actuated[k]].limits.expect("actuated joints carry limits")
    }

    pub fn lower_limits(&self) -> DVector<T> {
        DVector::from_fn(self.dof, |k, _| self.limit(k).lower)
    }

    pub fn upper_limits(&self) -> DVector<T> {
        DVector::from_fn(self.dof, |k, _| self.limit(k).upper)
    }

    pub fn velocity_limits(&self) -> DVector<T> {
        DVector::from_fn(self.dof, |k, _| self.limit(k).velocity)
    }

    /// Clamps each coordinate into its position limits.
    pub fn clamp(&self, q: &mut DVector<T>) {
        for k in 0..self.dof {
            let lim = self.limit(k);
            q[k] = q[k].clamp(lim.lower, lim.upper);
        }
    }

    pub fn within_limits(&self, q: &DVector<T>) -> bool {
        (0..self.dof).all(|k| {
            let lim = self.limit(k);
            q[k] >= lim.lower && q[k] <= lim.upper
        })
    }

    /// Zero configuration clamped into the limits.
    pub fn neutral_configuration(&self) -> DVector<T> {
        let mut q = DVector::zeros(self.dof);
        self.clamp(&mut q);
        q
    }

    pub fn check_dimension(&self, q: &DVector<T>) -> Result<(), KinematicsError> {
        if q.len() != self.dof {
            return Err(KinematicsError::DimensionMismatch { expected: self.dof, got: q.len() });
        }
        Ok(())
    }
}
