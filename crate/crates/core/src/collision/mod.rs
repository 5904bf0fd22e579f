//! Self-collision checking with capsules and spheres over non-adjacent link pairs.

mod segment;
mod set;

use nalgebra::Vector3;
use thiserror::Error;

use crate::{Pose, Real};

pub use segment::{closest_parameters, segment_distance};
pub use set::{build_collision_set, check_self_collision, CollisionPair, CollisionReport, CollisionSet, DEFAULT_MARGIN};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CollisionError {
    #[error("non-finite input")]
    NonFiniteInput,
    #[error("no pose supplied for link index {0}")]
    MissingPose(usize),
}

/// Segment swept by a sphere. `p0 == p1` degenerates to a sphere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Capsule<T: Real> {
    pub p0: Vector3<T>,
    pub p1: Vector3<T>,
    pub radius: T,
}

impl<T: Real> Capsule<T> {
    pub fn new(p0: Vector3<T>, p1: Vector3<T>, radius: T) -> Self {
        Capsule { p0, p1, radius }
    }

    pub fn sphere(center: Vector3<T>, radius: T) -> Self {
        Capsule { p0: center, p1: center, radius }
    }

    pub fn transformed(&self, pose: &Pose<T>) -> Self {
        Capsule {
            p0: pose.transform_point(&self.p0.into()).coords,
            p1: pose.transform_point(&self.p1.into()).coords,
            radius: self.radius,
        }
    }

    /// Surface-to-surface distance; negative when the capsules overlap.
    pub fn clearance(&self, other: &Capsule<T>) -> Result<T, CollisionError> {
        Ok(segment_distance(&self.p0, &self.p1, &other.p0, &other.p1)? - self.radius - other.radius)
    }
}

/// Collision geometry attached to a link, in the link frame.
#[derive(Debug, Clone, PartialEq)]
pub enum CollisionShape<T: Real> {
    Capsule(Capsule<T>),
    Sphere { center: Vector3<T>, radius: T },
}

impl<T: Real> CollisionShape<T> {
    pub fn radius(&self) -> T {
        match self {
            CollisionShape::Capsule(c) => c.radius,
            CollisionShape::Sphere { radius, .. } => *radius,
        }
    }

    pub fn as_capsule(&self) -> Capsule<T> {
        match self {
            CollisionShape::Capsule(c) => *c,
            CollisionShape::Sphere { center, radius } => Capsule::sphere(*center, *radius),
        }
    }
}
