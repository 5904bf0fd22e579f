use super::{Capsule, CollisionError};
use crate::kinematics::{JointKind, RobotModel};
use crate::{Pose, Real};

pub const DEFAULT_MARGIN: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CollisionPair {
    /// Two link indices, `a < b`.
    Links(usize, usize),
    /// A link against a static obstacle (index into the obstacle list).
    Obstacle(usize, usize),
}

#[derive(Debug, Clone)]
pub struct CollisionSet<T: Real> {
    /// Link-frame capsules, indexed by link.
    pub shapes_per_link: Vec<Vec<Capsule<T>>>,
    /// Link pairs at chain distance ≥ 2, both carrying shapes.
    pub check_pairs: Vec<(usize, usize)>,
    pub margin: T,
    /// Base-frame static obstacles. Empty unless enabled with [`CollisionSet::with_obstacles`].
    pub obstacles: Vec<Capsule<T>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollisionReport<T> {
    /// Whether `min_clearance < margin`.
    pub colliding: bool,
    pub min_clearance: T,
    pub worst_pair: Option<CollisionPair>,
}

/// Rigid-body index of each link: links joined by a fixed joint share a body.
fn body_indices<T: Real>(model: &RobotModel<T>) -> Vec<usize> {
    let mut body = Vec::with_capacity(model.links.len());
    body.push(0);
    for (i, joint) in model.joints.iter().enumerate() {
        let prev = body[i];
        body.push(if joint.kind == JointKind::Fixed { prev } else { prev + 1 });
    }
    body
}

pub fn build_collision_set<T: Real>(model: &RobotModel<T>, margin: T) -> CollisionSet<T> {
    let shapes_per_link: Vec<Vec<Capsule<T>>> = model
        .links
        .iter()
        .map(|l| l.collision_shapes.iter().map(|s| s.as_capsule()).collect())
        .collect();
    let body = body_indices(model);
    let mut check_pairs = Vec::new();
    for a in 0..model.links.len() {
        for b in a + 1..model.links.len() {
            if body[b] - body[a] >= 2 && !shapes_per_link[a].is_empty() && !shapes_per_link[b].is_empty() {
                check_pairs.push((a, b));
            }
        }
    }
    CollisionSet { shapes_per_link, check_pairs, margin: margin.max(T::zero()), obstacles: Vec::new() }
}

impl<T: Real> CollisionSet<T> {
    /// Adds static base-frame obstacles checked against every shaped link.
    pub fn with_obstacles(mut self, obstacles: Vec<Capsule<T>>) -> Self {
        self.obstacles = obstacles;
        self
    }
}

pub fn check_self_collision<T: Real>(
    set: &CollisionSet<T>,
    link_poses: &[Pose<T>],
) -> Result<CollisionReport<T>, CollisionError> {
    let mut world: Vec<Vec<Capsule<T>>> = Vec::with_capacity(set.shapes_per_link.len());
    for (link, shapes) in set.shapes_per_link.iter().enumerate() {
        if shapes.is_empty() {
            world.push(Vec::new());
            continue;
        }
        let pose = link_poses.get(link).ok_or(CollisionError::MissingPose(link))?;
        world.push(shapes.iter().map(|c| c.transformed(pose)).collect());
    }

    let mut min_clearance = T::max_value().unwrap_or_else(T::one);
    let mut worst_pair = None;
    for &(a, b) in &set.check_pairs {
        for ca in &world[a] {
            for cb in &world[b] {
                let c = ca.clearance(cb)?;
                if c < min_clearance {
                    min_clearance = c;
                    worst_pair = Some(CollisionPair::Links(a, b));
                }
            }
        }
    }
    if !set.obstacles.is_empty() {
        for link in 0..world.len() {
            for (oi, ob) in set.obstacles.iter().enumerate() {
                for cl in &world[link] {
                    let c = cl.clearance(ob)?;
                    if c < min_clearance {
                        min_clearance = c;
                        worst_pair = Some(CollisionPair::Obstacle(link, oi));
                    }
                }
            }
        }
    }
    Ok(CollisionReport { colliding: min_clearance < set.margin, min_clearance, worst_pair })
}
