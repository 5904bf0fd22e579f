//! Loader for the URDF subset needed by the feasibility pipeline.
//!
//! Supported: `<robot>`, `<link>`, `<joint>` of type revolute, continuous (with explicit
//! limits), prismatic or fixed, `<origin>`, `<axis>`, `<limit>` and `<collision>` geometry.
//! Cylinders become capsules, spheres stay spheres, boxes get a bounding capsule and meshes
//! a capsule spanning the link from its joint to the next joint.

use std::collections::{BTreeSet, HashMap};

use nalgebra::{Translation3, Unit, UnitQuaternion, Vector3};

use super::model::{Joint, JointKind, JointLimits, Link, RobotModel};
use super::KinematicsError;
use crate::collision::{Capsule, CollisionShape};
use crate::{Pose, Real};

#[derive(Debug, Clone)]
pub struct UrdfOptions {
    /// End-effector link. When absent the chain is followed from the root to its single leaf.
    pub ee_link: Option<String>,
    /// Radius of the capsule substituted for mesh collision geometry.
    pub mesh_capsule_radius: f64,
}

impl Default for UrdfOptions {
    fn default() -> Self {
        UrdfOptions { ee_link: None, mesh_capsule_radius: 0.05 }
    }
}

pub fn load_urdf<T: Real>(text: &str) -> Result<RobotModel<T>, KinematicsError> {
    load_urdf_with(text, &UrdfOptions::default())
}

struct RawJoint<T: Real> {
    name: String,
    kind: JointKind,
    parent: String,
    child: String,
    origin: Pose<T>,
    axis: Vector3<T>,
    limits: Option<JointLimits<T>>,
}

enum RawGeometry<T: Real> {
    Shape(CollisionShape<T>),
    Mesh,
}

struct RawLink<T: Real> {
    geometry: Vec<RawGeometry<T>>,
}

fn malformed(msg: impl Into<String>) -> KinematicsError {
    KinematicsError::MalformedDocument(msg.into())
}

fn parse_floats<const N: usize>(text: &str, what: &str) -> Result<[f64; N], KinematicsError> {
    let values: Vec<f64> = text
        .split_whitespace()
        .map(|s| s.parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| malformed(format!("{what}: {e}")))?;
    values
        .try_into()
        .map_err(|v: Vec<f64>| malformed(format!("{what}: expected {N} values, got {}", v.len())))
}

fn attr_f64(node: roxmltree::Node, name: &str) -> Result<Option<f64>, KinematicsError> {
    match node.attribute(name) {
        None => Ok(None),
        Some(s) => s
            .trim()
            .parse::<f64>()
            .map(Some)
            .map_err(|e| malformed(format!("<{}> attribute {name}: {e}", node.tag_name().name()))),
    }
}

fn parse_origin<T: Real>(node: Option<roxmltree::Node>) -> Result<Pose<T>, KinematicsError> {
    let Some(node) = node else {
        return Ok(Pose::identity());
    };
    let xyz = match node.attribute("xyz") {
        Some(s) => parse_floats::<3>(s, "origin xyz")?,
        None => [0.0; 3],
    };
    let rpy = match node.attribute("rpy") {
        Some(s) => parse_floats::<3>(s, "origin rpy")?,
        None => [0.0; 3],
    };
    Ok(Pose::from_parts(
        Translation3::new(T::lit(xyz[0]), T::lit(xyz[1]), T::lit(xyz[2])),
        UnitQuaternion::from_euler_angles(T::lit(rpy[0]), T::lit(rpy[1]), T::lit(rpy[2])),
    ))
}

fn child<'a, 'i>(node: roxmltree::Node<'a, 'i>, name: &str) -> Option<roxmltree::Node<'a, 'i>> {
    node.children().find(|c| c.is_element() && c.tag_name().name() == name)
}

fn parse_collision<T: Real>(node: roxmltree::Node) -> Result<Option<RawGeometry<T>>, KinematicsError> {
    let origin: Pose<T> = parse_origin(child(node, "origin"))?;
    let Some(geometry) = child(node, "geometry") else {
        return Ok(None);
    };
    let Some(shape) = geometry.children().find(|c| c.is_element()) else {
        return Ok(None);
    };
    let at = |x: f64, y: f64, z: f64| origin * nalgebra::Point3::new(T::lit(x), T::lit(y), T::lit(z));
    let geom = match shape.tag_name().name() {
        "cylinder" => {
            let radius = attr_f64(shape, "radius")?.ok_or_else(|| malformed("cylinder without radius"))?;
            let length = attr_f64(shape, "length")?.ok_or_else(|| malformed("cylinder without length"))?;
            let half = length / 2.0;
            RawGeometry::Shape(CollisionShape::Capsule(Capsule::new(
                at(0.0, 0.0, -half).coords,
                at(0.0, 0.0, half).coords,
                T::lit(radius),
            )))
        }
        "sphere" => {
            let radius = attr_f64(shape, "radius")?.ok_or_else(|| malformed("sphere without radius"))?;
            RawGeometry::Shape(CollisionShape::Sphere { center: at(0.0, 0.0, 0.0).coords, radius: T::lit(radius) })
        }
        "box" => {
            let size = parse_floats::<3>(shape.attribute("size").unwrap_or(""), "box size")?;
            // segment along the longest edge, radius covering the cross-section diagonal
            let long = (0..3).max_by(|&a, &b| size[a].total_cmp(&size[b])).unwrap_or(0);
            let others: Vec<f64> = (0..3).filter(|&i| i != long).map(|i| size[i]).collect();
            let radius = 0.5 * (others[0] * others[0] + others[1] * others[1]).sqrt();
            let mut a = [0.0; 3];
            let mut b = [0.0; 3];
            a[long] = -size[long] / 2.0;
            b[long] = size[long] / 2.0;
            RawGeometry::Shape(CollisionShape::Capsule(Capsule::new(
                at(a[0], a[1], a[2]).coords,
                at(b[0], b[1], b[2]).coords,
                T::lit(radius.max(1e-6)),
            )))
        }
        _ => RawGeometry::Mesh,
    };
    Ok(Some(geom))
}

pub fn load_urdf_with<T: Real>(text: &str, options: &UrdfOptions) -> Result<RobotModel<T>, KinematicsError> {
    let doc = roxmltree::Document::parse(text).map_err(|e| malformed(e.to_string()))?;
    let robot = doc.root_element();
    if robot.tag_name().name() != "robot" {
        return Err(malformed(format!("root element is <{}>, expected <robot>", robot.tag_name().name())));
    }
    let robot_name = robot.attribute("name").unwrap_or("robot").to_string();

    let mut warnings = BTreeSet::new();
    let mut link_order = Vec::new();
    let mut links: HashMap<String, RawLink<T>> = HashMap::new();
    let mut joints: Vec<RawJoint<T>> = Vec::new();

    for node in robot.children().filter(|n| n.is_element()) {
        match node.tag_name().name() {
            "link" => {
                let name = node.attribute("name").ok_or_else(|| malformed("<link> without name"))?;
                let mut geometry = Vec::new();
                for c in node.children().filter(|c| c.is_element()) {
                    match c.tag_name().name() {
                        "collision" => {
                            if let Some(g) = parse_collision(c)? {
                                geometry.push(g);
                            }
                        }
                        "visual" | "inertial" => {}
                        other => {
                            warnings.insert(format!("ignored <{other}> in link {name}"));
                        }
                    }
                }
                if links.insert(name.to_string(), RawLink { geometry }).is_some() {
                    return Err(malformed(format!("duplicate link {name}")));
                }
                link_order.push(name.to_string());
            }
            "joint" => joints.push(parse_joint(node, &mut warnings)?),
            other => {
                warnings.insert(format!("ignored <{other}>"));
            }
        }
    }

    if links.is_empty() {
        return Err(malformed("no links"));
    }
    for j in &joints {
        for l in [&j.parent, &j.child] {
            if !links.contains_key(l) {
                return Err(malformed(format!("joint {} references unknown link {l}", j.name)));
            }
        }
    }

    let mut children: HashMap<&str, Vec<usize>> = HashMap::new();
    let mut has_parent: HashMap<&str, usize> = HashMap::new();
    for (i, j) in joints.iter().enumerate() {
        children.entry(j.parent.as_str()).or_default().push(i);
        if has_parent.insert(j.child.as_str(), i).is_some() {
            return Err(malformed(format!("link {} has more than one parent joint", j.child)));
        }
    }
    let roots: Vec<&String> = link_order.iter().filter(|l| !has_parent.contains_key(l.as_str())).collect();
    if roots.len() != 1 {
        return Err(malformed(format!("expected a single root link, found {}", roots.len())));
    }

    // joint path root → ee
    let path: Vec<usize> = match &options.ee_link {
        Some(ee) => {
            if !links.contains_key(ee) {
                return Err(malformed(format!("end-effector link {ee} not found")));
            }
            let mut path = Vec::new();
            let mut cur = ee.as_str();
            while let Some(&ji) = has_parent.get(cur) {
                path.push(ji);
                cur = joints[ji].parent.as_str();
                if path.len() > joints.len() {
                    return Err(malformed("kinematic loop"));
                }
            }
            path.reverse();
            for &ji in &path {
                let parent = joints[ji].parent.as_str();
                if children.get(parent).map_or(0, |c| c.len()) > 1 {
                    return Err(KinematicsError::BranchingChain(parent.to_string()));
                }
            }
            path
        }
        None => {
            let mut path = Vec::new();
            let mut cur = roots[0].as_str();
            while let Some(cs) = children.get(cur) {
                if cs.len() > 1 {
                    return Err(KinematicsError::BranchingChain(cur.to_string()));
                }
                path.push(cs[0]);
                cur = joints[cs[0]].child.as_str();
                if path.len() > joints.len() {
                    return Err(malformed("kinematic loop"));
                }
            }
            path
        }
    };

    let base_name = path.first().map_or(roots[0].clone(), |&ji| joints[ji].parent.clone());
    let mesh_radius = T::lit(options.mesh_capsule_radius);
    // next joint origin in each link's frame, for mesh capsules
    let next_origin = |link: &str| -> Option<Vector3<T>> {
        path.iter()
            .find(|&&ji| joints[ji].parent == link)
            .map(|&ji| joints[ji].origin.translation.vector)
    };
    let build_link = |name: &str| -> Link<T> {
        let raw = &links[name];
        let shapes = raw
            .geometry
            .iter()
            .map(|g| match g {
                RawGeometry::Shape(s) => s.clone(),
                RawGeometry::Mesh => match next_origin(name) {
                    Some(end) => CollisionShape::Capsule(Capsule::new(Vector3::zeros(), end, mesh_radius)),
                    None => CollisionShape::Sphere { center: Vector3::zeros(), radius: mesh_radius },
                },
            })
            .collect();
        Link::with_shapes(name, shapes)
    };

    let base = build_link(&base_name);
    let chain = path
        .iter()
        .map(|&ji| {
            let j = &joints[ji];
            let axis = if j.kind.is_actuated() {
                Unit::try_new(j.axis, T::lit(1e-12))
                    .ok_or_else(|| malformed(format!("joint {} has a zero axis", j.name)))?
            } else {
                Vector3::x_axis()
            };
            let joint = Joint { name: j.name.clone(), kind: j.kind, axis, origin: j.origin, limits: j.limits };
            Ok((joint, build_link(&j.child)))
        })
        .collect::<Result<Vec<_>, KinematicsError>>()?;

    let on_path: BTreeSet<&str> = std::iter::once(base_name.as_str())
        .chain(path.iter().map(|&ji| joints[ji].child.as_str()))
        .collect();
    for l in &link_order {
        if !on_path.contains(l.as_str()) {
            warnings.insert(format!("link {l} is not on the end-effector chain"));
        }
    }

    let mut model = RobotModel::from_chain(robot_name, base, chain)?;
    model.warnings = warnings.into_iter().collect();
    Ok(model)
}

fn parse_joint<T: Real>(node: roxmltree::Node, warnings: &mut BTreeSet<String>) -> Result<RawJoint<T>, KinematicsError> {
    let name = node.attribute("name").ok_or_else(|| malformed("<joint> without name"))?.to_string();
    let ty = node.attribute("type").ok_or_else(|| malformed(format!("joint {name} without type")))?;
    let kind = match ty {
        "revolute" | "continuous" => JointKind::Revolute,
        "prismatic" => JointKind::Prismatic,
        "fixed" => JointKind::Fixed,
        other => return Err(malformed(format!("joint {name}: unsupported type {other}"))),
    };
    let link_attr = |tag: &str| -> Result<String, KinematicsError> {
        child(node, tag)
            .and_then(|n| n.attribute("link"))
            .map(str::to_string)
            .ok_or_else(|| malformed(format!("joint {name} without <{tag} link=..>")))
    };
    let parent = link_attr("parent")?;
    let child_link = link_attr("child")?;
    let origin = parse_origin(child(node, "origin"))?;
    let axis = match child(node, "axis").and_then(|a| a.attribute("xyz")) {
        Some(s) => {
            let a = parse_floats::<3>(s, "axis xyz")?;
            Vector3::new(T::lit(a[0]), T::lit(a[1]), T::lit(a[2]))
        }
        None => Vector3::x(),
    };
    let limits = if kind.is_actuated() {
        let lim = child(node, "limit").ok_or_else(|| KinematicsError::MissingLimits(name.clone()))?;
        let lower = attr_f64(lim, "lower")?;
        let upper = attr_f64(lim, "upper")?;
        let velocity = attr_f64(lim, "velocity")?;
        match (lower, upper, velocity) {
            (Some(lo), Some(hi), Some(v)) => Some(JointLimits { lower: T::lit(lo), upper: T::lit(hi), velocity: T::lit(v) }),
            _ => return Err(KinematicsError::MissingLimits(name)),
        }
    } else {
        None
    };
    for c in node.children().filter(|c| c.is_element()) {
        let tag = c.tag_name().name();
        if !matches!(tag, "parent" | "child" | "origin" | "axis" | "limit") {
            warnings.insert(format!("ignored <{tag}> in joint {name}"));
        }
    }
    Ok(RawJoint { name, kind, parent, child: child_link, origin, axis, limits })
}
