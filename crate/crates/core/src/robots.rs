//! Robot descriptions bundled with the crate, used by the CLI defaults, the synthetic
//! demonstrator and the tests.

use nalgebra::DVector;

use crate::kinematics::{load_urdf, RobotModel};
use crate::Real;

/// Seven revolute joints alternating z/y axes, 1.08 m tall at zero, capsule collision geometry.
pub const ARM7_URDF: &str = include_str!("../robots/arm7.urdf");
/// Six-joint variant of [`ARM7_URDF`] without the upper-arm roll.
pub const ARM6_URDF: &str = include_str!("../robots/arm6.urdf");
/// Planar two-link arm with unit links rotating about z.
pub const PLANAR_2R_URDF: &str = include_str!("../robots/planar2r.urdf");

pub fn arm7<T: Real>() -> RobotModel<T> {
    load_urdf(ARM7_URDF).expect("bundled arm7 description is valid")
}

pub fn arm6<T: Real>() -> RobotModel<T> {
    load_urdf(ARM6_URDF).expect("bundled arm6 description is valid")
}

pub fn planar_2r<T: Real>() -> RobotModel<T> {
    load_urdf(PLANAR_2R_URDF).expect("bundled planar description is valid")
}

/// Bent-elbow, wrist-down posture away from singularities, for 6- and 7-DoF bundled arms.
pub fn ready_configuration<T: Real>(model: &RobotModel<T>) -> DVector<T> {
    let q: &[f64] = match model.dof {
        7 => &[0.0, 0.5, 0.0, 1.3, 0.0, 1.0, 0.0],
        6 => &[0.0, 0.5, 1.3, 0.0, 1.0, 0.0],
        n => return DVector::from_element(n, T::lit(0.5)),
    };
    let mut q = DVector::from_iterator(q.len(), q.iter().map(|&v| T::lit(v)));
    model.clamp(&mut q);
    q
}
