mod oracles;

use std::f64::consts::{FRAC_PI_2, PI};

use feasicap_core::kinematics::{
    dls_ik, forward_kinematics, jacobian, load_urdf, manipulability, IkParams, KinematicsError, RobotModel,
};
use feasicap_core::robots::{arm7, planar_2r, ready_configuration};
use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use oracles::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[test]
fn planar_straight_and_quarter_turn() {
    let m: RobotModel<f64> = planar_2r();
    let ee = forward_kinematics(&m, &dvec(&[0.0, 0.0])).unwrap().ee_pose;
    assert!((ee.translation.vector - Vector3::new(2.0, 0.0, 0.0)).norm() < 1e-12);
    assert!(ee.rotation.angle() < 1e-12);
    let ee = forward_kinematics(&m, &dvec(&[FRAC_PI_2, 0.0])).unwrap().ee_pose;
    assert!((ee.translation.vector - Vector3::new(0.0, 2.0, 0.0)).norm() < 1e-12);
}

#[test]
fn fk_matches_matrix_chain() {
    let m: RobotModel<f64> = arm7();
    let mut r = rng(1);
    for _ in 0..500 {
        let q = random_config(&m, &mut r);
        let chain = forward_kinematics(&m, &dvec(&q)).unwrap();
        let frames = fk_chain(&m, &q);
        for (lib, oracle) in chain.link_poses.iter().zip(&frames) {
            assert!((lib.to_homogeneous() - oracle).amax() < 1e-12);
        }
        assert!((chain.ee_pose.to_homogeneous() - frames.last().unwrap()).amax() < 1e-12);
    }
}

#[test]
fn fk_dimension_mismatch() {
    let m: RobotModel<f64> = arm7();
    assert_eq!(
        forward_kinematics(&m, &dvec(&[0.0; 3])).unwrap_err(),
        KinematicsError::DimensionMismatch { expected: 7, got: 3 }
    );
}

#[test]
fn planar_jacobian_at_zero() {
    let m: RobotModel<f64> = planar_2r();
    let j = jacobian(&m, &dvec(&[0.0, 0.0])).unwrap();
    assert!(j.row(0).amax() < 1e-12);
    assert!((j[(1, 0)] - 2.0).abs() < 1e-12 && (j[(1, 1)] - 1.0).abs() < 1e-12);
    let fd = jacobian_fd(&m, &[0.0, 0.0], 1e-6);
    assert!((j - fd).amax() < 1e-5);
}

#[test]
fn jacobian_matches_finite_differences() {
    let m: RobotModel<f64> = arm7();
    let mut r = rng(2);
    let mut worst = 0.0_f64;
    for _ in 0..200 {
        let q = random_config(&m, &mut r);
        let j = jacobian(&m, &dvec(&q)).unwrap();
        worst = worst.max((j - jacobian_fd(&m, &q, 1e-6)).amax());
    }
    assert!(worst < 1e-5, "max deviation {worst}");
}

const PRISMATIC: &str = r#"<robot name="slide">
  <link name="base"/><link name="carriage"/><link name="tip"/>
  <joint name="rail" type="prismatic"><parent link="base"/><child link="carriage"/>
    <axis xyz="1 0 0"/><limit lower="-0.5" upper="0.5" velocity="0.3" effort="1"/></joint>
  <joint name="turn" type="revolute"><parent link="carriage"/><child link="tip"/>
    <origin xyz="0 0 0.2"/><axis xyz="0 0 1"/><limit lower="-3" upper="3" velocity="1" effort="1"/></joint>
</robot>"#;

#[test]
fn prismatic_column_has_no_angular_part() {
    let m: RobotModel<f64> = load_urdf(PRISMATIC).unwrap();
    let q = [0.2, 0.7];
    let j = jacobian(&m, &dvec(&q)).unwrap();
    assert!(j.fixed_view::<3, 1>(3, 0).amax() == 0.0);
    assert!((j.fixed_view::<3, 1>(0, 0) - Vector3::x()).amax() < 1e-12);
    assert!((j - jacobian_fd(&m, &q, 1e-6)).amax() < 1e-5);
}

#[test]
fn ik_converged_seed_returns_immediately() {
    let m: RobotModel<f64> = arm7();
    let q0 = ready_configuration(&m);
    let target = forward_kinematics(&m, &q0).unwrap().ee_pose;
    let sol = dls_ik(&m, &target, &q0, &IkParams::default()).unwrap();
    assert!(sol.residual < 1e-10);
    assert!(sol.iterations <= 1);
    assert_eq!(sol.q, q0);
}

#[test]
fn ik_outside_workspace_is_unreachable() {
    let m: RobotModel<f64> = planar_2r();
    let p = IkParams::default();
    let target = nalgebra::Isometry3::translation(2.5, 0.0, 0.0);
    let sol = dls_ik(&m, &target, &dvec(&[0.1, 0.1]), &p).unwrap();
    assert!(sol.residual >= p.residual_threshold);
    assert!(!sol.is_reachable(&p));
}

#[test]
fn ik_rejects_nan() {
    let m: RobotModel<f64> = planar_2r();
    let target = nalgebra::Isometry3::translation(f64::NAN, 0.0, 0.0);
    assert_eq!(dls_ik(&m, &target, &dvec(&[0.0, 0.0]), &IkParams::default()).unwrap_err(), KinematicsError::NonFiniteInput);
    assert!(matches!(
        dls_ik(&m, &nalgebra::Isometry3::identity(), &dvec(&[0.0]), &IkParams::default()),
        Err(KinematicsError::DimensionMismatch { .. })
    ));
}

/// Best weighted residual over a 0.005 rad grid, with the unit-link planar FK written in closed form.
fn grid_best(target: &nalgebra::Isometry3<f64>, w: f64) -> f64 {
    let n = (2.0 * PI / 0.005) as usize;
    let mut best = f64::INFINITY;
    for i in 0..=n {
        let q1 = -PI + i as f64 * 0.005;
        for k in 0..=n {
            let q2 = -PI + k as f64 * 0.005;
            let (c1, s1, c12, s12) = (q1.cos(), q1.sin(), (q1 + q2).cos(), (q1 + q2).sin());
            let dp = (target.translation.x - c1 - c12).hypot(target.translation.y - s1 - s12);
            let yaw = target.rotation.euler_angles().2;
            let dth = ((yaw - q1 - q2 + PI).rem_euclid(2.0 * PI) - PI).abs();
            best = best.min((dp * dp + w * w * dth * dth).sqrt());
        }
    }
    best
}

#[test]
fn planar_ik_along_path_matches_grid_search() {
    let m: RobotModel<f64> = planar_2r();
    let p = IkParams::default();
    let mut r = rng(3);
    let (a, b) = ([0.3, 1.2], [1.4, 0.4]);
    let mut seed = dvec(&a);
    for k in 0..100 {
        let s = k as f64 / 99.0;
        let jitter = r.random_range(-0.002..0.002);
        let q = [a[0] + (b[0] - a[0]) * s + jitter, a[1] + (b[1] - a[1]) * s];
        let target = forward_kinematics(&m, &dvec(&q)).unwrap().ee_pose;
        let sol = dls_ik(&m, &target, &seed, &p).unwrap();
        assert!(sol.residual < p.residual_threshold, "target {k}: residual {}", sol.residual);
        assert!((&sol.q - &seed).norm() < 0.1);
        if k % 20 == 0 {
            // the grid only bounds the optimum to its resolution; the solver must do at least as well
            let g = grid_best(&target, p.orientation_weight);
            assert!(g < 0.02);
            assert!(sol.residual <= g + 1e-9);
        }
        seed = sol.q;
    }
}

#[test]
fn arm7_ik_along_continuous_paths() {
    let m: RobotModel<f64> = arm7();
    let (mut ok, mut total) = (0, 0);
    for seed in 0..8 {
        let (o, t, unsound) = ik_path_success(&m, &joint_paths(&m, seed, 10, 100));
        assert_eq!(unsound, 0);
        ok += o;
        total += t;
    }
    assert!(ok as f64 / total as f64 >= 0.995, "{ok}/{total}");
}

#[test]
fn warm_start_continuity() {
    let m: RobotModel<f64> = arm7();
    let p = IkParams::default();
    for path in joint_paths(&m, 11, 5, 100) {
        let mut seed = dvec(&path[0]);
        for q in &path[1..] {
            let target = forward_kinematics(&m, &dvec(q)).unwrap().ee_pose;
            let sol = dls_ik(&m, &target, &seed, &p).unwrap();
            if sol.is_reachable(&p) {
                assert!((&sol.q - &seed).norm() < 0.2);
            }
            seed = sol.q;
        }
    }
}

#[test]
fn planar_manipulability_matches_formula() {
    let m: RobotModel<f64> = planar_2r();
    for i in 0..=64 {
        let q2 = -PI + 2.0 * PI * i as f64 / 64.0;
        let j = jacobian(&m, &dvec(&[0.4, q2])).unwrap();
        // x, y and yaw rows
        let planar = DMatrix::from_fn(3, 2, |r, c| j[([0, 1, 5][r], c)]);
        let w = manipulability(&planar).unwrap();
        let positional = manipulability(&planar.rows(0, 2).into_owned()).unwrap();
        assert!((positional - q2.sin().abs()).abs() < 1e-9, "q2 {q2}: {positional}");
        // the yaw row adds a column-sum constraint; with both joints about z it is rank deficient only when straight
        assert!(w >= 0.0);
    }
    let j = jacobian(&m, &dvec(&[0.0, FRAC_PI_2])).unwrap();
    let w = manipulability(&j.rows(0, 2).into_owned()).unwrap();
    assert!((w - 1.0).abs() < 1e-9);
    let j = jacobian(&m, &dvec(&[0.0, 0.0])).unwrap();
    assert!(manipulability(&j.rows(0, 2).into_owned()).unwrap().abs() < 1e-9);
}

#[test]
fn manipulability_matches_singular_values() {
    let mut r = rng(5);
    for _ in 0..500 {
        let j = DMatrix::from_fn(6, 7, |_, _| r.random_range(-1.0..1.0));
        let w = manipulability(&j).unwrap();
        let o = singular_value_product(&j);
        assert!((w - o).abs() < 1e-8 * o.max(1.0), "{w} vs {o}");
    }
    let m: RobotModel<f64> = arm7();
    for _ in 0..200 {
        let j = jacobian(&m, &dvec(&random_config(&m, &mut r))).unwrap();
        assert!((manipulability(&j).unwrap() - singular_value_product(&j)).abs() < 1e-8);
    }
}

#[test]
fn manipulability_zero_when_rank_deficient() {
    let mut j = DMatrix::from_fn(6, 7, |r, c| ((r * 7 + c) as f64).sin());
    let row = j.row(0).into_owned();
    j.set_row(5, &(row * 2.0));
    assert_eq!(manipulability(&j).unwrap(), 0.0);
    let j = DMatrix::from_element(6, 7, f64::INFINITY);
    assert_eq!(manipulability(&j).unwrap_err(), KinematicsError::NonFiniteInput);
}

#[test]
fn urdf_errors() {
    assert!(matches!(load_urdf::<f64>("<robot"), Err(KinematicsError::MalformedDocument(_))));
    let branching = r#"<robot name="y"><link name="a"/><link name="b"/><link name="c"/>
      <joint name="j1" type="fixed"><parent link="a"/><child link="b"/></joint>
      <joint name="j2" type="fixed"><parent link="a"/><child link="c"/></joint></robot>"#;
    assert!(matches!(load_urdf::<f64>(branching), Err(KinematicsError::BranchingChain(_))));
    let unlimited = r#"<robot name="u"><link name="a"/><link name="b"/>
      <joint name="j" type="revolute"><parent link="a"/><child link="b"/><axis xyz="0 0 1"/></joint></robot>"#;
    assert_eq!(load_urdf::<f64>(unlimited).unwrap_err(), KinematicsError::MissingLimits("j".into()));
}

#[test]
fn urdf_continuous_and_skipped_elements() {
    let text = r#"<robot name="c"><link name="a"/><link name="b"><visual/></link>
      <joint name="spin" type="continuous"><parent link="a"/><child link="b"/><axis xyz="0 0 2"/>
        <limit lower="-6.28" upper="6.28" velocity="1" effort="1"/></joint>
      <transmission name="t"/></robot>"#;
    let m: RobotModel<f64> = load_urdf(text).unwrap();
    assert_eq!(m.dof, 1);
    assert!((m.joints[0].axis.norm() - 1.0).abs() < 1e-15);
}

#[test]
fn single_precision_instantiation() {
    let m32: RobotModel<f32> = arm7();
    let m64: RobotModel<f64> = arm7();
    let q: Vec<f64> = vec![0.1, 0.5, -0.2, 1.3, 0.3, 1.0, 0.1];
    let a = forward_kinematics(&m32, &DVector::from_iterator(7, q.iter().map(|&v| v as f32))).unwrap().ee_pose;
    let b = forward_kinematics(&m64, &dvec(&q)).unwrap().ee_pose;
    assert!((a.translation.vector.cast::<f64>() - b.translation.vector).norm() < 1e-5);
    let j = jacobian(&m32, &DVector::from_iterator(7, q.iter().map(|&v| v as f32))).unwrap();
    assert!(manipulability(&j).unwrap() > 0.0);
}

#[test]
fn rodrigues_oracle_is_orthonormal() {
    let r = rodrigues(&Vector3::new(0.0, 0.6, 0.8), 1.1);
    assert!((r * r.transpose() - Matrix3::identity()).amax() < 1e-15);
}
