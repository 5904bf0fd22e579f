mod oracles;

use feasicap_core::collision::{
    build_collision_set, check_self_collision, segment_distance, Capsule, CollisionError, CollisionPair, CollisionSet,
    DEFAULT_MARGIN,
};
use feasicap_core::kinematics::{forward_kinematics, RobotModel};
use feasicap_core::robots::arm7;
use feasicap_core::Pose;
use nalgebra::{Isometry3, Translation3, UnitQuaternion, Vector3};
use oracles::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rand_point(r: &mut impl Rng) -> Vector3<f64> {
    Vector3::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0), r.random_range(-1.0..1.0))
}

#[test]
fn segment_distance_matches_sampling() {
    let mut r = ChaCha8Rng::seed_from_u64(10);
    for i in 0..10_000 {
        let (a0, a1, b0, b1) = (rand_point(&mut r), rand_point(&mut r), rand_point(&mut r), rand_point(&mut r));
        // every fourth pair nearly parallel, where closed forms are fragile
        let b1 = if i % 4 == 0 { b0 + (a1 - a0) * r.random_range(0.2..1.5) + rand_point(&mut r) * 1e-9 } else { b1 };
        let d = segment_distance(&a0, &a1, &b0, &b1).unwrap();
        let sampled = segment_distance_sampled(&a0, &a1, &b0, &b1, 2000);
        let bound = (a1 - a0).norm() / 4000.0;
        assert!(d <= sampled + 1e-6 && d >= sampled - bound - 1e-6, "pair {i}: {d} vs {sampled}");
        assert!((d - segment_distance_refined(&a0, &a1, &b0, &b1)).abs() < 1e-6);
    }
}

#[test]
fn segment_distance_symmetric_bitwise() {
    let mut r = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..2000 {
        let (a0, a1, b0, b1) = (rand_point(&mut r), rand_point(&mut r), rand_point(&mut r), rand_point(&mut r));
        let d = segment_distance(&a0, &a1, &b0, &b1).unwrap();
        assert_eq!(d.to_bits(), segment_distance(&b0, &b1, &a0, &a1).unwrap().to_bits());
        assert_eq!(d.to_bits(), segment_distance(&a1, &a0, &b1, &b0).unwrap().to_bits());
    }
}

#[test]
fn segment_examples() {
    let d: f64 = segment_distance(&Vector3::zeros(), &Vector3::x(), &Vector3::y(), &Vector3::new(1.0, 1.0, 0.0)).unwrap();
    assert!((d - 1.0).abs() < 1e-15);
    let d: f64 = segment_distance(
        &Vector3::new(-1.0, 0.0, 0.0),
        &Vector3::new(1.0, 0.0, 0.0),
        &Vector3::new(0.0, -1.0, 0.3),
        &Vector3::new(0.0, 1.0, 0.3),
    )
    .unwrap();
    assert!((d - 0.3).abs() < 1e-15);
    let nan = Vector3::new(f64::NAN, 0.0, 0.0);
    assert_eq!(segment_distance(&nan, &Vector3::x(), &Vector3::y(), &Vector3::z()), Err(CollisionError::NonFiniteInput));
}

#[test]
fn colliding_flags_match_oracle() {
    let m: RobotModel<f64> = arm7();
    let set = build_collision_set(&m, DEFAULT_MARGIN);
    let mut r = ChaCha8Rng::seed_from_u64(12);
    let (mut compared, mut colliding, mut ties) = (0, 0, 0);
    for _ in 0..1000 {
        let q = random_config(&m, &mut r);
        let oracle = clearance_reference(&m, &set, &q);
        let chain = forward_kinematics(&m, &dvec(&q)).unwrap();
        let report = check_self_collision(&set, &chain.link_poses).unwrap();
        if (oracle - set.margin).abs() <= 1e-4 {
            ties += 1;
            continue;
        }
        compared += 1;
        assert_eq!(report.colliding, oracle < set.margin, "q {q:?}: {} vs {oracle}", report.min_clearance);
        assert!((report.min_clearance - oracle).abs() < 1e-6);
        colliding += report.colliding as usize;
    }
    assert!(compared >= 990 && ties <= 10);
    // both outcomes must be exercised for the comparison to mean anything
    assert!(colliding > 50 && colliding < compared - 50, "{colliding}/{compared}");
}

#[test]
fn stretched_posture_is_clear() {
    let m: RobotModel<f64> = arm7();
    let set = build_collision_set(&m, DEFAULT_MARGIN);
    let chain = forward_kinematics(&m, &dvec(&[0.0; 7])).unwrap();
    let report = check_self_collision(&set, &chain.link_poses).unwrap();
    assert!(!report.colliding);
    assert!(report.min_clearance > set.margin);
}

/// Elbow and wrist folded back over the upper arm; found by scanning (q4, q6) with the oracle.
fn folded_config(m: &RobotModel<f64>, set: &CollisionSet<f64>) -> Vec<f64> {
    let mut best = (f64::INFINITY, vec![]);
    for i in 0..=26 {
        for k in 0..=20 {
            let q = vec![0.0, 0.0, 0.0, -2.6 + 0.2 * i as f64, 0.0, -2.0 + 0.2 * k as f64, 0.0];
            let c = clearance_reference(m, set, &q);
            if c < best.0 {
                best = (c, q);
            }
        }
    }
    assert!(best.0 < 0.0);
    best.1
}

#[test]
fn folded_wrist_collides() {
    let m: RobotModel<f64> = arm7();
    let set = build_collision_set(&m, DEFAULT_MARGIN);
    let q = folded_config(&m, &set);
    let chain = forward_kinematics(&m, &dvec(&q)).unwrap();
    let report = check_self_collision(&set, &chain.link_poses).unwrap();
    assert!(report.colliding);
    assert!(report.min_clearance < 0.0);
    assert!(matches!(report.worst_pair, Some(CollisionPair::Links(..))));
}

fn two_capsules(margin: f64) -> CollisionSet<f64> {
    CollisionSet {
        shapes_per_link: vec![
            vec![Capsule::new(Vector3::zeros(), Vector3::x(), 0.1)],
            vec![],
            vec![Capsule::new(Vector3::new(0.0, 0.5, 0.0), Vector3::new(1.0, 0.5, 0.0), 0.1)],
        ],
        check_pairs: vec![(0, 2)],
        margin,
        obstacles: vec![],
    }
}

#[test]
fn margin_is_strict() {
    let poses = vec![Pose::identity(); 3];
    let clearance = check_self_collision(&two_capsules(0.0), &poses).unwrap().min_clearance;
    assert!((clearance - 0.3).abs() < 1e-12);
    assert!(check_self_collision(&two_capsules(clearance + 1e-9), &poses).unwrap().colliding);
    assert!(!check_self_collision(&two_capsules(clearance), &poses).unwrap().colliding);
}

#[test]
fn missing_pose_reported() {
    let poses = vec![Pose::identity(); 2];
    assert_eq!(check_self_collision(&two_capsules(0.0), &poses).unwrap_err(), CollisionError::MissingPose(2));
}

#[test]
fn rigid_invariance() {
    let m: RobotModel<f64> = arm7();
    let set = build_collision_set(&m, DEFAULT_MARGIN);
    let mut r = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..200 {
        let chain = forward_kinematics(&m, &dvec(&random_config(&m, &mut r))).unwrap();
        let g: Isometry3<f64> = Translation3::from(rand_point(&mut r) * 3.0)
            * UnitQuaternion::from_scaled_axis(rand_point(&mut r) * 2.0);
        let moved: Vec<Pose<f64>> = chain.link_poses.iter().map(|p| g * p).collect();
        let a = check_self_collision(&set, &chain.link_poses).unwrap().min_clearance;
        let b = check_self_collision(&set, &moved).unwrap().min_clearance;
        assert!((a - b).abs() < 1e-9);
    }
}

#[test]
fn inflating_argmin_radius_lowers_clearance_by_delta() {
    let m: RobotModel<f64> = arm7();
    let set = build_collision_set(&m, DEFAULT_MARGIN);
    let mut r = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..100 {
        let chain = forward_kinematics(&m, &dvec(&random_config(&m, &mut r))).unwrap();
        let before = check_self_collision(&set, &chain.link_poses).unwrap();
        let Some(CollisionPair::Links(a, _)) = before.worst_pair else { panic!("no pair") };
        let mut inflated = set.clone();
        for c in &mut inflated.shapes_per_link[a] {
            c.radius += 0.005;
        }
        let after = check_self_collision(&inflated, &chain.link_poses).unwrap();
        assert!((before.min_clearance - after.min_clearance - 0.005).abs() < 1e-12);
    }
}

#[test]
fn obstacles_are_opt_in() {
    let m: RobotModel<f64> = arm7();
    let set = build_collision_set(&m, DEFAULT_MARGIN);
    assert!(set.obstacles.is_empty());
    let chain = forward_kinematics(&m, &dvec(&[0.0; 7])).unwrap();
    let wall = Capsule::sphere(Vector3::new(0.0, 0.0, 0.6), 0.05);
    let report = check_self_collision(&set.with_obstacles(vec![wall]), &chain.link_poses).unwrap();
    assert!(report.colliding);
    assert!(matches!(report.worst_pair, Some(CollisionPair::Obstacle(..))));
}

#[test]
fn single_precision_capsules() {
    let a = Capsule::<f32>::new(Vector3::zeros(), Vector3::x(), 0.1);
    let b = Capsule::<f32>::sphere(Vector3::new(0.5, 0.4, 0.0), 0.1);
    assert!((a.clearance(&b).unwrap() - 0.2).abs() < 1e-6);
}
