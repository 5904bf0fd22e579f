//! Independent reference implementations the library is checked against.
#![allow(dead_code)]

use feasicap_core::guidance::FeasibilityState;
use feasicap_core::kinematics::{JointKind, RobotModel};
use nalgebra::{DMatrix, DVector, Matrix3, Matrix4, Vector3};

/// Rodrigues' formula, written out.
pub fn rodrigues(axis: &Vector3<f64>, angle: f64) -> Matrix3<f64> {
    let k = Matrix3::new(0.0, -axis.z, axis.y, axis.z, 0.0, -axis.x, -axis.y, axis.x, 0.0);
    Matrix3::identity() + k * angle.sin() + k * k * (1.0 - angle.cos())
}

fn homogeneous(r: &Matrix3<f64>, t: &Vector3<f64>) -> Matrix4<f64> {
    let mut m = Matrix4::identity();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(r);
    m.fixed_view_mut::<3, 1>(0, 3).copy_from(t);
    m
}

/// Product of 4×4 homogeneous matrices along the chain; returns every link frame.
pub fn fk_chain(model: &RobotModel<f64>, q: &[f64]) -> Vec<Matrix4<f64>> {
    let mut frames = vec![Matrix4::identity()];
    let mut t = Matrix4::identity();
    let mut qi = q.iter();
    for j in &model.joints {
        let o = j.origin.to_homogeneous();
        let motion = match j.kind {
            JointKind::Revolute => homogeneous(&rodrigues(&j.axis, *qi.next().unwrap()), &Vector3::zeros()),
            JointKind::Prismatic => homogeneous(&Matrix3::identity(), &(j.axis.into_inner() * *qi.next().unwrap())),
            JointKind::Fixed => Matrix4::identity(),
        };
        t = t * o * motion;
        frames.push(t);
    }
    frames
}

pub fn fk_ee(model: &RobotModel<f64>, q: &[f64]) -> Matrix4<f64> {
    *fk_chain(model, q).last().unwrap()
}

fn rotation_log(r: &Matrix3<f64>) -> Vector3<f64> {
    let c = ((r.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    let th = c.acos();
    let v = Vector3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]);
    if th < 1e-12 {
        v / 2.0
    } else {
        v * (th / (2.0 * th.sin()))
    }
}

/// Central finite differences of the oracle FK: linear rows from the position, angular rows
/// from the log of R(q+h)·R(q−h)ᵀ.
pub fn jacobian_fd(model: &RobotModel<f64>, q: &[f64], h: f64) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(6, q.len());
    for i in 0..q.len() {
        let mut qp = q.to_vec();
        let mut qm = q.to_vec();
        qp[i] += h;
        qm[i] -= h;
        let (tp, tm) = (fk_ee(model, &qp), fk_ee(model, &qm));
        let dp = (tp.fixed_view::<3, 1>(0, 3) - tm.fixed_view::<3, 1>(0, 3)) / (2.0 * h);
        let rp: Matrix3<f64> = tp.fixed_view::<3, 3>(0, 0).into();
        let rm: Matrix3<f64> = tm.fixed_view::<3, 3>(0, 0).into();
        let w = rotation_log(&(rp * rm.transpose())) / (2.0 * h);
        for r in 0..3 {
            j[(r, i)] = dp[r];
            j[(r + 3, i)] = w[r];
        }
    }
    j
}

/// Product of the singular values (Yoshikawa index for full row rank).
pub fn singular_value_product(j: &DMatrix<f64>) -> f64 {
    j.clone().svd(false, false).singular_values.iter().product()
}

pub fn point_segment_distance(p: &Vector3<f64>, a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    let ab = b - a;
    let l2 = ab.norm_squared();
    let t = if l2 == 0.0 { 0.0 } else { ((p - a).dot(&ab) / l2).clamp(0.0, 1.0) };
    (p - (a + ab * t)).norm()
}

/// Dense sampling of the first segment with exact distances to the second.
/// Returns the sampled minimum; the true minimum lies within half a sample spacing below.
pub fn segment_distance_sampled(p0: &Vector3<f64>, p1: &Vector3<f64>, q0: &Vector3<f64>, q1: &Vector3<f64>, n: usize) -> f64 {
    (0..=n)
        .map(|i| point_segment_distance(&(p0 + (p1 - p0) * (i as f64 / n as f64)), q0, q1))
        .fold(f64::INFINITY, f64::min)
}

/// Sampling followed by ternary refinement (the distance along a segment to a convex set is convex).
pub fn segment_distance_refined(p0: &Vector3<f64>, p1: &Vector3<f64>, q0: &Vector3<f64>, q1: &Vector3<f64>) -> f64 {
    let f = |s: f64| point_segment_distance(&(p0 + (p1 - p0) * s), q0, q1);
    let n = 64;
    let best = (0..=n).min_by(|&a, &b| f(a as f64 / n as f64).total_cmp(&f(b as f64 / n as f64))).unwrap();
    let (mut lo, mut hi) = (((best as f64 - 1.0) / n as f64).max(0.0), ((best as f64 + 1.0) / n as f64).min(1.0));
    for _ in 0..200 {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if f(m1) <= f(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    f((lo + hi) / 2.0).min(f(0.0)).min(f(1.0))
}

/// Sliding-window debounce: the output switches to X once the last `n` raw states are all X.
pub fn debounce_reference(raw: &[FeasibilityState], n: usize) -> Vec<FeasibilityState> {
    let mut out: Vec<FeasibilityState> = Vec::with_capacity(raw.len());
    for t in 0..raw.len() {
        if t == 0 {
            out.push(raw[0]);
            continue;
        }
        let window_full = t + 1 >= n;
        let uniform = window_full && raw[t + 1 - n..=t].iter().all(|s| *s == raw[t]);
        out.push(if uniform { raw[t] } else { out[t - 1] });
    }
    out
}

/// r_t written straight from its definition: per frame, max over joints of |Δq|/Δt/limit;
/// combined by mean over the frame pairs in the history.
pub fn rate_ratio_reference(configs: &[Vec<f64>], times: &[f64], limits: &[f64]) -> f64 {
    if configs.len() < 2 {
        return 0.0;
    }
    let mut per_frame = Vec::new();
    for k in 1..configs.len() {
        let dt = times[k] - times[k - 1];
        let mut m = 0.0_f64;
        for i in 0..limits.len() {
            m = m.max((configs[k][i] - configs[k - 1][i]).abs() / dt / limits[i]);
        }
        per_frame.push(m);
    }
    per_frame.iter().sum::<f64>() / per_frame.len() as f64
}

pub fn dvec(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

/// Uniform sample inside the joint limits.
pub fn random_config(model: &RobotModel<f64>, rng: &mut impl rand::Rng) -> Vec<f64> {
    let lo = model.lower_limits();
    let hi = model.upper_limits();
    (0..model.dof).map(|i| rng.random_range(lo[i]..=hi[i])).collect()
}

/// Minimum surface clearance over the checked pairs, from oracle link frames and the refined
/// sampling distance.
pub fn clearance_reference(
    model: &RobotModel<f64>,
    set: &feasicap_core::collision::CollisionSet<f64>,
    q: &[f64],
) -> f64 {
    let frames = fk_chain(model, q);
    let world = |link: usize| -> Vec<(Vector3<f64>, Vector3<f64>, f64)> {
        let m = frames[link];
        let tf = |p: &Vector3<f64>| (m * p.push(1.0)).xyz();
        set.shapes_per_link[link].iter().map(|c| (tf(&c.p0), tf(&c.p1), c.radius)).collect()
    };
    let mut best = f64::INFINITY;
    for &(a, b) in &set.check_pairs {
        for (a0, a1, ra) in world(a) {
            for (b0, b1, rb) in world(b) {
                best = best.min(segment_distance_refined(&a0, &a1, &b0, &b1) - ra - rb);
            }
        }
    }
    best
}

/// Continuous joint-space paths: random in-limit start, fixed random direction with 0.01 rad
/// steps, reflecting at limits. Consecutive FK targets stay within a few mm / 1°.
pub fn joint_paths(model: &RobotModel<f64>, seed: u64, paths: usize, len: usize) -> Vec<Vec<Vec<f64>>> {
    use rand::{Rng, SeedableRng};
    let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = (model.lower_limits(), model.upper_limits());
    (0..paths)
        .map(|_| {
            let mut q = random_config(model, &mut r);
            let d: Vec<f64> = (0..model.dof).map(|_| r.random_range(-1.0..1.0)).collect();
            let n = d.iter().map(|x| x * x).sum::<f64>().sqrt();
            let mut d: Vec<f64> = d.iter().map(|x| x / n * 0.01).collect();
            let mut out = vec![q.clone()];
            for _ in 0..len {
                for i in 0..model.dof {
                    if q[i] + d[i] < lo[i] || q[i] + d[i] > hi[i] {
                        d[i] = -d[i];
                    }
                    q[i] += d[i];
                }
                out.push(q.clone());
            }
            out
        })
        .collect()
}

/// Runs warm-started IK along each path (seeded at the path start) and returns
/// (reachable count, total, count of reachable solutions violating the FK round trip).
pub fn ik_path_success(model: &RobotModel<f64>, paths: &[Vec<Vec<f64>>]) -> (usize, usize, usize) {
    use feasicap_core::kinematics::{dls_ik, forward_kinematics, IkParams};
    use feasicap_core::pose::angle_between;
    let p = IkParams::default();
    let (mut ok, mut total, mut unsound) = (0, 0, 0);
    for path in paths {
        let mut seed = dvec(&path[0]);
        for q in &path[1..] {
            let target = forward_kinematics(model, &dvec(q)).unwrap().ee_pose;
            let sol = dls_ik(model, &target, &seed, &p).unwrap();
            total += 1;
            if sol.is_reachable(&p) {
                ok += 1;
                let ee = sol.chain.ee_pose;
                if (ee.translation.vector - target.translation.vector).norm() >= p.position_tolerance
                    || angle_between(&ee.rotation, &target.rotation) >= p.orientation_tolerance
                {
                    unsound += 1;
                }
            }
            seed = sol.q;
        }
    }
    (ok, total, unsound)
}
