use std::cmp::Ordering;

use nalgebra::Vector3;

use super::CollisionError;
use crate::Real;

fn lex_cmp<T: Real>(a: &[Vector3<T>], b: &[Vector3<T>]) -> Ordering {
    a.iter()
        .flat_map(|v| v.iter())
        .zip(b.iter().flat_map(|v| v.iter()))
        .map(|(x, y)| x.partial_cmp(y).unwrap_or(Ordering::Equal))
        .find(|o| *o != Ordering::Equal)
        .unwrap_or(Ordering::Equal)
}

/// Parameters `(s, t)` in [0, 1] of the closest points on segments `p0p1` and `q0q1`.
pub fn closest_parameters<T: Real>(p0: &Vector3<T>, p1: &Vector3<T>, q0: &Vector3<T>, q1: &Vector3<T>) -> (T, T) {
    let zero = T::zero();
    let one = T::one();
    let d1 = p1 - p0;
    let d2 = q1 - q0;
    let r = p0 - q0;
    let a = d1.dot(&d1);
    let e = d2.dot(&d2);
    let f = d2.dot(&r);
    let tiny = T::default_epsilon() * T::default_epsilon();

    let (mut s, mut t);
    if a <= tiny && e <= tiny {
        return (zero, zero);
    }
    if a <= tiny {
        s = zero;
        t = (f / e).clamp(zero, one);
    } else {
        let c = d1.dot(&r);
        if e <= tiny {
            t = zero;
            s = (-c / a).clamp(zero, one);
        } else {
            let b = d1.dot(&d2);
            let denom = a * e - b * b;
            s = if denom > T::default_epsilon() * a * e {
                ((b * f - c * e) / denom).clamp(zero, one)
            } else {
                // parallel: any s works, pick the start and let t settle it
                zero
            };
            t = (b * s + f) / e;
            if t < zero {
                t = zero;
                s = (-c / a).clamp(zero, one);
            } else if t > one {
                t = one;
                s = ((b - c) / a).clamp(zero, one);
            }
        }
        // one alternating projection pass; never increases the distance
        let ps = p0 + d1 * s;
        if e > tiny {
            t = ((ps - q0).dot(&d2) / e).clamp(zero, one);
        }
        let qt = q0 + d2 * t;
        s = ((qt - p0).dot(&d1) / a).clamp(zero, one);
    }
    (s, t)
}

/// Exact minimum distance between two closed segments.
///
/// Endpoints and the pair are put in a canonical order first, so swapping the segments or
/// reversing either one gives a bit-identical result.
pub fn segment_distance<T: Real>(
    a0: &Vector3<T>,
    a1: &Vector3<T>,
    b0: &Vector3<T>,
    b1: &Vector3<T>,
) -> Result<T, CollisionError> {
    let finite = [a0, a1, b0, b1].iter().all(|v| v.iter().all(|x| x.is_finite()));
    if !finite {
        return Err(CollisionError::NonFiniteInput);
    }
    let ends = |u: &Vector3<T>, v: &Vector3<T>| {
        if lex_cmp(&[*u], &[*v]) == Ordering::Greater {
            [*v, *u]
        } else {
            [*u, *v]
        }
    };
    let a = ends(a0, a1);
    let b = ends(b0, b1);
    let (p, q) = if lex_cmp(&a, &b) == Ordering::Greater { (b, a) } else { (a, b) };
    let (s, t) = closest_parameters(&p[0], &p[1], &q[0], &q[1]);
    let cp = p[0] + (p[1] - p[0]) * s;
    let cq = q[0] + (q[1] - q[0]) * t;
    Ok((cp - cq).norm())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: f64, y: f64, z: f64) -> Vector3<f64> {
        Vector3::new(x, y, z)
    }

    #[test]
    fn parallel_offset() {
        let d = segment_distance(&v(0., 0., 0.), &v(1., 0., 0.), &v(0., 1., 0.), &v(1., 1., 0.)).unwrap();
        assert!((d - 1.0).abs() < 1e-15);
    }

    #[test]
    fn perpendicular_skew() {
        let d = segment_distance(&v(-1., 0., 0.), &v(1., 0., 0.), &v(0., -1., 0.3), &v(0., 1., 0.3)).unwrap();
        assert!((d - 0.3).abs() < 1e-15);
    }

    #[test]
    fn collinear_disjoint_and_degenerate() {
        let d = segment_distance(&v(0., 0., 0.), &v(1., 0., 0.), &v(2., 0., 0.), &v(3., 0., 0.)).unwrap();
        assert!((d - 1.0).abs() < 1e-15);
        let d = segment_distance(&v(0., 0., 0.), &v(0., 0., 0.), &v(3., 4., 0.), &v(3., 4., 0.)).unwrap();
        assert!((d - 5.0).abs() < 1e-15);
        let d = segment_distance(&v(0., 2., 0.), &v(0., 2., 0.), &v(-1., 0., 0.), &v(1., 0., 0.)).unwrap();
        assert!((d - 2.0).abs() < 1e-15);
    }

    #[test]
    fn nan_rejected() {
        assert_eq!(
            segment_distance(&v(f64::NAN, 0., 0.), &v(1., 0., 0.), &v(0., 1., 0.), &v(1., 1., 0.)),
            Err(CollisionError::NonFiniteInput)
        );
    }

    #[test]
    fn argument_order_is_bit_symmetric() {
        let (a0, a1, b0, b1) = (v(0.1, 0.7, -0.3), v(1.3, -0.2, 0.5), v(-0.4, 0.9, 0.2), v(0.8, 0.1, 1.1));
        let d1 = segment_distance(&a0, &a1, &b0, &b1).unwrap();
        let d2 = segment_distance(&b0, &b1, &a0, &a1).unwrap();
        let d3 = segment_distance(&a1, &a0, &b1, &b0).unwrap();
        assert_eq!(d1.to_bits(), d2.to_bits());
        assert!((d1 - d3).abs() < 1e-15);
    }
}
