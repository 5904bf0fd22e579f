use nalgebra::DMatrix;

use super::KinematicsError;
use crate::Real;

/// Yoshikawa index √det(J Jᵀ).
///
/// Computed from the QR factorization of Jᵀ, so det(J Jᵀ) = ∏ r_ii² without forming the
/// product. A Jacobian with fewer columns than rows, or whose smallest diagonal entry of R
/// falls below a relative rank tolerance, yields exactly zero.
pub fn manipulability<T: Real>(j: &DMatrix<T>) -> Result<T, KinematicsError> {
    if j.iter().any(|v| !v.is_finite()) {
        return Err(KinematicsError::NonFiniteInput);
    }
    let (rows, cols) = j.shape();
    if rows == 0 {
        return Ok(T::one());
    }
    if cols < rows {
        return Ok(T::zero());
    }
    let r = j.transpose().qr().r();
    let diag: Vec<T> = (0..rows).map(|i| r[(i, i)].abs()).collect();
    let max = diag.iter().copied().fold(T::zero(), T::max);
    let min = diag.iter().copied().fold(max, T::min);
    if max == T::zero() || min <= max * T::default_epsilon() * T::lit(1e3) {
        return Ok(T::zero());
    }
    Ok(diag.into_iter().fold(T::one(), |acc, d| acc * d))
}
