use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::GuidanceError;
use crate::Real;

/// How per-frame max ratios are combined over the window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateSmoothing {
    #[default]
    Mean,
    Max,
}

/// Windowed joint-rate ratio.
///
/// For each consecutive pair of samples the joint velocities are finite differences of the
/// configurations; the frame ratio is max_i |q̇_i| / q̇_i^max. The result combines the frame
/// ratios of the whole history (at most `rate_window` of them) by mean or max.
pub fn rate_ratio<T: Real>(
    configs: &[DVector<T>],
    timestamps: &[T],
    vel_limits: &DVector<T>,
    smoothing: RateSmoothing,
) -> Result<T, GuidanceError> {
    if configs.len() != timestamps.len() {
        return Err(GuidanceError::InvalidConfig("history lengths differ".into()));
    }
    if configs.len() < 2 {
        return Ok(T::zero());
    }
    let mut acc = T::zero();
    let mut n = 0usize;
    for k in 1..configs.len() {
        let dt = timestamps[k] - timestamps[k - 1];
        if !(dt > T::zero()) {
            return Err(GuidanceError::DegenerateTimestamps);
        }
        let frame = configs[k]
            .iter()
            .zip(configs[k - 1].iter())
            .zip(vel_limits.iter())
            .map(|((a, b), v)| (*a - *b).abs() / dt / *v)
            .fold(T::zero(), T::max);
        acc = match smoothing {
            RateSmoothing::Mean => acc + frame,
            RateSmoothing::Max => acc.max(frame),
        };
        n += 1;
    }
    Ok(match smoothing {
        RateSmoothing::Mean => acc / T::lit(n as f64),
        RateSmoothing::Max => acc,
    })
}
