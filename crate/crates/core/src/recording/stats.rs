use serde::{Deserialize, Serialize};

use super::{Episode, EpisodeError};
use crate::guidance::FeasibilityState;

/// Per-episode counts over the emitted (debounced) states.
///
/// For an empty episode every field is zero, including the ratios.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FeasibilityStats {
    pub frames: u64,
    pub feasible_frames: u64,
    pub warning_frames: u64,
    pub infeasible_frames: u64,
    pub feasible_ratio: f64,
    pub warning_ratio: f64,
    pub infeasible_ratio: f64,
    pub longest_infeasible_run: u64,
}

pub fn stats_from_states(states: &[FeasibilityState]) -> FeasibilityStats {
    let mut s = FeasibilityStats { frames: states.len() as u64, ..Default::default() };
    let mut run = 0u64;
    for st in states {
        match st {
            FeasibilityState::Feasible => s.feasible_frames += 1,
            FeasibilityState::Warning => s.warning_frames += 1,
            FeasibilityState::Infeasible => s.infeasible_frames += 1,
        }
        run = if *st == FeasibilityState::Infeasible { run + 1 } else { 0 };
        s.longest_infeasible_run = s.longest_infeasible_run.max(run);
    }
    if s.frames > 0 {
        let n = s.frames as f64;
        s.warning_ratio = s.warning_frames as f64 / n;
        s.infeasible_ratio = s.infeasible_frames as f64 / n;
        s.feasible_ratio = s.feasible_frames as f64 / n;
    }
    s
}

pub fn compute_stats(episode: &Episode) -> Result<FeasibilityStats, EpisodeError> {
    let states: Vec<_> = episode.feasibility_records()?.iter().map(|r| r.s_t).collect();
    Ok(stats_from_states(&states))
}
