use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeasibilityState {
    Feasible,
    Warning,
    Infeasible,
}

impl FeasibilityState {
    pub fn as_str(self) -> &'static str {
        match self {
            FeasibilityState::Feasible => "feasible",
            FeasibilityState::Warning => "warning",
            FeasibilityState::Infeasible => "infeasible",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "feasible" => Some(FeasibilityState::Feasible),
            "warning" => Some(FeasibilityState::Warning),
            "infeasible" => Some(FeasibilityState::Infeasible),
            _ => None,
        }
    }

    pub fn feedback(self) -> Feedback {
        match self {
            FeasibilityState::Feasible => Feedback { haptic: Haptic::None, ghost: GhostColor::Green },
            FeasibilityState::Warning => Feedback { haptic: Haptic::IntermittentHaptic, ghost: GhostColor::Yellow },
            FeasibilityState::Infeasible => Feedback { haptic: Haptic::ContinuousHaptic, ghost: GhostColor::Red },
        }
    }

    /// Wire code used in stream acknowledgements.
    pub fn code(self) -> u8 {
        match self {
            FeasibilityState::Feasible => 0,
            FeasibilityState::Warning => 1,
            FeasibilityState::Infeasible => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(FeasibilityState::Feasible),
            1 => Some(FeasibilityState::Warning),
            2 => Some(FeasibilityState::Infeasible),
            _ => None,
        }
    }
}

impl std::fmt::Display for FeasibilityState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Haptic {
    None,
    IntermittentHaptic,
    ContinuousHaptic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GhostColor {
    Green,
    Yellow,
    Red,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Feedback {
    pub haptic: Haptic,
    pub ghost: GhostColor,
}

/// Thresholds the raw state is computed against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateThresholds {
    /// IK residual threshold ε.
    pub epsilon: f64,
    pub tau_r: f64,
    pub tau_w: f64,
}

/// Undebounced state of one frame.
pub fn classify(e: f64, colliding: bool, r: f64, w: f64, th: &StateThresholds) -> FeasibilityState {
    if e >= th.epsilon || colliding || r > 1.0 {
        FeasibilityState::Infeasible
    } else if r > th.tau_r || w < th.tau_w {
        FeasibilityState::Warning
    } else {
        FeasibilityState::Feasible
    }
}
