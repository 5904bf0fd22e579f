use super::FeasibilityState;

/// Holds the emitted state until `frames` consecutive identical raw states disagree with it.
#[derive(Debug, Clone)]
pub struct Debouncer {
    frames: usize,
    emitted: Option<FeasibilityState>,
    candidate: Option<FeasibilityState>,
    count: usize,
}

impl Debouncer {
    pub fn new(frames: usize) -> Self {
        Debouncer { frames: frames.max(1), emitted: None, candidate: None, count: 0 }
    }

    pub fn emitted(&self) -> Option<FeasibilityState> {
        self.emitted
    }

    pub fn next(&mut self, raw: FeasibilityState) -> FeasibilityState {
        let Some(current) = self.emitted else {
            self.emitted = Some(raw);
            return raw;
        };
        if raw == current {
            self.candidate = None;
            self.count = 0;
            return current;
        }
        if self.candidate == Some(raw) {
            self.count += 1;
        } else {
            self.candidate = Some(raw);
            self.count = 1;
        }
        if self.count >= self.frames {
            self.emitted = Some(raw);
            self.candidate = None;
            self.count = 0;
            return raw;
        }
        current
    }

    pub fn reset(&mut self) {
        *self = Debouncer::new(self.frames);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use FeasibilityState::{Feasible as F, Infeasible as I, Warning as W};

    fn run(frames: usize, raw: &[FeasibilityState]) -> Vec<FeasibilityState> {
        let mut d = Debouncer::new(frames);
        raw.iter().map(|&s| d.next(s)).collect()
    }

    #[test]
    fn short_spike_suppressed() {
        assert_eq!(run(3, &[F, F, I, F, F]), vec![F, F, F, F, F]);
    }

    #[test]
    fn sustained_change_passes_after_three() {
        assert_eq!(run(3, &[F, I, I, I]), vec![F, F, F, I]);
    }

    #[test]
    fn alternating_never_switches() {
        let raw: Vec<_> = (0..40).map(|i| if i % 2 == 0 { F } else { I }).collect();
        assert!(run(3, &raw).iter().all(|&s| s == F));
    }

    #[test]
    fn initial_state_is_first_raw() {
        assert_eq!(run(3, &[W, F, F, F]), vec![W, W, W, F]);
    }

    #[test]
    fn interrupted_run_restarts_count() {
        assert_eq!(run(3, &[F, I, I, W, I, I, I]), vec![F, F, F, F, F, F, I]);
    }

    #[test]
    fn one_frame_debounce_is_passthrough() {
        let raw = [F, I, W, F, I];
        assert_eq!(run(1, &raw), raw.to_vec());
    }
}
