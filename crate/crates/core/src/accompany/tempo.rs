use std::collections::VecDeque;

/// Tempo tracker fed by inter-onset intervals measured while the follower
/// is on the score.
#[derive(Debug, Clone, PartialEq)]
pub struct TempoEstimate {
    seconds_per_beat: f64,
    window: VecDeque<f64>,
    capacity: usize,
    /// Onset time and score position of the last on-score note.
    last_valid: Option<(f64, usize)>,
}

impl TempoEstimate {
    pub const DEFAULT_CAPACITY: usize = 8;

    pub fn new(seconds_per_beat: f64, capacity: usize) -> Self {
        assert!(seconds_per_beat > 0.0, "tempo must be positive");
        Self {
            seconds_per_beat,
            window: VecDeque::with_capacity(capacity.max(1)),
            capacity: capacity.max(1),
            last_valid: None,
        }
    }

    pub fn seconds_per_beat(&self) -> f64 {
        self.seconds_per_beat
    }

    pub fn window(&self) -> impl Iterator<Item = f64> + '_ {
        self.window.iter().copied()
    }

    pub fn valid_count(&self) -> usize {
        self.window.len()
    }

    pub fn last_valid(&self) -> Option<(f64, usize)> {
        self.last_valid
    }

    /// Adds one tempo observation (seconds per beat) and re-estimates.
    pub fn push_observation(&mut self, seconds_per_beat: f64) {
        if !(seconds_per_beat > 0.0 && seconds_per_beat.is_finite()) {
            return;
        }
        if self.window.len() == self.capacity {
            self.window.pop_front();
        }
        self.window.push_back(seconds_per_beat);
        let values: Vec<f64> = self.window.iter().copied().collect();
        if let Some(mean) = trimmed_mean(&values) {
            self.seconds_per_beat = mean;
        }
    }

    /// Feeds one note onset. Off-score notes leave the estimate untouched,
    /// including the baseline, so the next on-score note measures from the
    /// last on-score onset. `expected_beats` is the scored time between the
    /// previous on-score note and this one.
    pub fn update(
        &mut self,
        time: f64,
        position: usize,
        in_normal_state: bool,
        expected_beats: f64,
    ) {
        if !in_normal_state {
            return;
        }
        if let Some((prev_time, _)) = self.last_valid {
            let ioi = time - prev_time;
            if ioi <= 0.0 {
                return;
            }
            if expected_beats > 0.0 {
                self.push_observation(ioi / expected_beats);
            }
        }
        self.last_valid = Some((time, position));
    }
}

/// Mean after dropping one largest and one smallest value; plain mean for
/// fewer than three values.
pub fn trimmed_mean(values: &[f64]) -> Option<f64> {
    match values.len() {
        0 => None,
        1 | 2 => Some(values.iter().sum::<f64>() / values.len() as f64),
        len => {
            let mut sorted = values.to_vec();
            sorted.sort_by(f64::total_cmp);
            let kept = &sorted[1..len - 1];
            Some(kept.iter().sum::<f64>() / kept.len() as f64)
        }
    }
}
