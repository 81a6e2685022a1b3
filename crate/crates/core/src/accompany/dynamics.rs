use crate::perf::PerformanceEvent;

/// Smoothed soloist loudness and the accompaniment velocity derived from it.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsLevel {
    level: Option<f64>,
    smoothing: f64,
    ratio: f64,
}

impl DynamicsLevel {
    pub const DEFAULT_SMOOTHING: f64 = 0.3;
    pub const DEFAULT_RATIO: f64 = 0.85;

    pub fn new(smoothing: f64, ratio: f64) -> Self {
        assert!(
            (0.0..=1.0).contains(&smoothing),
            "smoothing must be in [0, 1]"
        );
        assert!(ratio > 0.0 && ratio < 1.0, "ratio must be in (0, 1)");
        Self {
            level: None,
            smoothing,
            ratio,
        }
    }

    pub fn level(&self) -> Option<f64> {
        self.level
    }

    /// Folds a note-on velocity into the level; note-offs (including
    /// zero-velocity note-ons) are ignored.
    pub fn update(&mut self, event: &PerformanceEvent) {
        if event.is_note_on() {
            self.observe_velocity(event.velocity);
        }
    }

    pub fn observe_velocity(&mut self, velocity: u8) {
        if velocity == 0 {
            return;
        }
        let v = f64::from(velocity);
        self.level = Some(match self.level {
            None => v,
            Some(l) => l + self.smoothing * (v - l),
        });
    }

    /// Accompaniment velocity for a note authored at `velocity_ratio`,
    /// always strictly below the current level. `None` when no level is
    /// known yet or the level is too soft to go below.
    pub fn accompaniment_velocity(&self, velocity_ratio: f64) -> Option<u8> {
        let level = self.level?;
        let raw = (level * self.ratio * velocity_ratio)
            .round()
            .clamp(1.0, 127.0);
        cap_below(raw as u8, level)
    }
}

/// Largest velocity not above `velocity` that stays strictly below `level`.
pub(crate) fn cap_below(velocity: u8, level: f64) -> Option<u8> {
    let ceiling = level.ceil() - 1.0;
    let v = f64::from(velocity).min(ceiling);
    (v >= 1.0).then_some(v as u8)
}
