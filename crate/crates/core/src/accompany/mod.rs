//! Accompaniment scheduling driven by the follower's decoded position.
//!
//! The engine plays ahead of the soloist: when unit `p` is decoded it
//! schedules the accompaniment for the next units at the times the current
//! tempo predicts. A decoded ghost state is answered one observation late;
//! the schedule is only revised once the follower is back on the score.
//! All times come from the caller, so replaying a recorded performance
//! reproduces the live output exactly.

mod dynamics;
mod schedule;
mod tempo;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::decoder::Decoded;
use crate::score::{AccompanimentNote, QuantizedScore};

pub use dynamics::DynamicsLevel;
pub use schedule::{AccompanimentEvent, Schedule};
pub use tempo::{trimmed_mean, TempoEstimate};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    /// Units scheduled ahead of the decoded position.
    pub lookahead: usize,
    pub tempo_window: usize,
    pub dynamics_ratio: f64,
    pub dynamics_smoothing: f64,
    /// Semitone offsets of the fallback chord above its root.
    pub triad: Vec<u8>,
    /// MIDI note of pitch class C for the fallback chord.
    pub triad_base: u8,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            lookahead: 1,
            tempo_window: TempoEstimate::DEFAULT_CAPACITY,
            dynamics_ratio: DynamicsLevel::DEFAULT_RATIO,
            dynamics_smoothing: DynamicsLevel::DEFAULT_SMOOTHING,
            triad: vec![0, 4, 7],
            triad_base: 48,
        }
    }
}

/// Accompaniment for a unit: the authored notes of its event, or a chord
/// built on the lowest scored pitch class. Continuation units and rests
/// have none.
pub fn chord_match(
    score: &QuantizedScore,
    unit: usize,
    cfg: &EngineConfig,
) -> Vec<AccompanimentNote> {
    let u = &score.units[unit];
    if u.is_continuation || u.is_rest() {
        return Vec::new();
    }
    let authored = &score.events[u.source_event_index].accompaniment;
    if !authored.is_empty() {
        return authored.clone();
    }
    let root = u.pitches.lowest().expect("non-rest unit").value();
    cfg.triad
        .iter()
        .filter_map(|&iv| {
            let pitch = u16::from(cfg.triad_base) + u16::from(root) + u16::from(iv);
            (pitch <= 127).then_some(AccompanimentNote {
                pitch: pitch as u8,
                velocity_ratio: 1.0,
                offset: 0.0,
            })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct Accompanist {
    score: QuantizedScore,
    cfg: EngineConfig,
    tempo: TempoEstimate,
    dynamics: DynamicsLevel,
    schedule: Schedule,
    /// Units whose accompaniment is pending or already emitted.
    scheduled_units: BTreeSet<usize>,
    position: Option<usize>,
    pending_deviation: bool,
    emitted: Vec<AccompanimentEvent>,
}

impl Accompanist {
    pub fn new(score: QuantizedScore, cfg: EngineConfig) -> Self {
        let tempo = TempoEstimate::new(60.0 / score.bpm, cfg.tempo_window);
        let dynamics = DynamicsLevel::new(cfg.dynamics_smoothing, cfg.dynamics_ratio);
        Self {
            score,
            cfg,
            tempo,
            dynamics,
            schedule: Schedule::new(),
            scheduled_units: BTreeSet::new(),
            position: None,
            pending_deviation: false,
            emitted: Vec::new(),
        }
    }

    pub fn schedule(&self) -> &Schedule {
        &self.schedule
    }

    pub fn tempo(&self) -> &TempoEstimate {
        &self.tempo
    }

    pub fn dynamics(&self) -> &DynamicsLevel {
        &self.dynamics
    }

    pub fn position(&self) -> Option<usize> {
        self.position
    }

    pub fn pending_deviation(&self) -> bool {
        self.pending_deviation
    }

    pub fn emitted(&self) -> &[AccompanimentEvent] {
        &self.emitted
    }

    pub fn into_emitted(self) -> Vec<AccompanimentEvent> {
        self.emitted
    }

    /// Fires every pending event due at or before `now`.
    pub fn advance_to(&mut self, now: f64) {
        for ev in self.schedule.pop_due(now) {
            self.emit(ev);
        }
    }

    /// Flushes the rest of the schedule at the end of a performance.
    pub fn finish(&mut self) {
        for ev in self.schedule.pop_all() {
            self.emit(ev);
        }
    }

    fn emit(&mut self, mut ev: AccompanimentEvent) {
        let Some(level) = self.dynamics.level() else {
            return;
        };
        let Some(v) = dynamics::cap_below(ev.velocity, level) else {
            return;
        };
        ev.velocity = v;
        self.emitted.push(ev);
    }

    /// Handles one soloist onset decoded at `decoded`.
    pub fn on_onset(&mut self, time: f64, velocity: u8, decoded: Decoded) {
        self.advance_to(time);
        self.dynamics.observe_velocity(velocity);
        let expected_beats = match self.tempo.last_valid() {
            Some((_, prev)) if decoded.unit > prev => {
                (decoded.unit - prev) as f64 * self.score.unit_beats()
            }
            _ => 0.0,
        };
        self.tempo
            .update(time, decoded.unit, !decoded.ghost, expected_beats);
        self.revise(decoded, time);
    }

    /// Applies a new decoded position to the schedule.
    ///
    /// A ghost position only raises the deviation flag. On the next
    /// on-score position after a deviation, or on any jump other than one
    /// unit forward, pending events off the new path are cancelled before
    /// re-anticipating.
    pub fn revise(&mut self, decoded: Decoded, now: f64) {
        if decoded.ghost {
            self.pending_deviation = true;
            return;
        }
        let new = decoded.unit;
        let jumped = self
            .position
            .is_some_and(|old| new != old && new != old + 1);
        if self.pending_deviation || jumped {
            let keep = new..=new + self.cfg.lookahead;
            let cancelled = self
                .schedule
                .cancel_where(|e| !keep.contains(&e.source_unit));
            for ev in cancelled {
                self.scheduled_units.remove(&ev.source_unit);
            }
            self.pending_deviation = false;
        }
        self.position = Some(new);
        self.anticipate(new, now);
    }

    /// Schedules accompaniment for `position` (now, if not yet scheduled)
    /// and the following `lookahead` units at their predicted onsets.
    pub fn anticipate(&mut self, position: usize, now: f64) {
        let spb = self.tempo.seconds_per_beat();
        let last = (position + self.cfg.lookahead).min(self.score.len().saturating_sub(1));
        for unit in position..=last {
            if self.scheduled_units.contains(&unit) {
                continue;
            }
            let notes = chord_match(&self.score, unit, &self.cfg);
            if notes.is_empty() {
                continue;
            }
            let ahead_beats = (unit - position) as f64 * self.score.unit_beats();
            let src = self.score.units[unit].source_event_index;
            let duration = self.score.events[src].duration * spb;
            for note in notes {
                let Some(velocity) = self.dynamics.accompaniment_velocity(note.velocity_ratio)
                else {
                    continue;
                };
                self.schedule.enqueue(AccompanimentEvent {
                    due_time: now + (ahead_beats + note.offset) * spb,
                    pitch: note.pitch,
                    velocity,
                    duration,
                    source_unit: unit,
                });
            }
            self.scheduled_units.insert(unit);
        }
    }
}
