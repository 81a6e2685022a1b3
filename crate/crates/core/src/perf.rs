//! Live input: timestamped note events, newline-delimited JSON I/O, and
//! grouping of simultaneous note-ons into chord observations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::score::{pitch_class_of, Hand, PitchSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoteKind {
    NoteOn,
    NoteOff,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerformanceEvent {
    pub kind: NoteKind,
    pub pitch: u8,
    pub velocity: u8,
    /// Seconds on the performer's monotonic clock.
    pub time: f64,
    /// Hand known from the input channel, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hand: Option<Hand>,
}

impl PerformanceEvent {
    pub fn note_on(pitch: u8, velocity: u8, time: f64) -> Self {
        Self {
            kind: NoteKind::NoteOn,
            pitch,
            velocity,
            time,
            hand: None,
        }
    }

    pub fn note_off(pitch: u8, time: f64) -> Self {
        Self {
            kind: NoteKind::NoteOff,
            pitch,
            velocity: 0,
            time,
            hand: None,
        }
    }

    /// A note-on with velocity zero is a note-off.
    pub fn is_note_on(&self) -> bool {
        self.kind == NoteKind::NoteOn && self.velocity > 0
    }
}

pub fn read_events(bytes: &[u8]) -> Result<Vec<PerformanceEvent>> {
    let mut events = Vec::new();
    let mut line_start = 0;
    let mut last_time = 0.0;
    for line in bytes.split_inclusive(|b| *b == b'\n') {
        let offset = line_start;
        line_start += line.len();
        if line.iter().all(u8::is_ascii_whitespace) {
            continue;
        }
        let ev: PerformanceEvent = serde_json::from_slice(line).map_err(|e| Error::Parse {
            offset: offset + e.column().saturating_sub(1),
            message: e.to_string(),
        })?;
        if ev.pitch > 127 || ev.velocity > 127 {
            return Err(Error::Parse {
                offset,
                message: "pitch and velocity must be in 0..=127".into(),
            });
        }
        if !(ev.time.is_finite() && ev.time >= 0.0) || ev.time < last_time {
            return Err(Error::Parse {
                offset,
                message: format!("event time {} is negative or out of order", ev.time),
            });
        }
        last_time = ev.time;
        events.push(ev);
    }
    Ok(events)
}

pub fn write_events(events: &[PerformanceEvent]) -> String {
    to_ndjson(events)
}

pub(crate) fn to_ndjson<T: Serialize>(items: &[T]) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("record serializes"));
        out.push('\n');
    }
    out
}

/// Note-ons sounding together, treated as one observation.
#[derive(Debug, Clone, PartialEq)]
pub struct Onset {
    pub time: f64,
    pub pitches: PitchSet,
    pub velocity: u8,
    pub hand: Option<Hand>,
    /// Indices of the member note-ons, counted over note-ons only.
    pub note_ons: Vec<usize>,
}

/// Default window for collapsing near-simultaneous note-ons into a chord.
pub const DEFAULT_CHORD_WINDOW: f64 = 0.03;

/// Groups note-ons with the same hand tag whose times fall within `window`
/// seconds of the group's first note.
pub fn group_onsets(events: &[PerformanceEvent], window: f64) -> Vec<Onset> {
    let mut groups: Vec<Onset> = Vec::new();
    for (k, ev) in events.iter().filter(|e| e.is_note_on()).enumerate() {
        let pc = pitch_class_of(i32::from(ev.pitch)).expect("pitch validated");
        match groups.last_mut() {
            Some(g) if g.hand == ev.hand && ev.time - g.time <= window => {
                g.pitches.insert(pc);
                g.velocity = g.velocity.max(ev.velocity);
                g.note_ons.push(k);
            }
            _ => groups.push(Onset {
                time: ev.time,
                pitches: PitchSet::single(pc),
                velocity: ev.velocity,
                hand: ev.hand,
                note_ons: vec![k],
            }),
        }
    }
    groups
}
