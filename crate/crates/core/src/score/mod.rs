//! Symbolic scores, pitch classes and beat quantization.
//!
//! A [`Score`] is the authored form: events with onsets and durations in
//! beats. [`quantize`] expands it into fixed-length [`ScoreUnit`]s, one per
//! `1 / subdivision` of a beat, which is the granularity the HMM states are
//! built on. A note held for three units becomes three sequential units, the
//! last two flagged as continuations.

mod midi;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub use midi::parse_midi;

/// Pitch-class names, indexed by pitch class.
pub const PITCH_NAMES: [&str; 12] = [
    "C", "C#", "D", "Eb", "E", "F", "F#", "G", "G#", "A", "Bb", "B",
];

/// One of the twelve chromatic pitch classes, octave discarded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PitchClass(u8);

impl PitchClass {
    pub const COUNT: usize = 12;

    pub fn new(value: u8) -> Result<Self> {
        if value < 12 {
            Ok(Self(value))
        } else {
            Err(Error::Domain(format!("pitch class {value} not in 0..12")))
        }
    }

    pub fn value(self) -> u8 {
        self.0
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn name(self) -> &'static str {
        PITCH_NAMES[self.index()]
    }

    pub fn all() -> impl Iterator<Item = PitchClass> {
        (0..12).map(PitchClass)
    }
}

/// Maps a MIDI note number to its pitch class.
pub fn pitch_class_of(midi_note: i32) -> Result<PitchClass> {
    if !(0..=127).contains(&midi_note) {
        return Err(Error::Domain(format!(
            "midi note {midi_note} not in 0..=127"
        )));
    }
    Ok(PitchClass((midi_note % 12) as u8))
}

impl fmt::Display for PitchClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PitchClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PITCH_NAMES
            .iter()
            .position(|n| *n == s)
            .map(|i| PitchClass(i as u8))
            .ok_or_else(|| Error::Domain(format!("unknown pitch name {s:?}")))
    }
}

impl Serialize for PitchClass {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for PitchClass {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A set of pitch classes stored as a 12-bit mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct PitchSet(u16);

impl PitchSet {
    pub const EMPTY: PitchSet = PitchSet(0);

    pub fn single(pc: PitchClass) -> Self {
        PitchSet(1 << pc.0)
    }

    pub fn from_mask(mask: u16) -> Self {
        PitchSet(mask & 0x0fff)
    }

    pub fn mask(self) -> u16 {
        self.0
    }

    pub fn insert(&mut self, pc: PitchClass) {
        self.0 |= 1 << pc.0;
    }

    pub fn contains(self, pc: PitchClass) -> bool {
        self.0 & (1 << pc.0) != 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    /// Lowest pitch class in the set, if any.
    pub fn lowest(self) -> Option<PitchClass> {
        (!self.is_empty()).then(|| PitchClass(self.0.trailing_zeros() as u8))
    }

    pub fn iter(self) -> impl Iterator<Item = PitchClass> {
        PitchClass::all().filter(move |pc| self.contains(*pc))
    }
}

impl FromIterator<PitchClass> for PitchSet {
    fn from_iter<I: IntoIterator<Item = PitchClass>>(iter: I) -> Self {
        let mut set = PitchSet::EMPTY;
        for pc in iter {
            set.insert(pc);
        }
        set
    }
}

impl Serialize for PitchSet {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_seq(self.iter())
    }
}

impl<'de> Deserialize<'de> for PitchSet {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let names = Vec::<PitchClass>::deserialize(d)?;
        Ok(names.into_iter().collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Hand {
    #[serde(rename = "L")]
    Left,
    #[serde(rename = "R")]
    Right,
    #[serde(rename = "S")]
    #[default]
    Single,
}

/// An accompaniment note authored against a score event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccompanimentNote {
    pub pitch: u8,
    /// Velocity relative to the soloist's current dynamic level.
    pub velocity_ratio: f64,
    /// Beats after the owning event's onset.
    pub offset: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreEvent {
    pub pitches: PitchSet,
    pub onset: f64,
    pub duration: f64,
    #[serde(default)]
    pub hand: Hand,
    #[serde(default)]
    pub accompaniment: Vec<AccompanimentNote>,
}

impl ScoreEvent {
    pub fn note(pitches: PitchSet, onset: f64, duration: f64) -> Self {
        Self {
            pitches,
            onset,
            duration,
            hand: Hand::Single,
            accompaniment: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub bpm: f64,
    pub subdivision: u32,
    pub events: Vec<ScoreEvent>,
}

impl Score {
    pub fn new(bpm: f64, subdivision: u32, events: Vec<ScoreEvent>) -> Result<Self> {
        let score = Self {
            bpm,
            subdivision,
            events,
        };
        score.validate()?;
        Ok(score)
    }

    pub fn validate(&self) -> Result<()> {
        if self.events.is_empty() {
            return Err(Error::EmptyScore);
        }
        if !(self.bpm.is_finite() && self.bpm > 0.0) {
            return Err(Error::Domain(format!(
                "bpm must be positive, got {}",
                self.bpm
            )));
        }
        if self.subdivision == 0 {
            return Err(Error::Domain("subdivision must be at least 1".into()));
        }
        let mut prev_onset = f64::NEG_INFINITY;
        for (i, ev) in self.events.iter().enumerate() {
            if !(ev.duration.is_finite() && ev.duration > 0.0) {
                return Err(Error::Domain(format!(
                    "event {i}: duration must be positive, got {}",
                    ev.duration
                )));
            }
            if !(ev.onset.is_finite() && ev.onset >= 0.0) {
                return Err(Error::Domain(format!(
                    "event {i}: onset must be non-negative, got {}",
                    ev.onset
                )));
            }
            if ev.onset < prev_onset {
                return Err(Error::Domain(format!("event {i}: onsets are not sorted")));
            }
            prev_onset = ev.onset;
            for note in &ev.accompaniment {
                if note.pitch > 127 {
                    return Err(Error::Domain(format!(
                        "event {i}: accompaniment pitch {} out of range",
                        note.pitch
                    )));
                }
            }
        }
        Ok(())
    }

    /// Seconds per beat implied by the default tempo.
    pub fn seconds_per_beat(&self) -> f64 {
        60.0 / self.bpm
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("score serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreFormat {
    ScoreJson,
    MidiFile,
}

pub fn parse_score(bytes: &[u8], format: ScoreFormat) -> Result<Score> {
    match format {
        ScoreFormat::ScoreJson => parse_score_json(bytes),
        ScoreFormat::MidiFile => parse_midi(bytes),
    }
}

fn parse_score_json(bytes: &[u8]) -> Result<Score> {
    let score: Score = serde_json::from_slice(bytes).map_err(|e| Error::Parse {
        offset: byte_offset(bytes, e.line(), e.column()),
        message: e.to_string(),
    })?;
    score.validate()?;
    Ok(score)
}

/// Converts serde_json's 1-based line/column into a byte offset.
fn byte_offset(bytes: &[u8], line: usize, column: usize) -> usize {
    let line_start: usize = bytes
        .split_inclusive(|b| *b == b'\n')
        .take(line.saturating_sub(1))
        .map(<[u8]>::len)
        .sum();
    (line_start + column.saturating_sub(1)).min(bytes.len())
}

/// One beat-quantized modelling unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreUnit {
    pub pitches: PitchSet,
    pub hand: Hand,
    pub is_continuation: bool,
    pub source_event_index: usize,
}

impl ScoreUnit {
    pub fn is_rest(&self) -> bool {
        self.pitches.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizedScore {
    pub units: Vec<ScoreUnit>,
    pub subdivision: u32,
    pub bpm: f64,
    /// Source events, kept for their accompaniment and durations.
    pub events: Vec<ScoreEvent>,
}

impl QuantizedScore {
    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    /// Length of one unit in beats.
    pub fn unit_beats(&self) -> f64 {
        1.0 / f64::from(self.subdivision)
    }

    /// Indices of the units belonging to `hand`, in score order.
    pub fn hand_units(&self, hand: Hand) -> Vec<usize> {
        self.units
            .iter()
            .enumerate()
            .filter(|(_, u)| u.hand == hand)
            .map(|(i, _)| i)
            .collect()
    }

    /// Builds a score holding only the given units, in the given order.
    pub fn subset(&self, indices: &[usize]) -> QuantizedScore {
        QuantizedScore {
            units: indices.iter().map(|&i| self.units[i]).collect(),
            subdivision: self.subdivision,
            bpm: self.bpm,
            events: self.events.clone(),
        }
    }
}

/// Number of units an event of `duration_beats` occupies: round-half-up,
/// never fewer than one.
pub fn unit_count(duration_beats: f64, subdivision: u32) -> usize {
    let scaled = duration_beats * f64::from(subdivision);
    ((scaled + 0.5).floor() as usize).max(1)
}

pub fn quantize(score: &Score) -> Result<QuantizedScore> {
    if score.events.is_empty() {
        return Err(Error::EmptyScore);
    }
    if score.subdivision == 0 {
        return Err(Error::Domain("subdivision must be at least 1".into()));
    }
    let mut units = Vec::new();
    for (idx, ev) in score.events.iter().enumerate() {
        if !(ev.duration > 0.0) {
            return Err(Error::Domain(format!("event {idx}: non-positive duration")));
        }
        let k = unit_count(ev.duration, score.subdivision);
        units.extend((0..k).map(|j| ScoreUnit {
            pitches: ev.pitches,
            hand: ev.hand,
            is_continuation: j > 0,
            source_event_index: idx,
        }));
    }
    Ok(QuantizedScore {
        units,
        subdivision: score.subdivision,
        bpm: score.bpm,
        events: score.events.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pc(v: u8) -> PitchClass {
        PitchClass::new(v).unwrap()
    }

    #[test]
    fn pitch_class_examples() {
        assert_eq!(pitch_class_of(60).unwrap(), pc(0));
        assert_eq!(pitch_class_of(69).unwrap(), pc(9));
        assert_eq!(pitch_class_of(61).unwrap(), pc(1));
        assert_eq!(pitch_class_of(69).unwrap().name(), "A");
        assert!(matches!(pitch_class_of(128), Err(Error::Domain(_))));
        assert!(matches!(pitch_class_of(-1), Err(Error::Domain(_))));
    }

    #[test]
    fn names_round_trip() {
        for p in PitchClass::all() {
            assert_eq!(p.name().parse::<PitchClass>().unwrap(), p);
        }
        assert!("Db".parse::<PitchClass>().is_err());
    }

    #[test]
    fn three_beat_note_becomes_three_units() {
        let score = Score::new(
            120.0,
            1,
            vec![ScoreEvent::note(PitchSet::single(pc(0)), 0.0, 3.0)],
        )
        .unwrap();
        let q = quantize(&score).unwrap();
        assert_eq!(q.len(), 3);
        assert!(!q.units[0].is_continuation);
        assert!(q.units[1].is_continuation && q.units[2].is_continuation);
        assert!(q.units.iter().all(|u| u.pitches == PitchSet::single(pc(0))));
    }

    #[test]
    fn one_beat_note_is_one_unit() {
        let score = Score::new(
            120.0,
            1,
            vec![ScoreEvent::note(PitchSet::single(pc(4)), 0.0, 1.0)],
        )
        .unwrap();
        assert_eq!(quantize(&score).unwrap().len(), 1);
    }

    #[test]
    fn dotted_notes_at_half_beat_subdivision() {
        // round(1.5 * 2) = 3 units per event
        let score = Score::new(
            120.0,
            2,
            vec![
                ScoreEvent::note(PitchSet::single(pc(0)), 0.0, 1.5),
                ScoreEvent::note(PitchSet::single(pc(2)), 1.5, 1.5),
            ],
        )
        .unwrap();
        let q = quantize(&score).unwrap();
        let src: Vec<_> = q.units.iter().map(|u| u.source_event_index).collect();
        assert_eq!(src, vec![0, 0, 0, 1, 1, 1]);
        let cont: Vec<_> = q.units.iter().map(|u| u.is_continuation).collect();
        assert_eq!(cont, vec![false, true, true, false, true, true]);
    }

    #[test]
    fn tiny_duration_clamps_to_one_unit() {
        assert_eq!(unit_count(0.1, 1), 1);
        assert_eq!(unit_count(0.5, 1), 1);
        assert_eq!(unit_count(2.5, 1), 3);
        assert_eq!(unit_count(2.49, 1), 2);
    }

    #[test]
    fn empty_score_rejected() {
        let score = Score {
            bpm: 120.0,
            subdivision: 1,
            events: vec![],
        };
        assert_eq!(quantize(&score), Err(Error::EmptyScore));
        assert_eq!(
            parse_score(
                br#"{"bpm":120,"subdivision":1,"events":[]}"#,
                ScoreFormat::ScoreJson
            ),
            Err(Error::EmptyScore)
        );
    }

    #[test]
    fn json_single_event() {
        let src = br#"{"bpm": 100, "subdivision": 1,
            "events": [{"pitches": ["C"], "duration": 1, "onset": 0}]}"#;
        let score = parse_score(src, ScoreFormat::ScoreJson).unwrap();
        assert_eq!(score.events.len(), 1);
        assert_eq!(score.events[0].pitches, PitchSet::single(pc(0)));
        assert_eq!(score.events[0].hand, Hand::Single);
    }

    #[test]
    fn json_syntax_error_reports_offset() {
        let src = b"{\"bpm\": 100,\n \"subdivision\": ]}";
        match parse_score(src, ScoreFormat::ScoreJson) {
            Err(Error::Parse { offset, .. }) => assert_eq!(src[offset], b']'),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn json_unknown_pitch_name() {
        let src = br#"{"bpm": 100, "subdivision": 1,
            "events": [{"pitches": ["H"], "duration": 1, "onset": 0}]}"#;
        assert!(matches!(
            parse_score(src, ScoreFormat::ScoreJson),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn rest_is_empty_unit() {
        let score = Score::new(
            60.0,
            1,
            vec![
                ScoreEvent::note(PitchSet::single(pc(0)), 0.0, 1.0),
                ScoreEvent::note(PitchSet::EMPTY, 1.0, 2.0),
            ],
        )
        .unwrap();
        let q = quantize(&score).unwrap();
        assert_eq!(q.len(), 3);
        assert!(q.units[1].is_rest() && q.units[2].is_rest());
    }

    fn arb_event() -> impl Strategy<Value = (u16, f64, u8, Vec<(u8, f64, f64)>)> {
        (
            0u16..4096,
            0.05f64..6.0,
            0u8..3,
            prop::collection::vec((0u8..128, 0.1f64..1.5, 0.0f64..2.0), 0..3),
        )
    }

    fn build_score(raw: Vec<(u16, f64, u8, Vec<(u8, f64, f64)>)>, subdivision: u32) -> Score {
        let mut onset = 0.0;
        let events = raw
            .into_iter()
            .map(|(mask, dur, hand, acc)| {
                let ev = ScoreEvent {
                    pitches: PitchSet::from_mask(mask),
                    onset,
                    duration: dur,
                    hand: [Hand::Left, Hand::Right, Hand::Single][hand as usize],
                    accompaniment: acc
                        .into_iter()
                        .map(|(pitch, velocity_ratio, offset)| AccompanimentNote {
                            pitch,
                            velocity_ratio,
                            offset,
                        })
                        .collect(),
                };
                onset += dur;
                ev
            })
            .collect();
        Score::new(96.0, subdivision, events).unwrap()
    }

    proptest! {
        #[test]
        fn pitch_class_octave_invariant(n in 0i32..116) {
            prop_assert_eq!(pitch_class_of(n).unwrap(), pitch_class_of(n + 12).unwrap());
        }

        #[test]
        fn quantize_is_length_exact_and_ordered(
            raw in prop::collection::vec(arb_event(), 1..20),
            subdivision in 1u32..5,
        ) {
            let score = build_score(raw, subdivision);
            let q = quantize(&score).unwrap();
            let expected: usize = score
                .events
                .iter()
                .map(|e| unit_count(e.duration, subdivision))
                .sum();
            prop_assert_eq!(q.len(), expected);
            prop_assert!(q.units.windows(2).all(|w| w[0].source_event_index <= w[1].source_event_index));
        }

        #[test]
        fn score_json_round_trips(raw in prop::collection::vec(arb_event(), 1..8)) {
            let score = build_score(raw, 2);
            let text = score.to_json();
            let back = parse_score(text.as_bytes(), ScoreFormat::ScoreJson).unwrap();
            prop_assert_eq!(back, score);
        }
    }
}
