//! Synthetic performances with injected playing errors and ground truth.
//!
//! The generator is ChaCha8 seeded from `ErrorSpec::seed`, so a given
//! seed yields the same performance on every platform.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::perf::{write_events, PerformanceEvent};
use crate::score::{Hand, PitchClass, PitchSet, QuantizedScore};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorSpec {
    pub p_wrong: f64,
    pub p_skip: f64,
    pub p_extra: f64,
    /// Largest fractional deviation of one inter-onset interval.
    pub tempo_drift: f64,
    pub seed: u64,
}

impl Default for ErrorSpec {
    fn default() -> Self {
        Self {
            p_wrong: 0.0,
            p_skip: 0.0,
            p_extra: 0.0,
            tempo_drift: 0.0,
            seed: 0,
        }
    }
}

impl ErrorSpec {
    pub fn validate(&self) -> Result<()> {
        let ps = [self.p_wrong, self.p_skip, self.p_extra];
        if ps.iter().any(|p| !(0.0..=1.0).contains(p)) || ps.iter().sum::<f64>() > 1.0 + 1e-12 {
            return Err(contract(
                "error probabilities must lie in [0, 1] and sum to at most 1",
            ));
        }
        if !(0.0..1.0).contains(&self.tempo_drift) {
            return Err(contract("tempo drift must lie in [0, 1)"));
        }
        Ok(())
    }

    /// Parses `key=value` pairs separated by commas, e.g.
    /// `wrong=0.05,extra=0.01,drift=0.1`. Unnamed keys keep their defaults.
    pub fn parse_pairs(text: &str, seed: u64) -> Result<Self> {
        let mut spec = ErrorSpec {
            seed,
            ..Default::default()
        };
        for pair in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (key, value) = pair
                .split_once('=')
                .ok_or_else(|| contract(format!("expected key=value, got {pair:?}")))?;
            let value: f64 = value
                .trim()
                .parse()
                .map_err(|_| contract(format!("{key}: {value:?} is not a number")))?;
            match key.trim() {
                "wrong" | "p_wrong" => spec.p_wrong = value,
                "skip" | "p_skip" => spec.p_skip = value,
                "extra" | "p_extra" => spec.p_extra = value,
                "drift" | "tempo_drift" => spec.tempo_drift = value,
                other => return Err(contract(format!("unknown error kind {other:?}"))),
            }
        }
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    Wrong,
    Extra,
}

/// Ground truth for one note-on. An extra note has no unit; a wrong note
/// keeps the unit it replaced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthEntry {
    pub unit: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorKind>,
}

impl TruthEntry {
    pub fn is_ghost(&self) -> bool {
        self.unit.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedPerformance {
    pub events: Vec<PerformanceEvent>,
    /// One entry per note-on, in event order.
    pub truth: Vec<TruthEntry>,
}

impl SimulatedPerformance {
    pub fn events_ndjson(&self) -> String {
        write_events(&self.events)
    }

    pub fn truth_json(&self) -> String {
        serde_json::to_string_pretty(&self.truth).expect("truth serializes")
    }
}

/// Sidecar path holding the truth for performance file `path`.
pub fn truth_path(path: &std::path::Path) -> std::path::PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".truth.json");
    name.into()
}

pub const SIM_VELOCITY: u8 = 80;
const NOTE_LENGTH: f64 = 0.9;

fn midi_pitch(pc: PitchClass, hand: Hand) -> u8 {
    let base = if hand == Hand::Left { 48 } else { 60 };
    base + pc.value()
}

fn hand_tag(hand: Hand) -> Option<Hand> {
    (hand != Hand::Single).then_some(hand)
}

fn random_outside(rng: &mut ChaCha8Rng, excluded: PitchSet) -> PitchClass {
    let free: Vec<PitchClass> = PitchClass::all()
        .filter(|pc| !excluded.contains(*pc))
        .collect();
    if free.is_empty() {
        return PitchClass::new(rng.random_range(0..12)).expect("in range");
    }
    free[rng.random_range(0..free.len())]
}

/// Plays `score` unit by unit at `base_tempo` seconds per beat.
///
/// Every sounding unit, including continuation units, is struck once.
/// Per unit at most one error is drawn: skip, wrong (all pitches replaced
/// by one pitch class outside the unit), or an extra unscored note half way
/// to the next onset.
pub fn simulate(
    score: &QuantizedScore,
    spec: &ErrorSpec,
    base_tempo: f64,
) -> Result<SimulatedPerformance> {
    spec.validate()?;
    if !(base_tempo.is_finite() && base_tempo > 0.0) {
        return Err(contract("base tempo must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    // (time, order, event, truth for note-ons)
    let mut timeline: Vec<(f64, usize, PerformanceEvent, Option<TruthEntry>)> = Vec::new();
    let push = |timeline: &mut Vec<_>, ev: PerformanceEvent, truth: Option<TruthEntry>| {
        let order = timeline.len();
        timeline.push((ev.time, order, ev, truth));
    };
    let mut time = 0.0;
    for (u, unit) in score.units.iter().enumerate() {
        let drift = if spec.tempo_drift > 0.0 {
            rng.random_range(-spec.tempo_drift..=spec.tempo_drift)
        } else {
            0.0
        };
        let ioi = score.unit_beats() * base_tempo * (1.0 + drift);
        if !unit.is_rest() {
            let draw: f64 = rng.random();
            let hand = hand_tag(unit.hand);
            let strike = |pcs: Vec<PitchClass>, error, timeline: &mut Vec<_>| {
                for pc in pcs {
                    let pitch = midi_pitch(pc, unit.hand);
                    let mut on = PerformanceEvent::note_on(pitch, SIM_VELOCITY, time);
                    on.hand = hand;
                    let mut off = PerformanceEvent::note_off(pitch, time + NOTE_LENGTH * ioi);
                    off.hand = hand;
                    push(
                        timeline,
                        on,
                        Some(TruthEntry {
                            unit: Some(u),
                            error,
                        }),
                    );
                    push(timeline, off, None);
                }
            };
            if draw < spec.p_skip {
                // nothing sounds for this unit
            } else if draw < spec.p_skip + spec.p_wrong {
                let pc = random_outside(&mut rng, unit.pitches);
                strike(vec![pc], Some(ErrorKind::Wrong), &mut timeline);
            } else {
                strike(unit.pitches.iter().collect(), None, &mut timeline);
                if draw < spec.p_skip + spec.p_wrong + spec.p_extra {
                    let mut nearby = unit.pitches;
                    if let Some(next) = score.units.get(u + 1) {
                        nearby = PitchSet::from_mask(nearby.mask() | next.pitches.mask());
                    }
                    let pc = random_outside(&mut rng, nearby);
                    let at = time + 0.5 * ioi;
                    let pitch = midi_pitch(pc, unit.hand);
                    let mut on = PerformanceEvent::note_on(pitch, SIM_VELOCITY, at);
                    on.hand = hand;
                    let mut off = PerformanceEvent::note_off(pitch, at + 0.25 * ioi);
                    off.hand = hand;
                    push(
                        &mut timeline,
                        on,
                        Some(TruthEntry {
                            unit: None,
                            error: Some(ErrorKind::Extra),
                        }),
                    );
                    push(&mut timeline, off, None);
                }
            }
        }
        time += ioi;
    }
    timeline.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut events = Vec::with_capacity(timeline.len());
    let mut truth = Vec::new();
    for (_, _, ev, t) in timeline {
        events.push(ev);
        truth.extend(t);
    }
    Ok(SimulatedPerformance { events, truth })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perf::NoteKind;
    use crate::score::{quantize, Score, ScoreEvent};
    use proptest::prelude::*;

    fn score(classes: &[u8]) -> QuantizedScore {
        let events = classes
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                ScoreEvent::note(PitchSet::single(PitchClass::new(c).unwrap()), i as f64, 1.0)
            })
            .collect();
        quantize(&Score::new(60.0, 1, events).unwrap()).unwrap()
    }

    fn note_ons(p: &SimulatedPerformance) -> Vec<&PerformanceEvent> {
        p.events.iter().filter(|e| e.is_note_on()).collect()
    }

    #[test]
    fn clean_run_reproduces_score() {
        let q = score(&[0, 4, 7, 11]);
        let p = simulate(&q, &ErrorSpec::default(), 0.5).unwrap();
        let ons = note_ons(&p);
        assert_eq!(
            ons.iter().map(|e| e.pitch).collect::<Vec<_>>(),
            vec![60, 64, 67, 71]
        );
        assert_eq!(
            ons.iter().map(|e| e.time).collect::<Vec<_>>(),
            vec![0.0, 0.5, 1.0, 1.5]
        );
        let units: Vec<_> = p.truth.iter().map(|t| t.unit).collect();
        assert_eq!(units, vec![Some(0), Some(1), Some(2), Some(3)]);
    }

    #[test]
    fn skip_everything_leaves_no_note_ons() {
        let spec = ErrorSpec {
            p_skip: 1.0,
            ..Default::default()
        };
        let p = simulate(&score(&[0, 2, 4]), &spec, 0.5).unwrap();
        assert!(note_ons(&p).is_empty());
        assert!(p.truth.is_empty());
    }

    #[test]
    fn wrong_notes_avoid_the_scored_pitch() {
        let spec = ErrorSpec {
            p_wrong: 1.0,
            seed: 3,
            ..Default::default()
        };
        let q = score(&[0, 2, 4, 5, 7, 9, 11]);
        let p = simulate(&q, &spec, 0.5).unwrap();
        for (ev, t) in note_ons(&p).iter().zip(&p.truth) {
            assert_eq!(t.error, Some(ErrorKind::Wrong));
            let u = t.unit.unwrap();
            assert!(!q.units[u]
                .pitches
                .contains(PitchClass::new(ev.pitch % 12).unwrap()));
        }
    }

    #[test]
    fn invalid_spec_rejected() {
        let spec = ErrorSpec {
            p_wrong: 0.6,
            p_skip: 0.6,
            ..Default::default()
        };
        assert!(simulate(&score(&[0]), &spec, 0.5).is_err());
    }

    #[test]
    fn pair_syntax() {
        let spec = ErrorSpec::parse_pairs("wrong=0.1, extra=0.05,drift=0.2", 9).unwrap();
        assert_eq!(
            (spec.p_wrong, spec.p_extra, spec.tempo_drift, spec.seed),
            (0.1, 0.05, 0.2, 9)
        );
        assert!(ErrorSpec::parse_pairs("bogus=1", 0).is_err());
        assert!(ErrorSpec::parse_pairs("wrong", 0).is_err());
    }

    proptest! {
        #[test]
        fn output_is_ordered_and_seed_determined(
            classes in prop::collection::vec(0u8..12, 1..40),
            wrong in 0.0f64..0.3,
            skip in 0.0f64..0.3,
            extra in 0.0f64..0.3,
            drift in 0.0f64..0.5,
            seed in any::<u64>(),
        ) {
            let spec = ErrorSpec { p_wrong: wrong, p_skip: skip, p_extra: extra, tempo_drift: drift, seed };
            let q = score(&classes);
            let a = simulate(&q, &spec, 0.4).unwrap();
            let b = simulate(&q, &spec, 0.4).unwrap();
            prop_assert_eq!(a.events_ndjson(), b.events_ndjson());
            prop_assert_eq!(a.truth_json(), b.truth_json());
            prop_assert!(a.events.windows(2).all(|w| w[0].time <= w[1].time));
            prop_assert_eq!(a.truth.len(), a.events.iter().filter(|e| e.kind == NoteKind::NoteOn).count());
        }
    }
}
