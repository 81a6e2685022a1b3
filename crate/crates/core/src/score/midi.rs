//! Minimal Standard MIDI File reader.
//!
//! Handles format 0 and 1 files with metrical (ticks-per-quarter) division.
//! Only NoteOn, NoteOff and SetTempo are interpreted; every other event is
//! skipped. Channel 0 carries a single-part solo, channel 2 the left hand,
//! channel 3 the right hand and channel 1 the accompaniment.

use std::collections::HashMap;

use super::{AccompanimentNote, Hand, PitchSet, Score, ScoreEvent};
use crate::error::{Error, Result};
use crate::score::pitch_class_of;

const SOLO_CHANNEL: u8 = 0;
const ACCOMPANIMENT_CHANNEL: u8 = 1;
const LEFT_CHANNEL: u8 = 2;
const RIGHT_CHANNEL: u8 = 3;
const DEFAULT_TEMPO_US: u32 = 500_000;

#[derive(Debug, Clone, Copy)]
struct Note {
    on_tick: u64,
    off_tick: u64,
    channel: u8,
    pitch: u8,
    velocity: u8,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn eof(&self, what: &str) -> Error {
        Error::Parse {
            offset: self.pos,
            message: format!("unexpected end of data reading {what}"),
        }
    }

    fn u8(&mut self) -> Result<u8> {
        let b = *self.bytes.get(self.pos).ok_or_else(|| self.eof("byte"))?;
        self.pos += 1;
        Ok(b)
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| self.eof(what))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u16(&mut self) -> Result<u16> {
        let b = self.take(2, "u16")?;
        Ok(u16::from_be_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4, "u32")?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn vlq(&mut self) -> Result<u32> {
        let start = self.pos;
        let mut value: u32 = 0;
        for _ in 0..4 {
            let b = self.u8()?;
            value = (value << 7) | u32::from(b & 0x7f);
            if b & 0x80 == 0 {
                return Ok(value);
            }
        }
        Err(Error::Parse {
            offset: start,
            message: "variable-length quantity longer than 4 bytes".into(),
        })
    }
}

pub fn parse_midi(bytes: &[u8]) -> Result<Score> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "header id")? != b"MThd" {
        return Err(Error::Parse {
            offset: 0,
            message: "missing MThd header".into(),
        });
    }
    let header_len = r.u32()? as usize;
    let header_start = r.pos;
    let format = r.u16()?;
    let n_tracks = r.u16()?;
    let division = r.u16()?;
    if header_len < 6 {
        return Err(Error::Parse {
            offset: header_start,
            message: format!("header length {header_len} too short"),
        });
    }
    r.pos = header_start + header_len;
    if format > 1 {
        return Err(Error::UnsupportedFormat(format!("SMF format {format}")));
    }
    if division & 0x8000 != 0 {
        return Err(Error::UnsupportedFormat("SMPTE time division".into()));
    }
    if division == 0 {
        return Err(Error::Parse {
            offset: header_start + 4,
            message: "zero ticks per quarter note".into(),
        });
    }

    let mut notes = Vec::new();
    let mut tempo: Option<(u64, u32)> = None;
    let mut tracks_read = 0;
    while tracks_read < n_tracks && r.pos < bytes.len() {
        let id = r.take(4, "chunk id")?;
        let len = r.u32()? as usize;
        let body_start = r.pos;
        let body = r.take(len, "chunk body")?;
        if id == b"MTrk" {
            read_track(body, body_start, &mut notes, &mut tempo)?;
            tracks_read += 1;
        }
    }
    let tempo_us = tempo.map_or(DEFAULT_TEMPO_US, |(_, t)| t);
    build_score(
        notes,
        f64::from(division),
        60_000_000.0 / f64::from(tempo_us),
    )
}

fn read_track(
    body: &[u8],
    base: usize,
    notes: &mut Vec<Note>,
    tempo: &mut Option<(u64, u32)>,
) -> Result<()> {
    let mut r = Reader {
        bytes: body,
        pos: 0,
    };
    let mut tick: u64 = 0;
    let mut running: Option<u8> = None;
    let mut open: HashMap<(u8, u8), (u64, u8, usize)> = HashMap::new();
    let at = |pos: usize| base + pos;

    while r.pos < body.len() {
        tick += u64::from(r.vlq().map_err(|e| rebase(e, base))?);
        let event_pos = r.pos;
        let first = r.u8().map_err(|e| rebase(e, base))?;
        match first {
            0xff => {
                let kind = r.u8().map_err(|e| rebase(e, base))?;
                let len = r.vlq().map_err(|e| rebase(e, base))? as usize;
                let data = r.take(len, "meta event").map_err(|e| rebase(e, base))?;
                if kind == 0x51 && len == 3 {
                    let us = u32::from_be_bytes([0, data[0], data[1], data[2]]);
                    if us > 0 && tempo.is_none_or(|(t, _)| tick < t) {
                        *tempo = Some((tick, us));
                    }
                }
                if kind == 0x2f {
                    break;
                }
            }
            0xf0 | 0xf7 => {
                let len = r.vlq().map_err(|e| rebase(e, base))? as usize;
                r.take(len, "sysex").map_err(|e| rebase(e, base))?;
            }
            _ => {
                let (status, data1) = if first & 0x80 != 0 {
                    running = Some(first);
                    (first, r.u8().map_err(|e| rebase(e, base))?)
                } else {
                    let status = running.ok_or(Error::Parse {
                        offset: at(event_pos),
                        message: "data byte without running status".into(),
                    })?;
                    (status, first)
                };
                let kind = status & 0xf0;
                let channel = status & 0x0f;
                let data2 = match kind {
                    0xc0 | 0xd0 => 0,
                    0x80..=0xe0 => r.u8().map_err(|e| rebase(e, base))?,
                    _ => {
                        return Err(Error::Parse {
                            offset: at(event_pos),
                            message: format!("unexpected status byte {status:#04x}"),
                        })
                    }
                };
                if data1 > 127 || data2 > 127 {
                    return Err(Error::Parse {
                        offset: at(event_pos),
                        message: "data byte above 127".into(),
                    });
                }
                let note_on = kind == 0x90 && data2 > 0;
                let note_off = kind == 0x80 || (kind == 0x90 && data2 == 0);
                if note_on {
                    if open.contains_key(&(channel, data1)) {
                        return Err(Error::UnpairedNote {
                            pitch: data1,
                            offset: at(event_pos),
                        });
                    }
                    open.insert((channel, data1), (tick, data2, at(event_pos)));
                } else if note_off {
                    if let Some((on_tick, velocity, _)) = open.remove(&(channel, data1)) {
                        notes.push(Note {
                            on_tick,
                            off_tick: tick,
                            channel,
                            pitch: data1,
                            velocity,
                        });
                    }
                }
            }
        }
    }
    if let Some((&(_, pitch), &(_, _, offset))) = open.iter().min_by_key(|(_, v)| v.2) {
        return Err(Error::UnpairedNote { pitch, offset });
    }
    Ok(())
}

fn rebase(e: Error, base: usize) -> Error {
    match e {
        Error::Parse { offset, message } => Error::Parse {
            offset: offset + base,
            message,
        },
        other => other,
    }
}

fn hand_of(channel: u8) -> Option<Hand> {
    match channel {
        SOLO_CHANNEL => Some(Hand::Single),
        LEFT_CHANNEL => Some(Hand::Left),
        RIGHT_CHANNEL => Some(Hand::Right),
        _ => None,
    }
}

fn hand_rank(hand: Hand) -> u8 {
    match hand {
        Hand::Left => 0,
        Hand::Right => 1,
        Hand::Single => 2,
    }
}

/// Groups simultaneous solo notes into chord events. Each event lasts until
/// the next onset in the same hand; the last event of a hand keeps the
/// length of its longest note.
fn build_score(mut notes: Vec<Note>, ticks_per_beat: f64, bpm: f64) -> Result<Score> {
    notes.sort_by_key(|n| (n.on_tick, n.channel, n.pitch));

    // (onset, hand) -> (pitches, longest note, loudest velocity)
    let mut groups: Vec<(u64, Hand, PitchSet, u64, u8)> = Vec::new();
    for n in notes.iter() {
        let Some(hand) = hand_of(n.channel) else {
            continue;
        };
        let pc = pitch_class_of(i32::from(n.pitch))?;
        match groups.iter_mut().find(|g| g.0 == n.on_tick && g.1 == hand) {
            Some(g) => {
                g.2.insert(pc);
                g.3 = g.3.max(n.off_tick - n.on_tick);
                g.4 = g.4.max(n.velocity);
            }
            None => groups.push((
                n.on_tick,
                hand,
                PitchSet::single(pc),
                n.off_tick - n.on_tick,
                n.velocity,
            )),
        }
    }
    groups.sort_by_key(|g| (g.0, hand_rank(g.1)));
    if groups.is_empty() {
        return Err(Error::EmptyScore);
    }

    let mut events: Vec<ScoreEvent> = Vec::with_capacity(groups.len());
    let mut velocities = Vec::with_capacity(groups.len());
    for (i, g) in groups.iter().enumerate() {
        let next_onset = groups[i + 1..].iter().find(|h| h.1 == g.1).map(|h| h.0);
        let ticks = match next_onset {
            Some(next) if next > g.0 => next - g.0,
            _ => g.3.max(1),
        };
        events.push(ScoreEvent {
            pitches: g.2,
            onset: g.0 as f64 / ticks_per_beat,
            duration: ticks as f64 / ticks_per_beat,
            hand: g.1,
            accompaniment: Vec::new(),
        });
        velocities.push(g.4);
    }

    for n in notes.iter().filter(|n| n.channel == ACCOMPANIMENT_CHANNEL) {
        let idx = groups.iter().rposition(|g| g.0 <= n.on_tick).unwrap_or(0);
        let offset_ticks = n.on_tick.saturating_sub(groups[idx].0);
        events[idx].accompaniment.push(AccompanimentNote {
            pitch: n.pitch,
            velocity_ratio: f64::from(n.velocity) / f64::from(velocities[idx].max(1)),
            offset: offset_ticks as f64 / ticks_per_beat,
        });
    }
    Score::new(bpm, 1, events)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::score::PitchClass;

    fn vlq(mut v: u32) -> Vec<u8> {
        let mut out = vec![(v & 0x7f) as u8];
        v >>= 7;
        while v > 0 {
            out.push(((v & 0x7f) as u8) | 0x80);
            v >>= 7;
        }
        out.reverse();
        out
    }

    fn smf(format: u16, division: u16, tracks: &[Vec<u8>]) -> Vec<u8> {
        let mut out = b"MThd".to_vec();
        out.extend(6u32.to_be_bytes());
        out.extend(format.to_be_bytes());
        out.extend((tracks.len() as u16).to_be_bytes());
        out.extend(division.to_be_bytes());
        for t in tracks {
            out.extend(b"MTrk");
            out.extend((t.len() as u32).to_be_bytes());
            out.extend(t);
        }
        out
    }

    fn ev(delta: u32, bytes: &[u8]) -> Vec<u8> {
        let mut out = vlq(delta);
        out.extend(bytes);
        out
    }

    fn end() -> Vec<u8> {
        ev(0, &[0xff, 0x2f, 0x00])
    }

    #[test]
    fn vlq_encoding_matches_reference() {
        // Reference values from the SMF specification's VLQ table.
        assert_eq!(vlq(0), vec![0x00]);
        assert_eq!(vlq(0x7f), vec![0x7f]);
        assert_eq!(vlq(0x80), vec![0x81, 0x00]);
        assert_eq!(vlq(480), vec![0x83, 0x60]);
        assert_eq!(vlq(0x0fff_ffff), vec![0xff, 0xff, 0xff, 0x7f]);
    }

    #[test]
    fn single_quarter_note() {
        // note-on 60 at tick 0, note-off at tick 480, division 480:
        // onset 0/480 = 0 beats, duration 480/480 = 1 beat.
        let track = [ev(0, &[0x90, 60, 100]), ev(480, &[0x80, 60, 0]), end()].concat();
        let bytes = smf(0, 480, &[track]);
        let score = parse_midi(&bytes).unwrap();
        assert_eq!(score.events.len(), 1);
        let e = &score.events[0];
        assert_eq!(e.onset, 0.0);
        assert_eq!(e.duration, 1.0);
        assert_eq!(e.pitches, PitchSet::single(PitchClass::new(0).unwrap()));
        assert_eq!(score.bpm, 120.0);
    }

    #[test]
    fn tempo_running_status_and_accompaniment() {
        // 600000 us per quarter = 100 bpm
        let conductor = [ev(0, &[0xff, 0x51, 0x03, 0x09, 0x27, 0xc0]), end()].concat();
        let solo = [
            ev(0, &[0x90, 64, 80]),
            ev(240, &[64, 0]), // running status note-off via velocity 0
            ev(0, &[67, 80]),
            ev(240, &[0x80, 67, 0]),
            ev(0, &[0xc0, 5]), // program change, skipped
            end(),
        ]
        .concat();
        let acc = [ev(0, &[0x91, 48, 40]), ev(480, &[0x81, 48, 0]), end()].concat();
        let bytes = smf(1, 240, &[conductor, solo, acc]);
        let score = parse_midi(&bytes).unwrap();
        assert!((score.bpm - 100.0).abs() < 1e-12);
        assert_eq!(score.events.len(), 2);
        assert_eq!(score.events[1].onset, 1.0);
        assert_eq!(score.events[0].accompaniment.len(), 1);
        let note = &score.events[0].accompaniment[0];
        assert_eq!(note.pitch, 48);
        assert_eq!(note.velocity_ratio, 0.5);
        assert_eq!(note.offset, 0.0);
    }

    #[test]
    fn overlapping_note_on_names_pitch() {
        let track = [
            ev(0, &[0x90, 62, 100]),
            ev(10, &[0x90, 62, 100]),
            ev(10, &[0x80, 62, 0]),
            end(),
        ]
        .concat();
        let bytes = smf(0, 96, &[track]);
        match parse_midi(&bytes) {
            Err(Error::UnpairedNote { pitch, offset }) => {
                assert_eq!(pitch, 62);
                assert_eq!(bytes[offset], 0x90);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(Error::UnpairedNote {
            pitch: 62,
            offset: 0
        }
        .to_string()
        .contains("62"));
    }

    #[test]
    fn smpte_division_unsupported() {
        let bytes = smf(0, 0xe728, &[end()]);
        assert!(matches!(
            parse_midi(&bytes),
            Err(Error::UnsupportedFormat(_))
        ));
        let bytes = smf(2, 96, &[end()]);
        assert!(matches!(
            parse_midi(&bytes),
            Err(Error::UnsupportedFormat(_))
        ));
    }

    #[test]
    fn truncated_file_reports_offset() {
        let track = [ev(0, &[0x90, 60, 100]), ev(96, &[0x80, 60, 0]), end()].concat();
        let mut bytes = smf(0, 96, &[track]);
        bytes.truncate(bytes.len() - 5);
        match parse_midi(&bytes) {
            Err(Error::Parse { offset, .. }) => assert!(offset <= bytes.len()),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn chords_and_hands() {
        let track = [
            ev(0, &[0x92, 48, 70]),
            ev(0, &[0x93, 64, 90]),
            ev(0, &[0x93, 67, 90]),
            ev(96, &[0x82, 48, 0]),
            ev(0, &[0x83, 64, 0]),
            ev(0, &[0x83, 67, 0]),
            end(),
        ]
        .concat();
        let score = parse_midi(&smf(0, 96, &[track])).unwrap();
        assert_eq!(score.events.len(), 2);
        assert_eq!(score.events[0].hand, Hand::Left);
        assert_eq!(score.events[1].hand, Hand::Right);
        assert_eq!(score.events[1].pitches.len(), 2);
    }
}
