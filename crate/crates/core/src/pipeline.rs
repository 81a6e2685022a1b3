//! Offline drivers tying the modules together: a recorded performance is
//! replayed with its own timestamps, so runs are reproducible.

use serde::{Deserialize, Serialize};

use crate::accompany::{AccompanimentEvent, Accompanist, EngineConfig};
use crate::decoder::{DecodeOptions, Decoded, Follower};
use crate::error::{Error, Result};
use crate::hands::{attribute_hand, split_compile, ParallelFollower};
use crate::hmm::{CompileOptions, HmmParams, ModelFile, StateLayout};
use crate::perf::{group_onsets, Onset, PerformanceEvent, DEFAULT_CHORD_WINDOW};
use crate::score::{Hand, QuantizedScore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FollowMode {
    #[default]
    Single,
    /// Per-hand models; untagged notes are split by register when
    /// `register_split` is set and otherwise assigned by likelihood.
    Parallel { register_split: bool },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOptions {
    pub mode: FollowMode,
    pub decode: DecodeOptions,
    /// Used for the per-hand models, which are compiled from the score
    /// embedded in the model file.
    pub compile: CompileOptions,
    pub chord_window: f64,
    pub engine: EngineConfig,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            mode: FollowMode::Single,
            decode: DecodeOptions::default(),
            compile: CompileOptions::default(),
            chord_window: DEFAULT_CHORD_WINDOW,
            engine: EngineConfig::default(),
        }
    }
}

impl PipelineOptions {
    pub fn new(mode: FollowMode) -> Self {
        Self {
            mode,
            ..Default::default()
        }
    }
}

/// A loaded model: parameters, state layout and the score behind them.
#[derive(Debug, Clone)]
pub struct Model {
    pub params: HmmParams,
    pub layout: StateLayout,
    pub score: QuantizedScore,
}

impl Model {
    pub fn from_file(file: &ModelFile) -> Result<Self> {
        Ok(Self {
            params: file.params()?,
            layout: file.layout.clone(),
            score: file.score.clone(),
        })
    }
}

/// Either follower behind one interface.
#[derive(Debug, Clone)]
pub enum OnlineFollower {
    Single(Box<Follower>),
    Parallel(Box<ParallelFollower>),
}

impl OnlineFollower {
    pub fn new(model: &Model, opts: &PipelineOptions) -> Result<Self> {
        Ok(match opts.mode {
            FollowMode::Single => OnlineFollower::Single(Box::new(Follower::new(
                &model.params,
                model.layout.clone(),
                &opts.decode,
            )?)),
            FollowMode::Parallel { .. } => {
                let handed = split_compile(&model.score, &opts.compile, &opts.decode)?;
                OnlineFollower::Parallel(Box::new(ParallelFollower::new(handed)?))
            }
        })
    }

    pub fn observe(&mut self, onset: &Onset) -> Decoded {
        match self {
            OnlineFollower::Single(f) => f.observe(onset.pitches),
            OnlineFollower::Parallel(f) => {
                f.step(onset.pitches, onset.hand);
                f.merged_decoded().expect("stepped at least once")
            }
        }
    }
}

/// Chord observations of a performance, with hands attributed first in
/// parallel mode so chords never mix hands.
pub fn onsets(events: &[PerformanceEvent], opts: &PipelineOptions) -> Vec<Onset> {
    match opts.mode {
        FollowMode::Single => group_onsets(events, opts.chord_window),
        FollowMode::Parallel { register_split } => {
            let tagged: Vec<PerformanceEvent> = events
                .iter()
                .map(|e| PerformanceEvent {
                    hand: attribute_hand(e, register_split).or(Some(Hand::Single)),
                    ..*e
                })
                .collect();
            let mut groups = group_onsets(&tagged, opts.chord_window);
            for g in &mut groups {
                g.hand = g.hand.filter(|h| *h != Hand::Single);
            }
            groups
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FollowRecord {
    /// Index of the chord observation.
    pub event: usize,
    #[serde(rename = "t")]
    pub time: f64,
    pub unit: usize,
    pub ghost: bool,
}

pub fn follow(
    model: &Model,
    events: &[PerformanceEvent],
    opts: &PipelineOptions,
) -> Result<Vec<FollowRecord>> {
    let onsets = onsets(events, opts);
    if onsets.is_empty() {
        return Err(Error::EmptyPerformance);
    }
    let mut follower = OnlineFollower::new(model, opts)?;
    Ok(onsets
        .iter()
        .enumerate()
        .map(|(event, onset)| {
            let d = follower.observe(onset);
            FollowRecord {
                event,
                time: onset.time,
                unit: d.unit,
                ghost: d.ghost,
            }
        })
        .collect())
}

/// Replays a performance through follower and accompanist and returns
/// everything the accompanist played.
pub fn accompany(
    model: &Model,
    events: &[PerformanceEvent],
    opts: &PipelineOptions,
) -> Result<Vec<AccompanimentEvent>> {
    let onsets = onsets(events, opts);
    if onsets.is_empty() {
        return Err(Error::EmptyPerformance);
    }
    let mut follower = OnlineFollower::new(model, opts)?;
    let mut engine = Accompanist::new(model.score.clone(), opts.engine.clone());
    for onset in &onsets {
        let d = follower.observe(onset);
        engine.on_onset(onset.time, onset.velocity, d);
    }
    engine.finish();
    Ok(engine.into_emitted())
}

pub fn to_ndjson<T: Serialize>(items: &[T]) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("record serializes"));
        out.push('\n');
    }
    out
}
