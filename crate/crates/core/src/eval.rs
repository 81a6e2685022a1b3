//! Alignment scoring of simulated performances against their ground truth.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::accompany::Accompanist;
use crate::error::{contract, Error, Result};
use crate::hmm::compile;
use crate::pipeline::{onsets, FollowMode, Model, OnlineFollower, PipelineOptions};
use crate::score::QuantizedScore;
use crate::sim::SimulatedPerformance;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentReport {
    pub note_ons: usize,
    /// Fraction of note-ons aligned to their true unit; extra notes count
    /// when decoded in a ghost state.
    pub accuracy: f64,
    /// Fraction of note-ons decoded in a ghost state.
    pub ghost_rate: f64,
    pub errors: usize,
    /// Note-ons from an injected error to the next correctly aligned clean
    /// note, averaged over errors; 0 when none were injected.
    pub mean_recovery_events: f64,
    pub p95_step_latency: f64,
}

/// Per-note-on alignment flags. Wrong notes carry their unit, so either
/// state of that unit counts.
pub fn alignment_flags(
    perf: &SimulatedPerformance,
    decoded: &[crate::decoder::Decoded],
) -> Vec<bool> {
    perf.truth
        .iter()
        .zip(decoded)
        .map(|(t, d)| match t.unit {
            Some(u) => d.unit == u,
            None => d.ghost,
        })
        .collect()
}

/// Events from each error to the next correctly aligned clean note-on.
/// An error never recovered from counts to the end of the stream.
pub fn recovery_lengths(perf: &SimulatedPerformance, correct: &[bool]) -> Vec<usize> {
    let n = correct.len();
    (0..n)
        .filter(|&k| perf.truth[k].error.is_some())
        .map(|k| {
            (k + 1..n)
                .find(|&j| perf.truth[j].error.is_none() && correct[j])
                .map_or(n - k, |j| j - k)
        })
        .collect()
}

/// Compiles `score`, replays `perf` through follower and accompanist, and
/// scores the decoded units against the truth.
pub fn evaluate(
    score: &QuantizedScore,
    perf: &SimulatedPerformance,
    opts: &PipelineOptions,
) -> Result<AlignmentReport> {
    if perf.truth.is_empty() {
        return Err(Error::EmptyPerformance);
    }
    if perf
        .truth
        .iter()
        .any(|t| t.unit.is_some_and(|u| u >= score.len()))
    {
        return Err(contract("truth refers to units beyond the score"));
    }
    let (params, layout) = compile(score, &opts.compile)?;
    let model = Model {
        params,
        layout,
        score: score.clone(),
    };
    let opts = PipelineOptions {
        mode: FollowMode::Single,
        ..opts.clone()
    };
    let groups = onsets(&perf.events, &opts);
    let n_on: usize = groups.iter().map(|g| g.note_ons.len()).sum();
    if n_on != perf.truth.len() {
        return Err(contract(format!(
            "performance has {n_on} note-ons but {} truth entries",
            perf.truth.len()
        )));
    }
    let mut follower = OnlineFollower::new(&model, &opts)?;
    let mut engine = Accompanist::new(score.clone(), opts.engine.clone());
    let mut decoded = vec![None; n_on];
    let mut latencies = Vec::with_capacity(groups.len());
    for g in &groups {
        let start = Instant::now();
        let d = follower.observe(g);
        latencies.push(start.elapsed().as_secs_f64());
        engine.on_onset(g.time, g.velocity, d);
        for &k in &g.note_ons {
            decoded[k] = Some(d);
        }
    }
    engine.finish();
    let decoded: Vec<_> = decoded
        .into_iter()
        .map(|d| d.expect("every note-on grouped"))
        .collect();
    let correct = alignment_flags(perf, &decoded);
    let recoveries = recovery_lengths(perf, &correct);
    latencies.sort_by(f64::total_cmp);
    let p95 =
        latencies[((latencies.len() as f64 * 0.95).ceil() as usize).clamp(1, latencies.len()) - 1];
    let n = n_on as f64;
    Ok(AlignmentReport {
        note_ons: n_on,
        accuracy: correct.iter().filter(|c| **c).count() as f64 / n,
        ghost_rate: decoded.iter().filter(|d| d.ghost).count() as f64 / n,
        errors: recoveries.len(),
        mean_recovery_events: if recoveries.is_empty() {
            0.0
        } else {
            recoveries.iter().sum::<usize>() as f64 / recoveries.len() as f64
        },
        p95_step_latency: p95,
    })
}
