//! Per-step timing of the banded and dense decoder recursions.

use std::time::Instant;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::decoder::{BandedTransition, DecoderState, DenseLogTransition, LogModel};
use crate::hmm::N_SYMBOLS;
use crate::score::PitchSet;

pub const DEFAULT_SIZES: [usize; 4] = [1000, 2000, 4000, 5000];
pub const DEFAULT_WINDOWS: [usize; 1] = [7];
pub const CSV_HEADER: &str = "n_states,window,per_step_ns_fast,per_step_ns_full";

/// A random band-plus-floor model with `n` states and band width `window`.
#[derive(Debug, Clone)]
pub struct SyntheticModel {
    pub model: LogModel,
    pub banded: BandedTransition,
}

/// Splits a band width into (ahead, behind) offsets, leaning forward like
/// a compiled score.
pub fn split_window(window: usize) -> (usize, usize) {
    let w1 = (window - 1) / 3;
    (w1, window - 1 - w1)
}

pub fn synthetic_model(n: usize, window: usize, seed: u64) -> SyntheticModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w1, w2) = split_window(window.clamp(1, n));
    let width = w1 + w2 + 1;
    let mu = BandedTransition::default_floor(n, width);
    let mut band = vec![0.0; n * width];
    for j in 0..n {
        // slot k of row j is the edge j -> j + k - w1
        let slots: Vec<usize> = (0..width)
            .filter(|&k| (j + k).checked_sub(w1).is_some_and(|i| i < n))
            .collect();
        let raw: Vec<f64> = slots.iter().map(|_| rng.random::<f64>() + 0.05).collect();
        let budget = (1.0 - n as f64 * mu).max(0.0);
        let total: f64 = raw.iter().sum();
        for (&k, r) in slots.iter().zip(&raw) {
            band[j * width + k] = budget * r / total;
        }
    }
    let banded = BandedTransition::new(n, w1, w2, band, mu).expect("valid synthetic band");
    let mut emission = Array2::zeros((n, N_SYMBOLS));
    for mut row in emission.rows_mut() {
        row.mapv_inplace(|_: f64| rng.random::<f64>() + 0.01);
        let s = row.sum();
        row /= s;
    }
    let prior = vec![1.0 / n as f64; n];
    SyntheticModel {
        model: LogModel::from_tables(&prior, &emission),
        banded,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BenchRow {
    pub n_states: usize,
    pub window: usize,
    pub per_step_ns_fast: f64,
    pub per_step_ns_full: f64,
}

impl BenchRow {
    pub fn csv(&self) -> String {
        format!(
            "{},{},{:.1},{:.1}",
            self.n_states, self.window, self.per_step_ns_fast, self.per_step_ns_full
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchConfig {
    pub fast_steps: usize,
    pub full_steps: usize,
    /// Timing is the minimum per-step time over this many batches.
    pub batches: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            fast_steps: 400,
            full_steps: 8,
            batches: 7,
            seed: 1,
        }
    }
}

fn observations(rng: &mut ChaCha8Rng, count: usize) -> Vec<PitchSet> {
    (0..count)
        .map(|_| PitchSet::from_mask(1 << rng.random_range(0..N_SYMBOLS)))
        .collect()
}

fn min_per_step(batches: usize, obs: &[PitchSet], mut step: impl FnMut(PitchSet)) -> f64 {
    let mut best = f64::INFINITY;
    for _ in 0..batches.max(1) {
        let start = Instant::now();
        for &o in obs {
            step(o);
        }
        best = best.min(start.elapsed().as_nanos() as f64 / obs.len() as f64);
    }
    best
}

/// Times both recursions on one synthetic model.
pub fn bench_cell(n: usize, window: usize, cfg: &BenchConfig) -> BenchRow {
    let m = synthetic_model(n, window, cfg.seed);
    let dense = DenseLogTransition::from_banded(&m.banded);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed);
    let first = observations(&mut rng, 1)[0];
    let fast_obs = observations(&mut rng, cfg.fast_steps.max(1));
    let full_obs = observations(&mut rng, cfg.full_steps.max(1));
    // the horizon covers every step so no column is recycled mid-batch
    let horizon = cfg.batches.max(1) * (fast_obs.len() + full_obs.len()) + 2;

    let mut state = DecoderState::with_horizon(&m.model, first, horizon);
    state.step_fast(&m.banded, &m.model, first);
    let fast = min_per_step(cfg.batches, &fast_obs, |o| {
        state.step_fast(&m.banded, &m.model, o)
    });

    let mut state = DecoderState::with_horizon(&m.model, first, horizon);
    state.step_full(&dense, &m.model, first);
    let full = min_per_step(cfg.batches, &full_obs, |o| {
        state.step_full(&dense, &m.model, o)
    });

    BenchRow {
        n_states: n,
        window: m.banded.width(),
        per_step_ns_fast: fast,
        per_step_ns_full: full,
    }
}

pub fn bench_decode(sizes: &[usize], windows: &[usize], cfg: &BenchConfig) -> Vec<BenchRow> {
    let mut rows = Vec::with_capacity(sizes.len() * windows.len());
    for &w in windows {
        for &n in sizes {
            rows.push(bench_cell(n, w, cfg));
        }
    }
    rows
}

pub fn to_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv());
        out.push('\n');
    }
    out
}
