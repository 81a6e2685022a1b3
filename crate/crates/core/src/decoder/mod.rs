//! Online Viterbi decoding.
//!
//! [`DecoderState`] holds one trellis column of log scores plus a bounded
//! history of backpointers. [`DecoderState::step_full`] is the dense
//! `O(N^2)` recursion; [`DecoderState::step_fast`] exploits a band + floor
//! transition ([`BandedTransition`]) to do the same work in `O(WN)`:
//! the floor term `max_j delta(j) + ln mu` does not depend on the
//! destination state, so it is computed once per step and compared against
//! the `W` in-band candidates of each state.
//!
//! Ties resolve to the lowest source index on both paths, so the two
//! recursions produce identical backpointers on the same reconstructed
//! matrix.

mod banded;
mod follower;

use std::collections::VecDeque;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::hmm::{HmmParams, N_SYMBOLS};
use crate::score::PitchSet;

pub(crate) use banded::ln;
pub use banded::BandedTransition;
pub use follower::{DecodeOptions, Decoded, Follower};

pub const DEFAULT_HORIZON: usize = 4096;
pub const DEFAULT_W1: usize = 2;
pub const DEFAULT_W2: usize = 4;

/// Log-domain prior and emission tables.
#[derive(Debug, Clone, PartialEq)]
pub struct LogModel {
    n: usize,
    log_prior: Vec<f64>,
    /// Symbol-major: entry `k * n + i` is `ln b_i(k)`.
    log_emission: Vec<f64>,
}

impl LogModel {
    pub fn from_params(params: &HmmParams) -> Self {
        let n = params.n_states();
        let mut log_emission = vec![0.0; n * N_SYMBOLS];
        for i in 0..n {
            for k in 0..N_SYMBOLS {
                log_emission[k * n + i] = ln(params.emission[[i, k]]);
            }
        }
        Self {
            n,
            log_prior: params.prior.iter().map(|&p| ln(p)).collect(),
            log_emission,
        }
    }

    /// Builds directly from probability tables without validation; used by
    /// synthetic benchmarks. `emission` is `n x 12`.
    pub fn from_tables(prior: &[f64], emission: &Array2<f64>) -> Self {
        let n = prior.len();
        assert_eq!(emission.dim(), (n, N_SYMBOLS), "emission shape");
        let mut log_emission = vec![0.0; n * N_SYMBOLS];
        for ((i, k), &b) in emission.indexed_iter() {
            log_emission[k * n + i] = ln(b);
        }
        Self {
            n,
            log_prior: prior.iter().map(|&p| ln(p)).collect(),
            log_emission,
        }
    }

    pub fn n_states(&self) -> usize {
        self.n
    }

    /// `ln b_i(obs)` for every state: the mean log emission over the set.
    pub fn observation_logs(&self, obs: PitchSet, out: &mut Vec<f64>) {
        out.clear();
        let n = self.n;
        let mut classes = obs.iter();
        let Some(first) = classes.next() else {
            out.resize(n, f64::NEG_INFINITY);
            return;
        };
        let k0 = first.index();
        out.extend_from_slice(&self.log_emission[k0 * n..(k0 + 1) * n]);
        let count = obs.len();
        if count > 1 {
            for pc in classes {
                let col = &self.log_emission[pc.index() * n..(pc.index() + 1) * n];
                for (o, &v) in out.iter_mut().zip(col) {
                    *o += v;
                }
            }
            let inv = 1.0 / count as f64;
            for o in out.iter_mut() {
                *o *= inv;
            }
        }
    }
}

/// Dense log transition, stored destination-major (`ln a_ji` at `i * n + j`)
/// so the inner max over sources reads contiguous memory.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLogTransition {
    n: usize,
    to_from: Vec<f64>,
}

impl DenseLogTransition {
    pub fn from_params(params: &HmmParams) -> Self {
        let a = &params.transition;
        let n = a.nrows();
        let mut to_from = vec![0.0; n * n];
        for ((j, i), &v) in a.indexed_iter() {
            to_from[i * n + j] = ln(v);
        }
        Self { n, to_from }
    }

    /// Dense form of `Ã + mu` with the same log values the banded decoder
    /// uses.
    pub fn from_banded(bt: &BandedTransition) -> Self {
        let n = bt.n();
        let mut to_from = vec![0.0; n * n];
        for j in 0..n {
            for i in 0..n {
                to_from[i * n + j] = bt.log_get(j, i);
            }
        }
        Self { n, to_from }
    }

    pub fn n(&self) -> usize {
        self.n
    }
}

/// Best path recovered from the stored backpointers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodePath {
    /// Time index (0-based) of `states[0]`. Non-zero only once the
    /// backpointer horizon has truncated older history.
    pub start: usize,
    pub states: Vec<usize>,
    /// Log probability of the path.
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderState {
    delta: Vec<f64>,
    psi: VecDeque<Vec<u32>>,
    t: usize,
    q_current: usize,
    horizon: usize,
    obs_buf: Vec<f64>,
}

impl DecoderState {
    pub fn init(model: &LogModel, obs: PitchSet) -> Self {
        Self::with_horizon(model, obs, DEFAULT_HORIZON)
    }

    /// `horizon` bounds how many backpointer columns are kept.
    pub fn with_horizon(model: &LogModel, obs: PitchSet, horizon: usize) -> Self {
        let mut obs_buf = Vec::with_capacity(model.n);
        model.observation_logs(obs, &mut obs_buf);
        let delta: Vec<f64> = model
            .log_prior
            .iter()
            .zip(&obs_buf)
            .map(|(p, b)| p + b)
            .collect();
        let q_current = argmax(&delta).0;
        Self {
            delta,
            psi: VecDeque::new(),
            t: 1,
            q_current,
            horizon: horizon.max(1),
            obs_buf,
        }
    }

    /// Number of observations consumed.
    pub fn t(&self) -> usize {
        self.t
    }

    pub fn delta(&self) -> &[f64] {
        &self.delta
    }

    pub fn psi(&self) -> &VecDeque<Vec<u32>> {
        &self.psi
    }

    /// Most likely current state; lowest index on ties.
    pub fn current_best(&self) -> usize {
        self.q_current
    }

    pub fn best_score(&self) -> f64 {
        self.delta[self.q_current]
    }

    fn next_psi_column(&mut self) -> Vec<u32> {
        let n = self.delta.len();
        if self.psi.len() >= self.horizon {
            let mut col = self.psi.pop_front().expect("non-empty history");
            col.clear();
            col.resize(n, 0);
            col
        } else {
            vec![0; n]
        }
    }

    fn finish_step(&mut self, next: Vec<f64>, col: Vec<u32>) {
        self.delta = next;
        self.psi.push_back(col);
        self.t += 1;
        self.q_current = argmax(&self.delta).0;
    }

    /// Dense recursion `delta'(i) = max_j (delta(j) + ln a_ji) + ln b_i(o)`.
    pub fn step_full(&mut self, trans: &DenseLogTransition, model: &LogModel, obs: PitchSet) {
        let n = self.delta.len();
        assert_eq!(trans.n, n, "transition size does not match decoder");
        let mut obs_buf = std::mem::take(&mut self.obs_buf);
        model.observation_logs(obs, &mut obs_buf);
        let mut col = self.next_psi_column();
        let mut next = vec![f64::NEG_INFINITY; n];
        for i in 0..n {
            let row = &trans.to_from[i * n..(i + 1) * n];
            let mut best = f64::NEG_INFINITY;
            let mut arg = 0usize;
            for (j, (&d, &a)) in self.delta.iter().zip(row).enumerate() {
                let v = d + a;
                if v > best {
                    best = v;
                    arg = j;
                }
            }
            next[i] = best + obs_buf[i];
            col[i] = arg as u32;
        }
        self.obs_buf = obs_buf;
        self.finish_step(next, col);
    }

    /// Banded recursion: each state compares its in-band sources against a
    /// single floor candidate shared by all states.
    pub fn step_fast(&mut self, bt: &BandedTransition, model: &LogModel, obs: PitchSet) {
        let n = self.delta.len();
        assert_eq!(bt.n(), n, "transition size does not match decoder");
        let mut obs_buf = std::mem::take(&mut self.obs_buf);
        model.observation_logs(obs, &mut obs_buf);
        let mut col = self.next_psi_column();
        let mut next = vec![f64::NEG_INFINITY; n];
        self.fast_column(bt, &obs_buf, &mut next, &mut col);
        self.obs_buf = obs_buf;
        self.finish_step(next, col);
    }

    /// Best score `step_fast` would reach on `obs`, leaving the state as is.
    pub fn peek_fast(&self, bt: &BandedTransition, model: &LogModel, obs: PitchSet) -> f64 {
        let n = self.delta.len();
        let mut obs_buf = Vec::with_capacity(n);
        model.observation_logs(obs, &mut obs_buf);
        let mut next = vec![f64::NEG_INFINITY; n];
        let mut col = vec![0; n];
        self.fast_column(bt, &obs_buf, &mut next, &mut col);
        argmax(&next).1
    }

    fn fast_column(
        &self,
        bt: &BandedTransition,
        obs_logs: &[f64],
        next: &mut [f64],
        col: &mut [u32],
    ) {
        let n = self.delta.len();
        let (global_arg, global_max) = argmax(&self.delta);
        let floor = global_max + bt.log_mu();
        let (w1, w2, width) = (bt.w1(), bt.w2(), bt.width());
        let log_band = bt.log_band();

        for i in 0..n {
            // sources j with i - w2 <= j <= i + w1; slot of (j -> i) is i + w1 - j
            let lo = i.saturating_sub(w2);
            let hi = (i + w1).min(n - 1);
            let mut best = f64::NEG_INFINITY;
            let mut arg = usize::MAX;
            for j in lo..=hi {
                let v = self.delta[j] + log_band[j * width + (i + w1 - j)];
                if v > best {
                    best = v;
                    arg = j;
                }
            }
            let (value, src) = if floor > best {
                (floor, global_arg)
            } else if best > floor {
                (best, arg)
            } else if best == f64::NEG_INFINITY {
                (best, 0)
            } else {
                (best, arg.min(global_arg))
            };
            next[i] = value + obs_logs[i];
            col[i] = src as u32;
        }
    }

    pub fn backtrace(&self) -> DecodePath {
        let mut states = Vec::with_capacity(self.psi.len() + 1);
        let mut s = self.q_current;
        states.push(s);
        for col in self.psi.iter().rev() {
            s = col[s] as usize;
            states.push(s);
        }
        states.reverse();
        DecodePath {
            start: self.t - states.len(),
            states,
            score: self.best_score(),
        }
    }
}

/// Lowest index of the maximum, and the maximum.
fn argmax(values: &[f64]) -> (usize, f64) {
    let mut best = f64::NEG_INFINITY;
    let mut arg = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > best {
            best = v;
            arg = i;
        }
    }
    (arg, best)
}

/// Decodes a whole sequence with the banded recursion.
pub fn decode_fast(
    model: &LogModel,
    bt: &BandedTransition,
    obs: &[PitchSet],
) -> Option<DecodePath> {
    let (first, rest) = obs.split_first()?;
    let mut state = DecoderState::init(model, *first);
    for &o in rest {
        state.step_fast(bt, model, o);
    }
    Some(state.backtrace())
}

/// Decodes a whole sequence with the dense recursion.
pub fn decode_full(
    model: &LogModel,
    trans: &DenseLogTransition,
    obs: &[PitchSet],
) -> Option<DecodePath> {
    let (first, rest) = obs.split_first()?;
    let mut state = DecoderState::init(model, *first);
    for &o in rest {
        state.step_full(trans, model, o);
    }
    Some(state.backtrace())
}
