use serde::{Deserialize, Serialize};

use super::{BandedTransition, DecoderState, LogModel, DEFAULT_HORIZON, DEFAULT_W1, DEFAULT_W2};
use crate::error::Result;
use crate::hmm::{HmmParams, StateKind, StateLayout};
use crate::score::PitchSet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodeOptions {
    pub w1: usize,
    pub w2: usize,
    /// Floor probability for out-of-band jumps; `None` picks
    /// `1 / (10 N W)`.
    pub mu: Option<f64>,
    pub horizon: usize,
}

impl Default for DecodeOptions {
    fn default() -> Self {
        Self {
            w1: DEFAULT_W1,
            w2: DEFAULT_W2,
            mu: None,
            horizon: DEFAULT_HORIZON,
        }
    }
}

impl DecodeOptions {
    pub fn banded(&self, params: &HmmParams) -> Result<BandedTransition> {
        let n = params.n_states();
        let mu = self
            .mu
            .unwrap_or_else(|| BandedTransition::default_floor(n, self.w1 + self.w2 + 1));
        BandedTransition::with_floor(&params.transition, self.w1, self.w2, mu)
    }
}

/// Decoded position after one observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decoded {
    pub state: usize,
    pub unit: usize,
    pub ghost: bool,
}

impl Decoded {
    pub fn from_kind(state: usize, kind: StateKind) -> Self {
        Self {
            state,
            unit: kind.unit(),
            ghost: kind.is_ghost(),
        }
    }
}

/// Score follower over one HMM: the banded decoder plus the state layout
/// needed to report score positions.
#[derive(Debug, Clone)]
pub struct Follower {
    model: LogModel,
    banded: BandedTransition,
    layout: StateLayout,
    horizon: usize,
    state: Option<DecoderState>,
}

impl Follower {
    pub fn new(params: &HmmParams, layout: StateLayout, opts: &DecodeOptions) -> Result<Self> {
        Ok(Self {
            model: LogModel::from_params(params),
            banded: opts.banded(params)?,
            layout,
            horizon: opts.horizon,
            state: None,
        })
    }

    pub fn observe(&mut self, obs: PitchSet) -> Decoded {
        match &mut self.state {
            Some(state) => state.step_fast(&self.banded, &self.model, obs),
            None => {
                self.state = Some(DecoderState::with_horizon(&self.model, obs, self.horizon));
            }
        }
        self.current().expect("state initialized")
    }

    /// Best-scoring increment the next observation would add, without
    /// consuming it.
    pub fn peek_gain(&self, obs: PitchSet) -> f64 {
        match &self.state {
            Some(state) => state.peek_fast(&self.banded, &self.model, obs) - state.best_score(),
            None => DecoderState::with_horizon(&self.model, obs, 1).best_score(),
        }
    }

    pub fn current(&self) -> Option<Decoded> {
        self.state.as_ref().map(|s| {
            let q = s.current_best();
            Decoded::from_kind(q, self.layout.kind(q))
        })
    }

    pub fn decoder(&self) -> Option<&DecoderState> {
        self.state.as_ref()
    }

    pub fn layout(&self) -> &StateLayout {
        &self.layout
    }

    pub fn banded(&self) -> &BandedTransition {
        &self.banded
    }
}
