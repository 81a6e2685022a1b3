//! Two-handed following: one HMM per hand, decoded side by side.
//!
//! Only the current decoder state of each hand is kept. The product space
//! of (emitting hand, left state, right state) is never built, so one step
//! costs a single banded step in one part.

use serde::{Deserialize, Serialize};

use crate::decoder::{BandedTransition, DecodeOptions, Decoded, Follower};
use crate::error::{contract, Error, Result};
use crate::hmm::{compile, CompileOptions, HmmParams, StateLayout};
use crate::perf::PerformanceEvent;
use crate::score::{Hand, PitchSet, QuantizedScore};

/// Lowest MIDI note attributed to the right hand by register.
pub const MIDDLE_C: u8 = 60;

#[derive(Debug, Clone)]
pub struct HandPart {
    pub params: HmmParams,
    pub layout: StateLayout,
    pub banded: BandedTransition,
    /// Index into the full score of each part unit.
    pub units: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct HandedModel {
    pub left: HandPart,
    pub right: HandPart,
    /// Probability that consecutive events come from different hands.
    pub switch_prob: f64,
    pub decode: DecodeOptions,
}

impl HandedModel {
    pub const DEFAULT_SWITCH_PROB: f64 = 0.5;

    pub fn part(&self, hand: Eta) -> &HandPart {
        match hand {
            Eta::LeftEmits => &self.left,
            Eta::RightEmits => &self.right,
        }
    }
}

/// Compiles the left- and right-hand units of `q` into separate HMMs.
pub fn split_compile(
    q: &QuantizedScore,
    opts: &CompileOptions,
    decode: &DecodeOptions,
) -> Result<HandedModel> {
    if let Some(u) = q.units.iter().position(|u| u.hand == Hand::Single) {
        return Err(contract(format!(
            "unit {u} has no hand; use the single-model path"
        )));
    }
    let part = |hand: Hand| -> Result<HandPart> {
        let units = q.hand_units(hand);
        if units.is_empty() {
            return Err(Error::OneHandEmpty(hand));
        }
        let (params, layout) = compile(&q.subset(&units), opts)?;
        let banded = decode.banded(&params)?;
        Ok(HandPart {
            params,
            layout,
            banded,
            units,
        })
    };
    Ok(HandedModel {
        left: part(Hand::Left)?,
        right: part(Hand::Right)?,
        switch_prob: HandedModel::DEFAULT_SWITCH_PROB,
        decode: *decode,
    })
}

/// Hand that produced the latest event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Eta {
    LeftEmits,
    RightEmits,
}

impl Eta {
    pub fn hand(self) -> Hand {
        match self {
            Eta::LeftEmits => Hand::Left,
            Eta::RightEmits => Hand::Right,
        }
    }

    pub fn from_hand(hand: Hand) -> Option<Self> {
        match hand {
            Hand::Left => Some(Eta::LeftEmits),
            Hand::Right => Some(Eta::RightEmits),
            Hand::Single => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParallelState {
    pub eta: Eta,
    /// State index in the left part; 0 until the left hand has played.
    pub f_left: usize,
    pub f_right: usize,
}

/// Explicit hand tag first, then the register split at middle C when
/// enabled. Untagged events stay unattributed when the split is off.
pub fn attribute_hand(event: &PerformanceEvent, register_split: bool) -> Option<Hand> {
    match event.hand {
        Some(h @ (Hand::Left | Hand::Right)) => Some(h),
        _ if register_split => Some(if event.pitch < MIDDLE_C {
            Hand::Left
        } else {
            Hand::Right
        }),
        _ => None,
    }
}

#[derive(Debug, Clone)]
pub struct ParallelFollower {
    model: HandedModel,
    left: Follower,
    right: Follower,
    state: Option<ParallelState>,
}

impl ParallelFollower {
    pub fn new(model: HandedModel) -> Result<Self> {
        let left = Follower::new(&model.left.params, model.left.layout.clone(), &model.decode)?;
        let right = Follower::new(
            &model.right.params,
            model.right.layout.clone(),
            &model.decode,
        )?;
        Ok(Self {
            model,
            left,
            right,
            state: None,
        })
    }

    pub fn model(&self) -> &HandedModel {
        &self.model
    }

    pub fn state(&self) -> Option<ParallelState> {
        self.state
    }

    fn follower(&self, eta: Eta) -> &Follower {
        match eta {
            Eta::LeftEmits => &self.left,
            Eta::RightEmits => &self.right,
        }
    }

    /// Chooses the emitting hand for an unattributed event by the gain each
    /// part would get from it, weighted by the hand-switch probability.
    /// Ties go to the right hand.
    pub fn choose_hand(&self, obs: PitchSet) -> Eta {
        let switch = |eta: Eta| match self.state {
            Some(s) if s.eta != eta => self.model.switch_prob,
            Some(_) => 1.0 - self.model.switch_prob,
            None => 0.5,
        };
        let score = |eta: Eta| self.follower(eta).peek_gain(obs) + crate::decoder::ln(switch(eta));
        if score(Eta::LeftEmits) > score(Eta::RightEmits) {
            Eta::LeftEmits
        } else {
            Eta::RightEmits
        }
    }

    /// Advances only the emitting hand's decoder.
    pub fn step(&mut self, obs: PitchSet, hand: Option<Hand>) -> ParallelState {
        let eta = hand
            .and_then(Eta::from_hand)
            .unwrap_or_else(|| self.choose_hand(obs));
        let d = match eta {
            Eta::LeftEmits => self.left.observe(obs),
            Eta::RightEmits => self.right.observe(obs),
        };
        let prev = self.state.unwrap_or(ParallelState {
            eta,
            f_left: 0,
            f_right: 0,
        });
        let next = match eta {
            Eta::LeftEmits => ParallelState {
                eta,
                f_left: d.state,
                ..prev
            },
            Eta::RightEmits => ParallelState {
                eta,
                f_right: d.state,
                ..prev
            },
        };
        self.state = Some(next);
        next
    }

    fn global_unit(&self, eta: Eta) -> Option<usize> {
        let d = self.follower(eta).current()?;
        Some(self.model.part(eta).units[d.unit])
    }

    /// Furthest score unit reached by either hand; 0 before any event.
    pub fn merged_position(&self) -> usize {
        [Eta::LeftEmits, Eta::RightEmits]
            .into_iter()
            .filter_map(|eta| self.global_unit(eta))
            .max()
            .unwrap_or(0)
    }

    /// Merged position tagged with the emitting hand's ghost flag.
    pub fn merged_decoded(&self) -> Option<Decoded> {
        let s = self.state?;
        let ghost = self.follower(s.eta).current()?.ghost;
        let unit = self.merged_position();
        Some(Decoded {
            state: 2 * unit + usize::from(ghost),
            unit,
            ghost,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decoder::{DecoderState, LogModel};
    use crate::score::{quantize, PitchClass, Score, ScoreEvent};
    use proptest::prelude::*;

    fn pc(c: u8) -> PitchSet {
        PitchSet::single(PitchClass::new(c).unwrap())
    }

    fn handed_score(notes: &[(Hand, u8)]) -> QuantizedScore {
        let events = notes
            .iter()
            .enumerate()
            .map(|(i, &(hand, c))| {
                let mut e = ScoreEvent::note(pc(c), i as f64, 1.0);
                e.hand = hand;
                e
            })
            .collect();
        quantize(&Score::new(60.0, 1, events).unwrap()).unwrap()
    }

    fn model(notes: &[(Hand, u8)]) -> HandedModel {
        split_compile(
            &handed_score(notes),
            &CompileOptions::default(),
            &DecodeOptions::default(),
        )
        .unwrap()
    }

    use Hand::{Left as L, Right as R};

    #[test]
    fn part_sizes_follow_hand_counts() {
        let m = model(&[(L, 0), (R, 4), (L, 2), (R, 7), (R, 9)]);
        assert_eq!(m.left.params.n_states(), 4);
        assert_eq!(m.right.params.n_states(), 6);
        assert_eq!(m.left.units, vec![0, 2]);
        assert_eq!(m.right.units, vec![1, 3, 4]);
    }

    #[test]
    fn one_handed_score_rejected() {
        let q = handed_score(&[(R, 0), (R, 2)]);
        let err =
            split_compile(&q, &CompileOptions::default(), &DecodeOptions::default()).unwrap_err();
        assert!(matches!(err, Error::OneHandEmpty(Hand::Left)));
    }

    #[test]
    fn unhanded_unit_is_contract_error() {
        let q = handed_score(&[(R, 0), (Hand::Single, 2), (L, 4)]);
        let err =
            split_compile(&q, &CompileOptions::default(), &DecodeOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }

    #[test]
    fn left_event_leaves_right_state() {
        let mut f = ParallelFollower::new(model(&[(L, 0), (R, 4), (L, 2), (R, 7)])).unwrap();
        let s0 = f.step(pc(4), Some(R));
        let s1 = f.step(pc(0), Some(L));
        assert_eq!(s1.f_right, s0.f_right);
        assert_eq!(s1.eta, Eta::LeftEmits);
    }

    #[test]
    fn alternating_hands_advance_in_step() {
        let mut f = ParallelFollower::new(model(&[(L, 0), (R, 4), (L, 2), (R, 7)])).unwrap();
        assert_eq!(f.merged_position(), 0);
        let played = [(L, 0), (R, 4), (L, 2), (R, 7)];
        for (i, (hand, c)) in played.into_iter().enumerate() {
            f.step(pc(c), Some(hand));
            assert_eq!(f.merged_position(), i);
        }
        let s = f.state().unwrap();
        assert_eq!((s.f_left, s.f_right), (2, 2));
    }

    #[test]
    fn unattributed_event_goes_to_matching_hand() {
        let mut f = ParallelFollower::new(model(&[(L, 0), (R, 7), (L, 2), (R, 9)])).unwrap();
        f.step(pc(0), Some(L));
        assert_eq!(f.step(pc(7), None).eta, Eta::RightEmits);
        assert_eq!(f.step(pc(2), None).eta, Eta::LeftEmits);
    }

    #[test]
    fn unattributed_tie_goes_right() {
        let f = ParallelFollower::new(model(&[(L, 5), (R, 5)])).unwrap();
        assert_eq!(f.choose_hand(pc(5)), Eta::RightEmits);
    }

    #[test]
    fn attribution_prefers_explicit_tag() {
        let mut e = PerformanceEvent::note_on(40, 80, 0.0);
        assert_eq!(attribute_hand(&e, true), Some(Hand::Left));
        assert_eq!(attribute_hand(&e, false), None);
        e.hand = Some(Hand::Right);
        assert_eq!(attribute_hand(&e, true), Some(Hand::Right));
        let high = PerformanceEvent::note_on(60, 80, 0.0);
        assert_eq!(attribute_hand(&high, true), Some(Hand::Right));
    }

    fn arb_alternating() -> impl Strategy<Value = Vec<(Hand, u8)>> {
        (
            2usize..=12,
            any::<bool>(),
            prop::collection::vec(0u8..12, 12),
        )
            .prop_map(|(n, left_first, classes)| {
                (0..n)
                    .map(|i| {
                        let hand = if (i % 2 == 0) == left_first { L } else { R };
                        (hand, classes[i])
                    })
                    .collect()
            })
    }

    proptest! {
        #[test]
        fn one_handed_stream_freezes_other_hand(notes in arb_alternating(), len in 1usize..10) {
            let mut f = ParallelFollower::new(model(&notes)).unwrap();
            let rights: Vec<u8> = notes.iter().filter(|n| n.0 == R).map(|n| n.1).collect();
            for k in 0..len {
                let s = f.step(pc(rights[k % rights.len()]), Some(R));
                prop_assert_eq!(s.f_left, 0);
            }
        }

        #[test]
        fn merged_matches_single_model_on_alternating_scores(notes in arb_alternating()) {
            let q = handed_score(&notes);
            let (params, layout) = compile(&q, &CompileOptions::default()).unwrap();
            let banded = DecodeOptions::default().banded(&params).unwrap();
            let lm = LogModel::from_params(&params);
            let mut f = ParallelFollower::new(model(&notes)).unwrap();
            let obs: Vec<PitchSet> = notes.iter().map(|n| pc(n.1)).collect();
            let mut single = DecoderState::init(&lm, obs[0]);
            for (t, &(hand, c)) in notes.iter().enumerate() {
                if t > 0 {
                    single.step_fast(&banded, &lm, obs[t]);
                }
                f.step(pc(c), Some(hand));
                let single_unit = layout.kind(single.current_best()).unit();
                prop_assert_eq!(f.merged_position(), single_unit);
            }
        }
    }
}
