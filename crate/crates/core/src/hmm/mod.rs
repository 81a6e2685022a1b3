//! Score HMM: parameters, construction from a quantized score, and
//! Baum-Welch training.
//!
//! Observations are sets of pitch classes. A chord is scored against a
//! state by the geometric mean of its per-pitch-class emission
//! probabilities, which reduces to the plain emission for a single note.

mod compile;
mod train;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::score::{PitchClass, PitchSet, QuantizedScore};

pub use compile::{compile, CompileOptions};
pub use train::{
    backward, baum_welch, forward, posteriors, Forward, Posteriors, TrainOptions, TrainingCaches,
    TrainingResult,
};

/// Number of observation symbols (pitch classes).
pub const N_SYMBOLS: usize = PitchClass::COUNT;

const STOCHASTIC_TOL: f64 = 1e-9;

/// HMM parameters: prior, row-stochastic transition and emission matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct HmmParams {
    pub prior: Array1<f64>,
    pub transition: Array2<f64>,
    pub emission: Array2<f64>,
}

impl HmmParams {
    pub fn new(prior: Array1<f64>, transition: Array2<f64>, emission: Array2<f64>) -> Result<Self> {
        let p = Self {
            prior,
            transition,
            emission,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn n_states(&self) -> usize {
        self.prior.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.prior.len();
        if n == 0 {
            return Err(contract("HMM needs at least one state"));
        }
        if self.transition.dim() != (n, n) {
            return Err(contract(format!(
                "transition is {:?}, expected ({n}, {n})",
                self.transition.dim()
            )));
        }
        if self.emission.dim() != (n, N_SYMBOLS) {
            return Err(contract(format!(
                "emission is {:?}, expected ({n}, {N_SYMBOLS})",
                self.emission.dim()
            )));
        }
        check_distribution(self.prior.iter().copied(), "prior")?;
        for (i, row) in self.transition.rows().into_iter().enumerate() {
            check_distribution(row.iter().copied(), &format!("transition row {i}"))?;
        }
        for (i, row) in self.emission.rows().into_iter().enumerate() {
            check_distribution(row.iter().copied(), &format!("emission row {i}"))?;
        }
        Ok(())
    }

    /// `true` where the transition matrix has an edge.
    pub fn transition_mask(&self) -> Array2<bool> {
        self.transition.mapv(|a| a > 0.0)
    }

    pub fn emission_prob(&self, state: usize, observed: PitchSet) -> Result<f64> {
        if observed.is_empty() {
            return Err(Error::Domain("empty observation set".into()));
        }
        if state >= self.n_states() {
            return Err(contract(format!("state {state} out of range")));
        }
        Ok(self.emission_unchecked(state, observed))
    }

    /// Geometric mean of `b_state(k)` over the observed pitch classes.
    pub(crate) fn emission_unchecked(&self, state: usize, observed: PitchSet) -> f64 {
        let row = self.emission.row(state);
        match observed.len() {
            1 => row[observed.lowest().unwrap().index()],
            k => {
                let product: f64 = observed.iter().map(|pc| row[pc.index()]).product();
                libm::pow(product, 1.0 / k as f64)
            }
        }
    }
}

fn check_distribution(values: impl Iterator<Item = f64>, what: &str) -> Result<()> {
    let mut sum = 0.0;
    for v in values {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(contract(format!("{what} has invalid entry {v}")));
        }
        sum += v;
    }
    if (sum - 1.0).abs() > STOCHASTIC_TOL {
        return Err(contract(format!("{what} sums to {sum}, not 1")));
    }
    Ok(())
}

/// What a hidden state stands for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StateKind {
    Normal(usize),
    Ghost(usize),
}

impl StateKind {
    pub fn unit(self) -> usize {
        match self {
            StateKind::Normal(u) | StateKind::Ghost(u) => u,
        }
    }

    pub fn is_ghost(self) -> bool {
        matches!(self, StateKind::Ghost(_))
    }
}

/// Normal/ghost pairing. Unit `u` owns normal state `2u` and ghost state
/// `2u + 1`, which keeps every score edge within a few diagonals.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateLayout {
    kinds: Vec<StateKind>,
}

impl StateLayout {
    pub fn for_units(n_units: usize) -> Self {
        let kinds = (0..n_units)
            .flat_map(|u| [StateKind::Normal(u), StateKind::Ghost(u)])
            .collect();
        Self { kinds }
    }

    pub fn n_states(&self) -> usize {
        self.kinds.len()
    }

    pub fn n_units(&self) -> usize {
        self.kinds.len() / 2
    }

    pub fn kind(&self, state: usize) -> StateKind {
        self.kinds[state]
    }

    pub fn kinds(&self) -> &[StateKind] {
        &self.kinds
    }

    pub fn normal(&self, unit: usize) -> usize {
        2 * unit
    }

    pub fn ghost(&self, unit: usize) -> usize {
        2 * unit + 1
    }

    pub fn pair(&self, unit: usize) -> (usize, usize) {
        (self.normal(unit), self.ghost(unit))
    }

    pub(crate) fn validate(&self) -> Result<()> {
        let ok = self.kinds.len().is_multiple_of(2)
            && self
                .kinds
                .chunks(2)
                .enumerate()
                .all(|(u, c)| c == [StateKind::Normal(u), StateKind::Ghost(u)]);
        if ok {
            Ok(())
        } else {
            Err(contract("state layout is not normal/ghost interleaved"))
        }
    }
}

/// A sequence of observed pitch-class sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObservationSeq(Vec<PitchSet>);

impl ObservationSeq {
    pub fn new(symbols: Vec<PitchSet>) -> Result<Self> {
        if symbols.is_empty() {
            return Err(Error::Domain("observation sequence is empty".into()));
        }
        if let Some(t) = symbols.iter().position(|s| s.is_empty()) {
            return Err(Error::Domain(format!("observation {t} is an empty set")));
        }
        Ok(Self(symbols))
    }

    pub fn from_classes(classes: &[u8]) -> Result<Self> {
        let sets = classes
            .iter()
            .map(|&c| PitchClass::new(c).map(PitchSet::single))
            .collect::<Result<Vec<_>>>()?;
        Self::new(sets)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn symbols(&self) -> &[PitchSet] {
        &self.0
    }
}

/// On-disk form of a compiled or trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub n_states: usize,
    pub layout: StateLayout,
    pub prior: Vec<f64>,
    pub transition: Vec<Vec<f64>>,
    pub emission: Vec<Vec<f64>>,
    /// The quantized score the model was compiled from.
    pub score: QuantizedScore,
}

impl ModelFile {
    pub fn new(params: &HmmParams, layout: &StateLayout, score: &QuantizedScore) -> Self {
        Self {
            n_states: params.n_states(),
            layout: layout.clone(),
            prior: params.prior.to_vec(),
            transition: params
                .transition
                .rows()
                .into_iter()
                .map(|r| r.to_vec())
                .collect(),
            emission: params
                .emission
                .rows()
                .into_iter()
                .map(|r| r.to_vec())
                .collect(),
            score: score.clone(),
        }
    }

    pub fn params(&self) -> Result<HmmParams> {
        let n = self.n_states;
        let flat = |rows: &[Vec<f64>], width: usize, what: &str| -> Result<Array2<f64>> {
            if rows.len() != n || rows.iter().any(|r| r.len() != width) {
                return Err(contract(format!("{what} must be {n}x{width}")));
            }
            let data = rows.iter().flatten().copied().collect();
            Ok(Array2::from_shape_vec((n, width), data).expect("shape checked"))
        };
        let params = HmmParams::new(
            Array1::from(self.prior.clone()),
            flat(&self.transition, n, "transition")?,
            flat(&self.emission, N_SYMBOLS, "emission")?,
        )?;
        self.layout.validate()?;
        if self.layout.n_states() != n || self.layout.n_units() != self.score.len() {
            return Err(contract("layout does not match model size or score"));
        }
        Ok(params)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        serde_json::from_slice(bytes).map_err(|e| Error::Parse {
            offset: 0,
            message: e.to_string(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::array;

    fn pc(v: u8) -> PitchClass {
        PitchClass::new(v).unwrap()
    }

    fn one_state(row: [f64; 12]) -> HmmParams {
        HmmParams::new(
            array![1.0],
            array![[1.0]],
            Array2::from_shape_vec((1, 12), row.to_vec()).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn emission_singleton_is_exact() {
        let mut row = [0.0; 12];
        row[0] = 0.5;
        row[4] = 0.02;
        row[7] = 0.48;
        let p = one_state(row);
        assert_eq!(p.emission_prob(0, PitchSet::single(pc(0))).unwrap(), 0.5);
        let chord: PitchSet = [pc(0), pc(4)].into_iter().collect();
        assert_relative_eq!(
            p.emission_prob(0, chord).unwrap(),
            0.1,
            max_relative = 1e-12
        );
        assert!(matches!(
            p.emission_prob(0, PitchSet::EMPTY),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn uniform_row_gives_twelfth_for_any_set() {
        let p = one_state([1.0 / 12.0; 12]);
        for mask in [1u16, 0b101, 0x0fff, 0b1001_0010] {
            let v = p.emission_prob(0, PitchSet::from_mask(mask)).unwrap();
            assert_relative_eq!(v, 1.0 / 12.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn invalid_params_rejected() {
        let bad = HmmParams::new(
            array![0.5, 0.4],
            array![[0.5, 0.5], [0.5, 0.5]],
            Array2::from_elem((2, 12), 1.0 / 12.0),
        );
        assert!(matches!(bad, Err(Error::Contract(_))));
        let bad = HmmParams::new(
            array![1.0, 0.0],
            array![[0.5, 0.5], [0.6, 0.5]],
            Array2::from_elem((2, 12), 1.0 / 12.0),
        );
        assert!(matches!(bad, Err(Error::Contract(_))));
    }

    #[test]
    fn observation_seq_validation() {
        assert!(ObservationSeq::new(vec![]).is_err());
        assert!(ObservationSeq::new(vec![PitchSet::EMPTY]).is_err());
        assert!(ObservationSeq::from_classes(&[0, 12]).is_err());
        assert_eq!(ObservationSeq::from_classes(&[0, 11]).unwrap().len(), 2);
    }

    #[test]
    fn layout_pairs() {
        let l = StateLayout::for_units(3);
        assert_eq!(l.n_states(), 6);
        assert_eq!(l.pair(2), (4, 5));
        assert_eq!(l.kind(3), StateKind::Ghost(1));
        assert!(l.validate().is_ok());
    }
}
