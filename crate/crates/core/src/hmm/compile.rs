use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{HmmParams, StateLayout, N_SYMBOLS};
use crate::error::{contract, Error, Result};
use crate::score::{PitchSet, QuantizedScore};

/// Constants used to seed a score HMM before training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompileOptions {
    /// Emission mass a normal state puts on its scored pitch classes.
    pub p_correct: f64,
    /// Prior mass on the first normal state (on top of its uniform share).
    pub p_start: f64,
    pub normal_next: f64,
    pub normal_ghost: f64,
    pub normal_skip: f64,
    pub normal_self: f64,
    pub ghost_next_normal: f64,
    pub ghost_next_ghost: f64,
}

impl Default for CompileOptions {
    fn default() -> Self {
        Self {
            p_correct: 0.9,
            p_start: 0.8,
            normal_next: 0.85,
            normal_ghost: 0.05,
            normal_skip: 0.05,
            normal_self: 0.05,
            ghost_next_normal: 0.6,
            ghost_next_ghost: 0.4,
        }
    }
}

impl CompileOptions {
    fn validate(&self) -> Result<()> {
        let all = [
            self.p_correct,
            self.p_start,
            self.normal_next,
            self.normal_ghost,
            self.normal_skip,
            self.normal_self,
            self.ghost_next_normal,
            self.ghost_next_ghost,
        ];
        if all.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(contract("compile probabilities must lie in [0, 1]"));
        }
        if self.normal_next + self.normal_ghost + self.normal_skip + self.normal_self <= 0.0 {
            return Err(contract("normal states need some outgoing mass"));
        }
        Ok(())
    }
}

/// Builds the normal/ghost HMM for a quantized score.
///
/// Edges per unit `u`:
/// * normal u -> normal u+1 (correct playing)
/// * normal u -> ghost u (extra note)
/// * normal u -> normal u+2 (skipped note)
/// * normal u -> normal u (repeated observation)
/// * ghost u -> normal u+1 (recovery)
/// * ghost u -> ghost u+1 (still off the score)
///
/// Edges that would leave the score are dropped and the row renormalized;
/// the last ghost state loops on itself.
pub fn compile(q: &QuantizedScore, opts: &CompileOptions) -> Result<(HmmParams, StateLayout)> {
    if q.is_empty() {
        return Err(Error::EmptyScore);
    }
    opts.validate()?;
    let n_units = q.len();
    let layout = StateLayout::for_units(n_units);
    let n = layout.n_states();

    let mut transition = Array2::<f64>::zeros((n, n));
    for u in 0..n_units {
        let (normal, ghost) = layout.pair(u);
        let mut edges = vec![(normal, opts.normal_self), (ghost, opts.normal_ghost)];
        if u + 1 < n_units {
            edges.push((layout.normal(u + 1), opts.normal_next));
        }
        if u + 2 < n_units {
            edges.push((layout.normal(u + 2), opts.normal_skip));
        }
        set_row(&mut transition, normal, &edges);

        let edges = if u + 1 < n_units {
            vec![
                (layout.normal(u + 1), opts.ghost_next_normal),
                (layout.ghost(u + 1), opts.ghost_next_ghost),
            ]
        } else {
            vec![(ghost, 1.0)]
        };
        set_row(&mut transition, ghost, &edges);
    }

    let mut emission = Array2::<f64>::from_elem((n, N_SYMBOLS), 1.0 / N_SYMBOLS as f64);
    for (u, unit) in q.units.iter().enumerate() {
        let row = normal_emission(unit.pitches, opts.p_correct);
        emission
            .row_mut(layout.normal(u))
            .assign(&Array1::from(row.to_vec()));
    }

    let mut prior = Array1::<f64>::zeros(n);
    let share = (1.0 - opts.p_start) / n_units as f64;
    for u in 0..n_units {
        prior[layout.normal(u)] = share;
    }
    prior[layout.normal(0)] += opts.p_start;

    Ok((HmmParams::new(prior, transition, emission)?, layout))
}

fn set_row(transition: &mut Array2<f64>, from: usize, edges: &[(usize, f64)]) {
    let total: f64 = edges.iter().map(|e| e.1).sum();
    if total > 0.0 {
        for &(to, w) in edges {
            transition[[from, to]] += w / total;
        }
    } else {
        transition[[from, from]] = 1.0;
    }
}

/// `p_correct` split over the scored pitch classes, the rest spread over the
/// other classes. Rests and full chromatic sets are uniform.
fn normal_emission(pitches: PitchSet, p_correct: f64) -> [f64; N_SYMBOLS] {
    let k = pitches.len();
    if k == 0 || k == N_SYMBOLS {
        return [1.0 / N_SYMBOLS as f64; N_SYMBOLS];
    }
    let on = p_correct / k as f64;
    let off = (1.0 - p_correct) / (N_SYMBOLS - k) as f64;
    let mut row = [off; N_SYMBOLS];
    for pc in pitches.iter() {
        row[pc.index()] = on;
    }
    row
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::score::{quantize, PitchClass, Score, ScoreEvent};
    use approx::assert_relative_eq;

    fn score_of(classes: &[u8]) -> QuantizedScore {
        let events = classes
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                ScoreEvent::note(PitchSet::single(PitchClass::new(c).unwrap()), i as f64, 1.0)
            })
            .collect();
        quantize(&Score::new(120.0, 1, events).unwrap()).unwrap()
    }

    #[test]
    fn one_unit_gives_two_states() {
        let (p, layout) = compile(&score_of(&[0]), &CompileOptions::default()).unwrap();
        assert_eq!(p.n_states(), 2);
        assert_eq!(layout.n_states(), 2);
        assert_eq!(p.prior[0], 1.0);
    }

    #[test]
    fn three_units_edge_set() {
        let (p, layout) = compile(&score_of(&[0, 2, 4]), &CompileOptions::default()).unwrap();
        assert_eq!(p.n_states(), 6);
        let n0 = layout.normal(0);
        let targets: Vec<usize> = (0..6).filter(|&j| p.transition[[n0, j]] > 0.0).collect();
        // self, own ghost, next normal, skip to normal 2
        assert_eq!(targets, vec![0, 1, 2, 4]);
        assert_relative_eq!(p.transition[[n0, 2]], 0.85, max_relative = 1e-12);
        assert_relative_eq!(p.transition[[n0, 4]], 0.05, max_relative = 1e-12);
        let g0 = layout.ghost(0);
        let targets: Vec<usize> = (0..6).filter(|&j| p.transition[[g0, j]] > 0.0).collect();
        assert_eq!(targets, vec![2, 3]);
        assert_eq!(p.transition[[5, 5]], 1.0);
    }

    #[test]
    fn normal_emission_concentrates_on_scored_pitch() {
        let (p, _) = compile(&score_of(&[0]), &CompileOptions::default()).unwrap();
        let row = p.emission.row(0);
        assert_eq!(row[0], 0.9);
        for k in 1..12 {
            assert_relative_eq!(row[k], 0.1 / 11.0, max_relative = 1e-15);
        }
        assert_relative_eq!(row.sum(), 1.0, epsilon = 1e-12);
        assert!(p.emission.row(1).iter().all(|&b| b == 1.0 / 12.0));
    }

    #[test]
    fn prior_spreads_remainder_over_normals() {
        let (p, _) = compile(&score_of(&[0, 1, 2, 3]), &CompileOptions::default()).unwrap();
        assert_relative_eq!(p.prior[0], 0.8 + 0.05, max_relative = 1e-12);
        assert_relative_eq!(p.prior[2], 0.05, max_relative = 1e-12);
        assert_eq!(p.prior[1], 0.0);
        assert_relative_eq!(p.prior.sum(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn empty_score_rejected() {
        let q = QuantizedScore {
            units: vec![],
            subdivision: 1,
            bpm: 60.0,
            events: vec![],
        };
        assert_eq!(
            compile(&q, &CompileOptions::default()),
            Err(Error::EmptyScore)
        );
    }

    #[test]
    fn state_count_is_twice_units() {
        for n in 1..30 {
            let classes: Vec<u8> = (0..n).map(|i| (i * 5 % 12) as u8).collect();
            let (p, layout) = compile(&score_of(&classes), &CompileOptions::default()).unwrap();
            assert_eq!(p.n_states(), 2 * n);
            assert_eq!(layout.n_units(), n);
        }
    }
}
