//! Scaled forward/backward passes, posteriors and Baum-Welch updates.
//!
//! Forward variables are normalized at every step; the normalizers `c_t`
//! multiply to the sequence likelihood. Backward variables are divided by
//! the same `c_{t+1}`, so `alpha_t(i) * beta_t(i)` is directly the state
//! posterior and the scale factors cancel in `xi`.

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use super::{HmmParams, ObservationSeq, N_SYMBOLS};
use crate::error::{contract, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    /// Scaled forward variables, T x N; each row sums to 1.
    pub alpha: Array2<f64>,
    /// Per-step normalizers `c_t`.
    pub scale: Vec<f64>,
    pub log_likelihood: f64,
}

/// T x N table of `b_i(o_t)`.
fn emission_table(params: &HmmParams, obs: &ObservationSeq) -> Array2<f64> {
    let n = params.n_states();
    let mut table = Array2::zeros((obs.len(), n));
    for (t, &o) in obs.symbols().iter().enumerate() {
        for i in 0..n {
            table[[t, i]] = params.emission_unchecked(i, o);
        }
    }
    table
}

pub fn forward(params: &HmmParams, obs: &ObservationSeq) -> Result<Forward> {
    forward_with(params, &emission_table(params, obs))
}

fn forward_with(params: &HmmParams, emis: &Array2<f64>) -> Result<Forward> {
    let (t_len, n) = emis.dim();
    let mut alpha = Array2::zeros((t_len, n));
    let mut scale = Vec::with_capacity(t_len);
    let mut next = Array1::<f64>::zeros(n);

    for i in 0..n {
        next[i] = params.prior[i] * emis[[0, i]];
    }
    for t in 0..t_len {
        if t > 0 {
            next.fill(0.0);
            let prev = alpha.row(t - 1);
            for j in 0..n {
                let a = prev[j];
                if a == 0.0 {
                    continue;
                }
                next.scaled_add(a, &params.transition.row(j));
            }
            next *= &emis.row(t);
        }
        let c: f64 = next.sum();
        if !(c > 0.0) {
            return Err(Error::NumericalUnderflow { t });
        }
        alpha.row_mut(t).assign(&(&next / c));
        scale.push(c);
    }
    let log_likelihood = scale.iter().map(|&c| libm::log(c)).sum();
    Ok(Forward {
        alpha,
        scale,
        log_likelihood,
    })
}

/// Backward variables scaled by the forward pass's normalizers.
pub fn backward(params: &HmmParams, obs: &ObservationSeq, fwd: &Forward) -> Result<Array2<f64>> {
    let emis = emission_table(params, obs);
    backward_with(params, &emis, fwd)
}

fn backward_with(params: &HmmParams, emis: &Array2<f64>, fwd: &Forward) -> Result<Array2<f64>> {
    let (t_len, n) = emis.dim();
    if fwd.alpha.dim() != (t_len, n) || fwd.scale.len() != t_len {
        return Err(contract("forward result does not match observations"));
    }
    let mut beta = Array2::zeros((t_len, n));
    beta.row_mut(t_len - 1).fill(1.0);
    let mut weighted = Array1::<f64>::zeros(n);
    for t in (0..t_len - 1).rev() {
        // weighted(j) = b_j(o_{t+1}) beta_{t+1}(j)
        weighted.assign(&(&emis.row(t + 1) * &beta.row(t + 1)));
        let c = fwd.scale[t + 1];
        for i in 0..n {
            beta[[t, i]] = params.transition.row(i).dot(&weighted) / c;
        }
    }
    Ok(beta)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Posteriors {
    /// T x N state posteriors.
    pub gamma: Array2<f64>,
    /// T-1 transition posteriors, each N x N.
    pub xi: Vec<Array2<f64>>,
}

pub fn posteriors(
    alpha: &Array2<f64>,
    beta: &Array2<f64>,
    params: &HmmParams,
    obs: &ObservationSeq,
    scale: &[f64],
) -> Result<Posteriors> {
    let emis = emission_table(params, obs);
    let (t_len, n) = emis.dim();
    if alpha.dim() != (t_len, n) || beta.dim() != (t_len, n) || scale.len() != t_len {
        return Err(contract("posterior inputs have mismatched dimensions"));
    }
    let mut gamma = Array2::zeros((t_len, n));
    let mut xi = Vec::with_capacity(t_len.saturating_sub(1));
    let mut xi_t = Array2::zeros((n, n));
    for t in 0..t_len - 1 {
        xi_step(params, alpha, beta, &emis, scale, t, &mut xi_t);
        gamma.row_mut(t).assign(&xi_t.sum_axis(Axis(1)));
        xi.push(xi_t.clone());
    }
    gamma.row_mut(t_len - 1).assign(&last_gamma(alpha));
    Ok(Posteriors { gamma, xi })
}

/// xi_t(i,j) = alpha_t(i) A_ij b_j(o_{t+1}) beta_{t+1}(j) / c_{t+1}
fn xi_step(
    params: &HmmParams,
    alpha: &Array2<f64>,
    beta: &Array2<f64>,
    emis: &Array2<f64>,
    scale: &[f64],
    t: usize,
    out: &mut Array2<f64>,
) {
    let n = alpha.ncols();
    let c = scale[t + 1];
    let weighted = &emis.row(t + 1) * &beta.row(t + 1);
    for i in 0..n {
        let a = alpha[[t, i]] / c;
        let a_row = params.transition.row(i);
        let mut row = out.row_mut(i);
        for j in 0..n {
            row[j] = a * a_row[j] * weighted[j];
        }
    }
}

fn last_gamma(alpha: &Array2<f64>) -> Array1<f64> {
    let last = alpha.row(alpha.nrows() - 1);
    &last / last.sum()
}

/// Full set of per-iteration training quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingCaches {
    pub alpha: Array2<f64>,
    pub beta: Array2<f64>,
    pub gamma: Array2<f64>,
    pub xi: Vec<Array2<f64>>,
    pub scale: Vec<f64>,
    pub log_likelihood: f64,
    pub iteration: usize,
}

impl TrainingCaches {
    pub fn compute(params: &HmmParams, obs: &ObservationSeq, iteration: usize) -> Result<Self> {
        let emis = emission_table(params, obs);
        let fwd = forward_with(params, &emis)?;
        let beta = backward_with(params, &emis, &fwd)?;
        let post = posteriors(&fwd.alpha, &beta, params, obs, &fwd.scale)?;
        Ok(Self {
            alpha: fwd.alpha,
            beta,
            gamma: post.gamma,
            xi: post.xi,
            scale: fwd.scale,
            log_likelihood: fwd.log_likelihood,
            iteration,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub max_iters: usize,
    /// Stop once the log-likelihood moves by less than this.
    pub tol: f64,
    /// Force transitions absent from the initial model to stay zero.
    pub freeze_structure: bool,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            max_iters: 200,
            tol: 1e-6,
            freeze_structure: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingResult {
    pub params: HmmParams,
    /// Log-likelihood of the observations under the model entering each
    /// iteration.
    pub history: Vec<f64>,
}

/// Baum-Welch re-estimation of prior, transition and emission.
///
/// Emission counts credit every pitch class present in an observation set
/// and each row is renormalized, so chords keep `B` row-stochastic. Rows
/// whose expected visit count is zero keep their previous values.
pub fn baum_welch(
    init: &HmmParams,
    obs: &ObservationSeq,
    opts: &TrainOptions,
) -> Result<TrainingResult> {
    init.validate()?;
    if opts.max_iters == 0 {
        return Err(contract("max_iters must be at least 1"));
    }
    let mask = opts.freeze_structure.then(|| init.transition_mask());
    let n = init.n_states();
    let t_len = obs.len();
    let mut params = init.clone();
    let mut history: Vec<f64> = Vec::new();
    let mut xi_t = Array2::zeros((n, n));

    for _ in 0..opts.max_iters {
        let emis = emission_table(&params, obs);
        let fwd = forward_with(&params, &emis)?;
        if let Some(&prev) = history.last() {
            if (fwd.log_likelihood - prev).abs() < opts.tol {
                history.push(fwd.log_likelihood);
                break;
            }
        }
        history.push(fwd.log_likelihood);
        let beta = backward_with(&params, &emis, &fwd)?;

        let mut trans_num = Array2::<f64>::zeros((n, n));
        let mut trans_den = Array1::<f64>::zeros(n);
        let mut emit_num = Array2::<f64>::zeros((n, N_SYMBOLS));
        let mut prior = Array1::<f64>::zeros(n);
        for t in 0..t_len {
            let gamma_t = if t + 1 < t_len {
                xi_step(&params, &fwd.alpha, &beta, &emis, &fwd.scale, t, &mut xi_t);
                trans_num += &xi_t;
                let g = xi_t.sum_axis(Axis(1));
                trans_den += &g;
                g
            } else {
                last_gamma(&fwd.alpha)
            };
            if t == 0 {
                prior.assign(&gamma_t);
            }
            for pc in obs.symbols()[t].iter() {
                emit_num.column_mut(pc.index()).scaled_add(1.0, &gamma_t);
            }
        }

        let mut transition = params.transition.clone();
        for i in 0..n {
            if !(trans_den[i] > 0.0) {
                continue;
            }
            let mut row = trans_num.row(i).to_owned() / trans_den[i];
            if let Some(mask) = &mask {
                row.zip_mut_with(&mask.row(i), |a, &keep| {
                    if !keep {
                        *a = 0.0
                    }
                });
                let s = row.sum();
                if !(s > 0.0) {
                    continue;
                }
                row /= s;
            }
            transition.row_mut(i).assign(&row);
        }
        let mut emission = params.emission.clone();
        for j in 0..n {
            let s = emit_num.row(j).sum();
            if s > 0.0 {
                emission.row_mut(j).assign(&(&emit_num.row(j) / s));
            }
        }
        params = HmmParams {
            prior,
            transition,
            emission,
        };
    }
    Ok(TrainingResult { params, history })
}
