//! Score following and automatic accompaniment with hidden Markov models.

// Negated float comparisons deliberately reject NaN along with the bound.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod hmm;
pub mod score;

pub use error::{Error, Result};
pub mod accompany;
pub mod bench;
pub mod decoder;
pub mod eval;
pub mod hands;
pub mod perf;
pub mod pipeline;
pub mod sim;
