//! Explicit pairwise joint distributions from the unary conditionals of a
//! masked language model.
//!
//! A [`PairRecord`] holds, for two masked slots `a < b` of one sentence, the
//! model's conditional of each slot given every filler of the other, plus the
//! both-masked marginals. The [`constructions`] turn those into a
//! [`JointTable`]; [`compat`] measures whether the two conditionals admit any
//! joint at all; [`metrics`] scores a joint against the record.

pub mod cli;
pub mod compat;
pub mod constructions;
pub mod error;
pub mod io;
pub mod metrics;
pub mod numeric;
pub mod types;

pub use error::{Error, Result};
pub use numeric::{log_normalize, logsumexp, SquareTable};
pub use types::{
    row_conditionals, ConditionalTable, Direction, JointTable, MarginalVector, Method, PairRecord,
    Position, Scheme, Vocabulary,
};
