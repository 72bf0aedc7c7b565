//! Joint distributions over two masked slots built from the model's unary
//! conditionals.
//!
//! Five constructions are available:
//!
//! * [`mlm_joint`]: product of the both-masked marginals (conditionally
//!   independent).
//! * [`mrf_joint`]: product of the unary conditionals, in probability or
//!   logit space.
//! * [`hcb_joint`]: ratio reconstruction around a pivot pair; exact when the
//!   conditionals are compatible.
//! * [`ag_joint`]: fixed-point search for the joint whose conditionals are
//!   closest in summed KL to the given ones.

mod ag;
mod hcb;
mod mlm;
mod mrf;

pub use ag::{ag_joint, ag_objective, AgConfig, AgTrace};
pub use hcb::{hcb_joint, hcb_pivot};
pub use mlm::mlm_joint;
pub use mrf::{mrf_joint, Channel};

use crate::error::Result;
use crate::types::{JointTable, Method, PairRecord};

/// Runs one construction on a record. HCB pivots on the mode of the MLM joint.
pub fn derive_joint(record: &PairRecord, method: Method, ag: &AgConfig) -> Result<JointTable> {
    match method {
        Method::Mlm => mlm_joint(&record.marg_a, &record.marg_b),
        Method::Mrf => mrf_joint(&record.cond_a_given_b, &record.cond_b_given_a, Channel::Probs),
        Method::MrfLogit => {
            mrf_joint(&record.cond_a_given_b, &record.cond_b_given_a, Channel::Logits)
        }
        Method::Hcb => {
            let pivot = hcb_pivot(&mlm_joint(&record.marg_a, &record.marg_b)?);
            hcb_joint(&record.cond_a_given_b, &record.cond_b_given_a, pivot)
        }
        Method::Ag => {
            ag_joint(&record.cond_a_given_b, &record.cond_b_given_a, ag).map(|(joint, _)| joint)
        }
    }
}
