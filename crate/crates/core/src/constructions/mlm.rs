use crate::error::{Error, Result};
use crate::numeric::SquareTable;
use crate::types::{JointTable, MarginalVector, Method};

/// Product of the two both-masked marginals.
pub fn mlm_joint(marg_a: &MarginalVector, marg_b: &MarginalVector) -> Result<JointTable> {
    let n = marg_a.vocab_size();
    if marg_b.vocab_size() != n {
        return Err(Error::DimensionMismatch {
            what: "marginal vectors",
            expected: n,
            found: marg_b.vocab_size(),
        });
    }
    let (la, lb) = (marg_a.log_probs(), marg_b.log_probs());
    let scores = SquareTable::from_fn(n, |i, j| la[i] + lb[j]);
    JointTable::from_log_scores(Method::Mlm, &scores)
}
