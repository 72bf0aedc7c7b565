use crate::error::{Error, Result};
use crate::numeric::SquareTable;
use crate::types::{ConditionalTable, JointTable, Method};

/// Mode of a joint, ties going to the lexicographically smallest `(i, j)`.
pub fn hcb_pivot(joint: &JointTable) -> (usize, usize) {
    let n = joint.vocab_size();
    let mut best = (0, 0);
    let mut best_val = f64::NEG_INFINITY;
    for i in 0..n {
        for (j, &x) in joint.log_joint().row(i).iter().enumerate() {
            if x > best_val {
                best_val = x;
                best = (i, j);
            }
        }
    }
    best
}

/// Ratio reconstruction around `pivot = (w'_a, w'_b)`, with slot `a` taken
/// first:
///
/// ```text
/// q(i, j) ∝ q_{a|b}(i | j) / q_{a|b}(w'_a | j) · q_{b|a}(j | w'_a) / q_{b|a}(w'_b | w'_a)
/// ```
///
/// On compatible conditionals this is the true joint for every pivot. On
/// incompatible ones the result depends on the pivot and on the slot order.
pub fn hcb_joint(
    cond_a_given_b: &ConditionalTable,
    cond_b_given_a: &ConditionalTable,
    pivot: (usize, usize),
) -> Result<JointTable> {
    let n = cond_a_given_b.vocab_size();
    if cond_b_given_a.vocab_size() != n {
        return Err(Error::DimensionMismatch {
            what: "conditional tables",
            expected: n,
            found: cond_b_given_a.vocab_size(),
        });
    }
    let (pa, pb) = pivot;
    if pa >= n || pb >= n {
        return Err(Error::PivotOutOfRange(pa, pb, n));
    }
    let anchor = cond_b_given_a.log_prob(pb, pa);
    let scores = SquareTable::from_fn(n, |i, j| {
        cond_a_given_b.log_prob(i, j) - cond_a_given_b.log_prob(pa, j)
            + cond_b_given_a.log_prob(j, pa)
            - anchor
    });
    Ok(JointTable::from_log_scores(Method::Hcb, &scores)?.with_pivot(pivot))
}
