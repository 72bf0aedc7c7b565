use crate::error::{Error, Result};
use crate::numeric::SquareTable;
use crate::types::{ConditionalTable, JointTable, Method};

/// Which scores of the unary conditionals feed the MRF potential.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Channel {
    Probs,
    Logits,
}

/// Joint whose log potential is the sum of the two unary scores:
/// `score(i, j) = s_{a|b}(i | j) + s_{b|a}(j | i)`.
pub fn mrf_joint(
    cond_a_given_b: &ConditionalTable,
    cond_b_given_a: &ConditionalTable,
    channel: Channel,
) -> Result<JointTable> {
    let n = cond_a_given_b.vocab_size();
    if cond_b_given_a.vocab_size() != n {
        return Err(Error::DimensionMismatch {
            what: "conditional tables",
            expected: n,
            found: cond_b_given_a.vocab_size(),
        });
    }
    // Both tables are stored [context][target].
    let (a_b, b_a, method) = match channel {
        Channel::Probs => (
            cond_a_given_b.log_probs(),
            cond_b_given_a.log_probs(),
            Method::Mrf,
        ),
        Channel::Logits => (
            cond_a_given_b
                .logits()
                .ok_or(Error::MissingLogits("a|b"))?,
            cond_b_given_a
                .logits()
                .ok_or(Error::MissingLogits("b|a"))?,
            Method::MrfLogit,
        ),
    };
    let scores = SquareTable::from_fn(n, |i, j| a_b.get(j, i) + b_a.get(i, j));
    JointTable::from_log_scores(method, &scores)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compat::unfaithful_mrf_fixture;
    use crate::types::{row_conditionals, Direction, Position};

    #[test]
    fn two_token_fixture_joint() {
        let fixture = unfaithful_mrf_fixture();
        let joint = mrf_joint(&fixture.cond_a_given_b, &fixture.cond_b_given_a, Channel::Probs)
            .unwrap();
        // Unnormalized [[(97/98)^2, 1/196], [1/196, 1/4]]; values from 40-digit arithmetic.
        let p = joint.probs();
        assert!((p.get(0, 0) - 0.7901410816257977830).abs() < 1e-12);
        assert!((p.get(0, 1) - 0.0041148807524353376).abs() < 1e-12);
        assert!((p.get(1, 0) - 0.0041148807524353376).abs() < 1e-12);
        assert!((p.get(1, 1) - 0.2016291568693315418).abs() < 1e-12);

        let a_given_b = row_conditionals(&joint, Direction::AGivenB).unwrap();
        assert!((a_given_b.log_prob(0, 1).exp() - 0.02).abs() < 1e-12);
        assert!((a_given_b.log_prob(1, 1).exp() - 0.98).abs() < 1e-12);
    }

    #[test]
    fn uniform_conditionals_give_uniform_joint() {
        let u = vec![vec![1.0 / 3.0; 3]; 3];
        let a = ConditionalTable::from_probs(Position::A, &u).unwrap();
        let b = ConditionalTable::from_probs(Position::B, &u).unwrap();
        let joint = mrf_joint(&a, &b, Channel::Probs).unwrap();
        for &x in joint.log_joint().as_slice() {
            assert!((x.exp() - 1.0 / 9.0).abs() < 1e-15);
        }
    }

    #[test]
    fn logits_channel_required() {
        let u = vec![vec![0.5; 2]; 2];
        let a = ConditionalTable::from_probs(Position::A, &u).unwrap();
        let b = ConditionalTable::from_probs(Position::B, &u).unwrap();
        assert!(matches!(
            mrf_joint(&a, &b, Channel::Logits),
            Err(Error::MissingLogits(_))
        ));
    }

    #[test]
    fn logits_equal_to_log_probs_match_probs_channel() {
        let rows = vec![vec![0.2, 0.8], vec![0.6, 0.4]];
        let a = ConditionalTable::from_probs(Position::A, &rows).unwrap();
        let a = a.clone().with_logits(a.log_probs().clone()).unwrap();
        let rows_b = vec![vec![0.3, 0.7], vec![0.9, 0.1]];
        let b = ConditionalTable::from_probs(Position::B, &rows_b).unwrap();
        let b = b.clone().with_logits(b.log_probs().clone()).unwrap();
        let p = mrf_joint(&a, &b, Channel::Probs).unwrap();
        let l = mrf_joint(&a, &b, Channel::Logits).unwrap();
        assert_eq!(l.method(), Method::MrfLogit);
        assert!(p.log_joint().max_abs_diff(l.log_joint()) < 1e-12);
    }
}
