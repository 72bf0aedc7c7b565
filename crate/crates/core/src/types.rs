//! Domain types for pairwise joints over two masked positions.
//!
//! Position `a` is always the earlier of the two masked slots and indexes the
//! rows of a joint table; position `b` indexes the columns.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::numeric::{
    floor_and_renormalize, log_normalize, log_normalize_slice, logsumexp, SquareTable, MASS_FLOOR,
};

/// Row sums of in-memory tables must be within this of 1.
pub const ROW_SUM_TOL: f64 = 1e-6;

/// Placeholder id for masked slots in a stored sentence.
pub const MASK_TOKEN: u32 = u32::MAX;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    size: usize,
    tokens: Option<Vec<String>>,
}

impl Vocabulary {
    pub fn new(size: usize) -> Result<Self> {
        if size < 2 {
            return Err(Error::VocabTooSmall(size));
        }
        Ok(Vocabulary { size, tokens: None })
    }

    pub fn with_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < 2 {
            return Err(Error::VocabTooSmall(tokens.len()));
        }
        let mut seen = HashSet::with_capacity(tokens.len());
        for t in &tokens {
            if !seen.insert(t.as_str()) {
                return Err(Error::InvalidVocabulary(format!("duplicate token {t:?}")));
            }
        }
        Ok(Vocabulary {
            size: tokens.len(),
            tokens: Some(tokens),
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.as_ref()?.get(id).map(String::as_str)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Position {
    A,
    B,
}

impl Position {
    pub fn other(self) -> Position {
        match self {
            Position::A => Position::B,
            Position::B => Position::A,
        }
    }
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Position::A => "a",
            Position::B => "b",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Direction {
    AGivenB,
    BGivenA,
}

impl Direction {
    pub fn target(self) -> Position {
        match self {
            Direction::AGivenB => Position::A,
            Direction::BGivenA => Position::B,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Mlm,
    Mrf,
    MrfLogit,
    Hcb,
    Ag,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Mlm,
        Method::Mrf,
        Method::MrfLogit,
        Method::Hcb,
        Method::Ag,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Mlm => "mlm",
            Method::Mrf => "mrf",
            Method::MrfLogit => "mrf_logit",
            Method::Hcb => "hcb",
            Method::Ag => "ag",
        }
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Method> {
        Method::ALL.get(code as usize).copied()
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .iter()
            .copied()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::UnknownMethod(s.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scheme {
    RandomPairs,
    ContiguousPairs,
    Synthetic,
}

impl Scheme {
    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::RandomPairs => "random_pairs",
            Scheme::ContiguousPairs => "contiguous_pairs",
            Scheme::Synthetic => "synthetic",
        }
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Scheme> {
        match code {
            0 => Some(Scheme::RandomPairs),
            1 => Some(Scheme::ContiguousPairs),
            2 => Some(Scheme::Synthetic),
            _ => None,
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Scheme::RandomPairs, Scheme::ContiguousPairs, Scheme::Synthetic]
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown scheme '{s}'")))
    }
}

/// How rows that do not sum to one are treated when a table is built.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RowCheck {
    /// Reject rows whose mass differs from one by more than the tolerance.
    Strict(f64),
    /// Renormalize any row with positive mass.
    Renormalize,
}

fn prepare_rows(
    what: &'static str,
    table: &mut SquareTable,
    check: RowCheck,
) -> Result<usize> {
    let n = table.dim();
    for i in 0..n {
        for (j, &x) in table.row(i).iter().enumerate() {
            if x.is_nan() || x == f64::INFINITY {
                return Err(Error::NonFinite {
                    row: i,
                    col: j,
                    value: x,
                });
            }
        }
    }
    let mut floored = 0;
    for i in 0..n {
        let row = table.row_mut(i);
        let sum = logsumexp(row).exp();
        match check {
            RowCheck::Strict(tol) if (sum - 1.0).abs() > tol => {
                return Err(Error::RowSum { what, row: i, sum });
            }
            RowCheck::Renormalize if !(sum > 0.0) => {
                return Err(Error::RowSum { what, row: i, sum });
            }
            RowCheck::Renormalize => {
                log_normalize_slice(row);
            }
            RowCheck::Strict(_) => {}
        }
        floored += floor_and_renormalize(row);
    }
    Ok(floored)
}

/// Distribution of one masked slot given each candidate filler of the other.
///
/// `log_probs[context][target]` is `log q(target | context)` with the rest of
/// the sentence fixed.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionalTable {
    target: Position,
    context: Position,
    log_probs: SquareTable,
    logits: Option<SquareTable>,
    floored: usize,
}

impl ConditionalTable {
    /// Builds a table from log-probabilities whose rows must sum to one
    /// within [`ROW_SUM_TOL`]. Entries below the probability floor are raised
    /// to it and the row renormalized.
    pub fn new(
        target: Position,
        log_probs: SquareTable,
        logits: Option<SquareTable>,
    ) -> Result<Self> {
        Self::with_check(target, log_probs, logits, RowCheck::Strict(ROW_SUM_TOL))
    }

    pub fn with_check(
        target: Position,
        mut log_probs: SquareTable,
        logits: Option<SquareTable>,
        check: RowCheck,
    ) -> Result<Self> {
        let n = log_probs.dim();
        if n < 2 {
            return Err(Error::VocabTooSmall(n));
        }
        if let Some(l) = &logits {
            if l.dim() != n {
                return Err(Error::DimensionMismatch {
                    what: "logits channel",
                    expected: n,
                    found: l.dim(),
                });
            }
            if let Some((row, col, value)) = l.first_non_finite() {
                return Err(Error::NonFinite { row, col, value });
            }
        }
        let what = match target {
            Position::A => "a|b conditional",
            Position::B => "b|a conditional",
        };
        let floored = prepare_rows(what, &mut log_probs, check)?;
        Ok(ConditionalTable {
            target,
            context: target.other(),
            log_probs,
            logits,
            floored,
        })
    }

    /// Table from already-normalized rows, skipping the floor. Used for
    /// conditionals derived from a joint.
    pub(crate) fn derived(target: Position, log_probs: SquareTable) -> Self {
        ConditionalTable {
            target,
            context: target.other(),
            log_probs,
            logits: None,
            floored: 0,
        }
    }

    pub fn from_probs(target: Position, probs: &[Vec<f64>]) -> Result<Self> {
        let t = SquareTable::from_rows(probs)?;
        Self::new(target, t.map(f64::ln), None)
    }

    pub fn vocab_size(&self) -> usize {
        self.log_probs.dim()
    }

    pub fn target(&self) -> Position {
        self.target
    }

    pub fn context(&self) -> Position {
        self.context
    }

    pub fn direction(&self) -> Direction {
        match self.target {
            Position::A => Direction::AGivenB,
            Position::B => Direction::BGivenA,
        }
    }

    pub fn log_probs(&self) -> &SquareTable {
        &self.log_probs
    }

    pub fn logits(&self) -> Option<&SquareTable> {
        self.logits.as_ref()
    }

    /// Number of entries raised to the floor when the table was built.
    pub fn floored_entries(&self) -> usize {
        self.floored
    }

    /// `log q(target | context)`.
    #[inline]
    pub fn log_prob(&self, target: usize, context: usize) -> f64 {
        self.log_probs.get(context, target)
    }

    /// The distribution over the target slot for a fixed context token.
    pub fn row(&self, context: usize) -> &[f64] {
        self.log_probs.row(context)
    }

    pub fn with_logits(mut self, logits: SquareTable) -> Result<Self> {
        if logits.dim() != self.vocab_size() {
            return Err(Error::DimensionMismatch {
                what: "logits channel",
                expected: self.vocab_size(),
                found: logits.dim(),
            });
        }
        self.logits = Some(logits);
        Ok(self)
    }
}

/// The model's output at one slot when both slots are masked.
#[derive(Clone, Debug, PartialEq)]
pub struct MarginalVector {
    position: Position,
    log_probs: Vec<f64>,
    floored: usize,
}

impl MarginalVector {
    pub fn new(position: Position, log_probs: Vec<f64>) -> Result<Self> {
        Self::with_check(position, log_probs, RowCheck::Strict(ROW_SUM_TOL))
    }

    pub fn with_check(position: Position, log_probs: Vec<f64>, check: RowCheck) -> Result<Self> {
        let n = log_probs.len();
        if n < 2 {
            return Err(Error::VocabTooSmall(n));
        }
        // Reuse the row logic on a 1×n view.
        let mut data = log_probs;
        for (j, &x) in data.iter().enumerate() {
            if x.is_nan() || x == f64::INFINITY {
                return Err(Error::NonFinite {
                    row: 0,
                    col: j,
                    value: x,
                });
            }
        }
        let sum = logsumexp(&data).exp();
        match check {
            RowCheck::Strict(tol) if (sum - 1.0).abs() > tol => {
                return Err(Error::RowSum {
                    what: "marginal",
                    row: 0,
                    sum,
                })
            }
            RowCheck::Renormalize if !(sum > 0.0) => {
                return Err(Error::RowSum {
                    what: "marginal",
                    row: 0,
                    sum,
                })
            }
            RowCheck::Renormalize => {
                log_normalize_slice(&mut data);
            }
            RowCheck::Strict(_) => {}
        }
        let floored = floor_and_renormalize(&mut data);
        Ok(MarginalVector {
            position,
            log_probs: data,
            floored,
        })
    }

    pub fn from_probs(position: Position, probs: &[f64]) -> Result<Self> {
        Self::new(position, probs.iter().map(|p| p.ln()).collect())
    }

    pub fn uniform(position: Position, vocab_size: usize) -> Result<Self> {
        Self::new(position, vec![-(vocab_size as f64).ln(); vocab_size])
    }

    pub fn vocab_size(&self) -> usize {
        self.log_probs.len()
    }

    pub fn position(&self) -> Position {
        self.position
    }

    pub fn log_probs(&self) -> &[f64] {
        &self.log_probs
    }

    pub fn floored_entries(&self) -> usize {
        self.floored
    }
}

/// One evaluation example: two masked slots in a sentence plus everything the
/// model said about them.
#[derive(Clone, Debug, PartialEq)]
pub struct PairRecord {
    pub example_id: String,
    /// Token ids of the sentence, with [`MASK_TOKEN`] at the masked slots.
    pub sentence: Vec<u32>,
    pub pos_a: usize,
    pub pos_b: usize,
    pub gold_a: usize,
    pub gold_b: usize,
    pub scheme: Scheme,
    pub cond_a_given_b: ConditionalTable,
    pub cond_b_given_a: ConditionalTable,
    pub marg_a: MarginalVector,
    pub marg_b: MarginalVector,
    pub syntactic_distance: Option<u32>,
}

impl PairRecord {
    pub fn vocab_size(&self) -> usize {
        self.marg_a.vocab_size()
    }

    pub fn token_distance(&self) -> usize {
        self.pos_b.saturating_sub(self.pos_a)
    }

    /// Entries raised to the probability floor across all four tables.
    pub fn floor_warnings(&self) -> usize {
        self.cond_a_given_b.floored_entries()
            + self.cond_b_given_a.floored_entries()
            + self.marg_a.floored_entries()
            + self.marg_b.floored_entries()
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |reason: String| Error::InvalidRecord {
            example_id: self.example_id.clone(),
            reason,
        };
        let v = self.vocab_size();
        for (name, n) in [
            ("marg_b", self.marg_b.vocab_size()),
            ("cond_a_given_b", self.cond_a_given_b.vocab_size()),
            ("cond_b_given_a", self.cond_b_given_a.vocab_size()),
        ] {
            if n != v {
                return Err(invalid(format!("{name} has size {n}, expected {v}")));
            }
        }
        if self.gold_a >= v || self.gold_b >= v {
            return Err(invalid(format!(
                "gold pair ({}, {}) out of range for vocabulary size {v}",
                self.gold_a, self.gold_b
            )));
        }
        if self.cond_a_given_b.target() != Position::A
            || self.cond_b_given_a.target() != Position::B
        {
            return Err(invalid("conditional tables have swapped targets".into()));
        }
        if self.marg_a.position() != Position::A || self.marg_b.position() != Position::B {
            return Err(invalid("marginals have swapped positions".into()));
        }
        if self.scheme != Scheme::Synthetic && self.pos_b <= self.pos_a {
            return Err(invalid(format!(
                "positions ({}, {}) must satisfy pos_a < pos_b",
                self.pos_a, self.pos_b
            )));
        }
        Ok(())
    }
}

/// A normalized joint over the two masked slots, in log space.
#[derive(Clone, Debug, PartialEq)]
pub struct JointTable {
    method: Method,
    log_joint: SquareTable,
    pivot: Option<(usize, usize)>,
    iterations: Option<usize>,
}

/// Tolerance on the total mass of a stored joint.
pub const JOINT_SUM_TOL: f64 = 1e-9;

impl JointTable {
    /// Normalizes unnormalized log-scores into a joint.
    pub fn from_log_scores(method: Method, scores: &SquareTable) -> Result<Self> {
        if scores.dim() < 2 {
            return Err(Error::VocabTooSmall(scores.dim()));
        }
        Ok(JointTable {
            method,
            log_joint: log_normalize(scores)?,
            pivot: None,
            iterations: None,
        })
    }

    /// Wraps an already-normalized log joint, checking the invariants.
    pub fn from_log_joint(method: Method, log_joint: SquareTable) -> Result<Self> {
        if log_joint.dim() < 2 {
            return Err(Error::VocabTooSmall(log_joint.dim()));
        }
        if let Some((row, col, value)) = log_joint.first_non_finite() {
            return Err(Error::NonFinite { row, col, value });
        }
        let total = logsumexp(log_joint.as_slice()).exp();
        if (total - 1.0).abs() > JOINT_SUM_TOL {
            return Err(Error::RowSum {
                what: "joint",
                row: 0,
                sum: total,
            });
        }
        Ok(JointTable {
            method,
            log_joint,
            pivot: None,
            iterations: None,
        })
    }

    pub fn from_probs(method: Method, probs: &[Vec<f64>]) -> Result<Self> {
        let t = SquareTable::from_rows(probs)?;
        Self::from_log_scores(method, &t.map(f64::ln))
    }

    pub(crate) fn with_pivot(mut self, pivot: (usize, usize)) -> Self {
        self.pivot = Some(pivot);
        self
    }

    pub(crate) fn with_iterations(mut self, iterations: usize) -> Self {
        self.iterations = Some(iterations);
        self
    }

    /// Attaches provenance read back from storage.
    pub fn with_provenance(
        mut self,
        pivot: Option<(usize, usize)>,
        iterations: Option<usize>,
    ) -> Self {
        self.pivot = pivot;
        self.iterations = iterations;
        self
    }

    pub fn vocab_size(&self) -> usize {
        self.log_joint.dim()
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn log_joint(&self) -> &SquareTable {
        &self.log_joint
    }

    /// `log q(a = i, b = j)`.
    #[inline]
    pub fn log_prob(&self, i: usize, j: usize) -> f64 {
        self.log_joint.get(i, j)
    }

    pub fn pivot(&self) -> Option<(usize, usize)> {
        self.pivot
    }

    pub fn iterations(&self) -> Option<usize> {
        self.iterations
    }

    pub fn total_mass(&self) -> f64 {
        self.log_joint.as_slice().iter().map(|x| x.exp()).sum()
    }

    pub fn probs(&self) -> SquareTable {
        self.log_joint.map(f64::exp)
    }

    /// Log marginal of one slot.
    pub fn log_marginal(&self, position: Position) -> Vec<f64> {
        let n = self.vocab_size();
        match position {
            Position::A => (0..n).map(|i| logsumexp(self.log_joint.row(i))).collect(),
            Position::B => (0..n)
                .map(|j| logsumexp(&self.log_joint.column(j)))
                .collect(),
        }
    }

    pub fn conditional(&self, direction: Direction) -> Result<ConditionalTable> {
        row_conditionals(self, direction)
    }

    /// KL(self ‖ other) over all cells.
    pub fn kl_to(&self, other: &JointTable) -> f64 {
        crate::numeric::kl_log(self.log_joint.as_slice(), other.log_joint.as_slice())
    }
}

/// Unary conditionals implied by a joint.
///
/// `BGivenA` normalizes each row of the joint; `AGivenB` normalizes each
/// column and stores it as a row indexed by the conditioning token.
pub fn row_conditionals(joint: &JointTable, direction: Direction) -> Result<ConditionalTable> {
    let n = joint.vocab_size();
    let lj = joint.log_joint();
    let min_log_mass = MASS_FLOOR.ln();
    let mut out = SquareTable::filled(n, 0.0);
    for ctx in 0..n {
        let slice: Vec<f64> = match direction {
            Direction::BGivenA => lj.row(ctx).to_vec(),
            Direction::AGivenB => lj.column(ctx),
        };
        let z = logsumexp(&slice);
        if !(z >= min_log_mass) {
            return Err(Error::DegenerateConditioning {
                position: direction.target().other(),
                token: ctx,
            });
        }
        for (t, x) in slice.into_iter().enumerate() {
            out.set(ctx, t, x - z);
        }
    }
    Ok(ConditionalTable::derived(direction.target(), out))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn product_joint(pa: &[f64], pb: &[f64]) -> JointTable {
        let rows: Vec<Vec<f64>> = pa
            .iter()
            .map(|x| pb.iter().map(|y| x * y).collect())
            .collect();
        JointTable::from_probs(Method::Mlm, &rows).unwrap()
    }

    #[test]
    fn vocabulary_invariants() {
        assert!(Vocabulary::new(1).is_err());
        assert!(Vocabulary::with_tokens(vec!["x".into(), "x".into()]).is_err());
        let v = Vocabulary::with_tokens(vec!["a".into(), "b".into()]).unwrap();
        assert_eq!(v.size(), 2);
        assert_eq!(v.token(1), Some("b"));
    }

    #[test]
    fn conditional_rejects_bad_rows() {
        let err = ConditionalTable::from_probs(Position::A, &[vec![0.5, 0.4], vec![0.5, 0.5]])
            .unwrap_err();
        assert!(matches!(err, Error::RowSum { row: 0, .. }));
        let t = ConditionalTable::with_check(
            Position::A,
            SquareTable::from_rows(&[vec![0.4f64.ln(), 0.4f64.ln()], vec![0.0, f64::NEG_INFINITY]])
                .unwrap(),
            None,
            RowCheck::Renormalize,
        )
        .unwrap();
        assert!((t.log_prob(0, 0) - 0.5f64.ln()).abs() < 1e-12);
        assert_eq!(t.floored_entries(), 1);
        assert!(t.log_probs().first_non_finite().is_none());
    }

    #[test]
    fn product_joint_conditionals_are_marginals() {
        let pa = [0.2, 0.3, 0.5];
        let pb = [0.6, 0.1, 0.3];
        let joint = product_joint(&pa, &pb);
        let b_given_a = row_conditionals(&joint, Direction::BGivenA).unwrap();
        let a_given_b = row_conditionals(&joint, Direction::AGivenB).unwrap();
        for ctx in 0..3 {
            for t in 0..3 {
                assert!((b_given_a.log_prob(t, ctx).exp() - pb[t]).abs() < 1e-12);
                assert!((a_given_b.log_prob(t, ctx).exp() - pa[t]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn conditionals_match_entrywise_division() {
        let rows = vec![
            vec![0.05, 0.10, 0.02, 0.03],
            vec![0.07, 0.01, 0.09, 0.04],
            vec![0.11, 0.06, 0.02, 0.05],
            vec![0.08, 0.12, 0.10, 0.05],
        ];
        let joint = JointTable::from_probs(Method::Ag, &rows).unwrap();
        let b_given_a = row_conditionals(&joint, Direction::BGivenA).unwrap();
        let a_given_b = row_conditionals(&joint, Direction::AGivenB).unwrap();
        for i in 0..4 {
            let row_total: f64 = rows[i].iter().sum();
            for j in 0..4 {
                let col_total: f64 = rows.iter().map(|r| r[j]).sum();
                assert!((b_given_a.log_prob(j, i).exp() - rows[i][j] / row_total).abs() < 1e-12);
                assert!((a_given_b.log_prob(i, j).exp() - rows[i][j] / col_total).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn degenerate_context_is_named() {
        let t = SquareTable::from_rows(&[vec![0.0, 0.0], vec![-800.0, -800.0]]).unwrap();
        let joint = JointTable::from_log_scores(Method::Mrf, &t).unwrap();
        match row_conditionals(&joint, Direction::BGivenA) {
            Err(Error::DegenerateConditioning {
                position: Position::A,
                token: 1,
            }) => {}
            other => panic!("unexpected {other:?}"),
        }
        assert!(row_conditionals(&joint, Direction::AGivenB).is_ok());
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
            assert_eq!(Method::from_code(m.code()), Some(m));
        }
        assert!("gibbs".parse::<Method>().is_err());
    }
}
