//! Log-space numerics shared by the constructions and the metrics.
//!
//! Everything is natural log, 64-bit. Tables are dense and square, indexed
//! `[row][col]` and stored row-major.

use crate::error::{Error, Result};

/// Probabilities below this are floored when tables are loaded.
pub const PROB_FLOOR: f64 = 1e-12;

/// Rows or columns of a joint with less mass than this cannot be conditioned on.
pub const MASS_FLOOR: f64 = 1e-300;

/// KL terms whose reference probability is below this are skipped.
pub const KL_SKIP: f64 = 1e-300;

pub fn log_prob_floor() -> f64 {
    PROB_FLOOR.ln()
}

/// `log(sum(exp(xs)))` with max-shift. Empty input and all `-inf` give `-inf`.
pub fn logsumexp(xs: &[f64]) -> f64 {
    logsumexp_iter(xs.iter().copied())
}

pub fn logsumexp_iter<I>(xs: I) -> f64
where
    I: IntoIterator<Item = f64> + Clone,
{
    let max = xs.clone().into_iter().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || !max.is_finite() {
        return max;
    }
    let sum: f64 = xs.into_iter().map(|x| (x - max).exp()).sum();
    max + sum.ln()
}

/// KL(p ‖ q) for log-probability vectors. Terms with `p < KL_SKIP` contribute nothing.
pub fn kl_log(log_p: &[f64], log_q: &[f64]) -> f64 {
    debug_assert_eq!(log_p.len(), log_q.len());
    log_p
        .iter()
        .zip(log_q)
        .filter(|(lp, _)| lp.exp() >= KL_SKIP)
        .map(|(&lp, &lq)| lp.exp() * (lp - lq))
        .sum()
}

/// A dense `n × n` table of reals.
#[derive(Clone, Debug, PartialEq)]
pub struct SquareTable {
    n: usize,
    data: Vec<f64>,
}

impl SquareTable {
    pub fn filled(n: usize, value: f64) -> Self {
        SquareTable {
            n,
            data: vec![value; n * n],
        }
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        SquareTable { n, data }
    }

    /// Builds a table from row-major data of length `n * n`.
    pub fn from_row_major(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::DimensionMismatch {
                what: "square table",
                expected: n * n,
                found: data.len(),
            });
        }
        Ok(SquareTable { n, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for row in rows {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    what: "table row",
                    expected: n,
                    found: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(SquareTable { n, data })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.n + j] = value;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, j)).collect()
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.n.max(1))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn transpose(&self) -> Self {
        SquareTable::from_fn(self.n, |i, j| self.get(j, i))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        SquareTable {
            n: self.n,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    /// Position and value of the first entry that is NaN or infinite.
    pub fn first_non_finite(&self) -> Option<(usize, usize, f64)> {
        self.data
            .iter()
            .position(|x| !x.is_finite())
            .map(|k| (k / self.n, k % self.n, self.data[k]))
    }

    pub fn max_abs_diff(&self, other: &SquareTable) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Normalizes a table of log-scores so that its entries exponentiate to a
/// distribution over all `n²` cells.
pub fn log_normalize(scores: &SquareTable) -> Result<SquareTable> {
    if let Some((row, col, value)) = scores.first_non_finite() {
        return Err(Error::NonFinite { row, col, value });
    }
    let z = logsumexp(scores.as_slice());
    Ok(scores.map(|x| x - z))
}

/// Normalizes a log-score vector in place. Returns the subtracted constant.
pub(crate) fn log_normalize_slice(xs: &mut [f64]) -> f64 {
    let z = logsumexp(xs);
    for x in xs.iter_mut() {
        *x -= z;
    }
    z
}

/// Floors log-probabilities at `log(PROB_FLOOR)` and renormalizes. Returns
/// how many entries were raised.
pub(crate) fn floor_and_renormalize(xs: &mut [f64]) -> usize {
    let floor = log_prob_floor();
    let mut raised = 0;
    for x in xs.iter_mut() {
        if *x < floor {
            *x = floor;
            raised += 1;
        }
    }
    log_normalize_slice(xs);
    raised
}
