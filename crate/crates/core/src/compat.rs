//! Compatibility of a pair of conditionals, plus seeded synthetic instances
//! with known ground truth.
//!
//! Two strictly positive conditionals `q_{a|b}` and `q_{b|a}` are compatible
//! iff the log-ratio `M(i, j) = log q_{a|b}(i | j) - log q_{b|a}(j | i)`
//! splits as `f(i) + g(j)`. The checker double-centers `M` and reports the
//! size of what remains.
//!
//! Synthetic instances draw their joint from a symmetric Dirichlet using
//! ChaCha8 (`rand_chacha::ChaCha8Rng::seed_from_u64`) and Marsaglia–Tsang
//! gamma variates (`rand_distr::Gamma`). Draw order is fixed: `V²` gamma
//! variates in row-major order, then, when perturbing, one uniform per
//! entry of the `a|b` table followed by the `b|a` table, each row-major in
//! `[context][target]` order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

use crate::error::{Error, Result};
use crate::numeric::{log_normalize_slice, SquareTable, PROB_FLOOR};
use crate::types::{row_conditionals, ConditionalTable, Direction, JointTable, Method, Position};

#[derive(Clone, Debug, PartialEq)]
pub struct CompatReport {
    pub residual_max: f64,
    pub residual_frobenius: f64,
    pub compatible: bool,
}

pub fn check_compatibility(
    cond_a_given_b: &ConditionalTable,
    cond_b_given_a: &ConditionalTable,
    tolerance: f64,
) -> Result<CompatReport> {
    if !(tolerance >= 0.0) {
        return Err(Error::InvalidTolerance(tolerance));
    }
    let n = cond_a_given_b.vocab_size();
    if cond_b_given_a.vocab_size() != n {
        return Err(Error::DimensionMismatch {
            what: "conditional tables",
            expected: n,
            found: cond_b_given_a.vocab_size(),
        });
    }
    let m = SquareTable::from_fn(n, |i, j| {
        cond_a_given_b.log_prob(i, j) - cond_b_given_a.log_prob(j, i)
    });
    let nf = n as f64;
    let row_mean: Vec<f64> = m.rows().map(|r| r.iter().sum::<f64>() / nf).collect();
    let col_mean: Vec<f64> = (0..n)
        .map(|j| (0..n).map(|i| m.get(i, j)).sum::<f64>() / nf)
        .collect();
    let grand = row_mean.iter().sum::<f64>() / nf;

    let mut residual_max: f64 = 0.0;
    let mut sq = 0.0;
    for i in 0..n {
        for j in 0..n {
            let r = m.get(i, j) - row_mean[i] - col_mean[j] + grand;
            residual_max = residual_max.max(r.abs());
            sq += r * r;
        }
    }
    Ok(CompatReport {
        residual_max,
        residual_frobenius: sq.sqrt(),
        compatible: residual_max <= tolerance,
    })
}

/// A ground-truth joint together with its (possibly perturbed) conditionals.
#[derive(Clone, Debug)]
pub struct SyntheticInstance {
    pub vocab_size: usize,
    pub true_joint: JointTable,
    pub cond_a_given_b: ConditionalTable,
    pub cond_b_given_a: ConditionalTable,
    pub perturbed: bool,
    pub seed: u64,
}

pub fn gen_synthetic(
    vocab_size: usize,
    seed: u64,
    concentration: f64,
    perturb_scale: f64,
) -> Result<SyntheticInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    gen_synthetic_with(&mut rng, vocab_size, seed, concentration, perturb_scale)
}

/// Same as [`gen_synthetic`] but continues an existing generator, leaving it
/// positioned after the instance's draws.
pub fn gen_synthetic_with(
    rng: &mut ChaCha8Rng,
    vocab_size: usize,
    seed: u64,
    concentration: f64,
    perturb_scale: f64,
) -> Result<SyntheticInstance> {
    if vocab_size < 2 {
        return Err(Error::VocabTooSmall(vocab_size));
    }
    if !(concentration > 0.0 && concentration.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "concentration must be positive, got {concentration}"
        )));
    }
    if !(perturb_scale >= 0.0 && perturb_scale.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "perturbation scale must be non-negative, got {perturb_scale}"
        )));
    }
    let gamma = Gamma::new(concentration, 1.0)
        .map_err(|e| Error::InvalidConfig(format!("gamma distribution: {e}")))?;
    let n = vocab_size;
    let mut cells: Vec<f64> = (0..n * n).map(|_| gamma.sample(rng)).collect();
    let total: f64 = cells.iter().sum();
    // Keeping every cell at or above the floor keeps the exact conditionals
    // clear of the load-time flooring.
    for c in cells.iter_mut() {
        *c = (*c / total).max(PROB_FLOOR);
    }
    let scores = SquareTable::from_row_major(n, cells.iter().map(|c| c.ln()).collect())?;
    let true_joint = JointTable::from_log_scores(Method::Mlm, &scores)?;
    let mut cond_a_given_b = row_conditionals(&true_joint, Direction::AGivenB)?;
    let mut cond_b_given_a = row_conditionals(&true_joint, Direction::BGivenA)?;

    let perturbed = perturb_scale > 0.0;
    if perturbed {
        cond_a_given_b = perturb(rng, &cond_a_given_b, perturb_scale)?;
        cond_b_given_a = perturb(rng, &cond_b_given_a, perturb_scale)?;
    }
    Ok(SyntheticInstance {
        vocab_size,
        true_joint,
        cond_a_given_b,
        cond_b_given_a,
        perturbed,
        seed,
    })
}

fn perturb(rng: &mut ChaCha8Rng, table: &ConditionalTable, scale: f64) -> Result<ConditionalTable> {
    let n = table.vocab_size();
    let mut out = table.log_probs().clone();
    for ctx in 0..n {
        let row = out.row_mut(ctx);
        for x in row.iter_mut() {
            *x += rng.random_range(-scale..=scale);
        }
        log_normalize_slice(row);
    }
    ConditionalTable::new(table.target(), out, None)
}

/// Two-token instance whose conditionals are compatible yet whose MRF
/// joint has unfaithful conditionals.
#[derive(Clone, Debug)]
pub struct UnfaithfulMrfFixture {
    /// `[[0.97, 0.01], [0.01, 0.01]]`, token 0 = "a", token 1 = "b".
    pub true_joint: JointTable,
    pub cond_a_given_b: ConditionalTable,
    pub cond_b_given_a: ConditionalTable,
    /// Closed form of KL(p_{a|b}(· | b) ‖ q^MRF_{a|b}(· | b)):
    /// `log(1/196 + 1/4) - ½ log(1/196)`.
    pub expected_kl: f64,
}

pub fn unfaithful_mrf_fixture() -> UnfaithfulMrfFixture {
    let true_joint = JointTable::from_probs(Method::Mlm, &[vec![0.97, 0.01], vec![0.01, 0.01]])
        .expect("fixture joint is valid");
    // Conditionals are symmetric: (97/98, 1/98) given a, (1/2, 1/2) given b.
    let rows = [vec![97.0 / 98.0, 1.0 / 98.0], vec![0.5, 0.5]];
    let cond_a_given_b =
        ConditionalTable::from_probs(Position::A, &rows).expect("fixture conditional is valid");
    let cond_b_given_a =
        ConditionalTable::from_probs(Position::B, &rows).expect("fixture conditional is valid");
    let expected_kl = (1.0f64 / 196.0 + 0.25).ln() - 0.5 * (1.0f64 / 196.0).ln();
    UnfaithfulMrfFixture {
        true_joint,
        cond_a_given_b,
        cond_b_given_a,
        expected_kl,
    }
}
