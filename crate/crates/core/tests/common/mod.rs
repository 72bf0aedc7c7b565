#![allow(dead_code)]

use pairjoint::compat::SyntheticInstance;
use pairjoint::{
    ConditionalTable, JointTable, MarginalVector, Method, PairRecord, Position, Scheme,
    SquareTable,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A normalized log-probability row from Gaussian scores of the given scale.
pub fn random_log_row(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    let scores: Vec<f64> = (0..n)
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = scores.iter().map(|s| (s - max).exp()).sum();
    scores.iter().map(|s| s - max - z.ln()).collect()
}

pub fn random_conditional(
    rng: &mut ChaCha8Rng,
    target: Position,
    n: usize,
    scale: f64,
    with_logits: bool,
) -> ConditionalTable {
    let rows: Vec<Vec<f64>> = (0..n).map(|_| random_log_row(rng, n, scale)).collect();
    let log_probs = SquareTable::from_rows(&rows).unwrap();
    let logits = with_logits.then(|| {
        let shift: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        SquareTable::from_fn(n, |c, t| log_probs.get(c, t) + shift[c])
    });
    ConditionalTable::new(target, log_probs, logits).unwrap()
}

fn sentence(pos_a: usize, pos_b: usize) -> Vec<u32> {
    let mut s: Vec<u32> = (0..pos_b as u32 + 2).map(|t| t % 7).collect();
    s[pos_a] = u32::MAX;
    s[pos_b] = u32::MAX;
    s
}

/// A record with independent random conditionals and marginals (generally incompatible).
pub fn random_record(rng: &mut ChaCha8Rng, id: &str, n: usize, scale: f64) -> PairRecord {
    let pos_a = rng.random_range(0..4);
    let pos_b = pos_a + rng.random_range(1..6);
    PairRecord {
        example_id: id.to_string(),
        sentence: sentence(pos_a, pos_b),
        pos_a,
        pos_b,
        gold_a: rng.random_range(0..n),
        gold_b: rng.random_range(0..n),
        scheme: Scheme::RandomPairs,
        cond_a_given_b: random_conditional(rng, Position::A, n, scale, true),
        cond_b_given_a: random_conditional(rng, Position::B, n, scale, true),
        marg_a: MarginalVector::new(Position::A, random_log_row(rng, n, scale)).unwrap(),
        marg_b: MarginalVector::new(Position::B, random_log_row(rng, n, scale)).unwrap(),
        syntactic_distance: Some(rng.random_range(1..5)),
    }
}

/// A record carrying a synthetic instance's exact conditionals and marginals.
pub fn instance_record(rng: &mut ChaCha8Rng, id: &str, inst: &SyntheticInstance) -> PairRecord {
    let n = inst.vocab_size;
    let pos_b = 1 + rng.random_range(1..4);
    PairRecord {
        example_id: id.to_string(),
        sentence: sentence(1, pos_b),
        pos_a: 1,
        pos_b,
        gold_a: rng.random_range(0..n),
        gold_b: rng.random_range(0..n),
        scheme: Scheme::Synthetic,
        cond_a_given_b: inst.cond_a_given_b.clone(),
        cond_b_given_a: inst.cond_b_given_a.clone(),
        marg_a: MarginalVector::new(Position::A, inst.true_joint.log_marginal(Position::A))
            .unwrap(),
        marg_b: MarginalVector::new(Position::B, inst.true_joint.log_marginal(Position::B))
            .unwrap(),
        syntactic_distance: None,
    }
}

/// Corpus metrics computed directly in probability space with explicit loops:
/// `[u_ppl, p_ppl, a_kl, g_kl]`.
pub fn oracle_metrics(records: &[PairRecord], joints: &[JointTable]) -> [f64; 4] {
    let big_n = records.len() as f64;
    let (mut pair, mut unary, mut akl, mut gkl) = (0.0, 0.0, 0.0, 0.0);
    for (r, joint) in records.iter().zip(joints) {
        let n = r.vocab_size();
        let p = |i: usize, j: usize| joint.log_prob(i, j).exp();
        // a | b: column-normalize; b | a: row-normalize.
        let q_a = |i: usize, j: usize| p(i, j) / (0..n).map(|k| p(k, j)).sum::<f64>();
        let q_b = |j: usize, i: usize| p(i, j) / (0..n).map(|k| p(i, k)).sum::<f64>();
        let m_a = |i: usize, j: usize| r.cond_a_given_b.log_prob(i, j).exp();
        let m_b = |j: usize, i: usize| r.cond_b_given_a.log_prob(j, i).exp();
        let (ga, gb) = (r.gold_a, r.gold_b);

        pair += p(ga, gb).ln();
        if joint.method() == Method::Mlm {
            unary += m_a(ga, gb).ln() + m_b(gb, ga).ln();
        } else {
            unary += q_a(ga, gb).ln() + q_b(gb, ga).ln();
        }
        let kl_a = |j: usize| -> f64 {
            (0..n).map(|i| m_a(i, j) * (m_a(i, j) / q_a(i, j)).ln()).sum()
        };
        let kl_b = |i: usize| -> f64 {
            (0..n).map(|j| m_b(j, i) * (m_b(j, i) / q_b(j, i)).ln()).sum()
        };
        let mut total = 0.0;
        for w in 0..n {
            total += kl_a(w) + kl_b(w);
        }
        akl += total / (2.0 * n as f64);
        gkl += (kl_a(gb) + kl_b(ga)) / 2.0;
    }
    [
        (-unary / (2.0 * big_n)).exp(),
        (-pair / (2.0 * big_n)).exp(),
        akl / big_n,
        gkl / big_n,
    ]
}
