//! Language-model quality and faithfulness of a derived joint.
//!
//! Per example, with `q` the record's conditionals and `q'` those of the
//! derived joint:
//!
//! * pair log-probability `log q'(gold_a, gold_b)`;
//! * unary log-probabilities `log q'(gold_a | gold_b)` and `log q'(gold_b | gold_a)`;
//! * all-context KL, `Σ_{w'} KL(q_{a|b}(·|w') ‖ q'_{a|b}(·|w')) + (b|a analogue)`, divided by `2V`;
//! * gold-context KL, the same two KLs at `w' = gold_b` and `w' = gold_a`, halved.
//!
//! Dataset figures: `P-PPL = exp(-Σ log_pair / 2N)`, `U-PPL = exp(-Σ unary / 2N)`,
//! `A-KL` and `G-KL` are plain means of the per-example contributions.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::numeric::kl_log;
use crate::types::{row_conditionals, Direction, JointTable, Method, PairRecord};

#[derive(Clone, Debug, PartialEq)]
pub struct ExampleScores {
    pub example_id: String,
    pub method: Method,
    pub log_pair_prob: f64,
    /// `[log q'(gold_a | gold_b), log q'(gold_b | gold_a)]`.
    pub log_unary_probs: [f64; 2],
    pub akl_contrib: f64,
    pub gkl_contrib: f64,
    pub token_distance: usize,
    pub syntactic_distance: Option<u32>,
}

impl ExampleScores {
    /// Pairwise negative log-likelihood, `-½ log q'(gold pair)`.
    pub fn pnll(&self) -> f64 {
        -0.5 * self.log_pair_prob
    }
}

pub fn score_example(
    record: &PairRecord,
    joint: &JointTable,
    use_original_unaries: bool,
) -> Result<ExampleScores> {
    let n = record.vocab_size();
    if joint.vocab_size() != n {
        return Err(Error::DimensionMismatch {
            what: "record vs joint",
            expected: n,
            found: joint.vocab_size(),
        });
    }
    if use_original_unaries && joint.method() != Method::Mlm {
        return Err(Error::MethodFlagMismatch(joint.method()));
    }
    let (ga, gb) = (record.gold_a, record.gold_b);
    let derived_a = row_conditionals(joint, Direction::AGivenB)?;
    let derived_b = row_conditionals(joint, Direction::BGivenA)?;

    let log_unary_probs = if use_original_unaries {
        [
            record.cond_a_given_b.log_prob(ga, gb),
            record.cond_b_given_a.log_prob(gb, ga),
        ]
    } else {
        [derived_a.log_prob(ga, gb), derived_b.log_prob(gb, ga)]
    };

    let mut all_contexts = 0.0;
    for ctx in 0..n {
        all_contexts += kl_log(record.cond_a_given_b.row(ctx), derived_a.row(ctx));
        all_contexts += kl_log(record.cond_b_given_a.row(ctx), derived_b.row(ctx));
    }
    let gold = kl_log(record.cond_a_given_b.row(gb), derived_a.row(gb))
        + kl_log(record.cond_b_given_a.row(ga), derived_b.row(ga));

    Ok(ExampleScores {
        example_id: record.example_id.clone(),
        method: joint.method(),
        log_pair_prob: joint.log_prob(ga, gb).min(0.0),
        log_unary_probs: log_unary_probs.map(|x| x.min(0.0)),
        akl_contrib: (all_contexts / (2 * n) as f64).max(0.0),
        gkl_contrib: (gold / 2.0).max(0.0),
        token_distance: record.token_distance(),
        syntactic_distance: record.syntactic_distance,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DistanceKind {
    Token,
    Syntactic,
}

impl DistanceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DistanceKind::Token => "token",
            DistanceKind::Syntactic => "syntactic",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BucketStats {
    pub count: usize,
    pub mean_pnll: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub method: Method,
    pub n_examples: usize,
    pub u_ppl: f64,
    pub p_ppl: f64,
    pub a_kl: f64,
    pub g_kl: f64,
    /// Keyed by exact token distance.
    pub per_bucket: BTreeMap<usize, BucketStats>,
}

/// Sorts by example id so that summation order, and therefore every bit of
/// the report, does not depend on input order.
fn ordered(scores: &[ExampleScores]) -> Vec<&ExampleScores> {
    let mut v: Vec<&ExampleScores> = scores.iter().collect();
    v.sort_by(|x, y| {
        x.example_id
            .cmp(&y.example_id)
            .then(x.log_pair_prob.total_cmp(&y.log_pair_prob))
            .then(x.akl_contrib.total_cmp(&y.akl_contrib))
    });
    v
}

pub fn aggregate(scores: &[ExampleScores]) -> Result<MetricsReport> {
    let first = scores.first().ok_or(Error::EmptyScores)?;
    let method = first.method;
    if let Some(other) = scores.iter().find(|s| s.method != method) {
        return Err(Error::MixedMethods(method, other.method));
    }
    let ordered = ordered(scores);
    let n = ordered.len() as f64;
    let mut pair = 0.0;
    let mut unary = 0.0;
    let mut akl = 0.0;
    let mut gkl = 0.0;
    for s in &ordered {
        pair += s.log_pair_prob;
        unary += s.log_unary_probs[0] + s.log_unary_probs[1];
        akl += s.akl_contrib;
        gkl += s.gkl_contrib;
    }
    let per_bucket = bucketize(&ordered, |s| Some(s.token_distance));
    Ok(MetricsReport {
        method,
        n_examples: ordered.len(),
        u_ppl: (-unary / (2.0 * n)).exp(),
        p_ppl: (-pair / (2.0 * n)).exp(),
        a_kl: akl / n,
        g_kl: gkl / n,
        per_bucket,
    })
}

fn bucketize(
    ordered: &[&ExampleScores],
    key: impl Fn(&ExampleScores) -> Option<usize>,
) -> BTreeMap<usize, BucketStats> {
    let mut sums: BTreeMap<usize, (usize, f64)> = BTreeMap::new();
    for s in ordered {
        if let Some(d) = key(s) {
            let e = sums.entry(d).or_insert((0, 0.0));
            e.0 += 1;
            e.1 += s.pnll();
        }
    }
    sums.into_iter()
        .map(|(d, (count, total))| {
            (
                d,
                BucketStats {
                    count,
                    mean_pnll: total / count as f64,
                },
            )
        })
        .collect()
}

/// One bucket of a distance analysis. `open_ended` marks a merged tail
/// covering every distance `>= distance`.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceRow {
    pub method: Method,
    pub distance: usize,
    pub open_ended: bool,
    pub count: usize,
    pub mean_pnll: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DistanceTable {
    pub kind: DistanceKind,
    pub rows: Vec<DistanceRow>,
}

/// Buckets scores by exact integer distance, per method.
pub fn distance_analysis(scores: &[ExampleScores], kind: DistanceKind) -> Result<DistanceTable> {
    if kind == DistanceKind::Syntactic {
        if let Some(s) = scores.iter().find(|s| s.syntactic_distance.is_none()) {
            return Err(Error::MissingSyntacticDistance(s.example_id.clone()));
        }
    }
    let mut by_method: BTreeMap<Method, Vec<&ExampleScores>> = BTreeMap::new();
    for s in ordered(scores) {
        by_method.entry(s.method).or_default().push(s);
    }
    let mut rows = Vec::new();
    for (method, group) in by_method {
        let buckets = match kind {
            DistanceKind::Token => bucketize(&group, |s| Some(s.token_distance)),
            DistanceKind::Syntactic => {
                bucketize(&group, |s| s.syntactic_distance.map(|d| d as usize))
            }
        };
        rows.extend(buckets.into_iter().map(|(distance, b)| DistanceRow {
            method,
            distance,
            open_ended: false,
            count: b.count,
            mean_pnll: b.mean_pnll,
        }));
    }
    Ok(DistanceTable { kind, rows })
}

impl DistanceTable {
    /// Merges trailing buckets of each method, from the largest distance
    /// downward, until the merged bucket holds at least `min_count` examples.
    pub fn merge_tail(&self, min_count: usize) -> DistanceTable {
        let mut rows = Vec::with_capacity(self.rows.len());
        let mut start = 0;
        while start < self.rows.len() {
            let method = self.rows[start].method;
            let end = self.rows[start..]
                .iter()
                .position(|r| r.method != method)
                .map_or(self.rows.len(), |k| start + k);
            let group = &self.rows[start..end];
            let mut cut = group.len();
            let mut count = 0;
            while cut > 0 && count < min_count {
                cut -= 1;
                count += group[cut].count;
            }
            rows.extend_from_slice(&group[..cut]);
            let tail = &group[cut..];
            if tail.len() == 1 {
                rows.push(tail[0].clone());
            } else if !tail.is_empty() {
                let total: f64 = tail.iter().map(|r| r.mean_pnll * r.count as f64).sum();
                rows.push(DistanceRow {
                    method,
                    distance: tail[0].distance,
                    open_ended: true,
                    count,
                    mean_pnll: total / count as f64,
                });
            }
            start = end;
        }
        DistanceTable {
            kind: self.kind,
            rows,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scores(id: &str, method: Method, log_pair: f64, distance: usize) -> ExampleScores {
        ExampleScores {
            example_id: id.into(),
            method,
            log_pair_prob: log_pair,
            log_unary_probs: [log_pair / 2.0, log_pair / 2.0],
            akl_contrib: 0.1,
            gkl_contrib: 0.2,
            token_distance: distance,
            syntactic_distance: Some(distance as u32),
        }
    }

    #[test]
    fn pair_perplexity_definition() {
        let s = scores("x", Method::Ag, -2.0 * 10f64.ln(), 1);
        let r = aggregate(&[s]).unwrap();
        assert!((r.p_ppl - 10.0).abs() < 1e-12);
        assert!((r.u_ppl - 10.0).abs() < 1e-12);
        let mut s = scores("x", Method::Ag, -2.0 * 10f64.ln(), 1);
        s.log_unary_probs = [-0.5 * 10f64.ln(); 2];
        let r = aggregate(&[s]).unwrap();
        assert!((r.u_ppl - 10f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn copies_do_not_change_report() {
        let s = scores("x", Method::Hcb, -3.1, 2);
        let one = aggregate(std::slice::from_ref(&s)).unwrap();
        let many = aggregate(&vec![s; 7]).unwrap();
        assert!((one.p_ppl - many.p_ppl).abs() < 1e-12);
        assert!((one.u_ppl - many.u_ppl).abs() < 1e-12);
        assert!((one.a_kl - many.a_kl).abs() < 1e-12);
        assert!((one.g_kl - many.g_kl).abs() < 1e-12);
        assert_eq!(many.n_examples, 7);
        assert_eq!(many.per_bucket[&2].count, 7);
    }

    #[test]
    fn aggregate_errors() {
        assert!(matches!(aggregate(&[]), Err(Error::EmptyScores)));
        let mixed = [scores("x", Method::Hcb, -1.0, 1), scores("y", Method::Ag, -1.0, 1)];
        assert!(matches!(
            aggregate(&mixed),
            Err(Error::MixedMethods(Method::Hcb, Method::Ag))
        ));
    }

    #[test]
    fn single_distance_single_bucket() {
        let all: Vec<_> = (0..4)
            .map(|k| scores(&k.to_string(), Method::Mrf, -1.0 - k as f64, 1))
            .collect();
        let t = distance_analysis(&all, DistanceKind::Token).unwrap();
        assert_eq!(t.rows.len(), 1);
        assert_eq!(t.rows[0].count, 4);
        assert!((t.rows[0].mean_pnll - 0.5 * 2.5).abs() < 1e-12);
    }

    #[test]
    fn bucket_counts_are_histogram() {
        let ds = [1, 3, 1, 2, 3, 3, 7];
        let all: Vec<_> = ds
            .iter()
            .enumerate()
            .map(|(k, &d)| scores(&format!("{k:02}"), Method::Ag, -1.0, d))
            .collect();
        let t = distance_analysis(&all, DistanceKind::Token).unwrap();
        let got: Vec<(usize, usize)> = t.rows.iter().map(|r| (r.distance, r.count)).collect();
        assert_eq!(got, vec![(1, 2), (2, 1), (3, 3), (7, 1)]);

        let merged = t.merge_tail(4);
        let got: Vec<(usize, usize, bool)> = merged
            .rows
            .iter()
            .map(|r| (r.distance, r.count, r.open_ended))
            .collect();
        assert_eq!(got, vec![(1, 2, false), (2, 1, false), (3, 4, true)]);
    }

    #[test]
    fn syntactic_requires_field() {
        let mut s = scores("x", Method::Ag, -1.0, 1);
        s.syntactic_distance = None;
        assert!(matches!(
            distance_analysis(&[s], DistanceKind::Syntactic),
            Err(Error::MissingSyntacticDistance(_))
        ));
    }

    #[test]
    fn report_is_order_invariant() {
        let all: Vec<_> = (0..9)
            .map(|k| scores(&format!("e{k}"), Method::Ag, -0.3 * (k as f64 + 1.0), k % 3 + 1))
            .collect();
        let mut rev = all.clone();
        rev.reverse();
        assert_eq!(aggregate(&all).unwrap(), aggregate(&rev).unwrap());
    }
}
