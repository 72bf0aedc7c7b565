//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;

use common::{instance_record, oracle_metrics, random_record, rng};
use pairjoint::compat::{check_compatibility, gen_synthetic, unfaithful_mrf_fixture};
use pairjoint::constructions::{
    ag_joint, derive_joint, hcb_joint, mlm_joint, mrf_joint, AgConfig, Channel,
};
use pairjoint::io::{EncodeOptions, RecordFile};
use pairjoint::metrics::{aggregate, score_example};
use pairjoint::{row_conditionals, Direction, JointTable, Method, PairRecord};
use rand::Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn instances() -> Vec<pairjoint::compat::SyntheticInstance> {
    (0..200u64)
        .map(|k| gen_synthetic(2 + (k as usize % 19), 10_000 + k, 1.0, 0.0).unwrap())
        .collect()
}

fn hcb_recovery() -> Outcome {
    let mut r = rng(1);
    let mut worst: f64 = 0.0;
    for inst in instances() {
        let n = inst.vocab_size;
        let truth = inst.true_joint.probs();
        for _ in 0..3 {
            let pivot = (r.random_range(0..n), r.random_range(0..n));
            let joint = hcb_joint(&inst.cond_a_given_b, &inst.cond_b_given_a, pivot)
                .map_err(|e| e.to_string())?;
            worst = worst.max(joint.probs().max_abs_diff(&truth));
        }
    }
    let detail = format!("600 reconstructions, max-abs error {worst:.3e}");
    if worst < 1e-9 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn ag_recovery() -> Outcome {
    let config = AgConfig {
        track_objective: true,
        ..AgConfig::default()
    };
    let mut worst_kl: f64 = 0.0;
    let mut worst_rise: f64 = f64::NEG_INFINITY;
    let mut failing = Vec::new();
    for inst in instances() {
        let (joint, trace) = ag_joint(&inst.cond_a_given_b, &inst.cond_b_given_a, &config)
            .map_err(|e| e.to_string())?;
        let kl = inst.true_joint.kl_to(&joint);
        if kl >= 1e-6 {
            failing.push(format!("V={} seed={} KL={kl:.2e}", inst.vocab_size, inst.seed));
        }
        worst_kl = worst_kl.max(kl);
        let obj = trace.objective_values.unwrap_or_default();
        for w in obj.windows(2) {
            worst_rise = worst_rise.max(w[1] - w[0]);
        }
    }
    let detail = format!(
        "200 instances, max KL {worst_kl:.3e}, largest objective step {worst_rise:.3e}"
    );
    if !failing.is_empty() {
        return Err(format!("{detail}; over 1e-6: {}", failing.join(", ")));
    }
    if worst_rise > 1e-9 {
        return Err(detail);
    }
    Ok(detail)
}

fn unfaithful_mrf() -> Outcome {
    let f = unfaithful_mrf_fixture();
    let joint = mrf_joint(&f.cond_a_given_b, &f.cond_b_given_a, Channel::Probs)
        .map_err(|e| e.to_string())?;
    let derived = row_conditionals(&joint, Direction::AGivenB).map_err(|e| e.to_string())?;
    // KL between the given and the MRF-derived a|b conditional at context b = 1.
    let p: Vec<f64> = (0..2).map(|i| f.cond_a_given_b.log_prob(i, 1).exp()).collect();
    let q: Vec<f64> = (0..2).map(|i| derived.log_prob(i, 1).exp()).collect();
    let kl: f64 = (0..2).map(|i| p[i] * (p[i] / q[i]).ln()).sum();
    let closed = (1.0f64 / 196.0 + 0.25).ln() - 0.5 * (1.0f64 / 196.0).ln();
    let detail = format!("KL {kl:.6}, closed form {closed:.6}");
    if (kl - 1.27297).abs() < 1e-3 && (kl - closed).abs() < 1e-9 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn fuzz_records() -> Vec<PairRecord> {
    let mut r = rng(2);
    (0..1000)
        .map(|k| {
            let n = r.random_range(2..=32);
            let scale = [0.1, 1.0, 4.0, 12.0][k % 4];
            random_record(&mut r, &format!("fz-{k}"), n, scale)
        })
        .collect()
}

fn normalization() -> Outcome {
    let ag = AgConfig::default();
    let mut worst: f64 = 0.0;
    for rec in fuzz_records() {
        for m in Method::ALL {
            let joint = derive_joint(&rec, m, &ag).map_err(|e| format!("{}: {e}", rec.example_id))?;
            let total: f64 = joint.log_joint().as_slice().iter().map(|x| x.exp()).sum();
            worst = worst.max((total - 1.0).abs());
        }
    }
    let detail = format!("1000 inputs × 5 constructions, max |Σ−1| {worst:.3e}");
    if worst <= 1e-9 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn faithfulness_zero_point() -> Outcome {
    let mut r = rng(3);
    let records: Vec<PairRecord> = (0..100u64)
        .map(|k| {
            let inst = gen_synthetic(2 + (k as usize % 9), 20_000 + k, 1.0, 0.0).unwrap();
            instance_record(&mut r, &format!("c-{k}"), &inst)
        })
        .collect();
    let ag = AgConfig::default();
    let mut parts = Vec::new();
    let mut ok = true;
    for m in [Method::Hcb, Method::Ag] {
        let scores = records
            .iter()
            .map(|rec| score_example(rec, &derive_joint(rec, m, &ag)?, false))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| e.to_string())?;
        let report = aggregate(&scores).map_err(|e| e.to_string())?;
        ok &= report.a_kl < 1e-6 && report.g_kl < 1e-6;
        parts.push(format!("{m}: A-KL {:.2e} G-KL {:.2e}", report.a_kl, report.g_kl));
    }
    let detail = parts.join(", ");
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn mlm_independence() -> Outcome {
    let mut worst: f64 = 0.0;
    for rec in fuzz_records() {
        let joint = mlm_joint(&rec.marg_a, &rec.marg_b).map_err(|e| e.to_string())?;
        let n = rec.vocab_size();
        let a = row_conditionals(&joint, Direction::AGivenB).map_err(|e| e.to_string())?;
        let b = row_conditionals(&joint, Direction::BGivenA).map_err(|e| e.to_string())?;
        for ctx in 0..n {
            for t in 0..n {
                worst = worst.max((a.log_prob(t, ctx).exp() - rec.marg_a.log_probs()[t].exp()).abs());
                worst = worst.max((b.log_prob(t, ctx).exp() - rec.marg_b.log_probs()[t].exp()).abs());
            }
        }
    }
    let detail = format!("1000 records, max deviation {worst:.3e}");
    if worst <= 1e-12 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn metric_oracle() -> Outcome {
    let mut r = rng(4);
    let records: Vec<PairRecord> = (0..50)
        .map(|k| {
            let n = r.random_range(2..=5);
            random_record(&mut r, &format!("m-{k}"), n, 1.5)
        })
        .collect();
    let ag = AgConfig::default();
    let mut worst: f64 = 0.0;
    for m in Method::ALL {
        let joints: Vec<JointTable> = records
            .iter()
            .map(|rec| derive_joint(rec, m, &ag))
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        let scores = records
            .iter()
            .zip(&joints)
            .map(|(rec, j)| score_example(rec, j, m == Method::Mlm))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| e.to_string())?;
        let got = aggregate(&scores).map_err(|e| e.to_string())?;
        let want = oracle_metrics(&records, &joints);
        for (g, w) in [got.u_ppl, got.p_ppl, got.a_kl, got.g_kl].iter().zip(want) {
            worst = worst.max((g - w).abs());
        }
    }
    let detail = format!("50 records × 5 constructions × 4 metrics, max deviation {worst:.3e}");
    if worst <= 1e-10 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn compatibility_checker() -> Outcome {
    let mut false_incompatible = 0;
    for k in 0..500u64 {
        let inst = gen_synthetic(2 + (k as usize % 19), 30_000 + k, 1.0, 0.0).unwrap();
        let rep = check_compatibility(&inst.cond_a_given_b, &inst.cond_b_given_a, 1e-9)
            .map_err(|e| e.to_string())?;
        false_incompatible += usize::from(!rep.compatible);
    }
    let mut detected = 0;
    for k in 0..500u64 {
        let inst = gen_synthetic(2 + (k as usize % 19), 40_000 + k, 1.0, 0.5).unwrap();
        let rep = check_compatibility(&inst.cond_a_given_b, &inst.cond_b_given_a, 1e-6)
            .map_err(|e| e.to_string())?;
        detected += usize::from(!rep.compatible);
    }
    let detail = format!(
        "false-incompatible {false_incompatible}/500, detected {detected}/500 perturbed"
    );
    if false_incompatible == 0 && detected * 100 >= 95 * 500 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn format_round_trip() -> Outcome {
    let mut r = rng(5);
    let mut top_k_files = 0;
    for k in 0..100 {
        let n = r.random_range(2..=12);
        let count = r.random_range(1..=4);
        let with_logits = r.random_bool(0.5);
        let with_syntactic = r.random_bool(0.5);
        let top_k = r.random_bool(0.4).then(|| r.random_range(1..=n));
        top_k_files += usize::from(top_k.is_some());
        let records: Vec<PairRecord> = (0..count)
            .map(|i| {
                let mut rec = random_record(&mut r, &format!("f{k}-{i}"), n, 2.0);
                if !with_logits {
                    rec.cond_a_given_b = strip_logits(&rec.cond_a_given_b);
                    rec.cond_b_given_a = strip_logits(&rec.cond_b_given_a);
                }
                if !with_syntactic {
                    rec.syntactic_distance = None;
                }
                rec
            })
            .collect();
        let file = RecordFile::encode(
            &records,
            &EncodeOptions {
                model_label: format!("model-{k}"),
                top_k,
            },
        )
        .map_err(|e| e.to_string())?;
        let bytes = file.to_bytes().map_err(|e| e.to_string())?;
        let back = RecordFile::from_bytes(&bytes).map_err(|e| format!("file {k}: {e}"))?;
        if back.to_bytes().map_err(|e| e.to_string())? != bytes || back != file {
            return Err(format!("file {k} changed on rewrite"));
        }
        back.decode(pairjoint::io::Validation::Strict)
            .map_err(|e| format!("file {k} does not decode: {e}"))?;
    }
    Ok(format!("100 files ({top_k_files} top-K) byte-identical"))
}

fn strip_logits(t: &pairjoint::ConditionalTable) -> pairjoint::ConditionalTable {
    pairjoint::ConditionalTable::new(t.target(), t.log_probs().clone(), None).unwrap()
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("hcb recovers the true joint for any pivot", hcb_recovery),
        ("ag recovers compatible joints within 50 iterations", ag_recovery),
        ("mrf joint of the two-token fixture is unfaithful", unfaithful_mrf),
        ("all constructions return normalized joints", normalization),
        ("hcb and ag are faithful on compatible data", faithfulness_zero_point),
        ("mlm joint has context-independent conditionals", mlm_independence),
        ("metrics match a brute-force oracle", metric_oracle),
        ("compatibility checker accuracy", compatibility_checker),
        ("record files round-trip byte-identically", format_round_trip),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(f))
            .unwrap_or_else(|_| Err("panicked".to_string()));
        match outcome {
            Ok(d) => println!("PASS  {name}: {d}"),
            Err(d) => {
                failed += 1;
                println!("FAIL  {name}: {d}");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
