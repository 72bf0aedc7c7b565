//! Browser bindings for exploring the joint constructions on small synthetic
//! instances. Every export returns a JSON string; the `*_value` functions
//! behind them are plain Rust and tested natively.

use pairjoint::compat::{check_compatibility, gen_synthetic, SyntheticInstance};
use pairjoint::constructions::{
    ag_joint, hcb_joint, hcb_pivot, mlm_joint, mrf_joint, AgConfig, Channel,
};
use pairjoint::{row_conditionals, Direction, JointTable, MarginalVector, Position, Result};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

/// Largest vocabulary the page offers; keeps pivot sweeps interactive.
pub const MAX_VOCAB: usize = 24;

fn instance(v: usize, seed: u64, concentration: f64, perturb: f64) -> Result<SyntheticInstance> {
    if v > MAX_VOCAB {
        return Err(pairjoint::Error::InvalidConfig(format!(
            "vocabulary size {v} exceeds {MAX_VOCAB}"
        )));
    }
    gen_synthetic(v, seed, concentration, perturb)
}

fn grid(joint: &JointTable) -> Vec<Vec<f64>> {
    joint.probs().rows().map(<[f64]>::to_vec).collect()
}

/// Mean KL from the given conditionals to those of `joint`, over all contexts
/// and both directions.
fn mean_conditional_kl(inst: &SyntheticInstance, joint: &JointTable) -> Result<f64> {
    let n = inst.vocab_size;
    let a = row_conditionals(joint, Direction::AGivenB)?;
    let b = row_conditionals(joint, Direction::BGivenA)?;
    let mut total = 0.0;
    for ctx in 0..n {
        total += pairjoint::numeric::kl_log(inst.cond_a_given_b.row(ctx), a.row(ctx));
        total += pairjoint::numeric::kl_log(inst.cond_b_given_a.row(ctx), b.row(ctx));
    }
    Ok(total / (2 * n) as f64)
}

pub fn explore_value(
    v: usize,
    seed: u64,
    concentration: f64,
    perturb: f64,
    ag_iters: usize,
) -> Result<Value> {
    let inst = instance(v, seed, concentration, perturb)?;
    let compat = check_compatibility(&inst.cond_a_given_b, &inst.cond_b_given_a, 1e-6)?;
    let marg_a = MarginalVector::new(Position::A, inst.true_joint.log_marginal(Position::A))?;
    let marg_b = MarginalVector::new(Position::B, inst.true_joint.log_marginal(Position::B))?;
    let mlm = mlm_joint(&marg_a, &marg_b)?;
    let mrf = mrf_joint(&inst.cond_a_given_b, &inst.cond_b_given_a, Channel::Probs)?;
    let hcb = hcb_joint(&inst.cond_a_given_b, &inst.cond_b_given_a, hcb_pivot(&mlm))?;
    let config = AgConfig {
        max_iterations: ag_iters.max(1),
        ..AgConfig::default()
    };
    let (ag, trace) = ag_joint(&inst.cond_a_given_b, &inst.cond_b_given_a, &config)?;

    let mut methods = Vec::new();
    for joint in [&mlm, &mrf, &hcb, &ag] {
        methods.push(json!({
            "method": joint.method().as_str(),
            "joint": grid(joint),
            "kl_from_truth": inst.true_joint.kl_to(joint),
            "conditional_kl": mean_conditional_kl(&inst, joint)?,
        }));
    }
    Ok(json!({
        "vocab_size": v,
        "truth": grid(&inst.true_joint),
        "compat": {
            "residual_max": compat.residual_max,
            "residual_frobenius": compat.residual_frobenius,
            "compatible": compat.compatible,
        },
        "hcb_pivot": hcb.pivot(),
        "ag_iterations": trace.iterations_run,
        "ag_converged": trace.converged,
        "methods": methods,
    }))
}

/// Objective and distance to the ground truth after each AG step.
pub fn ag_trajectory_value(
    v: usize,
    seed: u64,
    concentration: f64,
    perturb: f64,
    max_iters: usize,
) -> Result<Value> {
    let inst = instance(v, seed, concentration, perturb)?;
    let steps = max_iters.clamp(1, 200);
    let config = AgConfig {
        max_iterations: steps,
        convergence_tol: 0.0,
        track_objective: true,
    };
    let (_, trace) = ag_joint(&inst.cond_a_given_b, &inst.cond_b_given_a, &config)?;
    let mut kl = Vec::with_capacity(steps);
    for k in 1..=steps {
        let cfg = AgConfig {
            max_iterations: k,
            convergence_tol: 0.0,
            track_objective: false,
        };
        let (joint, _) = ag_joint(&inst.cond_a_given_b, &inst.cond_b_given_a, &cfg)?;
        kl.push(inst.true_joint.kl_to(&joint));
    }
    Ok(json!({
        "objective": trace.objective_values.unwrap_or_default(),
        "kl_from_truth": kl,
    }))
}

/// HCB's distance to the ground truth for every choice of pivot.
pub fn hcb_pivot_sweep_value(v: usize, seed: u64, concentration: f64, perturb: f64) -> Result<Value> {
    let inst = instance(v, seed, concentration, perturb)?;
    let mut kl = vec![vec![0.0; v]; v];
    for (pa, row) in kl.iter_mut().enumerate() {
        for (pb, cell) in row.iter_mut().enumerate() {
            let joint = hcb_joint(&inst.cond_a_given_b, &inst.cond_b_given_a, (pa, pb))?;
            *cell = inst.true_joint.kl_to(&joint);
        }
    }
    let spread = kl
        .iter()
        .flatten()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    Ok(json!({ "kl_from_truth": kl, "min": spread.0, "max": spread.1 }))
}

fn to_js(r: Result<Value>) -> std::result::Result<String, JsError> {
    r.map(|v| v.to_string()).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn explore(
    v: usize,
    seed: u32,
    concentration: f64,
    perturb: f64,
    ag_iters: usize,
) -> std::result::Result<String, JsError> {
    to_js(explore_value(v, seed.into(), concentration, perturb, ag_iters))
}

#[wasm_bindgen]
pub fn ag_trajectory(
    v: usize,
    seed: u32,
    concentration: f64,
    perturb: f64,
    max_iters: usize,
) -> std::result::Result<String, JsError> {
    to_js(ag_trajectory_value(v, seed.into(), concentration, perturb, max_iters))
}

#[wasm_bindgen]
pub fn hcb_pivot_sweep(
    v: usize,
    seed: u32,
    concentration: f64,
    perturb: f64,
) -> std::result::Result<String, JsError> {
    to_js(hcb_pivot_sweep_value(v, seed.into(), concentration, perturb))
}
