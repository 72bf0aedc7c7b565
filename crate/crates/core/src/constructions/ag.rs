use crate::error::{Error, Result};
use crate::numeric::{kl_log, SquareTable};
use crate::types::{row_conditionals, ConditionalTable, Direction, JointTable, Method};

/// Marginals of the iterate are floored here before taking reciprocals.
const MARGINAL_FLOOR: f64 = 1e-30;

#[derive(Clone, Debug, PartialEq)]
pub struct AgConfig {
    pub max_iterations: usize,
    /// Stop once the largest absolute change of any joint entry falls below this.
    pub convergence_tol: f64,
    pub track_objective: bool,
}

impl Default for AgConfig {
    fn default() -> Self {
        AgConfig {
            max_iterations: 50,
            convergence_tol: 1e-10,
            track_objective: false,
        }
    }
}

impl AgConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::InvalidConfig(
                "max_iterations must be at least 1".into(),
            ));
        }
        if !(self.convergence_tol >= 0.0) {
            return Err(Error::InvalidTolerance(self.convergence_tol));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AgTrace {
    pub iterations_run: usize,
    /// Objective of the uniform start followed by one value per iteration.
    pub objective_values: Option<Vec<f64>>,
    pub converged: bool,
}

/// Arnold–Gokhale fixed-point iteration, started from the uniform joint:
///
/// ```text
/// q'(i, j) ∝ (q_{a|b}(i | j) + q_{b|a}(j | i)) / (1 / q_a(i) + 1 / q_b(j))
/// ```
///
/// where `q_a`, `q_b` are the marginals of the current iterate. Runs in
/// linear space.
pub fn ag_joint(
    cond_a_given_b: &ConditionalTable,
    cond_b_given_a: &ConditionalTable,
    config: &AgConfig,
) -> Result<(JointTable, AgTrace)> {
    config.validate()?;
    let n = cond_a_given_b.vocab_size();
    if cond_b_given_a.vocab_size() != n {
        return Err(Error::DimensionMismatch {
            what: "conditional tables",
            expected: n,
            found: cond_b_given_a.vocab_size(),
        });
    }
    let numerator = SquareTable::from_fn(n, |i, j| {
        cond_a_given_b.log_prob(i, j).exp() + cond_b_given_a.log_prob(j, i).exp()
    });

    let mut current = SquareTable::filled(n, 1.0 / (n * n) as f64);
    let mut next = SquareTable::filled(n, 0.0);
    let mut objectives = config.track_objective.then(Vec::new);
    if let Some(obj) = objectives.as_mut() {
        obj.push(objective_linear(cond_a_given_b, cond_b_given_a, &current, 0)?);
    }

    let mut marg_a = vec![0.0; n];
    let mut marg_b = vec![0.0; n];
    let mut iterations_run = 0;
    let mut converged = false;
    for iteration in 1..=config.max_iterations {
        marg_a.iter_mut().for_each(|x| *x = 0.0);
        marg_b.iter_mut().for_each(|x| *x = 0.0);
        for i in 0..n {
            for (j, &q) in current.row(i).iter().enumerate() {
                marg_a[i] += q;
                marg_b[j] += q;
            }
        }
        let inv_a: Vec<f64> = marg_a.iter().map(|m| 1.0 / m.max(MARGINAL_FLOOR)).collect();
        let inv_b: Vec<f64> = marg_b.iter().map(|m| 1.0 / m.max(MARGINAL_FLOOR)).collect();

        let mut total = 0.0;
        for i in 0..n {
            let num = numerator.row(i);
            let out = next.row_mut(i);
            for j in 0..n {
                out[j] = num[j] / (inv_a[i] + inv_b[j]);
                total += out[j];
            }
        }
        if !(total.is_finite() && total > 0.0) {
            return Err(Error::IterationNonFinite { iteration });
        }
        let mut delta: f64 = 0.0;
        for i in 0..n {
            let prev = current.row(i);
            let out = next.row_mut(i);
            for j in 0..n {
                out[j] /= total;
                if !(out[j].is_finite() && out[j] > 0.0) {
                    return Err(Error::IterationNonFinite { iteration });
                }
                delta = delta.max((out[j] - prev[j]).abs());
            }
        }
        std::mem::swap(&mut current, &mut next);
        iterations_run = iteration;
        if let Some(obj) = objectives.as_mut() {
            obj.push(objective_linear(
                cond_a_given_b,
                cond_b_given_a,
                &current,
                iteration,
            )?);
        }
        if delta < config.convergence_tol {
            converged = true;
            break;
        }
    }

    let joint = JointTable::from_log_scores(Method::Ag, &current.map(f64::ln))
        .map_err(|_| Error::IterationNonFinite {
            iteration: iterations_run,
        })?
        .with_iterations(iterations_run);
    Ok((
        joint,
        AgTrace {
            iterations_run,
            objective_values: objectives,
            converged,
        },
    ))
}

fn objective_linear(
    cond_a_given_b: &ConditionalTable,
    cond_b_given_a: &ConditionalTable,
    iterate: &SquareTable,
    iteration: usize,
) -> Result<f64> {
    let joint = JointTable::from_log_scores(Method::Ag, &iterate.map(f64::ln))
        .map_err(|_| Error::IterationNonFinite { iteration })?;
    ag_objective(cond_a_given_b, cond_b_given_a, &joint)
}

/// Summed KL from the given conditionals to those of `candidate`, over every
/// context token in both directions.
pub fn ag_objective(
    cond_a_given_b: &ConditionalTable,
    cond_b_given_a: &ConditionalTable,
    candidate: &JointTable,
) -> Result<f64> {
    let n = candidate.vocab_size();
    for (what, t) in [
        ("a|b conditional vs candidate", cond_a_given_b),
        ("b|a conditional vs candidate", cond_b_given_a),
    ] {
        if t.vocab_size() != n {
            return Err(Error::DimensionMismatch {
                what,
                expected: n,
                found: t.vocab_size(),
            });
        }
    }
    let mu_a = row_conditionals(candidate, Direction::AGivenB)?;
    let mu_b = row_conditionals(candidate, Direction::BGivenA)?;
    let mut total = 0.0;
    for ctx in 0..n {
        total += kl_log(cond_a_given_b.row(ctx), mu_a.row(ctx));
        total += kl_log(cond_b_given_a.row(ctx), mu_b.row(ctx));
    }
    Ok(total.max(0.0))
}
