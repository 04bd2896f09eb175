//! Training objectives.
//!
//! The joint objective is
//!
//! ```text
//! total = mean (Q(t_i, x_i) - y_i)^2
//!       + alpha * mean CrossEntropy(g(x_i), t_i)
//!       + beta  * mean (y_i - Q~(t_i, x_i))^2
//! Q~(t, x) = Q(t, x) + epsilon * H(t, g(x))
//! ```
//!
//! with the three terms summed in that order. `beta = 0` is the plain
//! outcome-plus-propensity objective.
//!
//! Functions here validate their inputs and reject propensities on the
//! boundary of `(0, 1)`. The tape version used during training instead
//! clamps `g` to `[1e-12, 1 - 1e-12]`.

use serde::{Deserialize, Serialize};

use crate::estimators::{clever_covariate, Predictions};
use crate::nncore::{Tape, Var};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub outcome_sq_error: f64,
    pub propensity_xent: f64,
    pub treg_penalty: f64,
    pub total: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl LossBreakdown {
    fn assemble(outcome: f64, xent: f64, penalty: f64, alpha: f64, beta: f64) -> Self {
        Self {
            outcome_sq_error: outcome,
            propensity_xent: xent,
            treg_penalty: penalty,
            total: outcome + alpha * xent + beta * penalty,
            alpha,
            beta,
        }
    }
}

fn check_weights(alpha: f64, beta: f64) -> Result<()> {
    if !(alpha >= 0.0 && alpha.is_finite() && beta >= 0.0 && beta.is_finite()) {
        return Err(Error::Config(format!(
            "loss weights must be finite and nonnegative, got alpha={alpha}, beta={beta}"
        )));
    }
    Ok(())
}

fn check_lengths(context: &'static str, n: usize, others: &[usize]) -> Result<()> {
    if n == 0 {
        return Err(Error::Estimation(format!("{context}: no rows")));
    }
    if others.iter().any(|&l| l != n) {
        return Err(Error::shape(context, format!("length {n}"), format!("{others:?}")));
    }
    Ok(())
}

/// `Q(t_i, x_i)`: head 1 where `t = 1`, head 0 where `t = 0`.
pub fn select_at_treatment(q0: &[f64], q1: &[f64], t: &[f64]) -> Vec<f64> {
    t.iter()
        .zip(q0.iter().zip(q1))
        .map(|(&ti, (&a, &b))| if ti == 1.0 { b } else { a })
        .collect()
}

fn cross_entropy(g: f64, t: f64) -> Result<f64> {
    if !(g > 0.0 && g < 1.0) {
        return Err(Error::Domain {
            context: "cross-entropy",
            value: g,
        });
    }
    Ok(-(t * g.ln() + (1.0 - t) * (1.0 - g).ln()))
}

/// Outcome squared error plus `alpha` times propensity cross-entropy.
pub fn base_objective(q_at_t: &[f64], g: &[f64], y: &[f64], t: &[f64], alpha: f64) -> Result<LossBreakdown> {
    check_weights(alpha, 0.0)?;
    let n = q_at_t.len();
    check_lengths("base_objective", n, &[g.len(), y.len(), t.len()])?;
    let outcome = q_at_t.iter().zip(y).map(|(q, y)| (q - y) * (q - y)).sum::<f64>() / n as f64;
    let mut xent = 0.0;
    for (&gi, &ti) in g.iter().zip(t) {
        xent += cross_entropy(gi, ti)?;
    }
    Ok(LossBreakdown::assemble(outcome, xent / n as f64, 0.0, alpha, 0.0))
}

/// `q + epsilon * H(t, g)`.
pub fn perturbed_outcome(q: f64, t: f64, g: f64, epsilon: f64) -> Result<f64> {
    Ok(q + epsilon * clever_covariate(t, g)?)
}

/// `(1/n) sum (y_i - Q~_i)^2` with `q` the outcome at the observed arm.
pub fn treg_penalty(y: &[f64], q: &[f64], t: &[f64], g: &[f64], epsilon: f64) -> Result<f64> {
    let n = y.len();
    check_lengths("treg_penalty", n, &[q.len(), t.len(), g.len()])?;
    let mut total = 0.0;
    for i in 0..n {
        let r = y[i] - perturbed_outcome(q[i], t[i], g[i], epsilon)?;
        total += r * r;
    }
    Ok(total / n as f64)
}

/// Full objective from both outcome heads and the propensity head. The
/// `epsilon` argument is used for the penalty; `outputs.epsilon` is ignored.
pub fn full_objective(
    outputs: &Predictions,
    y: &[f64],
    t: &[f64],
    alpha: f64,
    beta: f64,
    epsilon: f64,
) -> Result<LossBreakdown> {
    check_weights(alpha, beta)?;
    let Predictions { q0, q1, g, .. } = outputs;
    check_lengths("full_objective", q0.len(), &[q1.len()])?;
    let q_at_t = select_at_treatment(q0, q1, t);
    let base = base_objective(&q_at_t, g, y, t, alpha)?;
    let penalty = treg_penalty(y, &q_at_t, t, g, epsilon)?;
    Ok(LossBreakdown::assemble(
        base.outcome_sq_error,
        base.propensity_xent,
        penalty,
        alpha,
        beta,
    ))
}

/// Closed-form minimizer of the penalty in `epsilon` for fixed outcome and
/// propensity predictions: `sum H_i (y_i - q_i) / sum H_i^2`.
pub fn optimal_epsilon(y: &[f64], q_at_t: &[f64], t: &[f64], g: &[f64]) -> Result<f64> {
    let n = y.len();
    check_lengths("optimal_epsilon", n, &[q_at_t.len(), t.len(), g.len()])?;
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..n {
        let h = clever_covariate(t[i], g[i])?;
        num += h * (y[i] - q_at_t[i]);
        den += h * h;
    }
    Ok(num / den)
}

/// `d total / d epsilon = -(2 beta / n) sum H_i (y_i - Q~_i)`.
pub fn epsilon_derivative(y: &[f64], q_at_t: &[f64], t: &[f64], g: &[f64], beta: f64, epsilon: f64) -> Result<f64> {
    let n = y.len();
    check_lengths("epsilon_derivative", n, &[q_at_t.len(), t.len(), g.len()])?;
    let mut s = 0.0;
    for i in 0..n {
        let h = clever_covariate(t[i], g[i])?;
        s += h * (y[i] - (q_at_t[i] + epsilon * h));
    }
    Ok(-2.0 * beta * s / n as f64)
}

/// Per-term weights of the training objective. `outcome` is 1 for every
/// objective except propensity-only pretraining.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveWeights {
    pub outcome: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl ObjectiveWeights {
    pub fn joint(alpha: f64, beta: f64) -> Self {
        Self {
            outcome: 1.0,
            alpha,
            beta,
        }
    }

    pub fn propensity_only() -> Self {
        Self {
            outcome: 0.0,
            alpha: 1.0,
            beta: 0.0,
        }
    }

    pub fn outcome_only() -> Self {
        Self {
            outcome: 1.0,
            alpha: 0.0,
            beta: 0.0,
        }
    }

    pub fn needs_outcomes(&self) -> bool {
        self.outcome > 0.0 || self.beta > 0.0
    }

    pub fn needs_propensity(&self) -> bool {
        self.alpha > 0.0 || self.beta > 0.0
    }
}

/// Model outputs recorded on a tape. Unused heads may be absent.
#[derive(Debug, Clone, Copy)]
pub struct TapeOutputs {
    pub q0: Option<Var>,
    pub q1: Option<Var>,
    pub g: Option<Var>,
    pub epsilon: Option<Var>,
}

/// Records the weighted objective on `tape`. Terms with zero weight are
/// left out of the graph entirely, so they contribute exactly nothing to
/// any gradient.
pub fn tape_objective(tape: &mut Tape<'_>, out: TapeOutputs, y: Var, t: Var, weights: ObjectiveWeights) -> Result<Var> {
    let missing = |what: &str| Error::Config(format!("objective needs the {what} output"));
    let mut terms = Vec::with_capacity(3);
    let q_at_t = if weights.needs_outcomes() {
        let q0 = out.q0.ok_or_else(|| missing("q0"))?;
        let q1 = out.q1.ok_or_else(|| missing("q1"))?;
        Some(tape.select_by_treatment(q0, q1, t)?)
    } else {
        None
    };
    if weights.outcome > 0.0 {
        let q = q_at_t.expect("outcome term implies outcome heads");
        let mse = tape.mean_squared_error(q, y, "outcome_sq_error")?;
        terms.push((mse, weights.outcome));
    }
    if weights.alpha > 0.0 {
        let g = out.g.ok_or_else(|| missing("propensity"))?;
        let xent = tape.cross_entropy(g, t, "propensity_xent")?;
        terms.push((xent, weights.alpha));
    }
    if weights.beta > 0.0 {
        let q = q_at_t.expect("penalty implies outcome heads");
        let g = out.g.ok_or_else(|| missing("propensity"))?;
        let eps = out.epsilon.ok_or_else(|| missing("epsilon"))?;
        let q_tilde = tape.perturb(q, g, eps, t)?;
        let penalty = tape.mean_squared_error(q_tilde, y, "treg_penalty")?;
        terms.push((penalty, weights.beta));
    }
    if terms.is_empty() {
        return Err(Error::Config("objective has no active terms".into()));
    }
    tape.weighted_sum(&terms)
}
