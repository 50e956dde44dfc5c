//! Exit distributions, conditional exit probabilities, expected cost, and
//! the budget-to-parameter solver.
//!
//! The marginal exit distribution is geometric in a parameter `a >= 0`:
//! `p_s = a^(s-1) / Z` with the convention `0^0 = 1`, so `a = 0` sends all
//! mass to the first exit and `a = +inf` (the sentinel returned for
//! budgets above the deepest cost) sends all mass to the last.

use crate::error::{Error, Result};

/// Marginal exit probabilities for `stages` exits.
pub fn exit_distribution(a: f64, stages: usize) -> Result<Vec<f64>> {
    if stages == 0 {
        return Err(Error::Policy("need at least one exit stage".into()));
    }
    if a.is_nan() || a < 0.0 {
        return Err(Error::Policy(format!("exit parameter must be >= 0, got {a}")));
    }
    // Normalize by the largest power so large `a` cannot overflow: for
    // a > 1 weight stage s by (1/a)^(S-s) instead of a^(s-1).
    let weights: Vec<f64> = if a <= 1.0 {
        (0..stages).map(|s| a.powi(s as i32)).collect()
    } else {
        let r = 1.0 / a;
        (0..stages).map(|s| r.powi((stages - 1 - s) as i32)).collect()
    };
    let z: f64 = weights.iter().sum();
    Ok(weights.into_iter().map(|w| w / z).collect())
}

/// Conditional exit probabilities `q_s = p_s / (1 - sum_{i<s} p_i)`,
/// computed from tail sums so the final reachable stage gets exactly 1.
/// Stages that no query can reach (all mass already exited) come back as
/// `None`.
pub fn conditional_exit_probs(p: &[f64]) -> Result<Vec<Option<f64>>> {
    if p.is_empty() {
        return Err(Error::Policy("empty exit distribution".into()));
    }
    if p.iter().any(|&v| !(0.0..=1.0 + 1e-12).contains(&v)) {
        return Err(Error::Policy("exit probabilities must lie in [0, 1]".into()));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Policy(format!(
            "exit probabilities must sum to 1, got {total}"
        )));
    }
    let mut head = 0.0;
    let mut tails = vec![0.0; p.len()];
    let mut tail = 0.0;
    for s in (0..p.len()).rev() {
        tail += p[s];
        tails[s] = tail;
    }
    let mut q = Vec::with_capacity(p.len());
    for s in 0..p.len() {
        if tails[s] <= 0.0 {
            if p[s] > 0.0 {
                return Err(Error::Policy(format!(
                    "degenerate policy: all mass exits before stage {} but p_{} > 0",
                    s + 1,
                    s + 1
                )));
            }
            q.push(None);
        } else if head >= 1.0 && p[s] > 0.0 {
            return Err(Error::Policy(format!(
                "degenerate policy: all mass exits before stage {} but p_{} > 0",
                s + 1,
                s + 1
            )));
        } else {
            q.push(Some((p[s] / tails[s]).clamp(0.0, 1.0)));
        }
        head += p[s];
    }
    Ok(q)
}

/// Expected per-query cost of a policy: dot(p, costs).
pub fn expected_cost(p: &[f64], costs: &[f64]) -> f64 {
    debug_assert_eq!(p.len(), costs.len());
    p.iter().zip(costs).map(|(a, b)| a * b).sum()
}

fn validate_costs(costs: &[f64]) -> Result<()> {
    if costs.len() < 2 {
        return Err(Error::Budget("need at least two exit costs".into()));
    }
    if costs.iter().any(|c| !c.is_finite() || *c <= 0.0) {
        return Err(Error::Budget("exit costs must be positive and finite".into()));
    }
    for w in costs.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::Budget(format!(
                "exit costs must be strictly increasing, got {} then {}",
                w[0], w[1]
            )));
        }
    }
    Ok(())
}

/// Solves for the exit parameter whose expected cost matches the
/// per-query budget, by bisection on the monotone map a -> expected cost.
///
/// Budgets below the first exit cost are infeasible; budgets at or above
/// the deepest cost return `f64::INFINITY`, meaning "always traverse to
/// the last exit".
pub fn solve_a_for_budget(per_query_budget: f64, costs: &[f64]) -> Result<f64> {
    validate_costs(costs)?;
    let first = costs[0];
    let last = *costs.last().unwrap();
    if !per_query_budget.is_finite() {
        return Err(Error::Budget(format!(
            "per-query budget must be finite, got {per_query_budget}"
        )));
    }
    let tol = 1e-9 * per_query_budget.abs().max(first);
    if per_query_budget < first - tol {
        return Err(Error::Budget(format!(
            "budget {per_query_budget} is below the cheapest exit cost {first}"
        )));
    }
    if per_query_budget <= first {
        return Ok(0.0);
    }
    if per_query_budget >= last {
        return Ok(f64::INFINITY);
    }

    let cost_at = |a: f64| -> f64 {
        let p = exit_distribution(a, costs.len()).expect("a >= 0");
        expected_cost(&p, costs)
    };

    // Grow the bracket until the expected cost reaches the target.
    let mut lo = 0.0;
    let mut hi = 1.0;
    while cost_at(hi) < per_query_budget - tol {
        lo = hi;
        hi *= 2.0;
        if hi > 1e15 {
            return Ok(hi);
        }
    }
    for _ in 0..500 {
        let mid = 0.5 * (lo + hi);
        let c = cost_at(mid);
        if (c - per_query_budget).abs() <= tol {
            return Ok(mid);
        }
        if c < per_query_budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// An exit policy bound to a concrete cost profile.
#[derive(Debug, Clone, PartialEq)]
pub struct ExitPolicy {
    parameter: f64,
    marginal: Vec<f64>,
    conditional: Vec<Option<f64>>,
    costs: Vec<f64>,
}

impl ExitPolicy {
    pub fn from_parameter(a: f64, costs: &[f64]) -> Result<Self> {
        validate_costs(costs)?;
        let marginal = exit_distribution(a, costs.len())?;
        let conditional = conditional_exit_probs(&marginal)?;
        Ok(ExitPolicy {
            parameter: a,
            marginal,
            conditional,
            costs: costs.to_vec(),
        })
    }

    pub fn from_budget(per_query_budget: f64, costs: &[f64]) -> Result<Self> {
        let a = solve_a_for_budget(per_query_budget, costs)?;
        ExitPolicy::from_parameter(a, costs)
    }

    pub fn parameter(&self) -> f64 {
        self.parameter
    }

    pub fn stages(&self) -> usize {
        self.marginal.len()
    }

    pub fn marginal(&self) -> &[f64] {
        &self.marginal
    }

    pub fn conditional(&self) -> &[Option<f64>] {
        &self.conditional
    }

    pub fn costs(&self) -> &[f64] {
        &self.costs
    }

    pub fn expected_cost(&self) -> f64 {
        expected_cost(&self.marginal, &self.costs)
    }

    /// Conditional exit probability used at runtime. The final stage
    /// always exits; an unreachable stage exits immediately if a query
    /// somehow arrives there.
    pub fn exit_probability_at(&self, stage: usize) -> f64 {
        if stage + 1 >= self.stages() {
            return 1.0;
        }
        self.conditional[stage].unwrap_or(1.0)
    }
}
