//! Exact planning for discounted tabular MDPs.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::span;
use crate::mdp::{check_discount, induce_deterministic, policy_value_discounted, Mdp, Policy};

/// Iteration cap for value iteration.
pub const MAX_ITERATIONS: usize = 10_000_000;

/// Optimal discounted values, Q-table and greedy deterministic policy.
#[derive(Clone, Debug, Serialize)]
pub struct DiscountedSolution {
    /// Exact values of `policy` (not the last value-iteration iterate).
    pub optimal_values: Vec<f64>,
    pub q_values: Vec<Vec<f64>>,
    pub policy: Policy,
    pub bellman_residual: f64,
    pub discount: f64,
    pub iterations: usize,
}

impl DiscountedSolution {
    pub fn actions(&self) -> Vec<usize> {
        self.policy.actions().expect("solver policies are deterministic")
    }
}

/// Solver accuracy used when none is given: `1e-10/(1-gamma)`, at most `1e-6`.
pub fn default_tolerance(gamma: f64) -> f64 {
    (1e-10 / (1.0 - gamma)).min(1e-6)
}

/// `Q[s][a] = r[s][a] + gamma * P[s][a] . v`.
pub fn q_from_v(mdp: &Mdp, gamma: f64, v: &[f64]) -> Result<Vec<Vec<f64>>> {
    if v.len() != mdp.num_states() {
        return Err(Error::DimensionMismatch(format!(
            "value vector has length {}, MDP has {} states",
            v.len(),
            mdp.num_states()
        )));
    }
    Ok((0..mdp.num_states()).map(|s| (0..mdp.num_actions()).map(|a| q_entry(mdp, gamma, v, s, a)).collect()).collect())
}

#[inline]
fn q_entry(mdp: &Mdp, gamma: f64, v: &[f64], s: usize, a: usize) -> f64 {
    let row = mdp.row(s, a);
    let mut acc = 0.0;
    for (p, x) in row.iter().zip(v) {
        acc += p * x;
    }
    mdp.reward(s, a) + gamma * acc
}

/// Lowest action index whose value is within `tie` of the row maximum.
fn greedy_action(q: impl Fn(usize) -> f64, num_actions: usize, tie: f64) -> (usize, f64) {
    let best = (0..num_actions).map(&q).fold(f64::NEG_INFINITY, f64::max);
    let a = (0..num_actions).find(|&a| q(a) >= best - tie).unwrap_or(0);
    (a, best)
}

fn tie_tolerance(v: &[f64]) -> f64 {
    1e-12 * v.iter().fold(1.0_f64, |m, x| m.max(x.abs()))
}

/// Value iteration from zero with the span stopping rule
/// `sp(V_{k+1} - V_k) <= eps_solve (1-gamma)/gamma`, followed by exact
/// evaluation of the greedy policy and policy-improvement steps until no
/// action improves by more than the tie tolerance.
pub fn solve_discounted(mdp: &Mdp, gamma: f64, eps_solve: f64) -> Result<DiscountedSolution> {
    check_discount(gamma)?;
    if !(eps_solve > 0.0) {
        return Err(Error::InvalidParameter(format!("solver tolerance {eps_solve} must be positive")));
    }
    let (ns, na) = (mdp.num_states(), mdp.num_actions());
    let threshold = eps_solve * (1.0 - gamma) / gamma;
    let mut v = vec![0.0; ns];
    let mut next = vec![0.0; ns];
    let mut diff = vec![0.0; ns];
    let mut iterations = 0;
    loop {
        iterations += 1;
        for s in 0..ns {
            let mut best = f64::NEG_INFINITY;
            for a in 0..na {
                best = best.max(q_entry(mdp, gamma, &v, s, a));
            }
            next[s] = best;
            diff[s] = best - v[s];
        }
        std::mem::swap(&mut v, &mut next);
        if span(&diff) <= threshold {
            break;
        }
        if iterations >= MAX_ITERATIONS {
            return Err(Error::Numerical(format!("value iteration did not converge in {MAX_ITERATIONS} iterations")));
        }
    }

    let tie = tie_tolerance(&v);
    let mut actions: Vec<usize> =
        (0..ns).map(|s| greedy_action(|a| q_entry(mdp, gamma, &v, s, a), na, tie).0).collect();
    let mut values;
    loop {
        values = policy_value_discounted(&induce_deterministic(mdp, &actions), gamma)?.values;
        let tie = tie_tolerance(&values);
        let mut changed = false;
        for s in 0..ns {
            let current = q_entry(mdp, gamma, &values, s, actions[s]);
            let (a, best) = greedy_action(|a| q_entry(mdp, gamma, &values, s, a), na, tie);
            if best > current + tie {
                actions[s] = a;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    let q_values = q_from_v(mdp, gamma, &values)?;
    let bellman_residual = q_values
        .iter()
        .zip(&values)
        .map(|(row, v)| (row.iter().fold(f64::NEG_INFINITY, |m, &q| m.max(q)) - v).abs())
        .fold(0.0, f64::max);
    Ok(DiscountedSolution {
        optimal_values: values,
        q_values,
        policy: Policy::deterministic(&actions, na)?,
        bellman_residual,
        discount: gamma,
        iterations,
    })
}

/// True iff every non-chosen action trails the chosen one by more than `omega`.
pub fn action_gap_check(sol: &DiscountedSolution, omega: f64) -> bool {
    let actions = sol.actions();
    sol.q_values
        .iter()
        .zip(&actions)
        .all(|(row, &chosen)| row.iter().enumerate().all(|(a, &q)| a == chosen || row[chosen] - q > omega))
}

/// Smallest gap between the chosen action and any other action.
pub fn min_action_gap(sol: &DiscountedSolution) -> f64 {
    let actions = sol.actions();
    sol.q_values
        .iter()
        .zip(&actions)
        .flat_map(|(row, &chosen)| {
            row.iter().enumerate().filter(move |(a, _)| *a != chosen).map(move |(_, &q)| row[chosen] - q)
        })
        .fold(f64::INFINITY, f64::min)
}
