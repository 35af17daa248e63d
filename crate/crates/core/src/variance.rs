//! Variance functionals of discounted returns and the variance Bellman identities.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;
use crate::mdp::{check_discount, policy_value_discounted, InducedChain};

/// Largest horizon and state count accepted by [`multistep_residual`].
pub const MULTISTEP_MAX_T: usize = 6;
pub const MULTISTEP_MAX_S: usize = 6;

/// `(P V^2 - (P V)^2)_s`, computed in the centered form
/// `sum_s' P(s,s') (V(s') - (PV)(s))^2`, which is nonnegative by construction.
pub fn one_step_variance(chain: &InducedChain, v: &[f64]) -> Result<Vec<f64>> {
    let n = chain.num_states();
    if v.len() != n {
        return Err(Error::DimensionMismatch(format!("vector of length {} for {n} states", v.len())));
    }
    Ok((0..n)
        .map(|s| {
            let row = chain.transition.row(s);
            let mean: f64 = row.iter().zip(v).map(|(p, x)| p * x).sum();
            row.iter().zip(v).map(|(p, x)| p * (x - mean) * (x - mean)).sum()
        })
        .collect())
}

/// Variance of the total discounted return from each state, the solution of
/// `sigma = gamma^2 Var_P[V] + gamma^2 P sigma`.
pub fn total_return_variance(chain: &InducedChain, gamma: f64) -> Result<Vec<f64>> {
    Ok(variance_parts(chain, gamma)?.total)
}

struct Parts {
    values: Vec<f64>,
    one_step: Vec<f64>,
    total: Vec<f64>,
    residual: f64,
}

fn variance_parts(chain: &InducedChain, gamma: f64) -> Result<Parts> {
    check_discount(gamma)?;
    let n = chain.num_states();
    let values = policy_value_discounted(chain, gamma)?.values;
    let one_step = one_step_variance(chain, &values)?;
    let g2 = gamma * gamma;
    let rhs = DVector::from_vec(one_step.clone()) * g2;
    let lhs = DMatrix::identity(n, n) - &chain.transition * g2;
    let sigma = linalg::solve(lhs.clone(), &rhs, "return variance")?;
    let residual = linalg::inf_norm(&(lhs * &sigma - rhs));
    if residual > 1e-10 * n as f64 * (1.0 + linalg::inf_norm(&sigma)) {
        return Err(Error::Numerical(format!("variance solve residual {residual:.3e}")));
    }
    let scale = linalg::inf_norm(&sigma);
    let total = sigma.iter().map(|&x| clamp_dust(x, scale)).collect::<Result<Vec<_>>>()?;
    Ok(Parts { values, one_step, total, residual })
}

/// Rounds negative solver dust up to zero; `scale` is the magnitude of the
/// vector the entry came from.
fn clamp_dust(x: f64, scale: f64) -> Result<f64> {
    if x >= 0.0 {
        Ok(x)
    } else if x > -1e-12 * (1.0 + scale) {
        Ok(0.0)
    } else {
        Err(Error::Numerical(format!("variance came out negative: {x}")))
    }
}

/// Max-norm defect of the T-step identity
/// `sigma = Var[sum_{t<T} gamma^t R_t + gamma^T V(S_T)] + gamma^{2T} P^T sigma`,
/// with the inner variance computed by enumerating all `S^T` paths.
pub fn multistep_residual(chain: &InducedChain, gamma: f64, horizon: usize) -> Result<f64> {
    let n = chain.num_states();
    if horizon == 0 {
        return Err(Error::InvalidParameter("horizon must be at least 1".into()));
    }
    if horizon > MULTISTEP_MAX_T || n > MULTISTEP_MAX_S {
        return Err(Error::InvalidParameter(format!(
            "path enumeration is limited to T <= {MULTISTEP_MAX_T} and S <= {MULTISTEP_MAX_S} (got T={horizon}, S={n})"
        )));
    }
    let parts = variance_parts(chain, gamma)?;
    let sigma = DVector::from_vec(parts.total);
    let mut power = DMatrix::identity(n, n);
    for _ in 0..horizon {
        power = &power * &chain.transition;
    }
    let tail = power * &sigma * gamma.powi(2 * horizon as i32);

    let mut worst: f64 = 0.0;
    for s in 0..n {
        // (probability, partial return including the terminal value)
        let mut outcomes = Vec::new();
        enumerate_paths(chain, &parts.values, gamma, horizon, s, 0, 1.0, 0.0, &mut outcomes);
        let mean: f64 = outcomes.iter().map(|(p, x)| p * x).sum();
        let var: f64 = outcomes.iter().map(|(p, x)| p * (x - mean) * (x - mean)).sum();
        worst = worst.max((sigma[s] - var - tail[s]).abs());
    }
    Ok(worst)
}

#[allow(clippy::too_many_arguments)]
fn enumerate_paths(
    chain: &InducedChain,
    values: &[f64],
    gamma: f64,
    horizon: usize,
    state: usize,
    depth: usize,
    prob: f64,
    acc: f64,
    out: &mut Vec<(f64, f64)>,
) {
    let disc = gamma.powi(depth as i32);
    if depth == horizon {
        out.push((prob, acc + disc * values[state]));
        return;
    }
    let acc = acc + disc * chain.reward[state];
    for next in 0..chain.num_states() {
        let p = chain.transition[(state, next)];
        if p > 0.0 {
            enumerate_paths(chain, values, gamma, horizon, next, depth + 1, prob * p, acc, out);
        }
    }
}

/// `gamma || (I - gamma P)^{-1} sqrt(Var_P[V]) ||_inf`.
pub fn weighted_variance_param(chain: &InducedChain, gamma: f64) -> Result<f64> {
    let parts = variance_parts(chain, gamma)?;
    weighted_from_one_step(chain, gamma, &parts.one_step)
}

fn weighted_from_one_step(chain: &InducedChain, gamma: f64, one_step: &[f64]) -> Result<f64> {
    let n = chain.num_states();
    let root = DVector::from_iterator(n, one_step.iter().map(|x| x.sqrt()));
    let lhs = DMatrix::identity(n, n) - &chain.transition * gamma;
    let w = linalg::solve(lhs, &root, "weighted variance")?;
    Ok(gamma * linalg::inf_norm(&w))
}

/// Variance quantities of one policy's chain.
#[derive(Clone, Debug, Serialize)]
pub struct VarianceReport {
    pub one_step: Vec<f64>,
    pub total: Vec<f64>,
    pub weighted_param: f64,
    pub residual_onestep_bellman: f64,
    /// Horizon to residual; only filled when path enumeration is within limits.
    pub multistep_residuals: BTreeMap<usize, f64>,
}

/// Full report, including multistep residuals for `T = 1..=max_horizon`
/// when the chain is small enough to enumerate.
pub fn variance_report(chain: &InducedChain, gamma: f64, max_horizon: usize) -> Result<VarianceReport> {
    let parts = variance_parts(chain, gamma)?;
    let weighted_param = weighted_from_one_step(chain, gamma, &parts.one_step)?;
    let mut multistep_residuals = BTreeMap::new();
    if chain.num_states() <= MULTISTEP_MAX_S {
        for t in 1..=max_horizon.min(MULTISTEP_MAX_T) {
            multistep_residuals.insert(t, multistep_residual(chain, gamma, t)?);
        }
    }
    Ok(VarianceReport {
        one_step: parts.one_step,
        total: parts.total,
        weighted_param,
        residual_onestep_bellman: parts.residual,
        multistep_residuals,
    })
}
