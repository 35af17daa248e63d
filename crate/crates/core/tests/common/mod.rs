#![allow(dead_code)]

use amdp_core::{
    decompose_chain, gain_and_bias, induce_deterministic, policy_value_discounted, InducedChain, Mdp, PolicySpace,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Sparse random chain with uniform rewards. Roughly one state in five is
/// made absorbing, so many draws have transient states and several classes.
pub fn random_chain(n: usize, seed: u64) -> InducedChain {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = DMatrix::zeros(n, n);
    for i in 0..n {
        if rng.random::<f64>() < 0.2 {
            p[(i, i)] = 1.0;
            continue;
        }
        let forced = rng.random_range(0..n);
        let mut total = 0.0;
        for j in 0..n {
            if j == forced || rng.random::<f64>() < 0.4 {
                let w = rng.random::<f64>() + 0.05;
                p[(i, j)] = w;
                total += w;
            }
        }
        for j in 0..n {
            p[(i, j)] /= total;
        }
    }
    let r = DVector::from_fn(n, |_, _| rng.random::<f64>());
    InducedChain::new(p, r).expect("rows are stochastic")
}

pub fn matrix_inf_norm(m: &DMatrix<f64>) -> f64 {
    (0..m.nrows()).map(|i| m.row(i).iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max)
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// `sum_{t >= 0} gamma^t M^t`, summed until the terms are below 1e-17.
fn geometric_series(m: &DMatrix<f64>, gamma: f64) -> DMatrix<f64> {
    let n = m.nrows();
    let mut acc = DMatrix::identity(n, n);
    let mut term = DMatrix::identity(n, n);
    while matrix_inf_norm(&term) > 1e-17 {
        term = &term * m * gamma;
        acc += &term;
    }
    acc
}

/// Largest entrywise gap between the transient rows of `(I - gamma P)^{-1}`
/// and their block expansion `[sum_k gamma^k Z^{k-1} Y (I - gamma X)^{-1}, sum_t gamma^t Z^t]`,
/// with every inverse replaced by its power series.
pub fn resolvent_block_defect(chain: &InducedChain, gamma: f64) -> f64 {
    let dec = decompose_chain(chain);
    let n = chain.num_states();
    let m = dec.num_recurrent();
    if m == n {
        return 0.0;
    }
    let full = (DMatrix::identity(n, n) - &chain.transition * gamma).try_inverse().expect("resolvent exists");
    let sx = geometric_series(&dec.x, gamma);
    let sz = geometric_series(&dec.z, gamma);
    let left = &sz * &dec.y * &sx * gamma;
    let mut worst: f64 = 0.0;
    for i in 0..n - m {
        let s = dec.permutation[m + i];
        for j in 0..n {
            let expected = if j < m { left[(i, j)] } else { sz[(i, j - m)] };
            worst = worst.max((full[(s, dec.permutation[j])] - expected).abs());
        }
    }
    worst
}

/// Componentwise best gain over every deterministic policy.
pub fn enumerated_optimal_gain(mdp: &Mdp) -> Vec<f64> {
    let space = PolicySpace::new(mdp.num_states(), mdp.num_actions(), 1_000_000).unwrap();
    let mut best = vec![f64::NEG_INFINITY; mdp.num_states()];
    for i in 0..space.len() {
        let gain = gain_and_bias(&induce_deterministic(mdp, &space.decode(i))).unwrap().gain;
        for (b, g) in best.iter_mut().zip(gain) {
            *b = b.max(g);
        }
    }
    best
}

/// Componentwise best discounted value over every deterministic policy.
pub fn enumerated_optimal_value(mdp: &Mdp, gamma: f64) -> Vec<f64> {
    let space = PolicySpace::new(mdp.num_states(), mdp.num_actions(), 1_000_000).unwrap();
    let mut best = vec![f64::NEG_INFINITY; mdp.num_states()];
    for i in 0..space.len() {
        let v = policy_value_discounted(&induce_deterministic(mdp, &space.decode(i)), gamma).unwrap().values;
        for (b, x) in best.iter_mut().zip(v) {
            *b = b.max(x);
        }
    }
    best
}

/// Defect of the unmodified average-reward optimality equations, computed
/// from scratch: `max_a P_sa rho - rho(s)` and `|max over gain-preserving a of
/// r_sa + P_sa h - rho(s) - h(s)|`.
pub fn optimality_defect(mdp: &Mdp, rho: &[f64], h: &[f64]) -> f64 {
    let dot = |row: &[f64], v: &[f64]| row.iter().zip(v).map(|(p, x)| p * x).sum::<f64>();
    let mut worst: f64 = 0.0;
    for s in 0..mdp.num_states() {
        let mut best = f64::NEG_INFINITY;
        for a in 0..mdp.num_actions() {
            let pr = dot(mdp.row(s, a), rho);
            worst = worst.max(pr - rho[s]);
            if (pr - rho[s]).abs() <= 1e-8 {
                best = best.max(mdp.reward(s, a) + dot(mdp.row(s, a), h));
            }
        }
        worst = worst.max((best - rho[s] - h[s]).abs());
    }
    worst
}
