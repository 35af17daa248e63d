//! MDP-level quantities: optimal gain and bias, the Bellman certificate, and
//! the complexity parameters H, B, D and tau_unif.

use nalgebra::{DMatrix, DVector};
use serde::{Serialize, Serializer};

use crate::chain::{
    decompose_chain, expected_transient_time, gain_and_bias, gain_and_bias_with, limiting_matrix, mixing_time, GainBias,
};
use crate::error::{Error, Result};
use crate::linalg;
use crate::mdp::{induce_deterministic, Mdp, Policy, PolicySpace};

/// Tolerance of the unmodified Bellman certificate.
pub const CERTIFICATE_TOL: f64 = 1e-8;

/// Gains closer than this to the componentwise maximum count as optimal.
const GAIN_MATCH_TOL: f64 = 1e-9;

/// How [`optimal_gain_bias`] searches for a Blackwell-optimal candidate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GainMode {
    /// Evaluate every deterministic policy (needs `A^S <= 10^6`).
    ExactEnumeration,
    /// Policy iteration at discounts `1 - 2^-k`, `k = 4..=40`.
    DiscountSweep,
}

/// Certified `(rho*, h*)` and a deterministic policy attaining them.
#[derive(Clone, Debug, Serialize)]
pub struct OptimalGainBias {
    #[serde(flatten)]
    pub gain_bias: GainBias,
    pub policy: Policy,
    pub certificate: Certificate,
}

impl OptimalGainBias {
    pub fn gain(&self) -> &[f64] {
        &self.gain_bias.gain
    }

    pub fn bias(&self) -> &[f64] {
        &self.gain_bias.bias
    }

    pub fn span(&self) -> f64 {
        self.gain_bias.span()
    }
}

/// Defects of the unmodified average-reward Bellman equations:
/// `rho(s) >= max_a P_sa rho` and
/// `rho(s) + h(s) = max_{a : P_sa rho = rho(s)} r_sa + P_sa h`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Certificate {
    pub gain_defect: f64,
    pub bias_defect: f64,
}

impl Certificate {
    pub fn passes(&self, tol: f64) -> bool {
        self.gain_defect <= tol && self.bias_defect <= tol
    }
}

fn dot(row: &[f64], v: &[f64]) -> f64 {
    row.iter().zip(v).map(|(p, x)| p * x).sum()
}

pub fn bellman_certificate(mdp: &Mdp, gain: &[f64], bias: &[f64], tol: f64) -> Certificate {
    let mut gain_defect: f64 = 0.0;
    let mut bias_defect: f64 = 0.0;
    for s in 0..mdp.num_states() {
        let mut best_bias = f64::NEG_INFINITY;
        for a in 0..mdp.num_actions() {
            let row = mdp.row(s, a);
            let pg = dot(row, gain);
            gain_defect = gain_defect.max(pg - gain[s]);
            if (pg - gain[s]).abs() <= tol {
                best_bias = best_bias.max(mdp.reward(s, a) + dot(row, bias));
            }
        }
        bias_defect = bias_defect.max((gain[s] + bias[s] - best_bias).abs());
    }
    Certificate { gain_defect, bias_defect }
}

/// `rho*` and `h*` with a certified Blackwell-candidate policy.
pub fn optimal_gain_bias(mdp: &Mdp, mode: GainMode) -> Result<OptimalGainBias> {
    match mode {
        GainMode::ExactEnumeration => by_enumeration(mdp),
        GainMode::DiscountSweep => by_discount_sweep(mdp),
    }
}

/// Enumeration when the budget allows, otherwise the discount sweep.
pub fn optimal_gain_bias_auto(mdp: &Mdp) -> Result<OptimalGainBias> {
    match by_enumeration(mdp) {
        Err(Error::EnumerationBudget { .. }) => by_discount_sweep(mdp),
        other => other,
    }
}

fn certified(mdp: &Mdp, gb: GainBias, actions: &[usize]) -> Result<Option<OptimalGainBias>> {
    let certificate = bellman_certificate(mdp, &gb.gain, &gb.bias, CERTIFICATE_TOL);
    if !certificate.passes(CERTIFICATE_TOL) {
        return Ok(None);
    }
    Ok(Some(OptimalGainBias { gain_bias: gb, policy: Policy::deterministic(actions, mdp.num_actions())?, certificate }))
}

fn by_enumeration(mdp: &Mdp) -> Result<OptimalGainBias> {
    let space = mdp.policy_space()?;
    let mut evaluated = Vec::with_capacity(space.len() as usize);
    let mut best = vec![f64::NEG_INFINITY; mdp.num_states()];
    for i in 0..space.len() {
        let gb = gain_and_bias(&induce_deterministic(mdp, &space.decode(i)))?;
        for (b, g) in best.iter_mut().zip(&gb.gain) {
            *b = b.max(*g);
        }
        evaluated.push(gb);
    }
    // Among gain-optimal policies the bias-optimal one dominates componentwise,
    // so it maximizes the bias sum; ties go to the lowest index.
    let mut candidates: Vec<(u64, f64)> = evaluated
        .iter()
        .enumerate()
        .filter(|(_, gb)| gb.gain.iter().zip(&best).all(|(g, b)| (g - b).abs() <= GAIN_MATCH_TOL))
        .map(|(i, gb)| (i as u64, gb.bias.iter().sum::<f64>()))
        .collect();
    candidates.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
    for (i, _) in candidates {
        let gb = evaluated[i as usize].clone();
        if let Some(out) = certified(mdp, gb, &space.decode(i))? {
            return Ok(out);
        }
    }
    Err(Error::BlackwellDetection("no gain-optimal deterministic policy passes the Bellman certificate".into()))
}

/// Policy iteration for a discounted problem with `gamma` close to one. Values
/// are represented as `rho/(1-gamma) + w` with `(I - gamma P + P^inf) w = r - rho`,
/// which stays well conditioned as `gamma -> 1`.
fn near_blackwell_policy_iteration(mdp: &Mdp, gamma: f64, mut actions: Vec<usize>) -> Result<Vec<usize>> {
    let ns = mdp.num_states();
    let scale = 1.0 / (1.0 - gamma);
    for _ in 0..10_000 {
        let chain = induce_deterministic(mdp, &actions);
        let dec = decompose_chain(&chain);
        let p_inf = limiting_matrix(&dec, &chain)?;
        let rho = &p_inf * &chain.reward;
        let lhs = DMatrix::identity(ns, ns) - &chain.transition * gamma + &p_inf;
        let w = linalg::solve(lhs, &(&chain.reward - &rho), "discounted offset")?;
        let (rho, w) = (rho.as_slice(), w.as_slice());
        let tie = 1e-9 * w.iter().fold(1.0_f64, |m, x| m.max(x.abs()));
        let mut changed = false;
        for s in 0..ns {
            let advantage = |a: usize| {
                let row = mdp.row(s, a);
                let pr = dot(row, rho);
                let mut g = pr - rho[s];
                if g.abs() <= 1e-11 {
                    g = 0.0;
                }
                g * scale - pr + mdp.reward(s, a) + gamma * dot(row, w) - w[s]
            };
            let current = advantage(actions[s]);
            let best = (0..mdp.num_actions()).map(advantage).fold(f64::NEG_INFINITY, f64::max);
            if best > current + tie {
                actions[s] = (0..mdp.num_actions()).find(|&a| advantage(a) >= best - tie).unwrap();
                changed = true;
            }
        }
        if !changed {
            return Ok(actions);
        }
    }
    Err(Error::Numerical(format!("policy iteration did not settle at discount {gamma}")))
}

fn by_discount_sweep(mdp: &Mdp) -> Result<OptimalGainBias> {
    let mut actions = vec![0; mdp.num_states()];
    let mut previous: Option<Vec<usize>> = None;
    for k in 4..=40 {
        let gamma = 1.0 - 0.5f64.powi(k);
        actions = near_blackwell_policy_iteration(mdp, gamma, actions)?;
        if previous.as_ref() == Some(&actions) {
            let gb = gain_and_bias(&induce_deterministic(mdp, &actions))?;
            if let Some(out) = certified(mdp, gb, &actions)? {
                return Ok(out);
            }
        }
        previous = Some(actions.clone());
    }
    Err(Error::BlackwellDetection(
        "greedy policies up to discount 1 - 2^-40 never passed the Bellman certificate".into(),
    ))
}

/// `B = max_pi max_{s transient} e_s^T (I - Z_pi)^{-1} 1`, zero without transient states.
pub fn transient_time_param(mdp: &Mdp) -> Result<f64> {
    let space = mdp.policy_space()?;
    let mut best: f64 = 0.0;
    for i in 0..space.len() {
        let dec = decompose_chain(&induce_deterministic(mdp, &space.decode(i)));
        best = best.max(expected_transient_time(&dec)?.iter().fold(0.0, |m, &x| m.max(x)));
    }
    Ok(best)
}

/// States from which `target` is reached with probability one under some policy,
/// together with a proper policy achieving it.
fn almost_sure_reach(mdp: &Mdp, target: usize) -> (Vec<bool>, Vec<usize>) {
    let (ns, na) = (mdp.num_states(), mdp.num_actions());
    let mut allowed = vec![true; ns];
    loop {
        // least fixpoint: states that can move toward target without leaving `allowed`
        let mut reach = vec![false; ns];
        let mut choice = vec![0; ns];
        reach[target] = true;
        let mut grew = true;
        while grew {
            grew = false;
            let layer = reach.clone();
            for s in 0..ns {
                if reach[s] || !allowed[s] {
                    continue;
                }
                for a in 0..na {
                    let row = mdp.row(s, a);
                    let stays = row.iter().enumerate().all(|(t, &p)| p <= 0.0 || allowed[t]);
                    let hits = row.iter().enumerate().any(|(t, &p)| p > 0.0 && layer[t]);
                    if stays && hits {
                        reach[s] = true;
                        choice[s] = a;
                        grew = true;
                        break;
                    }
                }
            }
        }
        if reach == allowed {
            return (reach, choice);
        }
        allowed = reach;
    }
}

/// Minimal expected hitting times of `target`; infinity where unreachable.
fn min_hitting_times(mdp: &Mdp, target: usize) -> Result<Vec<f64>> {
    let (ns, na) = (mdp.num_states(), mdp.num_actions());
    let (reach, mut actions) = almost_sure_reach(mdp, target);
    let members: Vec<usize> = (0..ns).filter(|&s| reach[s] && s != target).collect();
    let pos: Vec<Option<usize>> = {
        let mut pos = vec![None; ns];
        for (i, &s) in members.iter().enumerate() {
            pos[s] = Some(i);
        }
        pos
    };
    let admissible = |s: usize, a: usize| mdp.row(s, a).iter().enumerate().all(|(t, &p)| p <= 0.0 || reach[t]);
    let m = members.len();
    let mut times = vec![f64::INFINITY; ns];
    times[target] = 0.0;
    if m == 0 {
        return Ok(times);
    }
    // policy iteration for the stochastic shortest path, starting proper
    let mut h = DVector::zeros(m);
    for _ in 0..10_000 {
        let mut q = DMatrix::identity(m, m);
        for (i, &s) in members.iter().enumerate() {
            for (t, &p) in mdp.row(s, actions[s]).iter().enumerate() {
                if let Some(j) = pos[t] {
                    q[(i, j)] -= p;
                }
            }
        }
        h = linalg::solve(q, &DVector::from_element(m, 1.0), "hitting times")?;
        let expected = |s: usize, a: usize| -> f64 {
            1.0 + mdp.row(s, a).iter().enumerate().map(|(t, &p)| pos[t].map_or(0.0, |j| p * h[j])).sum::<f64>()
        };
        let tie = 1e-10 * h.amax().max(1.0);
        let mut changed = false;
        for &s in &members {
            let current = expected(s, actions[s]);
            let best = (0..na)
                .filter(|&a| admissible(s, a))
                .map(|a| (a, expected(s, a)))
                .fold((actions[s], current), |acc, x| if x.1 < acc.1 - tie { x } else { acc });
            if best.0 != actions[s] {
                actions[s] = best.0;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    for (i, &s) in members.iter().enumerate() {
        times[s] = h[i];
    }
    Ok(times)
}

/// `D = max_{s1 != s2} min_pi E[time to reach s2 from s1]`.
///
/// Solved exactly per target: almost-sure reachability fixpoint, then policy
/// iteration on the stochastic shortest-path problem from a proper policy.
pub fn diameter(mdp: &Mdp) -> Result<f64> {
    let mut d: f64 = 0.0;
    for target in 0..mdp.num_states() {
        for t in min_hitting_times(mdp, target)? {
            d = d.max(t);
        }
    }
    Ok(d)
}

/// Per-policy mixing times (enumeration order) and their supremum.
#[derive(Clone, Debug, Serialize)]
pub struct MixingTimes {
    #[serde(serialize_with = "ser_vec_inf")]
    pub per_policy: Vec<f64>,
    #[serde(serialize_with = "ser_inf")]
    pub tau_unif: f64,
}

pub fn mixing_times(mdp: &Mdp) -> Result<MixingTimes> {
    let space: PolicySpace = mdp.policy_space()?;
    let mut per_policy = Vec::with_capacity(space.len() as usize);
    let mut tau_unif: f64 = 0.0;
    for i in 0..space.len() {
        let tau = mixing_time(&induce_deterministic(mdp, &space.decode(i)))?;
        tau_unif = tau_unif.max(tau);
        per_policy.push(tau);
    }
    Ok(MixingTimes { per_policy, tau_unif })
}

fn ser_inf<S: Serializer>(x: &f64, ser: S) -> std::result::Result<S::Ok, S::Error> {
    if x.is_infinite() {
        ser.serialize_str("inf")
    } else {
        ser.serialize_f64(*x)
    }
}

fn ser_vec_inf<S: Serializer>(xs: &[f64], ser: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = ser.serialize_seq(Some(xs.len()))?;
    for x in xs {
        if x.is_infinite() {
            seq.serialize_element("inf")?;
        } else {
            seq.serialize_element(x)?;
        }
    }
    seq.end()
}

/// H, B, D and tau_unif of an MDP. Infinite values serialize as `"inf"`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[allow(non_snake_case)]
pub struct ComplexityParams {
    pub span_H: f64,
    pub transient_B: f64,
    #[serde(serialize_with = "ser_inf")]
    pub diameter_D: f64,
    #[serde(serialize_with = "ser_inf")]
    pub tau_unif: f64,
}

/// Everything `analyze` reports about an MDP.
#[derive(Clone, Debug, Serialize)]
pub struct Analysis {
    #[serde(flatten)]
    pub params: ComplexityParams,
    pub gain: Vec<f64>,
    pub bias: Vec<f64>,
    pub residuals: crate::chain::Residuals,
    pub policy: Policy,
}

pub fn analyze(mdp: &Mdp) -> Result<Analysis> {
    let opt = optimal_gain_bias(mdp, GainMode::ExactEnumeration)?;
    let params = ComplexityParams {
        span_H: opt.span(),
        transient_B: transient_time_param(mdp)?,
        diameter_D: diameter(mdp)?,
        tau_unif: mixing_times(mdp)?.tau_unif,
    };
    Ok(Analysis {
        params,
        gain: opt.gain_bias.gain,
        bias: opt.gain_bias.bias,
        residuals: opt.gain_bias.residuals,
        policy: opt.policy,
    })
}

/// Gain of an arbitrary (possibly randomized) policy.
pub fn policy_gain(mdp: &Mdp, policy: &Policy) -> Result<Vec<f64>> {
    let chain = crate::mdp::induce_chain(mdp, policy)?;
    let dec = decompose_chain(&chain);
    let p_inf = limiting_matrix(&dec, &chain)?;
    Ok(gain_and_bias_with(&chain, &p_inf)?.gain)
}
