//! Generators for the structured hard instances and random test families, and
//! the two-point testing utilities used by the lower-bound experiments.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::{decompose_chain, gain_and_bias};
use crate::error::{Error, Result};
use crate::generative::substream;
use crate::mdp::{induce_deterministic, Mdp, MdpDoc};

fn invalid(msg: String) -> Error {
    Error::InvalidParameter(msg)
}

/// Three states: state 0 chooses between a reward-1 action that stays with
/// probability `1 - 1/T` and otherwise falls into the zero-reward sink 2, and
/// a reward-1/2 action moving to the absorbing reward-1/2 state 1. Extra
/// actions duplicate action 0.
pub fn gen_fig1(t: f64, num_actions: usize) -> Result<Mdp> {
    if !(t >= 1.0) {
        return Err(invalid(format!("T = {t} must be at least 1")));
    }
    if num_actions < 2 {
        return Err(invalid(format!("need at least 2 actions, got {num_actions}")));
    }
    let stay = vec![1.0 - 1.0 / t, 0.0, 1.0 / t];
    let mut transitions =
        vec![vec![stay; num_actions], vec![vec![0.0, 1.0, 0.0]; num_actions], vec![vec![0.0, 0.0, 1.0]; num_actions]];
    transitions[0][1] = vec![0.0, 1.0, 0.0];
    let mut rewards = vec![vec![1.0; num_actions], vec![0.5; num_actions], vec![0.0; num_actions]];
    rewards[0][1] = 0.5;
    Mdp::from_doc(MdpDoc { num_states: 3, num_actions, transitions, rewards })
}

/// The two single-action four-state instances of the span-knowledge lower bound.
#[derive(Clone, Debug)]
pub struct Thm3Pair {
    pub m0: Mdp,
    pub m1: Mdp,
    /// Split imbalance `1/(4 sqrt(n))`.
    pub eps: f64,
    /// Calibrated return rate parameter of state 3.
    pub b: f64,
    /// Measured bias span of `m1` (equals `T` up to calibration tolerance).
    pub span_m1: f64,
}

fn thm3_instance(eps: f64, b: f64) -> Result<Mdp> {
    Mdp::from_nested(
        vec![
            vec![vec![0.0, 0.5 + eps, 0.5 - eps, 0.0]],
            vec![vec![1.0, 0.0, 0.0, 0.0]],
            vec![vec![1.0, 0.0, 0.0, 0.0]],
            vec![vec![1.0 / b, 0.0, 0.0, 1.0 - 1.0 / b]],
        ],
        vec![vec![0.5], vec![1.0], vec![0.0], vec![0.5]],
    )
}

fn single_action_span(mdp: &Mdp) -> Result<f64> {
    Ok(gain_and_bias(&induce_deterministic(mdp, &vec![0; mdp.num_states()]))?.span())
}

/// Builds the pair with `eps = 1/(4 sqrt(n))` and calibrates `B` by bisection
/// so that the bias span of `m1` equals `T`.
///
/// The closed-form `B` suggested with the construction does not hit span `T`
/// (its bias vector does not solve the evaluation equations); it only seeds
/// the bracket.
pub fn gen_thm3_pair(n: usize, t: f64) -> Result<Thm3Pair> {
    if n == 0 {
        return Err(invalid("n must be positive".into()));
    }
    if !(t >= 1.0) {
        return Err(Error::Generation(format!("span target T = {t} is below the unit span of M0")));
    }
    let eps = 1.0 / (4.0 * (n as f64).sqrt());
    let span_at = |b: f64| thm3_instance(eps, b).and_then(|m| single_action_span(&m));
    let (mut lo, mut hi) = (1.0, (2.0 * t / eps - 0.5).max(2.0));
    while span_at(hi)? < t {
        hi *= 2.0;
        if hi > 1e15 {
            return Err(Error::Generation(format!("cannot reach span {t}")));
        }
    }
    let mut b = if span_at(lo)? >= t { lo } else { hi };
    if b != lo {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if span_at(mid)? < t {
                lo = mid;
            } else {
                hi = mid;
            }
            b = hi;
            if (span_at(b)? - t).abs() <= 1e-10 || hi - lo <= 1e-13 * hi {
                break;
            }
        }
    }
    let m1 = thm3_instance(eps, b)?;
    let span_m1 = single_action_span(&m1)?;
    if (span_m1 - t).abs() > 1e-6 {
        return Err(Error::Generation(format!("calibrated span {span_m1} misses target {t}")));
    }
    Ok(Thm3Pair { m0: thm3_instance(0.0, b)?, m1, eps, b, span_m1 })
}

/// Parameters of the block lower-bound instance. Indices are 0-based:
/// `s_star` is a block index in `0..S/4`, `a_star` an action in `1..A`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MasterLbParams {
    pub num_states: usize,
    pub num_actions: usize,
    pub b: f64,
    pub eps: f64,
    pub s_star: usize,
    pub a_star: usize,
}

/// `S/4` disjoint four-state blocks. In each block, state 0 either moves to
/// the reward-1/2 sink (action 0) or, with any other action, earns
/// `(1+2eps)/2`, stays with probability `1 - 1/B`, and otherwise exits to the
/// reward-1 sink (state 1) or the reward-0 sink (state 2) with probabilities
/// `(1-2eps)/(2B)` and `(1+2eps)/(2B)`; the favorable pair `(s_star, a_star)`
/// swaps the two exit probabilities. State 3 is the reward-1/2 sink.
pub fn gen_master_lb(p: &MasterLbParams) -> Result<Mdp> {
    let MasterLbParams { num_states: ns, num_actions: na, b, eps, s_star, a_star } = *p;
    if ns < 8 || ns % 8 != 0 {
        return Err(invalid(format!("S = {ns} must be a positive multiple of 8")));
    }
    if na < 4 {
        return Err(invalid(format!("A = {na} must be at least 4")));
    }
    if !(b >= 1.0) {
        return Err(invalid(format!("B = {b} must be at least 1")));
    }
    if !(eps > 0.0 && eps < 0.25) {
        return Err(invalid(format!("eps = {eps} must lie in (0, 1/4)")));
    }
    if s_star >= ns / 4 || a_star == 0 || a_star >= na {
        return Err(invalid(format!("favorable pair ({s_star}, {a_star}) out of range")));
    }
    let mut transitions = vec![vec![vec![0.0; ns]; na]; ns];
    let mut rewards = vec![vec![0.0; na]; ns];
    for block in 0..ns / 4 {
        let o = 4 * block;
        for a in 0..na {
            let row = &mut transitions[o][a];
            if a == 0 {
                row[o + 3] = 1.0;
                rewards[o][a] = 0.5;
            } else {
                let (lo, hi) = ((1.0 - 2.0 * eps) / (2.0 * b), (1.0 + 2.0 * eps) / (2.0 * b));
                let favorable = block == s_star && a == a_star;
                row[o] = 1.0 - 1.0 / b;
                row[o + 1] = if favorable { hi } else { lo };
                row[o + 2] = if favorable { lo } else { hi };
                rewards[o][a] = (1.0 + 2.0 * eps) / 2.0;
            }
            for (k, r) in [(1, 1.0), (2, 0.0), (3, 0.5)] {
                transitions[o + k][a][o + k] = 1.0;
                rewards[o + k][a] = r;
            }
        }
    }
    Mdp::from_doc_renormalized(MdpDoc { num_states: ns, num_actions: na, transitions, rewards })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RandomFamily {
    /// One communicating core plus states transient under every policy.
    WeaklyCommunicating,
    /// Several closed classes plus transient states feeding into them.
    General,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomParams {
    pub family: RandomFamily,
    pub num_states: usize,
    pub num_actions: usize,
    pub seed: u64,
    /// Closed classes planted by the general family.
    pub classes: usize,
    /// Fraction of states that are transient under every policy.
    pub transient_fraction: f64,
}

impl RandomParams {
    pub fn weakly_communicating(num_states: usize, num_actions: usize, seed: u64) -> Self {
        RandomParams {
            family: RandomFamily::WeaklyCommunicating,
            num_states,
            num_actions,
            seed,
            classes: 1,
            transient_fraction: 0.0,
        }
    }

    pub fn general(num_states: usize, num_actions: usize, seed: u64, classes: usize) -> Self {
        RandomParams { family: RandomFamily::General, num_states, num_actions, seed, classes, transient_fraction: 0.25 }
    }
}

/// Probability vector over `len` outcomes, supported on `mandatory` plus a
/// random subset of `optional`, with Dirichlet(1) weights on the support.
pub(crate) fn random_row(
    rng: &mut ChaCha8Rng,
    len: usize,
    mandatory: &[usize],
    optional: &[usize],
    density: f64,
) -> Vec<f64> {
    let mut row = vec![0.0; len];
    for &t in mandatory {
        row[t] = 1.0;
    }
    for &t in optional {
        if rng.random::<f64>() < density {
            row[t] = 1.0;
        }
    }
    for x in row.iter_mut().filter(|x| **x > 0.0) {
        let w: f64 = Exp1.sample(rng);
        *x = w.max(1e-3);
    }
    let sum: f64 = row.iter().sum();
    row.iter_mut().for_each(|x| *x /= sum);
    row
}

/// Random MDP from a structured family, checked against its planted structure.
pub fn gen_random(p: &RandomParams) -> Result<Mdp> {
    let (ns, na) = (p.num_states, p.num_actions);
    if ns == 0 || na == 0 {
        return Err(invalid(format!("need S, A >= 1 (got {ns}, {na})")));
    }
    if !(0.0..1.0).contains(&p.transient_fraction) {
        return Err(invalid(format!("transient fraction {} must lie in [0,1)", p.transient_fraction)));
    }
    let classes = match p.family {
        RandomFamily::WeaklyCommunicating => 1,
        RandomFamily::General => p.classes.max(1),
    };
    let transient = ((p.transient_fraction * ns as f64).floor() as usize).min(ns - classes.min(ns));
    if classes > ns - transient {
        return Err(invalid(format!("cannot plant {classes} classes in {ns} states")));
    }
    for attempt in 0..100u64 {
        let mut rng = substream(p.seed, attempt);
        let (mdp, planted) = draw_structured(&mut rng, ns, na, classes, transient)?;
        if verify_structure(&mdp, &planted, ns - transient) {
            return Ok(mdp);
        }
    }
    Err(Error::Generation("structure verification failed after 100 draws".into()))
}

fn draw_structured(
    rng: &mut ChaCha8Rng,
    ns: usize,
    na: usize,
    classes: usize,
    transient: usize,
) -> Result<(Mdp, Vec<Vec<usize>>)> {
    let core = ns - transient;
    // split the core states into `classes` contiguous groups of size >= 1
    let mut cuts: Vec<usize> = (1..core).collect();
    cuts.shuffle(rng);
    let mut cuts: Vec<usize> = cuts.into_iter().take(classes - 1).collect();
    cuts.sort_unstable();
    let mut bounds = vec![0];
    bounds.extend(cuts);
    bounds.push(core);
    let planted: Vec<Vec<usize>> = bounds.windows(2).map(|w| (w[0]..w[1]).collect()).collect();

    let mut transitions = vec![vec![vec![0.0; ns]; na]; ns];
    for class in &planted {
        let mut order = class.clone();
        order.shuffle(rng);
        for (i, &s) in order.iter().enumerate() {
            let succ = order[(i + 1) % order.len()];
            for a in 0..na {
                let mandatory: Vec<usize> =
                    if a == 0 { vec![succ] } else { vec![class[rng.random_range(0..class.len())]] };
                transitions[s][a] = random_row(rng, ns, &mandatory, class, 0.4);
            }
        }
    }
    let all_states: Vec<usize> = (0..ns).collect();
    for s in core..ns {
        for a in 0..na {
            let into = rng.random_range(0..core);
            // mass into the closed core under every action keeps these states transient
            transitions[s][a] = random_row(rng, ns, &[into], &all_states, 0.4);
        }
    }
    let rewards: Vec<Vec<f64>> = (0..ns).map(|_| (0..na).map(|_| rng.random::<f64>()).collect()).collect();
    let mdp = Mdp::from_doc_renormalized(MdpDoc { num_states: ns, num_actions: na, transitions, rewards })?;
    Ok((mdp, planted))
}

/// Union-support check: planted classes are closed and strongly connected,
/// and the remaining states are transient under action 0 and every other policy.
fn verify_structure(mdp: &Mdp, planted: &[Vec<usize>], core: usize) -> bool {
    let ns = mdp.num_states();
    let chain = induce_deterministic(mdp, &vec![0; ns]);
    let dec = decompose_chain(&chain);
    if dec.recurrent_classes != planted {
        return false;
    }
    // every transient row must carry mass into the core under every action
    (core..ns).all(|s| (0..mdp.num_actions()).all(|a| mdp.row(s, a)[..core].iter().any(|&p| p > 0.0)))
}

/// `KL(p || q)` in nats and the total variation distance `||p - q||_1 / 2`.
pub fn kl_and_tv(p: &[f64], q: &[f64]) -> Result<(f64, f64)> {
    if p.len() != q.len() || p.is_empty() {
        return Err(Error::DimensionMismatch(format!("supports of size {} and {}", p.len(), q.len())));
    }
    for (name, d) in [("p", p), ("q", q)] {
        if d.iter().any(|&x| !(x >= 0.0)) || (d.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(invalid(format!("{name} is not a probability vector")));
        }
    }
    let mut kl = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        if a > 0.0 {
            if b <= 0.0 {
                return Err(invalid("q vanishes where p is positive".into()));
            }
            kl += a * (a / b).ln();
        }
    }
    let tv = 0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>();
    Ok((kl.max(0.0), tv))
}

/// Outcome of the two-point testing experiment.
#[derive(Clone, Debug, Serialize)]
pub struct DistinguishResult {
    pub n: usize,
    pub eps: f64,
    pub trials: usize,
    pub failures: usize,
    pub failure_rate: f64,
    /// Binomial standard error of `failure_rate`.
    pub std_error: f64,
    /// Three standard errors.
    pub half_width: f64,
    /// Per-sample `KL(Q0 || Q1)` of the split row.
    pub kl: f64,
    /// `(1 - sqrt(n KL / 2)) / 2`, clipped at zero.
    pub le_cam_floor: f64,
}

/// Draws the true instance uniformly from the pair, observes `n` transitions
/// out of state 0 and applies the likelihood-ratio test (ties favor `m0`).
///
/// Only the number of moves to state 1 matters to the test, so each trial
/// draws that count from its binomial law instead of `n` separate samples.
/// `eps_override` replaces the construction's `1/(4 sqrt(n))`.
pub fn distinguishability_experiment(
    n: usize,
    t: f64,
    trials: usize,
    seed: u64,
    eps_override: Option<f64>,
) -> Result<DistinguishResult> {
    if trials == 0 || n == 0 {
        return Err(invalid("need n >= 1 and trials >= 1".into()));
    }
    let eps = match eps_override {
        Some(e) if (0.0..0.5).contains(&e) => e,
        Some(e) => return Err(invalid(format!("eps = {e} must lie in [0, 1/2)"))),
        None => gen_thm3_pair(n, t)?.eps,
    };
    let (p0, p1) = (0.5, 0.5 + eps);
    let (kl, _) = kl_and_tv(&[p0, 1.0 - p0], &[p1, 1.0 - p1])?;
    let (up, down) = ((1.0 + 2.0 * eps).ln(), (1.0 - 2.0 * eps).ln());
    let b0 = Binomial::new(n as u64, p0).map_err(|e| invalid(e.to_string()))?;
    let b1 = Binomial::new(n as u64, p1).map_err(|e| invalid(e.to_string()))?;
    let failures: usize = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = substream(seed, trial as u64);
            let truth_is_m1: bool = rng.random();
            let k = if truth_is_m1 { b1.sample(&mut rng) } else { b0.sample(&mut rng) } as f64;
            let llr = k * up + (n as f64 - k) * down;
            usize::from((llr > 0.0) != truth_is_m1)
        })
        .sum();
    let rate = failures as f64 / trials as f64;
    let std_error = (rate * (1.0 - rate) / trials as f64).sqrt();
    Ok(DistinguishResult {
        n,
        eps,
        trials,
        failures,
        failure_rate: rate,
        std_error,
        half_width: 3.0 * std_error,
        kl,
        le_cam_floor: (0.5 * (1.0 - (n as f64 * kl / 2.0).sqrt())).max(0.0),
    })
}

/// A single generated instance, as named in sweep configurations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum InstanceSpec {
    Fig1 { t: f64, num_actions: usize },
    MasterLb(MasterLbParams),
    Random(RandomParams),
}

impl InstanceSpec {
    pub fn build(&self) -> Result<Mdp> {
        match self {
            InstanceSpec::Fig1 { t, num_actions } => gen_fig1(*t, *num_actions),
            InstanceSpec::MasterLb(p) => gen_master_lb(p),
            InstanceSpec::Random(p) => gen_random(p),
        }
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            InstanceSpec::Fig1 { .. } => "fig1",
            InstanceSpec::MasterLb(_) => "master_lb",
            InstanceSpec::Random(p) => match p.family {
                RandomFamily::WeaklyCommunicating => "random_wc",
                RandomFamily::General => "random_general",
            },
        }
    }

    /// `(H, B)` the construction targets, where known in closed form.
    pub fn expected_span_and_transient(&self) -> Option<(f64, f64)> {
        match self {
            InstanceSpec::Fig1 { t, .. } => Some((0.0, *t)),
            InstanceSpec::MasterLb(p) => Some((0.0, p.b)),
            InstanceSpec::Random(_) => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{diameter, optimal_gain_bias, transient_time_param, GainMode};

    #[test]
    fn fig1_shape() {
        let mdp = gen_fig1(4.0, 3).unwrap();
        assert_eq!(mdp.row(0, 0), &[0.75, 0.0, 0.25]);
        assert_eq!(mdp.row(0, 2), &[0.75, 0.0, 0.25]);
        assert_eq!(mdp.row(0, 1), &[0.0, 1.0, 0.0]);
        assert_eq!(mdp.reward(0, 1), 0.5);
        assert!(gen_fig1(0.5, 2).is_err());
        assert!(gen_fig1(2.0, 1).is_err());
    }

    #[test]
    fn thm3_pair_spans() {
        for (n, t) in [(16, 4.0), (100, 10.0), (1, 1.0)] {
            let pair = gen_thm3_pair(n, t).unwrap();
            assert!((single_action_span(&pair.m0).unwrap() - 1.0).abs() < 1e-9);
            assert!((pair.span_m1 - t).abs() < 1e-6, "{} vs {t}", pair.span_m1);
        }
        assert_eq!(gen_thm3_pair(16, 4.0).unwrap().eps, 0.0625);
        assert!(gen_thm3_pair(16, 0.5).is_err());
    }

    /// The bias of the unbalanced instance has the closed form
    /// `h = [-e/4, 1/2 - 3e/4, -1/2 - 3e/4, -Be/2 - e/4]` with gain `1/2 + e/2`,
    /// so the span is `max(1, (1 + (B-1)e)/2)` and `B = (2T - 1)/e + 1` hits span `T`.
    #[test]
    fn thm3_calibration_matches_closed_form() {
        let pair = gen_thm3_pair(100, 10.0).unwrap();
        let e = pair.eps;
        assert!((pair.b - ((2.0 * 10.0 - 1.0) / e + 1.0)).abs() < 1e-6 * pair.b);
        let gb = gain_and_bias(&induce_deterministic(&pair.m1, &[0; 4])).unwrap();
        let b = pair.b;
        let h = [-e / 4.0, 0.5 - 0.75 * e, -0.5 - 0.75 * e, -b * e / 2.0 - e / 4.0];
        for s in 0..4 {
            assert!((gb.gain[s] - (0.5 + e / 2.0)).abs() < 1e-10);
            assert!((gb.bias[s] - h[s]).abs() < 1e-7);
        }
    }

    #[test]
    fn master_lb_structure() {
        let p = MasterLbParams { num_states: 8, num_actions: 5, b: 4.0, eps: 0.2, s_star: 1, a_star: 3 };
        let mdp = gen_master_lb(&p).unwrap();
        assert!((mdp.row(4, 3)[5] - 1.4 / 8.0).abs() < 1e-15);
        assert!((mdp.row(4, 2)[5] - 0.6 / 8.0).abs() < 1e-15);
        assert!((mdp.row(0, 3)[1] - 0.6 / 8.0).abs() < 1e-15);
        assert_eq!(mdp.row(0, 0)[3], 1.0);
        assert!(gen_master_lb(&MasterLbParams { eps: 0.3, ..p }).is_err());
        assert!(gen_master_lb(&MasterLbParams { a_star: 0, ..p }).is_err());
        assert!(gen_master_lb(&MasterLbParams { num_states: 12, ..p }).is_err());
    }

    #[test]
    fn random_wc_has_finite_diameter() {
        let mdp = gen_random(&RandomParams::weakly_communicating(4, 2, 7)).unwrap();
        assert!(diameter(&mdp).unwrap().is_finite());
    }

    #[test]
    fn random_wc_with_transient_states() {
        for seed in 0..20 {
            let p = RandomParams { transient_fraction: 0.4, ..RandomParams::weakly_communicating(5, 2, seed) };
            let mdp = gen_random(&p).unwrap();
            let opt = optimal_gain_bias(&mdp, GainMode::ExactEnumeration).unwrap();
            let spread = crate::linalg::span(opt.gain());
            assert!(spread < 1e-9);
            assert!(diameter(&mdp).unwrap().is_infinite());
            assert!(transient_time_param(&mdp).unwrap() > 0.0);
        }
    }

    #[test]
    fn random_general_gain_varies() {
        let mut varied = 0;
        for seed in 0..20 {
            let mdp = gen_random(&RandomParams::general(6, 2, seed, 2)).unwrap();
            let opt = optimal_gain_bias(&mdp, GainMode::ExactEnumeration).unwrap();
            varied += usize::from(crate::linalg::span(opt.gain()) > 0.0);
        }
        assert_eq!(varied, 20);
    }

    #[test]
    fn single_state_random() {
        let mdp = gen_random(&RandomParams::weakly_communicating(1, 3, 0)).unwrap();
        assert_eq!(mdp.row(0, 2), &[1.0]);
        assert_eq!(diameter(&mdp).unwrap(), 0.0);
        assert_eq!(transient_time_param(&mdp).unwrap(), 0.0);
    }

    #[test]
    fn kl_tv_examples() {
        assert_eq!(kl_and_tv(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), (0.0, 0.0));
        let e: f64 = 0.25;
        let (kl, tv) = kl_and_tv(&[0.5, 0.5], &[0.5 + e, 0.5 - e]).unwrap();
        assert!((kl - 0.5 * (1.0 / (1.0 - 4.0 * e * e)).ln()).abs() < 1e-15);
        assert!(kl <= 8.0 * e * e);
        assert!((tv - e).abs() < 1e-15);
        assert!(kl_and_tv(&[0.5, 0.5], &[1.0, 0.0]).is_err());
        assert!(kl_and_tv(&[1.0], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn identical_instances_are_a_coin_flip() {
        let r = distinguishability_experiment(16, 4.0, 20_000, 3, Some(0.0)).unwrap();
        assert!((r.failure_rate - 0.5).abs() <= 3.0 * (0.25f64 / 20_000.0).sqrt());
    }

    #[test]
    fn experiment_is_reproducible() {
        let a = distinguishability_experiment(64, 3.0, 5000, 11, None).unwrap();
        let b = distinguishability_experiment(64, 3.0, 5000, 11, None).unwrap();
        assert_eq!(a.failures, b.failures);
        assert!((a.eps - 1.0 / 32.0).abs() < 1e-15);
    }

    #[test]
    fn spec_round_trip() {
        let spec = InstanceSpec::MasterLb(MasterLbParams {
            num_states: 8,
            num_actions: 4,
            b: 3.0,
            eps: 0.1,
            s_star: 0,
            a_star: 1,
        });
        let json = serde_json::to_string(&spec).unwrap();
        assert!(json.contains("\"family\":\"master_lb\""));
        let back: InstanceSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, spec);
    }
}
