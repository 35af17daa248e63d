//! Simulator access to an MDP and the perturbed empirical model built from it.

use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::Distribution;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::mdp::{check_discount, Mdp};

/// Rows with more outcomes than this are sampled with the alias method.
pub const ALIAS_THRESHOLD: usize = 32;

enum RowSampler {
    Point(usize),
    Cdf(WeightedIndex<f64>),
    Alias(WeightedAliasIndex<f64>),
}

impl RowSampler {
    fn new(row: &[f64]) -> Result<Self> {
        let support: Vec<usize> = (0..row.len()).filter(|&t| row[t] > 0.0).collect();
        if support.len() == 1 {
            return Ok(RowSampler::Point(support[0]));
        }
        let fail = |e: &dyn std::fmt::Display| Error::InvalidMdp(format!("cannot sample row: {e}"));
        if row.len() > ALIAS_THRESHOLD {
            WeightedAliasIndex::new(row.to_vec()).map(RowSampler::Alias).map_err(|e| fail(&e))
        } else {
            WeightedIndex::new(row).map(RowSampler::Cdf).map_err(|e| fail(&e))
        }
    }

    #[inline]
    fn sample(&self, rng: &mut ChaCha8Rng) -> usize {
        match self {
            RowSampler::Point(t) => *t,
            RowSampler::Cdf(d) => d.sample(rng),
            RowSampler::Alias(d) => d.sample(rng),
        }
    }
}

/// Random stream for pair `(s, a)` is `s*A + a`; stream `S*A` drives the
/// reward perturbation.
pub(crate) fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Generative model: independent next-state draws for any queried pair, each
/// pair with its own reproducible random stream derived from `seed`.
pub struct GenerativeModel {
    mdp: Mdp,
    seed: u64,
    samplers: Vec<RowSampler>,
    streams: Vec<ChaCha8Rng>,
    calls: u64,
}

impl GenerativeModel {
    pub fn new(mdp: Mdp, seed: u64) -> Result<Self> {
        let (ns, na) = (mdp.num_states(), mdp.num_actions());
        let mut samplers = Vec::with_capacity(ns * na);
        let mut streams = Vec::with_capacity(ns * na);
        for s in 0..ns {
            for a in 0..na {
                samplers.push(RowSampler::new(mdp.row(s, a))?);
                streams.push(substream(seed, (s * na + a) as u64));
            }
        }
        Ok(GenerativeModel { mdp, seed, samplers, streams, calls: 0 })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Total simulator calls so far.
    pub fn calls(&self) -> u64 {
        self.calls
    }

    pub fn num_states(&self) -> usize {
        self.mdp.num_states()
    }

    pub fn num_actions(&self) -> usize {
        self.mdp.num_actions()
    }

    /// Known reward table; transitions are only reachable through sampling.
    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.mdp.reward(s, a)
    }

    /// The simulated MDP, for evaluation code that scores a learner's output.
    pub fn underlying(&self) -> &Mdp {
        &self.mdp
    }

    #[inline]
    pub fn sample_next_state(&mut self, s: usize, a: usize) -> usize {
        let k = s * self.mdp.num_actions() + a;
        self.calls += 1;
        self.samplers[k].sample(&mut self.streams[k])
    }
}

/// Empirical kernel `P_hat` from `n` draws per pair and rewards `r + U(0, xi)`.
#[derive(Clone, Debug, Serialize)]
pub struct EmpiricalModel {
    #[serde(skip)]
    pub mdp: Mdp,
    pub samples_per_pair: usize,
    pub perturbation_level: f64,
    pub seed: u64,
}

/// `xi = (1-gamma) eps / 6`.
pub fn perturbation_level(eps: f64, gamma: f64) -> f64 {
    (1.0 - gamma) * eps / 6.0
}

/// Draws `n` samples for every pair (in state-major order) and forms the
/// empirical model; with `perturb` the rewards get iid `Uniform[0, xi)` noise.
/// Perturbed rewards are not clamped to `[0, 1]`.
pub fn build_empirical(
    gm: &mut GenerativeModel,
    n: usize,
    eps: f64,
    gamma: f64,
    perturb: bool,
) -> Result<EmpiricalModel> {
    if n == 0 {
        return Err(Error::InvalidParameter("samples per pair must be at least 1".into()));
    }
    if perturb {
        check_discount(gamma)?;
        if !(eps > 0.0) {
            return Err(Error::InvalidParameter(format!("accuracy {eps} must be positive")));
        }
    }
    let (ns, na) = (gm.num_states(), gm.num_actions());
    let mut transitions = vec![0.0; ns * na * ns];
    let mut counts = vec![0u64; ns];
    for s in 0..ns {
        for a in 0..na {
            counts.iter_mut().for_each(|c| *c = 0);
            for _ in 0..n {
                counts[gm.sample_next_state(s, a)] += 1;
            }
            let base = (s * na + a) * ns;
            for (t, &c) in counts.iter().enumerate() {
                transitions[base + t] = c as f64 / n as f64;
            }
        }
    }
    let xi = if perturb { perturbation_level(eps, gamma) } else { 0.0 };
    let mut rewards = gm.mdp.rewards().to_vec();
    if perturb {
        let mut rng = substream(gm.seed, (ns * na) as u64);
        for r in rewards.iter_mut() {
            *r += xi * rng.random::<f64>();
        }
    }
    Ok(EmpiricalModel {
        mdp: Mdp::from_parts(ns, na, transitions, rewards),
        samples_per_pair: n,
        perturbation_level: xi,
        seed: gm.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::gen_fig1;
    use crate::mdp::MdpDoc;
    use crate::testutil::random_mdp;

    fn two_outcome(p: f64) -> Mdp {
        Mdp::from_doc(MdpDoc {
            num_states: 2,
            num_actions: 1,
            transitions: vec![vec![vec![p, 1.0 - p]], vec![vec![0.0, 1.0]]],
            rewards: vec![vec![0.0], vec![1.0]],
        })
        .unwrap()
    }

    #[test]
    fn point_mass_rows_are_deterministic() {
        let mut gm = GenerativeModel::new(two_outcome(0.5), 1).unwrap();
        assert!((0..100).all(|_| gm.sample_next_state(1, 0) == 1));
    }

    #[test]
    fn fig1_exit_frequency() {
        let mut gm = GenerativeModel::new(gen_fig1(4.0, 2).unwrap(), 17).unwrap();
        let draws = 1_000_000;
        let hits = (0..draws).filter(|_| gm.sample_next_state(0, 0) == 2).count();
        let freq = hits as f64 / draws as f64;
        assert!((freq - 0.25).abs() < 0.002, "{freq}");
    }

    /// Pearson chi-square with one degree of freedom; 10.83 is the 0.999 quantile.
    #[test]
    fn fair_row_chi_square() {
        let mut gm = GenerativeModel::new(two_outcome(0.5), 5).unwrap();
        let draws = 100_000;
        let zeros = (0..draws).filter(|_| gm.sample_next_state(0, 0) == 0).count() as f64;
        let e = draws as f64 / 2.0;
        let chi2 = (zeros - e).powi(2) / e + (draws as f64 - zeros - e).powi(2) / e;
        assert!(chi2 < 10.83, "chi2 = {chi2}");
    }

    #[test]
    fn alias_path_matches_probabilities() {
        let ns = 40;
        let mut row = vec![0.0; ns];
        row[3] = 0.6;
        row[39] = 0.4;
        let mut transitions = vec![vec![vec![0.0; ns]]; ns];
        for (s, t) in transitions.iter_mut().enumerate() {
            t[0] = if s == 0 { row.clone() } else { (0..ns).map(|k| if k == s { 1.0 } else { 0.0 }).collect() };
        }
        let mdp = Mdp::from_nested(transitions, vec![vec![0.0]; ns]).unwrap();
        let mut gm = GenerativeModel::new(mdp, 3).unwrap();
        assert!(matches!(gm.samplers[0], RowSampler::Alias(_)));
        let draws = 200_000;
        let hits = (0..draws).filter(|_| gm.sample_next_state(0, 0) == 3).count() as f64 / draws as f64;
        assert!((hits - 0.6).abs() < 0.005);
    }

    #[test]
    fn concentration_at_large_n() {
        let mut ok = 0;
        for seed in 0..100 {
            let mut gm = GenerativeModel::new(two_outcome(0.3), seed).unwrap();
            let emp = build_empirical(&mut gm, 1_000_000, 0.0, 0.0, false).unwrap();
            let l1 = (emp.mdp.row(0, 0)[0] - 0.3).abs() + (emp.mdp.row(0, 0)[1] - 0.7).abs();
            ok += (l1 <= 0.01) as usize;
        }
        assert!(ok >= 100);
    }

    #[test]
    fn deterministic_mdp_is_recovered_exactly() {
        let mdp = gen_fig1(1.0, 2).unwrap();
        let mut gm = GenerativeModel::new(mdp.clone(), 9).unwrap();
        let emp = build_empirical(&mut gm, 3, 0.0, 0.0, false).unwrap();
        assert_eq!(emp.mdp.transitions(), mdp.transitions());
        assert_eq!(emp.mdp.rewards(), mdp.rewards());
    }

    #[test]
    fn perturbation_level_arithmetic() {
        assert!((perturbation_level(0.6, 0.9) - 0.01).abs() < 1e-15);
    }

    #[test]
    fn empirical_invariants() {
        let mdp = random_mdp(4, 3, 8);
        let n = 37;
        let mut gm = GenerativeModel::new(mdp.clone(), 12).unwrap();
        let emp = build_empirical(&mut gm, n, 0.3, 0.95, true).unwrap();
        assert_eq!(gm.calls(), (n * 4 * 3) as u64);
        let xi = emp.perturbation_level;
        for s in 0..4 {
            for a in 0..3 {
                let row = emp.mdp.row(s, a);
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                for &p in row {
                    let k = p * n as f64;
                    assert!((k - k.round()).abs() < 1e-9);
                }
                let d = emp.mdp.reward(s, a) - mdp.reward(s, a);
                assert!((0.0..xi).contains(&d));
            }
        }
        let mut again = GenerativeModel::new(mdp, 12).unwrap();
        let emp2 = build_empirical(&mut again, n, 0.3, 0.95, true).unwrap();
        assert_eq!(emp.mdp, emp2.mdp);
    }

    #[test]
    fn empirical_mean_is_unbiased() {
        let mdp = random_mdp(3, 2, 30);
        let (n, seeds) = (20, 1000);
        let mut mean = vec![0.0; mdp.transitions().len()];
        for seed in 0..seeds {
            let mut gm = GenerativeModel::new(mdp.clone(), seed).unwrap();
            let emp = build_empirical(&mut gm, n, 0.0, 0.0, false).unwrap();
            for (m, p) in mean.iter_mut().zip(emp.mdp.transitions()) {
                *m += p / seeds as f64;
            }
        }
        for (m, &p) in mean.iter().zip(mdp.transitions()) {
            let sd = (p * (1.0 - p) / (seeds as f64 * n as f64)).sqrt();
            assert!((m - p).abs() <= 3.0 * sd + 1e-12, "{m} vs {p}");
        }
    }
}
