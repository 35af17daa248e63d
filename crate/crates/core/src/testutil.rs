//! Random fixtures for unit tests.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::instances::random_row;
use crate::mdp::{InducedChain, Mdp, MdpDoc};

/// Sparse random rows: arbitrary class structure, transient states and periodicity.
pub fn random_chain(n: usize, seed: u64) -> InducedChain {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let all: Vec<usize> = (0..n).collect();
    let mut p = DMatrix::zeros(n, n);
    for s in 0..n {
        let m = rng.random_range(0..n);
        let row = random_row(&mut rng, n, &[m], &all, 0.3);
        for t in 0..n {
            p[(s, t)] = row[t];
        }
    }
    let r = DVector::from_fn(n, |_, _| rng.random::<f64>());
    InducedChain { transition: p, reward: r }
}

/// Strictly positive rows.
pub fn random_unichain(n: usize, seed: u64) -> InducedChain {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let all: Vec<usize> = (0..n).collect();
    let mut p = DMatrix::zeros(n, n);
    for s in 0..n {
        let row = random_row(&mut rng, n, &all, &[], 0.0);
        for t in 0..n {
            p[(s, t)] = row[t];
        }
    }
    let r = DVector::from_fn(n, |_, _| rng.random::<f64>());
    InducedChain { transition: p, reward: r }
}

/// Sparse random MDP without any planted structure.
pub fn random_mdp(ns: usize, na: usize, seed: u64) -> Mdp {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let all: Vec<usize> = (0..ns).collect();
    let transitions = (0..ns)
        .map(|_| {
            (0..na)
                .map(|_| {
                    let m = rng.random_range(0..ns);
                    random_row(&mut rng, ns, &[m], &all, 0.5)
                })
                .collect()
        })
        .collect();
    let rewards = (0..ns).map(|_| (0..na).map(|_| rng.random::<f64>()).collect()).collect();
    Mdp::from_doc_renormalized(MdpDoc { num_states: ns, num_actions: na, transitions, rewards }).unwrap()
}
