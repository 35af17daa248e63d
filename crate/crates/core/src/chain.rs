//! Structure of a single Markov chain: recurrent/transient decomposition,
//! limiting matrix, gain and bias.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;
use crate::mdp::InducedChain;

/// Acceptance tolerance for the gain/bias residuals.
pub const GAIN_BIAS_TOL: f64 = 1e-8;

/// Recurrent classes and transient states of a chain, together with the
/// canonical block form `[[X, 0], [Y, Z]]` under `permutation`.
///
/// Classes are ordered by their smallest state and list states ascending;
/// `permutation[i]` is the original index of the state at position `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainDecomposition {
    pub recurrent_classes: Vec<Vec<usize>>,
    pub transient_states: Vec<usize>,
    pub permutation: Vec<usize>,
    /// Recurrent-to-recurrent block (block diagonal over classes).
    pub x: DMatrix<f64>,
    /// Transient-to-recurrent block.
    pub y: DMatrix<f64>,
    /// Transient-to-transient block.
    pub z: DMatrix<f64>,
}

impl ChainDecomposition {
    pub fn num_recurrent(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_unichain(&self) -> bool {
        self.recurrent_classes.len() == 1
    }

    /// Rebuilds the transition matrix in the original state order.
    pub fn reassemble(&self) -> DMatrix<f64> {
        let n = self.permutation.len();
        let m = self.num_recurrent();
        let mut p = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let v = match (i < m, j < m) {
                    (true, true) => self.x[(i, j)],
                    (true, false) => 0.0,
                    (false, true) => self.y[(i - m, j)],
                    (false, false) => self.z[(i - m, j - m)],
                };
                p[(self.permutation[i], self.permutation[j])] = v;
            }
        }
        p
    }

    /// Recurrent class index of each state, `None` for transient states.
    pub fn class_of(&self) -> Vec<Option<usize>> {
        let mut out = vec![None; self.permutation.len()];
        for (c, class) in self.recurrent_classes.iter().enumerate() {
            for &s in class {
                out[s] = Some(c);
            }
        }
        out
    }
}

/// Strongly connected components of the support digraph (`p > 0`), by Tarjan.
fn strongly_connected(p: &DMatrix<f64>) -> Vec<Vec<usize>> {
    struct State<'a> {
        p: &'a DMatrix<f64>,
        index: Vec<Option<usize>>,
        low: Vec<usize>,
        on_stack: Vec<bool>,
        stack: Vec<usize>,
        next: usize,
        comps: Vec<Vec<usize>>,
    }

    fn visit(st: &mut State, v: usize) {
        st.index[v] = Some(st.next);
        st.low[v] = st.next;
        st.next += 1;
        st.stack.push(v);
        st.on_stack[v] = true;
        for w in 0..st.p.ncols() {
            if st.p[(v, w)] <= 0.0 {
                continue;
            }
            match st.index[w] {
                None => {
                    visit(st, w);
                    st.low[v] = st.low[v].min(st.low[w]);
                }
                Some(iw) if st.on_stack[w] => st.low[v] = st.low[v].min(iw),
                Some(_) => {}
            }
        }
        if Some(st.low[v]) == st.index[v] {
            let mut comp = Vec::new();
            while let Some(w) = st.stack.pop() {
                st.on_stack[w] = false;
                comp.push(w);
                if w == v {
                    break;
                }
            }
            comp.sort_unstable();
            st.comps.push(comp);
        }
    }

    let n = p.nrows();
    let mut st = State {
        p,
        index: vec![None; n],
        low: vec![0; n],
        on_stack: vec![false; n],
        stack: Vec::new(),
        next: 0,
        comps: Vec::new(),
    };
    for v in 0..n {
        if st.index[v].is_none() {
            visit(&mut st, v);
        }
    }
    st.comps
}

/// Splits the chain into closed classes (bottom SCCs) and transient states.
pub fn decompose_chain(chain: &InducedChain) -> ChainDecomposition {
    let p = &chain.transition;
    let n = p.nrows();
    let comps = strongly_connected(p);
    let mut comp_of = vec![0; n];
    for (c, comp) in comps.iter().enumerate() {
        for &s in comp {
            comp_of[s] = c;
        }
    }
    let mut classes: Vec<Vec<usize>> = comps
        .iter()
        .enumerate()
        .filter(|(c, comp)| comp.iter().all(|&s| (0..n).all(|t| p[(s, t)] <= 0.0 || comp_of[t] == *c)))
        .map(|(_, comp)| comp.clone())
        .collect();
    classes.sort_by_key(|c| c[0]);

    let mut recurrent = vec![false; n];
    for &s in classes.iter().flatten() {
        recurrent[s] = true;
    }
    let transient: Vec<usize> = (0..n).filter(|&s| !recurrent[s]).collect();
    let mut permutation: Vec<usize> = classes.iter().flatten().copied().collect();
    let m = permutation.len();
    permutation.extend(&transient);

    let x = DMatrix::from_fn(m, m, |i, j| p[(permutation[i], permutation[j])]);
    let y = DMatrix::from_fn(n - m, m, |i, j| p[(permutation[m + i], permutation[j])]);
    let z = DMatrix::from_fn(n - m, n - m, |i, j| p[(permutation[m + i], permutation[m + j])]);
    ChainDecomposition { recurrent_classes: classes, transient_states: transient, permutation, x, y, z }
}

/// Stationary distribution of an irreducible stochastic matrix, from
/// `x^T (I - P) = 0` with one equation replaced by `x^T 1 = 1`.
pub fn stationary_distribution(p: &DMatrix<f64>) -> Result<DVector<f64>> {
    let k = p.nrows();
    let mut a = (DMatrix::identity(k, k) - p).transpose();
    a.row_mut(k - 1).fill(1.0);
    let mut b = DVector::zeros(k);
    b[k - 1] = 1.0;
    let x = linalg::solve(a, &b, "stationary distribution")?;
    if x.iter().any(|&v| v < -1e-9) {
        return Err(Error::Numerical("stationary distribution has negative mass".into()));
    }
    Ok(x)
}

/// Cesaro limit `P^inf` of the chain's powers, in the original state order.
pub fn limiting_matrix(dec: &ChainDecomposition, chain: &InducedChain) -> Result<DMatrix<f64>> {
    let n = chain.num_states();
    let m = dec.num_recurrent();
    // X^inf in permuted coordinates
    let mut x_inf = DMatrix::zeros(m, m);
    let mut offset = 0;
    for class in &dec.recurrent_classes {
        let k = class.len();
        let block = dec.x.view((offset, offset), (k, k)).clone_owned();
        let pi = stationary_distribution(&block)?;
        for i in 0..k {
            for j in 0..k {
                x_inf[(offset + i, offset + j)] = pi[j];
            }
        }
        offset += k;
    }
    let y_inf = if n > m {
        let z = &dec.z;
        let lhs = DMatrix::identity(n - m, n - m) - z;
        linalg::solve_matrix(lhs, &(&dec.y * &x_inf), "transient absorption")?
    } else {
        DMatrix::zeros(0, m)
    };
    let mut out = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..m {
            let v = if i < m { x_inf[(i, j)] } else { y_inf[(i - m, j)] };
            out[(dec.permutation[i], dec.permutation[j])] = v;
        }
    }
    Ok(out)
}

/// Defects of the average-reward evaluation equations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Residuals {
    /// `max |rho + h - r - P h|`
    pub bellman: f64,
    /// `max |rho - P rho|`
    pub gain: f64,
    /// `max |P^inf h|`
    pub normalization: f64,
}

impl Residuals {
    pub fn max(&self) -> f64 {
        self.bellman.max(self.gain).max(self.normalization)
    }
}

/// Gain and bias of a chain, bias normalized by `P^inf h = 0`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GainBias {
    pub gain: Vec<f64>,
    pub bias: Vec<f64>,
    pub residuals: Residuals,
}

impl GainBias {
    pub fn span(&self) -> f64 {
        linalg::span(&self.bias)
    }
}

/// Gain `rho = P^inf r` and bias `h = (I - P + P^inf)^{-1} (r - rho)`.
pub fn gain_and_bias(chain: &InducedChain) -> Result<GainBias> {
    let dec = decompose_chain(chain);
    let p_inf = limiting_matrix(&dec, chain)?;
    gain_and_bias_with(chain, &p_inf)
}

pub(crate) fn gain_and_bias_with(chain: &InducedChain, p_inf: &DMatrix<f64>) -> Result<GainBias> {
    let n = chain.num_states();
    let p = &chain.transition;
    let r = &chain.reward;
    let rho = p_inf * r;
    let fundamental = DMatrix::identity(n, n) - p + p_inf;
    let h = linalg::solve(fundamental, &(r - &rho), "bias")?;
    let residuals = Residuals {
        bellman: linalg::inf_norm(&(&rho + &h - r - p * &h)),
        gain: linalg::inf_norm(&(&rho - p * &rho)),
        normalization: linalg::inf_norm(&(p_inf * &h)),
    };
    if residuals.max() > GAIN_BIAS_TOL {
        return Err(Error::Numerical(format!("gain/bias residuals {residuals:?} exceed {GAIN_BIAS_TOL}")));
    }
    Ok(GainBias { gain: rho.iter().copied().collect(), bias: h.iter().copied().collect(), residuals })
}

/// Period of an irreducible class (gcd of cycle lengths), from BFS levels.
pub fn class_period(p: &DMatrix<f64>, class: &[usize]) -> usize {
    fn gcd(a: usize, b: usize) -> usize {
        if b == 0 {
            a
        } else {
            gcd(b, a % b)
        }
    }
    let n = p.nrows();
    let mut level = vec![usize::MAX; n];
    let root = class[0];
    level[root] = 0;
    let mut queue = std::collections::VecDeque::from([root]);
    let mut g = 0;
    while let Some(u) = queue.pop_front() {
        for &v in class {
            if p[(u, v)] <= 0.0 {
                continue;
            }
            if level[v] == usize::MAX {
                level[v] = level[u] + 1;
                queue.push_back(v);
            } else {
                g = gcd(g, level[u] + 1 - level[v]);
            }
        }
    }
    g.max(1)
}

/// Expected time to absorption into the recurrent classes from each
/// transient state, `(I - Z)^{-1} 1`, in the order of `transient_states`.
pub fn expected_transient_time(dec: &ChainDecomposition) -> Result<DVector<f64>> {
    let t = dec.z.nrows();
    if t == 0 {
        return Ok(DVector::zeros(0));
    }
    linalg::solve(DMatrix::identity(t, t) - &dec.z, &DVector::from_element(t, 1.0), "transient time")
}

/// Largest iteration count tried by [`mixing_time`].
pub const MIXING_CAP: usize = 100_000;

/// `inf { t >= 1 : max_s || e_s^T P^t - nu^T ||_1 <= 1/2 }`, or infinity for
/// multichain or periodic chains, or when the cap is hit.
pub fn mixing_time(chain: &InducedChain) -> Result<f64> {
    let dec = decompose_chain(chain);
    if !dec.is_unichain() || class_period(&chain.transition, &dec.recurrent_classes[0]) > 1 {
        return Ok(f64::INFINITY);
    }
    let p_inf = limiting_matrix(&dec, chain)?;
    let nu = p_inf.row(dec.recurrent_classes[0][0]).clone_owned();
    let p = &chain.transition;
    let mut power = p.clone();
    for t in 1..=MIXING_CAP {
        let dist = power.row_iter().map(|row| (row - &nu).iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max);
        if dist <= 0.5 + 1e-12 {
            return Ok(t as f64);
        }
        power = &power * p;
    }
    Ok(f64::INFINITY)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{gen_fig1, gen_thm3_pair};
    use crate::mdp::{induce_deterministic, InducedChain};
    use crate::testutil::{random_chain, random_unichain};
    use proptest::prelude::*;

    fn chain(rows: &[Vec<f64>], r: &[f64]) -> InducedChain {
        InducedChain::from_rows(rows, r).unwrap()
    }

    /// Bottom SCCs by brute-force reachability closure.
    fn bscc_oracle(p: &DMatrix<f64>) -> Vec<Vec<usize>> {
        let n = p.nrows();
        let mut reach = vec![vec![false; n]; n];
        for i in 0..n {
            reach[i][i] = true;
            for j in 0..n {
                if p[(i, j)] > 0.0 {
                    reach[i][j] = true;
                }
            }
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    if reach[i][k] && reach[k][j] {
                        reach[i][j] = true;
                    }
                }
            }
        }
        let mut classes: Vec<Vec<usize>> = Vec::new();
        for i in 0..n {
            let closed = (0..n).all(|j| !reach[i][j] || reach[j][i]);
            if closed && !classes.iter().any(|c| c.contains(&i)) {
                classes.push((0..n).filter(|&j| reach[i][j]).collect());
            }
        }
        classes
    }

    #[test]
    fn fig1_action_one_decomposition() {
        for t in [1.5, 4.0, 30.0] {
            let mdp = gen_fig1(t, 2).unwrap();
            let dec = decompose_chain(&induce_deterministic(&mdp, &[0, 0, 0]));
            assert_eq!(dec.recurrent_classes, vec![vec![1], vec![2]]);
            assert_eq!(dec.transient_states, vec![0]);
        }
    }

    #[test]
    fn identity_chain_has_singleton_classes() {
        let c = InducedChain::new(DMatrix::identity(3, 3), DVector::zeros(3)).unwrap();
        let dec = decompose_chain(&c);
        assert_eq!(dec.recurrent_classes, vec![vec![0], vec![1], vec![2]]);
        assert!(dec.transient_states.is_empty());
    }

    #[test]
    fn thm3_m0_structure() {
        let pair = gen_thm3_pair(16, 4.0).unwrap();
        let dec = decompose_chain(&induce_deterministic(&pair.m0, &[0; 4]));
        assert_eq!(dec.recurrent_classes, vec![vec![0, 1, 2]]);
        assert_eq!(dec.transient_states, vec![3]);
    }

    #[test]
    fn limiting_matrix_small_cases() {
        let c = chain(&[vec![1.0]], &[0.0]);
        let l = limiting_matrix(&decompose_chain(&c), &c).unwrap();
        assert_eq!(l[(0, 0)], 1.0);

        let c = chain(&[vec![0.0, 1.0], vec![1.0, 0.0]], &[0.0, 0.0]);
        let l = limiting_matrix(&decompose_chain(&c), &c).unwrap();
        for v in l.iter() {
            assert!((v - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn limiting_matrix_matches_cesaro_average() {
        let c = random_unichain(4, 5);
        let l = limiting_matrix(&decompose_chain(&c), &c).unwrap();
        let horizon = 100_000;
        let mut acc = DMatrix::zeros(4, 4);
        let mut power = DMatrix::identity(4, 4);
        for _ in 0..horizon {
            acc += &power;
            power = &power * &c.transition;
        }
        acc /= horizon as f64;
        assert!(linalg::matrix_max_abs(&(acc - &l)) < 1e-4);
        for i in 1..4 {
            assert!((l.row(i) - l.row(0)).amax() < 1e-12);
        }
    }

    #[test]
    fn gain_bias_absorbing() {
        let gb = gain_and_bias(&chain(&[vec![1.0]], &[0.7])).unwrap();
        assert!((gb.gain[0] - 0.7).abs() < 1e-15);
        assert!(gb.bias[0].abs() < 1e-15);
    }

    #[test]
    fn gain_bias_fig1_optimal_policy() {
        let mdp = gen_fig1(10.0, 2).unwrap();
        let gb = gain_and_bias(&induce_deterministic(&mdp, &[1, 0, 0])).unwrap();
        for (g, e) in gb.gain.iter().zip([0.5, 0.5, 0.0]) {
            assert!((g - e).abs() < 1e-12);
        }
        assert!(gb.span() < 1e-12);
    }

    /// Least-squares solve of the stacked system
    /// `[I - P, 0; I, I - P; 0, P^inf] [rho; h] = [0; r; 0]`.
    fn stacked_oracle(c: &InducedChain, p_inf: &DMatrix<f64>) -> (DVector<f64>, DVector<f64>) {
        let n = c.num_states();
        let mut a = DMatrix::zeros(3 * n, 2 * n);
        let mut b = DVector::zeros(3 * n);
        let id = DMatrix::<f64>::identity(n, n);
        let imp = &id - &c.transition;
        a.view_mut((0, 0), (n, n)).copy_from(&imp);
        a.view_mut((n, 0), (n, n)).copy_from(&id);
        a.view_mut((n, n), (n, n)).copy_from(&imp);
        a.view_mut((2 * n, n), (n, n)).copy_from(p_inf);
        b.rows_mut(n, n).copy_from(&c.reward);
        let svd = a.svd(true, true);
        let x = svd.solve(&b, 1e-13).unwrap();
        (x.rows(0, n).clone_owned(), x.rows(n, n).clone_owned())
    }

    #[test]
    fn thm3_m1_matches_stacked_oracle() {
        // The closed-form bias for this instance printed alongside its
        // construction does not satisfy the evaluation equations, so the
        // reference here is an independent least-squares solve.
        let pair = gen_thm3_pair(16, 4.0).unwrap();
        let c = induce_deterministic(&pair.m1, &[0; 4]);
        let p_inf = limiting_matrix(&decompose_chain(&c), &c).unwrap();
        let gb = gain_and_bias(&c).unwrap();
        let (rho, h) = stacked_oracle(&c, &p_inf);
        for s in 0..4 {
            assert!((gb.gain[s] - rho[s]).abs() < 1e-9);
            assert!((gb.bias[s] - h[s]).abs() < 1e-9);
        }
    }

    #[test]
    fn periods() {
        let cyc = DMatrix::from_row_slice(3, 3, &[0., 1., 0., 0., 0., 1., 1., 0., 0.]);
        assert_eq!(class_period(&cyc, &[0, 1, 2]), 3);
        let lazy = DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 1.0, 0.0]);
        assert_eq!(class_period(&lazy, &[0, 1]), 1);
    }

    #[test]
    fn mixing_examples() {
        let rank_one = chain(&[vec![0.3, 0.7], vec![0.3, 0.7]], &[0.0, 0.0]);
        assert_eq!(mixing_time(&rank_one).unwrap(), 1.0);
        let cycle = chain(&[vec![0.0, 1.0], vec![1.0, 0.0]], &[0.0, 0.0]);
        assert!(mixing_time(&cycle).unwrap().is_infinite());
        // l1 distance of the lazy chain after t steps is 0.5^t, which already
        // meets the 1/2 threshold at t = 1.
        let lazy = chain(&[vec![0.75, 0.25], vec![0.25, 0.75]], &[0.0, 0.0]);
        assert_eq!(mixing_time(&lazy).unwrap(), 1.0);
        let slow = chain(&[vec![0.95, 0.05], vec![0.05, 0.95]], &[0.0, 0.0]);
        // 0.9^t <= 0.5 first at t = 7
        assert_eq!(mixing_time(&slow).unwrap(), 7.0);
        let multi = InducedChain::new(DMatrix::identity(2, 2), DVector::zeros(2)).unwrap();
        assert!(mixing_time(&multi).unwrap().is_infinite());
    }

    proptest! {
        #[test]
        fn decomposition_invariants(seed in 0u64..2000, n in 1usize..7) {
            let c = random_chain(n, seed);
            let dec = decompose_chain(&c);
            prop_assert_eq!(dec.reassemble(), c.transition.clone());
            let mut oracle = bscc_oracle(&c.transition);
            oracle.sort();
            prop_assert_eq!(&dec.recurrent_classes, &oracle);
            let mut all: Vec<usize> = dec.permutation.clone();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            if !dec.transient_states.is_empty() {
                let t = dec.z.nrows();
                let eig = (DMatrix::identity(t, t) - &dec.z).determinant();
                prop_assert!(eig.abs() > 1e-12);
            }
            let p_inf = limiting_matrix(&dec, &c).unwrap();
            prop_assert!(linalg::matrix_max_abs(&(&c.transition * &p_inf - &p_inf)) <= 1e-9);
            prop_assert!(linalg::matrix_max_abs(&(&p_inf * &c.transition - &p_inf)) <= 1e-9);
            for row in p_inf.row_iter() {
                prop_assert!((row.sum() - 1.0).abs() <= 1e-9);
            }
            let gb = gain_and_bias(&c).unwrap();
            prop_assert!(gb.residuals.max() <= GAIN_BIAS_TOL);
        }

        #[test]
        fn transient_time_series(seed in 0u64..500, n in 2usize..7) {
            let c = random_chain(n, seed);
            let dec = decompose_chain(&c);
            let exact = expected_transient_time(&dec).unwrap();
            let t = dec.z.nrows();
            let mut acc = DVector::zeros(t);
            let mut term = DVector::from_element(t, 1.0);
            for _ in 0..200_000 {
                acc += &term;
                term = &dec.z * term;
                if term.amax() < 1e-15 {
                    break;
                }
            }
            for i in 0..t {
                prop_assert!((acc[i] - exact[i]).abs() <= 1e-8 * exact[i].max(1.0));
            }
        }
    }
}
