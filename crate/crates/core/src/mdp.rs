//! Tabular MDP representation, policies, induced Markov chains and exact
//! discounted policy evaluation.
//!
//! States and actions are 0-based throughout. Transition probabilities are
//! stored densely, row-major over `(state, action, next_state)`.

use std::fmt;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Row sums must equal one within this tolerance.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// Rows read from files within this distance of stochastic are renormalized.
pub const RENORMALIZE_TOL: f64 = 1e-9;

/// Largest number of deterministic policies the enumeration routines visit.
pub const ENUMERATION_BUDGET: u64 = 1_000_000;

/// A finite MDP with known deterministic rewards.
#[derive(Clone, Debug, PartialEq)]
pub struct Mdp {
    num_states: usize,
    num_actions: usize,
    transitions: Vec<f64>,
    rewards: Vec<f64>,
}

/// On-disk JSON layout of an [`Mdp`]: `transitions[s][a][s']`, `rewards[s][a]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MdpDoc {
    pub num_states: usize,
    pub num_actions: usize,
    pub transitions: Vec<Vec<Vec<f64>>>,
    pub rewards: Vec<Vec<f64>>,
}

/// A single broken invariant found by [`validate_mdp`].
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    EmptySpace { num_states: usize, num_actions: usize },
    Shape(String),
    RowSum { state: usize, action: usize, sum: f64 },
    NegativeEntry { state: usize, action: usize, next: usize, value: f64 },
    NonFinite { state: usize, action: usize },
    RewardRange { state: usize, action: usize, value: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptySpace { num_states, num_actions } => {
                write!(f, "need at least one state and one action (got S={num_states}, A={num_actions})")
            }
            Violation::Shape(msg) => write!(f, "{msg}"),
            Violation::RowSum { state, action, sum } => {
                write!(f, "row ({state},{action}) sums to {sum}")
            }
            Violation::NegativeEntry { state, action, next, value } => {
                write!(f, "entry ({state},{action},{next}) is negative: {value}")
            }
            Violation::NonFinite { state, action } => {
                write!(f, "row ({state},{action}) has a non-finite entry")
            }
            Violation::RewardRange { state, action, value } => {
                write!(f, "reward ({state},{action}) = {value} lies outside [0,1]")
            }
        }
    }
}

/// Outcome of [`validate_mdp`]: empty means every invariant holds.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    fn into_result(self) -> Result<()> {
        if self.is_ok() {
            Ok(())
        } else {
            let msgs: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
            Err(Error::InvalidMdp(msgs.join("; ")))
        }
    }
}

/// Checks shape, row-stochasticity (within [`STOCHASTIC_TOL`]) and the reward
/// range, reporting every violation with its indices.
pub fn validate_mdp(doc: &MdpDoc) -> ValidationReport {
    validate_with(doc, STOCHASTIC_TOL)
}

fn validate_with(doc: &MdpDoc, tol: f64) -> ValidationReport {
    let mut violations = Vec::new();
    let (ns, na) = (doc.num_states, doc.num_actions);
    if ns == 0 || na == 0 {
        violations.push(Violation::EmptySpace { num_states: ns, num_actions: na });
        return ValidationReport { violations };
    }
    if doc.transitions.len() != ns || doc.rewards.len() != ns {
        violations.push(Violation::Shape(format!(
            "expected {ns} states in transitions and rewards, found {} and {}",
            doc.transitions.len(),
            doc.rewards.len()
        )));
        return ValidationReport { violations };
    }
    for s in 0..ns {
        if doc.transitions[s].len() != na || doc.rewards[s].len() != na {
            violations.push(Violation::Shape(format!(
                "state {s}: expected {na} actions, found {} transition rows and {} rewards",
                doc.transitions[s].len(),
                doc.rewards[s].len()
            )));
            continue;
        }
        for a in 0..na {
            let row = &doc.transitions[s][a];
            if row.len() != ns {
                violations.push(Violation::Shape(format!("row ({s},{a}) has length {}, expected {ns}", row.len())));
                continue;
            }
            if row.iter().any(|p| !p.is_finite()) {
                violations.push(Violation::NonFinite { state: s, action: a });
                continue;
            }
            for (next, &p) in row.iter().enumerate() {
                if p < 0.0 {
                    violations.push(Violation::NegativeEntry { state: s, action: a, next, value: p });
                }
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > tol {
                violations.push(Violation::RowSum { state: s, action: a, sum });
            }
            let r = doc.rewards[s][a];
            if !(0.0..=1.0).contains(&r) {
                violations.push(Violation::RewardRange { state: s, action: a, value: r });
            }
        }
    }
    ValidationReport { violations }
}

impl Mdp {
    /// Builds an MDP from flat arrays (`transitions[(s*A + a)*S + s']`,
    /// `rewards[s*A + a]`), enforcing every invariant.
    pub fn new(num_states: usize, num_actions: usize, transitions: Vec<f64>, rewards: Vec<f64>) -> Result<Self> {
        let mdp = Mdp { num_states, num_actions, transitions, rewards };
        if mdp.transitions.len() != num_states * num_actions * num_states
            || mdp.rewards.len() != num_states * num_actions
        {
            return Err(Error::InvalidMdp(format!(
                "flat arrays have lengths {} and {}, expected {} and {}",
                mdp.transitions.len(),
                mdp.rewards.len(),
                num_states * num_actions * num_states,
                num_states * num_actions
            )));
        }
        validate_mdp(&mdp.to_doc()).into_result()?;
        Ok(mdp)
    }

    /// Builds from nested arrays, enforcing every invariant.
    pub fn from_nested(transitions: Vec<Vec<Vec<f64>>>, rewards: Vec<Vec<f64>>) -> Result<Self> {
        let num_states = transitions.len();
        let num_actions = transitions.first().map_or(0, |r| r.len());
        Self::from_doc(MdpDoc { num_states, num_actions, transitions, rewards })
    }

    /// Strict conversion: rows must be stochastic within [`STOCHASTIC_TOL`].
    pub fn from_doc(doc: MdpDoc) -> Result<Self> {
        validate_mdp(&doc).into_result()?;
        Ok(Self::flatten(doc))
    }

    /// Conversion used for files: rows within [`RENORMALIZE_TOL`] of
    /// stochastic are rescaled to sum to one, anything further off is rejected.
    pub fn from_doc_renormalized(mut doc: MdpDoc) -> Result<Self> {
        validate_with(&doc, RENORMALIZE_TOL).into_result()?;
        for row in doc.transitions.iter_mut().flatten() {
            let sum: f64 = row.iter().sum();
            if sum != 1.0 {
                row.iter_mut().for_each(|p| *p /= sum);
            }
        }
        Self::from_doc(doc)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Self::from_doc_renormalized(serde_json::from_str(s)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(&self.to_doc()).expect("MDP serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json_pretty())?;
        Ok(())
    }

    fn flatten(doc: MdpDoc) -> Self {
        let transitions = doc.transitions.into_iter().flatten().flatten().collect();
        let rewards = doc.rewards.into_iter().flatten().collect();
        Mdp { num_states: doc.num_states, num_actions: doc.num_actions, transitions, rewards }
    }

    /// Unvalidated constructor for derived models (empirical kernels and
    /// perturbed rewards, which may exceed 1 by less than the perturbation level).
    pub(crate) fn from_parts(num_states: usize, num_actions: usize, transitions: Vec<f64>, rewards: Vec<f64>) -> Self {
        debug_assert_eq!(transitions.len(), num_states * num_actions * num_states);
        debug_assert_eq!(rewards.len(), num_states * num_actions);
        Mdp { num_states, num_actions, transitions, rewards }
    }

    pub fn to_doc(&self) -> MdpDoc {
        let (ns, na) = (self.num_states, self.num_actions);
        MdpDoc {
            num_states: ns,
            num_actions: na,
            transitions: (0..ns).map(|s| (0..na).map(|a| self.row(s, a).to_vec()).collect()).collect(),
            rewards: (0..ns).map(|s| self.rewards[s * na..(s + 1) * na].to_vec()).collect(),
        }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    /// Next-state distribution `P(. | s, a)`.
    #[inline]
    pub fn row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.num_actions + a) * self.num_states;
        &self.transitions[start..start + self.num_states]
    }

    #[inline]
    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.rewards[s * self.num_actions + a]
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    pub fn transitions(&self) -> &[f64] {
        &self.transitions
    }

    /// Re-checks every invariant (useful after deserializing or hand-building).
    pub fn validate(&self) -> ValidationReport {
        validate_mdp(&self.to_doc())
    }

    /// Number of deterministic stationary policies, `A^S`, as a float to avoid overflow.
    pub fn deterministic_policy_count(&self) -> f64 {
        (self.num_actions as f64).powi(self.num_states as i32)
    }

    pub(crate) fn policy_space(&self) -> Result<PolicySpace> {
        PolicySpace::new(self.num_states, self.num_actions, ENUMERATION_BUDGET)
    }
}

/// Deterministic or randomized stationary Markov policy.
#[derive(Clone, Debug, PartialEq)]
pub struct Policy {
    num_states: usize,
    num_actions: usize,
    probs: Vec<f64>,
    kind: PolicyKind,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Deterministic,
    Randomized,
}

impl Policy {
    pub fn deterministic(actions: &[usize], num_actions: usize) -> Result<Self> {
        if num_actions == 0 {
            return Err(Error::InvalidPolicy("num_actions must be positive".into()));
        }
        let mut probs = vec![0.0; actions.len() * num_actions];
        for (s, &a) in actions.iter().enumerate() {
            if a >= num_actions {
                return Err(Error::InvalidPolicy(format!("state {s}: action {a} out of range 0..{num_actions}")));
            }
            probs[s * num_actions + a] = 1.0;
        }
        Ok(Policy { num_states: actions.len(), num_actions, probs, kind: PolicyKind::Deterministic })
    }

    /// Randomized policy from per-state action distributions.
    pub fn randomized(rows: Vec<Vec<f64>>) -> Result<Self> {
        let num_states = rows.len();
        let num_actions = rows.first().map_or(0, |r| r.len());
        if num_states == 0 || num_actions == 0 {
            return Err(Error::InvalidPolicy("empty policy table".into()));
        }
        for (s, row) in rows.iter().enumerate() {
            if row.len() != num_actions {
                return Err(Error::InvalidPolicy(format!("state {s}: ragged row")));
            }
            if row.iter().any(|&p| !(p >= 0.0)) {
                return Err(Error::InvalidPolicy(format!("state {s}: negative or NaN entry")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::InvalidPolicy(format!("state {s}: row sums to {sum}")));
            }
        }
        Ok(Policy {
            num_states,
            num_actions,
            probs: rows.into_iter().flatten().collect(),
            kind: PolicyKind::Randomized,
        })
    }

    pub fn uniform(num_states: usize, num_actions: usize) -> Self {
        Policy {
            num_states,
            num_actions,
            probs: vec![1.0 / num_actions as f64; num_states * num_actions],
            kind: PolicyKind::Randomized,
        }
    }

    pub fn kind(&self) -> PolicyKind {
        self.kind
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    #[inline]
    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s * self.num_actions + a]
    }

    /// Action at `s` for deterministic policies.
    pub fn action(&self, s: usize) -> Option<usize> {
        match self.kind {
            PolicyKind::Deterministic => {
                let row = &self.probs[s * self.num_actions..(s + 1) * self.num_actions];
                row.iter().position(|&p| p == 1.0)
            }
            PolicyKind::Randomized => None,
        }
    }

    /// Action-index array for deterministic policies.
    pub fn actions(&self) -> Option<Vec<usize>> {
        (0..self.num_states).map(|s| self.action(s)).collect()
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.probs.chunks(self.num_actions).map(|c| c.to_vec()).collect()
    }

    fn check_dims(&self, mdp: &Mdp) -> Result<()> {
        if self.num_states != mdp.num_states || self.num_actions != mdp.num_actions {
            return Err(Error::DimensionMismatch(format!(
                "policy is {}x{}, MDP is {}x{}",
                self.num_states, self.num_actions, mdp.num_states, mdp.num_actions
            )));
        }
        Ok(())
    }
}

impl Serialize for Policy {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        match self.actions() {
            Some(actions) => actions.serialize(ser),
            None => self.rows().serialize(ser),
        }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum PolicyRepr {
    Actions(Vec<usize>),
    Rows(Vec<Vec<f64>>),
}

impl Policy {
    /// Parses either an action-index array or a table of action distributions.
    pub fn from_json_str(s: &str, num_actions: usize) -> Result<Self> {
        match serde_json::from_str::<PolicyRepr>(s)? {
            PolicyRepr::Actions(a) => Policy::deterministic(&a, num_actions),
            PolicyRepr::Rows(rows) => Policy::randomized(rows),
        }
    }
}

/// Mixed-radix indexing of the `A^S` deterministic policies. Index 0 is the
/// all-zeros policy; state 0 is the most significant digit, so increasing
/// indices visit policies in lexicographic order.
#[derive(Clone, Copy, Debug)]
pub struct PolicySpace {
    num_states: usize,
    num_actions: usize,
    count: u64,
}

impl PolicySpace {
    pub fn new(num_states: usize, num_actions: usize, budget: u64) -> Result<Self> {
        let needed = (num_actions as f64).powi(num_states as i32);
        if needed > budget as f64 {
            return Err(Error::EnumerationBudget { needed, budget });
        }
        Ok(PolicySpace { num_states, num_actions, count: needed as u64 })
    }

    pub fn len(&self) -> u64 {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn decode(&self, mut index: u64) -> Vec<usize> {
        let mut actions = vec![0; self.num_states];
        for s in (0..self.num_states).rev() {
            actions[s] = (index % self.num_actions as u64) as usize;
            index /= self.num_actions as u64;
        }
        actions
    }
}

/// Markov chain `(P_pi, r_pi)` induced by a policy.
#[derive(Clone, Debug, PartialEq)]
pub struct InducedChain {
    pub transition: DMatrix<f64>,
    pub reward: DVector<f64>,
}

impl InducedChain {
    /// Validates row-stochasticity before accepting a hand-built chain.
    pub fn new(transition: DMatrix<f64>, reward: DVector<f64>) -> Result<Self> {
        let n = transition.nrows();
        if n == 0 || transition.ncols() != n || reward.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "chain matrix {}x{} with reward length {}",
                n,
                transition.ncols(),
                reward.len()
            )));
        }
        for (i, row) in transition.row_iter().enumerate() {
            if row.iter().any(|&p| !(p >= 0.0)) {
                return Err(Error::InvalidMdp(format!("chain row {i} has a negative entry")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::InvalidMdp(format!("chain row {i} sums to {sum}")));
            }
        }
        Ok(InducedChain { transition, reward })
    }

    pub fn from_rows(rows: &[Vec<f64>], reward: &[f64]) -> Result<Self> {
        let n = rows.len();
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        if flat.len() != n * n {
            return Err(Error::DimensionMismatch("chain rows are ragged".into()));
        }
        Self::new(DMatrix::from_row_slice(n, n, &flat), DVector::from_column_slice(reward))
    }

    pub fn num_states(&self) -> usize {
        self.reward.len()
    }
}

/// `(P_pi)_{s,s'} = sum_a pi(a|s) P(s'|s,a)` and `(r_pi)_s = sum_a pi(a|s) r(s,a)`.
pub fn induce_chain(mdp: &Mdp, policy: &Policy) -> Result<InducedChain> {
    policy.check_dims(mdp)?;
    let n = mdp.num_states;
    let mut p = DMatrix::zeros(n, n);
    let mut r = DVector::zeros(n);
    for s in 0..n {
        for a in 0..mdp.num_actions {
            let w = policy.prob(s, a);
            if w == 0.0 {
                continue;
            }
            r[s] += w * mdp.reward(s, a);
            for (next, &q) in mdp.row(s, a).iter().enumerate() {
                p[(s, next)] += w * q;
            }
        }
    }
    Ok(InducedChain { transition: p, reward: r })
}

/// Fast path for a deterministic action array (no dimension checks beyond debug).
pub fn induce_deterministic(mdp: &Mdp, actions: &[usize]) -> InducedChain {
    let n = mdp.num_states;
    debug_assert_eq!(actions.len(), n);
    let mut p = DMatrix::zeros(n, n);
    let mut r = DVector::zeros(n);
    for (s, &a) in actions.iter().enumerate() {
        r[s] = mdp.reward(s, a);
        for (next, &q) in mdp.row(s, a).iter().enumerate() {
            p[(s, next)] = q;
        }
    }
    InducedChain { transition: p, reward: r }
}

/// Discounted value of a policy, tagged with the discount it was computed under.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValueFunction {
    pub values: Vec<f64>,
    pub discount: f64,
}

pub(crate) fn check_discount(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("discount {gamma} must lie in (0,1)")))
    }
}

/// Solves `(I - gamma P_pi) V = r_pi` by a dense LU factorization.
pub fn policy_value_discounted(chain: &InducedChain, gamma: f64) -> Result<ValueFunction> {
    check_discount(gamma)?;
    let n = chain.num_states();
    let a = DMatrix::identity(n, n) - &chain.transition * gamma;
    let v = linalg::solve(a.clone(), &chain.reward, "discounted policy value")?;
    let residual = linalg::inf_norm(&(&a * &v - &chain.reward));
    if residual > 1e-10 * n as f64 * (1.0 + linalg::inf_norm(&chain.reward)) {
        return Err(Error::Numerical(format!("policy evaluation residual {residual:.3e} exceeds tolerance")));
    }
    Ok(ValueFunction { values: v.iter().copied().collect(), discount: gamma })
}
