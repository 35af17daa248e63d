//! Perturbed empirical model-based planning and the average-to-discount
//! reduction, plus exact policy-quality gaps used to score their output.

use serde::{Deserialize, Serialize};

use crate::discounted::{default_tolerance, solve_discounted, DiscountedSolution};
use crate::error::{Error, Result};
use crate::generative::{build_empirical, GenerativeModel};
use crate::mdp::{check_discount, induce_chain, policy_value_discounted, Mdp, Policy};
use crate::params::{optimal_gain_bias_auto, policy_gain, ComplexityParams};

/// Inputs and derived quantities of one planner run.
#[derive(Clone, Debug, Serialize)]
pub struct Provenance {
    pub n: usize,
    pub eps: f64,
    pub gamma: f64,
    pub xi: f64,
    pub seed: u64,
    pub simulator_calls: u64,
}

/// Average-reward target `eps`, discounted target `ebar` and the discount
/// `gamma_bar = 1 - eps/(12 ebar)` handed to the discounted planner.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ReductionConfig {
    pub target_accuracy: f64,
    pub dmdp_target: f64,
    pub gamma_bar: f64,
    pub n: usize,
}

impl ReductionConfig {
    pub fn new(eps: f64, ebar: f64, n: usize) -> Result<Self> {
        if !(eps > 0.0 && eps <= 1.0) {
            return Err(Error::InvalidParameter(format!("target accuracy {eps} must lie in (0,1]")));
        }
        if !(ebar >= eps) {
            return Err(Error::InvalidParameter(format!(
                "discounted target {ebar} must be at least the average-reward target {eps}"
            )));
        }
        Ok(ReductionConfig { target_accuracy: eps, dmdp_target: ebar, gamma_bar: 1.0 - eps / (12.0 * ebar), n })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PlanResult {
    pub policy: Policy,
    pub empirical_solution: DiscountedSolution,
    pub provenance: Provenance,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reduction: Option<ReductionConfig>,
}

impl PlanResult {
    pub fn actions(&self) -> Vec<usize> {
        self.empirical_solution.actions()
    }
}

/// Samples `n` transitions per pair, perturbs rewards at level
/// `(1-gamma) eps/6` and returns the exact optimal policy of the resulting
/// discounted model.
pub fn perturbed_empirical_planning(gm: &mut GenerativeModel, n: usize, eps: f64, gamma: f64) -> Result<PlanResult> {
    check_discount(gamma)?;
    let before = gm.calls();
    let emp = build_empirical(gm, n, eps, gamma, true)?;
    let sol = solve_discounted(&emp.mdp, gamma, default_tolerance(gamma))?;
    Ok(PlanResult {
        policy: sol.policy.clone(),
        empirical_solution: sol,
        provenance: Provenance {
            n,
            eps,
            gamma,
            xi: emp.perturbation_level,
            seed: emp.seed,
            simulator_calls: gm.calls() - before,
        },
        reduction: None,
    })
}

/// Runs [`perturbed_empirical_planning`] with accuracy `ebar` at the discount
/// `1 - eps/(12 ebar)`.
pub fn average_to_discount(gm: &mut GenerativeModel, n: usize, eps: f64, ebar: f64) -> Result<PlanResult> {
    let cfg = ReductionConfig::new(eps, ebar, n)?;
    let mut out = perturbed_empirical_planning(gm, n, ebar, cfg.gamma_bar)?;
    out.reduction = Some(cfg);
    Ok(out)
}

/// Which complexity measure fills the discounted target from an analysis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OracleTarget {
    /// `ebar = H` (weakly communicating instances).
    #[serde(rename = "H")]
    Span,
    /// `ebar = B + H` (general instances).
    #[serde(rename = "B+H")]
    TransientPlusSpan,
}

impl OracleTarget {
    pub fn value(self, params: &ComplexityParams) -> f64 {
        match self {
            OracleTarget::Span => params.span_H,
            OracleTarget::TransientPlusSpan => params.transient_B + params.span_H,
        }
    }
}

/// Conditions under which the planners carry guarantees; violating them is
/// allowed but reported.
pub fn precondition_warnings(eps: f64, gamma: f64, params: &ComplexityParams) -> Vec<String> {
    let mut out = Vec::new();
    let h = params.span_H;
    let bh = params.transient_B + h;
    if eps > h {
        out.push(format!("accuracy {eps} exceeds the bias span H = {h}"));
    }
    if h > 1.0 / (1.0 - gamma) {
        out.push(format!("bias span H = {h} exceeds the effective horizon 1/(1-gamma) = {}", 1.0 / (1.0 - gamma)));
    }
    if eps > bh {
        out.push(format!("accuracy {eps} exceeds B + H = {bh}"));
    }
    out
}

/// `rho* - rho^pi`, elementwise.
pub fn gap_average(mdp: &Mdp, policy: &Policy) -> Result<Vec<f64>> {
    let opt = optimal_gain_bias_auto(mdp)?;
    gap_average_with(mdp, policy, opt.gain())
}

/// As [`gap_average`] with a precomputed optimal gain.
pub fn gap_average_with(mdp: &Mdp, policy: &Policy, rho_star: &[f64]) -> Result<Vec<f64>> {
    let gain = policy_gain(mdp, policy)?;
    Ok(rho_star.iter().zip(&gain).map(|(a, b)| a - b).collect())
}

/// `V*_gamma - V^pi_gamma`, elementwise.
pub fn gap_discounted(mdp: &Mdp, policy: &Policy, gamma: f64) -> Result<Vec<f64>> {
    let opt = solve_discounted(mdp, gamma, default_tolerance(gamma))?;
    gap_discounted_with(mdp, policy, gamma, &opt.optimal_values)
}

pub fn gap_discounted_with(mdp: &Mdp, policy: &Policy, gamma: f64, v_star: &[f64]) -> Result<Vec<f64>> {
    let v = policy_value_discounted(&induce_chain(mdp, policy)?, gamma)?;
    Ok(v_star.iter().zip(&v.values).map(|(a, b)| a - b).collect())
}
