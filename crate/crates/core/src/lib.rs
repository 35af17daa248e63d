//! Planning and analysis for average-reward and discounted tabular MDPs under
//! a generative model.
//!
//! States and actions are 0-based everywhere.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod chain;
pub mod discounted;
pub mod error;
pub mod generative;
pub mod instances;
pub mod linalg;
pub mod mdp;
pub mod params;
pub mod planning;
pub mod sweep;
pub mod variance;

#[cfg(test)]
mod testutil;

pub use chain::{
    decompose_chain, gain_and_bias, limiting_matrix, mixing_time, stationary_distribution, ChainDecomposition,
    GainBias, Residuals,
};
pub use discounted::{action_gap_check, default_tolerance, q_from_v, solve_discounted, DiscountedSolution};
pub use error::{Error, Result};
pub use generative::{build_empirical, EmpiricalModel, GenerativeModel};
pub use instances::{
    distinguishability_experiment, gen_fig1, gen_master_lb, gen_random, gen_thm3_pair, kl_and_tv, DistinguishResult,
    InstanceSpec, MasterLbParams, RandomFamily, RandomParams, Thm3Pair,
};
pub use linalg::span;
pub use mdp::{
    induce_chain, induce_deterministic, policy_value_discounted, validate_mdp, InducedChain, Mdp, MdpDoc, Policy,
    PolicyKind, PolicySpace, ValidationReport, ValueFunction,
};
pub use params::{
    analyze, bellman_certificate, diameter, mixing_times, optimal_gain_bias, optimal_gain_bias_auto, policy_gain,
    transient_time_param, Analysis, Certificate, ComplexityParams, GainMode, OptimalGainBias,
};
pub use planning::{
    average_to_discount, gap_average, gap_average_with, gap_discounted, gap_discounted_with,
    perturbed_empirical_planning, precondition_warnings, OracleTarget, PlanResult, ReductionConfig,
};
pub use sweep::{
    run_sweep, write_csv, CellRecord, Criterion, EbarChoice, InstanceSource, NGrid, NStar, SweepConfig, SweepResult,
};
pub use variance::{
    multistep_residual, one_step_variance, total_return_variance, variance_report, weighted_variance_param,
    VarianceReport,
};
