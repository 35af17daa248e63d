//! Sample-complexity sweeps: repeated seeded planner runs over an `(eps, n)`
//! grid, success rates, and the smallest sufficient `n` per accuracy.

use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::discounted::{default_tolerance, solve_discounted};
use crate::error::{Error, Result};
use crate::generative::GenerativeModel;
use crate::instances::InstanceSpec;
use crate::mdp::Mdp;
use crate::params::{optimal_gain_bias_auto, transient_time_param};
use crate::planning::{
    average_to_discount, gap_average_with, gap_discounted_with, perturbed_empirical_planning, OracleTarget,
};

/// A policy counts as accurate when every gap is at most `eps + SUCCESS_SLACK`.
pub const SUCCESS_SLACK: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InstanceSource {
    File { path: PathBuf },
    Generated(InstanceSpec),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Average,
    Discounted,
}

impl Criterion {
    fn as_str(self) -> &'static str {
        match self {
            Criterion::Average => "average",
            Criterion::Discounted => "discounted",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NGrid {
    Explicit(Vec<usize>),
    /// `round(start * ratio^k)` for `k = 0..count`, duplicates removed.
    Geometric {
        start: f64,
        ratio: f64,
        count: usize,
    },
}

impl NGrid {
    pub fn values(&self) -> Vec<usize> {
        let mut out: Vec<usize> = match self {
            NGrid::Explicit(v) => v.clone(),
            NGrid::Geometric { start, ratio, count } => {
                (0..*count).map(|k| (start * ratio.powi(k as i32)).round().max(1.0) as usize).collect()
            }
        };
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// Source of the discounted target handed to the reduction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EbarChoice {
    Fixed(f64),
    Oracle(OracleTarget),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub instance: InstanceSource,
    pub criterion: Criterion,
    pub eps_grid: Vec<f64>,
    pub n_grid: NGrid,
    pub trials: usize,
    pub delta: f64,
    pub seed: u64,
    /// Discounted target for the average criterion.
    #[serde(default)]
    pub ebar: Option<EbarChoice>,
    /// Discount for the discounted criterion.
    #[serde(default)]
    pub gamma: Option<f64>,
    /// For the block lower-bound family, rebuild the instance with its gap
    /// parameter equal to each grid accuracy.
    #[serde(default)]
    pub tie_instance_eps: bool,
    /// When false the `wall_ms` column is written as 0, making output byte-stable.
    #[serde(default = "yes")]
    pub record_wall_time: bool,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

fn yes() -> bool {
    true
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if self.eps_grid.is_empty() || self.n_grid.values().is_empty() {
            return bad("accuracy and sample grids must be nonempty");
        }
        if self.eps_grid.iter().any(|&e| !(e > 0.0)) {
            return bad("grid accuracies must be positive");
        }
        if self.n_grid.values().contains(&0) {
            return bad("sample sizes must be positive");
        }
        if self.trials == 0 {
            return bad("trials must be at least 1");
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad("delta must lie in (0,1)");
        }
        match self.criterion {
            Criterion::Average if self.ebar.is_none() => bad("the average criterion needs ebar (fixed or oracle)"),
            Criterion::Discounted if !matches!(self.gamma, Some(g) if g > 0.0 && g < 1.0) => {
                bad("the discounted criterion needs a discount in (0,1)")
            }
            _ => Ok(()),
        }
    }
}

/// One `(eps, n)` cell of a sweep.
#[allow(non_snake_case)]
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CellRecord {
    pub family: String,
    pub S: usize,
    pub A: usize,
    pub H: f64,
    pub B: f64,
    pub criterion: String,
    pub eps: f64,
    pub ebar: f64,
    pub gamma_bar: f64,
    pub n: usize,
    pub trials: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub seed: u64,
    pub wall_ms: u64,
    #[serde(skip)]
    pub simulator_calls: u64,
}

/// Smallest grid `n` whose success rate reaches `1 - delta`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NStar {
    pub eps: f64,
    pub n_star: Option<usize>,
    /// True when the monotone cleanup lowered this entry.
    pub adjusted: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepResult {
    pub cells: Vec<CellRecord>,
    pub n_star: Vec<NStar>,
    pub monotone_violation: bool,
}

/// splitmix64-style mixing of a master seed with integer tags.
pub fn derive_seed(master: u64, tags: &[u64]) -> u64 {
    let mut z = master;
    for &t in tags {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(t.wrapping_mul(0xD1B5_4A32_D192_ED03));
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

struct Prepared {
    family: String,
    mdp: Mdp,
    h: f64,
    b: f64,
    /// `rho*` for the average criterion, `V*_gamma` for the discounted one.
    reference: Vec<f64>,
}

fn prepare(cfg: &SweepConfig, spec_override: Option<&InstanceSpec>) -> Result<Prepared> {
    let (family, mdp) = match (spec_override, &cfg.instance) {
        (Some(spec), _) | (None, InstanceSource::Generated(spec)) => (spec.family_name().to_string(), spec.build()?),
        (None, InstanceSource::File { path }) => ("file".to_string(), Mdp::load(path)?),
    };
    let opt = optimal_gain_bias_auto(&mdp)?;
    let h = opt.span();
    let b = match transient_time_param(&mdp) {
        Ok(b) => b,
        Err(Error::EnumerationBudget { .. }) => f64::NAN,
        Err(e) => return Err(e),
    };
    let reference = match cfg.criterion {
        Criterion::Average => opt.gain().to_vec(),
        Criterion::Discounted => {
            let gamma = cfg.gamma.expect("validated");
            solve_discounted(&mdp, gamma, default_tolerance(gamma))?.optimal_values
        }
    };
    Ok(Prepared { family, mdp, h, b, reference })
}

fn resolve_ebar(cfg: &SweepConfig, prep: &Prepared) -> Result<f64> {
    match cfg.ebar {
        Some(EbarChoice::Fixed(x)) => Ok(x),
        Some(EbarChoice::Oracle(target)) => {
            let v = match target {
                OracleTarget::Span => prep.h,
                OracleTarget::TransientPlusSpan => prep.b + prep.h,
            };
            if v.is_nan() {
                return Err(Error::InvalidParameter(
                    "transient time is unavailable for this instance (policy enumeration budget)".into(),
                ));
            }
            Ok(v)
        }
        None => Err(Error::InvalidParameter("missing ebar".into())),
    }
}

/// Runs every `(eps, n)` cell with `trials` independent seeded planner runs.
/// Trial `k` at accuracy index `i` uses seed `derive_seed(seed, [i, k])` at
/// every `n`, so cells along the sample axis share their random streams.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let ns_grid = cfg.n_grid.values();
    let mut cells = Vec::new();
    let base = if cfg.tie_instance_eps { None } else { Some(prepare(cfg, None)?) };
    for (ei, &eps) in cfg.eps_grid.iter().enumerate() {
        let tied;
        let prep = match &base {
            Some(p) => p,
            None => {
                let spec = match &cfg.instance {
                    InstanceSource::Generated(InstanceSpec::MasterLb(p)) => {
                        InstanceSpec::MasterLb(crate::instances::MasterLbParams { eps, ..*p })
                    }
                    _ => {
                        return Err(Error::InvalidParameter(
                            "tie_instance_eps applies only to the master_lb family".into(),
                        ))
                    }
                };
                tied = prepare(cfg, Some(&spec))?;
                &tied
            }
        };
        let (ebar, gamma_bar) = match cfg.criterion {
            Criterion::Average => {
                let ebar = resolve_ebar(cfg, prep)?;
                (ebar, crate::planning::ReductionConfig::new(eps, ebar, 1)?.gamma_bar)
            }
            Criterion::Discounted => (eps, cfg.gamma.expect("validated")),
        };
        for &n in &ns_grid {
            let start = Instant::now();
            let outcomes: Vec<(bool, u64)> = (0..cfg.trials)
                .into_par_iter()
                .map(|k| run_trial(cfg, prep, ei, k, n, eps, ebar, gamma_bar))
                .collect::<Result<_>>()?;
            let successes = outcomes.iter().filter(|o| o.0).count();
            let simulator_calls = outcomes.iter().map(|o| o.1).sum();
            let wall_ms = if cfg.record_wall_time { start.elapsed().as_millis() as u64 } else { 0 };
            cells.push(CellRecord {
                family: prep.family.clone(),
                S: prep.mdp.num_states(),
                A: prep.mdp.num_actions(),
                H: prep.h,
                B: prep.b,
                criterion: cfg.criterion.as_str().to_string(),
                eps,
                ebar,
                gamma_bar,
                n,
                trials: cfg.trials,
                successes,
                success_rate: successes as f64 / cfg.trials as f64,
                seed: cfg.seed,
                wall_ms,
                simulator_calls,
            });
        }
    }
    let (n_star, monotone_violation) = estimate_n_star(&cells, &cfg.eps_grid, cfg.delta);
    Ok(SweepResult { cells, n_star, monotone_violation })
}

#[allow(clippy::too_many_arguments)]
fn run_trial(
    cfg: &SweepConfig,
    prep: &Prepared,
    eps_index: usize,
    trial: usize,
    n: usize,
    eps: f64,
    ebar: f64,
    gamma_bar: f64,
) -> Result<(bool, u64)> {
    let seed = derive_seed(cfg.seed, &[eps_index as u64, trial as u64]);
    let mut gm = GenerativeModel::new(prep.mdp.clone(), seed)?;
    let ok = match cfg.criterion {
        Criterion::Average => {
            let plan = average_to_discount(&mut gm, n, eps, ebar)?;
            gap_average_with(&prep.mdp, &plan.policy, &prep.reference)?.iter().all(|&g| g <= eps + SUCCESS_SLACK)
        }
        Criterion::Discounted => {
            let plan = perturbed_empirical_planning(&mut gm, n, eps, gamma_bar)?;
            gap_discounted_with(&prep.mdp, &plan.policy, gamma_bar, &prep.reference)?
                .iter()
                .all(|&g| g <= eps + SUCCESS_SLACK)
        }
    };
    Ok((ok, gm.calls()))
}

/// Per-accuracy smallest successful `n`, then a running minimum from small to
/// large `eps` so that easier targets never need more samples.
pub fn estimate_n_star(cells: &[CellRecord], eps_grid: &[f64], delta: f64) -> (Vec<NStar>, bool) {
    let mut raw: Vec<NStar> = eps_grid
        .iter()
        .map(|&eps| NStar {
            eps,
            n_star: cells.iter().filter(|c| c.eps == eps && c.success_rate >= 1.0 - delta).map(|c| c.n).min(),
            adjusted: false,
        })
        .collect();
    let mut order: Vec<usize> = (0..raw.len()).collect();
    order.sort_by(|&a, &b| raw[a].eps.total_cmp(&raw[b].eps));
    let mut violation = false;
    let mut best: Option<usize> = None;
    for i in order {
        match (best, raw[i].n_star) {
            (Some(b), Some(n)) if n > b => {
                raw[i].n_star = Some(b);
                raw[i].adjusted = true;
                violation = true;
            }
            (Some(b), None) => {
                raw[i].n_star = Some(b);
                raw[i].adjusted = true;
                violation = true;
            }
            _ => {}
        }
        best = match (best, raw[i].n_star) {
            (Some(b), Some(n)) => Some(b.min(n)),
            (x, y) => x.or(y),
        };
    }
    (raw, violation)
}

pub const CSV_COLUMNS: [&str; 15] = [
    "family",
    "S",
    "A",
    "H",
    "B",
    "criterion",
    "eps",
    "ebar",
    "gamma_bar",
    "n",
    "trials",
    "successes",
    "success_rate",
    "seed",
    "wall_ms",
];

/// Writes a `#`-prefixed timestamp line followed by the CSV table.
pub fn write_csv<W: Write>(result: &SweepResult, mut out: W) -> Result<()> {
    let stamp = std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    writeln!(out, "# sweep written at unix time {stamp}")?;
    let mut w = csv::Writer::from_writer(out);
    for cell in &result.cells {
        w.serialize(cell)?;
    }
    w.flush()?;
    Ok(())
}
