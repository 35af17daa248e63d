//! `amdp`: generate instances, analyze and solve MDPs, run the planners and
//! sample-complexity sweeps.
//!
//! Exit codes: 0 on success, 1 on invalid input, 2 on runtime failure.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use amdp_core::{
    analyze, average_to_discount, default_tolerance, distinguishability_experiment, gap_average, gap_discounted,
    gen_fig1, gen_master_lb, gen_random, gen_thm3_pair, induce_chain, optimal_gain_bias_auto,
    perturbed_empirical_planning, precondition_warnings, run_sweep, solve_discounted, transient_time_param,
    variance_report, write_csv, ComplexityParams, Criterion, EbarChoice, GenerativeModel, InstanceSource,
    MasterLbParams, Mdp, NGrid, OracleTarget, PlanResult, Policy, RandomParams, SweepConfig,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "amdp", version, about = "Average-reward and discounted MDP planning under a generative model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a generated instance as MDP JSON.
    Gen(GenArgs),
    /// Optimal gain and bias plus the complexity parameters H, B, D, tau_unif.
    Analyze {
        #[arg(long)]
        mdp: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Solve the discounted problem exactly.
    Solve {
        #[arg(long)]
        mdp: PathBuf,
        #[arg(long)]
        gamma: f64,
        /// Value-iteration accuracy; defaults to min(1e-10/(1-gamma), 1e-6).
        #[arg(long)]
        tol: Option<f64>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run the perturbed empirical planner through the average-to-discount reduction.
    Plan(PlanArgs),
    /// Variance functionals of a policy's discounted return.
    Variance {
        #[arg(long)]
        mdp: PathBuf,
        /// Policy as a JSON file or inline JSON: an action array or per-state probability rows.
        #[arg(long)]
        policy: String,
        #[arg(long)]
        gamma: f64,
        /// Largest horizon for the multistep identity check.
        #[arg(long, default_value_t = 5)]
        max_horizon: usize,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Success rates over an (eps, n) grid, written as CSV.
    Sweep(SweepArgs),
    /// Likelihood-ratio testing between the two single-action lower-bound instances.
    Distinguish {
        #[arg(long)]
        n: usize,
        /// Target bias span of the second instance.
        #[arg(long, default_value_t = 1.0)]
        t: f64,
        #[arg(long, default_value_t = 100_000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Replace the construction's 1/(4 sqrt(n)).
        #[arg(long)]
        eps: Option<f64>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Family {
    Fig1,
    Thm3,
    Master,
    RandomWc,
    RandomGeneral,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_enum)]
    family: Family,
    /// fig1: exit time of the trap; thm3: target bias span.
    #[arg(long, default_value_t = 4.0)]
    t: f64,
    /// thm3: sample size fixing eps = 1/(4 sqrt(n)).
    #[arg(long, default_value_t = 16)]
    n: usize,
    #[arg(long = "states", default_value_t = 8)]
    num_states: usize,
    #[arg(long = "actions")]
    num_actions: Option<usize>,
    /// master: transient time B.
    #[arg(long, default_value_t = 4.0)]
    b: f64,
    /// master: reward gap eps.
    #[arg(long, default_value_t = 0.1)]
    eps: f64,
    /// master: favored block (0-based).
    #[arg(long, default_value_t = 0)]
    s_star: usize,
    /// master: favored action (0-based, at least 1).
    #[arg(long, default_value_t = 1)]
    a_star: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// random-general: number of closed classes.
    #[arg(long, default_value_t = 2)]
    classes: usize,
    /// random families: fraction of states transient under every policy.
    #[arg(long)]
    transient_fraction: Option<f64>,
    /// Output path; thm3 writes `<stem>.m0.json` and `<stem>.m1.json` next to this metadata file.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum OracleArg {
    #[value(name = "H")]
    Span,
    #[value(name = "B+H")]
    TransientPlusSpan,
}

impl From<OracleArg> for OracleTarget {
    fn from(o: OracleArg) -> Self {
        match o {
            OracleArg::Span => OracleTarget::Span,
            OracleArg::TransientPlusSpan => OracleTarget::TransientPlusSpan,
        }
    }
}

#[derive(Args)]
struct PlanArgs {
    #[arg(long)]
    mdp: PathBuf,
    /// Samples per state-action pair.
    #[arg(long)]
    n: usize,
    /// Target accuracy.
    #[arg(long)]
    eps: f64,
    /// Discounted target of the reduction.
    #[arg(long, conflicts_with_all = ["span_from_oracle", "gamma"])]
    ebar: Option<f64>,
    /// Fill the discounted target from the exact analysis.
    #[arg(long, value_enum, conflicts_with = "gamma")]
    span_from_oracle: Option<OracleArg>,
    /// Skip the reduction and plan for this discount directly with accuracy `eps`.
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also report the exact gap of the returned policy.
    #[arg(long)]
    evaluate: bool,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum CriterionArg {
    Average,
    Discounted,
}

#[derive(Args)]
struct SweepArgs {
    /// JSON file with SweepConfig fields; any flag below overrides it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Instance file (instead of the config's instance).
    #[arg(long)]
    mdp: Option<PathBuf>,
    #[arg(long, value_enum)]
    criterion: Option<CriterionArg>,
    #[arg(long, value_delimiter = ',')]
    eps_grid: Option<Vec<f64>>,
    /// Explicit sample sizes.
    #[arg(long, value_delimiter = ',', conflicts_with = "n_geometric")]
    n_grid: Option<Vec<usize>>,
    /// Geometric sample grid as `start,ratio,count`.
    #[arg(long, value_delimiter = ',', num_args = 1)]
    n_geometric: Option<Vec<f64>>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, conflicts_with = "span_from_oracle")]
    ebar: Option<f64>,
    #[arg(long, value_enum)]
    span_from_oracle: Option<OracleArg>,
    /// Discount for the discounted criterion.
    #[arg(long)]
    gamma: Option<f64>,
    /// Rebuild a block lower-bound instance with its gap equal to each grid accuracy.
    #[arg(long)]
    tie_instance_eps: bool,
    /// Write 0 in the wall_ms column so the CSV is byte-stable.
    #[arg(long)]
    no_wall_time: bool,
    /// CSV destination; stdout when absent from both flags and config.
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Invalid(String),
    Runtime(String),
}

impl From<amdp_core::Error> for Failure {
    fn from(e: amdp_core::Error) -> Self {
        if e.is_validation() {
            Failure::Invalid(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn invalid<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(Failure::Invalid(msg.into()))
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::Runtime(format!("{}: {e}", path.display()))
}

fn load_mdp(path: &Path) -> CliResult<Mdp> {
    let text = fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
    Ok(Mdp::from_json_str(&text)?)
}

fn emit<T: Serialize>(value: &T, output: Option<&Path>) -> CliResult {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::Runtime(e.to_string()))?;
    match output {
        Some(path) => fs::write(path, text + "\n").map_err(|e| io_failure(path, e)),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn check_discount(gamma: f64) -> CliResult {
    if gamma > 0.0 && gamma < 1.0 {
        Ok(())
    } else {
        invalid(format!("--gamma {gamma} must lie in (0,1)"))
    }
}

fn gen(args: GenArgs) -> CliResult {
    let na = args.num_actions;
    let mdp = match args.family {
        Family::Fig1 => gen_fig1(args.t, na.unwrap_or(2))?,
        Family::Master => gen_master_lb(&MasterLbParams {
            num_states: args.num_states,
            num_actions: na.unwrap_or(4),
            b: args.b,
            eps: args.eps,
            s_star: args.s_star,
            a_star: args.a_star,
        })?,
        Family::RandomWc => {
            let base = RandomParams::weakly_communicating(args.num_states, na.unwrap_or(2), args.seed);
            gen_random(&RandomParams { transient_fraction: args.transient_fraction.unwrap_or(0.0), ..base })?
        }
        Family::RandomGeneral => {
            let base = RandomParams::general(args.num_states, na.unwrap_or(2), args.seed, args.classes);
            gen_random(&RandomParams { transient_fraction: args.transient_fraction.unwrap_or(0.25), ..base })?
        }
        Family::Thm3 => return gen_thm3(&args),
    };
    match &args.output {
        Some(path) => mdp.save(path).map_err(Failure::from),
        None => {
            println!("{}", mdp.to_json_pretty());
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct Thm3Meta {
    n: usize,
    t: f64,
    eps: f64,
    b: f64,
    span_m1: f64,
    m0: PathBuf,
    m1: PathBuf,
}

fn gen_thm3(args: &GenArgs) -> CliResult {
    let Some(meta_path) = &args.output else {
        return invalid("thm3 writes three files; pass -o <metadata.json>");
    };
    let pair = gen_thm3_pair(args.n, args.t)?;
    let m0 = meta_path.with_extension("m0.json");
    let m1 = meta_path.with_extension("m1.json");
    pair.m0.save(&m0)?;
    pair.m1.save(&m1)?;
    let meta = Thm3Meta { n: args.n, t: args.t, eps: pair.eps, b: pair.b, span_m1: pair.span_m1, m0, m1 };
    emit(&meta, Some(meta_path))
}

#[derive(Serialize)]
struct PlanOutput {
    #[serde(flatten)]
    plan: PlanResult,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    warnings: Vec<String>,
    /// Elementwise gap of the returned policy (average or discounted criterion).
    #[serde(skip_serializing_if = "Option::is_none")]
    gap: Option<Vec<f64>>,
}

fn plan(args: PlanArgs) -> CliResult {
    let mdp = load_mdp(&args.mdp)?;
    if args.n == 0 {
        return invalid("--n must be at least 1");
    }
    if !(args.eps > 0.0) {
        return invalid("--eps must be positive");
    }
    let mut gm = GenerativeModel::new(mdp.clone(), args.seed)?;
    let mut warnings = Vec::new();
    let (plan, gap) = if let Some(gamma) = args.gamma {
        check_discount(gamma)?;
        let plan = perturbed_empirical_planning(&mut gm, args.n, args.eps, gamma)?;
        let gap = if args.evaluate { Some(gap_discounted(&mdp, &plan.policy, gamma)?) } else { None };
        (plan, gap)
    } else {
        let ebar = match (args.ebar, args.span_from_oracle) {
            (Some(x), None) => x,
            (None, Some(target)) => {
                let h = optimal_gain_bias_auto(&mdp)?.span();
                let b = transient_time_param(&mdp)?;
                let params = ComplexityParams { span_H: h, transient_B: b, diameter_D: f64::NAN, tau_unif: f64::NAN };
                let ebar = OracleTarget::from(target).value(&params);
                let gamma = 1.0 - args.eps / (12.0 * ebar.max(args.eps));
                warnings = precondition_warnings(args.eps, gamma, &params);
                ebar
            }
            _ => return invalid("give exactly one of --ebar, --span-from-oracle or --gamma"),
        };
        let plan = average_to_discount(&mut gm, args.n, args.eps, ebar)?;
        let gap = if args.evaluate { Some(gap_average(&mdp, &plan.policy)?) } else { None };
        (plan, gap)
    };
    emit(&PlanOutput { plan, warnings, gap }, args.output.as_deref())
}

fn read_policy(arg: &str, num_actions: usize) -> CliResult<Policy> {
    let trimmed = arg.trim_start();
    let text = if trimmed.starts_with('[') {
        arg.to_string()
    } else {
        let path = Path::new(arg);
        fs::read_to_string(path).map_err(|e| io_failure(path, e))?
    };
    Ok(Policy::from_json_str(&text, num_actions)?)
}

fn variance(mdp: &Path, policy: &str, gamma: f64, max_horizon: usize, output: Option<&Path>) -> CliResult {
    check_discount(gamma)?;
    let mdp = load_mdp(mdp)?;
    let policy = read_policy(policy, mdp.num_actions())?;
    let chain = induce_chain(&mdp, &policy)?;
    emit(&variance_report(&chain, gamma, max_horizon)?, output)
}

fn sweep(args: SweepArgs) -> CliResult {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
            serde_json::from_str::<SweepConfig>(&text)
                .map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))?
        }
        None => {
            let Some(mdp) = &args.mdp else {
                return invalid("sweep needs --config or --mdp");
            };
            SweepConfig {
                instance: InstanceSource::File { path: mdp.clone() },
                criterion: Criterion::Average,
                eps_grid: Vec::new(),
                n_grid: NGrid::Explicit(Vec::new()),
                trials: 100,
                delta: 0.05,
                seed: 0,
                ebar: None,
                gamma: None,
                tie_instance_eps: false,
                record_wall_time: true,
                output: None,
            }
        }
    };
    if let Some(mdp) = args.mdp {
        cfg.instance = InstanceSource::File { path: mdp };
    }
    if let Some(c) = args.criterion {
        cfg.criterion = match c {
            CriterionArg::Average => Criterion::Average,
            CriterionArg::Discounted => Criterion::Discounted,
        };
    }
    if let Some(e) = args.eps_grid {
        cfg.eps_grid = e;
    }
    if let Some(n) = args.n_grid {
        cfg.n_grid = NGrid::Explicit(n);
    }
    if let Some(g) = args.n_geometric {
        let [start, ratio, count] = g[..] else {
            return invalid("--n-geometric takes start,ratio,count");
        };
        if !(start >= 1.0 && ratio > 1.0 && count >= 1.0 && count.fract() == 0.0) {
            return invalid("--n-geometric needs start >= 1, ratio > 1 and an integer count >= 1");
        }
        cfg.n_grid = NGrid::Geometric { start, ratio, count: count as usize };
    }
    if let Some(t) = args.trials {
        cfg.trials = t;
    }
    if let Some(d) = args.delta {
        cfg.delta = d;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(x) = args.ebar {
        cfg.ebar = Some(EbarChoice::Fixed(x));
    }
    if let Some(o) = args.span_from_oracle {
        cfg.ebar = Some(EbarChoice::Oracle(o.into()));
    }
    if let Some(g) = args.gamma {
        cfg.gamma = Some(g);
    }
    if args.tie_instance_eps {
        cfg.tie_instance_eps = true;
    }
    if args.no_wall_time {
        cfg.record_wall_time = false;
    }
    if let Some(out) = args.out {
        cfg.output = Some(out);
    }
    cfg.validate()?;

    let result = run_sweep(&cfg)?;
    match &cfg.output {
        Some(path) => {
            let file = fs::File::create(path).map_err(|e| io_failure(path, e))?;
            write_csv(&result, std::io::BufWriter::new(file))?;
            #[derive(Serialize)]
            struct Summary<'a> {
                n_star: &'a [amdp_core::NStar],
                monotone_violation: bool,
                csv: &'a Path,
            }
            emit(&Summary { n_star: &result.n_star, monotone_violation: result.monotone_violation, csv: path }, None)
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            write_csv(&result, &mut lock)?;
            lock.flush().map_err(|e| Failure::Runtime(e.to_string()))
        }
    }
}

fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::Gen(args) => gen(args),
        Command::Analyze { mdp, output } => emit(&analyze(&load_mdp(&mdp)?)?, output.as_deref()),
        Command::Solve { mdp, gamma, tol, output } => {
            check_discount(gamma)?;
            let tol = tol.unwrap_or_else(|| default_tolerance(gamma));
            if !(tol > 0.0) {
                return invalid("--tol must be positive");
            }
            emit(&solve_discounted(&load_mdp(&mdp)?, gamma, tol)?, output.as_deref())
        }
        Command::Plan(args) => plan(args),
        Command::Variance { mdp, policy, gamma, max_horizon, output } => {
            variance(&mdp, &policy, gamma, max_horizon, output.as_deref())
        }
        Command::Sweep(args) => sweep(args),
        Command::Distinguish { n, t, trials, seed, eps } => {
            emit(&distinguishability_experiment(n, t, trials, seed, eps)?, None)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
