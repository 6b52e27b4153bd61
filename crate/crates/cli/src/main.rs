mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use mfc_core::disc_solver::{geometric_schedule, VanishingOptions};
use mfc_core::limits::{McSettings, MfConfig, SweepConfig, SweepMethod};
use mfc_core::{
    build_grid_problem, build_lifted_mdp, check_minorization, estimate_lipschitz, evaluate_symmetric_on_finite,
    flow_distribution_mc, load_model, solve_discounted, solve_mf_average, solve_mf_discounted, solve_oracle, solve_rvi,
    value_convergence_sweep, vanishing_discount, AgentModel, AvgSolution, Criterion, FiniteMdp, GridConfig, LiftConfig,
    LiftedMdp, SimplexGrid, SymmetricPolicy,
};

use output::{fmt_counts, fmt_f, fmt_vec, write_error, RunDir};

const DEFAULT_OUT: &str = "mfc-out";

#[derive(Parser, Debug)]
#[command(name = "mfc", version, about = "Average-cost mean-field control solver")]
struct Cli {
    /// Seed for every random component of the run.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Solver tolerance.
    #[arg(long, global = true, default_value_t = 1e-8)]
    tol: f64,
    /// Worker thread cap (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory for the run artifacts.
    #[arg(long, global = true, env = "MFC_OUT", default_value = DEFAULT_OUT)]
    out: PathBuf,
    /// Enumeration budget for lifted states and grid points.
    #[arg(long, global = true)]
    max_states: Option<u128>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "kebab-case", tag = "command")]
enum Command {
    /// Validate a model and report its contraction constants.
    CheckModel(CheckArgs),
    /// Build the lifted N-agent MDP and cache it.
    Lift(LiftArgs),
    /// Solve the average-cost problem of a lifted MDP.
    SolveAvg(SolveAvgArgs),
    /// Solve a discounted problem of a lifted MDP.
    SolveDisc(SolveDiscArgs),
    /// Run the vanishing-discount ladder and emit its trace.
    Vanish(VanishArgs),
    /// Solve the infinite-population problem on a simplex grid.
    MfSolve(MfSolveArgs),
    /// Compare finite-population values with the grid limit.
    LimitSweep(SweepArgs),
    /// Evaluate a symmetric policy artifact on the N-agent system.
    EvalPolicy(EvalArgs),
    /// Simulate populations and compare them with the mean-field flow.
    FlowMc(FlowArgs),
}

#[derive(Args, Debug, Serialize)]
struct ModelArg {
    /// Model document (TOML).
    #[arg(long)]
    model: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct CheckArgs {
    #[command(flatten)]
    #[serde(flatten)]
    model: ModelArg,
    /// Lattice resolution for the minorization probe.
    #[arg(long, default_value_t = 8)]
    probe: u32,
    /// Random probe pairs for the Lipschitz estimate.
    #[arg(long, default_value_t = 500)]
    samples: usize,
}

#[derive(Args, Debug, Serialize)]
struct LiftArgs {
    #[command(flatten)]
    #[serde(flatten)]
    model: ModelArg,
    #[arg(long, visible_alias = "N")]
    n: u32,
    /// Estimate rows from this many simulated transitions instead of exactly.
    #[arg(long)]
    mc: Option<usize>,
}

/// Either a model with a population size, or a cached lifted MDP.
#[derive(Args, Debug, Serialize)]
struct MdpSource {
    #[arg(long, required_unless_present = "mdp", requires = "n")]
    model: Option<PathBuf>,
    #[arg(long, visible_alias = "N")]
    n: Option<u32>,
    /// Cached lifted MDP written by `lift`.
    #[arg(long, conflicts_with = "model")]
    mdp: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum AvgMethod {
    Rvi,
    Oracle,
    Vanishing,
}

#[derive(Args, Debug, Serialize)]
struct SolveAvgArgs {
    #[command(flatten)]
    #[serde(flatten)]
    source: MdpSource,
    #[arg(long, value_enum, default_value_t = AvgMethod::Rvi)]
    method: AvgMethod,
    #[arg(long, default_value_t = 0)]
    anchor: usize,
    #[arg(long, default_value_t = 100_000)]
    max_iter: usize,
    /// Largest number of stationary policies the oracle may enumerate.
    #[arg(long, default_value_t = 1_000_000)]
    oracle_budget: u128,
    /// Last rung of the discount ladder for `--method vanishing`.
    #[arg(long, default_value_t = 30)]
    kmax: u32,
}

#[derive(Args, Debug, Serialize)]
struct SolveDiscArgs {
    #[command(flatten)]
    #[serde(flatten)]
    source: MdpSource,
    #[arg(long)]
    beta: f64,
}

#[derive(Args, Debug, Serialize)]
struct VanishArgs {
    #[command(flatten)]
    #[serde(flatten)]
    source: MdpSource,
    #[arg(long, default_value_t = 0)]
    anchor: usize,
    #[arg(long, default_value_t = 3)]
    kmin: u32,
    #[arg(long, default_value_t = 20)]
    kmax: u32,
    /// Solve every rung even after the estimates have settled.
    #[arg(long)]
    full: bool,
}

#[derive(Args, Debug, Serialize)]
struct MfSolveArgs {
    #[command(flatten)]
    #[serde(flatten)]
    model: ModelArg,
    #[arg(long, default_value_t = 16)]
    grid: u32,
    #[arg(long, default_value_t = 16)]
    mesh: u32,
    #[arg(long, required_unless_present = "avg", conflicts_with = "avg")]
    beta: Option<f64>,
    /// Average-cost problem by vanishing discount.
    #[arg(long)]
    avg: bool,
    #[arg(long, default_value_t = 30)]
    kmax: u32,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum SweepMethodArg {
    Auto,
    Oracle,
    Rvi,
    Vanishing,
}

#[derive(Args, Debug, Serialize)]
struct SweepArgs {
    #[command(flatten)]
    #[serde(flatten)]
    model: ModelArg,
    /// Population sizes, comma separated.
    #[arg(long, visible_alias = "Ns", value_delimiter = ',', required = true)]
    ns: Vec<u32>,
    #[arg(long, default_value_t = 32)]
    grid: u32,
    #[arg(long, value_enum, default_value_t = SweepMethodArg::Auto)]
    method: SweepMethodArg,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum CriterionArg {
    Avg,
    Disc,
}

#[derive(Args, Debug, Serialize)]
struct EvalArgs {
    #[command(flatten)]
    #[serde(flatten)]
    model: ModelArg,
    /// Policy artifact written by `mf-solve`.
    #[arg(long)]
    policy: PathBuf,
    #[arg(long, visible_alias = "N")]
    n: u32,
    #[arg(long, value_enum, default_value_t = CriterionArg::Avg)]
    criterion: CriterionArg,
    #[arg(long, required_if_eq("criterion", "disc"))]
    beta: Option<f64>,
    /// Simulated paths when the exact lift does not fit the budget.
    #[arg(long, default_value_t = 2000)]
    mc_samples: usize,
    #[arg(long, default_value_t = 400)]
    mc_horizon: usize,
}

#[derive(Args, Debug, Serialize)]
struct FlowArgs {
    #[command(flatten)]
    #[serde(flatten)]
    model: ModelArg,
    /// Policy artifact; the uniform policy when absent.
    #[arg(long)]
    policy: Option<PathBuf>,
    #[arg(long, visible_alias = "N")]
    n: u32,
    #[arg(long = "t", visible_alias = "T", default_value_t = 50)]
    horizon: usize,
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    /// Initial measure, comma separated; uniform when absent.
    #[arg(long, value_delimiter = ',')]
    init: Option<Vec<f64>>,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::CheckModel(_) => "check-model",
            Command::Lift(_) => "lift",
            Command::SolveAvg(_) => "solve-avg",
            Command::SolveDisc(_) => "solve-disc",
            Command::Vanish(_) => "vanish",
            Command::MfSolve(_) => "mf-solve",
            Command::LimitSweep(_) => "limit-sweep",
            Command::EvalPolicy(_) => "eval-policy",
            Command::FlowMc(_) => "flow-mc",
        }
    }
}

/// A file the run could not read; reported with its path.
#[derive(Debug)]
struct InputError {
    path: PathBuf,
    source: anyhow::Error,
}

impl std::fmt::Display for InputError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "cannot read {}: {}", self.path.display(), self.source)
    }
}

impl std::error::Error for InputError {}

fn read_model(path: &Path) -> Result<AgentModel> {
    load_model(path).map_err(|e| {
        InputError {
            path: path.to_path_buf(),
            source: e.into(),
        }
        .into()
    })
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let load = || -> Result<T> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    };
    load().map_err(|e| {
        InputError {
            path: path.to_path_buf(),
            source: e,
        }
        .into()
    })
}

struct Ctx {
    tol: f64,
    seed: u64,
    max_states: Option<u128>,
}

impl Ctx {
    fn lift_config(&self, mc: Option<usize>) -> LiftConfig {
        let mut c = match mc {
            Some(s) => LiftConfig::monte_carlo(s, self.seed),
            None => LiftConfig::exact(),
        };
        if let Some(b) = self.max_states {
            c.budget = b;
        }
        c
    }

    fn grid_config(&self, grid: u32, mesh: u32) -> GridConfig {
        let mut c = GridConfig::new(grid, mesh);
        if let Some(b) = self.max_states {
            c.budget = b;
        }
        c
    }
}

/// Lifted MDP from a model or a cache, with the model when one was given.
fn load_mdp(ctx: &Ctx, src: &MdpSource, run: &mut RunDir) -> Result<LiftedMdp> {
    if let Some(path) = &src.mdp {
        let mdp: LiftedMdp = read_json(path)?;
        run.set_model(None, &mdp.model_hash);
        return Ok(mdp);
    }
    let path = src
        .model
        .as_ref()
        .ok_or_else(|| anyhow!("either --model with --n or --mdp is required"))?;
    let model = read_model(path)?;
    run.set_model(Some(path), model.hash());
    let n = src.n.ok_or_else(|| anyhow!("--n is required with --model"))?;
    Ok(build_lifted_mdp(&model, n, &ctx.lift_config(None))?)
}

fn check_policy_model(policy: &SymmetricPolicy, model: &AgentModel) -> Result<()> {
    if let Some(h) = &policy.model_hash {
        if h != model.hash() {
            return Err(mfc_core::Error::InvalidArgument(format!(
                "policy was computed for model {h}, not {}",
                model.hash()
            ))
            .into());
        }
    }
    Ok(())
}

fn policy_rows(mdp: &LiftedMdp, sol: &AvgSolution) -> Vec<Vec<String>> {
    mdp.states
        .iter()
        .enumerate()
        .map(|(s, mu)| {
            let a = sol.policy[s];
            let theta: Vec<String> = mdp.actions[s][a].counts.iter().map(|r| fmt_counts(r)).collect();
            vec![
                s.to_string(),
                fmt_counts(&mu.counts),
                a.to_string(),
                theta.join(" | "),
                fmt_f(sol.h[s]),
            ]
        })
        .collect()
}

fn run(cli: &Cli, run: &mut RunDir) -> Result<()> {
    let ctx = Ctx {
        tol: cli.tol,
        seed: cli.seed,
        max_states: cli.max_states,
    };
    match &cli.command {
        Command::CheckModel(a) => {
            let model = read_model(&a.model.model)?;
            run.set_model(Some(&a.model.model), model.hash());
            let cert = check_minorization(&model, a.probe);
            let lip = estimate_lipschitz(&model, a.samples, ctx.seed);
            run.write_json(
                "result.json",
                &json!({
                    "num_states": model.num_states(),
                    "num_actions": model.num_actions(),
                    "cost_bound": model.cost_bound(),
                    "minorization": cert,
                    "lipschitz": lip,
                }),
            )?;
        }
        Command::Lift(a) => {
            let model = read_model(&a.model.model)?;
            run.set_model(Some(&a.model.model), model.hash());
            let mdp = build_lifted_mdp(&model, a.n, &ctx.lift_config(a.mc))?;
            let pairs: usize = (0..mdp.num_states()).map(|s| mdp.num_actions(s)).sum();
            run.write_artifact("lifted.json", &mdp)?;
            let rows: Vec<Vec<String>> = mdp
                .states
                .iter()
                .enumerate()
                .map(|(s, mu)| vec![s.to_string(), fmt_counts(&mu.counts), mdp.num_actions(s).to_string()])
                .collect();
            run.write_csv("states.csv", &["state", "counts", "actions"], &rows)?;
            run.write_json(
                "result.json",
                &json!({ "n": mdp.n, "states": mdp.num_states(), "state_action_pairs": pairs, "mode": mdp.mode }),
            )?;
        }
        Command::SolveAvg(a) => {
            let mdp = load_mdp(&ctx, &a.source, run)?;
            let sol = match a.method {
                AvgMethod::Rvi => solve_rvi(&mdp, a.anchor, ctx.tol, a.max_iter)?,
                AvgMethod::Oracle => solve_oracle(&mdp, a.oracle_budget)?,
                AvgMethod::Vanishing => {
                    let schedule = geometric_schedule(1, a.kmax);
                    vanishing_discount(&mdp, a.anchor, &schedule, &VanishingOptions::new(ctx.tol))?.0
                }
            };
            run.write_csv(
                "policy.csv",
                &["state", "counts", "action", "theta", "h"],
                &policy_rows(&mdp, &sol),
            )?;
            let spans: Vec<Vec<String>> = sol
                .spans
                .iter()
                .enumerate()
                .map(|(i, s)| vec![(i + 1).to_string(), fmt_f(*s)])
                .collect();
            run.write_csv("spans.csv", &["iteration", "span"], &spans)?;
            run.write_json("result.json", &sol)?;
        }
        Command::SolveDisc(a) => {
            let mdp = load_mdp(&ctx, &a.source, run)?;
            let sol = solve_discounted(&mdp, a.beta, ctx.tol, None)?;
            let rows: Vec<Vec<String>> = mdp
                .states
                .iter()
                .enumerate()
                .map(|(s, mu)| {
                    vec![
                        s.to_string(),
                        fmt_counts(&mu.counts),
                        fmt_f(sol.values[s]),
                        sol.policy[s].to_string(),
                    ]
                })
                .collect();
            run.write_csv("values.csv", &["state", "counts", "value", "action"], &rows)?;
            run.write_json("result.json", &sol)?;
        }
        Command::Vanish(a) => {
            if a.kmin == 0 || a.kmin > a.kmax {
                return Err(mfc_core::Error::InvalidArgument("need 1 <= kmin <= kmax".into()).into());
            }
            let mdp = load_mdp(&ctx, &a.source, run)?;
            let mut opts = VanishingOptions::new(ctx.tol);
            opts.full_schedule = a.full;
            let schedule = geometric_schedule(a.kmin, a.kmax);
            let (sol, trace) = vanishing_discount(&mdp, a.anchor, &schedule, &opts)?;
            let rows: Vec<Vec<String>> = trace
                .betas
                .iter()
                .enumerate()
                .map(|(i, b)| {
                    vec![
                        fmt_f(*b),
                        fmt_f(trace.j_estimates[i]),
                        fmt_f(trace.residuals[i]),
                        trace.policy_changes[i].to_string(),
                    ]
                })
                .collect();
            run.write_csv(
                "trace.csv",
                &["beta", "j_estimate", "residual", "policy_changes"],
                &rows,
            )?;
            run.write_json(
                "result.json",
                &json!({
                    "j_star": sol.j_star,
                    "residual": sol.residual,
                    "converged": trace.converged,
                    "rungs": trace.betas.len(),
                    "policy": sol.policy,
                }),
            )?;
        }
        Command::MfSolve(a) => {
            let model = read_model(&a.model.model)?;
            run.set_model(Some(&a.model.model), model.hash());
            let problem = build_grid_problem(&model, &ctx.grid_config(a.grid, a.mesh))?;
            let point = |i: usize| fmt_vec(&problem.grid.points[i]);
            if let Some(beta) = a.beta {
                let sol = solve_mf_discounted(&problem, beta, ctx.tol)?;
                let rows: Vec<Vec<String>> = (0..problem.grid.len())
                    .map(|i| vec![i.to_string(), point(i), fmt_f(sol.values[i]), sol.greedy[i].to_string()])
                    .collect();
                run.write_csv("values.csv", &["point", "mu", "value", "action"], &rows)?;
                run.write_artifact("policy.json", &sol.policy)?;
                run.write_json(
                    "result.json",
                    &json!({
                        "beta": beta,
                        "grid_points": problem.grid.len(),
                        "residual": sol.residual,
                        "max_projection_displacement": sol.max_projection_displacement,
                    }),
                )?;
            } else {
                let schedule = geometric_schedule(1, a.kmax);
                let sol = solve_mf_average(&problem, 0, &schedule, &VanishingOptions::new(ctx.tol))?;
                let rows: Vec<Vec<String>> = (0..problem.grid.len())
                    .map(|i| {
                        vec![
                            i.to_string(),
                            point(i),
                            fmt_f(sol.solution.h[i]),
                            sol.solution.policy[i].to_string(),
                        ]
                    })
                    .collect();
                run.write_csv("values.csv", &["point", "mu", "h", "action"], &rows)?;
                let trace: Vec<Vec<String>> = sol
                    .trace
                    .betas
                    .iter()
                    .zip(&sol.trace.j_estimates)
                    .zip(&sol.trace.residuals)
                    .map(|((b, j), r)| vec![fmt_f(*b), fmt_f(*j), fmt_f(*r)])
                    .collect();
                run.write_csv("trace.csv", &["beta", "j_estimate", "residual"], &trace)?;
                run.write_artifact("policy.json", &sol.policy)?;
                run.write_json(
                    "result.json",
                    &json!({
                        "j": sol.j,
                        "vanishing_estimate": sol.solution.j_star,
                        "residual": sol.solution.residual,
                        "converged": sol.trace.converged,
                        "grid_points": problem.grid.len(),
                        "max_projection_displacement": problem.max_projection_displacement,
                    }),
                )?;
            }
        }
        Command::LimitSweep(a) => {
            let model = read_model(&a.model.model)?;
            run.set_model(Some(&a.model.model), model.hash());
            let config = SweepConfig {
                method: match a.method {
                    SweepMethodArg::Auto => SweepMethod::Auto,
                    SweepMethodArg::Oracle => SweepMethod::Oracle,
                    SweepMethodArg::Rvi => SweepMethod::Rvi,
                    SweepMethodArg::Vanishing => SweepMethod::Vanishing,
                },
                tol: ctx.tol,
                lift: ctx.lift_config(None),
                ..SweepConfig::default()
            };
            let mut mf = MfConfig::new(a.grid);
            mf.grid = ctx.grid_config(a.grid, a.grid);
            let r = value_convergence_sweep(&model, &a.ns, &config, &mf)?;
            let opt = |v: Option<f64>| v.map_or(String::new(), fmt_f);
            let rows: Vec<Vec<String>> = (0..r.ns.len())
                .map(|i| {
                    vec![
                        r.ns[i].to_string(),
                        opt(r.j_ns[i]),
                        opt(r.gaps[i]),
                        r.method_tags[i].clone(),
                    ]
                })
                .collect();
            run.write_csv("gaps.csv", &["n", "j_n", "gap", "method"], &rows)?;
            run.write_json("result.json", &r)?;
        }
        Command::EvalPolicy(a) => {
            let model = read_model(&a.model.model)?;
            run.set_model(Some(&a.model.model), model.hash());
            let policy: SymmetricPolicy = read_json(&a.policy)?;
            check_policy_model(&policy, &model)?;
            let criterion = match a.criterion {
                CriterionArg::Avg => Criterion::Average,
                CriterionArg::Disc => Criterion::Discounted {
                    beta: a.beta.context("--beta is required for --criterion disc")?,
                },
            };
            let mc = McSettings {
                samples: a.mc_samples,
                horizon: a.mc_horizon,
                seed: ctx.seed,
            };
            let ev = evaluate_symmetric_on_finite(&model, &policy, a.n, criterion, &ctx.lift_config(None), &mc)?;
            let rows: Vec<Vec<String>> = ev
                .starts
                .iter()
                .enumerate()
                .map(|(s, c)| {
                    let se = ev.stderr.as_ref().map_or(String::new(), |e| fmt_f(e[s]));
                    vec![s.to_string(), fmt_counts(c), fmt_f(ev.values[s]), se]
                })
                .collect();
            run.write_csv("values.csv", &["state", "counts", "value", "stderr"], &rows)?;
            run.write_json("result.json", &ev)?;
        }
        Command::FlowMc(a) => {
            let model = read_model(&a.model.model)?;
            run.set_model(Some(&a.model.model), model.hash());
            let nx = model.num_states();
            let policy = match &a.policy {
                Some(p) => {
                    let policy: SymmetricPolicy = read_json(p)?;
                    check_policy_model(&policy, &model)?;
                    policy
                }
                None => {
                    let nu = model.num_actions();
                    let grid = SimplexGrid::new(1, model.metric_x(), 1_000_000)?;
                    SymmetricPolicy::constant(grid, vec![vec![1.0 / nu as f64; nu]; nx])
                }
            };
            let init = a.init.clone().unwrap_or_else(|| vec![1.0 / nx as f64; nx]);
            if init.len() != nx || init.iter().any(|p| *p < 0.0) || (init.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                bail!(mfc_core::Error::InvalidArgument(format!(
                    "--init must be a probability vector with {nx} entries"
                )));
            }
            let (_, cmp) = flow_distribution_mc(&model, a.n, &policy, a.horizon, a.samples, ctx.seed, &init, None)?;
            let rows: Vec<Vec<String>> = cmp
                .mean_w1
                .iter()
                .zip(&cmp.w1_stderr)
                .enumerate()
                .map(|(t, (w, se))| vec![(t + 1).to_string(), fmt_f(*w), fmt_f(*se)])
                .collect();
            run.write_csv("w1.csv", &["t", "mean_w1", "stderr"], &rows)?;
            run.write_json("result.json", &cmp)?;
        }
    }
    Ok(())
}

/// Exit status and error kind for a failed run.
fn classify(err: &anyhow::Error) -> (i32, &'static str, Option<String>) {
    if let Some(e) = err.downcast_ref::<InputError>() {
        return (3, "input", Some(e.path.display().to_string()));
    }
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<mfc_core::Error>() {
            use mfc_core::Error as E;
            return match e {
                E::Parse { .. } => (3, "input", None),
                E::Capacity { .. } => (4, "capacity", None),
                E::NonConvergence { .. } => (5, "non_convergence", None),
                E::Dimension(_) | E::MarginalMismatch { .. } | E::InvalidArgument(_) => (6, "invalid_argument", None),
                E::Io(_) | E::Json(_) => (1, "io", None),
            };
        }
    }
    (1, "other", None)
}

/// `--out` as typed, for error documents written before parsing succeeds.
fn raw_out_dir() -> PathBuf {
    let args: Vec<String> = std::env::args().collect();
    for (i, a) in args.iter().enumerate() {
        if let Some(v) = a.strip_prefix("--out=") {
            return PathBuf::from(v);
        }
        if a == "--out" {
            if let Some(v) = args.get(i + 1) {
                return PathBuf::from(v);
            }
        }
    }
    std::env::var_os("MFC_OUT").map_or_else(|| PathBuf::from(DEFAULT_OUT), PathBuf::from)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let _ = e.print();
            write_error(&raw_out_dir(), "", 2, "usage", e.to_string().trim_end(), None);
            return ExitCode::from(2);
        }
    };
    let command = cli.command.name();
    let outcome = (|| -> Result<()> {
        if cli.tol.is_nan() || cli.tol <= 0.0 {
            return Err(mfc_core::Error::InvalidArgument("--tol must be positive".into()).into());
        }
        if let Some(t) = cli.threads {
            rayon::ThreadPoolBuilder::new().num_threads(t).build_global()?;
        }
        let config =
            json!({ "tol": cli.tol, "max_states": cli.max_states.map(|b| b.to_string()), "args": cli.command });
        let mut dir = RunDir::create(&cli.out, command, config, cli.seed)?;
        run(&cli, &mut dir)?;
        dir.finish(cli.threads)
    })();
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let (code, kind, path) = classify(&err);
            eprintln!("mfc {command}: {err:#}");
            write_error(&cli.out, command, code, kind, &format!("{err:#}"), path.as_deref());
            ExitCode::from(code as u8)
        }
    }
}
