//! Large-population experiments: value gaps `|j_N - j_inf|`, evaluation of
//! grid-extracted symmetric policies on finite populations, and Monte-Carlo
//! flows of state-action empirical measures compared against the
//! infinite-population flow under matched common noise.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agent_model::AgentModel;
use crate::avg_solver::{evaluate_policy_avg, greedy_gain, solve_oracle, solve_rvi, Policy, ORACLE_BUDGET};
use crate::disc_solver::{geometric_schedule, vanishing_discount, VanishingOptions};
use crate::dp::{induced_chain, FiniteMdp};
use crate::error::{Error, Result};
use crate::lift::{build_lifted_mdp, derive_seed, LiftConfig, LiftedMdp};
use crate::meanfield::{build_grid_problem, compose, flow_step, solve_mf_average, GridConfig, SymmetricPolicy};
use crate::measures::{
    binomial, enumerate_empirical, flatten_joint, product_metric, wasserstein1, JointEmpiricalMeasure,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMethod {
    /// Oracle when the policy count fits the budget, vanishing discount otherwise.
    Auto,
    Oracle,
    Rvi,
    Vanishing,
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub method: SweepMethod,
    pub tol: f64,
    pub max_iter: usize,
    pub schedule: Vec<f64>,
    pub oracle_budget: u128,
    pub lift: LiftConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            method: SweepMethod::Auto,
            tol: 1e-7,
            max_iter: 100_000,
            schedule: geometric_schedule(3, 30),
            oracle_budget: ORACLE_BUDGET,
            lift: LiftConfig::exact(),
        }
    }
}

/// Settings for the infinite-population reference value.
#[derive(Debug, Clone)]
pub struct MfConfig {
    pub grid: GridConfig,
    pub schedule: Vec<f64>,
    pub tol: f64,
}

impl MfConfig {
    pub fn new(resolution: u32) -> Self {
        Self {
            grid: GridConfig::new(resolution, resolution),
            schedule: geometric_schedule(3, 30),
            tol: 1e-7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub ns: Vec<u32>,
    /// `None` where the lift or solver exceeded its budget.
    pub j_ns: Vec<Option<f64>>,
    pub j_inf: f64,
    pub gaps: Vec<Option<f64>>,
    pub method_tags: Vec<String>,
    /// Largest grid projection displacement behind `j_inf`.
    pub grid_displacement: f64,
}

/// Optimal average cost of one lifted MDP by the configured method.
pub fn finite_value(mdp: &LiftedMdp, config: &SweepConfig) -> Result<(f64, String)> {
    let policies: u128 = (0..mdp.num_states())
        .map(|s| mdp.num_actions(s) as u128)
        .try_fold(1u128, |acc, k| acc.checked_mul(k))
        .unwrap_or(u128::MAX);
    let method = match config.method {
        SweepMethod::Auto if policies <= config.oracle_budget => SweepMethod::Oracle,
        SweepMethod::Auto => SweepMethod::Vanishing,
        m => m,
    };
    match method {
        SweepMethod::Oracle => Ok((solve_oracle(mdp, config.oracle_budget)?.j_star, "oracle".into())),
        SweepMethod::Rvi => Ok((solve_rvi(mdp, 0, config.tol, config.max_iter)?.j_star, "rvi".into())),
        _ => {
            let (sol, trace) = vanishing_discount(mdp, 0, &config.schedule, &VanishingOptions::new(config.tol))?;
            let tag = if trace.converged {
                "vanishing"
            } else {
                "vanishing(unconverged)"
            };
            // the greedy policy's exact gain bounds j* from above; use it when it is that tight
            match greedy_gain(mdp, &sol.policy) {
                Some(g) if g <= sol.j_star + 10.0 * config.tol => Ok((g, format!("{tag}+greedy"))),
                _ => Ok((sol.j_star, tag.into())),
            }
        }
    }
}

/// Gap table `|j_N - j_inf|` over population sizes. Budget overruns at a
/// given `N` are recorded as absent entries and the sweep continues.
pub fn value_convergence_sweep(
    model: &AgentModel,
    ns: &[u32],
    config: &SweepConfig,
    mf: &MfConfig,
) -> Result<SweepResult> {
    let problem = build_grid_problem(model, &mf.grid)?;
    let mf_sol = solve_mf_average(&problem, 0, &mf.schedule, &VanishingOptions::new(mf.tol))?;
    let j_inf = mf_sol.j;
    let mut out = SweepResult {
        ns: ns.to_vec(),
        j_ns: Vec::new(),
        j_inf,
        gaps: Vec::new(),
        method_tags: Vec::new(),
        grid_displacement: problem.max_projection_displacement,
    };
    for &n in ns {
        let attempt = build_lifted_mdp(model, n, &config.lift).and_then(|mdp| finite_value(&mdp, config));
        match attempt {
            Ok((j, tag)) => {
                out.j_ns.push(Some(j));
                out.gaps.push(Some((j - j_inf).abs()));
                out.method_tags.push(tag);
            }
            Err(e @ Error::Capacity { .. }) => {
                out.j_ns.push(None);
                out.gaps.push(None);
                out.method_tags.push(format!("skipped: {e}"));
            }
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Per-state distribution over lifted actions induced by every agent
/// independently drawing `u ~ gamma(.|x, project(mu))`: the probability of
/// `Theta` is the product over states of multinomial terms.
pub fn lift_symmetric_policy(mdp: &LiftedMdp, policy: &SymmetricPolicy) -> Result<Vec<Vec<f64>>> {
    if policy.grid.metric.len() != mdp.num_x || policy.num_actions() != mdp.num_u {
        return Err(Error::Dimension("policy spaces do not match the lifted model".into()));
    }
    Ok(mdp
        .states
        .iter()
        .zip(&mdp.actions)
        .map(|(mu, acts)| {
            let gamma = policy.lookup(&mu.probs());
            acts.iter()
                .map(|theta| {
                    let mut p = 1.0;
                    for (x, row) in theta.counts.iter().enumerate() {
                        let mut left = mu.counts[x] as u64;
                        for (u, &k) in row.iter().enumerate() {
                            p *= binomial(left, k as u64) as f64 * gamma.rows[x][u].powi(k as i32);
                            left -= k as u64;
                        }
                    }
                    p
                })
                .collect()
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Criterion {
    Average,
    Discounted { beta: f64 },
}

/// Simulation settings used when the exact lift does not fit the budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McSettings {
    pub samples: usize,
    pub horizon: usize,
    pub seed: u64,
}

impl Default for McSettings {
    fn default() -> Self {
        Self {
            samples: 2000,
            horizon: 400,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteEvaluation {
    pub n: u32,
    pub criterion: Criterion,
    /// Lifted states in enumeration order.
    pub starts: Vec<Vec<u32>>,
    pub values: Vec<f64>,
    /// Standard errors, present only for simulated values.
    pub stderr: Option<Vec<f64>>,
    pub method: String,
}

/// `v = (I - beta P)^-1 r`.
fn discounted_values(p: &[Vec<f64>], r: &[f64], beta: f64) -> Vec<f64> {
    let n = r.len();
    let a = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 } - beta * p[i][j]);
    let b = DVector::from_column_slice(r);
    let v = a.lu().solve(&b).expect("I - beta P is invertible for beta < 1");
    v.iter().copied().collect()
}

/// Value of a symmetric policy on the `N`-agent system from every lifted start.
pub fn evaluate_symmetric_on_finite(
    model: &AgentModel,
    policy: &SymmetricPolicy,
    n: u32,
    criterion: Criterion,
    lift: &LiftConfig,
    mc: &McSettings,
) -> Result<FiniteEvaluation> {
    if let Criterion::Discounted { beta } = criterion {
        if !(beta > 0.0 && beta < 1.0) {
            return Err(Error::InvalidArgument(format!("discount {beta} not in (0, 1)")));
        }
    }
    match build_lifted_mdp(model, n, lift) {
        Ok(mdp) => {
            let rows = lift_symmetric_policy(&mdp, policy)?;
            let values = match criterion {
                Criterion::Average => evaluate_policy_avg(&mdp, Policy::Randomized(&rows)),
                Criterion::Discounted { beta } => {
                    let (p, r) = induced_chain(&mdp, &rows);
                    discounted_values(&p, &r, beta)
                }
            };
            Ok(FiniteEvaluation {
                n,
                criterion,
                starts: mdp.states.iter().map(|m| m.counts.clone()).collect(),
                values,
                stderr: None,
                method: "exact".into(),
            })
        }
        Err(Error::Capacity { .. }) => simulate_symmetric(model, policy, n, criterion, lift.budget, mc),
        Err(e) => Err(e),
    }
}

fn simulate_symmetric(
    model: &AgentModel,
    policy: &SymmetricPolicy,
    n: u32,
    criterion: Criterion,
    budget: u128,
    mc: &McSettings,
) -> Result<FiniteEvaluation> {
    if mc.samples < 2 || mc.horizon == 0 {
        return Err(Error::InvalidArgument(
            "simulation needs samples >= 2 and horizon >= 1".into(),
        ));
    }
    let starts = enumerate_empirical(n, model.num_states(), budget)?;
    let weights: Vec<f64> = match criterion {
        Criterion::Average => vec![1.0 / mc.horizon as f64; mc.horizon],
        Criterion::Discounted { beta } => (0..mc.horizon).map(|t| beta.powi(t as i32)).collect(),
    };
    let (values, stderr): (Vec<f64>, Vec<f64>) = starts
        .iter()
        .enumerate()
        .map(|(s, mu)| {
            let init: Vec<usize> = mu
                .counts
                .iter()
                .enumerate()
                .flat_map(|(x, &c)| std::iter::repeat_n(x, c as usize))
                .collect();
            let draws: Vec<f64> = (0..mc.samples)
                .into_par_iter()
                .map(|k| {
                    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(mc.seed, s, k));
                    let mut path = AgentPath::new(model, init.clone());
                    weights
                        .iter()
                        .map(|w| {
                            let step = path.advance(model, policy, &mut rng);
                            w * step.cost
                        })
                        .sum()
                })
                .collect();
            mean_and_stderr(&draws)
        })
        .unzip();
    Ok(FiniteEvaluation {
        n,
        criterion,
        starts: starts.iter().map(|m| m.counts.clone()).collect(),
        values,
        stderr: Some(stderr),
        method: "monte_carlo".into(),
    })
}

fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn sample_categorical(p: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let r: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &q) in p.iter().enumerate() {
        acc += q;
        if r < acc {
            return i;
        }
    }
    p.iter().rposition(|&q| q > 0.0).unwrap_or(0)
}

struct Step {
    theta: JointEmpiricalMeasure,
    cost: f64,
    w0: usize,
}

/// One simulated population: agents draw actions from the symmetric policy,
/// a common-noise atom is drawn, then each agent moves independently.
struct AgentPath {
    xs: Vec<usize>,
    buf: Vec<f64>,
}

impl AgentPath {
    fn new(model: &AgentModel, xs: Vec<usize>) -> Self {
        Self {
            xs,
            buf: vec![0.0; model.num_states()],
        }
    }

    fn advance(&mut self, model: &AgentModel, policy: &SymmetricPolicy, rng: &mut ChaCha8Rng) -> Step {
        let nx = model.num_states();
        let nu = model.num_actions();
        let n = self.xs.len() as f64;
        let mut counts = vec![0.0; nx];
        for &x in &self.xs {
            counts[x] += 1.0;
        }
        let mu: Vec<f64> = counts.iter().map(|c| c / n).collect();
        let gamma = policy.lookup(&mu);
        let us: Vec<usize> = self
            .xs
            .iter()
            .map(|&x| sample_categorical(&gamma.rows[x], rng))
            .collect();
        let cost = self
            .xs
            .iter()
            .zip(&us)
            .map(|(&x, &u)| model.cost(x, u, &mu))
            .sum::<f64>()
            / n;
        let theta = JointEmpiricalMeasure::from_vectors(&self.xs, &us, nx, nu);
        let w0 = sample_categorical(&model.common_noise().probs, rng);
        for (x, &u) in self.xs.iter_mut().zip(&us) {
            model.kernel_into(w0, *x, u, &mu, &mut self.buf);
            *x = sample_categorical(&self.buf, rng);
        }
        Step { theta, cost, w0 }
    }
}

/// Sampled state-action empirical measures: `thetas[t][k]` is the measure at
/// time `t` on simulated path `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowEnsemble {
    pub n: u32,
    pub horizon: usize,
    pub samples: usize,
    pub seed: u64,
    pub thetas: Vec<Vec<JointEmpiricalMeasure>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowComparison {
    /// Per `t`, mean `W1(Theta_t^N, Theta_t)` under matched common noise.
    pub mean_w1: Vec<f64>,
    pub w1_stderr: Vec<f64>,
    /// Mean over paths of `1/T sum_t k(Theta_t^N)`.
    pub mean_cost: f64,
    pub cost_stderr: f64,
    pub j_inf: Option<f64>,
}

/// Agent states realizing `init` as closely as possible: `round(N init)` by
/// largest remainder, agents sorted by state.
pub fn initial_agents(init: &[f64], n: u32) -> Vec<usize> {
    let scaled: Vec<f64> = init.iter().map(|p| p * n as f64).collect();
    let mut counts: Vec<u32> = scaled.iter().map(|v| v.floor().max(0.0) as u32).collect();
    let mut order: Vec<usize> = (0..init.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = scaled[a] - scaled[a].floor();
        let fb = scaled[b] - scaled[b].floor();
        fb.partial_cmp(&fa).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
    });
    let mut i = 0;
    while counts.iter().sum::<u32>() < n {
        counts[order[i % order.len()]] += 1;
        i += 1;
    }
    while counts.iter().sum::<u32>() > n {
        let j = order
            .iter()
            .rev()
            .copied()
            .find(|&j| counts[j] > 0)
            .expect("positive count");
        counts[j] -= 1;
    }
    counts
        .iter()
        .enumerate()
        .flat_map(|(x, &c)| std::iter::repeat_n(x, c as usize))
        .collect()
}

/// Simulate `samples` populations of size `n` for `horizon` steps from the
/// empirical measure nearest `init`, and compare each with the infinite
/// flow started at `init` and driven by the same common-noise path.
#[allow(clippy::too_many_arguments)]
pub fn flow_distribution_mc(
    model: &AgentModel,
    n: u32,
    policy: &SymmetricPolicy,
    horizon: usize,
    samples: usize,
    seed: u64,
    init: &[f64],
    j_inf: Option<f64>,
) -> Result<(FlowEnsemble, FlowComparison)> {
    let nx = model.num_states();
    if init.len() != nx || policy.grid.metric.len() != nx || policy.num_actions() != model.num_actions() {
        return Err(Error::Dimension(
            "initial measure and policy must match the model".into(),
        ));
    }
    if n == 0 || samples == 0 || horizon == 0 {
        return Err(Error::InvalidArgument("n, samples and horizon must be positive".into()));
    }
    let metric = product_metric(model.metric_x(), model.metric_u());
    let agents = initial_agents(init, n);
    let paths: Vec<(Vec<JointEmpiricalMeasure>, Vec<f64>, f64)> = (0..samples)
        .into_par_iter()
        .map(|k| -> Result<_> {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, k, 0));
            let mut path = AgentPath::new(model, agents.clone());
            let mut mu = init.to_vec();
            let mut thetas = Vec::with_capacity(horizon);
            let mut dists = Vec::with_capacity(horizon);
            let mut cost = 0.0;
            for _ in 0..horizon {
                let step = path.advance(model, policy, &mut rng);
                let limit = compose(&policy.lookup(&mu).rows, &mu);
                let d = wasserstein1(&flatten_joint(&step.theta.probs()), &flatten_joint(&limit), &metric)?;
                mu = flow_step(model, &mu, &limit, step.w0)?;
                dists.push(d);
                cost += step.cost;
                thetas.push(step.theta);
            }
            Ok((thetas, dists, cost / horizon as f64))
        })
        .collect::<Result<_>>()?;
    let mut thetas = vec![Vec::with_capacity(samples); horizon];
    let mut mean_w1 = Vec::with_capacity(horizon);
    let mut w1_stderr = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let ds: Vec<f64> = paths.iter().map(|p| p.1[t]).collect();
        let (m, s) = mean_and_stderr(&ds);
        mean_w1.push(m);
        w1_stderr.push(s);
    }
    let costs: Vec<f64> = paths.iter().map(|p| p.2).collect();
    let (mean_cost, cost_stderr) = mean_and_stderr(&costs);
    for (ts, _, _) in paths {
        for (t, th) in ts.into_iter().enumerate() {
            thetas[t].push(th);
        }
    }
    Ok((
        FlowEnsemble {
            n,
            horizon,
            samples,
            seed,
            thetas,
        },
        FlowComparison {
            mean_w1,
            w1_stderr,
            mean_cost,
            cost_stderr,
            j_inf,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::meanfield::SimplexGrid;

    fn uniform_policy(model: &AgentModel, k: u32) -> SymmetricPolicy {
        let grid = SimplexGrid::new(k, model.metric_x(), 100_000).unwrap();
        let nu = model.num_actions();
        SymmetricPolicy::constant(grid, vec![vec![1.0 / nu as f64; nu]; model.num_states()])
    }

    fn bernoulli_policy(model: &AgentModel, p: f64) -> SymmetricPolicy {
        let grid = SimplexGrid::new(2, model.metric_x(), 100).unwrap();
        SymmetricPolicy::constant(grid, vec![vec![1.0 - p, p]; 2])
    }

    #[test]
    fn lifted_symmetric_rows_are_distributions() {
        let m = catalog::random_affine(3, 2, 2, 4);
        let mdp = build_lifted_mdp(&m, 4, &LiftConfig::exact()).unwrap();
        let pol = uniform_policy(&m, 4);
        for row in lift_symmetric_policy(&mdp, &pol).unwrap() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_cost_under_any_policy() {
        let m = catalog::constant_cost(0.7);
        let pol = bernoulli_policy(&m, 0.3);
        let ev = evaluate_symmetric_on_finite(
            &m,
            &pol,
            3,
            Criterion::Average,
            &LiftConfig::exact(),
            &McSettings::default(),
        )
        .unwrap();
        assert!(ev.values.iter().all(|v| (v - 0.7).abs() < 1e-12));
        let ev = evaluate_symmetric_on_finite(
            &m,
            &pol,
            3,
            Criterion::Discounted { beta: 0.5 },
            &LiftConfig::exact(),
            &McSettings::default(),
        )
        .unwrap();
        assert!(ev.values.iter().all(|v| (v - 1.4).abs() < 1e-12));
    }

    #[test]
    fn example_one_bernoulli_average() {
        let m = catalog::example_one();
        for p in [0.1, 0.5, 0.8] {
            let ev = evaluate_symmetric_on_finite(
                &m,
                &bernoulli_policy(&m, p),
                2,
                Criterion::Average,
                &LiftConfig::exact(),
                &McSettings::default(),
            )
            .unwrap();
            let want = 0.5 * (1.0 - 2.0 * p * (1.0 - p));
            for v in &ev.values {
                assert!((v - want).abs() < 1e-12, "p={p}: {v} vs {want}");
            }
        }
    }

    #[test]
    fn simulation_fallback_matches_exact() {
        let m = catalog::random_affine(2, 2, 2, 12);
        let pol = uniform_policy(&m, 4);
        let crit = Criterion::Discounted { beta: 0.5 };
        let exact =
            evaluate_symmetric_on_finite(&m, &pol, 3, crit, &LiftConfig::exact(), &McSettings::default()).unwrap();
        let tiny = LiftConfig {
            budget: 5,
            ..LiftConfig::exact()
        };
        let mc = McSettings {
            samples: 4000,
            horizon: 40,
            seed: 3,
        };
        // 20 (state, action) pairs at N = 3 exceed the budget; the 4 states do not
        let sim = evaluate_symmetric_on_finite(&m, &pol, 3, crit, &tiny, &mc).unwrap();
        assert_eq!(sim.method, "monte_carlo");
        let se = sim.stderr.unwrap();
        for i in 0..exact.values.len() {
            assert!((sim.values[i] - exact.values[i]).abs() <= 4.0 * se[i] + 1e-9);
        }
    }

    #[test]
    fn deterministic_flow_has_no_spread() {
        let m = catalog::example_one();
        let grid = SimplexGrid::new(4, m.metric_x(), 100).unwrap();
        let pol = SymmetricPolicy::constant(grid, vec![vec![0.0, 1.0], vec![0.0, 1.0]]);
        let (ens, cmp) = flow_distribution_mc(&m, 5, &pol, 4, 20, 9, &[0.4, 0.6], None).unwrap();
        for t in 0..4 {
            assert!(ens.thetas[t].iter().all(|th| th == &ens.thetas[t][0]));
            assert!(cmp.w1_stderr[t] == 0.0);
        }
    }

    #[test]
    fn flow_mc_is_reproducible() {
        let m = catalog::random_affine(2, 2, 2, 1);
        let pol = uniform_policy(&m, 4);
        let a = flow_distribution_mc(&m, 6, &pol, 5, 50, 11, &[0.5, 0.5], None).unwrap();
        let b = flow_distribution_mc(&m, 6, &pol, 5, 50, 11, &[0.5, 0.5], None).unwrap();
        assert_eq!(a, b);
        for ths in &a.0.thetas {
            for th in ths {
                assert_eq!(th.n(), 6);
            }
        }
    }

    #[test]
    fn initial_agents_round_to_n() {
        assert_eq!(initial_agents(&[0.5, 0.5], 3), vec![0, 0, 1]);
        assert_eq!(initial_agents(&[0.2, 0.3, 0.5], 10), vec![0, 0, 1, 1, 1, 2, 2, 2, 2, 2]);
    }

    #[test]
    fn constant_cost_sweep_has_zero_gaps() {
        let m = catalog::constant_cost(0.4);
        let r = value_convergence_sweep(&m, &[1, 2, 3], &SweepConfig::default(), &MfConfig::new(4)).unwrap();
        assert_eq!(r.method_tags, vec!["oracle"; 3]);
        for g in &r.gaps {
            assert!(g.unwrap() < 1e-9);
        }
    }

    #[test]
    fn sweep_marks_capacity_overruns_absent() {
        let m = catalog::constant_cost(0.4);
        let cfg = SweepConfig {
            lift: LiftConfig {
                budget: 10,
                ..LiftConfig::exact()
            },
            ..SweepConfig::default()
        };
        let r = value_convergence_sweep(&m, &[1, 6], &cfg, &MfConfig::new(4)).unwrap();
        assert!(r.gaps[0].is_some());
        assert!(r.gaps[1].is_none());
        assert!(r.method_tags[1].starts_with("skipped"));
    }
}
