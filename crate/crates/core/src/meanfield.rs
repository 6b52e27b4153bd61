//! Infinite-population control on a lattice of the probability simplex.
//!
//! States are the points of `P_k(X)` (the simplex lattice of resolution `k`),
//! actions are per-state conditional rows `gamma(.|x)` drawn from a lattice of
//! resolution `m`, so `Theta = gamma * mu` always has state marginal `mu`. The
//! exact flow `mu' = F(mu, Theta, w0)` is projected back onto the lattice
//! under `W1` and the resulting finite MDP is solved with the shared sweeps.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agent_model::AgentModel;
use crate::avg_solver::{greedy_gain, AvgSolution};
use crate::disc_solver::{solve_discounted, vanishing_discount, VanishingDiscountTrace, VanishingOptions};
use crate::dp::{FiniteMdp, SparseRow, TableMdp};
use crate::error::{Error, Result};
use crate::lift::rank_counts;
use crate::measures::{compositions, enumerate_empirical, total_variation, wasserstein1, ConditionalKernel, Metric};

/// `mu'(x') = sum_{x,u} T^{w0}(x'|x,u,mu) Theta(x,u)`.
pub fn flow_step(model: &AgentModel, mu: &[f64], theta: &[Vec<f64>], w0: usize) -> Result<Vec<f64>> {
    let nx = model.num_states();
    if mu.len() != nx || theta.len() != nx || theta.iter().any(|r| r.len() != model.num_actions()) {
        return Err(Error::Dimension("mu and theta must match the model's spaces".into()));
    }
    let deviation = theta
        .iter()
        .zip(mu)
        .map(|(r, m)| (r.iter().sum::<f64>() - m).abs())
        .fold(0.0f64, f64::max);
    if deviation > 1e-12 {
        return Err(Error::MarginalMismatch { deviation });
    }
    let mut out = vec![0.0; nx];
    let mut p = vec![0.0; nx];
    for (x, row) in theta.iter().enumerate() {
        for (u, &t) in row.iter().enumerate() {
            if t == 0.0 {
                continue;
            }
            model.kernel_into(w0, x, u, mu, &mut p);
            for (o, &q) in out.iter_mut().zip(&p) {
                *o += t * q;
            }
        }
    }
    for v in out.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    let s: f64 = out.iter().sum();
    for v in out.iter_mut() {
        *v /= s;
    }
    Ok(out)
}

/// The lattice `P_k(X)` with nearest-point projection under `W1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplexGrid {
    pub resolution: u32,
    pub points: Vec<Vec<f64>>,
    pub metric: Metric,
}

impl SimplexGrid {
    pub fn new(resolution: u32, metric: &Metric, budget: u128) -> Result<Self> {
        let points = enumerate_empirical(resolution, metric.len(), budget)?
            .iter()
            .map(|m| m.probs())
            .collect();
        Ok(Self {
            resolution,
            points,
            metric: metric.clone(),
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Largest-remainder rounding of `mu` onto the lattice, as an index.
    fn rounded_index(&self, mu: &[f64]) -> usize {
        let k = self.resolution;
        let scaled: Vec<f64> = mu.iter().map(|v| v * k as f64).collect();
        let mut counts: Vec<u32> = scaled.iter().map(|v| v.floor().max(0.0) as u32).collect();
        let mut deficit = k as i64 - counts.iter().map(|&c| c as i64).sum::<i64>();
        let mut order: Vec<usize> = (0..mu.len()).collect();
        order.sort_by(|&a, &b| {
            let fa = scaled[a] - scaled[a].floor();
            let fb = scaled[b] - scaled[b].floor();
            fb.partial_cmp(&fa).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
        });
        let mut i = 0;
        while deficit > 0 {
            counts[order[i % order.len()]] += 1;
            deficit -= 1;
            i += 1;
        }
        while deficit < 0 {
            let j = order
                .iter()
                .rev()
                .copied()
                .find(|&j| counts[j] > 0)
                .expect("positive count");
            counts[j] -= 1;
            deficit += 1;
        }
        rank_counts(&counts)
    }

    /// Nearest lattice point under `W1` (smallest index on ties) and its distance.
    pub fn project(&self, mu: &[f64]) -> (usize, f64) {
        let min_d = self
            .metric
            .iter()
            .enumerate()
            .flat_map(|(i, r)| r.iter().enumerate().filter(move |(j, _)| *j != i).map(|(_, &d)| d))
            .fold(f64::INFINITY, f64::min);
        let min_d = if min_d.is_finite() { min_d } else { 0.0 };
        let start = self.rounded_index(mu);
        let mut best = (
            start,
            wasserstein1(mu, &self.points[start], &self.metric).expect("dims"),
        );
        const TIE: f64 = 1e-12;
        for (i, q) in self.points.iter().enumerate() {
            if i == start {
                continue;
            }
            // W1 >= min_d * TV
            if min_d * total_variation(mu, q) > best.1 + TIE {
                continue;
            }
            let w = wasserstein1(mu, q, &self.metric).expect("dims");
            if w < best.1 - TIE || ((w - best.1).abs() <= TIE && i < best.0) {
                best = (i, w);
            }
        }
        best
    }
}

/// Conditional action rows on a lattice of resolution `m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionMesh {
    pub resolution: u32,
    pub rows: Vec<Vec<f64>>,
}

impl ActionMesh {
    pub fn new(resolution: u32, num_actions: usize) -> Self {
        let rows = compositions(resolution, num_actions)
            .into_iter()
            .map(|c| c.iter().map(|&v| v as f64 / resolution as f64).collect())
            .collect();
        Self { resolution, rows }
    }

    /// Number of per-state row combinations for `num_states` states.
    pub fn combinations(&self, num_states: usize) -> u128 {
        (self.rows.len() as u128).pow(num_states as u32)
    }

    /// Row index per state for combination `a` (first state slowest).
    pub fn decode(&self, mut a: usize, num_states: usize) -> Vec<usize> {
        let r = self.rows.len();
        let mut out = vec![0; num_states];
        for x in (0..num_states).rev() {
            out[x] = a % r;
            a /= r;
        }
        out
    }

    pub fn kernel(&self, a: usize, num_states: usize) -> ConditionalKernel {
        ConditionalKernel {
            rows: self
                .decode(a, num_states)
                .iter()
                .map(|&i| self.rows[i].clone())
                .collect(),
            off_support: vec![false; num_states],
        }
    }
}

/// The projected grid MDP.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridProblem {
    pub grid: SimplexGrid,
    pub mesh: ActionMesh,
    pub num_states: usize,
    pub num_actions: usize,
    pub mdp: TableMdp,
    /// Largest `W1` distance between an exact flow output and its projection.
    pub max_projection_displacement: f64,
    pub model_hash: String,
}

impl FiniteMdp for GridProblem {
    fn num_states(&self) -> usize {
        self.mdp.num_states()
    }
    fn num_actions(&self, s: usize) -> usize {
        self.mdp.num_actions(s)
    }
    fn cost(&self, s: usize, a: usize) -> f64 {
        self.mdp.cost(s, a)
    }
    fn row(&self, s: usize, a: usize) -> &[(usize, f64)] {
        self.mdp.row(s, a)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GridConfig {
    pub grid_resolution: u32,
    pub mesh_resolution: u32,
    /// Cap on (grid point, action) pairs.
    pub budget: u128,
}

impl GridConfig {
    pub fn new(grid_resolution: u32, mesh_resolution: u32) -> Self {
        Self {
            grid_resolution,
            mesh_resolution,
            budget: 5_000_000,
        }
    }
}

/// Joint measure `gamma(u|x) mu(x)`.
pub fn compose(rows: &[Vec<f64>], mu: &[f64]) -> Vec<Vec<f64>> {
    rows.iter()
        .zip(mu)
        .map(|(r, &m)| r.iter().map(|&g| g * m).collect())
        .collect()
}

pub fn build_grid_problem(model: &AgentModel, config: &GridConfig) -> Result<GridProblem> {
    let nx = model.num_states();
    let nu = model.num_actions();
    let grid = SimplexGrid::new(config.grid_resolution, model.metric_x(), config.budget)?;
    let mesh = ActionMesh::new(config.mesh_resolution, nu);
    let per_point = mesh.combinations(nx);
    let pairs = per_point * grid.len() as u128;
    if pairs > config.budget {
        return Err(Error::capacity("grid (point, action) pairs", pairs, config.budget));
    }
    let per_point = per_point as usize;
    let built: Vec<(Vec<f64>, Vec<SparseRow>, f64)> = grid
        .points
        .par_iter()
        .map(|mu| {
            let mut costs = Vec::with_capacity(per_point);
            let mut rows = Vec::with_capacity(per_point);
            let mut disp: f64 = 0.0;
            let stage: Vec<Vec<f64>> = (0..nx)
                .map(|x| (0..nu).map(|u| model.cost(x, u, mu)).collect())
                .collect();
            for a in 0..per_point {
                let kernel = mesh.kernel(a, nx);
                let theta = compose(&kernel.rows, mu);
                let c: f64 = theta
                    .iter()
                    .enumerate()
                    .flat_map(|(x, r)| r.iter().enumerate().map(move |(u, &t)| (x, u, t)))
                    .map(|(x, u, t)| t * stage[x][u])
                    .sum();
                let mut row: SparseRow = Vec::new();
                for (w0, &pw) in model.common_noise().probs.iter().enumerate() {
                    if pw == 0.0 {
                        continue;
                    }
                    let next = flow_step(model, mu, &theta, w0).expect("composed theta has marginal mu");
                    let (j, d) = grid.project(&next);
                    disp = disp.max(d);
                    match row.iter_mut().find(|e| e.0 == j) {
                        Some(e) => e.1 += pw,
                        None => row.push((j, pw)),
                    }
                }
                row.sort_by_key(|e| e.0);
                costs.push(c);
                rows.push(row);
            }
            (costs, rows, disp)
        })
        .collect();
    let mut mdp = TableMdp::default();
    let mut max_disp: f64 = 0.0;
    for (c, r, d) in built {
        mdp.costs.push(c);
        mdp.rows.push(r);
        max_disp = max_disp.max(d);
    }
    Ok(GridProblem {
        grid,
        mesh,
        num_states: nx,
        num_actions: nu,
        mdp,
        max_projection_displacement: max_disp,
        model_hash: model.hash().to_string(),
    })
}

/// Stationary symmetric agent policy `gamma(du|x, mu)` tabulated on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetricPolicy {
    pub grid: SimplexGrid,
    /// One conditional kernel per grid point.
    pub rows: Vec<ConditionalKernel>,
    /// Discount the policy was extracted at (`None` for average-cost extraction).
    pub beta_tag: Option<f64>,
    pub mesh_resolution: Option<u32>,
    pub model_hash: Option<String>,
}

impl SymmetricPolicy {
    /// Same rows at every grid point.
    pub fn constant(grid: SimplexGrid, rows: Vec<Vec<f64>>) -> Self {
        let off = vec![false; rows.len()];
        let kernel = ConditionalKernel { rows, off_support: off };
        Self {
            rows: vec![kernel; grid.len()],
            grid,
            beta_tag: None,
            mesh_resolution: None,
            model_hash: None,
        }
    }

    /// Conditional rows at the grid point nearest to `mu`.
    pub fn lookup(&self, mu: &[f64]) -> &ConditionalKernel {
        &self.rows[self.grid.project(mu).0]
    }

    pub fn num_actions(&self) -> usize {
        self.rows.first().and_then(|k| k.rows.first()).map_or(0, |r| r.len())
    }
}

/// Disintegrate the greedy grid actions into a symmetric policy; states with
/// no mass at a grid point get the uniform row.
pub fn extract_symmetric_policy(problem: &GridProblem, greedy: &[usize], beta_tag: Option<f64>) -> SymmetricPolicy {
    let nx = problem.num_states;
    let nu = problem.num_actions;
    let rows = problem
        .grid
        .points
        .iter()
        .zip(greedy)
        .map(|(mu, &a)| {
            let mut k = problem.mesh.kernel(a, nx);
            for (x, &m) in mu.iter().enumerate() {
                if m == 0.0 {
                    k.rows[x] = vec![1.0 / nu as f64; nu];
                    k.off_support[x] = true;
                }
            }
            k
        })
        .collect();
    SymmetricPolicy {
        grid: problem.grid.clone(),
        rows,
        beta_tag,
        mesh_resolution: Some(problem.mesh.resolution),
        model_hash: Some(problem.model_hash.clone()),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MfDiscounted {
    pub beta: f64,
    pub values: Vec<f64>,
    pub greedy: Vec<usize>,
    pub policy: SymmetricPolicy,
    pub residual: f64,
    pub max_projection_displacement: f64,
}

pub fn solve_mf_discounted(problem: &GridProblem, beta: f64, tol: f64) -> Result<MfDiscounted> {
    let sol = solve_discounted(problem, beta, tol, None)?;
    let policy = extract_symmetric_policy(problem, &sol.policy, Some(beta));
    Ok(MfDiscounted {
        beta,
        values: sol.values,
        greedy: sol.policy,
        policy,
        residual: sol.sup_residual,
        max_projection_displacement: problem.max_projection_displacement,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MfAverage {
    /// Grid optimal average cost; the greedy policy's exact gain when that
    /// is within `10 tol` above the vanishing-discount estimate.
    pub j: f64,
    pub solution: AvgSolution,
    pub policy: SymmetricPolicy,
    pub trace: VanishingDiscountTrace,
}

/// Vanishing-discount ladder on the grid MDP; `anchor` is a grid index.
pub fn solve_mf_average(
    problem: &GridProblem,
    anchor: usize,
    schedule: &[f64],
    opts: &VanishingOptions,
) -> Result<MfAverage> {
    let (solution, trace) = vanishing_discount(problem, anchor, schedule, opts)?;
    let beta = trace.betas.last().copied();
    let policy = extract_symmetric_policy(problem, &solution.policy, beta);
    // exact gain of the greedy grid policy, when it certifies the estimate
    let j = match greedy_gain(problem, &solution.policy) {
        Some(g) if g <= solution.j_star + 10.0 * opts.tol => g,
        _ => solution.j_star,
    };
    Ok(MfAverage {
        j,
        solution,
        policy,
        trace,
    })
}

/// Largest value gap at shared lattice points between resolutions `k` and
/// `2k`, for each `k` in `resolutions`, with the fitted constant `max(k * gap)`.
pub fn refinement_study(
    model: &AgentModel,
    resolutions: &[u32],
    beta: f64,
    tol: f64,
) -> Result<(Vec<(u32, f64)>, f64)> {
    let mut gaps = Vec::new();
    for &k in resolutions {
        let coarse = build_grid_problem(model, &GridConfig::new(k, k))?;
        let fine = build_grid_problem(model, &GridConfig::new(2 * k, 2 * k))?;
        let vc = solve_discounted(&coarse, beta, tol, None)?.values;
        let vf = solve_discounted(&fine, beta, tol, None)?.values;
        let mut gap: f64 = 0.0;
        for (i, p) in coarse.grid.points.iter().enumerate() {
            let (j, d) = fine.grid.project(p);
            debug_assert!(d < 1e-12);
            gap = gap.max((vc[i] - vf[j]).abs());
        }
        gaps.push((k, gap));
    }
    let c = gaps.iter().map(|&(k, g)| k as f64 * g).fold(0.0f64, f64::max);
    Ok((gaps, c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;

    #[test]
    fn example_one_flow_is_the_action_marginal() {
        let m = catalog::example_one();
        let mu = [0.3, 0.7];
        let theta = vec![vec![0.1, 0.2], vec![0.45, 0.25]];
        let next = flow_step(&m, &mu, &theta, 0).unwrap();
        assert!((next[0] - 0.55).abs() < 1e-12);
        assert!((next[1] - 0.45).abs() < 1e-12);
    }

    #[test]
    fn flow_rejects_wrong_marginal() {
        let m = catalog::example_one();
        let theta = vec![vec![0.5, 0.0], vec![0.0, 0.5]];
        assert!(matches!(
            flow_step(&m, &[0.3, 0.7], &theta, 0),
            Err(Error::MarginalMismatch { .. })
        ));
    }

    #[test]
    fn product_theta_on_tabular_kernel() {
        let m = catalog::constant_cost(1.0);
        let mu = [0.4, 0.6];
        let rho = [0.3, 0.7];
        let theta: Vec<Vec<f64>> = mu.iter().map(|a| rho.iter().map(|b| a * b).collect()).collect();
        let next = flow_step(&m, &mu, &theta, 0).unwrap();
        let mut want = [0.0; 2];
        for x in 0..2 {
            for u in 0..2 {
                let k = m.kernel(0, x, u, &mu);
                for z in 0..2 {
                    want[z] += k[z] * mu[x] * rho[u];
                }
            }
        }
        for z in 0..2 {
            assert!((next[z] - want[z]).abs() < 1e-12);
        }
    }

    #[test]
    fn projection_is_idempotent_on_lattice() {
        let m = catalog::random_affine(3, 2, 1, 2);
        let grid = SimplexGrid::new(6, m.metric_x(), 10_000).unwrap();
        for (i, p) in grid.points.iter().enumerate() {
            assert_eq!(grid.project(p), (i, 0.0));
        }
    }

    #[test]
    fn projection_matches_exhaustive_search() {
        use rand::{Rng, SeedableRng};
        let metric = vec![vec![0.0, 1.0, 3.0], vec![1.0, 0.0, 2.5], vec![3.0, 2.5, 0.0]];
        let grid = SimplexGrid::new(5, &metric, 10_000).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let e: Vec<f64> = (0..3).map(|_| rng.gen::<f64>()).collect();
            let s: f64 = e.iter().sum();
            let mu: Vec<f64> = e.iter().map(|v| v / s).collect();
            let (idx, d) = grid.project(&mu);
            let brute = grid
                .points
                .iter()
                .map(|q| wasserstein1(&mu, q, &metric).unwrap())
                .fold(f64::INFINITY, f64::min);
            assert!((d - brute).abs() < 1e-12);
            assert!((wasserstein1(&mu, &grid.points[idx], &metric).unwrap() - d).abs() < 1e-15);
            // lattice geometry bound
            assert!(d <= 3.0 / 5.0 * (3.0 - 1.0) / 2.0 + 1e-12);
        }
    }

    #[test]
    fn constant_cost_grid_values() {
        let m = catalog::constant_cost(0.3);
        let problem = build_grid_problem(&m, &GridConfig::new(8, 4)).unwrap();
        let sol = solve_mf_discounted(&problem, 0.9, 1e-10).unwrap();
        for v in &sol.values {
            assert!((v - 3.0).abs() < 1e-8);
        }
        assert!(sol.greedy.iter().all(|&a| a == 0));
    }

    #[test]
    fn example_one_grid_balances() {
        let m = catalog::example_one();
        let problem = build_grid_problem(&m, &GridConfig::new(16, 16)).unwrap();
        let sol = solve_mf_discounted(&problem, 0.9, 1e-10).unwrap();
        let half = problem.grid.project(&[0.5, 0.5]).0;
        assert!(sol.values[half].abs() < 1e-10);
        let k = sol.policy.rows[half].clone();
        let theta = compose(&k.rows, &[0.5, 0.5]);
        let next = flow_step(&m, &[0.5, 0.5], &theta, 0).unwrap();
        assert!((next[0] - 0.5).abs() < 1e-12);
        // the greedy rows recompose to the greedy grid action
        let direct = compose(&problem.mesh.kernel(sol.greedy[half], 2).rows, &[0.5, 0.5]);
        assert_eq!(theta, direct);
    }

    #[test]
    fn policy_rows_are_distributions_and_uniform_off_support() {
        let m = catalog::random_affine(3, 2, 2, 8);
        let problem = build_grid_problem(&m, &GridConfig::new(4, 4)).unwrap();
        let sol = solve_mf_discounted(&problem, 0.8, 1e-9).unwrap();
        for (mu, k) in problem.grid.points.iter().zip(&sol.policy.rows) {
            for (x, row) in k.rows.iter().enumerate() {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                if mu[x] == 0.0 {
                    assert!(k.off_support[x]);
                    assert_eq!(row, &vec![0.5, 0.5]);
                }
            }
        }
    }

    #[test]
    fn deterministic_grid_flow_cycles() {
        let m = catalog::random_affine(2, 2, 1, 6);
        let problem = build_grid_problem(&m, &GridConfig::new(10, 5)).unwrap();
        let sol = solve_mf_discounted(&problem, 0.9, 1e-9).unwrap();
        for start in 0..problem.grid.len() {
            let mut seen = vec![false; problem.grid.len()];
            let mut s = start;
            let mut steps = 0;
            while !seen[s] {
                seen[s] = true;
                let row = problem.mdp.row(s, sol.greedy[s]);
                assert_eq!(row.len(), 1);
                s = row[0].0;
                steps += 1;
            }
            assert!(steps <= problem.grid.len());
        }
    }
}
