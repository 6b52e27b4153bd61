//! Empirical measures on finite sets, their admissible state-action
//! refinements, exact first-order Wasserstein distance and disintegration.
//!
//! Enumerations use descending lexicographic order on count vectors, so
//! `(2,0)` precedes `(1,1)` precedes `(0,2)`. Every index used elsewhere in
//! the crate (lifted states, lifted actions, grid points, mesh rows) refers to
//! this order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cap on the size of any single enumeration.
pub const DEFAULT_ENUMERATION_BUDGET: u128 = 5_000_000;

/// A measure in `P_N(X)` stored as integer counts.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EmpiricalMeasure {
    pub counts: Vec<u32>,
}

impl EmpiricalMeasure {
    pub fn new(counts: Vec<u32>) -> Self {
        Self { counts }
    }

    /// Population size.
    pub fn n(&self) -> u32 {
        self.counts.iter().sum()
    }

    pub fn probs(&self) -> Vec<f64> {
        let n = self.n() as f64;
        self.counts.iter().map(|&c| c as f64 / n).collect()
    }

    /// Empirical measure of a vector of state indices.
    pub fn from_states(states: &[usize], num_states: usize) -> Self {
        let mut counts = vec![0u32; num_states];
        for &x in states {
            counts[x] += 1;
        }
        Self { counts }
    }
}

/// A measure in `P_N(U x X)` stored as a count matrix `counts[x][u]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct JointEmpiricalMeasure {
    pub counts: Vec<Vec<u32>>,
}

impl JointEmpiricalMeasure {
    pub fn new(counts: Vec<Vec<u32>>) -> Self {
        Self { counts }
    }

    pub fn n(&self) -> u32 {
        self.counts.iter().flatten().sum()
    }

    /// State marginal (row sums).
    pub fn marginal(&self) -> EmpiricalMeasure {
        EmpiricalMeasure::new(self.counts.iter().map(|r| r.iter().sum()).collect())
    }

    pub fn probs(&self) -> Vec<Vec<f64>> {
        let n = self.n() as f64;
        self.counts
            .iter()
            .map(|r| r.iter().map(|&c| c as f64 / n).collect())
            .collect()
    }

    /// Joint empirical measure of paired state/action vectors.
    pub fn from_vectors(states: &[usize], actions: &[usize], num_states: usize, num_actions: usize) -> Self {
        let mut counts = vec![vec![0u32; num_actions]; num_states];
        for (&x, &u) in states.iter().zip(actions) {
            counts[x][u] += 1;
        }
        Self { counts }
    }
}

/// Conditional action law `gamma(u|x)` with off-support states marked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalKernel {
    pub rows: Vec<Vec<f64>>,
    pub off_support: Vec<bool>,
}

impl ConditionalKernel {
    /// Recompose `gamma(u|x) mu(x)` into a joint probability matrix.
    pub fn compose(&self, mu: &[f64]) -> Vec<Vec<f64>> {
        self.rows
            .iter()
            .zip(mu)
            .map(|(row, &m)| row.iter().map(|&g| g * m).collect())
            .collect()
    }
}

pub fn binomial(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// Number of count vectors of length `parts` summing to `total`.
pub fn composition_count(total: u32, parts: usize) -> u128 {
    if parts == 0 {
        return u128::from(total == 0);
    }
    binomial(total as u64 + parts as u64 - 1, parts as u64 - 1)
}

/// All count vectors of length `parts` summing to `total`, descending lexicographic.
pub fn compositions(total: u32, parts: usize) -> Vec<Vec<u32>> {
    let mut out = Vec::with_capacity(composition_count(total, parts) as usize);
    let mut current = vec![0u32; parts];
    fn rec(pos: usize, remaining: u32, current: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        let parts = current.len();
        if pos + 1 == parts {
            current[pos] = remaining;
            out.push(current.clone());
            return;
        }
        for c in (0..=remaining).rev() {
            current[pos] = c;
            rec(pos + 1, remaining - c, current, out);
        }
    }
    if parts == 0 {
        if total == 0 {
            out.push(Vec::new());
        }
        return out;
    }
    rec(0, total, &mut current, &mut out);
    out
}

/// Enumerate `P_N(X)` for `|X| = num_states`.
pub fn enumerate_empirical(n: u32, num_states: usize, budget: u128) -> Result<Vec<EmpiricalMeasure>> {
    if n == 0 || num_states == 0 {
        return Err(Error::InvalidArgument(
            "population size and number of states must be positive".into(),
        ));
    }
    let count = composition_count(n, num_states);
    if count > budget {
        return Err(Error::capacity(
            format!("empirical measures with N={n}, |X|={num_states}"),
            count,
            budget,
        ));
    }
    Ok(compositions(n, num_states)
        .into_iter()
        .map(EmpiricalMeasure::new)
        .collect())
}

/// Number of admissible joint measures for `mu`.
pub fn admissible_count(mu: &EmpiricalMeasure, num_actions: usize) -> u128 {
    mu.counts.iter().map(|&c| composition_count(c, num_actions)).product()
}

/// All joint measures with state marginal `mu`; the first state varies slowest.
pub fn admissible_actions(
    mu: &EmpiricalMeasure,
    num_actions: usize,
    budget: u128,
) -> Result<Vec<JointEmpiricalMeasure>> {
    if num_actions == 0 {
        return Err(Error::InvalidArgument("no actions".into()));
    }
    let count = admissible_count(mu, num_actions);
    if count > budget {
        return Err(Error::capacity(
            format!("admissible actions at {:?}", mu.counts),
            count,
            budget,
        ));
    }
    let per_state: Vec<Vec<Vec<u32>>> = mu.counts.iter().map(|&c| compositions(c, num_actions)).collect();
    let mut out = Vec::with_capacity(count as usize);
    let mut idx = vec![0usize; per_state.len()];
    loop {
        out.push(JointEmpiricalMeasure::new(
            idx.iter().zip(&per_state).map(|(&i, rows)| rows[i].clone()).collect(),
        ));
        // odometer, last state fastest
        let mut pos = per_state.len();
        loop {
            if pos == 0 {
                return Ok(out);
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < per_state[pos].len() {
                break;
            }
            idx[pos] = 0;
        }
    }
}

/// Symmetric pairwise distance matrix on a finite set.
pub type Metric = Vec<Vec<f64>>;

/// Ground metric on `X x U` given by `d_X(x,x') + d_U(u,u')`, indexed `x * |U| + u`.
pub fn product_metric(dx: &Metric, du: &Metric) -> Metric {
    let (nx, nu) = (dx.len(), du.len());
    let mut out = vec![vec![0.0; nx * nu]; nx * nu];
    for x in 0..nx {
        for u in 0..nu {
            for y in 0..nx {
                for v in 0..nu {
                    out[x * nu + u][y * nu + v] = dx[x][y] + du[u][v];
                }
            }
        }
    }
    out
}

/// Flatten a joint matrix `theta[x][u]` to the `x * |U| + u` layout.
pub fn flatten_joint(theta: &[Vec<f64>]) -> Vec<f64> {
    theta.iter().flatten().copied().collect()
}

/// Exact `W_1(p, q)` under the ground metric `metric`.
///
/// Mass shared by `p` and `q` stays in place (optimal for any metric); the
/// remaining excess is routed by successive shortest augmenting paths on the
/// bipartite transportation network.
pub fn wasserstein1(p: &[f64], q: &[f64], metric: &[Vec<f64>]) -> Result<f64> {
    let n = p.len();
    if q.len() != n || metric.len() != n || metric.iter().any(|r| r.len() != n) {
        return Err(Error::Dimension(format!(
            "p has {} entries, q has {}, metric is {}x{}",
            n,
            q.len(),
            metric.len(),
            metric.first().map_or(0, |r| r.len())
        )));
    }
    let mut supply = Vec::new();
    let mut demand = Vec::new();
    for i in 0..n {
        let d = p[i] - q[i];
        if d > 0.0 {
            supply.push((i, d));
        } else if d < 0.0 {
            demand.push((i, -d));
        }
    }
    if supply.is_empty() || demand.is_empty() {
        return Ok(0.0);
    }
    Ok(TransportNetwork::new(&supply, &demand, metric).solve())
}

const FLOW_EPS: f64 = 1e-16;

/// Min-cost flow on `source -> supplies -> demands -> sink`.
struct TransportNetwork {
    // (to, residual capacity, cost, reverse edge index)
    adj: Vec<Vec<(usize, f64, f64, usize)>>,
    source: usize,
    sink: usize,
    total: f64,
}

impl TransportNetwork {
    fn new(supply: &[(usize, f64)], demand: &[(usize, f64)], metric: &[Vec<f64>]) -> Self {
        let ns = supply.len();
        let nd = demand.len();
        let source = ns + nd;
        let sink = source + 1;
        let mut net = TransportNetwork {
            adj: vec![Vec::new(); ns + nd + 2],
            source,
            sink,
            total: supply
                .iter()
                .map(|s| s.1)
                .sum::<f64>()
                .min(demand.iter().map(|d| d.1).sum()),
        };
        for (i, &(_, mass)) in supply.iter().enumerate() {
            net.add_edge(source, i, mass, 0.0);
        }
        for (j, &(_, mass)) in demand.iter().enumerate() {
            net.add_edge(ns + j, sink, mass, 0.0);
        }
        for (i, &(a, _)) in supply.iter().enumerate() {
            for (j, &(b, _)) in demand.iter().enumerate() {
                net.add_edge(i, ns + j, f64::INFINITY, metric[a][b]);
            }
        }
        net
    }

    fn add_edge(&mut self, from: usize, to: usize, cap: f64, cost: f64) {
        let rf = self.adj[to].len();
        let rt = self.adj[from].len();
        self.adj[from].push((to, cap, cost, rf));
        self.adj[to].push((from, 0.0, -cost, rt));
    }

    fn solve(mut self) -> f64 {
        let nodes = self.adj.len();
        let mut remaining = self.total;
        let mut cost = 0.0;
        while remaining > FLOW_EPS {
            // Bellman-Ford: residual graphs here may carry negative reverse costs.
            let mut dist = vec![f64::INFINITY; nodes];
            let mut prev: Vec<Option<(usize, usize)>> = vec![None; nodes];
            dist[self.source] = 0.0;
            for _ in 0..nodes {
                let mut changed = false;
                for u in 0..nodes {
                    if dist[u].is_infinite() {
                        continue;
                    }
                    for (ei, &(v, cap, c, _)) in self.adj[u].iter().enumerate() {
                        if cap > FLOW_EPS && dist[u] + c < dist[v] - 1e-15 {
                            dist[v] = dist[u] + c;
                            prev[v] = Some((u, ei));
                            changed = true;
                        }
                    }
                }
                if !changed {
                    break;
                }
            }
            if dist[self.sink].is_infinite() {
                break;
            }
            let mut push = remaining;
            let mut v = self.sink;
            while let Some((u, ei)) = prev[v] {
                push = push.min(self.adj[u][ei].1);
                v = u;
            }
            let mut v = self.sink;
            while let Some((u, ei)) = prev[v] {
                let (to, _, c, rev) = self.adj[u][ei];
                self.adj[u][ei].1 -= push;
                self.adj[to][rev].1 += push;
                cost += push * c;
                v = u;
            }
            remaining -= push;
        }
        cost.max(0.0)
    }
}

/// Split a joint probability matrix `theta[x][u]` into its state marginal and
/// the conditional action law. Zero-mass states receive the uniform row.
pub fn disintegrate(theta: &[Vec<f64>]) -> (Vec<f64>, ConditionalKernel) {
    let marginal: Vec<f64> = theta.iter().map(|r| r.iter().sum()).collect();
    let mut rows = Vec::with_capacity(theta.len());
    let mut off_support = Vec::with_capacity(theta.len());
    for (row, &m) in theta.iter().zip(&marginal) {
        if m > 0.0 {
            rows.push(row.iter().map(|&t| t / m).collect());
            off_support.push(false);
        } else {
            let k = row.len() as f64;
            rows.push(vec![1.0 / k; row.len()]);
            off_support.push(true);
        }
    }
    (marginal, ConditionalKernel { rows, off_support })
}

/// Disintegrate a count matrix.
pub fn disintegrate_counts(theta: &JointEmpiricalMeasure) -> (Vec<f64>, ConditionalKernel) {
    disintegrate(&theta.probs())
}

/// Total variation distance `1/2 sum |p - q|`.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: usize) -> Metric {
        (0..n)
            .map(|i| (0..n).map(|j| (i as f64 - j as f64).abs()).collect())
            .collect()
    }

    #[test]
    fn enumerate_two_agents_two_states() {
        let ms = enumerate_empirical(2, 2, 100).unwrap();
        let counts: Vec<_> = ms.iter().map(|m| m.counts.clone()).collect();
        assert_eq!(counts, vec![vec![2, 0], vec![1, 1], vec![0, 2]]);
        assert_eq!(enumerate_empirical(3, 2, 100).unwrap().len(), 4);
    }

    #[test]
    fn single_agent_gives_one_hot() {
        let ms = enumerate_empirical(1, 4, 100).unwrap();
        assert_eq!(ms.len(), 4);
        for (i, m) in ms.iter().enumerate() {
            assert_eq!(m.counts[i], 1);
            assert_eq!(m.n(), 1);
        }
    }

    #[test]
    fn enumeration_budget_is_enforced() {
        let err = enumerate_empirical(10, 4, 10).unwrap_err();
        assert!(matches!(err, Error::Capacity { count: 286, .. }));
    }

    #[test]
    fn enumeration_lengths_match_binomials() {
        for n in 1..=8u32 {
            for k in 1..=4usize {
                let len = enumerate_empirical(n, k, u128::MAX).unwrap().len() as u128;
                assert_eq!(len, binomial((n as usize + k - 1) as u64, (k - 1) as u64));
            }
        }
    }

    #[test]
    fn admissible_action_counts() {
        let a = admissible_actions(&EmpiricalMeasure::new(vec![2, 0]), 2, 100).unwrap();
        assert_eq!(a.len(), 3);
        assert_eq!(a[1].counts, vec![vec![1, 1], vec![0, 0]]);
        assert_eq!(
            admissible_actions(&EmpiricalMeasure::new(vec![1, 1]), 2, 100)
                .unwrap()
                .len(),
            4
        );
        for x in 0..3 {
            let mut c = vec![0; 3];
            c[x] = 1;
            let a = admissible_actions(&EmpiricalMeasure::new(c), 5, 100).unwrap();
            assert_eq!(a.len(), 5);
        }
    }

    #[test]
    fn admissible_actions_have_the_right_marginal() {
        let mu = EmpiricalMeasure::new(vec![2, 1, 3]);
        let acts = admissible_actions(&mu, 3, 10_000).unwrap();
        assert_eq!(acts.len() as u128, admissible_count(&mu, 3));
        for a in &acts {
            assert_eq!(a.marginal(), mu);
        }
    }

    #[test]
    fn w1_closed_forms() {
        let d = line(2);
        assert_eq!(wasserstein1(&[0.3, 0.7], &[0.3, 0.7], &d).unwrap(), 0.0);
        let w = wasserstein1(&[1.0, 0.0], &[0.5, 0.5], &d).unwrap();
        assert!((w - 0.5).abs() < 1e-15);
        let d5 = line(5);
        let w = wasserstein1(&[1.0, 0.0, 0.0, 0.0, 0.0], &[0.0, 0.0, 0.0, 0.0, 1.0], &d5).unwrap();
        assert!((w - 4.0).abs() < 1e-12);
    }

    #[test]
    fn w1_dimension_mismatch() {
        assert!(matches!(
            wasserstein1(&[1.0], &[0.5, 0.5], &line(2)),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn disintegrate_product_and_zero_rows() {
        let mu = [0.25, 0.75];
        let rho = [0.4, 0.6];
        let theta: Vec<Vec<f64>> = mu.iter().map(|m| rho.iter().map(|r| m * r).collect()).collect();
        let (marg, k) = disintegrate(&theta);
        for row in &k.rows {
            for (a, b) in row.iter().zip(&rho) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        assert!((marg[0] - 0.25).abs() < 1e-15);

        let theta = JointEmpiricalMeasure::new(vec![vec![1, 1], vec![0, 0]]);
        let (marg, k) = disintegrate_counts(&theta);
        assert_eq!(marg, vec![1.0, 0.0]);
        assert_eq!(k.rows[0], vec![0.5, 0.5]);
        assert_eq!(k.off_support, vec![false, true]);
        assert_eq!(k.rows[1], vec![0.5, 0.5]);
    }
}
