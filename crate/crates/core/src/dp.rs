//! Finite controlled Markov chains with sparse rows and the Bellman sweeps
//! shared by the average-cost, discounted and grid solvers.

use rayon::prelude::*;

/// Sparse transition row: `(destination index, probability)`, sorted by destination.
pub type SparseRow = Vec<(usize, f64)>;

/// A finite MDP with per-state action lists, stage costs and sparse rows.
pub trait FiniteMdp: Sync {
    fn num_states(&self) -> usize;
    fn num_actions(&self, s: usize) -> usize;
    fn cost(&self, s: usize, a: usize) -> f64;
    fn row(&self, s: usize, a: usize) -> &[(usize, f64)];

    /// Largest `|cost|`.
    fn cost_sup(&self) -> f64 {
        (0..self.num_states())
            .flat_map(|s| (0..self.num_actions(s)).map(move |a| (s, a)))
            .fold(0.0f64, |m, (s, a)| m.max(self.cost(s, a).abs()))
    }
}

/// Relative tolerance used to break near-ties toward the smallest action index.
pub const TIE_EPS: f64 = 1e-12;

/// `cost(s,a) + discount * sum_j P(j|s,a) v(j)`.
#[inline]
pub fn q_value<M: FiniteMdp + ?Sized>(mdp: &M, s: usize, a: usize, v: &[f64], discount: f64) -> f64 {
    let ev: f64 = mdp.row(s, a).iter().map(|&(j, p)| p * v[j]).sum();
    mdp.cost(s, a) + discount * ev
}

/// Minimum over actions and the smallest index attaining it (within [`TIE_EPS`]).
pub fn greedy_at<M: FiniteMdp + ?Sized>(mdp: &M, s: usize, v: &[f64], discount: f64) -> (f64, usize) {
    let na = mdp.num_actions(s);
    let qs: Vec<f64> = (0..na).map(|a| q_value(mdp, s, a, v, discount)).collect();
    let best = qs.iter().copied().fold(f64::INFINITY, f64::min);
    let slack = TIE_EPS * (1.0 + best.abs());
    let idx = qs.iter().position(|&q| q <= best + slack).unwrap_or(0);
    (best, idx)
}

/// One Bellman sweep `min_a [c + discount P v]`, parallel over states.
pub fn bellman_sweep<M: FiniteMdp + ?Sized>(mdp: &M, v: &[f64], discount: f64) -> (Vec<f64>, Vec<usize>) {
    (0..mdp.num_states())
        .into_par_iter()
        .map(|s| greedy_at(mdp, s, v, discount))
        .unzip()
}

pub fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// `sup v - inf v`.
pub fn span(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    hi - lo
}

pub fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Dense row-stochastic matrix of the chain induced by a randomized policy.
pub fn induced_chain<M: FiniteMdp + ?Sized>(mdp: &M, policy: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let n = mdp.num_states();
    let mut p = vec![vec![0.0; n]; n];
    let mut r = vec![0.0; n];
    for s in 0..n {
        for (a, &w) in policy[s].iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            r[s] += w * mdp.cost(s, a);
            for &(j, q) in mdp.row(s, a) {
                p[s][j] += w * q;
            }
        }
    }
    (p, r)
}

/// One-hot rows for a deterministic policy.
pub fn deterministic_rows<M: FiniteMdp + ?Sized>(mdp: &M, policy: &[usize]) -> Vec<Vec<f64>> {
    policy
        .iter()
        .enumerate()
        .map(|(s, &a)| {
            let mut row = vec![0.0; mdp.num_actions(s)];
            row[a] = 1.0;
            row
        })
        .collect()
}

/// An MDP stored as explicit tables.
#[derive(Debug, Clone, Default, serde::Serialize, serde::Deserialize)]
pub struct TableMdp {
    pub costs: Vec<Vec<f64>>,
    pub rows: Vec<Vec<SparseRow>>,
}

impl FiniteMdp for TableMdp {
    fn num_states(&self) -> usize {
        self.costs.len()
    }
    fn num_actions(&self, s: usize) -> usize {
        self.costs[s].len()
    }
    fn cost(&self, s: usize, a: usize) -> f64 {
        self.costs[s][a]
    }
    fn row(&self, s: usize, a: usize) -> &[(usize, f64)] {
        &self.rows[s][a]
    }
}
