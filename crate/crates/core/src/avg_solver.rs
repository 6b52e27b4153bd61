//! Average-cost solvers: the Bellman operator `T`, its anchored version
//! `T0 v = T v - (T v)(anchor)`, relative value iteration, exact Cesàro
//! evaluation of stationary policies, and an exhaustive policy oracle.

use nalgebra::{DMatrix, DVector};
use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dp::{bellman_sweep, deterministic_rows, diff, induced_chain, span, sup_norm, FiniteMdp};
use crate::error::{Error, Result};

/// Default cap on the number of stationary deterministic policies the oracle enumerates.
pub const ORACLE_BUDGET: u128 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AvgSolution {
    pub j_star: f64,
    /// Relative value function, zero at the anchor.
    pub h: Vec<f64>,
    pub policy: Vec<usize>,
    /// `sup |j* + h - T h|`.
    pub residual: f64,
    pub iterations: usize,
    /// Largest ratio of successive span norms observed.
    pub contraction_estimate: f64,
    pub spans: Vec<f64>,
    pub anchor: usize,
    /// Long-run average per starting state (oracle only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_start: Option<Vec<f64>>,
    pub start_dependent: bool,
    pub method: String,
}

/// A stationary lifted policy.
#[derive(Debug, Clone, Copy)]
pub enum Policy<'a> {
    Deterministic(&'a [usize]),
    /// Per-state distribution over that state's action list.
    Randomized(&'a [Vec<f64>]),
}

/// `(T v)(s) = min_a [k(s,a) + sum_j eta(j|s,a) v(j)]`.
pub fn bellman_t<M: FiniteMdp + ?Sized>(mdp: &M, v: &[f64]) -> Vec<f64> {
    bellman_sweep(mdp, v, 1.0).0
}

/// Greedy actions for `v`, smallest index on ties.
pub fn greedy_policy<M: FiniteMdp + ?Sized>(mdp: &M, v: &[f64]) -> Vec<usize> {
    bellman_sweep(mdp, v, 1.0).1
}

/// `T0 v = T v - (T v)(anchor)`; exactly zero at the anchor.
pub fn relative_t0<M: FiniteMdp + ?Sized>(mdp: &M, v: &[f64], anchor: usize) -> Vec<f64> {
    let tv = bellman_t(mdp, v);
    anchored(tv, anchor)
}

fn anchored(mut tv: Vec<f64>, anchor: usize) -> Vec<f64> {
    let a = tv[anchor];
    for x in tv.iter_mut() {
        *x -= a;
    }
    tv[anchor] = 0.0;
    tv
}

/// Sup-norm defect of the average-cost optimality equation at `(j, h)`.
pub fn acoe_residual<M: FiniteMdp + ?Sized>(mdp: &M, j: f64, h: &[f64]) -> f64 {
    let th = bellman_t(mdp, h);
    th.iter().zip(h).fold(0.0f64, |m, (t, hv)| m.max((j + hv - t).abs()))
}

fn max_ratio(spans: &[f64]) -> f64 {
    spans
        .windows(2)
        .filter(|w| w[0] > 1e-13)
        .map(|w| w[1] / w[0])
        .fold(0.0f64, f64::max)
}

/// Relative value iteration from `v0 = 0`, stopping when `||T0 v - v||_inf <= tol`.
///
/// `j*` is read off as `(T h)(anchor)`. `spans` records
/// `||T0^{k+1} v - T0^k v||_sp` per iteration.
pub fn solve_rvi<M: FiniteMdp + ?Sized>(mdp: &M, anchor: usize, tol: f64, max_iter: usize) -> Result<AvgSolution> {
    let n = mdp.num_states();
    if anchor >= n {
        return Err(Error::InvalidArgument(format!(
            "anchor {anchor} out of range for {n} states"
        )));
    }
    let mut v = vec![0.0; n];
    let mut spans = Vec::new();
    let mut last = f64::INFINITY;
    let mut iterations = 0;
    while iterations < max_iter {
        let next = relative_t0(mdp, &v, anchor);
        let d = diff(&next, &v);
        last = sup_norm(&d);
        spans.push(span(&d));
        v = next;
        iterations += 1;
        if last <= tol {
            break;
        }
    }
    if last > tol {
        return Err(Error::NonConvergence {
            iterations,
            last,
            spans,
        });
    }
    let (tv, policy) = bellman_sweep(mdp, &v, 1.0);
    let j_star = tv[anchor];
    let residual = tv
        .iter()
        .zip(&v)
        .fold(0.0f64, |m, (t, h)| m.max((j_star + h - t).abs()));
    Ok(AvgSolution {
        j_star,
        h: v,
        policy,
        residual,
        iterations,
        contraction_estimate: max_ratio(&spans),
        spans,
        anchor,
        per_start: None,
        start_dependent: false,
        method: "rvi".into(),
    })
}

/// Long-run average cost of the chain `(p, r)` from every start.
///
/// Closed communicating classes get `pi . r` with `pi` their stationary law;
/// transient states take the harmonic extension `g = P g`, i.e. the
/// absorption-weighted class averages.
pub fn cesaro_average(p: &[Vec<f64>], r: &[f64]) -> Vec<f64> {
    let n = p.len();
    let mut graph = DiGraph::<(), ()>::with_capacity(n, n * 2);
    let nodes: Vec<_> = (0..n).map(|_| graph.add_node(())).collect();
    for i in 0..n {
        for j in 0..n {
            if p[i][j] > 0.0 {
                graph.add_edge(nodes[i], nodes[j], ());
            }
        }
    }
    let mut class_of = vec![usize::MAX; n];
    let sccs = tarjan_scc(&graph);
    for (c, comp) in sccs.iter().enumerate() {
        for node in comp {
            class_of[node.index()] = c;
        }
    }
    let mut g = vec![0.0; n];
    let mut recurrent = vec![false; n];
    for (c, comp) in sccs.iter().enumerate() {
        let members: Vec<usize> = comp.iter().map(|v| v.index()).collect();
        let closed = members
            .iter()
            .all(|&i| (0..n).all(|j| p[i][j] <= 0.0 || class_of[j] == c));
        if !closed {
            continue;
        }
        let m = members.len();
        // pi (P_C - I) = 0 with the last equation replaced by sum(pi) = 1
        let mut a = DMatrix::<f64>::zeros(m, m);
        for (row, &j) in members.iter().enumerate() {
            for (col, &i) in members.iter().enumerate() {
                a[(row, col)] = p[i][j] - if i == j { 1.0 } else { 0.0 };
            }
        }
        for col in 0..m {
            a[(m - 1, col)] = 1.0;
        }
        let mut b = DVector::<f64>::zeros(m);
        b[m - 1] = 1.0;
        let pi = a
            .lu()
            .solve(&b)
            .expect("stationary law of an irreducible class is unique");
        let avg: f64 = members.iter().enumerate().map(|(k, &i)| pi[k] * r[i]).sum();
        for &i in &members {
            g[i] = avg;
            recurrent[i] = true;
        }
    }
    let transient: Vec<usize> = (0..n).filter(|&i| !recurrent[i]).collect();
    if !transient.is_empty() {
        let t = transient.len();
        let mut a = DMatrix::<f64>::identity(t, t);
        let mut b = DVector::<f64>::zeros(t);
        for (row, &i) in transient.iter().enumerate() {
            for (col, &j) in transient.iter().enumerate() {
                a[(row, col)] -= p[i][j];
            }
            b[row] = (0..n).filter(|&j| recurrent[j]).map(|j| p[i][j] * g[j]).sum();
        }
        let sol = a.lu().solve(&b).expect("transient block I - Q is invertible");
        for (row, &i) in transient.iter().enumerate() {
            g[i] = sol[row];
        }
    }
    g
}

/// Exact long-run average cost of a stationary policy from every start.
pub fn evaluate_policy_avg<M: FiniteMdp + ?Sized>(mdp: &M, policy: Policy<'_>) -> Vec<f64> {
    let rows;
    let rows_ref = match policy {
        Policy::Deterministic(p) => {
            rows = deterministic_rows(mdp, p);
            &rows
        }
        Policy::Randomized(r) => r,
    };
    let (p, r) = induced_chain(mdp, rows_ref);
    cesaro_average(&p, &r)
}

/// Largest chain handled by [`greedy_gain`].
pub const GAIN_STATE_CAP: usize = 4000;

/// Exact worst-start gain of a deterministic policy, when it is
/// start-independent (within `1e-9`) and the chain is small enough.
pub fn greedy_gain<M: FiniteMdp + ?Sized>(mdp: &M, policy: &[usize]) -> Option<f64> {
    if mdp.num_states() > GAIN_STATE_CAP {
        return None;
    }
    let g = evaluate_policy_avg(mdp, Policy::Deterministic(policy));
    let hi = g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = g.iter().copied().fold(f64::INFINITY, f64::min);
    (hi - lo <= 1e-9).then_some(hi)
}

/// Bias `h` (zero at `anchor`) and gain of a unichain policy, from
/// `h + g = r + P h`. `None` if the system is singular.
pub fn policy_bias<M: FiniteMdp + ?Sized>(mdp: &M, policy: &[usize], anchor: usize) -> Option<(f64, Vec<f64>)> {
    let n = mdp.num_states();
    let (p, r) = induced_chain(mdp, &deterministic_rows(mdp, policy));
    // unknowns: h (n entries) then g
    let mut a = DMatrix::<f64>::zeros(n + 1, n + 1);
    let mut b = DVector::<f64>::zeros(n + 1);
    for s in 0..n {
        a[(s, s)] += 1.0;
        for j in 0..n {
            a[(s, j)] -= p[s][j];
        }
        a[(s, n)] = 1.0;
        b[s] = r[s];
    }
    a[(n, anchor)] = 1.0;
    let sol = a.lu().solve(&b)?;
    let mut h: Vec<f64> = (0..n).map(|i| sol[i]).collect();
    h[anchor] = 0.0;
    Some((sol[n], h))
}

/// Enumerate every stationary deterministic policy and return the one with
/// the smallest worst-start long-run average (first in enumeration order on ties).
pub fn solve_oracle<M: FiniteMdp + ?Sized>(mdp: &M, budget: u128) -> Result<AvgSolution> {
    let n = mdp.num_states();
    let radices: Vec<usize> = (0..n).map(|s| mdp.num_actions(s)).collect();
    let total: u128 = radices.iter().map(|&r| r as u128).product();
    if total > budget {
        return Err(Error::capacity("stationary deterministic policies", total, budget));
    }
    let decode = |mut idx: u128| -> Vec<usize> {
        let mut pol = vec![0usize; n];
        for s in (0..n).rev() {
            pol[s] = (idx % radices[s] as u128) as usize;
            idx /= radices[s] as u128;
        }
        pol
    };
    let worsts: Vec<f64> = (0..total as u64)
        .into_par_iter()
        .map(|idx| {
            let g = evaluate_policy_avg(mdp, Policy::Deterministic(&decode(idx as u128)));
            g.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    let best = worsts.iter().copied().fold(f64::INFINITY, f64::min);
    let tol = 1e-12 * (1.0 + best.abs());
    // Among gain-optimal policies prefer the first whose own bias solves the
    // average-cost optimality equation; otherwise the first gain-optimal one.
    let optimal: Vec<u64> = (0..total as u64)
        .filter(|&i| worsts[i as usize] <= best + tol)
        .collect();
    let best_idx = optimal
        .iter()
        .copied()
        .find(|&i| {
            let pol = decode(i as u128);
            policy_bias(mdp, &pol, 0).is_some_and(|(g, h)| acoe_residual(mdp, g, &h) <= 1e-9)
        })
        .unwrap_or(optimal[0]);
    let policy = decode(best_idx as u128);
    let per_start = evaluate_policy_avg(mdp, Policy::Deterministic(&policy));
    let worst = per_start.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let best = per_start.iter().copied().fold(f64::INFINITY, f64::min);
    let start_dependent = worst - best > 1e-9;
    let h = match policy_bias(mdp, &policy, 0) {
        Some((_, h)) if !start_dependent && h.iter().all(|v| v.is_finite()) => h,
        _ => vec![0.0; n],
    };
    let residual = acoe_residual(mdp, worst, &h);
    Ok(AvgSolution {
        j_star: worst,
        h,
        policy,
        residual,
        iterations: total as usize,
        contraction_estimate: 0.0,
        spans: Vec::new(),
        anchor: 0,
        per_start: Some(per_start),
        start_dependent,
        method: "oracle".into(),
    })
}
