//! Discounted value iteration and the vanishing-discount route to the
//! average-cost solution.
//!
//! Value iteration stops on the span of the Bellman increment and then
//! shifts the iterate by the midpoint of that increment over `1 - beta`
//! (MacQueen bounds). The shifted iterate has sup-norm residual equal to
//! half the increment's span, which contracts at the chain's mixing rate
//! rather than at `beta`, so rungs close to `beta = 1` stay affordable.
//! When that span stalls (multichain or periodic greedy chains) the solve
//! finishes by exact evaluation and improvement of the greedy policy.

use serde::{Deserialize, Serialize};

use crate::avg_solver::{acoe_residual, AvgSolution};
use nalgebra::{DMatrix, DVector};

use crate::dp::{
    bellman_sweep, deterministic_rows, diff, greedy_at, induced_chain, q_value, span, sup_norm, FiniteMdp,
};
use crate::error::{Error, Result};

/// Sweep cap for a single discounted solve.
pub const MAX_SWEEPS: usize = 2_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscountedSolution {
    pub beta: f64,
    pub values: Vec<f64>,
    pub policy: Vec<usize>,
    /// `||T_beta K - K||_inf`.
    pub sup_residual: f64,
    pub sweeps: usize,
}

/// Largest MDP for which a stalled solve switches to exact policy evaluation.
pub const EVAL_STATE_CAP: usize = 3000;

/// The span of the Bellman increment has stopped shrinking: it contracts at
/// the chain's mixing rate, which is 1 when greedy chains are multichain or
/// periodic, leaving only the slow `beta` rate.
fn stalled(spans: &[f64]) -> bool {
    const WINDOW: usize = 100;
    let k = spans.len();
    k > 2 * WINDOW && spans[k - 1] > 0.5 * spans[k - 1 - WINDOW]
}

/// `(I - beta P_pi)^-1 r_pi`.
fn evaluate_discounted<M: FiniteMdp + ?Sized>(mdp: &M, beta: f64, policy: &[usize]) -> Vec<f64> {
    let n = mdp.num_states();
    let (p, r) = induced_chain(mdp, &deterministic_rows(mdp, policy));
    let a = DMatrix::from_fn(n, n, |i, j| f64::from(i == j) - beta * p[i][j]);
    let v = a
        .lu()
        .solve(&DVector::from_column_slice(&r))
        .expect("I - beta P is invertible for beta < 1");
    v.iter().copied().collect()
}

/// Alternate exact evaluation and greedy improvement from `policy` until no
/// state improves by more than the tie slack; finite since each step
/// strictly improves the value.
fn improve_to_optimum<M: FiniteMdp + ?Sized>(mdp: &M, beta: f64, mut policy: Vec<usize>) -> Vec<f64> {
    loop {
        let v = evaluate_discounted(mdp, beta, &policy);
        let mut changed = false;
        for (s, a) in policy.iter_mut().enumerate() {
            let (best, idx) = greedy_at(mdp, s, &v, beta);
            let current = q_value(mdp, s, *a, &v, beta);
            if best < current - 1e-12 * (1.0 + current.abs()) {
                *a = idx;
                changed = true;
            }
        }
        if !changed {
            return v;
        }
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::InvalidArgument(format!("discount {beta} not in (0, 1)")));
    }
    Ok(())
}

/// Solve `K = min_a [k + beta eta K]` to sup-norm residual `tol`.
pub fn solve_discounted<M: FiniteMdp + ?Sized>(
    mdp: &M,
    beta: f64,
    tol: f64,
    warm_start: Option<&[f64]>,
) -> Result<DiscountedSolution> {
    check_beta(beta)?;
    let n = mdp.num_states();
    let mut k = match warm_start {
        Some(w) if w.len() == n => w.to_vec(),
        Some(w) => {
            return Err(Error::Dimension(format!(
                "warm start has {} entries, expected {n}",
                w.len()
            )))
        }
        None => vec![0.0; n],
    };
    let mut sweeps = 0;
    let mut span_history: Vec<f64> = Vec::new();
    loop {
        let (tk, greedy) = bellman_sweep(mdp, &k, beta);
        sweeps += 1;
        let d = diff(&tk, &k);
        // values of size c / (1 - beta) cannot be resolved below a few ulps
        let floor = tol.max(8.0 * f64::EPSILON * sup_norm(&tk));
        if sup_norm(&d) <= floor {
            k = tk;
            break;
        }
        let sp = span(&d);
        if sp <= floor {
            let hi = d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lo = d.iter().copied().fold(f64::INFINITY, f64::min);
            let shift = 0.5 * (hi + lo) / (1.0 - beta);
            for x in k.iter_mut() {
                *x += shift;
            }
            break;
        }
        span_history.push(sp);
        if stalled(&span_history) && n <= EVAL_STATE_CAP {
            k = improve_to_optimum(mdp, beta, greedy);
            break;
        }
        if sweeps >= MAX_SWEEPS {
            return Err(Error::NonConvergence {
                iterations: sweeps,
                last: sup_norm(&d),
                spans: Vec::new(),
            });
        }
        k = tk;
    }
    let (tk, policy) = bellman_sweep(mdp, &k, beta);
    let sup_residual = sup_norm(&diff(&tk, &k));
    Ok(DiscountedSolution {
        beta,
        values: k,
        policy,
        sup_residual,
        sweeps,
    })
}

/// `h_beta = K_beta - K_beta(anchor)`.
pub fn relative_h(sol: &DiscountedSolution, anchor: usize) -> Vec<f64> {
    let a = sol.values[anchor];
    let mut h: Vec<f64> = sol.values.iter().map(|v| v - a).collect();
    h[anchor] = 0.0;
    h
}

/// `beta_k = 1 - 2^-k` for `k = from ..= to`.
pub fn geometric_schedule(from: u32, to: u32) -> Vec<f64> {
    (from..=to).map(|k| 1.0 - 0.5f64.powi(k as i32)).collect()
}

/// Constants for the `|h_beta| <= 2 K_c / (1 - 2 K_f beta) diam` envelope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LipschitzEnvelope {
    pub k_f: f64,
    pub k_c: f64,
    pub diameter: f64,
}

impl LipschitzEnvelope {
    pub fn bound(&self, beta: f64) -> f64 {
        let denom = 1.0 - 2.0 * self.k_f * beta;
        if denom <= 0.0 {
            f64::INFINITY
        } else {
            2.0 * self.k_c / denom * self.diameter
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VanishingDiscountTrace {
    pub betas: Vec<f64>,
    /// `(1 - beta) K*_beta(anchor)`.
    pub j_estimates: Vec<f64>,
    pub h_estimates: Vec<Vec<f64>>,
    /// Average-cost residual of `(j_estimate, h_beta)` per rung.
    pub residuals: Vec<f64>,
    /// Number of states whose greedy action changed from the previous rung.
    pub policy_changes: Vec<usize>,
    pub diameter_bounds: Option<Vec<f64>>,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct VanishingOptions {
    /// Stop once successive `j` estimates differ by at most this.
    pub tol: f64,
    /// Residual target of each discounted solve.
    pub inner_tol: f64,
    /// Run the whole schedule even after stabilizing.
    pub full_schedule: bool,
    pub envelope: Option<LipschitzEnvelope>,
}

impl VanishingOptions {
    pub fn new(tol: f64) -> Self {
        Self {
            tol,
            inner_tol: (tol * 1e-3).max(1e-12),
            full_schedule: false,
            envelope: None,
        }
    }
}

/// Solve the discounted problems along `schedule` with warm starts and
/// extract `(j*, h)` from the last rung solved.
///
/// A schedule that ends before successive `j` estimates agree within `tol`
/// is reported through `trace.converged = false`, not as an error.
pub fn vanishing_discount<M: FiniteMdp + ?Sized>(
    mdp: &M,
    anchor: usize,
    schedule: &[f64],
    opts: &VanishingOptions,
) -> Result<(AvgSolution, VanishingDiscountTrace)> {
    if schedule.is_empty() {
        return Err(Error::InvalidArgument("empty discount schedule".into()));
    }
    if schedule.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("discount schedule must increase".into()));
    }
    let n = mdp.num_states();
    if anchor >= n {
        return Err(Error::InvalidArgument(format!("anchor {anchor} out of range")));
    }
    let mut trace = VanishingDiscountTrace {
        betas: Vec::new(),
        j_estimates: Vec::new(),
        h_estimates: Vec::new(),
        residuals: Vec::new(),
        policy_changes: Vec::new(),
        diameter_bounds: opts.envelope.map(|_| Vec::new()),
        converged: false,
    };
    let mut warm: Option<Vec<f64>> = None;
    let mut last_policy: Option<Vec<usize>> = None;
    let mut last: Option<DiscountedSolution> = None;
    let mut sweeps = 0;
    for &beta in schedule {
        let sol = solve_discounted(mdp, beta, opts.inner_tol, warm.as_deref())?;
        sweeps += sol.sweeps;
        let j = (1.0 - beta) * sol.values[anchor];
        let h = relative_h(&sol, anchor);
        trace.betas.push(beta);
        trace.residuals.push(acoe_residual(mdp, j, &h));
        trace.policy_changes.push(match &last_policy {
            Some(p) => p.iter().zip(&sol.policy).filter(|(a, b)| a != b).count(),
            None => 0,
        });
        if let (Some(env), Some(bounds)) = (opts.envelope, trace.diameter_bounds.as_mut()) {
            bounds.push(env.bound(beta));
        }
        let stable = trace
            .j_estimates
            .last()
            .is_some_and(|prev: &f64| (prev - j).abs() <= opts.tol);
        trace.j_estimates.push(j);
        trace.h_estimates.push(h.clone());
        last_policy = Some(sol.policy.clone());
        // next rung starts from h + j / (1 - beta')
        warm = Some(h);
        last = Some(sol);
        if stable {
            trace.converged = true;
            if !opts.full_schedule {
                break;
            }
        }
        if let (Some(w), Some(&next)) = (warm.as_mut(), schedule.get(trace.betas.len())) {
            for x in w.iter_mut() {
                *x += j / (1.0 - next);
            }
        }
    }
    let sol = last.expect("schedule is nonempty");
    let j_star = *trace.j_estimates.last().expect("nonempty");
    let h = trace.h_estimates.last().expect("nonempty").clone();
    let residual = acoe_residual(mdp, j_star, &h);
    let diffs: Vec<f64> = trace.j_estimates.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    Ok((
        AvgSolution {
            j_star,
            h,
            policy: sol.policy,
            residual,
            iterations: sweeps,
            contraction_estimate: 0.0,
            spans: diffs,
            anchor,
            per_start: None,
            start_dependent: false,
            method: "vanishing_discount".into(),
        },
        trace,
    ))
}
