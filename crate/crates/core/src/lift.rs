//! The finite-population measure-valued MDP.
//!
//! States are empirical measures in `P_N(X)`, actions at `mu` are joint
//! measures in `P_N(U x X)` with state marginal `mu`, and the kernel
//! `eta(.|mu, Theta)` is the law of the next empirical measure when any agent
//! vector realizing `Theta` moves one step. Agents are conditionally
//! independent given the common noise, so each row is a mixture over common
//! noise atoms of convolutions of per-agent next-state laws.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agent_model::AgentModel;
use crate::dp::{FiniteMdp, SparseRow};
use crate::error::{Error, Result};
use crate::measures::{
    admissible_actions, admissible_count, composition_count, enumerate_empirical, EmpiricalMeasure,
    JointEmpiricalMeasure,
};

/// How kernel rows are computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum LiftMode {
    Exact,
    MonteCarlo { samples: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy)]
pub struct LiftConfig {
    pub mode: LiftMode,
    /// Cap on lifted states and on total (state, action) pairs.
    pub budget: u128,
}

impl Default for LiftConfig {
    fn default() -> Self {
        Self {
            mode: LiftMode::Exact,
            budget: 2_000_000,
        }
    }
}

impl LiftConfig {
    pub fn exact() -> Self {
        Self::default()
    }

    pub fn monte_carlo(samples: usize, seed: u64) -> Self {
        Self {
            mode: LiftMode::MonteCarlo { samples, seed },
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LiftedMdp {
    pub n: u32,
    pub num_x: usize,
    pub num_u: usize,
    pub states: Vec<EmpiricalMeasure>,
    pub actions: Vec<Vec<JointEmpiricalMeasure>>,
    pub kernel: Vec<Vec<SparseRow>>,
    pub cost: Vec<Vec<f64>>,
    pub model_hash: String,
    pub mode: LiftMode,
}

impl FiniteMdp for LiftedMdp {
    fn num_states(&self) -> usize {
        self.states.len()
    }
    fn num_actions(&self, s: usize) -> usize {
        self.actions[s].len()
    }
    fn cost(&self, s: usize, a: usize) -> f64 {
        self.cost[s][a]
    }
    fn row(&self, s: usize, a: usize) -> &[(usize, f64)] {
        &self.kernel[s][a]
    }
}

/// Position of `counts` in the descending-lexicographic enumeration.
pub fn rank_counts(counts: &[u32]) -> usize {
    let k = counts.len();
    let mut remaining: u32 = counts.iter().sum();
    let mut rank: u128 = 0;
    for (i, &c) in counts.iter().enumerate().take(k.saturating_sub(1)) {
        // compositions sharing the prefix but with a larger entry here come first
        for v in (c + 1)..=remaining {
            rank += composition_count(remaining - v, k - i - 1);
        }
        remaining -= c;
    }
    rank as usize
}

impl LiftedMdp {
    pub fn state_index(&self, mu: &EmpiricalMeasure) -> Option<usize> {
        if mu.counts.len() != self.num_x || mu.n() != self.n {
            return None;
        }
        Some(rank_counts(&mu.counts))
    }

    /// Index of `theta` in the action list of its marginal.
    pub fn action_index(&self, theta: &JointEmpiricalMeasure) -> Option<(usize, usize)> {
        let s = self.state_index(&theta.marginal())?;
        let mut a = 0usize;
        // odometer rank, first state slowest
        for (x, row) in theta.counts.iter().enumerate() {
            let later: u128 = self.states[s].counts[x + 1..]
                .iter()
                .map(|&c| composition_count(c, self.num_u))
                .product();
            a += rank_counts(row) * later as usize;
        }
        Some((s, a))
    }

    /// `max_{mu, mu'} W1(mu, mu')` over lifted states.
    pub fn w1_diameter(&self, metric_x: &[Vec<f64>]) -> f64 {
        let probs: Vec<Vec<f64>> = self.states.iter().map(|m| m.probs()).collect();
        let mut d: f64 = 0.0;
        for i in 0..probs.len() {
            for j in (i + 1)..probs.len() {
                d = d.max(crate::measures::wasserstein1(&probs[i], &probs[j], metric_x).expect("dims"));
            }
        }
        d
    }
}

/// Canonical agent vectors realizing `theta`, sorted by (state, action).
pub fn representative_vector(theta: &JointEmpiricalMeasure) -> (Vec<usize>, Vec<usize>) {
    let mut xs = Vec::new();
    let mut us = Vec::new();
    for (x, row) in theta.counts.iter().enumerate() {
        for (u, &c) in row.iter().enumerate() {
            for _ in 0..c {
                xs.push(x);
                us.push(u);
            }
        }
    }
    (xs, us)
}

/// Stage cost `k(mu, Theta) = (1/N) sum_i c(x_i, u_i, mu)` over agent vectors.
pub fn stage_cost(model: &AgentModel, xs: &[usize], us: &[usize]) -> f64 {
    let mu = EmpiricalMeasure::from_states(xs, model.num_states()).probs();
    let total: f64 = xs.iter().zip(us).map(|(&x, &u)| model.cost(x, u, &mu)).sum();
    total / xs.len() as f64
}

/// Exact law of the next empirical measure for the given agent vectors, as a
/// sparse row over lifted-state indices. Agents are convolved in canonical
/// (state, action) order, so any permutation of the vectors gives the same
/// floating-point row.
pub fn exact_row(model: &AgentModel, xs: &[usize], us: &[usize]) -> SparseRow {
    let mut pairs: Vec<(usize, usize)> = xs.iter().copied().zip(us.iter().copied()).collect();
    pairs.sort_unstable();
    let (xs, us): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
    row_in_agent_order(model, &xs, &us)
}

/// As [`exact_row`] but convolving agents in the order given.
pub fn row_in_agent_order(model: &AgentModel, xs: &[usize], us: &[usize]) -> SparseRow {
    let nx = model.num_states();
    let n = xs.len();
    let mu = EmpiricalMeasure::from_states(xs, nx).probs();
    let radix = n + 1;
    let size = radix.pow(nx as u32);
    let strides: Vec<usize> = (0..nx).map(|z| radix.pow(z as u32)).collect();
    let mut total = vec![0.0; size];
    let mut p = vec![0.0; nx];
    for (w0, &pw) in model.common_noise().probs.iter().enumerate() {
        if pw == 0.0 {
            continue;
        }
        let mut dist = vec![0.0; size];
        dist[0] = 1.0;
        for (&x, &u) in xs.iter().zip(us) {
            model.kernel_into(w0, x, u, &mu, &mut p);
            let mut next = vec![0.0; size];
            for (idx, &m) in dist.iter().enumerate() {
                if m == 0.0 {
                    continue;
                }
                for z in 0..nx {
                    if p[z] != 0.0 {
                        next[idx + strides[z]] += m * p[z];
                    }
                }
            }
            dist = next;
        }
        for (t, d) in total.iter_mut().zip(&dist) {
            *t += pw * d;
        }
    }
    let mut row: SparseRow = Vec::new();
    let mut counts = vec![0u32; nx];
    for (idx, &m) in total.iter().enumerate() {
        if m == 0.0 {
            continue;
        }
        let mut rest = idx;
        for c in counts.iter_mut() {
            *c = (rest % radix) as u32;
            rest /= radix;
        }
        row.push((rank_counts(&counts), m));
    }
    row.sort_by_key(|e| e.0);
    row
}

fn sample_index(cdf: &[f64], u: f64) -> usize {
    cdf.iter().position(|&c| u < c).unwrap_or(cdf.len() - 1)
}

fn cumulative(p: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    p.iter()
        .map(|v| {
            acc += v;
            acc
        })
        .collect()
}

/// Monte-Carlo estimate of the next-measure law from `samples` joint draws.
pub fn sampled_row(model: &AgentModel, xs: &[usize], us: &[usize], samples: usize, seed: u64) -> SparseRow {
    let nx = model.num_states();
    let mu = EmpiricalMeasure::from_states(xs, nx).probs();
    let w0_cdf = cumulative(&model.common_noise().probs);
    let cdfs: Vec<Vec<Vec<f64>>> = (0..model.num_common())
        .map(|w0| {
            xs.iter()
                .zip(us)
                .map(|(&x, &u)| cumulative(&model.kernel(w0, x, u, &mu)))
                .collect()
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hist = std::collections::BTreeMap::<usize, usize>::new();
    let mut counts = vec![0u32; nx];
    for _ in 0..samples {
        let w0 = sample_index(&w0_cdf, rng.gen());
        counts.iter_mut().for_each(|c| *c = 0);
        for cdf in &cdfs[w0] {
            counts[sample_index(cdf, rng.gen())] += 1;
        }
        *hist.entry(rank_counts(&counts)).or_default() += 1;
    }
    hist.into_iter().map(|(j, c)| (j, c as f64 / samples as f64)).collect()
}

/// Stream seed for the (state, action) pair `(s, a)`.
pub fn derive_seed(seed: u64, s: usize, a: usize) -> u64 {
    let mut z = seed ^ (s as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (a as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Build the lifted MDP for population size `n`.
pub fn build_lifted_mdp(model: &AgentModel, n: u32, config: &LiftConfig) -> Result<LiftedMdp> {
    let nx = model.num_states();
    let nu = model.num_actions();
    let states = enumerate_empirical(n, nx, config.budget)?;
    let pairs: u128 = states.iter().map(|m| admissible_count(m, nu)).sum();
    if pairs > config.budget {
        return Err(Error::capacity(
            format!("lifted (state, action) pairs for N={n}"),
            pairs,
            config.budget,
        ));
    }
    if let LiftMode::MonteCarlo { samples, .. } = config.mode {
        if samples == 0 {
            return Err(Error::InvalidArgument("Monte-Carlo lift needs samples >= 1".into()));
        }
    }
    let actions: Vec<Vec<JointEmpiricalMeasure>> = states
        .iter()
        .map(|m| admissible_actions(m, nu, config.budget))
        .collect::<Result<_>>()?;

    let built: Vec<(Vec<SparseRow>, Vec<f64>)> = actions
        .par_iter()
        .enumerate()
        .map(|(s, acts)| {
            acts.iter()
                .enumerate()
                .map(|(a, theta)| {
                    let (xs, us) = representative_vector(theta);
                    let row = match config.mode {
                        LiftMode::Exact => exact_row(model, &xs, &us),
                        LiftMode::MonteCarlo { samples, seed } => {
                            sampled_row(model, &xs, &us, samples, derive_seed(seed, s, a))
                        }
                    };
                    (row, stage_cost(model, &xs, &us))
                })
                .unzip()
        })
        .collect();
    let (kernel, cost) = built.into_iter().unzip();
    Ok(LiftedMdp {
        n,
        num_x: nx,
        num_u: nu,
        states,
        actions,
        kernel,
        cost,
        model_hash: model.hash().to_string(),
        mode: config.mode,
    })
}

/// Actions for agents in `xs` realizing `theta`: agents are visited in index
/// order and, within each state, take actions in increasing action index.
pub fn assign_actions(xs: &[usize], theta: &JointEmpiricalMeasure) -> Vec<usize> {
    let mut left: Vec<Vec<u32>> = theta.counts.clone();
    xs.iter()
        .map(|&x| {
            let u = left[x]
                .iter()
                .position(|&c| c > 0)
                .expect("theta marginal matches the state vector");
            left[x][u] -= 1;
            u
        })
        .collect()
}

/// Total-variation distances between two laws of the agent-vector process
/// `x_t in X^N` driven by a stationary lifted policy.
///
/// Both laws are evolved exactly on `X^N` (indexed base `|X|`, agent 0 least
/// significant). Under a minorization certificate `(pi, B)`, each step
/// contracts the distance by at least `1 - P(B) pi(X)^N`.
pub fn tv_contraction_probe(
    model: &AgentModel,
    mdp: &LiftedMdp,
    policy: &[usize],
    init_a: &[f64],
    init_b: &[f64],
    steps: usize,
    budget: usize,
) -> Result<Vec<f64>> {
    let nx = model.num_states();
    let n = mdp.n as usize;
    let size = (nx as u128).pow(n as u32);
    if size > budget as u128 {
        return Err(Error::capacity(
            format!("vector states |X|^N for N={n}"),
            size,
            budget as u128,
        ));
    }
    let size = size as usize;
    if init_a.len() != size || init_b.len() != size {
        return Err(Error::Dimension(format!("initial laws must have {size} entries")));
    }
    let decode = |mut i: usize| -> Vec<usize> {
        (0..n)
            .map(|_| {
                let d = i % nx;
                i /= nx;
                d
            })
            .collect()
    };
    let mut trans = vec![vec![0.0; size]; size];
    let mut p = vec![0.0; nx];
    for (i, row) in trans.iter_mut().enumerate() {
        let xs = decode(i);
        let mu = EmpiricalMeasure::from_states(&xs, nx);
        let s = mdp.state_index(&mu).expect("lifted state");
        let us = assign_actions(&xs, &mdp.actions[s][policy[s]]);
        let probs = mu.probs();
        for (w0, &pw) in model.common_noise().probs.iter().enumerate() {
            let per_agent: Vec<Vec<f64>> = xs
                .iter()
                .zip(&us)
                .map(|(&x, &u)| {
                    model.kernel_into(w0, x, u, &probs, &mut p);
                    p.clone()
                })
                .collect();
            for (j, slot) in row.iter_mut().enumerate() {
                let ys = decode(j);
                let prod: f64 = ys.iter().enumerate().map(|(k, &y)| per_agent[k][y]).product();
                *slot += pw * prod;
            }
        }
    }
    let step = |law: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; size];
        for (i, &m) in law.iter().enumerate() {
            if m != 0.0 {
                for (o, &t) in out.iter_mut().zip(&trans[i]) {
                    *o += m * t;
                }
            }
        }
        out
    };
    let mut a = init_a.to_vec();
    let mut b = init_b.to_vec();
    let mut out = vec![crate::measures::total_variation(&a, &b)];
    for _ in 0..steps {
        a = step(&a);
        b = step(&b);
        out.push(crate::measures::total_variation(&a, &b));
    }
    Ok(out)
}
