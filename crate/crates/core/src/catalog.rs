//! Ready-made agent models: the two-agent spreading problem, reference
//! models with known minorization constants, and seeded random families.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::agent_model::{AgentModel, CostSpec, Decimal, MetricSpec, ModelSpec, NoiseSpec, TransitionSpec};

fn dec(v: f64) -> Decimal {
    Decimal::from(v)
}

fn dec_vec(v: &[f64]) -> Vec<Decimal> {
    v.iter().copied().map(dec).collect()
}

fn labels(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

fn trivial_noise() -> NoiseSpec {
    NoiseSpec {
        support: vec!["none".into()],
        probs: vec![dec(1.0)],
    }
}

fn noise(probs: &[f64]) -> NoiseSpec {
    NoiseSpec {
        support: labels("w", probs.len()),
        probs: dec_vec(probs),
    }
}

/// Rows indexed `[w0][x][u]`.
fn tabular(rows: &[Vec<Vec<Vec<f64>>>]) -> TransitionSpec {
    TransitionSpec::Tabular {
        rows: rows
            .iter()
            .map(|a| a.iter().map(|b| b.iter().map(|r| dec_vec(r)).collect()).collect())
            .collect(),
    }
}

/// Affine kernel `sum_y mu(y) vertex_rows[w0][x][u][y]`.
fn affine_from_vertices(vertex_rows: &[Vec<Vec<Vec<Vec<f64>>>>], nx: usize) -> TransitionSpec {
    TransitionSpec::Affine {
        base: vertex_rows
            .iter()
            .map(|a| {
                a.iter()
                    .map(|b| b.iter().map(|_| dec_vec(&vec![0.0; nx])).collect())
                    .collect()
            })
            .collect(),
        coef: vertex_rows
            .iter()
            .map(|a| {
                a.iter()
                    .map(|b| b.iter().map(|c| c.iter().map(|r| dec_vec(r)).collect()).collect())
                    .collect()
            })
            .collect(),
    }
}

fn build(spec: ModelSpec) -> AgentModel {
    AgentModel::from_spec(spec).expect("catalog models are valid")
}

/// Two agents, `X = U = {0, 1}`, `x' = u`, cost `W1(mu, (1/2, 1/2))`.
pub fn example_one() -> AgentModel {
    build(ModelSpec {
        name: Some("spread-two-states".into()),
        states: vec!["0".into(), "1".into()],
        actions: vec!["0".into(), "1".into()],
        metric_x: MetricSpec::Named("line".into()),
        metric_u: MetricSpec::Named("line".into()),
        idio_noise: trivial_noise(),
        common_noise: trivial_noise(),
        transition: TransitionSpec::Deterministic { expr: "u".into() },
        cost: CostSpec {
            table: None,
            w1_to: Some(dec_vec(&[0.5, 0.5])),
            w1_weight: None,
        },
    })
}

/// Stage cost `c` everywhere, over a fixed stochastic two-state kernel.
pub fn constant_cost(c: f64) -> AgentModel {
    let rows = vec![vec![
        vec![vec![0.7, 0.3], vec![0.2, 0.8]],
        vec![vec![0.5, 0.5], vec![0.9, 0.1]],
    ]];
    build(ModelSpec {
        name: Some("constant-cost".into()),
        states: labels("s", 2),
        actions: labels("a", 2),
        metric_x: MetricSpec::Named("line".into()),
        metric_u: MetricSpec::Named("line".into()),
        idio_noise: trivial_noise(),
        common_noise: trivial_noise(),
        transition: tabular(&rows),
        cost: CostSpec {
            table: Some(vec![dec_vec(&[c, c]), dec_vec(&[c, c])]),
            w1_to: None,
            w1_weight: None,
        },
    })
}

/// Every agent moves to `(0.4, 0.6)` regardless of state, action or measure.
pub fn iid_model() -> AgentModel {
    let row = vec![0.4, 0.6];
    let rows = vec![vec![vec![row.clone(); 2]; 2]];
    build(ModelSpec {
        name: Some("iid".into()),
        states: labels("s", 2),
        actions: labels("a", 2),
        metric_x: MetricSpec::Named("line".into()),
        metric_u: MetricSpec::Named("line".into()),
        idio_noise: trivial_noise(),
        common_noise: trivial_noise(),
        transition: tabular(&rows),
        cost: CostSpec {
            table: Some(vec![dec_vec(&[0.2, 0.5]), dec_vec(&[0.9, 0.1])]),
            w1_to: None,
            w1_weight: None,
        },
    })
}

/// Rows bounded below by `(0.1, 0.1)` at a common-noise atom of mass 0.3 and
/// deterministic at the other atom.
pub fn floor_model() -> AgentModel {
    let good = vec![
        vec![vec![0.1, 0.9], vec![0.9, 0.1]],
        vec![vec![0.5, 0.5], vec![0.1, 0.9]],
    ];
    let bad = vec![
        vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        vec![vec![0.0, 1.0], vec![1.0, 0.0]],
    ];
    build(ModelSpec {
        name: Some("floor".into()),
        states: labels("s", 2),
        actions: labels("a", 2),
        metric_x: MetricSpec::Named("line".into()),
        metric_u: MetricSpec::Named("line".into()),
        idio_noise: trivial_noise(),
        common_noise: noise(&[0.3, 0.7]),
        transition: tabular(&[good, bad]),
        cost: CostSpec {
            table: Some(vec![dec_vec(&[0.0, 0.2]), dec_vec(&[1.0, 0.6])]),
            w1_to: Some(dec_vec(&[0.5, 0.5])),
            w1_weight: Some(dec(0.5)),
        },
    })
}

/// With probability `p_reset` every agent is redrawn from `reset`; otherwise
/// the agent moves to the state named by its action (`|U| = |X|`).
pub fn resetting_model(reset: &[f64], p_reset: f64) -> AgentModel {
    let nx = reset.len();
    let reset_slice: Vec<Vec<Vec<f64>>> = (0..nx).map(|_| (0..nx).map(|_| reset.to_vec()).collect()).collect();
    let move_slice: Vec<Vec<Vec<f64>>> = (0..nx)
        .map(|_| (0..nx).map(|u| (0..nx).map(|z| f64::from(z == u)).collect()).collect())
        .collect();
    let table: Vec<Vec<f64>> = (0..nx)
        .map(|x| (0..nx).map(|u| 0.1 * (x as f64) + 0.05 * (u as f64)).collect())
        .collect();
    build(ModelSpec {
        name: Some("resetting".into()),
        states: labels("s", nx),
        actions: labels("a", nx),
        metric_x: MetricSpec::Named("line".into()),
        metric_u: MetricSpec::Named("line".into()),
        idio_noise: trivial_noise(),
        common_noise: noise(&[p_reset, 1.0 - p_reset]),
        transition: tabular(&[reset_slice, move_slice]),
        cost: CostSpec {
            table: Some(table.iter().map(|r| dec_vec(r)).collect()),
            w1_to: Some(dec_vec(&vec![1.0 / nx as f64; nx])),
            w1_weight: None,
        },
    })
}

/// Probability vector with entries on a 1/100 lattice (exact decimal text).
fn random_distribution(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut cuts: Vec<u32> = (0..n - 1).map(|_| rng.gen_range(0..=100)).collect();
    cuts.sort_unstable();
    let mut out = Vec::with_capacity(n);
    let mut prev = 0;
    for c in cuts.into_iter().chain(std::iter::once(100)) {
        out.push(f64::from(c - prev) / 100.0);
        prev = c;
    }
    out
}

fn one_hot(n: usize, i: usize) -> Vec<f64> {
    (0..n).map(|z| f64::from(z == i)).collect()
}

fn random_cost(rng: &mut ChaCha8Rng, nx: usize, nu: usize, w1_weight: f64) -> CostSpec {
    let table: Vec<Vec<f64>> = (0..nx)
        .map(|_| (0..nu).map(|_| f64::from(rng.gen_range(0..=100u32)) / 100.0).collect())
        .collect();
    CostSpec {
        table: Some(table.iter().map(|r| dec_vec(r)).collect()),
        w1_to: Some(dec_vec(&random_distribution(rng, nx))),
        w1_weight: Some(dec(w1_weight)),
    }
}

/// Random mu-affine model with dense random vertex rows.
pub fn random_affine(nx: usize, nu: usize, nw0: usize, seed: u64) -> AgentModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vertex_rows: Vec<Vec<Vec<Vec<Vec<f64>>>>> = (0..nw0)
        .map(|_| {
            (0..nx)
                .map(|_| {
                    (0..nu)
                        .map(|_| (0..nx).map(|_| random_distribution(&mut rng, nx)).collect())
                        .collect()
                })
                .collect()
        })
        .collect();
    let w0 = random_distribution(&mut rng, nw0);
    let w0 = if w0.contains(&0.0) {
        vec![1.0 / nw0 as f64; nw0]
    } else {
        w0
    };
    let cost = random_cost(&mut rng, nx, nu, 0.5);
    build(ModelSpec {
        name: Some(format!("random-affine-{seed}")),
        states: labels("s", nx),
        actions: labels("a", nu),
        metric_x: MetricSpec::Named("line".into()),
        metric_u: MetricSpec::Named("line".into()),
        idio_noise: trivial_noise(),
        common_noise: noise(&w0),
        transition: affine_from_vertices(&vertex_rows, nx),
        cost,
    })
}

/// Random mu-affine model whose best minorization certificate is exactly
/// `(P(B), pi(X)) = (p_b, mass)`: at the first common-noise atom (probability
/// `p_b`) rows are `pi + (1 - mass) * one-hot`, at the second atom rows are
/// one-hot, so no other subset certifies anything.
pub fn random_certified(nx: usize, nu: usize, p_b: f64, mass: f64, seed: u64) -> AgentModel {
    assert!(nx >= 2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = random_distribution(&mut rng, nx);
    let pi: Vec<f64> = shape.iter().map(|v| v * mass).collect();
    let mut slots = Vec::new();
    for x in 0..nx {
        for u in 0..nu {
            for y in 0..nx {
                slots.push((x, u, y));
            }
        }
    }
    // every target state must be hit somewhere so the floor is exactly pi
    let mut targets: Vec<usize> = slots.iter().map(|_| rng.gen_range(0..nx)).collect();
    for z in 0..nx.min(targets.len()) {
        targets[z] = z;
    }
    let mut good = vec![vec![vec![Vec::new(); nx]; nu]; nx];
    for (&(x, u, y), &t) in slots.iter().zip(&targets) {
        let row: Vec<f64> = (0..nx).map(|z| pi[z] + (1.0 - mass) * f64::from(z == t)).collect();
        good[x][u][y] = row;
    }
    let mut bad = vec![vec![vec![Vec::new(); nx]; nu]; nx];
    for (i, &(x, u, y)) in slots.iter().enumerate() {
        let t = if i < nx { (i + 1) % nx } else { rng.gen_range(0..nx) };
        bad[x][u][y] = one_hot(nx, t);
    }
    let cost = random_cost(&mut rng, nx, nu, 0.5);
    build(ModelSpec {
        name: Some(format!("random-certified-{seed}")),
        states: labels("s", nx),
        actions: labels("a", nu),
        metric_x: MetricSpec::Named("line".into()),
        metric_u: MetricSpec::Named("line".into()),
        idio_noise: trivial_noise(),
        common_noise: noise(&[p_b, 1.0 - p_b]),
        transition: affine_from_vertices(&[good, bad], nx),
        cost,
    })
}

/// Random mu-affine model with small transition Lipschitz constant:
/// rows are `(1 - eps) nu_w0 + eps * V(x, u, mu)` with `V` affine in `mu`.
/// On the line metric over two states this gives `K_f <= eps`.
pub fn random_lipschitz(eps: f64, nw0: usize, seed: u64) -> AgentModel {
    let (nx, nu) = (2usize, 2usize);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let slices: Vec<Vec<Vec<Vec<Vec<f64>>>>> = (0..nw0)
        .map(|_| {
            let anchor = random_distribution(&mut rng, nx);
            (0..nx)
                .map(|_| {
                    (0..nu)
                        .map(|_| {
                            (0..nx)
                                .map(|_| {
                                    let v = random_distribution(&mut rng, nx);
                                    (0..nx).map(|z| (1.0 - eps) * anchor[z] + eps * v[z]).collect()
                                })
                                .collect()
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    let w0 = if nw0 == 1 {
        vec![1.0]
    } else {
        vec![1.0 / nw0 as f64; nw0]
    };
    let cost = random_cost(&mut rng, nx, nu, 1.0);
    build(ModelSpec {
        name: Some(format!("random-lipschitz-{seed}")),
        states: labels("s", nx),
        actions: labels("a", nu),
        metric_x: MetricSpec::Named("line".into()),
        metric_u: MetricSpec::Named("line".into()),
        idio_noise: trivial_noise(),
        common_noise: noise(&w0),
        transition: affine_from_vertices(&slices, nx),
        cost,
    })
}

/// Two-state, two-action model with idiosyncratic noise (each agent's move
/// fails with probability 0.3), as a deterministic update expression.
pub fn noisy_moves() -> AgentModel {
    build(ModelSpec {
        name: Some("noisy-moves".into()),
        states: labels("s", 2),
        actions: labels("a", 2),
        metric_x: MetricSpec::Named("line".into()),
        metric_u: MetricSpec::Named("line".into()),
        idio_noise: NoiseSpec {
            support: vec!["ok".into(), "fail".into()],
            probs: dec_vec(&[0.7, 0.3]),
        },
        common_noise: trivial_noise(),
        transition: TransitionSpec::Deterministic {
            expr: "w == 0 ? u : x".into(),
        },
        cost: CostSpec {
            table: Some(vec![dec_vec(&[0.0, 0.1]), dec_vec(&[0.3, 0.2])]),
            w1_to: Some(dec_vec(&[0.25, 0.75])),
            w1_weight: None,
        },
    })
}
