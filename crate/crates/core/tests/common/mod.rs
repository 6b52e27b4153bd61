#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_simplex(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let e: Vec<f64> = (0..n).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

/// Euclidean distances between random points in the unit square.
pub fn random_metric(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec<f64>> {
    let pts: Vec<(f64, f64)> = (0..n).map(|_| (rng.gen(), rng.gen())).collect();
    pts.iter()
        .map(|a| {
            pts.iter()
                .map(|b| ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt())
                .collect()
        })
        .collect()
}

/// Dense two-phase simplex with Bland's rule for `min c.x, A x = b, x >= 0`
/// (`b >= 0`). Returns the optimal objective.
pub fn simplex_min(a: &[Vec<f64>], b: &[f64], c: &[f64]) -> f64 {
    const EPS: f64 = 1e-12;
    let m = a.len();
    let nv = c.len();
    let cols = nv + m;
    let mut t: Vec<Vec<f64>> = (0..m)
        .map(|i| {
            let mut row = a[i].clone();
            row.extend((0..m).map(|k| f64::from(k == i)));
            row.push(b[i]);
            row
        })
        .collect();
    let mut basis: Vec<usize> = (nv..cols).collect();

    let pivot = |t: &mut Vec<Vec<f64>>, basis: &mut Vec<usize>, r: usize, j: usize| {
        let p = t[r][j];
        for v in t[r].iter_mut() {
            *v /= p;
        }
        let pr = t[r].clone();
        for (i, row) in t.iter_mut().enumerate() {
            if i != r && row[j] != 0.0 {
                let f = row[j];
                for (v, w) in row.iter_mut().zip(&pr) {
                    *v -= f * w;
                }
            }
        }
        basis[r] = j;
    };

    let run = |t: &mut Vec<Vec<f64>>, basis: &mut Vec<usize>, cost: &[f64], allowed: usize| loop {
        let enter = (0..allowed).find(|&j| {
            let r: f64 = cost[j] - (0..m).map(|i| cost[basis[i]] * t[i][j]).sum::<f64>();
            r < -1e-11
        });
        let Some(j) = enter else { break };
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..m {
            if t[i][j] > EPS {
                let ratio = t[i][cols] / t[i][j];
                leave = match leave {
                    Some((r, best)) if ratio > best + EPS => Some((r, best)),
                    Some((r, best)) if (ratio - best).abs() <= EPS && basis[r] < basis[i] => Some((r, best)),
                    _ => Some((i, ratio)),
                };
            }
        }
        let (r, _) = leave.expect("bounded program");
        pivot(t, basis, r, j);
    };

    // phase I on the artificial sum
    let phase1: Vec<f64> = (0..cols).map(|j| f64::from(j >= nv)).collect();
    run(&mut t, &mut basis, &phase1, cols);
    for i in 0..m {
        if basis[i] >= nv {
            if let Some(j) = (0..nv).find(|&j| t[i][j].abs() > 1e-9) {
                pivot(&mut t, &mut basis, i, j);
            }
        }
    }
    let mut phase2 = c.to_vec();
    phase2.extend(std::iter::repeat_n(0.0, m));
    run(&mut t, &mut basis, &phase2, nv);
    (0..m).map(|i| phase2[basis[i]] * t[i][cols]).sum()
}

/// Transportation LP for `W1(p, q)`.
pub fn lp_wasserstein(p: &[f64], q: &[f64], d: &[Vec<f64>]) -> f64 {
    let n = p.len();
    let mut a = Vec::new();
    let mut b = Vec::new();
    for i in 0..n {
        a.push((0..n * n).map(|k| f64::from(k / n == i)).collect());
        b.push(p[i]);
    }
    for j in 0..n {
        a.push((0..n * n).map(|k| f64::from(k % n == j)).collect());
        b.push(q[j]);
    }
    let c: Vec<f64> = (0..n * n).map(|k| d[k / n][k % n]).collect();
    simplex_min(&a, &b, &c)
}

/// `min over permutations s of (1/N) sum_i d(xs[i], ys[s(i)])`.
pub fn permutation_matching(xs: &[usize], ys: &[usize], d: &[Vec<f64>]) -> f64 {
    let n = xs.len();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = f64::INFINITY;
    permute(&mut perm, 0, &mut |p| {
        let c: f64 = (0..n).map(|i| d[xs[i]][ys[p[i]]]).sum();
        best = best.min(c);
    });
    best / n as f64
}

fn permute(p: &mut Vec<usize>, k: usize, f: &mut dyn FnMut(&[usize])) {
    if k == p.len() {
        f(p);
        return;
    }
    for i in k..p.len() {
        p.swap(k, i);
        permute(p, k + 1, f);
        p.swap(k, i);
    }
}

/// Agent-state vector sorted by state for a count vector.
pub fn expand(counts: &[u32]) -> Vec<usize> {
    counts
        .iter()
        .enumerate()
        .flat_map(|(x, &c)| std::iter::repeat_n(x, c as usize))
        .collect()
}

pub fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

pub fn random_policy_rows(rng: &mut ChaCha8Rng, sizes: &[usize]) -> Vec<usize> {
    sizes.iter().map(|&k| rng.gen_range(0..k)).collect()
}
