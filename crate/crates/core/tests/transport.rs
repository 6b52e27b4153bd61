mod common;

use mfc_core::measures::{compositions, product_metric, wasserstein1};
use proptest::prelude::*;

fn simplex(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..1.0, n).prop_map(|v| {
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect()
    })
}

fn line_metric(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| (0..n).map(|j| (i as f64 - j as f64).abs()).collect())
        .collect()
}

proptest! {
    #[test]
    fn symmetric_and_zero_on_diagonal(p in simplex(4), q in simplex(4)) {
        let d = line_metric(4);
        let a = wasserstein1(&p, &q, &d).unwrap();
        let b = wasserstein1(&q, &p, &d).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
        prop_assert!(wasserstein1(&p, &p, &d).unwrap().abs() < 1e-15);
    }

    #[test]
    fn triangle_inequality(p in simplex(5), q in simplex(5), r in simplex(5), seed in 0u64..1000) {
        let d = common::random_metric(&mut common::rng(seed), 5);
        let pq = wasserstein1(&p, &q, &d).unwrap();
        let qr = wasserstein1(&q, &r, &d).unwrap();
        let pr = wasserstein1(&p, &r, &d).unwrap();
        prop_assert!(pr <= pq + qr + 1e-12);
    }

    #[test]
    fn line_metric_matches_cdf_formula(p in simplex(6), q in simplex(6)) {
        let d = line_metric(6);
        let mut acc = 0.0;
        let mut cdf = 0.0;
        for i in 0..5 {
            cdf += p[i] - q[i];
            acc += f64::abs(cdf);
        }
        prop_assert!((wasserstein1(&p, &q, &d).unwrap() - acc).abs() < 1e-12);
    }

    #[test]
    fn agrees_with_lp(p in simplex(4), q in simplex(4), seed in 0u64..1000) {
        let d = common::random_metric(&mut common::rng(seed), 4);
        let w = wasserstein1(&p, &q, &d).unwrap();
        prop_assert!((w - common::lp_wasserstein(&p, &q, &d)).abs() < 1e-9);
    }
}

#[test]
fn empirical_measures_match_permutation_matching() {
    let d = vec![vec![0.0, 1.0, 2.5], vec![1.0, 0.0, 1.7], vec![2.5, 1.7, 0.0]];
    for n in 1..=4u32 {
        let all = compositions(n, 3);
        for a in &all {
            for b in &all {
                let p: Vec<f64> = a.iter().map(|&c| c as f64 / n as f64).collect();
                let q: Vec<f64> = b.iter().map(|&c| c as f64 / n as f64).collect();
                let w = wasserstein1(&p, &q, &d).unwrap();
                let m = common::permutation_matching(&common::expand(a), &common::expand(b), &d);
                assert!((w - m).abs() < 1e-12, "{a:?} {b:?}: {w} vs {m}");
            }
        }
    }
}

#[test]
fn product_metric_adds_components() {
    let dx = line_metric(2);
    let du = vec![vec![0.0, 3.0], vec![3.0, 0.0]];
    let d = product_metric(&dx, &du);
    // (x, u) = (0, 0) vs (1, 1)
    assert_eq!(d[0][3], 4.0);
    let p = [0.5, 0.0, 0.0, 0.5];
    let q = [0.0, 0.5, 0.5, 0.0];
    let w = wasserstein1(&p, &q, &d).unwrap();
    assert!((w - common::lp_wasserstein(&p, &q, &d)).abs() < 1e-12);
}
