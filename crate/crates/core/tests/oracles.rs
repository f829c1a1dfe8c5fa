use std::collections::HashSet;

use egonet::metrics::{local_clustering, local_reciprocity, sample_followers_metric, FollowerMetric, MetricError};
use egonet::pagerank::exact_pagerank;
use egonet::{DirectedGraph, GraphBuilder, UserId, UserRecord};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_graph(n: u64, p: f64, seed: u64) -> (DirectedGraph, HashSet<(u64, u64)>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = GraphBuilder::new();
    let mut edges = HashSet::new();
    for u in 0..n {
        b.add_user(UserRecord::new(UserId(u), "en"));
        for v in 0..n {
            if u != v && rng.random_bool(p) {
                b.add_edge(UserId(u), UserId(v)).unwrap();
                edges.insert((u, v));
            }
        }
    }
    (b.build().unwrap(), edges)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn clustering_matches_triangle_enumeration(n in 2u64..=50, p in 0.02f64..0.6, seed in any::<u64>()) {
        let (g, e) = random_graph(n, p, seed);
        for u in 0..n {
            let followers: Vec<u64> = (0..n).filter(|&a| e.contains(&(a, u))).collect();
            let k = followers.len() as u64;
            let got = local_clustering(&g, UserId(u));
            if k < 2 {
                prop_assert!(matches!(got, Err(MetricError::Undefined { .. })), "k_in {} should be undefined", k);
                continue;
            }
            let mut tri = 0u64;
            for a in 0..n {
                for b in a + 1..n {
                    if e.contains(&(a, u)) && e.contains(&(b, u)) && e.contains(&(a, b)) && e.contains(&(b, a)) {
                        tri += 1;
                    }
                }
            }
            let f = got.unwrap();
            // cross-multiplied to compare the ratios exactly
            prop_assert_eq!(f.num as u128 * (k * (k - 1) / 2) as u128, tri as u128 * f.den as u128);
        }
    }

    #[test]
    fn reciprocity_never_drops_when_friends_follow_back(n in 3u64..=30, seed in any::<u64>()) {
        let (g, e) = random_graph(n, 0.3, seed);
        for u in 0..n {
            let Ok(before) = local_reciprocity(&g, UserId(u)) else { continue };
            let Some(&(_, v)) = e.iter().find(|&&(a, b)| a == u && !e.contains(&(b, a))) else { continue };
            let mut b = GraphBuilder::new();
            for x in 0..n {
                b.add_user(UserRecord::new(UserId(x), "en"));
            }
            for &(a, c) in e.iter().chain([(v, u)].iter()) {
                b.add_edge(UserId(a), UserId(c)).unwrap();
            }
            let after = local_reciprocity(&b.build().unwrap(), UserId(u)).unwrap();
            prop_assert!(after.value() >= before.value());
        }
    }
}

#[test]
fn oracle_matches_dense_linear_solve() {
    let q = 1.0 / 11.0;
    let (g, e) = random_graph(200, 0.02, 99);
    let n = g.user_count();
    // (I - (1-q) P^T) x = q/n with dangling columns spread uniformly
    let mut m = DMatrix::<f64>::identity(n, n);
    let kout: Vec<usize> = (0..n).map(|u| e.iter().filter(|&&(a, _)| a == u as u64).count()).collect();
    for j in 0..n {
        if kout[j] == 0 {
            for i in 0..n {
                m[(i, j)] -= (1.0 - q) / n as f64;
            }
        }
    }
    for &(a, b) in &e {
        m[(b as usize, a as usize)] -= (1.0 - q) / kout[a as usize] as f64;
    }
    let rhs = DVector::from_element(n, q / n as f64);
    let x = m.lu().solve(&rhs).unwrap();
    let pr = exact_pagerank(&g, q, 1e-13).unwrap();
    let total: f64 = pr.scores.values().sum();
    assert!((total - 1.0).abs() < 1e-9);
    for (i, s) in pr.dense().iter().enumerate() {
        assert!(*s >= 0.0);
        assert!((s - x[i]).abs() < 1e-8, "node {i}: {s} vs {}", x[i]);
    }
}

#[test]
fn full_follower_sample_equals_exhaustive_mean() {
    let (g, _) = random_graph(40, 0.2, 7);
    for u in g.ids() {
        let all = sample_followers_metric(&g, u, usize::MAX, FollowerMetric::Reciprocity, 1).unwrap();
        let mut exhaustive = Vec::new();
        for f in g.followers(u).unwrap() {
            if let Ok(r) = local_reciprocity(&g, f) {
                exhaustive.push(r.value());
            }
        }
        assert_eq!(all.scores(), exhaustive);
        let again = sample_followers_metric(&g, u, 3, FollowerMetric::Reciprocity, 5).unwrap();
        assert_eq!(again, sample_followers_metric(&g, u, 3, FollowerMetric::Reciprocity, 5).unwrap());
    }
}
