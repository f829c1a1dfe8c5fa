use egonet::graph::write_edges;
use egonet::metrics::{classify_user, local_reciprocity};
use egonet::synthgen::{generate, plant_report, GenConfig, LanguageShare};

/// Discrete power-law tail exponent by the continuous approximation of
/// the maximum-likelihood estimator.
fn tail_exponent(values: &[u64], kmin: u64) -> f64 {
    let tail: Vec<f64> = values.iter().filter(|&&k| k >= kmin).map(|&k| k as f64).collect();
    let s: f64 = tail.iter().map(|k| (k / (kmin as f64 - 0.5)).ln()).sum();
    1.0 + tail.len() as f64 / s
}

#[test]
fn follower_tail_matches_configured_exponent() {
    let cfg = GenConfig {
        n_ordinary: 10_000,
        degree_exponent: 2.5,
        exchange_fraction: 0.0,
        ordinary_reciprocity: 0.0,
        seed: 11,
        ..GenConfig::default()
    };
    let g = generate(&cfg).unwrap().graph;
    let k_in: Vec<u64> = g.ids().map(|u| g.degrees(u).unwrap().k_in).collect();
    let alpha = tail_exponent(&k_in, 20);
    assert!((alpha - 2.5).abs() <= 0.3, "fitted {alpha}");
}

#[test]
fn planted_labels_agree_with_classifier() {
    let cfg = GenConfig {
        n_ordinary: 20_000,
        n_type1: 4,
        n_type2: 4,
        languages: vec![LanguageShare::new("ja", 0.7), LanguageShare::new("en", 0.3)],
        exchange_fraction: 0.2,
        protected_fraction: 0.05,
        seed: 21,
        ..GenConfig::default()
    };
    let net = generate(&cfg).unwrap();
    let report = plant_report(&net).unwrap();
    assert_eq!((report.n_type1, report.n_type2), (4, 4));
    let labels = net.labels.unwrap().labels;
    for (&u, &label) in &labels {
        assert_eq!(classify_user(net.graph.degrees(u).unwrap()), label, "{u}");
    }
    assert_eq!(labels.len(), 8);
}

#[test]
fn byte_identical_output_per_seed() {
    let cfg = GenConfig { n_ordinary: 5000, seed: 77, ..GenConfig::default() };
    let dump = |cfg: &GenConfig| {
        let mut out = Vec::new();
        write_edges(&generate(cfg).unwrap().graph, &mut out).unwrap();
        out
    };
    assert_eq!(dump(&cfg), dump(&cfg));
}

#[test]
fn type2_reciprocity_tracks_config() {
    let cfg = GenConfig {
        n_ordinary: 20_000,
        n_type2: 5,
        reciprocity_type2: 0.9,
        exchange_fraction: 0.2,
        seed: 5,
        ..GenConfig::default()
    };
    let net = generate(&cfg).unwrap();
    for u in plant_report(&net).unwrap().type2 {
        let r = local_reciprocity(&net.graph, u).unwrap().value();
        // planted friends follow back with probability 0.9; a few thousand
        // links per user keep the estimate within a couple of points
        assert!((r - 0.9).abs() < 0.05, "{u}: {r}");
    }
}

#[test]
fn language_shares_follow_proportions() {
    let cfg = GenConfig {
        n_ordinary: 20_000,
        languages: vec![LanguageShare::new("ja", 0.8), LanguageShare::new("en", 0.2)],
        seed: 3,
        ..GenConfig::default()
    };
    let g = generate(&cfg).unwrap().graph;
    let ja = g.users().filter(|r| r.language == "ja").count() as f64;
    let n = g.user_count() as f64;
    let sd = (n * 0.8 * 0.2).sqrt();
    assert!((ja - 0.8 * n).abs() < 4.0 * sd);
}
