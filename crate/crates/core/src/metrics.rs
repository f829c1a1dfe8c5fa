//! Per-user and per-population network quantities.
//!
//! Ratio-valued metrics return a [`Fraction`] so callers can keep exact
//! counts; [`Fraction::value`] gives the real number.

use std::collections::HashSet;

use num_bigint::BigInt;
use num_rational::BigRational;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Degrees, DirectedGraph, GraphError, UserId};

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("empty population: {0}")]
    EmptyPopulation(String),
    #[error("metric undefined for user {user}: {reason}")]
    Undefined { user: UserId, reason: &'static str },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// An exact ratio of two counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fraction {
    pub num: u64,
    pub den: u64,
}

impl Fraction {
    pub fn new(num: u64, den: u64) -> Self {
        debug_assert!(den > 0);
        Fraction { num, den }
    }

    pub fn value(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    pub fn to_big(&self) -> BigRational {
        BigRational::new(BigInt::from(self.num), BigInt::from(self.den))
    }
}

/// Ratio `num/den` used by the diagonal condition `k_out/r <= k_in <= r*k_out`.
/// Kept rational so that boundary cases compare exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiagonalRatio {
    pub num: u64,
    pub den: u64,
}

impl Default for DiagonalRatio {
    fn default() -> Self {
        DiagonalRatio { num: 11, den: 10 }
    }
}

impl DiagonalRatio {
    /// Both inequalities are inclusive.
    pub fn contains(&self, d: Degrees) -> bool {
        let (k_in, k_out) = (d.k_in as u128, d.k_out as u128);
        let (num, den) = (self.num as u128, self.den as u128);
        k_out * den <= k_in * num && k_in * den <= k_out * num
    }
}

/// Inclusive integer interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntRange {
    pub lo: u64,
    pub hi: u64,
}

impl IntRange {
    pub const fn new(lo: u64, hi: u64) -> Self {
        IntRange { lo, hi }
    }

    pub fn contains(&self, v: u64) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn is_empty(&self) -> bool {
        self.lo > self.hi
    }
}

/// Thresholds of the two-type taxonomy. Defaults are the standard ones:
/// type 1 is `2500 <= k_in <= 7500, k_out <= 500`; type 2 is on the
/// diagonal with `5000 <= k_in + k_out <= 15000`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TypeThresholds {
    pub type1_kin: IntRange,
    pub type1_kout_max: u64,
    pub type2_sum: IntRange,
    pub diagonal: DiagonalRatio,
}

impl Default for TypeThresholds {
    fn default() -> Self {
        TypeThresholds {
            type1_kin: IntRange::new(2500, 7500),
            type1_kout_max: 500,
            type2_sum: IntRange::new(5000, 15000),
            diagonal: DiagonalRatio::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TypeLabel {
    Type1,
    Type2,
    Neither,
}

impl TypeLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            TypeLabel::Type1 => "type1",
            TypeLabel::Type2 => "type2",
            TypeLabel::Neither => "neither",
        }
    }
}

impl TypeThresholds {
    pub fn is_type1(&self, d: Degrees) -> bool {
        self.type1_kin.contains(d.k_in) && d.k_out <= self.type1_kout_max
    }

    pub fn is_type2(&self, d: Degrees) -> bool {
        self.diagonal.contains(d) && self.type2_sum.contains(d.k_in + d.k_out)
    }

    /// Type 1 is tested first; with the default thresholds the two regions
    /// are disjoint, so the order only matters for custom overrides.
    pub fn classify(&self, d: Degrees) -> TypeLabel {
        if self.is_type1(d) {
            TypeLabel::Type1
        } else if self.is_type2(d) {
            TypeLabel::Type2
        } else {
            TypeLabel::Neither
        }
    }
}

/// Classifies with the default thresholds.
pub fn classify_user(d: Degrees) -> TypeLabel {
    TypeThresholds::default().classify(d)
}

fn above(d: &Degrees, threshold: u64) -> bool {
    d.k_in > threshold && d.k_out > threshold
}

/// Mean of `min(k_in, k_out) / max(k_in, k_out)` over users with both
/// degrees strictly above `threshold`.
pub fn degree_ratio(population: &[Degrees], threshold: u64) -> Result<f64, MetricError> {
    let ratios: Vec<f64> = population
        .iter()
        .filter(|d| above(d, threshold))
        .map(|d| d.k_in.min(d.k_out) as f64 / d.k_in.max(d.k_out) as f64)
        .collect();
    if ratios.is_empty() {
        return Err(MetricError::EmptyPopulation(format!("no user with k_in, k_out > {threshold}")));
    }
    Ok(ratios.iter().sum::<f64>() / ratios.len() as f64)
}

/// Same as [`degree_ratio`] in exact rational arithmetic.
pub fn degree_ratio_exact(population: &[Degrees], threshold: u64) -> Result<BigRational, MetricError> {
    let mut sum = BigRational::from_integer(BigInt::from(0));
    let mut n = 0u64;
    for d in population.iter().filter(|d| above(d, threshold)) {
        sum += BigRational::new(BigInt::from(d.k_in.min(d.k_out)), BigInt::from(d.k_in.max(d.k_out)));
        n += 1;
    }
    if n == 0 {
        return Err(MetricError::EmptyPopulation(format!("no user with k_in, k_out > {threshold}")));
    }
    Ok(sum / BigRational::from_integer(BigInt::from(n)))
}

/// Fraction of users above `threshold` that lie on the diagonal.
pub fn diagonal_fraction_with(
    population: &[Degrees],
    threshold: u64,
    diagonal: DiagonalRatio,
) -> Result<Fraction, MetricError> {
    let mut den = 0;
    let mut num = 0;
    for d in population.iter().filter(|d| above(d, threshold)) {
        den += 1;
        if diagonal.contains(*d) {
            num += 1;
        }
    }
    if den == 0 {
        return Err(MetricError::EmptyPopulation(format!("no user with k_in, k_out > {threshold}")));
    }
    Ok(Fraction::new(num, den))
}

pub fn diagonal_fraction(population: &[Degrees], threshold: u64) -> Result<Fraction, MetricError> {
    diagonal_fraction_with(population, threshold, DiagonalRatio::default())
}

fn index(g: &DirectedGraph, u: UserId) -> Result<usize, MetricError> {
    g.index_of(u).ok_or(MetricError::Graph(GraphError::NotFound(u)))
}

/// Number of friends of the user at `ix` that follow it back.
fn reciprocated_count(g: &DirectedGraph, ix: usize) -> u64 {
    // both lists are sorted: count the intersection with a merge
    let outs = g.out_indices(ix);
    let ins = g.in_indices(ix);
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < outs.len() && j < ins.len() {
        match outs[i].cmp(&ins[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

/// Fraction of `u`'s friends that follow `u` back.
pub fn local_reciprocity(g: &DirectedGraph, u: UserId) -> Result<Fraction, MetricError> {
    let ix = index(g, u)?;
    let k_out = g.out_indices(ix).len() as u64;
    if k_out == 0 {
        return Err(MetricError::Undefined { user: u, reason: "k_out = 0" });
    }
    Ok(Fraction::new(reciprocated_count(g, ix), k_out))
}

/// Reciprocal links held by `follower`, divided by its `k_out`.
///
/// Every reciprocal link is also an out-link, so this equals the share of
/// the follower's friends that follow it back.
pub fn follower_reciprocity(g: &DirectedGraph, follower: UserId) -> Result<Fraction, MetricError> {
    local_reciprocity(g, follower)
}

/// `(follower, k_out(follower))` for every follower of `u`.
pub fn follower_outdegrees(g: &DirectedGraph, u: UserId) -> Result<Vec<(UserId, u64)>, MetricError> {
    let ix = index(g, u)?;
    Ok(g
        .in_indices(ix)
        .iter()
        .map(|&f| (g.id_at(f as usize), g.out_indices(f as usize).len() as u64))
        .collect())
}

/// Counts unordered pairs in `members` joined by a reciprocal link.
fn reciprocal_pairs_among(g: &DirectedGraph, members: &[u32]) -> u64 {
    let set: HashSet<u32> = members.iter().copied().collect();
    let mut pairs = 0;
    for &a in members {
        for &b in g.out_indices(a as usize) {
            if b > a && set.contains(&b) && g.has_edge_ix(b as usize, a as usize) {
                pairs += 1;
            }
        }
    }
    pairs
}

/// Local clustering coefficient: follower pairs of `u` linked reciprocally,
/// over `k_in(k_in - 1) / 2`. The followers only need to follow `u`; the
/// reciprocity requirement is on the link between the two followers.
pub fn local_clustering(g: &DirectedGraph, u: UserId) -> Result<Fraction, MetricError> {
    let ix = index(g, u)?;
    let followers = g.in_indices(ix);
    let k = followers.len() as u64;
    if k < 2 {
        return Err(MetricError::Undefined { user: u, reason: "k_in < 2" });
    }
    Ok(Fraction::new(reciprocal_pairs_among(g, followers), k * (k - 1) / 2))
}

/// Among followers of `u` with both degrees above `threshold`, the share on
/// the diagonal.
pub fn type2prime_fraction_with(
    g: &DirectedGraph,
    u: UserId,
    threshold: u64,
    diagonal: DiagonalRatio,
) -> Result<Fraction, MetricError> {
    let ix = index(g, u)?;
    let degrees: Vec<Degrees> = g.in_indices(ix).iter().map(|&f| g.degrees_at(f as usize)).collect();
    diagonal_fraction_with(&degrees, threshold, diagonal).map_err(|_| {
        MetricError::EmptyPopulation(format!("no follower of {u} with k_in, k_out > {threshold}"))
    })
}

pub fn type2prime_fraction(g: &DirectedGraph, u: UserId, threshold: u64) -> Result<Fraction, MetricError> {
    type2prime_fraction_with(g, u, threshold, DiagonalRatio::default())
}

/// Metric evaluated on each sampled follower.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FollowerMetric {
    /// The follower's own reciprocity.
    Reciprocity,
    /// The follower's `k_out`.
    OutDegree,
    /// The follower's own local clustering coefficient.
    Clustering,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FollowerSample {
    pub values: Vec<(UserId, f64)>,
    /// Sampled followers for which the metric was undefined.
    pub skipped: usize,
}

impl FollowerSample {
    pub fn scores(&self) -> Vec<f64> {
        self.values.iter().map(|&(_, v)| v).collect()
    }
}

/// Draws `min(n, k_in(u))` followers of `u` uniformly without replacement
/// and evaluates `metric` on each. Sampled followers are visited in
/// ascending ID order.
pub fn sample_followers_metric(
    g: &DirectedGraph,
    u: UserId,
    n: usize,
    metric: FollowerMetric,
    rng_seed: u64,
) -> Result<FollowerSample, MetricError> {
    let ix = index(g, u)?;
    let followers = g.in_indices(ix);
    let chosen = sample_indices(followers, n, rng_seed);
    let mut values = Vec::with_capacity(chosen.len());
    let mut skipped = 0;
    for f in chosen {
        let fid = g.id_at(f as usize);
        let v = match metric {
            FollowerMetric::Reciprocity => follower_reciprocity(g, fid).map(|r| r.value()),
            FollowerMetric::OutDegree => Ok(g.out_indices(f as usize).len() as f64),
            FollowerMetric::Clustering => local_clustering(g, fid).map(|c| c.value()),
        };
        match v {
            Ok(v) => values.push((fid, v)),
            Err(MetricError::Undefined { .. }) => skipped += 1,
            Err(e) => return Err(e),
        }
    }
    Ok(FollowerSample { values, skipped })
}

/// Clustering coefficient of `u` estimated on `min(n, k_in)` sampled
/// followers: reciprocal pairs among the sample over `m(m - 1) / 2`.
pub fn sampled_local_clustering(
    g: &DirectedGraph,
    u: UserId,
    n: usize,
    rng_seed: u64,
) -> Result<Fraction, MetricError> {
    let ix = index(g, u)?;
    let chosen = sample_indices(g.in_indices(ix), n, rng_seed);
    let m = chosen.len() as u64;
    if m < 2 {
        return Err(MetricError::Undefined { user: u, reason: "fewer than 2 sampled followers" });
    }
    Ok(Fraction::new(reciprocal_pairs_among(g, &chosen), m * (m - 1) / 2))
}

fn sample_indices(pool: &[u32], n: usize, rng_seed: u64) -> Vec<u32> {
    if n >= pool.len() {
        return pool.to_vec();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut chosen: Vec<u32> = sample(&mut rng, pool.len(), n).into_iter().map(|i| pool[i]).collect();
    chosen.sort_unstable();
    chosen
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Some((mean, var.sqrt()))
}
