//! Random-walk PageRank estimation, an exact power-iteration oracle, and
//! per-degree-band visit tables.
//!
//! The walker moves to a uniformly chosen friend and stops at users with
//! no friends. The oracle instead spreads dangling mass uniformly, so the
//! two agree only up to that difference.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{DirectedGraph, UserId};
use crate::metrics::TypeLabel;

#[derive(Debug, Error, PartialEq)]
pub enum WalkError {
    #[error("invalid walk config: {0}")]
    InvalidConfig(String),
    #[error("start user {0} not in graph")]
    UnknownStart(UserId),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WalkPolicy {
    /// Exactly `steps` moves unless a dead end comes first.
    Fixed { steps: u32 },
    /// Before each move the walk ends with probability `q`.
    Geometric { q: f64 },
}

impl WalkPolicy {
    pub const DEFAULT_STEPS: u32 = 10;
    pub const DEFAULT_Q: f64 = 1.0 / 11.0;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartSelection {
    #[default]
    UniformWithoutReplacement,
    UniformWithReplacement,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WalkConfig {
    pub policy: WalkPolicy,
    pub n_starts: usize,
    #[serde(default)]
    pub start_selection: StartSelection,
    pub rng_seed: u64,
}

impl Default for WalkConfig {
    fn default() -> Self {
        WalkConfig {
            policy: WalkPolicy::Fixed { steps: WalkPolicy::DEFAULT_STEPS },
            n_starts: 1500,
            start_selection: StartSelection::UniformWithoutReplacement,
            rng_seed: 0,
        }
    }
}

impl WalkConfig {
    pub fn validate(&self, pool: usize) -> Result<(), WalkError> {
        match self.policy {
            WalkPolicy::Fixed { steps: 0 } => return Err(WalkError::InvalidConfig("steps must be at least 1".into())),
            WalkPolicy::Geometric { q } if !(q > 0.0 && q < 1.0) => {
                return Err(WalkError::InvalidConfig(format!("q must lie in (0, 1), got {q}")))
            }
            _ => {}
        }
        if self.n_starts == 0 {
            return Err(WalkError::InvalidConfig("n_starts must be at least 1".into()));
        }
        if pool == 0 {
            return Err(WalkError::InvalidConfig("start pool is empty".into()));
        }
        if self.start_selection == StartSelection::UniformWithoutReplacement && self.n_starts > pool {
            return Err(WalkError::InvalidConfig(format!(
                "{} starts without replacement from a pool of {pool}",
                self.n_starts
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct VisitCounts {
    pub visits: BTreeMap<UserId, u64>,
    /// Moves along friend links.
    pub total_steps: u64,
    /// Walks that stopped at a user with no friends.
    pub terminated_walks: u64,
}

impl VisitCounts {
    pub fn total_visits(&self) -> u64 {
        self.visits.values().sum()
    }

    pub fn get(&self, u: UserId) -> u64 {
        self.visits.get(&u).copied().unwrap_or(0)
    }
}

#[derive(Clone, Default)]
struct Tally {
    visits: Vec<u64>,
    steps: u64,
    terminated: u64,
}

impl Tally {
    fn new(n: usize) -> Self {
        Tally { visits: vec![0; n], steps: 0, terminated: 0 }
    }

    fn merge(mut self, other: Tally) -> Tally {
        for (a, b) in self.visits.iter_mut().zip(other.visits) {
            *a += b;
        }
        self.steps += other.steps;
        self.terminated += other.terminated;
        self
    }
}

fn walk(g: &DirectedGraph, start: usize, policy: WalkPolicy, rng: &mut ChaCha8Rng, t: &mut Tally) {
    let mut at = start;
    t.visits[at] += 1;
    let mut moved = 0u32;
    loop {
        let go_on = match policy {
            WalkPolicy::Fixed { steps } => moved < steps,
            WalkPolicy::Geometric { q } => !rng.random_bool(q),
        };
        if !go_on {
            return;
        }
        let friends = g.out_indices(at);
        if friends.is_empty() {
            t.terminated += 1;
            return;
        }
        at = friends[rng.random_range(0..friends.len())] as usize;
        t.visits[at] += 1;
        t.steps += 1;
        moved += 1;
    }
}

fn walk_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn starts(g: &DirectedGraph, cfg: &WalkConfig, pool: &[UserId]) -> Result<Vec<usize>, WalkError> {
    cfg.validate(pool.len())?;
    let pool: Vec<usize> = pool
        .iter()
        .map(|&u| g.index_of(u).ok_or(WalkError::UnknownStart(u)))
        .collect::<Result<_, _>>()?;
    // stream 0 picks the starts; walk i uses stream i + 1
    let mut rng = walk_rng(cfg.rng_seed, 0);
    Ok(match cfg.start_selection {
        StartSelection::UniformWithoutReplacement => {
            sample(&mut rng, pool.len(), cfg.n_starts).into_iter().map(|i| pool[i]).collect()
        }
        StartSelection::UniformWithReplacement => {
            (0..cfg.n_starts).map(|_| pool[rng.random_range(0..pool.len())]).collect()
        }
    })
}

fn finish(g: &DirectedGraph, t: Tally) -> VisitCounts {
    VisitCounts {
        visits: t.visits.iter().enumerate().filter(|(_, &c)| c > 0).map(|(i, &c)| (g.id_at(i), c)).collect(),
        total_steps: t.steps,
        terminated_walks: t.terminated,
    }
}

/// Runs one walk per selected start, in parallel. Every occupied position,
/// the start included, counts as a visit. The result does not depend on
/// thread scheduling.
pub fn rw_visit_counts(g: &DirectedGraph, cfg: &WalkConfig, start_pool: &[UserId]) -> Result<VisitCounts, WalkError> {
    let starts = starts(g, cfg, start_pool)?;
    let n = g.user_count();
    let tally = starts
        .par_iter()
        .enumerate()
        .fold(
            || Tally::new(n),
            |mut t, (i, &s)| {
                walk(g, s, cfg.policy, &mut walk_rng(cfg.rng_seed, i as u64 + 1), &mut t);
                t
            },
        )
        .reduce(|| Tally::new(n), Tally::merge);
    Ok(finish(g, tally))
}

/// Single-threaded reference for [`rw_visit_counts`].
pub fn rw_visit_counts_serial(
    g: &DirectedGraph,
    cfg: &WalkConfig,
    start_pool: &[UserId],
) -> Result<VisitCounts, WalkError> {
    let starts = starts(g, cfg, start_pool)?;
    let mut t = Tally::new(g.user_count());
    for (i, &s) in starts.iter().enumerate() {
        walk(g, s, cfg.policy, &mut walk_rng(cfg.rng_seed, i as u64 + 1), &mut t);
    }
    Ok(finish(g, t))
}

/// Visit counts normalized to sum to 1, over every user of `g`.
pub fn visit_frequencies(g: &DirectedGraph, counts: &VisitCounts) -> Vec<f64> {
    let total = counts.total_visits().max(1) as f64;
    g.ids().map(|u| counts.get(u) as f64 / total).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PageRank {
    pub scores: BTreeMap<UserId, f64>,
    pub iterations: usize,
}

impl PageRank {
    pub fn write_csv<W: Write + ?Sized>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "id,pagerank")?;
        for (id, s) in &self.scores {
            writeln!(w, "{id},{s}")?;
        }
        Ok(())
    }

    /// Scores in graph index order.
    pub fn dense(&self) -> Vec<f64> {
        self.scores.values().copied().collect()
    }
}

const MAX_ITERATIONS: usize = 100_000;

/// Power iteration with teleport probability `q` and dangling mass spread
/// uniformly; stops once the L1 change falls below `tol`.
pub fn exact_pagerank(g: &DirectedGraph, q: f64, tol: f64) -> Result<PageRank, WalkError> {
    if !(q > 0.0 && q < 1.0) {
        return Err(WalkError::InvalidConfig(format!("q must lie in (0, 1), got {q}")));
    }
    if !(tol > 0.0) {
        return Err(WalkError::InvalidConfig("tol must be positive".into()));
    }
    let n = g.user_count();
    if n == 0 {
        return Ok(PageRank { scores: BTreeMap::new(), iterations: 0 });
    }
    let nf = n as f64;
    let mut x = vec![1.0 / nf; n];
    let mut next = vec![0.0; n];
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let dangling: f64 = (0..n).filter(|&i| g.out_indices(i).is_empty()).map(|i| x[i]).sum();
        let base = q / nf + (1.0 - q) * dangling / nf;
        for (v, slot) in next.iter_mut().enumerate() {
            let inflow: f64 = g
                .in_indices(v)
                .iter()
                .map(|&u| x[u as usize] / g.out_indices(u as usize).len() as f64)
                .sum();
            *slot = base + (1.0 - q) * inflow;
        }
        let delta: f64 = x.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut x, &mut next);
        if delta < tol {
            break;
        }
    }
    let s: f64 = x.iter().sum();
    Ok(PageRank { scores: g.ids().zip(x.iter().map(|v| v / s)).collect(), iterations })
}

/// Pearson correlation; `None` when either side has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    assert_eq!(x.len(), y.len(), "pearson: length mismatch");
    if x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}

/// Half-open `k_in` interval `[lo, hi)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DegreeBand {
    pub lo: u64,
    pub hi: u64,
}

impl DegreeBand {
    pub fn contains(&self, k_in: u64) -> bool {
        self.lo <= k_in && k_in < self.hi
    }

    /// The four bands 2500-7500, 7500-12500, 12500-17500, 17500-22500.
    pub fn standard() -> Vec<DegreeBand> {
        (0..4).map(|i| DegreeBand { lo: 2500 + 5000 * i, hi: 7500 + 5000 * i }).collect()
    }
}

impl fmt::Display for DegreeBand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.lo, self.hi)
    }
}

impl FromStr for DegreeBand {
    type Err = WalkError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || WalkError::InvalidConfig(format!("bad band {s:?}; expected lo-hi"));
        let (lo, hi) = s.trim().split_once('-').ok_or_else(bad)?;
        let band = DegreeBand { lo: lo.trim().parse().map_err(|_| bad())?, hi: hi.trim().parse().map_err(|_| bad())? };
        if band.lo >= band.hi {
            return Err(bad());
        }
        Ok(band)
    }
}

/// Parses a comma-separated band list and checks it is ordered and
/// non-overlapping.
pub fn parse_bands(s: &str) -> Result<Vec<DegreeBand>, WalkError> {
    let bands: Vec<DegreeBand> = s.split(',').map(str::parse).collect::<Result<_, _>>()?;
    if bands.windows(2).any(|w| w[0].hi > w[1].lo) {
        return Err(WalkError::InvalidConfig("bands must be ordered and non-overlapping".into()));
    }
    Ok(bands)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BandRow {
    pub band_lo: u64,
    pub band_hi: u64,
    /// Users per type after balancing; users of both types otherwise.
    pub n_users: usize,
    pub type1_visits: u64,
    pub type2_visits: u64,
}

/// Sums visits to labeled users per band. With `balance = Some(seed)` the
/// larger type in each band is subsampled to the size of the smaller.
pub fn band_visit_table(
    g: &DirectedGraph,
    counts: &VisitCounts,
    labels: &BTreeMap<UserId, TypeLabel>,
    bands: &[DegreeBand],
    balance: Option<u64>,
) -> Result<Vec<BandRow>, WalkError> {
    let mut rows = Vec::with_capacity(bands.len());
    for (bi, band) in bands.iter().enumerate() {
        let mut t1 = Vec::new();
        let mut t2 = Vec::new();
        for (&u, &label) in labels {
            let d = g.degrees(u).map_err(|_| WalkError::UnknownStart(u))?;
            if !band.contains(d.k_in) {
                continue;
            }
            match label {
                TypeLabel::Type1 => t1.push(u),
                TypeLabel::Type2 => t2.push(u),
                TypeLabel::Neither => {}
            }
        }
        let n_users = match balance {
            Some(seed) => {
                let m = t1.len().min(t2.len());
                let mut rng = walk_rng(seed, bi as u64);
                for side in [&mut t1, &mut t2] {
                    if side.len() > m {
                        let keep = sample(&mut rng, side.len(), m);
                        let kept: Vec<UserId> = keep.into_iter().map(|i| side[i]).collect();
                        *side = kept;
                    }
                }
                m
            }
            None => t1.len() + t2.len(),
        };
        let sum = |v: &[UserId]| v.iter().map(|&u| counts.get(u)).sum();
        rows.push(BandRow {
            band_lo: band.lo,
            band_hi: band.hi,
            n_users,
            type1_visits: sum(&t1),
            type2_visits: sum(&t2),
        });
    }
    Ok(rows)
}

pub fn write_band_table<W: Write + ?Sized>(rows: &[BandRow], w: &mut W) -> io::Result<()> {
    writeln!(w, "band_lo,band_hi,n_users,type1_visits,type2_visits")?;
    for r in rows {
        writeln!(w, "{},{},{},{},{}", r.band_lo, r.band_hi, r.n_users, r.type1_visits, r.type2_visits)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{GraphBuilder, UserRecord};

    fn graph(n: u64, edges: &[(u64, u64)]) -> DirectedGraph {
        let mut b = GraphBuilder::new();
        for u in 1..=n {
            b.add_user(UserRecord::new(UserId(u), "en"));
        }
        for &(a, c) in edges {
            b.add_edge(UserId(a), UserId(c)).unwrap();
        }
        b.build().unwrap()
    }

    fn cycle(n: u64) -> DirectedGraph {
        graph(n, &(1..=n).map(|i| (i, i % n + 1)).collect::<Vec<_>>())
    }

    fn fixed(n_starts: usize, sel: StartSelection) -> WalkConfig {
        WalkConfig { policy: WalkPolicy::Fixed { steps: 10 }, n_starts, start_selection: sel, rng_seed: 5 }
    }

    #[test]
    fn isolated_node_walk() {
        let g = graph(1, &[]);
        let c = rw_visit_counts(&g, &fixed(1, StartSelection::UniformWithoutReplacement), &[UserId(1)]).unwrap();
        assert_eq!(c.get(UserId(1)), 1);
        assert_eq!((c.terminated_walks, c.total_steps), (1, 0));
    }

    #[test]
    fn two_cycle_alternates() {
        let g = cycle(2);
        let c = rw_visit_counts(&g, &fixed(1, StartSelection::UniformWithoutReplacement), &[UserId(1)]).unwrap();
        assert_eq!(c.total_visits(), 11);
        assert_eq!((c.get(UserId(1)), c.get(UserId(2))), (6, 5));
        assert_eq!(c.terminated_walks, 0);
    }

    #[test]
    fn cycle_frequencies_are_uniform() {
        let g = cycle(20);
        let pool: Vec<UserId> = g.ids().collect();
        let cfg = fixed(40_000, StartSelection::UniformWithReplacement);
        let c = rw_visit_counts(&g, &cfg, &pool).unwrap();
        let total = c.total_visits() as f64;
        assert_eq!(total, 440_000.0);
        // visits to a node are at most 11-fold correlated copies of a
        // Binomial(n_starts, 1/20) start count
        let expect = total / 20.0;
        let sd = 11.0 * (40_000.0f64 * 0.05 * 0.95).sqrt();
        for u in g.ids() {
            assert!((c.get(u) as f64 - expect).abs() < 4.0 * sd, "{u}: {}", c.get(u));
        }
    }

    #[test]
    fn parallel_equals_serial() {
        let g = graph(6, &[(1, 2), (2, 3), (3, 1), (3, 4), (4, 5), (5, 6), (6, 2)]);
        let pool: Vec<UserId> = g.ids().collect();
        for policy in [WalkPolicy::Fixed { steps: 10 }, WalkPolicy::Geometric { q: 1.0 / 11.0 }] {
            let cfg = WalkConfig {
                policy,
                n_starts: 5000,
                start_selection: StartSelection::UniformWithReplacement,
                rng_seed: 8,
            };
            assert_eq!(rw_visit_counts(&g, &cfg, &pool).unwrap(), rw_visit_counts_serial(&g, &cfg, &pool).unwrap());
        }
    }

    #[test]
    fn fixed_policy_visit_bound() {
        let g = graph(5, &[(1, 2), (2, 3), (3, 1), (4, 5)]);
        let pool: Vec<UserId> = g.ids().collect();
        let c = rw_visit_counts(&g, &fixed(5, StartSelection::UniformWithoutReplacement), &pool).unwrap();
        assert!(c.total_visits() <= 5 * 11);
        assert_eq!(c.terminated_walks, 2);
        assert_eq!(c.total_visits(), c.total_steps + 5);
    }

    #[test]
    fn config_errors() {
        let g = cycle(3);
        let pool: Vec<UserId> = g.ids().collect();
        let over = fixed(4, StartSelection::UniformWithoutReplacement);
        assert!(matches!(rw_visit_counts(&g, &over, &pool), Err(WalkError::InvalidConfig(_))));
        let zero = fixed(0, StartSelection::UniformWithReplacement);
        assert!(rw_visit_counts(&g, &zero, &pool).is_err());
        let bad_q = WalkConfig { policy: WalkPolicy::Geometric { q: 1.0 }, ..fixed(1, StartSelection::default()) };
        assert!(rw_visit_counts(&g, &bad_q, &pool).is_err());
        assert_eq!(
            rw_visit_counts(&g, &fixed(1, StartSelection::default()), &[UserId(99)]),
            Err(WalkError::UnknownStart(UserId(99)))
        );
    }

    #[test]
    fn cycle_pagerank_is_uniform() {
        let pr = exact_pagerank(&cycle(7), 0.15, 1e-14).unwrap();
        for s in pr.scores.values() {
            assert!((s - 1.0 / 7.0).abs() < 1e-12);
        }
    }

    #[test]
    fn two_node_closed_form() {
        // pi_1 = q/2 + (1-q) pi_2 / 2 with pi_1 + pi_2 = 1 gives 1 / (3 - q)
        let q = 0.15;
        let pr = exact_pagerank(&graph(2, &[(1, 2)]), q, 1e-15).unwrap();
        let p1 = 1.0 / (3.0 - q);
        assert!((pr.scores[&UserId(1)] - p1).abs() < 1e-12);
        assert!((pr.scores[&UserId(2)] - (1.0 - p1)).abs() < 1e-12);
    }

    #[test]
    fn bands_parse_and_validate() {
        assert_eq!(parse_bands("2500-7500,7500-12500,12500-17500,17500-22500").unwrap(), DegreeBand::standard());
        assert!(parse_bands("10-5").is_err());
        assert!(parse_bands("0-10,5-20").is_err());
        assert!(parse_bands("abc").is_err());
        assert_eq!(DegreeBand::standard()[0].to_string(), "2500-7500");
    }

    #[test]
    fn empty_labels_give_zero_rows() {
        let g = cycle(3);
        let rows = band_visit_table(&g, &VisitCounts::default(), &BTreeMap::new(), &DegreeBand::standard(), Some(1))
            .unwrap();
        assert!(rows.iter().all(|r| r.n_users == 0 && r.type1_visits == 0 && r.type2_visits == 0));
        let mut out = Vec::new();
        write_band_table(&rows[..1], &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "band_lo,band_hi,n_users,type1_visits,type2_visits\n2500,7500,0,0,0\n");
    }

    #[test]
    fn balancing_subsamples_larger_type() {
        // users 1..=3 type 1, 4..=8 type 2, all with k_in = 0 in band 0-10
        let g = graph(8, &[]);
        let labels: BTreeMap<UserId, TypeLabel> =
            (1..=8).map(|u| (UserId(u), if u <= 3 { TypeLabel::Type1 } else { TypeLabel::Type2 })).collect();
        let counts = VisitCounts { visits: (1..=8).map(|u| (UserId(u), 1)).collect(), ..Default::default() };
        let band = [DegreeBand { lo: 0, hi: 10 }];
        let rows = band_visit_table(&g, &counts, &labels, &band, Some(3)).unwrap();
        assert_eq!((rows[0].n_users, rows[0].type1_visits, rows[0].type2_visits), (3, 3, 3));
        let rows = band_visit_table(&g, &counts, &labels, &band, None).unwrap();
        assert_eq!((rows[0].n_users, rows[0].type1_visits, rows[0].type2_visits), (8, 3, 5));
    }

    #[test]
    fn pearson_basics() {
        assert!((pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-15);
        assert_eq!(pearson(&[1.0, 1.0], &[1.0, 2.0]), None);
    }
}
