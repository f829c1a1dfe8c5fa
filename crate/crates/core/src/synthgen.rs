//! Synthetic followership networks with planted type-1 and type-2 users.
//!
//! Ordinary users come in two behaviours:
//!
//! * *regular* users, whose follows are drawn Chung-Lu style: each friend
//!   slot picks a target with probability proportional to the target's
//!   follower weight. `k_out` and the follower weight have power-law
//!   marginals joined by a Gaussian copula.
//! * *exchange* users, who follow other exchange users and follow back most
//!   of the users that follow them. They end up near the diagonal
//!   `k_in ≈ k_out`.
//!
//! Planted type-1 users are followed by users drawn uniformly from the
//! ordinary population and follow a few popular accounts. Planted type-2
//! users trade reciprocal links with exchange users. After planting, a
//! repair pass removes ordinary-ordinary edges until no ordinary user falls
//! in either type region and the platform follow cap holds.

use std::collections::{BTreeMap, HashSet, VecDeque};
use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{from_dense, DirectedGraph, GraphError, UserId, UserRecord};
use crate::io::write_atomic;
use crate::metrics::{IntRange, TypeLabel, TypeThresholds};

/// Lowest assigned user ID.
pub const FIRST_USER_ID: u64 = 12;

#[derive(Debug, Error)]
pub enum GenError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("infeasible config ({constraint}): {detail}")]
    Infeasible { constraint: String, detail: String },
    #[error("not available: {0}")]
    NotAvailable(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

fn infeasible(constraint: &str, detail: impl Into<String>) -> GenError {
    GenError::Infeasible { constraint: constraint.into(), detail: detail.into() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageShare {
    pub tag: String,
    pub proportion: f64,
}

impl LanguageShare {
    pub fn new(tag: impl Into<String>, proportion: f64) -> Self {
        LanguageShare { tag: tag.into(), proportion }
    }
}

/// Generator parameters. Every field has a default, so a JSON config only
/// needs the fields it changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub n_ordinary: usize,
    /// Power-law exponent of ordinary users' `k_out` and follower weight.
    pub degree_exponent: f64,
    pub min_degree: u64,
    /// Gaussian-copula correlation between `k_out` and follower weight.
    pub degree_correlation: f64,
    pub languages: Vec<LanguageShare>,
    /// Probability that an edge endpoint is drawn from the same language.
    pub homophily: f64,
    /// Probability that a regular user follows back a regular follower.
    pub ordinary_reciprocity: f64,
    /// Share of ordinary users that behave as exchange users.
    pub exchange_fraction: f64,
    pub n_type1: usize,
    pub n_type2: usize,
    pub type1_kin_range: IntRange,
    pub type1_kout_min: u64,
    pub type1_kout_max: u64,
    /// Probability that a friend of a type-1 user follows it back.
    pub type1_followback: f64,
    pub type2_sum_range: IntRange,
    /// Follow-back probability of type-2 and exchange users.
    pub reciprocity_type2: f64,
    /// Reciprocal links added between followers of each type-2 user, as a
    /// multiple of its follower count. Zero disables the pass.
    pub triangle_closure: f64,
    /// Users with at least this many friends need `k_out < 1.1 k_in`.
    /// `None` disables the rule.
    pub follow_cap: Option<u64>,
    pub protected_fraction: f64,
    pub organization_fraction: f64,
    /// Share of the ID range `[12, max_id]` left unassigned.
    pub id_gap_fraction: f64,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            n_ordinary: 10_000,
            degree_exponent: 2.5,
            min_degree: 5,
            degree_correlation: 0.6,
            languages: vec![LanguageShare::new("en", 1.0)],
            homophily: 0.9,
            ordinary_reciprocity: 0.2,
            exchange_fraction: 0.1,
            n_type1: 0,
            n_type2: 0,
            type1_kin_range: IntRange::new(2500, 7500),
            type1_kout_min: 20,
            type1_kout_max: 500,
            type1_followback: 0.1,
            type2_sum_range: IntRange::new(5000, 15000),
            reciprocity_type2: 0.9,
            triangle_closure: 1.0,
            follow_cap: Some(2000),
            protected_fraction: 0.0,
            organization_fraction: 0.0,
            id_gap_fraction: 0.0,
            seed: 0,
        }
    }
}

fn check_prob(name: &str, p: f64) -> Result<(), GenError> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(GenError::InvalidConfig(format!("{name} = {p} is not in [0, 1]")))
    }
}

impl GenConfig {
    /// Type thresholds matching the planted populations.
    pub fn thresholds(&self) -> TypeThresholds {
        TypeThresholds {
            type1_kin: self.type1_kin_range,
            type1_kout_max: self.type1_kout_max,
            type2_sum: self.type2_sum_range,
            ..TypeThresholds::default()
        }
    }

    pub fn total_users(&self) -> usize {
        self.n_ordinary + self.n_type1 + self.n_type2
    }

    pub fn validate(&self) -> Result<(), GenError> {
        if self.languages.is_empty() {
            return Err(GenError::InvalidConfig("no languages configured".into()));
        }
        let mut tags = HashSet::new();
        for l in &self.languages {
            if l.tag.is_empty() || l.tag.contains(char::is_whitespace) {
                return Err(GenError::InvalidConfig(format!("bad language tag {:?}", l.tag)));
            }
            if !tags.insert(&l.tag) {
                return Err(GenError::InvalidConfig(format!("duplicate language {:?}", l.tag)));
            }
            check_prob(&format!("proportion of {}", l.tag), l.proportion)?;
        }
        let total: f64 = self.languages.iter().map(|l| l.proportion).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(GenError::InvalidConfig(format!("language proportions sum to {total}, not 1")));
        }
        for (name, p) in [
            ("homophily", self.homophily),
            ("degree_correlation", self.degree_correlation),
            ("ordinary_reciprocity", self.ordinary_reciprocity),
            ("exchange_fraction", self.exchange_fraction),
            ("type1_followback", self.type1_followback),
            ("reciprocity_type2", self.reciprocity_type2),
            ("protected_fraction", self.protected_fraction),
            ("organization_fraction", self.organization_fraction),
        ] {
            check_prob(name, p)?;
        }
        if !(0.0..1.0).contains(&self.id_gap_fraction) {
            return Err(GenError::InvalidConfig("id_gap_fraction must be in [0, 1)".into()));
        }
        if !(self.degree_exponent > 1.0) || !self.degree_exponent.is_finite() {
            return Err(GenError::InvalidConfig("degree_exponent must be > 1".into()));
        }
        if self.min_degree == 0 {
            return Err(GenError::InvalidConfig("min_degree must be >= 1".into()));
        }
        if !(self.triangle_closure >= 0.0) {
            return Err(GenError::InvalidConfig("triangle_closure must be >= 0".into()));
        }
        for (name, r) in [("type1_kin_range", self.type1_kin_range), ("type2_sum_range", self.type2_sum_range)] {
            if r.is_empty() {
                return Err(GenError::InvalidConfig(format!("{name} is empty")));
            }
        }
        if self.type2_sum_range.lo < 2 {
            return Err(GenError::InvalidConfig("type2_sum_range.lo must be >= 2".into()));
        }
        if self.type1_kout_min == 0 || self.type1_kout_min > self.type1_kout_max {
            return Err(GenError::InvalidConfig("need 1 <= type1_kout_min <= type1_kout_max".into()));
        }
        if self.type1_kout_max >= self.type1_kin_range.lo {
            return Err(GenError::InvalidConfig(
                "type1_kout_max must be below type1_kin_range.lo".into(),
            ));
        }

        if self.n_ordinary > 0 && self.min_degree as usize >= self.n_ordinary {
            return Err(infeasible("min_degree", "min_degree must be below n_ordinary"));
        }
        if self.n_type1 > 0 && self.type1_kin_range.hi as usize > self.n_ordinary {
            return Err(infeasible(
                "type1_kin_range",
                format!(
                    "type-1 users need up to {} distinct followers but only {} ordinary users exist",
                    self.type1_kin_range.hi, self.n_ordinary
                ),
            ));
        }
        if self.n_type2 > 0 {
            // the largest k_in on the diagonal within the sum range
            let diag = self.thresholds().diagonal;
            let hi = self.type2_sum_range.hi;
            let need = hi - (hi * diag.den).div_ceil(diag.num + diag.den);
            if need as usize > self.n_ordinary {
                return Err(infeasible(
                    "type2_sum_range",
                    format!(
                        "type-2 users need up to {need} distinct partners but only {} ordinary users exist",
                        self.n_ordinary
                    ),
                ));
            }
            let ok = (self.type2_sum_range.lo..=self.type2_sum_range.hi).any(|s| type2_kout_range(s, self).is_some());
            if !ok {
                return Err(infeasible("type2_sum_range", "no degree pair on the diagonal fits the range"));
            }
        }
        Ok(())
    }
}

/// Admissible `k_out` values of a type-2 user with degree sum `s`:
/// `k_out <= k_in` (so the follow cap holds) and `k_in <= 1.1 k_out`.
fn type2_kout_range(s: u64, cfg: &GenConfig) -> Option<(u64, u64)> {
    let diag = cfg.thresholds().diagonal;
    let lo = (s * diag.den).div_ceil(diag.num + diag.den);
    let hi = s / 2;
    (lo <= hi && lo > 0).then_some((lo, hi))
}

/// Planted type labels, written as the `id<TAB>type` sidecar.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantedLabels {
    pub labels: BTreeMap<UserId, TypeLabel>,
}

impl PlantedLabels {
    pub fn of_type(&self, t: TypeLabel) -> Vec<UserId> {
        self.labels.iter().filter(|(_, &l)| l == t).map(|(&id, _)| id).collect()
    }

    pub fn write<W: Write + ?Sized>(&self, w: &mut W) -> io::Result<()> {
        for (id, label) in &self.labels {
            writeln!(w, "{id}\t{}", label.as_str())?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> io::Result<()> {
        write_atomic(path, |w| self.write(w))
    }

    pub fn read<R: BufRead>(reader: R) -> Result<Self, GraphError> {
        let mut labels = BTreeMap::new();
        for (n, line) in reader.lines().enumerate() {
            let line = line?;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.is_empty() {
                continue;
            }
            let bad = |message: String| GraphError::Parse { line: n + 1, message };
            if fields.len() != 2 {
                return Err(bad("expected `id<TAB>type`".into()));
            }
            let id: UserId = fields[0].parse().map_err(|_| bad(format!("invalid id {:?}", fields[0])))?;
            let label = match fields[1] {
                "type1" | "1" => TypeLabel::Type1,
                "type2" | "2" => TypeLabel::Type2,
                other => return Err(bad(format!("unknown type {other:?}"))),
            };
            labels.insert(id, label);
        }
        Ok(PlantedLabels { labels })
    }

    pub fn load(path: &Path) -> Result<Self, GraphError> {
        Self::read(BufReader::new(File::open(path)?))
    }
}

pub const LABELS_FILE: &str = "labels.tsv";

/// A generated graph together with its ground-truth sidecar.
#[derive(Debug, Clone)]
pub struct GeneratedNetwork {
    pub graph: DirectedGraph,
    pub labels: Option<PlantedLabels>,
}

/// Planted labels and counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantReport {
    pub type1: Vec<UserId>,
    pub type2: Vec<UserId>,
    pub n_type1: usize,
    pub n_type2: usize,
}

pub fn plant_report(net: &GeneratedNetwork) -> Result<PlantReport, GenError> {
    let labels = net
        .labels
        .as_ref()
        .ok_or_else(|| GenError::NotAvailable("graph carries no planted-label sidecar".into()))?;
    let type1 = labels.of_type(TypeLabel::Type1);
    let type2 = labels.of_type(TypeLabel::Type2);
    Ok(PlantReport { n_type1: type1.len(), n_type2: type2.len(), type1, type2 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Regular,
    Exchange,
    Type1,
    Type2,
}

impl Kind {
    fn planted(self) -> bool {
        matches!(self, Kind::Type1 | Kind::Type2)
    }
}

/// Out-adjacency under construction, with O(1) duplicate checks.
struct EdgeSet {
    out: Vec<Vec<u32>>,
    keys: HashSet<u64>,
}

impl EdgeSet {
    fn new(n: usize) -> Self {
        EdgeSet { out: vec![Vec::new(); n], keys: HashSet::new() }
    }

    fn key(a: u32, b: u32) -> u64 {
        (u64::from(a) << 32) | u64::from(b)
    }

    fn has(&self, a: u32, b: u32) -> bool {
        self.keys.contains(&Self::key(a, b))
    }

    fn add(&mut self, a: u32, b: u32) -> bool {
        if a == b || !self.keys.insert(Self::key(a, b)) {
            return false;
        }
        self.out[a as usize].push(b);
        true
    }
}

/// Weighted target table over a fixed member list.
struct Table {
    members: Vec<u32>,
    dist: Option<WeightedIndex<f64>>,
}

impl Table {
    fn new(members: Vec<u32>, weight: impl Fn(u32) -> f64) -> Self {
        let dist = WeightedIndex::new(members.iter().map(|&m| weight(m))).ok();
        Table { members, dist }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> Option<u32> {
        self.dist.as_ref().map(|d| self.members[d.sample(rng)])
    }
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Quantile of a continuous power law with density exponent `gamma` on
/// `[kmin, kmax + 1)`; flooring it gives the discrete degree.
fn power_law_quantile(u: f64, kmin: f64, kmax: f64, gamma: f64) -> f64 {
    let alpha = gamma - 1.0;
    let tail = (kmin / (kmax + 1.0)).powf(alpha);
    let x = kmin * (1.0 - u * (1.0 - tail)).powf(-1.0 / alpha);
    x.min(kmax)
}

/// Chooses `k` distinct members, each from the same-language categories
/// with probability `homophily` and otherwise from the global ones, with
/// selection weight `weight`. Categories are used in order, spilling over
/// when one runs dry.
#[allow(clippy::too_many_arguments)]
fn choose_partners(
    rng: &mut ChaCha8Rng,
    k: usize,
    same: &[&[u32]],
    global: &[&[u32]],
    homophily: f64,
    weight: &dyn Fn(u32) -> f64,
    exclude: &mut HashSet<u32>,
    what: &str,
) -> Result<Vec<u32>, GenError> {
    let want_same = if homophily >= 1.0 {
        k
    } else {
        Binomial::new(k as u64, homophily).expect("probability checked").sample(rng) as usize
    };
    let mut chosen = Vec::with_capacity(k);
    for cat in same {
        let need = want_same - chosen.len();
        if need == 0 {
            break;
        }
        chosen.extend(weighted_subset(rng, cat, need, weight, exclude));
    }
    if homophily < 1.0 {
        for cat in global {
            let need = k - chosen.len();
            if need == 0 {
                break;
            }
            chosen.extend(weighted_subset(rng, cat, need, weight, exclude));
        }
    }
    for cat in same {
        let need = k - chosen.len();
        if need == 0 {
            break;
        }
        chosen.extend(weighted_subset(rng, cat, need, weight, exclude));
    }
    if chosen.len() < k {
        return Err(infeasible(
            what,
            format!("needed {k} distinct users, only {} eligible", chosen.len()),
        ));
    }
    Ok(chosen)
}

/// Weighted sampling without replacement (exponential keys), skipping and
/// then extending `exclude`.
fn weighted_subset(
    rng: &mut ChaCha8Rng,
    pool: &[u32],
    k: usize,
    weight: &dyn Fn(u32) -> f64,
    exclude: &mut HashSet<u32>,
) -> Vec<u32> {
    let mut keyed: Vec<(f64, u32)> = pool
        .iter()
        .filter(|m| !exclude.contains(m))
        .filter_map(|&m| {
            let w = weight(m);
            // keys are -Exp(1)/w; larger is better
            let u: f64 = rng.random::<f64>();
            (w > 0.0).then(|| ((1.0 - u).ln() / w, m))
        })
        .collect();
    let take = k.min(keyed.len());
    if take == 0 {
        return Vec::new();
    }
    if take < keyed.len() {
        keyed.select_nth_unstable_by(take - 1, |a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        keyed.truncate(take);
    }
    keyed.sort_unstable_by_key(|&(_, m)| m);
    let out: Vec<u32> = keyed.into_iter().map(|(_, m)| m).collect();
    exclude.extend(out.iter().copied());
    out
}

struct Population {
    kind: Vec<Kind>,
    lang: Vec<usize>,
    /// Target friend count for ordinary users.
    kout_target: Vec<u64>,
    /// Follower weight for ordinary users.
    kin_weight: Vec<f64>,
}

/// Generates a network. The same config always yields the same graph.
pub fn generate(cfg: &GenConfig) -> Result<GeneratedNetwork, GenError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.total_users();
    let pop = draw_population(cfg, &mut rng);
    let n_lang = cfg.languages.len();

    let mut by_lang: Vec<Vec<u32>> = vec![Vec::new(); n_lang];
    let mut by_lang_ex: Vec<Vec<u32>> = vec![Vec::new(); n_lang];
    let mut by_lang_reg: Vec<Vec<u32>> = vec![Vec::new(); n_lang];
    for i in 0..cfg.n_ordinary {
        let l = pop.lang[i];
        by_lang[l].push(i as u32);
        match pop.kind[i] {
            Kind::Exchange => by_lang_ex[l].push(i as u32),
            _ => by_lang_reg[l].push(i as u32),
        }
    }
    let all_ord: Vec<u32> = (0..cfg.n_ordinary as u32).collect();
    let all_ex: Vec<u32> = by_lang_ex.concat();
    let all_reg: Vec<u32> = by_lang_reg.concat();

    let mut edges = EdgeSet::new(n);
    wire_ordinary(cfg, &pop, &mut rng, &mut edges, &by_lang, &by_lang_ex, &all_ord, &all_ex);

    let kin_w = |m: u32| pop.kin_weight[m as usize];
    let kout_w = |m: u32| pop.kout_target[m as usize] as f64;
    let uniform = |_: u32| 1.0;

    // type-1: popular friends; followers drawn uniformly from regular users,
    // since follow-back accounts gain nothing from following a type-1 user
    let t1_start = cfg.n_ordinary;
    for t in t1_start..t1_start + cfg.n_type1 {
        let l = pop.lang[t];
        let k_in = rng.random_range(cfg.type1_kin_range.lo..=cfg.type1_kin_range.hi) as usize;
        let k_out = rng.random_range(cfg.type1_kout_min..=cfg.type1_kout_max) as usize;
        let mut taken = HashSet::new();
        let friends = choose_partners(
            &mut rng, k_out, &[&by_lang[l]], &[&all_ord], cfg.homophily, &kin_w, &mut taken, "type1_kout_max",
        )?;
        let mut n_back = 0;
        for &f in &friends {
            edges.add(t as u32, f);
            if rng.random_bool(cfg.type1_followback) {
                edges.add(f, t as u32);
                n_back += 1;
            }
        }
        let followers = choose_partners(
            &mut rng, k_in - n_back, &[&by_lang_reg[l]], &[&all_reg], cfg.homophily, &uniform, &mut taken, "type1_kin_range",
        )?;
        for f in followers {
            edges.add(f, t as u32);
        }
    }

    // type-2: reciprocal exchange with exchange users, spilling to regular users
    let t2_start = t1_start + cfg.n_type1;
    let mut type2_followers: Vec<Vec<u32>> = Vec::new();
    for s in t2_start..t2_start + cfg.n_type2 {
        let l = pop.lang[s];
        let (k_in, k_out) = loop {
            let sum = rng.random_range(cfg.type2_sum_range.lo..=cfg.type2_sum_range.hi);
            if let Some((lo, hi)) = type2_kout_range(sum, cfg) {
                let k_out = rng.random_range(lo..=hi);
                break ((sum - k_out) as usize, k_out as usize);
            }
        };
        let mut taken = HashSet::new();
        let same: [&[u32]; 2] = [&by_lang_ex[l], &by_lang_reg[l]];
        let global: [&[u32]; 2] = [&all_ex, &all_reg];
        let friends = choose_partners(
            &mut rng, k_out, &same, &global, cfg.homophily, &kout_w, &mut taken, "type2_sum_range",
        )?;
        let mut followers = Vec::with_capacity(k_in);
        for &f in &friends {
            edges.add(s as u32, f);
            if rng.random_bool(cfg.reciprocity_type2) {
                edges.add(f, s as u32);
                followers.push(f);
            }
        }
        let extra = choose_partners(
            &mut rng, k_in - followers.len(), &same, &global, cfg.homophily, &kout_w, &mut taken, "type2_sum_range",
        )?;
        for f in extra {
            edges.add(f, s as u32);
            followers.push(f);
        }
        type2_followers.push(followers);
    }

    // close reciprocal triangles among each type-2 user's followers
    if cfg.triangle_closure > 0.0 {
        for followers in &type2_followers {
            if followers.len() < 2 {
                continue;
            }
            let target = (cfg.triangle_closure * followers.len() as f64).round() as usize;
            let mut closed = 0;
            let mut attempts = 0;
            while closed < target && attempts < 4 * target {
                attempts += 1;
                let a = followers[rng.random_range(0..followers.len())];
                let b = followers[rng.random_range(0..followers.len())];
                if a == b || (edges.has(a, b) && edges.has(b, a)) {
                    continue;
                }
                edges.add(a, b);
                edges.add(b, a);
                closed += 1;
            }
        }
    }

    repair(cfg, &pop.kind, &mut edges, &mut rng)?;

    // check every planted user lands in its region
    let thresholds = cfg.thresholds();
    let mut k_in = vec![0u64; n];
    for outs in &edges.out {
        for &b in outs {
            k_in[b as usize] += 1;
        }
    }
    for i in 0..n {
        let d = crate::graph::Degrees::new(k_in[i], edges.out[i].len() as u64);
        let expect = match pop.kind[i] {
            Kind::Type1 => TypeLabel::Type1,
            Kind::Type2 => TypeLabel::Type2,
            _ => continue,
        };
        if thresholds.classify(d) != expect {
            return Err(infeasible("planted_degrees", format!("node {i} has {d:?}, expected {expect:?}")));
        }
    }

    // sparse ID assignment in [12, max_id]
    let range_len = if n == 0 { 0 } else { ((n as f64) / (1.0 - cfg.id_gap_fraction)).ceil() as usize };
    let mut ids: Vec<u64> = rand::seq::index::sample(&mut rng, range_len.max(n), n)
        .into_iter()
        .map(|o| FIRST_USER_ID + o as u64)
        .collect();
    ids.sort_unstable();
    ids.shuffle(&mut rng);

    let mut records = Vec::with_capacity(n);
    let mut labels = BTreeMap::new();
    for i in 0..n {
        let id = UserId(ids[i]);
        let mut rec = UserRecord::new(id, cfg.languages[pop.lang[i]].tag.clone());
        // only ordinary accounts may be protected or institutional; planted
        // users must stay crawlable
        if pop.kind[i] == Kind::Regular || pop.kind[i] == Kind::Exchange {
            rec.protected = rng.random_bool(cfg.protected_fraction);
            rec.organization = rng.random_bool(cfg.organization_fraction);
        }
        match pop.kind[i] {
            Kind::Type1 => {
                labels.insert(id, TypeLabel::Type1);
            }
            Kind::Type2 => {
                labels.insert(id, TypeLabel::Type2);
            }
            _ => {}
        }
        records.push(rec);
    }
    let graph = from_dense(records, &edges.out)?;
    Ok(GeneratedNetwork { graph, labels: Some(PlantedLabels { labels }) })
}

fn draw_population(cfg: &GenConfig, rng: &mut ChaCha8Rng) -> Population {
    let n = cfg.total_users();
    let lang_dist = WeightedIndex::new(cfg.languages.iter().map(|l| l.proportion)).expect("validated proportions");
    let kmin = cfg.min_degree as f64;
    let kmax = (cfg.n_ordinary.saturating_sub(1) as f64).max(kmin);
    let rho = cfg.degree_correlation;

    let mut pop = Population {
        kind: Vec::with_capacity(n),
        lang: Vec::with_capacity(n),
        kout_target: Vec::with_capacity(n),
        kin_weight: Vec::with_capacity(n),
    };
    for i in 0..n {
        pop.lang.push(lang_dist.sample(rng));
        if i < cfg.n_ordinary {
            pop.kind.push(if rng.random_bool(cfg.exchange_fraction) { Kind::Exchange } else { Kind::Regular });
            let z1: f64 = rng.sample(StandardNormal);
            let e: f64 = rng.sample(StandardNormal);
            let z2 = rho * z1 + (1.0 - rho * rho).sqrt() * e;
            let k_out = power_law_quantile(std_normal_cdf(z1), kmin, kmax, cfg.degree_exponent);
            let w_in = power_law_quantile(std_normal_cdf(z2), kmin, kmax, cfg.degree_exponent);
            pop.kout_target.push(k_out.floor() as u64);
            pop.kin_weight.push(w_in);
        } else {
            pop.kind.push(if i < cfg.n_ordinary + cfg.n_type1 { Kind::Type1 } else { Kind::Type2 });
            pop.kout_target.push(0);
            pop.kin_weight.push(0.0);
        }
    }
    pop
}

#[allow(clippy::too_many_arguments)]
fn wire_ordinary(
    cfg: &GenConfig,
    pop: &Population,
    rng: &mut ChaCha8Rng,
    edges: &mut EdgeSet,
    by_lang: &[Vec<u32>],
    by_lang_ex: &[Vec<u32>],
    all_ord: &[u32],
    all_ex: &[u32],
) {
    let kin_w = |m: u32| pop.kin_weight[m as usize];
    let d_w = |m: u32| pop.kout_target[m as usize] as f64;
    let follow_tables: Vec<Table> = by_lang.iter().map(|m| Table::new(m.clone(), kin_w)).collect();
    let follow_global = Table::new(all_ord.to_vec(), kin_w);
    let ex_tables: Vec<Table> = by_lang_ex.iter().map(|m| Table::new(m.clone(), d_w)).collect();
    let ex_global = Table::new(all_ex.to_vec(), d_w);

    const ATTEMPTS: usize = 32;
    for u in 0..cfg.n_ordinary {
        let l = pop.lang[u];
        let exchange = pop.kind[u] == Kind::Exchange;
        let (local, global) = if exchange { (&ex_tables[l], &ex_global) } else { (&follow_tables[l], &follow_global) };
        for _ in 0..pop.kout_target[u] {
            for _ in 0..ATTEMPTS {
                let same = cfg.homophily >= 1.0 || rng.random_bool(cfg.homophily);
                let Some(v) = (if same { local.draw(rng) } else { global.draw(rng) }) else { break };
                if !edges.add(u as u32, v) {
                    continue;
                }
                let back = if exchange || pop.kind[v as usize] == Kind::Exchange {
                    cfg.reciprocity_type2
                } else {
                    cfg.ordinary_reciprocity
                };
                if rng.random_bool(back) {
                    edges.add(v, u as u32);
                }
                break;
            }
        }
    }
}

/// Removes ordinary-ordinary edges until no ordinary user breaks the
/// follow cap. Edges touching planted users are never removed, so planted
/// degrees stay fixed.
fn repair(cfg: &GenConfig, kind: &[Kind], edges: &mut EdgeSet, rng: &mut ChaCha8Rng) -> Result<(), GenError> {
    let n = kind.len();
    let Some(cap) = cfg.follow_cap else { return Ok(()) };
    let diag = cfg.thresholds().diagonal;
    let mut ins: Vec<Vec<u32>> = vec![Vec::new(); n];
    for (a, outs) in edges.out.iter().enumerate() {
        for &b in outs {
            ins[b as usize].push(a as u32);
        }
    }

    let mut queue: VecDeque<u32> = (0..n as u32).filter(|&u| !kind[u as usize].planted()).collect();
    let mut queued = vec![false; n];
    for &u in &queue {
        queued[u as usize] = true;
    }
    let mut removed = 0usize;

    while let Some(u) = queue.pop_front() {
        let ui = u as usize;
        queued[ui] = false;
        let k_in = ins[ui].len() as u64;
        let k_out = edges.out[ui].len() as u64;
        if k_out < cap || k_out * diag.den < k_in * diag.num {
            continue;
        }
        // largest friend count that satisfies the cap: below `cap`, or
        // below 1.1 k_in
        let keep = (cap - 1).max((k_in * diag.num).div_ceil(diag.den).saturating_sub(1));
        let count = (k_out - keep.min(k_out)) as usize;
        let mut candidates: Vec<u32> =
            edges.out[ui].iter().copied().filter(|&v| !kind[v as usize].planted()).collect();
        if candidates.len() < count {
            return Err(infeasible(
                "repair",
                format!("ordinary node {u} has k_in {k_in}, k_out {k_out} and too few removable edges"),
            ));
        }
        candidates.sort_unstable();
        let (picked, _) = candidates.partial_shuffle(rng, count);
        for &v in picked.iter() {
            remove_edge(edges, &mut ins, u, v);
            removed += 1;
            // v lost a follower and may now break the cap itself
            if !queued[v as usize] && !kind[v as usize].planted() {
                queued[v as usize] = true;
                queue.push_back(v);
            }
        }
    }
    if removed > 0 {
        log::debug!("repair pass removed {removed} edges");
    }
    Ok(())
}

fn remove_edge(edges: &mut EdgeSet, ins: &mut [Vec<u32>], a: u32, b: u32) {
    edges.keys.remove(&EdgeSet::key(a, b));
    let outs = &mut edges.out[a as usize];
    let p = outs.iter().position(|&x| x == b).expect("edge present");
    outs.remove(p);
    let inl = &mut ins[b as usize];
    let p = inl.iter().position(|&x| x == a).expect("edge present");
    inl.swap_remove(p);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::local_reciprocity;

    fn small(seed: u64) -> GenConfig {
        GenConfig {
            n_ordinary: 3000,
            n_type1: 0,
            n_type2: 0,
            seed,
            ..GenConfig::default()
        }
    }

    #[test]
    fn empty_config_gives_empty_graph() {
        let cfg = GenConfig { n_ordinary: 0, ..GenConfig::default() };
        let net = generate(&cfg).unwrap();
        assert!(net.graph.is_empty());
        let report = plant_report(&net).unwrap();
        assert!(report.type1.is_empty() && report.type2.is_empty());
    }

    #[test]
    fn same_seed_same_graph() {
        let a = generate(&small(4)).unwrap();
        let b = generate(&small(4)).unwrap();
        assert_eq!(a.graph, b.graph);
        let c = generate(&small(5)).unwrap();
        assert_ne!(a.graph, c.graph);
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut cfg = small(0);
        cfg.languages = vec![LanguageShare::new("en", 0.5), LanguageShare::new("ja", 0.4)];
        assert!(matches!(generate(&cfg), Err(GenError::InvalidConfig(_))));
        let mut cfg = small(0);
        cfg.homophily = 1.5;
        assert!(matches!(generate(&cfg), Err(GenError::InvalidConfig(_))));
        let mut cfg = small(0);
        cfg.type1_kin_range = IntRange::new(10, 5);
        assert!(matches!(generate(&cfg), Err(GenError::InvalidConfig(_))));
    }

    #[test]
    fn infeasible_type1_names_constraint() {
        let cfg = GenConfig { n_ordinary: 1000, n_type1: 1, ..GenConfig::default() };
        match generate(&cfg) {
            Err(GenError::Infeasible { constraint, .. }) => assert_eq!(constraint, "type1_kin_range"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ids_start_at_twelve_and_leave_gaps() {
        let mut cfg = small(1);
        cfg.id_gap_fraction = 0.5;
        let g = generate(&cfg).unwrap().graph;
        let (lo, hi) = g.id_bounds().unwrap();
        assert!(lo.0 >= FIRST_USER_ID);
        let span = (hi.0 - FIRST_USER_ID + 1) as f64;
        let filled = g.user_count() as f64 / span;
        assert!((filled - 0.5).abs() < 0.03, "filled {filled}");

        let dense = generate(&small(1)).unwrap().graph;
        let (lo, hi) = dense.id_bounds().unwrap();
        assert_eq!((lo.0, hi.0), (12, 12 + 3000 - 1));
    }

    #[test]
    fn full_homophily_keeps_languages_apart() {
        let mut cfg = small(2);
        cfg.languages = vec![LanguageShare::new("ja", 0.6), LanguageShare::new("ko", 0.4)];
        cfg.homophily = 1.0;
        let g = generate(&cfg).unwrap().graph;
        assert!(g.edge_count() > 0);
        for (a, b) in g.edges() {
            assert_eq!(g.user(a).unwrap().language, g.user(b).unwrap().language);
        }
    }

    #[test]
    fn follow_cap_holds() {
        let mut cfg = small(3);
        cfg.degree_exponent = 2.05;
        cfg.min_degree = 20;
        let g = generate(&cfg).unwrap().graph;
        for u in g.ids() {
            let d = g.degrees(u).unwrap();
            if d.k_out >= 2000 {
                assert!(10 * d.k_out < 11 * d.k_in, "{u}: {d:?}");
            }
        }
    }

    #[test]
    fn planted_type2_fully_reciprocal() {
        let cfg = GenConfig {
            n_ordinary: 16_000,
            n_type2: 10,
            reciprocity_type2: 1.0,
            exchange_fraction: 0.3,
            seed: 8,
            ..GenConfig::default()
        };
        let net = generate(&cfg).unwrap();
        let report = plant_report(&net).unwrap();
        assert_eq!(report.n_type2, 10);
        for u in report.type2 {
            assert_eq!(local_reciprocity(&net.graph, u).unwrap().value(), 1.0);
        }
    }

    #[test]
    fn labels_round_trip() {
        let mut labels = PlantedLabels::default();
        labels.labels.insert(UserId(40), TypeLabel::Type2);
        labels.labels.insert(UserId(13), TypeLabel::Type1);
        let mut buf = Vec::new();
        labels.write(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "13\ttype1\n40\ttype2\n");
        assert_eq!(PlantedLabels::read(buf.as_slice()).unwrap(), labels);
        assert!(PlantedLabels::read("13\ttype3\n".as_bytes()).is_err());
    }

    #[test]
    fn missing_sidecar_is_not_available() {
        let net = GeneratedNetwork { graph: DirectedGraph::default(), labels: None };
        assert!(matches!(plant_report(&net), Err(GenError::NotAvailable(_))));
    }

    #[test]
    fn power_law_quantile_bounds() {
        assert_eq!(power_law_quantile(0.0, 5.0, 100.0, 2.5), 5.0);
        assert_eq!(power_law_quantile(1.0, 5.0, 100.0, 2.5), 100.0);
        let mid = power_law_quantile(0.5, 5.0, 1e9, 2.5);
        // median of a Pareto with alpha = 1.5 is kmin * 2^(1/1.5)
        assert!((mid - 5.0 * 2f64.powf(1.0 / 1.5)).abs() < 1e-6);
    }
}
