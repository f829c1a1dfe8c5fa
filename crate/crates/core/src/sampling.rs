//! Neighbor sampling and random-ID sampling through the access simulator.
//!
//! Both protocols run as jobs that can be interrupted by the rate limit.
//! An interrupted job comes back inside [`SamplingError::Resumable`]; it is
//! serializable, and resuming it later produces exactly the result an
//! unthrottled run would have produced.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::access::{AccessError, AccessSimulator, LookupRow, LOOKUP_BATCH};
use crate::graph::{DirectedGraph, UserId};
use crate::synthgen::FIRST_USER_ID;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleMethod {
    Neighbor,
    Random,
}

impl SampleMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            SampleMethod::Neighbor => "neighbor",
            SampleMethod::Random => "random",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleSet {
    pub method: SampleMethod,
    pub language: String,
    pub seed_user: Option<UserId>,
    /// Ascending, no duplicates.
    pub members: Vec<UserId>,
    pub discarded_language: u64,
    pub discarded_invalid: u64,
    pub rng_seed: u64,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

#[derive(Debug, Error)]
pub enum SamplingError {
    #[error("only {eligible} eligible users of language {language:?}, {requested} requested")]
    InsufficientPopulation { language: String, eligible: usize, requested: usize },
    #[error("user {0} is protected")]
    Protected(UserId),
    #[error("user {0} not found")]
    NotFound(UserId),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    /// The budget ran out. `job` holds all progress made so far.
    #[error("rate limit reached; resume after {retry_after} time units")]
    Resumable { job: Box<SamplingJob>, retry_after: u64 },
}

/// `k` users of `language` with the largest `k_in` below `follower_cap`,
/// ties broken by smaller ID. Organization accounts, protected users and
/// deleted users are never eligible.
pub fn select_seeds(
    g: &DirectedGraph,
    language: &str,
    k: usize,
    follower_cap: u64,
) -> Result<Vec<UserId>, SamplingError> {
    if k == 0 || follower_cap == 0 {
        return Err(SamplingError::InvalidArgument("k and follower_cap must be positive".into()));
    }
    let mut eligible: Vec<(u64, UserId)> = (0..g.user_count())
        .filter_map(|ix| {
            let r = g.record_at(ix);
            let k_in = g.degrees_at(ix).k_in;
            (r.exists && !r.protected && !r.organization && r.language == language && k_in < follower_cap)
                .then_some((k_in, r.id))
        })
        .collect();
    if eligible.len() < k {
        return Err(SamplingError::InsufficientPopulation {
            language: language.to_string(),
            eligible: eligible.len(),
            requested: k,
        });
    }
    eligible.sort_unstable_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    Ok(eligible.into_iter().take(k).map(|(_, id)| id).collect())
}

/// Lookup pass shared by both protocols: resolves `pending` in batches of
/// up to 100 IDs, one call per batch, so that an interruption loses nothing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LookupPass {
    pending: Vec<UserId>,
    next: usize,
    rows: Vec<LookupRow>,
}

impl LookupPass {
    fn new(pending: Vec<UserId>) -> Self {
        LookupPass { pending, next: 0, rows: Vec::new() }
    }

    fn run(&mut self, access: &AccessSimulator<'_>) -> Result<(), AccessError> {
        while self.next < self.pending.len() {
            let end = (self.next + LOOKUP_BATCH).min(self.pending.len());
            let rows = access.users_lookup(&self.pending[self.next..end])?;
            self.rows.extend(rows);
            self.next = end;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "stage", rename_all = "snake_case")]
pub enum NeighborStage {
    Seed,
    Paging { language: String, k_in: u64, next_page: u64, followers: Vec<UserId> },
    Lookup { language: String, drawn: u64, pass: LookupPass },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NeighborJob {
    pub seed_user: UserId,
    pub quota: usize,
    pub rng_seed: u64,
    pub stage: NeighborStage,
}

impl NeighborJob {
    pub fn new(seed_user: UserId, quota: usize, rng_seed: u64) -> Result<Self, SamplingError> {
        if quota == 0 {
            return Err(SamplingError::InvalidArgument("quota must be at least 1".into()));
        }
        Ok(NeighborJob { seed_user, quota, rng_seed, stage: NeighborStage::Seed })
    }

    /// Advances as far as the budget allows. On a rate limit the job keeps
    /// its progress and the limit is returned.
    pub fn step(&mut self, access: &AccessSimulator<'_>) -> Result<SampleSet, StepError> {
        loop {
            match &mut self.stage {
                NeighborStage::Seed => {
                    let rows = access.users_lookup(&[self.seed_user])?;
                    let row = rows.into_iter().next().ok_or(SamplingError::NotFound(self.seed_user))?;
                    if row.protected {
                        return Err(SamplingError::Protected(self.seed_user).into());
                    }
                    self.stage = NeighborStage::Paging {
                        language: row.language,
                        k_in: row.k_in,
                        next_page: 0,
                        followers: Vec::new(),
                    };
                }
                NeighborStage::Paging { language, k_in, next_page, followers } => {
                    while (followers.len() as u64) < *k_in {
                        let page = access.followers_ids(self.seed_user, *next_page)?;
                        *next_page += 1;
                        let short = page.len() < access.budget().page_size;
                        followers.extend(page);
                        if short {
                            break;
                        }
                    }
                    let chosen = draw_without_replacement(followers, self.quota, self.rng_seed);
                    self.stage = NeighborStage::Lookup {
                        language: std::mem::take(language),
                        drawn: chosen.len() as u64,
                        pass: LookupPass::new(chosen),
                    };
                }
                NeighborStage::Lookup { language, drawn, pass } => {
                    pass.run(access)?;
                    let mut members = Vec::new();
                    let mut discarded_language = 0;
                    for r in &pass.rows {
                        if r.language == *language {
                            members.push(r.id);
                        } else {
                            discarded_language += 1;
                        }
                    }
                    members.sort_unstable();
                    return Ok(SampleSet {
                        method: SampleMethod::Neighbor,
                        language: language.clone(),
                        seed_user: Some(self.seed_user),
                        discarded_invalid: *drawn - pass.rows.len() as u64,
                        members,
                        discarded_language,
                        rng_seed: self.rng_seed,
                    });
                }
            }
        }
    }
}

fn draw_without_replacement(pool: &[UserId], quota: usize, rng_seed: u64) -> Vec<UserId> {
    let mut chosen: Vec<UserId> = if quota >= pool.len() {
        pool.to_vec()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        sample(&mut rng, pool.len(), quota).into_iter().map(|i| pool[i]).collect()
    };
    chosen.sort_unstable();
    chosen
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RandomJob {
    pub n_ids: usize,
    pub id_max: UserId,
    pub languages: BTreeSet<String>,
    pub rng_seed: u64,
    pass: LookupPass,
}

impl RandomJob {
    /// Draws the IDs up front; only the lookups touch the budget.
    pub fn new(n_ids: usize, id_max: UserId, languages: BTreeSet<String>, rng_seed: u64) -> Result<Self, SamplingError> {
        if n_ids == 0 {
            return Err(SamplingError::InvalidArgument("n_ids must be at least 1".into()));
        }
        if id_max.0 < FIRST_USER_ID {
            return Err(SamplingError::InvalidArgument(format!("id_max must be at least {FIRST_USER_ID}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        let drawn: BTreeSet<UserId> = (0..n_ids).map(|_| UserId(rng.random_range(FIRST_USER_ID..=id_max.0))).collect();
        Ok(RandomJob { n_ids, id_max, languages, rng_seed, pass: LookupPass::new(drawn.into_iter().collect()) })
    }

    /// Distinct IDs drawn.
    pub fn distinct(&self) -> usize {
        self.pass.pending.len()
    }

    pub fn step(&mut self, access: &AccessSimulator<'_>) -> Result<BTreeMap<String, SampleSet>, StepError> {
        self.pass.run(access)?;
        let discarded_invalid = (self.pass.pending.len() - self.pass.rows.len()) as u64;
        let mut by_lang: BTreeMap<String, Vec<UserId>> =
            self.languages.iter().map(|l| (l.clone(), Vec::new())).collect();
        let mut discarded_language = 0;
        for r in &self.pass.rows {
            match by_lang.get_mut(&r.language) {
                Some(v) => v.push(r.id),
                None => discarded_language += 1,
            }
        }
        Ok(by_lang
            .into_iter()
            .map(|(language, mut members)| {
                members.sort_unstable();
                let set = SampleSet {
                    method: SampleMethod::Random,
                    language: language.clone(),
                    seed_user: None,
                    members,
                    discarded_language,
                    discarded_invalid,
                    rng_seed: self.rng_seed,
                };
                (language, set)
            })
            .collect())
    }
}

/// Progress token of either protocol.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum SamplingJob {
    Neighbor(NeighborJob),
    Random(RandomJob),
}

impl SamplingJob {
    /// Runs the job; a rate limit becomes [`SamplingError::Resumable`].
    pub fn resume(mut self, access: &AccessSimulator<'_>) -> Result<Vec<SampleSet>, SamplingError> {
        let res = match &mut self {
            SamplingJob::Neighbor(j) => j.step(access).map(|s| vec![s]),
            SamplingJob::Random(j) => j.step(access).map(|m| m.into_values().collect()),
        };
        match res {
            Ok(sets) => Ok(sets),
            Err(StepError::Sampling(e)) => Err(e),
            Err(StepError::RateLimited(retry_after)) => {
                Err(SamplingError::Resumable { job: Box::new(self), retry_after })
            }
        }
    }

    /// Runs to completion, waiting out every rate-limit window.
    pub fn run_to_completion(self, access: &AccessSimulator<'_>) -> Result<Vec<SampleSet>, SamplingError> {
        let mut job = self;
        loop {
            match job.resume(access) {
                Err(SamplingError::Resumable { job: j, .. }) => {
                    access.next_window();
                    job = *j;
                }
                other => return other,
            }
        }
    }
}

/// Outcome of one [`NeighborJob::step`] or [`RandomJob::step`].
#[derive(Debug, Error)]
pub enum StepError {
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error("rate limited for {0} time units")]
    RateLimited(u64),
}

impl From<AccessError> for StepError {
    fn from(e: AccessError) -> Self {
        match e {
            AccessError::RateLimited { retry_after } => StepError::RateLimited(retry_after),
            AccessError::Protected { user } => SamplingError::Protected(user).into(),
            AccessError::NotFound { user } => SamplingError::NotFound(user).into(),
        }
    }
}

/// Followers of `seed_user` sampled and filtered to the seed's language.
pub fn neighbor_sample(
    access: &AccessSimulator<'_>,
    seed_user: UserId,
    quota: usize,
    rng_seed: u64,
) -> Result<SampleSet, SamplingError> {
    let job = SamplingJob::Neighbor(NeighborJob::new(seed_user, quota, rng_seed)?);
    job.resume(access).map(|mut v| v.remove(0))
}

/// Uniform IDs from `[12, id_max]`, partitioned by language.
pub fn random_sample(
    access: &AccessSimulator<'_>,
    n_ids: usize,
    id_max: UserId,
    languages: &BTreeSet<String>,
    rng_seed: u64,
) -> Result<BTreeMap<String, SampleSet>, SamplingError> {
    let job = SamplingJob::Random(RandomJob::new(n_ids, id_max, languages.clone(), rng_seed)?);
    let sets = job.resume(access)?;
    Ok(sets.into_iter().map(|s| (s.language.clone(), s)).collect())
}

/// Fraction of `total` attempts that were discarded.
pub fn discard_rate(retained: u64, total: u64) -> f64 {
    1.0 - retained as f64 / total as f64
}
