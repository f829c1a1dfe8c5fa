//! Rate-limited, paginated access to a ground-truth graph.
//!
//! Mirrors the three crawl resources (`users/lookup`, `followers/ids`,
//! `friends/ids`) under a per-window call budget. Time is simulated: the
//! window only advances through [`AccessSimulator::tick`], which keeps
//! tests deterministic.
//!
//! Protected users stay visible in other users' lists and in lookups, but
//! their own follower and friend lists cannot be fetched.

use std::io::{self, BufRead, Write};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{DirectedGraph, UserId};

/// Maximum number of IDs resolved by one lookup call.
pub const LOOKUP_BATCH: usize = 100;

/// Per-window call allowance. The defaults (15 calls per 900-unit window,
/// 5000 IDs per page) follow the public API the crawl model is based on;
/// they are modeling choices, not measured values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AccessBudget {
    pub calls_per_window: u32,
    pub window_length: u64,
    pub page_size: usize,
}

impl Default for AccessBudget {
    fn default() -> Self {
        AccessBudget { calls_per_window: 15, window_length: 900, page_size: 5000 }
    }
}

impl AccessBudget {
    /// A budget large enough never to throttle.
    pub fn unlimited() -> Self {
        AccessBudget { calls_per_window: u32::MAX, ..Self::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resource {
    UsersLookup,
    FollowersIds,
    FriendsIds,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Ok,
    Protected,
    NotFound,
    /// Refused for lack of budget; does not consume a call.
    RateLimited,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogEntry {
    pub resource: Resource,
    pub target: Option<UserId>,
    pub page: u64,
    pub outcome: Outcome,
    pub window: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LookupRow {
    pub id: UserId,
    pub language: String,
    pub k_in: u64,
    pub k_out: u64,
    pub protected: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AccessError {
    #[error("rate limit reached; window resets in {retry_after} time units")]
    RateLimited { retry_after: u64 },
    #[error("user {user} is protected")]
    Protected { user: UserId },
    #[error("user {user} does not exist")]
    NotFound { user: UserId },
}

#[derive(Debug, Default)]
struct State {
    now: u64,
    window: u64,
    used: u32,
    log: Vec<LogEntry>,
}

impl State {
    fn roll(&mut self, budget: &AccessBudget) {
        let w = self.now / budget.window_length;
        if w != self.window {
            self.window = w;
            self.used = 0;
        }
    }

    fn retry_after(&self, budget: &AccessBudget) -> u64 {
        (self.window + 1) * budget.window_length - self.now
    }
}

/// Serializes calls against one graph; safe to share across threads.
#[derive(Debug)]
pub struct AccessSimulator<'g> {
    graph: &'g DirectedGraph,
    budget: AccessBudget,
    state: Mutex<State>,
}

impl<'g> AccessSimulator<'g> {
    pub fn new(graph: &'g DirectedGraph, budget: AccessBudget) -> Self {
        assert!(
            budget.calls_per_window > 0 && budget.window_length > 0 && budget.page_size > 0,
            "budget fields must be positive"
        );
        AccessSimulator { graph, budget, state: Mutex::new(State::default()) }
    }

    pub fn budget(&self) -> AccessBudget {
        self.budget
    }

    pub fn graph(&self) -> &'g DirectedGraph {
        self.graph
    }

    fn state(&self) -> std::sync::MutexGuard<'_, State> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Advances simulated time.
    pub fn tick(&self, units: u64) {
        let mut st = self.state();
        st.now += units;
        st.roll(&self.budget);
    }

    /// Advances to the start of the next window.
    pub fn next_window(&self) {
        let mut st = self.state();
        let wait = st.retry_after(&self.budget);
        st.now += wait;
        st.roll(&self.budget);
    }

    pub fn now(&self) -> u64 {
        self.state().now
    }

    pub fn remaining_calls(&self) -> u32 {
        let mut st = self.state();
        st.roll(&self.budget);
        self.budget.calls_per_window - st.used
    }

    pub fn log(&self) -> Vec<LogEntry> {
        self.state().log.clone()
    }

    /// Total calls charged so far.
    pub fn calls_made(&self) -> usize {
        self.state().log.iter().filter(|e| e.outcome != Outcome::RateLimited).count()
    }

    /// Charges `calls` against the budget or refuses all of them.
    fn charge(
        &self,
        st: &mut State,
        calls: u32,
        resource: Resource,
        target: Option<UserId>,
        page: u64,
    ) -> Result<(), AccessError> {
        st.roll(&self.budget);
        if self.budget.calls_per_window - st.used < calls {
            let window = st.window;
            st.log.push(LogEntry { resource, target, page, outcome: Outcome::RateLimited, window });
            return Err(AccessError::RateLimited { retry_after: st.retry_after(&self.budget) });
        }
        st.used += calls;
        Ok(())
    }

    /// Resolves IDs to attributes and degree counts. Unknown or deleted IDs
    /// are left out. Costs one call per batch of up to 100 IDs; a request
    /// is either charged in full or refused.
    pub fn users_lookup(&self, ids: &[UserId]) -> Result<Vec<LookupRow>, AccessError> {
        if ids.is_empty() {
            return Ok(Vec::new());
        }
        let batches = ids.len().div_ceil(LOOKUP_BATCH);
        let mut st = self.state();
        self.charge(&mut st, batches as u32, Resource::UsersLookup, ids.first().copied(), 0)?;
        let window = st.window;
        for b in 0..batches {
            st.log.push(LogEntry {
                resource: Resource::UsersLookup,
                target: Some(ids[b * LOOKUP_BATCH]),
                page: b as u64,
                outcome: Outcome::Ok,
                window,
            });
        }
        drop(st);

        let mut seen = std::collections::HashSet::new();
        Ok(ids
            .iter()
            .filter(|id| seen.insert(**id))
            .filter_map(|&id| {
                let ix = self.graph.index_of(id)?;
                let rec = self.graph.record_at(ix);
                rec.exists.then(|| {
                    let d = self.graph.degrees_at(ix);
                    LookupRow {
                        id,
                        language: rec.language.clone(),
                        k_in: d.k_in,
                        k_out: d.k_out,
                        protected: rec.protected,
                    }
                })
            })
            .collect())
    }

    /// One page of `u`'s follower IDs, ascending.
    pub fn followers_ids(&self, u: UserId, page: u64) -> Result<Vec<UserId>, AccessError> {
        self.list_page(Resource::FollowersIds, u, page)
    }

    /// One page of `u`'s friend IDs, ascending.
    pub fn friends_ids(&self, u: UserId, page: u64) -> Result<Vec<UserId>, AccessError> {
        self.list_page(Resource::FriendsIds, u, page)
    }

    fn list_page(&self, resource: Resource, u: UserId, page: u64) -> Result<Vec<UserId>, AccessError> {
        let mut st = self.state();
        self.charge(&mut st, 1, resource, Some(u), page)?;
        let window = st.window;
        let mut log = |outcome| st.log.push(LogEntry { resource, target: Some(u), page, outcome, window });

        let ix = match self.graph.index_of(u) {
            Some(ix) if self.graph.record_at(ix).exists => ix,
            _ => {
                log(Outcome::NotFound);
                return Err(AccessError::NotFound { user: u });
            }
        };
        if self.graph.record_at(ix).protected {
            log(Outcome::Protected);
            return Err(AccessError::Protected { user: u });
        }
        log(Outcome::Ok);
        let list = match resource {
            Resource::FollowersIds => self.graph.in_indices(ix),
            _ => self.graph.out_indices(ix),
        };
        let size = self.budget.page_size;
        let start = (page as usize).saturating_mul(size).min(list.len());
        let end = start.saturating_add(size).min(list.len());
        Ok(list[start..end].iter().map(|&j| self.graph.id_at(j as usize)).collect())
    }
}

/// Request line of the out-of-process protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Request {
    UsersLookup { ids: Vec<UserId> },
    FollowersIds { id: UserId, #[serde(default)] page: u64 },
    FriendsIds { id: UserId, #[serde(default)] page: u64 },
    Tick { units: u64 },
    Status,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ResponseBody {
    Users(Vec<LookupRow>),
    Ids(Vec<UserId>),
    Status { now: u64, remaining_calls: u32 },
}

/// One response line: `{"ok":true,"result":...}` or `{"ok":false,"error":{...}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub ok: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub result: Option<ResponseBody>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<serde_json::Value>,
}

impl Response {
    fn ok(body: ResponseBody) -> Self {
        Response { ok: true, result: Some(body), error: None }
    }

    fn err(e: serde_json::Value) -> Self {
        Response { ok: false, result: None, error: Some(e) }
    }
}

pub fn handle_request(sim: &AccessSimulator<'_>, req: Request) -> Response {
    let res = match req {
        Request::UsersLookup { ids } => sim.users_lookup(&ids).map(ResponseBody::Users),
        Request::FollowersIds { id, page } => sim.followers_ids(id, page).map(ResponseBody::Ids),
        Request::FriendsIds { id, page } => sim.friends_ids(id, page).map(ResponseBody::Ids),
        Request::Tick { units } => {
            sim.tick(units);
            Ok(ResponseBody::Status { now: sim.now(), remaining_calls: sim.remaining_calls() })
        }
        Request::Status => Ok(ResponseBody::Status { now: sim.now(), remaining_calls: sim.remaining_calls() }),
    };
    match res {
        Ok(body) => Response::ok(body),
        Err(e) => Response::err(serde_json::to_value(e).expect("serializable")),
    }
}

/// Serves line-delimited JSON requests until EOF. Blank lines are skipped;
/// malformed lines get a `bad_request` error and the loop continues.
pub fn serve_jsonl<R: BufRead, W: Write>(sim: &AccessSimulator<'_>, reader: R, mut writer: W) -> io::Result<()> {
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let resp = match serde_json::from_str::<Request>(&line) {
            Ok(req) => handle_request(sim, req),
            Err(e) => Response::err(serde_json::json!({ "kind": "bad_request", "message": e.to_string() })),
        };
        serde_json::to_writer(&mut writer, &resp)?;
        writeln!(writer)?;
        writer.flush()?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{GraphBuilder, UserRecord};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn star(followers: u64) -> DirectedGraph {
        let mut b = GraphBuilder::new();
        b.add_user(UserRecord::new(UserId(1), "ja"));
        for f in 0..followers {
            b.add_edge(UserId(100 + f), UserId(1)).unwrap();
        }
        b.build().unwrap()
    }

    fn budget(calls: u32, page: usize) -> AccessBudget {
        AccessBudget { calls_per_window: calls, window_length: 10, page_size: page }
    }

    #[test]
    fn lookup_matches_degrees_and_omits_gaps() {
        let g = star(3);
        let sim = AccessSimulator::new(&g, budget(10, 5000));
        let rows = sim.users_lookup(&[UserId(1), UserId(5), UserId(100)]).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].id, UserId(1));
        assert_eq!((rows[0].k_in, rows[0].k_out), (3, 0));
        assert_eq!(rows[0].language, "ja");
        assert_eq!((rows[1].k_in, rows[1].k_out), (0, 1));
    }

    #[test]
    fn lookup_charges_per_hundred() {
        let g = star(1);
        let sim = AccessSimulator::new(&g, budget(10, 5000));
        let ids: Vec<UserId> = (0..250).map(UserId).collect();
        sim.users_lookup(&ids).unwrap();
        assert_eq!(sim.remaining_calls(), 7);
        assert_eq!(sim.calls_made(), 3);
    }

    #[test]
    fn lookup_is_all_or_nothing() {
        let g = star(1);
        let sim = AccessSimulator::new(&g, budget(2, 5000));
        let ids: Vec<UserId> = (0..250).map(UserId).collect();
        assert!(matches!(sim.users_lookup(&ids), Err(AccessError::RateLimited { retry_after: 10 })));
        assert_eq!(sim.remaining_calls(), 2);
    }

    #[test]
    fn pages_split_followers() {
        let g = star(12_000);
        let sim = AccessSimulator::new(&g, AccessBudget::unlimited());
        let sizes: Vec<usize> = (0..4).map(|p| sim.followers_ids(UserId(1), p).unwrap().len()).collect();
        assert_eq!(sizes, vec![5000, 5000, 2000, 0]);
        let all: Vec<UserId> = (0..3).flat_map(|p| sim.followers_ids(UserId(1), p).unwrap()).collect();
        assert_eq!(all, g.followers(UserId(1)).unwrap());

        let empty = sim.followers_ids(UserId(100), 0).unwrap();
        assert!(empty.is_empty());
    }

    #[test]
    fn friends_pages_mirror_followers() {
        let mut b = GraphBuilder::new();
        for v in 0..12_000u64 {
            b.add_edge(UserId(1), UserId(100 + v)).unwrap();
        }
        let g = b.build().unwrap();
        let sim = AccessSimulator::new(&g, AccessBudget::unlimited());
        let sizes: Vec<usize> = (0..3).map(|p| sim.friends_ids(UserId(1), p).unwrap().len()).collect();
        assert_eq!(sizes, vec![5000, 5000, 2000]);
        let all: Vec<UserId> = (0..3).flat_map(|p| sim.friends_ids(UserId(1), p).unwrap()).collect();
        assert_eq!(all, g.friends(UserId(1)).unwrap());
        assert!(sim.friends_ids(UserId(100), 0).unwrap().is_empty());
    }

    #[test]
    fn protected_endpoints_refuse() {
        let mut b = GraphBuilder::new();
        let mut p = UserRecord::new(UserId(2), "en");
        p.protected = true;
        b.add_user(p);
        b.add_edge(UserId(2), UserId(1)).unwrap();
        b.add_edge(UserId(3), UserId(2)).unwrap();
        let g = b.build().unwrap();
        let sim = AccessSimulator::new(&g, AccessBudget::unlimited());
        assert_eq!(sim.followers_ids(UserId(2), 0), Err(AccessError::Protected { user: UserId(2) }));
        assert_eq!(sim.friends_ids(UserId(2), 0), Err(AccessError::Protected { user: UserId(2) }));
        // still visible from the other side
        assert_eq!(sim.followers_ids(UserId(1), 0).unwrap(), vec![UserId(2)]);
        assert!(sim.users_lookup(&[UserId(2)]).unwrap()[0].protected);
        assert_eq!(sim.followers_ids(UserId(77), 0), Err(AccessError::NotFound { user: UserId(77) }));
    }

    #[test]
    fn budget_resets_after_window() {
        let g = star(1);
        let sim = AccessSimulator::new(&g, budget(2, 10));
        sim.followers_ids(UserId(1), 0).unwrap();
        sim.tick(3);
        sim.followers_ids(UserId(1), 0).unwrap();
        assert_eq!(sim.followers_ids(UserId(1), 0), Err(AccessError::RateLimited { retry_after: 7 }));
        sim.next_window();
        assert_eq!(sim.now(), 10);
        assert!(sim.followers_ids(UserId(1), 0).is_ok());
    }

    #[test]
    fn fuzzed_calls_respect_budget() {
        let g = star(50);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let sim = AccessSimulator::new(&g, budget(5, 7));
        for _ in 0..5000 {
            match rng.random_range(0..5) {
                0 => {
                    let n = rng.random_range(0..350);
                    let ids: Vec<UserId> = (0..n).map(|_| UserId(rng.random_range(0..200))).collect();
                    let _ = sim.users_lookup(&ids);
                }
                1 => {
                    let _ = sim.followers_ids(UserId(1), rng.random_range(0..10));
                }
                2 => {
                    let _ = sim.friends_ids(UserId(rng.random_range(90..160)), 0);
                }
                _ => sim.tick(rng.random_range(0..4)),
            }
        }
        let mut per_window = std::collections::HashMap::new();
        for e in sim.log() {
            if e.outcome != Outcome::RateLimited {
                *per_window.entry(e.window).or_insert(0u32) += 1;
            }
        }
        assert!(per_window.values().all(|&c| c <= 5));
        assert!(per_window.len() > 10);
    }

    #[test]
    fn jsonl_protocol() {
        let g = star(3);
        let sim = AccessSimulator::new(&g, budget(2, 2));
        let input = [
            r#"{"op":"followers_ids","id":1,"page":1}"#,
            r#"{"op":"users_lookup","ids":[1,9]}"#,
            r#"{"op":"friends_ids","id":1}"#,
            "not json",
            r#"{"op":"tick","units":10}"#,
        ]
        .join("\n");
        let mut out = Vec::new();
        serve_jsonl(&sim, input.as_bytes(), &mut out).unwrap();
        let lines: Vec<serde_json::Value> = String::from_utf8(out)
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        assert_eq!(lines[0], serde_json::json!({"ok": true, "result": [102]}));
        assert_eq!(lines[1]["result"][0]["k_in"], 3);
        assert_eq!(lines[2]["ok"], false);
        assert_eq!(lines[2]["error"]["kind"], "rate_limited");
        assert_eq!(lines[2]["error"]["retry_after"], 10);
        assert_eq!(lines[3]["error"]["kind"], "bad_request");
        assert_eq!(lines[4]["result"], serde_json::json!({"now": 10, "remaining_calls": 2}));
    }
}
