//! Directed followership graph.
//!
//! A link points from the follower to the followee. For a user `u`,
//! `k_in(u)` counts followers and `k_out(u)` counts friends (users that `u`
//! follows). Both adjacency directions are stored so that follower and
//! friend queries are equally cheap.
//!
//! Graphs are immutable once built; use [`GraphBuilder`] or
//! [`load_edge_list`] to construct one.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::io::write_atomic;

/// Language tag given to users that only appear in an edge file.
pub const DEFAULT_LANGUAGE: &str = "und";

/// Numeric user identifier. IDs need not be contiguous.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UserId(pub u64);

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl FromStr for UserId {
    type Err = std::num::ParseIntError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.parse().map(UserId)
    }
}

impl From<u64> for UserId {
    fn from(v: u64) -> Self {
        UserId(v)
    }
}

/// Per-user attributes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserRecord {
    pub id: UserId,
    pub language: String,
    pub protected: bool,
    /// `false` for deleted or banned accounts; such users carry no edges.
    pub exists: bool,
    /// Account run by an organization or company (never chosen as a seed).
    pub organization: bool,
}

impl UserRecord {
    pub fn new(id: UserId, language: impl Into<String>) -> Self {
        UserRecord {
            id,
            language: language.into(),
            protected: false,
            exists: true,
            organization: false,
        }
    }

    fn with_defaults(id: UserId) -> Self {
        UserRecord::new(id, DEFAULT_LANGUAGE)
    }
}

/// Follower and friend counts of one user.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Degrees {
    /// Number of followers.
    pub k_in: u64,
    /// Number of friends.
    pub k_out: u64,
}

impl Degrees {
    pub fn new(k_in: u64, k_out: u64) -> Self {
        Degrees { k_in, k_out }
    }
}

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: self-loop on user {user}")]
    SelfLoop { line: usize, user: UserId },
    #[error("unknown user {0}")]
    NotFound(UserId),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("user {0} is marked as nonexistent but has incident edges")]
    EdgeOnMissingUser(UserId),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Immutable directed graph over [`UserRecord`]s.
///
/// Users are stored sorted by ID and addressed internally by a dense index;
/// adjacency lists are sorted by index, which is the same as ID order.
#[derive(Debug, Clone)]
pub struct DirectedGraph {
    users: Vec<UserRecord>,
    index: HashMap<UserId, u32>,
    out_adj: Vec<Vec<u32>>,
    in_adj: Vec<Vec<u32>>,
    n_edges: usize,
    duplicates_collapsed: usize,
}

impl PartialEq for DirectedGraph {
    fn eq(&self, other: &Self) -> bool {
        self.users == other.users && self.out_adj == other.out_adj
    }
}

impl Eq for DirectedGraph {}

impl Default for DirectedGraph {
    fn default() -> Self {
        GraphBuilder::new().build().expect("empty graph is valid")
    }
}

impl DirectedGraph {
    pub fn user_count(&self) -> usize {
        self.users.len()
    }

    pub fn edge_count(&self) -> usize {
        self.n_edges
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }

    /// Number of repeated edges dropped while building.
    pub fn duplicates_collapsed(&self) -> usize {
        self.duplicates_collapsed
    }

    pub fn contains(&self, id: UserId) -> bool {
        self.index.contains_key(&id)
    }

    pub fn user(&self, id: UserId) -> Option<&UserRecord> {
        self.index.get(&id).map(|&i| &self.users[i as usize])
    }

    /// Users in ascending ID order.
    pub fn users(&self) -> impl ExactSizeIterator<Item = &UserRecord> + '_ {
        self.users.iter()
    }

    pub fn ids(&self) -> impl ExactSizeIterator<Item = UserId> + '_ {
        self.users.iter().map(|u| u.id)
    }

    /// Smallest and largest assigned ID.
    pub fn id_bounds(&self) -> Option<(UserId, UserId)> {
        Some((self.users.first()?.id, self.users.last()?.id))
    }

    pub fn index_of(&self, id: UserId) -> Option<usize> {
        self.index.get(&id).map(|&i| i as usize)
    }

    pub fn id_at(&self, ix: usize) -> UserId {
        self.users[ix].id
    }

    pub fn record_at(&self, ix: usize) -> &UserRecord {
        &self.users[ix]
    }

    /// Friends of the user at `ix`, as sorted indices.
    pub fn out_indices(&self, ix: usize) -> &[u32] {
        &self.out_adj[ix]
    }

    /// Followers of the user at `ix`, as sorted indices.
    pub fn in_indices(&self, ix: usize) -> &[u32] {
        &self.in_adj[ix]
    }

    pub fn degrees_at(&self, ix: usize) -> Degrees {
        Degrees::new(self.in_adj[ix].len() as u64, self.out_adj[ix].len() as u64)
    }

    pub fn has_edge_ix(&self, from: usize, to: usize) -> bool {
        self.out_adj[from].binary_search(&(to as u32)).is_ok()
    }

    fn require(&self, id: UserId) -> Result<usize, GraphError> {
        self.index_of(id).ok_or(GraphError::NotFound(id))
    }

    pub fn degrees(&self, id: UserId) -> Result<Degrees, GraphError> {
        Ok(self.degrees_at(self.require(id)?))
    }

    /// Users following `id`, ascending.
    pub fn followers(&self, id: UserId) -> Result<Vec<UserId>, GraphError> {
        let ix = self.require(id)?;
        Ok(self.in_adj[ix].iter().map(|&j| self.id_at(j as usize)).collect())
    }

    /// Users that `id` follows, ascending.
    pub fn friends(&self, id: UserId) -> Result<Vec<UserId>, GraphError> {
        let ix = self.require(id)?;
        Ok(self.out_adj[ix].iter().map(|&j| self.id_at(j as usize)).collect())
    }

    pub fn has_edge(&self, follower: UserId, followee: UserId) -> bool {
        match (self.index_of(follower), self.index_of(followee)) {
            (Some(a), Some(b)) => self.has_edge_ix(a, b),
            _ => false,
        }
    }

    /// True iff `u` and `v` follow each other.
    pub fn is_reciprocal(&self, u: UserId, v: UserId) -> Result<bool, GraphError> {
        if u == v {
            return Err(GraphError::InvalidArgument(format!(
                "reciprocity of user {u} with itself"
            )));
        }
        let a = self.require(u)?;
        let b = self.require(v)?;
        Ok(self.has_edge_ix(a, b) && self.has_edge_ix(b, a))
    }

    /// All edges as (follower, followee), sorted.
    pub fn edges(&self) -> impl Iterator<Item = (UserId, UserId)> + '_ {
        self.out_adj.iter().enumerate().flat_map(move |(i, outs)| {
            let from = self.users[i].id;
            outs.iter().map(move |&j| (from, self.users[j as usize].id))
        })
    }
}

/// Accumulates users and edges, then freezes them into a [`DirectedGraph`].
#[derive(Debug, Default, Clone)]
pub struct GraphBuilder {
    users: BTreeMap<UserId, UserRecord>,
    edges: Vec<(UserId, UserId)>,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts or replaces a user's attributes.
    pub fn add_user(&mut self, record: UserRecord) -> &mut Self {
        self.users.insert(record.id, record);
        self
    }

    pub fn add_edge(&mut self, follower: UserId, followee: UserId) -> Result<&mut Self, GraphError> {
        if follower == followee {
            return Err(GraphError::SelfLoop { line: 0, user: follower });
        }
        self.edges.push((follower, followee));
        Ok(self)
    }

    pub fn build(self) -> Result<DirectedGraph, GraphError> {
        let GraphBuilder { mut users, mut edges } = self;
        for &(a, b) in &edges {
            users.entry(a).or_insert_with(|| UserRecord::with_defaults(a));
            users.entry(b).or_insert_with(|| UserRecord::with_defaults(b));
        }
        let users: Vec<UserRecord> = users.into_values().collect();
        let index: HashMap<UserId, u32> = users
            .iter()
            .enumerate()
            .map(|(i, u)| (u.id, i as u32))
            .collect();

        edges.sort_unstable();
        let before = edges.len();
        edges.dedup();
        let duplicates_collapsed = before - edges.len();

        let n = users.len();
        let mut out_adj = vec![Vec::new(); n];
        let mut in_adj = vec![Vec::new(); n];
        for &(a, b) in &edges {
            let ia = index[&a];
            let ib = index[&b];
            for (ix, id) in [(ia, a), (ib, b)] {
                if !users[ix as usize].exists {
                    return Err(GraphError::EdgeOnMissingUser(id));
                }
            }
            out_adj[ia as usize].push(ib);
            in_adj[ib as usize].push(ia);
        }
        // edges were sorted by ID, and index order is ID order, so out lists are sorted;
        // in lists are filled in follower order, hence sorted as well.
        if duplicates_collapsed > 0 {
            log::warn!("collapsed {duplicates_collapsed} duplicate edges");
        }
        Ok(DirectedGraph {
            users,
            index,
            out_adj,
            in_adj,
            n_edges: edges.len(),
            duplicates_collapsed,
        })
    }
}

/// Builds a graph directly from dense adjacency. `records[i]` is node `i`;
/// `out_adj[i]` lists its friends by node index. Used by the generator.
pub(crate) fn from_dense(records: Vec<UserRecord>, out_adj: &[Vec<u32>]) -> Result<DirectedGraph, GraphError> {
    let mut b = GraphBuilder::new();
    for (i, outs) in out_adj.iter().enumerate() {
        for &j in outs {
            b.add_edge(records[i].id, records[j as usize].id)?;
        }
    }
    for r in records {
        b.add_user(r);
    }
    b.build()
}

fn parse_id(field: &str, line: usize) -> Result<UserId, GraphError> {
    field.parse().map_err(|_| GraphError::Parse {
        line,
        message: format!("invalid user id {field:?}"),
    })
}

fn parse_flag(field: &str, line: usize) -> Result<bool, GraphError> {
    match field {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(GraphError::Parse {
            line,
            message: format!("expected 0 or 1, got {other:?}"),
        }),
    }
}

/// Reads an edge list (`follower<TAB>followee` per line) and an optional
/// attribute file (`id<TAB>language<TAB>protected[<TAB>flags]`).
///
/// Fields may be separated by any whitespace. Blank lines are ignored and
/// repeated edges collapse to one. The optional `flags` column is a
/// comma-separated list of `org` and `deleted`.
pub fn load_edge_list(path: &Path, attrs_path: Option<&Path>) -> Result<DirectedGraph, GraphError> {
    let mut builder = GraphBuilder::new();
    read_edges(BufReader::new(File::open(path)?), &mut builder)?;
    if let Some(attrs) = attrs_path {
        read_attributes(BufReader::new(File::open(attrs)?), &mut builder)?;
    }
    builder.build()
}

pub fn read_edges<R: BufRead>(reader: R, builder: &mut GraphBuilder) -> Result<(), GraphError> {
    for (n, line) in reader.lines().enumerate() {
        let line_no = n + 1;
        let line = line?;
        let mut fields = line.split_whitespace();
        let Some(first) = fields.next() else { continue };
        let (Some(second), None) = (fields.next(), fields.next()) else {
            return Err(GraphError::Parse {
                line: line_no,
                message: "expected exactly two fields".into(),
            });
        };
        let a = parse_id(first, line_no)?;
        let b = parse_id(second, line_no)?;
        if a == b {
            return Err(GraphError::SelfLoop { line: line_no, user: a });
        }
        builder.edges.push((a, b));
    }
    Ok(())
}

pub fn read_attributes<R: BufRead>(reader: R, builder: &mut GraphBuilder) -> Result<(), GraphError> {
    for (n, line) in reader.lines().enumerate() {
        let line_no = n + 1;
        let line = line?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if !(3..=4).contains(&fields.len()) {
            return Err(GraphError::Parse {
                line: line_no,
                message: format!("expected 3 or 4 fields, got {}", fields.len()),
            });
        }
        let mut rec = UserRecord::new(parse_id(fields[0], line_no)?, fields[1]);
        rec.protected = parse_flag(fields[2], line_no)?;
        if let Some(flags) = fields.get(3) {
            for flag in flags.split(',') {
                match flag {
                    "org" => rec.organization = true,
                    "deleted" => rec.exists = false,
                    other => {
                        return Err(GraphError::Parse {
                            line: line_no,
                            message: format!("unknown flag {other:?}"),
                        })
                    }
                }
            }
        }
        builder.add_user(rec);
    }
    Ok(())
}

pub fn write_edges<W: Write + ?Sized>(g: &DirectedGraph, w: &mut W) -> io::Result<()> {
    for (a, b) in g.edges() {
        writeln!(w, "{a}\t{b}")?;
    }
    Ok(())
}

pub fn write_attributes<W: Write + ?Sized>(g: &DirectedGraph, w: &mut W) -> io::Result<()> {
    for u in g.users() {
        write!(w, "{}\t{}\t{}", u.id, u.language, u8::from(u.protected))?;
        let mut flags = Vec::new();
        if u.organization {
            flags.push("org");
        }
        if !u.exists {
            flags.push("deleted");
        }
        if !flags.is_empty() {
            write!(w, "\t{}", flags.join(","))?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Writes the edge list in canonical (sorted) order.
pub fn save_edge_list(g: &DirectedGraph, path: &Path) -> Result<(), GraphError> {
    write_atomic(path, |w| write_edges(g, w))?;
    Ok(())
}

pub fn save_attributes(g: &DirectedGraph, path: &Path) -> Result<(), GraphError> {
    write_atomic(path, |w| write_attributes(g, w))?;
    Ok(())
}

/// Conventional file names inside a graph directory.
pub const EDGES_FILE: &str = "edges.tsv";
pub const USERS_FILE: &str = "users.tsv";

/// Saves `edges.tsv` and `users.tsv` under `dir`.
pub fn save_graph_dir(g: &DirectedGraph, dir: &Path) -> Result<(), GraphError> {
    save_edge_list(g, &dir.join(EDGES_FILE))?;
    save_attributes(g, &dir.join(USERS_FILE))
}

pub fn load_graph_dir(dir: &Path) -> Result<DirectedGraph, GraphError> {
    let attrs = dir.join(USERS_FILE);
    let attrs = attrs.exists().then_some(attrs);
    load_edge_list(&dir.join(EDGES_FILE), attrs.as_deref())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn graph(edges: &[(u64, u64)]) -> DirectedGraph {
        let mut b = GraphBuilder::new();
        for &(a, c) in edges {
            b.add_edge(UserId(a), UserId(c)).unwrap();
        }
        b.build().unwrap()
    }

    fn random_graph(n: u64, m: usize, seed: u64) -> (DirectedGraph, HashSet<(u64, u64)>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut set = HashSet::new();
        let mut b = GraphBuilder::new();
        for i in 0..n {
            b.add_user(UserRecord::new(UserId(i), "en"));
        }
        while set.len() < m {
            let a = rng.random_range(0..n);
            let c = rng.random_range(0..n);
            if a != c && set.insert((a, c)) {
                b.add_edge(UserId(a), UserId(c)).unwrap();
            }
        }
        (b.build().unwrap(), set)
    }

    fn parse(text: &str) -> Result<DirectedGraph, GraphError> {
        let mut b = GraphBuilder::new();
        read_edges(text.as_bytes(), &mut b)?;
        b.build()
    }

    #[test]
    fn minimal_reciprocal_pair() {
        let g = parse("1 2\n2 1\n").unwrap();
        assert_eq!(g.user_count(), 2);
        assert_eq!(g.edge_count(), 2);
        assert!(g.is_reciprocal(UserId(1), UserId(2)).unwrap());
        assert_eq!(g.user(UserId(1)).unwrap().language, DEFAULT_LANGUAGE);
    }

    #[test]
    fn empty_input() {
        let g = parse("").unwrap();
        assert_eq!(g.user_count(), 0);
        assert_eq!(g.edge_count(), 0);
    }

    #[test]
    fn duplicate_lines_collapse() {
        let g = parse("1\t2\n1\t2\n1\t2\n").unwrap();
        assert_eq!(g.edge_count(), 1);
        assert_eq!(g.edges().count(), 1);
        assert_eq!(g.duplicates_collapsed(), 2);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        match parse("1\t2\n3\n") {
            Err(GraphError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        match parse("1\t2\nx\t3\n") {
            Err(GraphError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn self_loop_rejected() {
        match parse("1 2\n\n5 5\n") {
            Err(GraphError::SelfLoop { line, user }) => {
                assert_eq!(line, 3);
                assert_eq!(user, UserId(5));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn star_and_cycle_degrees() {
        let g = graph(&[(1, 0), (2, 0), (3, 0), (4, 0), (5, 0)]);
        assert_eq!(g.degrees(UserId(0)).unwrap(), Degrees::new(5, 0));
        let c = graph(&[(1, 2), (2, 3), (3, 1)]);
        for u in 1..=3 {
            assert_eq!(c.degrees(UserId(u)).unwrap(), Degrees::new(1, 1));
        }
        assert!(matches!(c.degrees(UserId(9)), Err(GraphError::NotFound(_))));
    }

    #[test]
    fn degrees_match_edge_scan() {
        let (g, set) = random_graph(50, 400, 7);
        for u in 0..50u64 {
            let k_in = set.iter().filter(|&&(_, b)| b == u).count() as u64;
            let k_out = set.iter().filter(|&&(a, _)| a == u).count() as u64;
            assert_eq!(g.degrees(UserId(u)).unwrap(), Degrees::new(k_in, k_out));
        }
        let total_in: u64 = g.ids().map(|u| g.degrees(u).unwrap().k_in).sum();
        let total_out: u64 = g.ids().map(|u| g.degrees(u).unwrap().k_out).sum();
        assert_eq!(total_in as usize, g.edge_count());
        assert_eq!(total_out as usize, g.edge_count());
    }

    #[test]
    fn reciprocity_matches_set_membership() {
        let (g, set) = random_graph(30, 300, 11);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let u = rng.random_range(0..30u64);
            let mut v = rng.random_range(0..30u64);
            while v == u {
                v = rng.random_range(0..30u64);
            }
            let expect = set.contains(&(u, v)) && set.contains(&(v, u));
            assert_eq!(g.is_reciprocal(UserId(u), UserId(v)).unwrap(), expect);
        }
        assert!(g.is_reciprocal(UserId(1), UserId(1)).is_err());
        assert!(matches!(g.is_reciprocal(UserId(1), UserId(999)), Err(GraphError::NotFound(_))));
        let one_way = graph(&[(1, 2)]);
        assert!(!one_way.is_reciprocal(UserId(1), UserId(2)).unwrap());
    }

    #[test]
    fn adjacency_views_agree() {
        let (g, _) = random_graph(200, 5000, 5);
        for i in 0..g.user_count() {
            for &j in g.out_indices(i) {
                assert!(g.in_indices(j as usize).binary_search(&(i as u32)).is_ok());
            }
            for &j in g.in_indices(i) {
                assert!(g.out_indices(j as usize).binary_search(&(i as u32)).is_ok());
            }
        }
    }

    #[test]
    fn attributes_and_flags_round_trip() {
        let mut b = GraphBuilder::new();
        let mut r = UserRecord::new(UserId(3), "ja");
        r.protected = true;
        r.organization = true;
        b.add_user(r);
        let mut gone = UserRecord::new(UserId(9), "en");
        gone.exists = false;
        b.add_user(gone);
        b.add_edge(UserId(3), UserId(4)).unwrap();
        let g = b.build().unwrap();

        let dir = tempfile::tempdir().unwrap();
        save_graph_dir(&g, dir.path()).unwrap();
        let text = std::fs::read_to_string(dir.path().join(USERS_FILE)).unwrap();
        assert_eq!(text, "3\tja\t1\torg\n4\tund\t0\n9\ten\t0\tdeleted\n");
        let back = load_graph_dir(dir.path()).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn edges_on_deleted_user_rejected() {
        let mut b = GraphBuilder::new();
        let mut gone = UserRecord::new(UserId(1), "en");
        gone.exists = false;
        b.add_user(gone);
        b.add_edge(UserId(1), UserId(2)).unwrap();
        assert!(matches!(b.build(), Err(GraphError::EdgeOnMissingUser(UserId(1)))));
    }

    #[test]
    fn save_empty_and_pair() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.tsv");
        save_edge_list(&DirectedGraph::default(), &p).unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"");

        let g = graph(&[(2, 1), (1, 2)]);
        save_edge_list(&g, &p).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "1\t2\n2\t1\n");
        assert_eq!(load_edge_list(&p, None).unwrap(), g);
    }

    #[test]
    fn random_round_trip() {
        let (g, _) = random_graph(300, 1000, 99);
        let dir = tempfile::tempdir().unwrap();
        save_graph_dir(&g, dir.path()).unwrap();
        let back = load_graph_dir(dir.path()).unwrap();
        assert_eq!(back, g);
        let a: Vec<_> = g.edges().collect();
        let b: Vec<_> = back.edges().collect();
        assert_eq!(a, b);
    }
}
