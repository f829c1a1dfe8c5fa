//! `egonet pagerank`: walker visit counts, the band table and a comparison
//! of both walk policies against the exact scores.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use egonet::pagerank::{
    band_visit_table, exact_pagerank, pearson, rw_visit_counts, visit_frequencies, write_band_table, DegreeBand,
    StartSelection, WalkConfig, WalkPolicy,
};
use egonet::{TypeLabel, TypeThresholds, UserId};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::manifest::Outputs;
use crate::run::{load_graph, load_labels};
use crate::sample::load_sample;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Fixed,
    Geometric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PagerankParams {
    pub policy: PolicyKind,
    pub steps: u32,
    /// Teleport probability of the geometric policy and of the exact scores.
    pub q: f64,
    pub n_starts: usize,
    pub start_selection: StartSelection,
    pub bands: Vec<DegreeBand>,
    /// Subsample the larger type per band to the size of the smaller.
    pub balance: bool,
    pub oracle_tol: f64,
    pub types: TypeThresholds,
    pub rng_seed: u64,
}

impl Default for PagerankParams {
    fn default() -> Self {
        PagerankParams {
            policy: PolicyKind::Fixed,
            steps: WalkPolicy::DEFAULT_STEPS,
            q: WalkPolicy::DEFAULT_Q,
            n_starts: 1500,
            start_selection: StartSelection::UniformWithoutReplacement,
            bands: DegreeBand::standard(),
            balance: true,
            oracle_tol: 1e-12,
            types: TypeThresholds::default(),
            rng_seed: 0,
        }
    }
}

impl PagerankParams {
    fn walk(&self, kind: PolicyKind) -> WalkConfig {
        let policy = match kind {
            PolicyKind::Fixed => WalkPolicy::Fixed { steps: self.steps },
            PolicyKind::Geometric => WalkPolicy::Geometric { q: self.q },
        };
        WalkConfig { policy, n_starts: self.n_starts, start_selection: self.start_selection, rng_seed: self.rng_seed }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PagerankRun {
    pub graph: PathBuf,
    pub labels: Option<PathBuf>,
    /// Sample sets whose members form the start pool; every user when empty.
    pub pool: Vec<PathBuf>,
    pub params: PagerankParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyComparison {
    pub policy: PolicyKind,
    pub total_visits: u64,
    pub terminated_walks: u64,
    pub pearson: Option<f64>,
    pub max_abs_error: f64,
}

impl PagerankRun {
    pub fn execute(&self, out: &mut Outputs) -> Result<()> {
        let g = load_graph(&self.graph)?;
        let p = &self.params;
        let pool: Vec<UserId> = if self.pool.is_empty() {
            g.ids().collect()
        } else {
            let mut members = BTreeSet::new();
            for path in &self.pool {
                members.extend(load_sample(path)?.members);
            }
            members.into_iter().collect()
        };
        p.walk(p.policy).validate(pool.len())?;

        let exact = exact_pagerank(&g, p.q, p.oracle_tol)?;
        out.write("pagerank.csv", |w| exact.write_csv(w))?;
        let oracle = exact.dense();

        let mut primary = None;
        let mut comparison = Vec::new();
        for kind in [PolicyKind::Fixed, PolicyKind::Geometric] {
            let counts = rw_visit_counts(&g, &p.walk(kind), &pool)?;
            let freq = visit_frequencies(&g, &counts);
            let r = pearson(&freq, &oracle);
            let max_abs_error = freq.iter().zip(&oracle).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            log::info!("{kind:?} policy: pearson r = {}", r.map_or("n/a".into(), |r| format!("{r:.4}")));
            comparison.push(PolicyComparison {
                policy: kind,
                total_visits: counts.total_visits(),
                terminated_walks: counts.terminated_walks,
                pearson: r,
                max_abs_error,
            });
            if kind == p.policy {
                primary = Some(counts);
            }
        }
        let counts = primary.expect("both policies run");
        out.write("visits.csv", |w| {
            writeln!(w, "id,visits")?;
            for (id, v) in &counts.visits {
                writeln!(w, "{id},{v}")?;
            }
            Ok(())
        })?;
        out.write("comparison.csv", |w| {
            writeln!(w, "policy,total_visits,terminated_walks,pearson,max_abs_error")?;
            for c in &comparison {
                let r = c.pearson.map_or("n/a".to_string(), |r| r.to_string());
                let name = match c.policy {
                    PolicyKind::Fixed => "fixed",
                    PolicyKind::Geometric => "geometric",
                };
                writeln!(w, "{name},{},{},{r},{}", c.total_visits, c.terminated_walks, c.max_abs_error)?;
            }
            Ok(())
        })?;

        let labels: BTreeMap<UserId, TypeLabel> = match &self.labels {
            Some(path) => load_labels(path)?.labels,
            None => g
                .ids()
                .map(|u| (u, p.types.classify(g.degrees(u).expect("own id"))))
                .filter(|(_, t)| *t != TypeLabel::Neither)
                .collect(),
        };
        let labels: BTreeMap<UserId, TypeLabel> = labels.into_iter().filter(|(u, _)| g.contains(*u)).collect();
        let rows = band_visit_table(&g, &counts, &labels, &p.bands, p.balance.then_some(p.rng_seed))?;
        out.write("bands.csv", |w| write_band_table(&rows, w))?;
        Ok(())
    }
}
