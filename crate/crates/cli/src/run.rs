//! Resolved run specifications and their execution.

use std::path::{Path, PathBuf};

use egonet::graph::{load_graph_dir, write_attributes, write_edges, EDGES_FILE, USERS_FILE};
use egonet::synthgen::{generate, GenConfig, PlantedLabels, LABELS_FILE};
use egonet::DirectedGraph;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::manifest::{digest_inputs, Manifest, Outputs};
use crate::rank::PagerankRun;
use crate::report::ReportRun;
use crate::sample::SampleRun;

/// Everything needed to reproduce one subcommand invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum RunSpec {
    Generate(GenerateRun),
    Sample(SampleRun),
    Report(ReportRun),
    Pagerank(PagerankRun),
}

impl RunSpec {
    pub fn seed(&self) -> u64 {
        match self {
            RunSpec::Generate(r) => r.config.seed,
            RunSpec::Sample(r) => r.params.rng_seed,
            RunSpec::Report(r) => r.params.rng_seed,
            RunSpec::Pagerank(r) => r.params.rng_seed,
        }
    }

    pub fn inputs(&self) -> Vec<PathBuf> {
        match self {
            RunSpec::Generate(_) => Vec::new(),
            RunSpec::Sample(r) => graph_files(&r.graph),
            RunSpec::Report(r) => {
                let mut v = graph_files(&r.graph);
                v.extend(r.samples.iter().cloned());
                v.extend(r.labels.iter().cloned());
                v
            }
            RunSpec::Pagerank(r) => {
                let mut v = graph_files(&r.graph);
                v.extend(r.pool.iter().cloned());
                v.extend(r.labels.iter().cloned());
                v
            }
        }
    }

    fn execute(&self, out: &mut Outputs) -> Result<()> {
        match self {
            RunSpec::Generate(r) => r.execute(out),
            RunSpec::Sample(r) => r.execute(out, None),
            RunSpec::Report(r) => r.execute(out),
            RunSpec::Pagerank(r) => r.execute(out),
        }
    }
}

/// Executes `spec` into `dir` and writes its manifest there.
pub fn run(spec: RunSpec, dir: &Path) -> Result<Manifest> {
    run_with(spec, dir, |spec, out| spec.execute(out))
}

pub fn run_with<F>(spec: RunSpec, dir: &Path, exec: F) -> Result<Manifest>
where
    F: FnOnce(&RunSpec, &mut Outputs) -> Result<()>,
{
    let inputs = digest_inputs(&spec.inputs())?;
    let mut out = Outputs::new(dir)?;
    exec(&spec, &mut out)?;
    let manifest = Manifest {
        tool: "egonet".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed: spec.seed(),
        run: spec,
        inputs,
        outputs: out.digests()?,
    };
    manifest.save(dir)?;
    Ok(manifest)
}

/// Reruns a recorded run into `dir` and checks inputs and outputs against
/// the recorded digests. Returns the names of mismatching files.
pub fn rerun(manifest: &Manifest, dir: &Path) -> Result<Vec<String>> {
    let now = digest_inputs(&manifest.run.inputs())?;
    let changed: Vec<&str> = manifest
        .inputs
        .iter()
        .zip(&now)
        .filter(|(a, b)| a != b)
        .map(|(a, _)| a.path.as_str())
        .collect();
    if now.len() != manifest.inputs.len() || !changed.is_empty() {
        return Err(CliError::Data(format!("inputs changed since the recorded run: {}", changed.join(", "))));
    }
    let mut spec = manifest.run.clone();
    if let RunSpec::Sample(s) = &mut spec {
        // simulated time is free, so wait out rate limits instead of
        // stopping with a progress token
        s.params.wait = true;
    }
    let fresh = run_with(spec, dir, |spec, out| spec.execute(out))?;
    let mut bad = Vec::new();
    for d in &manifest.outputs {
        if !fresh.outputs.contains(d) {
            bad.push(d.path.clone());
        }
    }
    for d in &fresh.outputs {
        if !manifest.outputs.iter().any(|m| m.path == d.path) {
            bad.push(d.path.clone());
        }
    }
    Ok(bad)
}

pub fn graph_files(dir: &Path) -> Vec<PathBuf> {
    let mut v = vec![dir.join(EDGES_FILE)];
    let users = dir.join(USERS_FILE);
    if users.exists() {
        v.push(users);
    }
    v
}

pub fn load_graph(dir: &Path) -> Result<DirectedGraph> {
    let edges = dir.join(EDGES_FILE);
    if !edges.exists() {
        return Err(CliError::Data(format!("{}: no {EDGES_FILE} found", dir.display())));
    }
    let g = load_graph_dir(dir).map_err(|e| CliError::graph(dir, e))?;
    if g.duplicates_collapsed() > 0 {
        log::warn!("{}: collapsed {} duplicate edges", dir.display(), g.duplicates_collapsed());
    }
    log::info!("loaded {} users, {} edges from {}", g.user_count(), g.edge_count(), dir.display());
    Ok(g)
}

pub fn load_labels(path: &Path) -> Result<PlantedLabels> {
    PlantedLabels::load(path).map_err(|e| CliError::graph(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateRun {
    pub config: GenConfig,
}

impl GenerateRun {
    fn execute(&self, out: &mut Outputs) -> Result<()> {
        let net = generate(&self.config)?;
        log::info!("generated {} users, {} edges", net.graph.user_count(), net.graph.edge_count());
        out.write(EDGES_FILE, |w| write_edges(&net.graph, w))?;
        out.write(USERS_FILE, |w| write_attributes(&net.graph, w))?;
        let labels = net.labels.unwrap_or_default();
        out.write(LABELS_FILE, |w| labels.write(w))?;
        Ok(())
    }
}
