//! `egonet sample`: neighbor or random sampling through the simulated API.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use egonet::access::{AccessBudget, AccessSimulator};
use egonet::sampling::{select_seeds, NeighborJob, RandomJob, SampleMethod, SampleSet, SamplingError, SamplingJob};
use egonet::UserId;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::manifest::{sha256_file, Outputs};
use crate::run::{load_graph, graph_files};

pub const RESUME_FILE: &str = "resume.json";
pub const SUMMARY_FILE: &str = "summary.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleParams {
    pub method: SampleMethod,
    /// Seed languages for neighbor sampling; target languages for random
    /// sampling.
    pub languages: Vec<String>,
    pub seeds_per_language: usize,
    /// Seeds must have strictly fewer followers than this.
    pub follower_cap: u64,
    /// Followers drawn per seed.
    pub quota: usize,
    /// IDs drawn by random sampling.
    pub n_ids: usize,
    /// Top of the random-ID range; defaults to the largest ID in the graph.
    pub id_max: Option<UserId>,
    pub budget: AccessBudget,
    /// Wait out rate limits instead of stopping with a progress token.
    pub wait: bool,
    pub rng_seed: u64,
}

impl Default for SampleParams {
    fn default() -> Self {
        SampleParams {
            method: SampleMethod::Neighbor,
            languages: vec!["en".into()],
            seeds_per_language: 3,
            follower_cap: 500_000,
            quota: 50_000,
            n_ids: 1_500_000,
            id_max: None,
            budget: AccessBudget::default(),
            wait: false,
            rng_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRun {
    pub graph: PathBuf,
    pub params: SampleParams,
}

/// Progress of an interrupted run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResumeToken {
    pub params: SampleParams,
    pub graph_sha256: String,
    pub completed: Vec<SampleSet>,
    pub pending: Vec<SamplingJob>,
}

/// Per-seed RNG seed, so seeds are sampled independently.
fn seed_for(rng_seed: u64, seed_user: UserId) -> u64 {
    rng_seed ^ seed_user.0.wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

pub fn file_name(s: &SampleSet) -> String {
    match s.seed_user {
        Some(u) => format!("{}-{}-{u}.json", s.method.as_str(), s.language),
        None => format!("{}-{}.json", s.method.as_str(), s.language),
    }
}

impl SampleRun {
    fn graph_digest(&self) -> Result<String> {
        sha256_file(&graph_files(&self.graph)[0])
    }

    pub fn execute(&self, out: &mut Outputs, resume: Option<&Path>) -> Result<()> {
        let p = &self.params;
        if p.languages.is_empty() {
            return Err(CliError::Config("at least one language is required".into()));
        }
        if p.budget.calls_per_window == 0 || p.budget.window_length == 0 || p.budget.page_size == 0 {
            return Err(CliError::Config("budget fields must be positive".into()));
        }
        let g = load_graph(&self.graph)?;
        let digest = self.graph_digest()?;

        let (mut completed, pending) = match resume {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
                let token: ResumeToken =
                    serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
                if token.params != *p || token.graph_sha256 != digest {
                    return Err(CliError::Config(format!(
                        "{} was written for a different graph or different parameters",
                        path.display()
                    )));
                }
                (token.completed, token.pending)
            }
            None => (Vec::new(), self.plan(&g)?),
        };

        let sim = AccessSimulator::new(&g, p.budget);
        let mut queue = pending.into_iter();
        while let Some(job) = queue.next() {
            let res = if p.wait { job.run_to_completion(&sim) } else { job.resume(&sim) };
            match res {
                Ok(sets) => completed.extend(sets),
                Err(SamplingError::Resumable { job, retry_after }) => {
                    let mut pending = vec![*job];
                    pending.extend(queue);
                    let token = ResumeToken { params: p.clone(), graph_sha256: digest, completed, pending };
                    let path = out.dir().join(RESUME_FILE);
                    let body = serde_json::to_vec_pretty(&token)?;
                    egonet::io::write_bytes_atomic(&path, &body).map_err(|e| CliError::io(&path, e))?;
                    return Err(CliError::Data(format!(
                        "access budget exhausted (window resets in {retry_after} units); \
                         progress saved, continue with --resume {}",
                        path.display()
                    )));
                }
                Err(e) => return Err(e.into()),
            }
        }

        for s in &completed {
            out.write_json(&file_name(s), s)?;
        }
        out.write(SUMMARY_FILE, |w| write_summary(&completed, w))?;
        let stale = out.dir().join(RESUME_FILE);
        if stale.exists() {
            fs::remove_file(&stale).map_err(|e| CliError::io(&stale, e))?;
        }
        log::info!("{} sample sets, {} calls", completed.len(), sim.calls_made());
        Ok(())
    }

    fn plan(&self, g: &egonet::DirectedGraph) -> Result<Vec<SamplingJob>> {
        let p = &self.params;
        match p.method {
            SampleMethod::Neighbor => {
                let mut jobs = Vec::new();
                for lang in &p.languages {
                    for seed in select_seeds(g, lang, p.seeds_per_language, p.follower_cap)? {
                        let job = NeighborJob::new(seed, p.quota, seed_for(p.rng_seed, seed))?;
                        jobs.push(SamplingJob::Neighbor(job));
                    }
                }
                Ok(jobs)
            }
            SampleMethod::Random => {
                let id_max = match p.id_max {
                    Some(m) => m,
                    None => g.id_bounds().map(|b| b.1).ok_or_else(|| CliError::Data("graph has no users".into()))?,
                };
                let langs: BTreeSet<String> = p.languages.iter().cloned().collect();
                Ok(vec![SamplingJob::Random(RandomJob::new(p.n_ids, id_max, langs, p.rng_seed)?)])
            }
        }
    }
}

/// Per-set retained counts and discards.
fn write_summary(sets: &[SampleSet], w: &mut dyn Write) -> std::io::Result<()> {
    writeln!(w, "method,language,seed_user,members,discarded_language,discarded_invalid")?;
    for s in sets {
        let seed = s.seed_user.map(|u| u.to_string()).unwrap_or_default();
        writeln!(
            w,
            "{},{},{seed},{},{},{}",
            s.method.as_str(),
            s.language,
            s.members.len(),
            s.discarded_language,
            s.discarded_invalid
        )?;
    }
    Ok(())
}

/// Sample files named on the command line; directories contribute every
/// sample set file they contain.
pub fn resolve_sample_paths(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let entries = fs::read_dir(p).map_err(|e| CliError::io(p, e))?;
            for e in entries {
                let path = e.map_err(|e| CliError::io(p, e))?.path();
                let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
                if (name.starts_with("neighbor-") || name.starts_with("random-")) && name.ends_with(".json") {
                    out.push(absolute(&path)?);
                }
            }
        } else {
            out.push(absolute(p)?);
        }
    }
    out.sort();
    out.dedup();
    Ok(out)
}

pub fn load_sample(path: &Path) -> Result<SampleSet> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn absolute(p: &Path) -> Result<PathBuf> {
    fs::canonicalize(p).map_err(|e| CliError::io(p, e))
}
