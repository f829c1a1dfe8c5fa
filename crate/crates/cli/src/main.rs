//! `egonet`: generate, sample, measure and rank followership networks.

mod error;
mod manifest;
mod rank;
mod report;
mod run;
mod sample;

use std::fs;
use std::io::{self, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use egonet::access::{serve_jsonl, AccessBudget, AccessSimulator};
use egonet::pagerank::{parse_bands, StartSelection};
use egonet::sampling::SampleMethod;
use egonet::synthgen::GenConfig;
use egonet::UserId;
use serde::de::DeserializeOwned;

use crate::error::{CliError, Result};
use crate::manifest::{Manifest, MANIFEST_FILE};
use crate::rank::{PagerankParams, PagerankRun, PolicyKind};
use crate::report::{ReportParams, ReportRun};
use crate::run::{load_graph, RunSpec};
use crate::sample::{absolute, resolve_sample_paths, SampleParams, SampleRun};

const AFTER_HELP: &str = "\
Environment:
  EGONET_LOG   log filter, e.g. info or egonet=debug (default: warn)

Exit codes:
  0  success, possibly with warnings
  1  configuration error
  2  data error (bad input, exhausted access budget, failed reproduction)
  3  internal error";

#[derive(Debug, Parser)]
#[command(name = "egonet", version, about, after_help = AFTER_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic network with planted type-1 / type-2 users.
    Generate(GenerateArgs),
    /// Sample users through the rate-limited access simulator.
    Sample(SampleArgs),
    /// Compute metric, survivor-function and AUC tables.
    Report(ReportArgs),
    /// Estimate PageRank by random walks and tabulate visits per degree band.
    Pagerank(PagerankArgs),
    /// Repeat a recorded run and check that its outputs are identical.
    Rerun(RerunArgs),
    /// Answer line-delimited JSON access requests on stdin until EOF.
    Access(AccessArgs),
}

#[derive(Debug, Args)]
struct GenerateArgs {
    /// Generator config (JSON). Unset fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct BudgetArgs {
    /// Calls allowed per rate-limit window.
    #[arg(long)]
    calls_per_window: Option<u32>,
    /// Window length in simulated time units.
    #[arg(long)]
    window_length: Option<u64>,
    /// IDs per followers/friends page.
    #[arg(long)]
    page_size: Option<usize>,
}

impl BudgetArgs {
    fn apply(&self, b: &mut AccessBudget) {
        if let Some(v) = self.calls_per_window {
            b.calls_per_window = v;
        }
        if let Some(v) = self.window_length {
            b.window_length = v;
        }
        if let Some(v) = self.page_size {
            b.page_size = v;
        }
    }
}

#[derive(Debug, Args)]
struct SampleArgs {
    /// Directory holding edges.tsv and users.tsv.
    #[arg(long)]
    graph: PathBuf,
    /// Sampling parameters (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = parse_method)]
    method: Option<SampleMethod>,
    /// Language to sample; repeat for several.
    #[arg(long = "language")]
    languages: Vec<String>,
    /// Seeds per language (neighbor sampling).
    #[arg(long)]
    seeds: Option<usize>,
    /// Seeds must have fewer followers than this.
    #[arg(long)]
    follower_cap: Option<u64>,
    /// Followers drawn per seed.
    #[arg(long)]
    quota: Option<usize>,
    /// IDs drawn (random sampling).
    #[arg(long)]
    n_ids: Option<usize>,
    /// Largest ID drawn (random sampling); defaults to the largest ID in the graph.
    #[arg(long)]
    id_max: Option<u64>,
    #[command(flatten)]
    budget: BudgetArgs,
    /// Wait out rate limits in simulated time instead of stopping.
    #[arg(long)]
    wait: bool,
    /// Continue from the progress file of an interrupted run.
    #[arg(long)]
    resume: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[arg(long)]
    graph: PathBuf,
    /// Report parameters (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Sample set files or directories of them; repeatable.
    #[arg(long = "samples")]
    samples: Vec<PathBuf>,
    /// Type labels (`id<TAB>type`); users are classified by degree otherwise.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Degree threshold; repeat for several (default 100 and 2000).
    #[arg(long = "threshold")]
    thresholds: Vec<u64>,
    /// Followers sampled per typed user.
    #[arg(long)]
    followers: Option<usize>,
    /// At most this many typed users per language and type.
    #[arg(long)]
    per_type: Option<usize>,
    /// Also report AUCs averaged over pairs of typed users.
    #[arg(long)]
    per_user_auc: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct PagerankArgs {
    #[arg(long)]
    graph: PathBuf,
    /// Walk parameters (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Type labels; users are classified by degree otherwise.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Sample set files or directories whose members are the start pool.
    #[arg(long = "pool")]
    pool: Vec<PathBuf>,
    #[arg(long, value_enum)]
    policy: Option<PolicyKind>,
    /// Steps per walk under the fixed policy.
    #[arg(long)]
    steps: Option<u32>,
    /// Teleport probability.
    #[arg(long)]
    q: Option<f64>,
    #[arg(long)]
    starts: Option<usize>,
    /// Draw starts with replacement.
    #[arg(long)]
    with_replacement: bool,
    /// k_in bands as `lo-hi` pairs, e.g. 2500-7500,7500-12500.
    #[arg(long)]
    bands: Option<String>,
    /// Do not subsample types to equal size per band.
    #[arg(long)]
    no_balance: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct RerunArgs {
    /// A manifest.json, or the directory holding one.
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct AccessArgs {
    #[arg(long)]
    graph: PathBuf,
    #[command(flatten)]
    budget: BudgetArgs,
}

fn parse_method(s: &str) -> std::result::Result<SampleMethod, String> {
    match s {
        "neighbor" => Ok(SampleMethod::Neighbor),
        "random" => Ok(SampleMethod::Random),
        other => Err(format!("unknown method {other:?}; expected neighbor or random")),
    }
}

fn read_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    let Some(path) = path else { return Ok(T::default()) };
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn finish(manifest: &Manifest, out: &Path) {
    eprintln!("wrote {} files and {} to {}", manifest.outputs.len(), MANIFEST_FILE, out.display());
}

fn cmd_generate(a: GenerateArgs) -> Result<()> {
    let mut config: GenConfig = read_config(a.config.as_deref())?;
    if let Some(s) = a.seed {
        config.seed = s;
    }
    let m = run::run(RunSpec::Generate(run::GenerateRun { config }), &a.out)?;
    finish(&m, &a.out);
    Ok(())
}

fn cmd_sample(a: SampleArgs) -> Result<()> {
    let mut params: SampleParams = read_config(a.config.as_deref())?;
    if let Some(m) = a.method {
        params.method = m;
    }
    if !a.languages.is_empty() {
        params.languages = a.languages;
    }
    if let Some(v) = a.seeds {
        params.seeds_per_language = v;
    }
    if let Some(v) = a.follower_cap {
        params.follower_cap = v;
    }
    if let Some(v) = a.quota {
        params.quota = v;
    }
    if let Some(v) = a.n_ids {
        params.n_ids = v;
    }
    if let Some(v) = a.id_max {
        params.id_max = Some(UserId(v));
    }
    a.budget.apply(&mut params.budget);
    params.wait |= a.wait;
    if let Some(s) = a.seed {
        params.rng_seed = s;
    }
    let spec = RunSpec::Sample(SampleRun { graph: absolute(&a.graph)?, params });
    let resume = a.resume;
    let m = run::run_with(spec, &a.out, |spec, out| match spec {
        RunSpec::Sample(s) => s.execute(out, resume.as_deref()),
        _ => unreachable!("sample spec"),
    })?;
    finish(&m, &a.out);
    Ok(())
}

fn cmd_report(a: ReportArgs) -> Result<()> {
    let mut params: ReportParams = read_config(a.config.as_deref())?;
    if !a.thresholds.is_empty() {
        params.thresholds = a.thresholds;
    }
    if let Some(v) = a.followers {
        params.followers_per_user = v;
    }
    if a.per_type.is_some() {
        params.per_type = a.per_type;
    }
    params.per_user_auc |= a.per_user_auc;
    if let Some(s) = a.seed {
        params.rng_seed = s;
    }
    let run = ReportRun {
        graph: absolute(&a.graph)?,
        samples: resolve_sample_paths(&a.samples)?,
        labels: a.labels.as_deref().map(absolute).transpose()?,
        params,
    };
    let m = run::run(RunSpec::Report(run), &a.out)?;
    finish(&m, &a.out);
    Ok(())
}

fn cmd_pagerank(a: PagerankArgs) -> Result<()> {
    let mut params: PagerankParams = read_config(a.config.as_deref())?;
    if let Some(p) = a.policy {
        params.policy = p;
    }
    if let Some(v) = a.steps {
        params.steps = v;
    }
    if let Some(v) = a.q {
        params.q = v;
    }
    if let Some(v) = a.starts {
        params.n_starts = v;
    }
    if a.with_replacement {
        params.start_selection = StartSelection::UniformWithReplacement;
    }
    if let Some(b) = &a.bands {
        params.bands = parse_bands(b)?;
    }
    if a.no_balance {
        params.balance = false;
    }
    if let Some(s) = a.seed {
        params.rng_seed = s;
    }
    let run = PagerankRun {
        graph: absolute(&a.graph)?,
        labels: a.labels.as_deref().map(absolute).transpose()?,
        pool: resolve_sample_paths(&a.pool)?,
        params,
    };
    let m = run::run(RunSpec::Pagerank(run), &a.out)?;
    finish(&m, &a.out);
    Ok(())
}

fn cmd_rerun(a: RerunArgs) -> Result<()> {
    let path = if a.manifest.is_dir() { a.manifest.join(MANIFEST_FILE) } else { a.manifest.clone() };
    let manifest = Manifest::load(&path)?;
    let bad = run::rerun(&manifest, &a.out)?;
    if bad.is_empty() {
        eprintln!("reproduced all {} outputs of {}", manifest.outputs.len(), path.display());
        Ok(())
    } else {
        Err(CliError::Data(format!("outputs differ from the recorded run: {}", bad.join(", "))))
    }
}

fn cmd_access(a: AccessArgs) -> Result<()> {
    let g = load_graph(&a.graph)?;
    let mut budget = AccessBudget::default();
    a.budget.apply(&mut budget);
    if budget.calls_per_window == 0 || budget.window_length == 0 || budget.page_size == 0 {
        return Err(CliError::Config("budget fields must be positive".into()));
    }
    let sim = AccessSimulator::new(&g, budget);
    let stdout = io::stdout();
    serve_jsonl(&sim, io::stdin().lock(), BufWriter::new(stdout.lock())).map_err(|e| CliError::Data(e.to_string()))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("EGONET_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let res = match cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Sample(a) => cmd_sample(a),
        Command::Report(a) => cmd_report(a),
        Command::Pagerank(a) => cmd_pagerank(a),
        Command::Rerun(a) => cmd_rerun(a),
        Command::Access(a) => cmd_access(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
