//! `deploysim` command line: run one experiment, sweep policy variants, or
//! rebuild analysis artifacts from a stored event log.
//!
//! Exit codes: 0 success, 1 invalid input (config, sweep spec, event log or
//! arguments), 2 runtime failure.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use deploysim::analysis::{self, write_artifacts};
use deploysim::environment::{prepare_stream, simulate, EnvError, PreparedStream, RunOutput};
use deploysim::{validate_config, ConfigError, EventLog, ExperimentConfig, PolicySpec, Summary};

#[derive(Debug, Parser)]
#[command(
    name = "deploysim",
    version,
    about = "Simulate model-deployment policies on a chunked data stream"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one experiment config.
    Run {
        config: PathBuf,
        #[command(flatten)]
        out: OutputArgs,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run every policy variant of a sweep spec and compare them.
    Sweep {
        spec: PathBuf,
        #[command(flatten)]
        out: OutputArgs,
        /// Overrides the base seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Variants run in parallel, at most this many at a time.
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u16).range(1..))]
        jobs: u16,
        /// Give variant `i` the seed `base + i` instead of sharing the base seed.
        #[arg(long)]
        per_variant_seeds: bool,
    },
    /// Rebuild the analysis artifacts from an events.csv.
    Analyze {
        events: PathBuf,
        #[command(flatten)]
        out: OutputArgs,
        /// First chunk included in the score table.
        #[arg(long, default_value_t = 2)]
        eval_start: usize,
    },
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    #[arg(short, long)]
    pub output: PathBuf,
    /// Write into a non-empty output directory.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<EnvError> for CliError {
    fn from(e: EnvError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

fn io_err(context: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Runtime(format!("{}: {e}", context.display()))
}

/// Creates `dir`, refusing to reuse a non-empty one unless `force` is set.
pub fn prepare_output_dir(dir: &Path, force: bool) -> Result<(), CliError> {
    if !force && dir.is_dir() && fs::read_dir(dir).map_err(io_err(dir))?.next().is_some() {
        return Err(CliError::Input(format!(
            "output directory {} is not empty (use --force to overwrite)",
            dir.display()
        )));
    }
    fs::create_dir_all(dir).map_err(io_err(dir))
}

/// Loads a config, resolving relative data paths against its directory.
pub fn load_config(path: &Path, seed: Option<u64>) -> Result<ExperimentConfig, CliError> {
    let mut cfg = ExperimentConfig::load(path)?
        .with_paths_relative_to(path.parent().unwrap_or(Path::new(".")));
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

/// Writes `events.csv`, `summary.json`, `snapshots.jsonl`, `config.json` and
/// the analysis artifacts.
pub fn write_run(out: &RunOutput, cfg: &ExperimentConfig, dir: &Path) -> Result<(), CliError> {
    let write = |name: &str, body: String| {
        let path = dir.join(name);
        fs::write(&path, body).map_err(io_err(&path))
    };
    write("events.csv", out.log.to_csv_string())?;
    write("summary.json", out.summary.to_json_pretty())?;
    write(
        "snapshots.jsonl",
        out.snapshots.iter().map(|s| format!("{s}\n")).collect(),
    )?;
    write("config.json", cfg.to_json_pretty() + "\n")?;
    write_artifacts(&out.log, cfg.chunk_plan.eval_start_chunk, dir).map_err(io_err(dir))?;
    Ok(())
}

/// Fixed-width table: one row per summary, overall first, then chunk scores.
pub fn format_table(rows: &[(String, &Summary)], first_chunk: usize) -> String {
    let width = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max(6);
    let chunks = rows
        .iter()
        .map(|(_, s)| s.chunk_scores.len())
        .max()
        .unwrap_or(0);
    let mut out = format!("{:<width$}  {:>7}", "policy", "overall");
    for c in 0..chunks {
        write!(out, "  {:>7}", format!("chunk{}", first_chunk + c)).unwrap();
    }
    out.push('\n');
    for (name, s) in rows {
        write!(out, "{name:<width$}  {:>7.4}", s.overall).unwrap();
        for x in &s.chunk_scores {
            write!(out, "  {x:>7.4}").unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn cmd_run(
    config: &Path,
    out: &OutputArgs,
    seed: Option<u64>,
    stdout: &mut dyn Write,
) -> Result<Summary, CliError> {
    let cfg = load_config(config, seed)?;
    prepare_output_dir(&out.output, out.force)?;
    let run = simulate(&cfg, &prepare_stream(&cfg)?)?;
    write_run(&run, &cfg, &out.output)?;
    let table = format_table(
        &[(run.summary.policy.clone(), &run.summary)],
        cfg.chunk_plan.eval_start_chunk,
    );
    stdout
        .write_all(table.as_bytes())
        .map_err(io_err(Path::new("stdout")))?;
    Ok(run.summary)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedMode {
    /// Every variant sees the same stream.
    #[default]
    Same,
    /// Variant `i` uses `base.seed + i`.
    PerVariant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Variant {
    #[serde(default)]
    pub name: Option<String>,
    pub policy_spec: PolicySpec,
}

/// A base config and the policy variants to run against it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub base: ExperimentConfig,
    pub variants: Vec<Variant>,
    #[serde(default)]
    pub seeds: SeedMode,
}

impl SweepSpec {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| {
            CliError::Input(format!("cannot read sweep spec {}: {e}", path.display()))
        })?;
        let mut spec: SweepSpec = serde_json::from_str(&text)
            .map_err(|e| CliError::Input(format!("malformed sweep spec: {e}")))?;
        spec.base = spec
            .base
            .with_paths_relative_to(path.parent().unwrap_or(Path::new(".")));
        Ok(spec)
    }

    /// One validated config per variant, with its output directory name.
    pub fn expand(&self) -> Result<Vec<(String, ExperimentConfig)>, CliError> {
        if self.variants.is_empty() {
            return Err(CliError::Input("sweep spec has no variants".into()));
        }
        let mut problems = Vec::new();
        let mut out = Vec::new();
        for (i, v) in self.variants.iter().enumerate() {
            let mut cfg = self.base.clone();
            cfg.policy_spec = v.policy_spec;
            if self.seeds == SeedMode::PerVariant {
                cfg.seed = cfg.seed.wrapping_add(i as u64);
            }
            let label = v
                .name
                .clone()
                .unwrap_or_else(|| v.policy_spec.strategy.name().to_string());
            let dir = format!("{i:02}_{}", slug(&label));
            match validate_config(cfg) {
                Ok(cfg) => out.push((dir, cfg)),
                Err(e) => problems.push(format!("variant {dir}: {e}")),
            }
        }
        if problems.is_empty() {
            Ok(out)
        } else {
            Err(CliError::Input(problems.join("\n")))
        }
    }
}

fn slug(s: &str) -> String {
    s.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '.' || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

pub fn comparison_csv(
    rows: &[(String, u64, Result<Summary, String>)],
    first_chunk: usize,
    num_scores: usize,
) -> String {
    let mut out = String::from("variant,policy,seed,status,overall");
    for c in 0..num_scores {
        write!(out, ",chunk_{}", first_chunk + c).unwrap();
    }
    out.push('\n');
    for (dir, seed, result) in rows {
        match result {
            Ok(s) => {
                write!(out, "{dir},\"{}\",{seed},ok,{:.6}", s.policy, s.overall).unwrap();
                for x in &s.chunk_scores {
                    write!(out, ",{x:.6}").unwrap();
                }
            }
            Err(_) => {
                write!(out, "{dir},,{seed},error,").unwrap();
                out.push_str(&",".repeat(num_scores));
            }
        }
        out.push('\n');
    }
    out
}

pub fn cmd_sweep(
    spec_path: &Path,
    out: &OutputArgs,
    seed: Option<u64>,
    jobs: usize,
    per_variant_seeds: bool,
    stdout: &mut dyn Write,
) -> Result<Vec<Result<Summary, String>>, CliError> {
    let mut spec = SweepSpec::load(spec_path)?;
    if let Some(seed) = seed {
        spec.base.seed = seed;
    }
    if per_variant_seeds {
        spec.seeds = SeedMode::PerVariant;
    }
    let variants = spec.expand()?;
    prepare_output_dir(&out.output, out.force)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| CliError::Runtime(e.to_string()))?;

    let seeds: Vec<u64> = {
        let mut s: Vec<u64> = variants.iter().map(|(_, c)| c.seed).collect();
        s.sort_unstable();
        s.dedup();
        s
    };
    let results = pool.install(|| {
        // The stream only depends on the seed, never on the policy.
        let streams: BTreeMap<u64, Result<PreparedStream, String>> = seeds
            .par_iter()
            .map(|&s| {
                let cfg = variants
                    .iter()
                    .find(|(_, c)| c.seed == s)
                    .map(|(_, c)| c)
                    .expect("seed from variants");
                (s, prepare_stream(cfg).map_err(|e| e.to_string()))
            })
            .collect();
        variants
            .par_iter()
            .map(|(dir, cfg)| {
                let stream = streams[&cfg.seed].as_ref().map_err(Clone::clone)?;
                let run = simulate(cfg, stream).map_err(|e| e.to_string())?;
                let path = out.output.join(dir);
                fs::create_dir_all(&path).map_err(|e| e.to_string())?;
                write_run(&run, cfg, &path).map_err(|e| e.to_string())?;
                Ok(run.summary)
            })
            .collect::<Vec<Result<Summary, String>>>()
    });

    let first_chunk = spec.base.chunk_plan.eval_start_chunk;
    let num_scores = spec.base.chunk_plan.num_chunks - first_chunk;
    let rows: Vec<(String, u64, Result<Summary, String>)> = variants
        .iter()
        .zip(&results)
        .map(|((dir, cfg), r)| (dir.clone(), cfg.seed, r.clone()))
        .collect();
    let csv_path = out.output.join("comparison.csv");
    fs::write(&csv_path, comparison_csv(&rows, first_chunk, num_scores))
        .map_err(io_err(&csv_path))?;

    let ok: Vec<(String, &Summary)> = rows
        .iter()
        .filter_map(|(dir, _, r)| r.as_ref().ok().map(|s| (dir.clone(), s)))
        .collect();
    stdout
        .write_all(format_table(&ok, first_chunk).as_bytes())
        .map_err(io_err(Path::new("stdout")))?;
    let failures: Vec<String> = rows
        .iter()
        .filter_map(|(dir, _, r)| {
            r.as_ref()
                .err()
                .map(|e| format!("variant {dir} failed: {e}"))
        })
        .collect();
    if failures.is_empty() {
        Ok(results)
    } else {
        Err(CliError::Runtime(failures.join("\n")))
    }
}

pub fn cmd_analyze(
    events: &Path,
    out: &OutputArgs,
    eval_start: usize,
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    let log = EventLog::load(events)
        .map_err(|e| CliError::Input(format!("{}: {e}", events.display())))?;
    let scores =
        analysis::chunk_scores(&log, eval_start).map_err(|e| CliError::Input(e.to_string()))?;
    prepare_output_dir(&out.output, out.force)?;
    write_artifacts(&log, eval_start, &out.output).map_err(io_err(&out.output))?;
    stdout
        .write_all(analysis::chunk_scores_csv(&scores).as_bytes())
        .map_err(io_err(Path::new("stdout")))
}

pub fn execute(cli: Cli, stdout: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Run { config, out, seed } => cmd_run(&config, &out, seed, stdout).map(drop),
        Command::Sweep {
            spec,
            out,
            seed,
            jobs,
            per_variant_seeds,
        } => cmd_sweep(&spec, &out, seed, jobs as usize, per_variant_seeds, stdout).map(drop),
        Command::Analyze {
            events,
            out,
            eval_start,
        } => cmd_analyze(&events, &out, eval_start, stdout),
    }
}

/// Parses `args` (program name first), runs, reports errors on stderr and
/// returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli, &mut std::io::stdout().lock()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
