//! Command-line front end: `simulate`, `mc` and `diagnose`.
//!
//! Exit codes: 0 on success, 2 for invalid configuration or malformed
//! input, 3 for I/O failures. Floating-point values are written with 17
//! significant digits so that outputs round-trip and compare byte for byte.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::TrialConfig;
use crate::harness::{run_draws, simulate_trial, CoverageTable, StepRecord, TrialResult};
use crate::tmle::{cond_var_path, default_grid, target, TmleInput, TmleRow};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Validation(#[from] crate::Error),

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }

    fn parse(path: &Path, message: impl Into<String>) -> Self {
        CliError::Parse { path: path.to_path_buf(), message: message.into() }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) | CliError::Parse { .. } => 2,
            CliError::Io { .. } => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "nof1", version, about = "Adaptive single-subject trial simulator with TMLE inference")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one trial and write its per-step trajectory as CSV.
    Simulate {
        #[command(flatten)]
        source: ConfigSource,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Output CSV; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo coverage study.
    Mc {
        #[command(flatten)]
        source: ConfigSource,
        /// Base seed; overrides the config's `base_seed`.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 500)]
        draws: usize,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Worker threads; defaults to the number of processors.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Running average of the conditional EIC variance along a trajectory.
    Diagnose {
        /// Trajectory CSV written by `simulate`.
        trial: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0.01)]
        g_floor: f64,
        #[arg(long)]
        jobs: Option<usize>,
    },
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct ConfigSource {
    /// JSON trial configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Built-in trial (sim1a or sim1b, 1000 balanced steps, checkpoints to 1800).
    #[arg(long)]
    pub preset: Option<String>,
}

impl ConfigSource {
    pub fn load(&self) -> Result<TrialConfig, CliError> {
        let cfg = match (&self.config, &self.preset) {
            (Some(path), _) => {
                let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
                TrialConfig::from_json(&text)?
            }
            (None, Some(name)) => TrialConfig::preset(name)?,
            (None, None) => unreachable!("clap enforces one config source"),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Formats a float with 17 significant digits.
pub fn fmt_num(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_num).unwrap_or_default()
}

fn to_csv<I, R>(header: &[String], records: I) -> String
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in records {
        w.write_record(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 output")
}

fn names(cols: &[&str]) -> Vec<String> {
    cols.iter().map(|c| (*c).to_owned()).collect()
}

pub fn trajectory_csv(steps: &[StepRecord], w_dim: usize) -> String {
    let mut header = names(&["t", "a", "y"]);
    header.extend((1..=w_dim).map(|j| format!("w{j}")));
    header.extend(names(&["g_used", "g_rule", "blip_estimate", "d_decision", "q_obs", "q_rule"]));
    to_csv(
        &header,
        steps.iter().map(|s| {
            let mut r = vec![s.t.to_string(), s.a.to_string(), fmt_num(s.y)];
            r.extend(s.w.iter().map(|w| fmt_num(*w)));
            r.extend([
                fmt_opt(s.g_used),
                fmt_opt(s.g_rule),
                fmt_opt(s.blip_estimate),
                s.d.map(|d| d.to_string()).unwrap_or_default(),
                fmt_opt(s.q_obs),
                fmt_opt(s.q_rule),
            ]);
            r
        }),
    )
}

pub fn coverage_csv(table: &CoverageTable) -> String {
    to_csv(
        &names(&["checkpoint", "coverage", "variance"]),
        table
            .checkpoints
            .iter()
            .enumerate()
            .map(|(k, n)| [n.to_string(), fmt_num(table.coverage[k]), fmt_opt(table.variance[k])]),
    )
}

pub fn plotdata_csv(trials: &[TrialResult]) -> String {
    to_csv(
        &names(&["seed", "checkpoint", "psi_hat", "truth", "ci_lo", "ci_hi"]),
        trials.iter().flat_map(|t| {
            t.checkpoints.iter().map(move |c| {
                [
                    t.seed.to_string(),
                    c.n.to_string(),
                    fmt_num(c.report.psi_hat),
                    fmt_num(c.truth),
                    fmt_num(c.report.ci.0),
                    fmt_num(c.report.ci.1),
                ]
            })
        }),
    )
}

pub fn trials_jsonl(trials: &[TrialResult]) -> String {
    trials.iter().map(|t| serde_json::to_string(t).expect("trial serializes") + "\n").collect()
}

/// Reads the TMLE rows of a trajectory CSV, skipping rows without a context.
pub fn parse_trajectory(path: &Path, text: &str) -> Result<Vec<TmleRow>, CliError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| CliError::parse(path, e.to_string()))?.clone();
    if header.is_empty() {
        return Err(CliError::parse(path, "empty trial file"));
    }
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::parse(path, format!("missing column '{name}'")))
    };
    let idx = [col("y")?, col("a")?, col("d_decision")?, col("g_used")?, col("g_rule")?, col("q_obs")?, col("q_rule")?];
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| CliError::parse(path, e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        if record[idx[3]].is_empty() {
            continue;
        }
        let num = |i: usize| {
            record[i]
                .parse::<f64>()
                .map_err(|_| CliError::parse(path, format!("line {line}: bad number '{}'", &record[i])))
        };
        let bit = |i: usize| match &record[i] {
            "0" => Ok(0u8),
            "1" => Ok(1u8),
            other => Err(CliError::parse(path, format!("line {line}: bad treatment '{other}'"))),
        };
        rows.push(TmleRow {
            y: num(idx[0])?,
            a: bit(idx[1])?,
            d: bit(idx[2])?,
            g_obs: num(idx[3])?,
            g_rule: num(idx[4])?,
            q_obs: num(idx[5])?,
            q_rule: num(idx[6])?,
        });
    }
    if rows.is_empty() {
        return Err(CliError::parse(path, "no rows with an observed context"));
    }
    Ok(rows)
}

pub fn diagnose_csv(path: &Path, text: &str, g_floor: f64) -> Result<String, CliError> {
    let rows = parse_trajectory(path, text)?;
    let n = rows.len();
    let input = TmleInput::new(rows, g_floor)?;
    let targeted = target(&input)?;
    let path_values = cond_var_path(&input, &targeted.q_rule, &default_grid(n))?;
    Ok(to_csv(
        &names(&["n", "running_cond_var_avg"]),
        path_values.into_iter().map(|(k, v)| [k.to_string(), fmt_num(v)]),
    ))
}

#[derive(Debug, Serialize)]
struct OutputDigest {
    file: String,
    sha256: String,
}

/// Provenance record written next to Monte Carlo outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    config: TrialConfig,
    tool_version: String,
    base_seed: u64,
    n_draws: usize,
    started_at: String,
    finished_at: String,
    outputs: Vec<OutputDigest>,
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn write_or_print(out: Option<&Path>, contents: &str) -> Result<(), CliError> {
    match out {
        Some(p) => write_file(p, contents),
        None => {
            print!("{contents}");
            Ok(())
        }
    }
}

fn pool(jobs: Option<usize>) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Validation(crate::Error::config("jobs", e.to_string())))
}

fn cmd_mc(
    mut cfg: TrialConfig,
    seed: Option<u64>,
    draws: usize,
    out: &Path,
    jobs: Option<usize>,
) -> Result<(), CliError> {
    if draws == 0 {
        return Err(crate::Error::config("draws", "must be at least 1").into());
    }
    if let Some(s) = seed {
        cfg.base_seed = s;
    }
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let started_at = chrono::Utc::now().to_rfc3339();
    let trials = pool(jobs)?.install(|| run_draws(&cfg, draws))?;
    let table = CoverageTable::from_trials(&trials)?;
    let files = [
        ("coverage.csv", coverage_csv(&table)),
        ("trials.jsonl", trials_jsonl(&trials)),
        ("plotdata.csv", plotdata_csv(&trials)),
    ];
    let mut outputs = Vec::new();
    for (name, contents) in &files {
        write_file(&out.join(name), contents)?;
        outputs.push(OutputDigest { file: (*name).into(), sha256: hex::encode(Sha256::digest(contents.as_bytes())) });
    }
    let manifest = RunManifest {
        base_seed: cfg.base_seed,
        config: cfg,
        tool_version: env!("CARGO_PKG_VERSION").into(),
        n_draws: draws,
        started_at,
        finished_at: chrono::Utc::now().to_rfc3339(),
        outputs,
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    write_file(&out.join("manifest.json"), &text)
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { source, seed, out } => {
            let cfg = source.load()?;
            let trajectory = simulate_trial(&cfg, seed)?;
            let csv = trajectory_csv(&trajectory.steps, cfg.dgp_spec()?.w_dim());
            write_or_print(out.as_deref(), &csv)
        }
        Command::Mc { source, seed, draws, out, jobs } => cmd_mc(source.load()?, seed, draws, &out, jobs),
        Command::Diagnose { trial, out, g_floor, jobs: _ } => {
            let text = fs::read_to_string(&trial).map_err(|e| CliError::io(&trial, e))?;
            let csv = diagnose_csv(&trial, &text, g_floor)?;
            write_or_print(out.as_deref(), &csv)
        }
    }
}

/// Parses `std::env::args` and runs the selected subcommand.
pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
