//! Command-line front end: `run`, `resume`, `validate` and `metrics`.
//!
//! A run directory is named `<task>-n<N>-<hash8>-s<seed>` and lives under
//! `--out`, `$ESN_CROWD_OUTPUT`, or `./runs`, in that order of preference:
//!
//! ```text
//! config.json           effective config (after overrides)
//! manifest.json         hash, seeds, trial directories, timestamps
//! trial_000/
//!   episodes.csv        episode,mean,best,worst,epsilon,v_bar,max_condition,group_<g>_mean...
//!   agent_rewards.csv   episode,agent_0,agent_1,...
//!   episodes.json       full records including wall-clock durations
//!   checkpoint.bin      weights and accumulators (tensor container)
//!   checkpoint.json     ε schedule, generator position, records so far
//!   trajectories.bin    only with trajectory logging
//!   complete            marker written last
//! ```
//!
//! Exit codes: 0 success, 1 validation failure, 2 runtime failure.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand, ValueEnum};
use log::{info, warn};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::container::TensorFile;
use crate::error::{Error, Result};
use crate::metrics::{
    accumulate_density, average_velocity, fundamental_point, write_diagram_csv, LearningCurve,
    MetricsSidecar, TrajectoryLog,
};
use crate::runner::{CheckpointMeta, EpisodeRecord, Trial, TrialConfig};

pub const OUTPUT_ROOT_ENV: &str = "ESN_CROWD_OUTPUT";

#[derive(Debug, Parser)]
#[command(name = "esn-crowd", version, about = "Train echo-state-network pedestrians with least-squares policy iteration")]
pub struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run every trial of a config into a fresh run directory.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override a config value, e.g. `--set n_agent=40` or `--set hyperparameters.gamma=0.9`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Output root directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Maximum number of trials running at once.
        #[arg(long)]
        jobs: Option<usize>,
        /// Record agent positions (needed for colormaps).
        #[arg(long)]
        log_trajectories: bool,
    },
    /// Continue an interrupted run from its checkpoints.
    Resume {
        run_dir: PathBuf,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Dry-run checks: config ranges, map, placement, memory.
    Validate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Post-process finished runs.
    Metrics {
        #[arg(value_enum)]
        which: MetricKind,
        #[arg(required = true)]
        run_dirs: Vec<PathBuf>,
        /// Inclusive step window `FROM:TO`.
        #[arg(long, value_parser = parse_window)]
        time_window: Option<(usize, usize)>,
        /// Inclusive 1-based episode window `FROM:TO`.
        #[arg(long, value_parser = parse_window)]
        episode_window: Option<(usize, usize)>,
        /// Output directory; defaults to `<first run>/metrics`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MetricKind {
    Curves,
    Colormap,
    Diagram,
}

pub fn parse_window(s: &str) -> std::result::Result<(usize, usize), String> {
    let (a, b) = s
        .split_once(':')
        .ok_or_else(|| format!("expected FROM:TO, got `{s}`"))?;
    let a = a.trim().parse().map_err(|_| format!("bad window start `{a}`"))?;
    let b = b.trim().parse().map_err(|_| format!("bad window end `{b}`"))?;
    if a > b {
        return Err(format!("empty window {a}:{b}"));
    }
    Ok((a, b))
}

/// Parse argv, run the command, and map the outcome to an exit code.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn dispatch(command: Command) -> Result<ExitCode> {
    match command {
        Command::Run {
            config,
            mut overrides,
            out,
            jobs,
            log_trajectories,
        } => {
            if log_trajectories {
                overrides.push("log_trajectories=true".into());
            }
            let outcome = cmd_run(&config, &overrides, out.as_deref(), jobs)?;
            println!("{}", outcome.run_dir.display());
            Ok(outcome.exit_code())
        }
        Command::Resume { run_dir, jobs } => {
            let outcome = cmd_resume(&run_dir, jobs)?;
            println!("{}", outcome.run_dir.display());
            Ok(outcome.exit_code())
        }
        Command::Validate { config, overrides } => {
            let report = cmd_validate(&config, &overrides);
            print!("{report}");
            Ok(if report.has_failures() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            })
        }
        Command::Metrics {
            which,
            run_dirs,
            time_window,
            episode_window,
            out,
        } => {
            let windows = Windows {
                time: time_window,
                episode: episode_window,
            };
            for p in cmd_metrics(&run_dirs, which, windows, out.as_deref())? {
                println!("{}", p.display());
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

/// 1 for anything the user can fix in the config or arguments, 2 otherwise.
pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidConfig { .. }
        | Error::InvalidArgument(_)
        | Error::MapParse { .. }
        | Error::Capacity { .. }
        | Error::Format { .. }
        | Error::Json(_) => 1,
        _ => 2,
    }
}

/// Read a config file and apply `KEY=VALUE` overrides. Not range-checked.
pub fn load_config(path: &Path, overrides: &[String]) -> Result<TrialConfig> {
    let config = TrialConfig::load(path)?;
    apply_overrides(&config, overrides)
}

pub fn apply_overrides(config: &TrialConfig, overrides: &[String]) -> Result<TrialConfig> {
    if overrides.is_empty() {
        return Ok(config.clone());
    }
    let mut value = serde_json::to_value(config)?;
    for kv in overrides {
        set_override(&mut value, kv)?;
    }
    serde_json::from_value(value).map_err(|e| Error::config("--set", e.to_string()))
}

/// Top-level keys that may be absent from the serialized form.
const OPTIONAL_KEYS: [&str; 2] = ["map_path", "region"];

fn set_override(root: &mut Value, kv: &str) -> Result<()> {
    let (key, raw) = kv
        .split_once('=')
        .ok_or_else(|| Error::config(kv, "override must look like KEY=VALUE"))?;
    let key = key.trim();
    let parsed: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_owned()));
    let unknown = || Error::config(key, "unknown config key");
    let path: Vec<&str> = if key.contains('.') {
        key.split('.').collect()
    } else if root.get(key).is_some() || OPTIONAL_KEYS.contains(&key) {
        vec![key]
    } else if root["hyperparameters"].get(key).is_some() {
        vec!["hyperparameters", key]
    } else {
        return Err(unknown());
    };
    let (last, parents) = path.split_last().expect("non-empty path");
    let mut node = &mut *root;
    for p in parents {
        node = node.get_mut(*p).filter(|n| n.is_object()).ok_or_else(unknown)?;
    }
    let obj = node.as_object_mut().ok_or_else(unknown)?;
    let top_level_optional = parents.is_empty() && OPTIONAL_KEYS.contains(last);
    if !obj.contains_key(*last) && !top_level_optional {
        return Err(unknown());
    }
    obj.insert((*last).to_owned(), parsed);
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CheckStatus {
    Pass,
    Warn,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub status: CheckStatus,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    fn push(&mut self, name: &'static str, status: CheckStatus, detail: impl Into<String>) {
        self.checks.push(Check {
            name,
            status,
            detail: detail.into(),
        });
    }

    pub fn has_failures(&self) -> bool {
        self.checks.iter().any(|c| c.status == CheckStatus::Fail)
    }

    pub fn has_warnings(&self) -> bool {
        self.checks.iter().any(|c| c.status == CheckStatus::Warn)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            let tag = match c.status {
                CheckStatus::Pass => "ok  ",
                CheckStatus::Warn => "warn",
                CheckStatus::Fail => "FAIL",
            };
            writeln!(f, "[{tag}] {}: {}", c.name, c.detail)?;
        }
        Ok(())
    }
}

pub fn cmd_validate(config_path: &Path, overrides: &[String]) -> ValidationReport {
    let mut report = ValidationReport::default();
    let config = match load_config(config_path, overrides) {
        Ok(c) => c,
        Err(e) => {
            report.push("config", CheckStatus::Fail, e.to_string());
            return report;
        }
    };
    validate_config(&config, &mut report);
    report
}

/// Run the dry-run checks on an already parsed config.
pub fn validate_config(config: &TrialConfig, report: &mut ValidationReport) {
    match config.validate() {
        Ok(()) => report.push("config", CheckStatus::Pass, format!("hash {}", &config.hash()[..8])),
        Err(e) => report.push("config", CheckStatus::Fail, e.to_string()),
    }
    let setup = match config.setup() {
        Ok(s) => {
            report.push(
                "map",
                CheckStatus::Pass,
                format!(
                    "`{}` {}×{}, {} walkable cells",
                    s.map.name,
                    s.map.width,
                    s.map.height,
                    s.map.walkable_count()
                ),
            );
            s
        }
        Err(e) => {
            report.push("map", CheckStatus::Fail, e.to_string());
            return;
        }
    };
    match setup.initial_agents() {
        Ok(a) => report.push(
            "placement",
            CheckStatus::Pass,
            format!("{} agents on the checkerboard", a.len()),
        ),
        Err(e) => report.push("placement", CheckStatus::Fail, e.to_string()),
    }
    let acc = config.accumulator_bytes();
    let buffers = config.episode_buffer_bytes();
    let detail = format!(
        "accumulators {:.1} MiB ({:?}), episode buffers {:.1} MiB, budget {:.1} MiB",
        acc as f64 / 1048576.0,
        config.group_mode,
        buffers as f64 / 1048576.0,
        config.memory_budget_bytes as f64 / 1048576.0
    );
    let status = if acc > config.memory_budget_bytes {
        CheckStatus::Warn
    } else {
        CheckStatus::Pass
    };
    report.push("memory", status, detail);
}

/// Identifies a reproducible run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub tool_version: String,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub trial_dirs: Vec<PathBuf>,
    pub overrides: Vec<String>,
    pub created_unix: u64,
    pub updated_unix: u64,
    pub completed_trials: Vec<usize>,
    pub failed_trials: Vec<(usize, String)>,
}

impl RunManifest {
    pub fn load(run_dir: &Path) -> Result<Self> {
        let path = run_dir.join("manifest.json");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format {
            path,
            message: e.to_string(),
        })
    }

    fn save(&self, run_dir: &Path) -> Result<()> {
        write_json_atomic(&run_dir.join("manifest.json"), self)
    }
}

/// Where a run ended up and which trials failed.
#[derive(Debug)]
pub struct RunOutcome {
    pub run_dir: PathBuf,
    pub manifest: RunManifest,
}

impl RunOutcome {
    pub fn exit_code(&self) -> ExitCode {
        if self.manifest.failed_trials.is_empty() {
            ExitCode::SUCCESS
        } else {
            ExitCode::from(2)
        }
    }
}

fn now_unix() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

pub fn output_root(explicit: Option<&Path>) -> PathBuf {
    explicit
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os(OUTPUT_ROOT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs"))
}

pub fn run_dir_name(config: &TrialConfig) -> String {
    let task = serde_json::to_value(config.task).expect("task serializes");
    format!(
        "{}-n{}-{}-s{}",
        task.as_str().unwrap_or("task"),
        config.n_agent,
        &config.hash()[..8],
        config.master_seed
    )
}

pub fn cmd_run(
    config_path: &Path,
    overrides: &[String],
    out_root: Option<&Path>,
    jobs: Option<usize>,
) -> Result<RunOutcome> {
    let config = load_config(config_path, overrides)?;
    run_config(&config, overrides, out_root, jobs)
}

/// `cmd_run` for a config already in memory.
pub fn run_config(
    config: &TrialConfig,
    overrides: &[String],
    out_root: Option<&Path>,
    jobs: Option<usize>,
) -> Result<RunOutcome> {
    config.validate()?;
    config.setup()?.initial_agents()?;
    let run_dir = output_root(out_root).join(run_dir_name(config));
    if run_dir.join("manifest.json").exists() {
        return Err(Error::invalid(format!(
            "{} already holds a run; use `resume` to continue it",
            run_dir.display()
        )));
    }
    fs::create_dir_all(&run_dir).map_err(|e| Error::io(&run_dir, e))?;
    write_json_atomic(&run_dir.join("config.json"), config)?;
    let now = now_unix();
    let manifest = RunManifest {
        schema_version: crate::runner::SCHEMA_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").to_owned(),
        config_hash: config.hash(),
        seeds: (0..config.n_trials).map(|i| config.trial_seed(i)).collect(),
        trial_dirs: (0..config.n_trials).map(|i| PathBuf::from(trial_dir_name(i))).collect(),
        overrides: overrides.to_vec(),
        created_unix: now,
        updated_unix: now,
        completed_trials: Vec::new(),
        failed_trials: Vec::new(),
    };
    manifest.save(&run_dir)?;
    execute(&run_dir, config, manifest, jobs)
}

pub fn cmd_resume(run_dir: &Path, jobs: Option<usize>) -> Result<RunOutcome> {
    let config = TrialConfig::load(&run_dir.join("config.json"))?;
    let manifest = RunManifest::load(run_dir)?;
    if manifest.config_hash != config.hash() {
        return Err(Error::invalid(format!(
            "{}: config.json no longer matches the manifest hash",
            run_dir.display()
        )));
    }
    execute(run_dir, &config, manifest, jobs)
}

fn execute(run_dir: &Path, config: &TrialConfig, mut manifest: RunManifest, jobs: Option<usize>) -> Result<RunOutcome> {
    let threads = jobs
        .or_else(|| std::thread::available_parallelism().ok().map(|n| n.get()))
        .unwrap_or(1)
        .max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::invalid(format!("cannot start {threads} workers: {e}")))?;
    let results: Vec<Result<()>> = pool.install(|| {
        (0..config.n_trials)
            .into_par_iter()
            .map(|i| run_trial_in_dir(run_dir, config, i))
            .collect()
    });
    manifest.completed_trials.clear();
    manifest.failed_trials.clear();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(()) => manifest.completed_trials.push(i),
            Err(e) => {
                warn!("trial {i} failed: {e}");
                manifest.failed_trials.push((i, e.to_string()));
            }
        }
    }
    manifest.updated_unix = now_unix();
    manifest.save(run_dir)?;
    Ok(RunOutcome {
        run_dir: run_dir.to_owned(),
        manifest,
    })
}

pub fn trial_dir_name(i: usize) -> String {
    format!("trial_{i:03}")
}

fn run_trial_in_dir(run_dir: &Path, config: &TrialConfig, index: usize) -> Result<()> {
    let dir = run_dir.join(trial_dir_name(index));
    if dir.join("complete").exists() {
        info!("trial {index} already complete");
        return Ok(());
    }
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut trial = if dir.join("checkpoint.json").exists() {
        let (file, meta) = load_checkpoint(&dir)?;
        let log = if config.log_trajectories && meta.episodes_done > 0 {
            Some(TrajectoryLog::load(&dir.join("trajectories.bin"))?)
        } else {
            None
        };
        info!("trial {index} resumes after episode {}", meta.episodes_done);
        Trial::restore(config, &file, &meta, log)?
    } else {
        Trial::new(config, index)?
    };
    let every = config.checkpoint_every;
    trial.run_to_end(|t| {
        if every > 0 && t.episodes_done() % every == 0 && !t.is_complete() {
            save_checkpoint(&dir, t)?;
        }
        Ok(())
    })?;
    save_checkpoint(&dir, &trial)?;
    write_trial_outputs(&dir, &trial)?;
    fs::write(dir.join("complete"), b"").map_err(|e| Error::io(dir.join("complete"), e))
}

/// Write `trial`'s checkpoint (and trajectory log) into its trial directory.
/// `resume` continues from whatever this last wrote.
pub fn save_checkpoint(dir: &Path, trial: &Trial) -> Result<()> {
    let (mut file, meta) = trial.checkpoint();
    file.push("episodes_done", &DMatrix::from_element(1, 1, meta.episodes_done as f64));
    if let Some(log) = trial.trajectories() {
        write_atomic(&dir.join("trajectories.bin"), &log.to_bytes())?;
    }
    write_atomic(&dir.join("checkpoint.bin"), &file.to_bytes())?;
    write_json_atomic(&dir.join("checkpoint.json"), &meta)
}

fn load_checkpoint(dir: &Path) -> Result<(TensorFile, CheckpointMeta)> {
    let file = TensorFile::load(&dir.join("checkpoint.bin"))?;
    let path = dir.join("checkpoint.json");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let meta: CheckpointMeta = serde_json::from_str(&text).map_err(|e| Error::Format {
        path: path.clone(),
        message: e.to_string(),
    })?;
    let done = file.require("episodes_done")?[(0, 0)] as usize;
    if done != meta.episodes_done {
        return Err(Error::Format {
            path,
            message: format!(
                "checkpoint halves disagree ({done} vs {} episodes); delete both to restart the trial",
                meta.episodes_done
            ),
        });
    }
    Ok((file, meta))
}

fn write_trial_outputs(dir: &Path, trial: &Trial) -> Result<()> {
    let records = trial.records();
    let t_max = trial.config().t_max;
    let n_groups = trial.setup().n_groups();

    let path = dir.join("episodes.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| csv_err(&path, e))?;
    let mut header: Vec<String> = ["episode", "mean", "best", "worst", "epsilon", "v_bar", "max_condition"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((0..n_groups).map(|g| format!("group_{g}_mean")));
    w.write_record(&header).map_err(|e| csv_err(&path, e))?;
    for r in records {
        let mut row = vec![
            r.episode.to_string(),
            r.mean.to_string(),
            r.best.to_string(),
            r.worst.to_string(),
            r.epsilon.to_string(),
            average_velocity(r.mean, t_max)?.to_string(),
            r.max_condition.to_string(),
        ];
        row.extend(r.group_means.iter().map(|g| g.to_string()));
        w.write_record(&row).map_err(|e| csv_err(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let path = dir.join("agent_rewards.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| csv_err(&path, e))?;
    let n_agent = records.first().map_or(0, |r| r.rewards.len());
    let mut header = vec!["episode".to_owned()];
    header.extend((0..n_agent).map(|i| format!("agent_{i}")));
    w.write_record(&header).map_err(|e| csv_err(&path, e))?;
    for r in records {
        let mut row = vec![r.episode.to_string()];
        row.extend(r.rewards.iter().map(|v| v.to_string()));
        w.write_record(&row).map_err(|e| csv_err(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    write_json_atomic(&dir.join("episodes.json"), &records)
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::Format {
        path: path.to_owned(),
        message: e.to_string(),
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

/// A finished run loaded back from disk.
#[derive(Debug, Clone)]
pub struct LoadedRun {
    pub dir: PathBuf,
    pub config: TrialConfig,
    pub manifest: RunManifest,
    pub trials: Vec<Vec<EpisodeRecord>>,
}

impl LoadedRun {
    pub fn load(dir: &Path) -> Result<Self> {
        let config = TrialConfig::load(&dir.join("config.json"))?;
        let manifest = RunManifest::load(dir)?;
        let mut trials = Vec::with_capacity(config.n_trials);
        for i in 0..config.n_trials {
            let tdir = dir.join(trial_dir_name(i));
            if !tdir.join("complete").exists() {
                return Err(Error::invalid(format!(
                    "{} is not complete; finish it with `esn-crowd resume {}`",
                    tdir.display(),
                    dir.display()
                )));
            }
            let path = tdir.join("episodes.json");
            let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            trials.push(serde_json::from_str(&text).map_err(|e| Error::Format {
                path,
                message: e.to_string(),
            })?);
        }
        Ok(LoadedRun {
            dir: dir.to_owned(),
            config,
            manifest,
            trials,
        })
    }

    pub fn trial_slices(&self) -> Vec<&[EpisodeRecord]> {
        self.trials.iter().map(Vec::as_slice).collect()
    }

    pub fn trajectories(&self) -> Result<Vec<TrajectoryLog>> {
        (0..self.config.n_trials)
            .map(|i| {
                let path = self.dir.join(trial_dir_name(i)).join("trajectories.bin");
                if !path.exists() {
                    return Err(Error::invalid(format!(
                        "{} has no trajectory log; rerun with `esn-crowd run --log-trajectories`",
                        path.parent().unwrap_or(&path).display()
                    )));
                }
                TrajectoryLog::load(&path)
            })
            .collect()
    }

    /// The last 100 episodes (151–250 for a 250-episode run) and steps
    /// `min(100, t_max − 1) ..= t_max − 1`.
    pub fn default_windows(&self) -> ((usize, usize), (usize, usize)) {
        let t_last = self.config.t_max - 1;
        let n = self.config.n_episodes;
        ((100.min(t_last), t_last), (n.saturating_sub(99).max(1), n.max(1)))
    }
}

/// Optional window overrides for `metrics`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Windows {
    pub time: Option<(usize, usize)>,
    pub episode: Option<(usize, usize)>,
}

pub fn cmd_metrics(
    run_dirs: &[PathBuf],
    which: MetricKind,
    windows: Windows,
    out: Option<&Path>,
) -> Result<Vec<PathBuf>> {
    let first = run_dirs
        .first()
        .ok_or_else(|| Error::invalid("metrics needs at least one run directory"))?;
    if which != MetricKind::Diagram && run_dirs.len() != 1 {
        return Err(Error::invalid("curves and colormap take exactly one run directory"));
    }
    let runs = run_dirs
        .iter()
        .map(|d| LoadedRun::load(d))
        .collect::<Result<Vec<_>>>()?;
    let out = out.map(Path::to_path_buf).unwrap_or_else(|| first.join("metrics"));
    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let seeds = runs.iter().flat_map(|r| r.manifest.seeds.clone()).collect();
    let hashes = runs.iter().map(|r| r.manifest.config_hash.clone()).collect();
    let n_trials = runs.iter().map(|r| r.trials.len()).sum();

    let mut sidecar = MetricsSidecar {
        kind: String::new(),
        time_window: None,
        episode_window: None,
        seeds,
        config_hashes: hashes,
        n_trials,
        degenerate_se: n_trials < 2,
        files: Vec::new(),
    };
    let files = match which {
        MetricKind::Curves => {
            let run = &runs[0];
            let curve = LearningCurve::from_trials(&run.trial_slices());
            let reward = out.join("curve.csv");
            let velocity = out.join("curve_velocity.csv");
            curve.write_csv(&reward)?;
            curve.per_step(run.config.t_max)?.write_csv(&velocity)?;
            sidecar.kind = "curves".into();
            sidecar.degenerate_se = curve.degenerate_se;
            vec![reward, velocity]
        }
        MetricKind::Colormap => {
            let run = &runs[0];
            let (t_default, e_default) = run.default_windows();
            let tw = windows.time.unwrap_or(t_default);
            let ew = windows.episode.unwrap_or(e_default);
            let logs = run.trajectories()?;
            let refs: Vec<&TrajectoryLog> = logs.iter().collect();
            let map = accumulate_density(&refs, tw, ew)?;
            sidecar.kind = "colormap".into();
            sidecar.time_window = Some(tw);
            sidecar.episode_window = Some(ew);
            map.write(&out, "density")?
        }
        MetricKind::Diagram => {
            let mut points = Vec::with_capacity(runs.len());
            let mut used_window = None;
            for run in &runs {
                let ew = windows.episode.unwrap_or(run.default_windows().1);
                used_window.get_or_insert(ew);
                let setup = run.config.setup()?;
                points.push(fundamental_point(
                    run.config.n_agent,
                    &setup.map,
                    &run.trial_slices(),
                    run.config.t_max,
                    ew,
                )?);
            }
            points.sort_by_key(|p| p.n_agent);
            let path = out.join("diagram.csv");
            write_diagram_csv(&points, &path)?;
            sidecar.kind = "diagram".into();
            sidecar.episode_window = used_window;
            vec![path]
        }
    };
    sidecar.files = files.iter().filter_map(|p| p.file_name().map(PathBuf::from)).collect();
    let side = out.join(format!("{}.json", sidecar.kind));
    sidecar.write(&side)?;
    let mut all = files;
    all.push(side);
    Ok(all)
}
