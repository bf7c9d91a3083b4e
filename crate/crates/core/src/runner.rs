//! Trials and batches.
//!
//! One episode runs `t_max` environment steps. At each step every agent
//! observes, evaluates all actions, picks one ε-greedily and commits the
//! matching reservoir state; then the environment resolves all moves at once.
//! A final action selection at `t = t_max` produces the terminal reservoir
//! state without moving anybody. The episode ends with accumulate, solve,
//! forget, and ε decay, in that order.
//!
//! Reservoir states and the environment are reset at the start of every
//! episode. `Ã`, `B̃`, `W_out` and ε carry over.

use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use nalgebra::DMatrix;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::container::TensorFile;
use crate::env::{Action, Environment, MapSpec, PlacementRegion, TaskKind, TaskSetup, OBS_DIM};
use crate::error::{Error, Result};
use crate::esn::{AgentInput, NetworkShape, ReservoirState, SparsityProfile, WeightBundle};
use crate::lspi::{epsilon_greedy, EpsilonSchedule, GroupMode, LearningUnits, Trace, Trainer};
use crate::metrics::{LearningCurve, TrajectoryLog};
use crate::rng::{split_seed, stream_rng, RngPosition, Stream};

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_MEMORY_BUDGET: u64 = 256 << 20;

/// Network and learning constants. Defaults are the reference values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparameters {
    pub n_res: usize,
    pub alpha: f64,
    pub p_s1_in: f64,
    pub p_s2_in: f64,
    pub p_s3_in: f64,
    pub p_sb_in: f64,
    pub p_s_res: f64,
    pub sigma_in_o: f64,
    pub sigma_in_a: f64,
    pub sigma_in_b: f64,
    pub sigma_res_0: f64,
    pub rho_target: f64,
    pub gamma: f64,
    pub epsilon0: f64,
    pub delta_epsilon: f64,
    pub epsilon_min: f64,
    pub lambda: f64,
    pub beta: f64,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        let p = SparsityProfile::default();
        Hyperparameters {
            n_res: 1024,
            alpha: 0.8,
            p_s1_in: p.p_s1_in,
            p_s2_in: p.p_s2_in,
            p_s3_in: p.p_s3_in,
            p_sb_in: p.p_sb_in,
            p_s_res: p.p_s_res,
            sigma_in_o: p.sigma_in_o,
            sigma_in_a: p.sigma_in_a,
            sigma_in_b: p.sigma_in_b,
            sigma_res_0: p.sigma_res_0,
            rho_target: p.rho_target,
            gamma: 0.95,
            epsilon0: 1.0,
            delta_epsilon: 0.95,
            epsilon_min: 0.02,
            lambda: 0.95,
            beta: 1e-4,
        }
    }
}

impl Hyperparameters {
    pub fn sparsity(&self) -> SparsityProfile {
        SparsityProfile {
            p_s1_in: self.p_s1_in,
            p_s2_in: self.p_s2_in,
            p_s3_in: self.p_s3_in,
            p_sb_in: self.p_sb_in,
            p_s_res: self.p_s_res,
            sigma_in_o: self.sigma_in_o,
            sigma_in_a: self.sigma_in_a,
            sigma_in_b: self.sigma_in_b,
            sigma_res_0: self.sigma_res_0,
            rho_target: self.rho_target,
        }
    }

    pub fn schedule(&self) -> EpsilonSchedule {
        EpsilonSchedule::new(self.epsilon0, self.delta_epsilon, self.epsilon_min)
    }

    pub fn validate(&self) -> Result<()> {
        let key = |k: &str| format!("hyperparameters.{k}");
        if self.n_res == 0 {
            return Err(Error::config(key("n_res"), "must be at least 1"));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::config(key("alpha"), format!("must lie in (0, 1], got {}", self.alpha)));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::config(key("gamma"), format!("must lie in [0, 1), got {}", self.gamma)));
        }
        for (k, v) in [("epsilon0", self.epsilon0), ("epsilon_min", self.epsilon_min)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config(key(k), format!("must lie in [0, 1], got {v}")));
            }
        }
        for (k, v) in [("delta_epsilon", self.delta_epsilon), ("lambda", self.lambda)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::config(key(k), format!("must lie in (0, 1], got {v}")));
            }
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::config(key("beta"), format!("must be positive, got {}", self.beta)));
        }
        self.sparsity().validate().map_err(|e| match e {
            Error::InvalidConfig { key: k, message } => Error::config(key(&k), message),
            other => other,
        })
    }
}

fn default_schema() -> u32 {
    SCHEMA_VERSION
}
fn default_episodes() -> usize {
    250
}
fn default_t_max() -> usize {
    500
}
fn default_trials() -> usize {
    8
}
fn default_group_mode() -> GroupMode {
    GroupMode::SharedWithinGroup
}
fn default_checkpoint_every() -> usize {
    10
}
fn default_budget() -> u64 {
    DEFAULT_MEMORY_BUDGET
}

/// Everything that determines a batch of trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialConfig {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    pub task: TaskKind,
    pub n_agent: usize,
    #[serde(default = "default_episodes")]
    pub n_episodes: usize,
    #[serde(default = "default_t_max")]
    pub t_max: usize,
    #[serde(default = "default_group_mode")]
    pub group_mode: GroupMode,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_trials")]
    pub n_trials: usize,
    #[serde(default)]
    pub hyperparameters: Hyperparameters,
    /// Custom map file; the task's shipped map otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub map_path: Option<PathBuf>,
    /// Custom checkerboard region; the task default otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<PlacementRegion>,
    #[serde(default)]
    pub log_trajectories: bool,
    /// Episodes between checkpoints; 0 checkpoints only at the end.
    #[serde(default = "default_checkpoint_every")]
    pub checkpoint_every: usize,
    #[serde(default = "default_budget")]
    pub memory_budget_bytes: u64,
}

impl TrialConfig {
    pub fn new(task: TaskKind, n_agent: usize) -> Self {
        TrialConfig {
            schema_version: SCHEMA_VERSION,
            task,
            n_agent,
            n_episodes: default_episodes(),
            t_max: default_t_max(),
            group_mode: default_group_mode(),
            master_seed: 0,
            n_trials: default_trials(),
            hyperparameters: Hyperparameters::default(),
            map_path: None,
            region: None,
            log_trajectories: false,
            checkpoint_every: default_checkpoint_every(),
            memory_budget_bytes: DEFAULT_MEMORY_BUDGET,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format {
            path: path.to_owned(),
            message: e.to_string(),
        })
    }

    /// Range checks. The error names the offending key.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::config(
                "schema_version",
                format!("unsupported version {}, expected {SCHEMA_VERSION}", self.schema_version),
            ));
        }
        if self.n_agent == 0 {
            return Err(Error::config("n_agent", "must be at least 1"));
        }
        if self.t_max == 0 {
            return Err(Error::config("t_max", "must be at least 1"));
        }
        if self.n_trials == 0 {
            return Err(Error::config("n_trials", "must be at least 1"));
        }
        self.hyperparameters.validate()
    }

    /// Task geometry with any map or region override applied.
    pub fn setup(&self) -> Result<TaskSetup> {
        let mut setup = self.task.setup(self.n_agent)?;
        if let Some(path) = &self.map_path {
            setup = setup.with_map(MapSpec::load(path)?);
            setup.region = self.task.default_region(&setup.map);
        }
        if let Some(region) = self.region {
            setup = setup.with_region(region);
        }
        Ok(setup)
    }

    /// SHA-256 over the canonical JSON form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn trial_seed(&self, index: usize) -> u64 {
        split_seed(self.master_seed, index as u64)
    }

    /// Bytes needed by the `Ã` matrices under the configured grouping.
    pub fn accumulator_bytes(&self) -> u64 {
        let units = match self.group_mode {
            GroupMode::Independent => self.n_agent,
            GroupMode::SharedWithinGroup => self.task.n_groups(),
            GroupMode::SharedAcrossGroups => 1,
        } as u64;
        let dim = self.hyperparameters.n_res as u64 + 1;
        units * dim * dim * 8
    }

    /// Bytes of one episode's traces plus the stacked `Y1`, `Y2`.
    pub fn episode_buffer_bytes(&self) -> u64 {
        let rows = self.n_agent as u64 * (self.t_max as u64 + 1);
        let dim = self.hyperparameters.n_res as u64 + 1;
        3 * rows * dim * 8
    }
}

/// Outcome of one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    /// 1-based episode number.
    pub episode: usize,
    /// Total reward of each agent.
    pub rewards: Vec<i64>,
    /// Signed net x displacement of each agent along its walking direction.
    pub displacement: Vec<i64>,
    pub mean: f64,
    pub best: f64,
    pub worst: f64,
    /// Mean total reward per group.
    pub group_means: Vec<f64>,
    /// ε in force during the episode.
    pub epsilon: f64,
    /// Largest condition estimate over this episode's solves.
    pub max_condition: f64,
    pub duration_secs: f64,
}

impl EpisodeRecord {
    fn new(
        episode: usize,
        rewards: Vec<i64>,
        displacement: Vec<i64>,
        groups: &[usize],
        n_groups: usize,
        epsilon: f64,
    ) -> Self {
        let n = rewards.len().max(1) as f64;
        let mean = rewards.iter().sum::<i64>() as f64 / n;
        let best = rewards.iter().copied().max().unwrap_or(0) as f64;
        let worst = rewards.iter().copied().min().unwrap_or(0) as f64;
        let mut sums = vec![0.0; n_groups];
        let mut counts = vec![0usize; n_groups];
        for (&r, &g) in rewards.iter().zip(groups) {
            sums[g] += r as f64;
            counts[g] += 1;
        }
        let group_means = sums
            .iter()
            .zip(&counts)
            .map(|(&s, &c)| if c == 0 { 0.0 } else { s / c as f64 })
            .collect();
        EpisodeRecord {
            episode,
            rewards,
            displacement,
            mean,
            best,
            worst,
            group_means,
            epsilon,
            max_condition: 0.0,
            duration_secs: 0.0,
        }
    }
}

/// Scalars stored next to a checkpoint's matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub config_hash: String,
    pub trial_index: usize,
    pub seed: u64,
    pub episodes_done: usize,
    pub schedule: EpsilonSchedule,
    pub episodes_seen: Vec<u64>,
    /// Policy generator position: seed, stream and word position as decimal strings.
    pub rng: [String; 3],
    pub records: Vec<EpisodeRecord>,
}

/// One independent learning run.
pub struct Trial {
    config: TrialConfig,
    pub trial_index: usize,
    pub seed: u64,
    setup: TaskSetup,
    env: Environment,
    groups: Vec<usize>,
    weights: WeightBundle,
    trainer: Trainer,
    schedule: EpsilonSchedule,
    policy_rng: ChaCha8Rng,
    records: Vec<EpisodeRecord>,
    trajectories: Option<TrajectoryLog>,
}

impl Trial {
    pub fn new(config: &TrialConfig, trial_index: usize) -> Result<Self> {
        config.validate()?;
        let seed = config.trial_seed(trial_index);
        let setup = config.setup()?;
        let env = setup.environment()?;
        let groups: Vec<usize> = env.agents().iter().map(|a| a.group).collect();
        let units = LearningUnits::new(config.group_mode, &groups, setup.n_groups())?;
        let hp = &config.hyperparameters;
        let shape = NetworkShape {
            n_res: hp.n_res,
            alpha: hp.alpha,
            group_input: units.group_tags.is_some(),
        };
        let weights = WeightBundle::generate(shape, &hp.sparsity(), units.n_units, seed)?;
        let trainer = Trainer::new(units, hp.n_res + 1, hp.beta, hp.gamma, hp.lambda);
        let trajectories = config
            .log_trajectories
            .then(|| {
                TrajectoryLog::new(
                    setup.map.width,
                    setup.map.height,
                    config.t_max,
                    env.agents().iter().map(|a| a.group as u8).collect(),
                )
            })
            .transpose()?;
        Ok(Trial {
            config: config.clone(),
            trial_index,
            seed,
            setup,
            env,
            groups,
            weights,
            trainer,
            schedule: hp.schedule(),
            policy_rng: stream_rng(seed, Stream::Policy),
            records: Vec::new(),
            trajectories,
        })
    }

    pub fn config(&self) -> &TrialConfig {
        &self.config
    }

    pub fn setup(&self) -> &TaskSetup {
        &self.setup
    }

    pub fn records(&self) -> &[EpisodeRecord] {
        &self.records
    }

    pub fn trajectories(&self) -> Option<&TrajectoryLog> {
        self.trajectories.as_ref()
    }

    pub fn weights(&self) -> &WeightBundle {
        &self.weights
    }

    pub fn trainer(&self) -> &Trainer {
        &self.trainer
    }

    pub fn schedule(&self) -> &EpsilonSchedule {
        &self.schedule
    }

    pub fn episodes_done(&self) -> usize {
        self.records.len()
    }

    pub fn is_complete(&self) -> bool {
        self.records.len() >= self.config.n_episodes
    }

    /// Play and learn from one episode.
    pub fn run_episode(&mut self) -> Result<EpisodeRecord> {
        let started = Instant::now();
        let t_max = self.config.t_max;
        let n_res = self.weights.n_res();
        let n_agent = self.env.agents().len();
        let episode = self.records.len() + 1;
        let epsilon = self.schedule.epsilon;

        self.env.reset();
        let mut states: Vec<ReservoirState> =
            (0..n_agent).map(|i| ReservoirState::zeros(i, n_res)).collect();
        let mut traces: Vec<Trace> = (0..n_agent)
            .map(|_| Trace::with_capacity(n_res + 1, t_max + 1))
            .collect();
        let mut obs = vec![0.0; n_agent * OBS_DIM];
        let mut actions = vec![Action::Up; n_agent];
        let mut frames = self.trajectories.as_ref().map(|_| Vec::with_capacity(t_max * n_agent));
        let units = &self.trainer.units;

        for t in 0..=t_max {
            if let (Some(frames), true) = (frames.as_mut(), t < t_max) {
                frames.extend(self.env.agents().iter().map(|a| a.position));
            }
            for (i, chunk) in obs.chunks_mut(OBS_DIM).enumerate() {
                self.env.observe_into(i, chunk);
            }
            let inputs: Vec<AgentInput<'_>> = (0..n_agent)
                .map(|i| AgentInput {
                    obs: &obs[i * OBS_DIM..(i + 1) * OBS_DIM],
                    state: &states[i],
                    readout: &self.weights.w_out[units.unit_of[i]],
                    group_tag: units.group_tags.as_ref().map(|tags| &tags[i][..]),
                })
                .collect();
            let candidates = self.weights.evaluate_population(&inputs)?;
            for (i, c) in candidates.iter().enumerate() {
                let a = epsilon_greedy(&c.q_values, epsilon, &mut self.policy_rng)?;
                states[i].commit_action(c, a)?;
                actions[i] = Action::from_index(a).expect("action index in range");
            }
            if t < t_max {
                let rewards = self.env.step(&actions)?;
                for i in 0..n_agent {
                    traces[i].push_state(states[i].x.as_slice(), rewards[i] as f64);
                }
            } else {
                for i in 0..n_agent {
                    traces[i].push_state(states[i].x.as_slice(), 0.0);
                }
            }
        }

        let reports = self.trainer.end_episode(&traces)?;
        let mut max_condition: f64 = 0.0;
        for (u, report) in reports.into_iter().enumerate() {
            max_condition = max_condition.max(report.condition);
            self.weights.set_readout(u, report.w_out)?;
        }
        self.schedule.decay();

        let agents = self.env.agents();
        let mut record = EpisodeRecord::new(
            episode,
            agents.iter().map(|a| a.cumulative_reward).collect(),
            agents.iter().map(|a| a.displacement * a.direction.sign()).collect(),
            &self.groups,
            self.setup.n_groups(),
            epsilon,
        );
        record.max_condition = max_condition;
        record.duration_secs = started.elapsed().as_secs_f64();
        if let (Some(log), Some(frames)) = (self.trajectories.as_mut(), frames) {
            log.push_episode(episode, frames)?;
        }
        self.records.push(record.clone());
        Ok(record)
    }

    /// Run until `n_episodes` are done, calling `on_episode` after each one.
    pub fn run_to_end<F>(&mut self, mut on_episode: F) -> Result<()>
    where
        F: FnMut(&Trial) -> Result<()>,
    {
        while !self.is_complete() {
            let r = self.run_episode()?;
            info!(
                "trial {} episode {}: mean reward {:.1}, epsilon {:.4}",
                self.trial_index, r.episode, r.mean, r.epsilon
            );
            on_episode(self)?;
        }
        Ok(())
    }

    /// Matrices (fixed weights, readouts, accumulators) and scalar state.
    pub fn checkpoint(&self) -> (TensorFile, CheckpointMeta) {
        let mut file = self.weights.to_container();
        for acc in &self.trainer.accumulators {
            file.push(&format!("a_tilde.{}", acc.unit), &acc.a_tilde);
            let b = DMatrix::from_row_slice(1, acc.b_tilde.len(), acc.b_tilde.as_slice());
            file.push(&format!("b_tilde.{}", acc.unit), &b);
        }
        let pos = RngPosition::capture(self.seed, &self.policy_rng);
        let meta = CheckpointMeta {
            config_hash: self.config.hash(),
            trial_index: self.trial_index,
            seed: self.seed,
            episodes_done: self.records.len(),
            schedule: self.schedule,
            episodes_seen: self.trainer.accumulators.iter().map(|a| a.episodes_seen).collect(),
            rng: [pos.seed.to_string(), pos.stream.to_string(), pos.word_pos.to_string()],
            records: self.records.clone(),
        };
        (file, meta)
    }

    /// Rebuild a trial from a checkpoint written by [`Trial::checkpoint`].
    pub fn restore(
        config: &TrialConfig,
        file: &TensorFile,
        meta: &CheckpointMeta,
        trajectories: Option<TrajectoryLog>,
    ) -> Result<Self> {
        if meta.config_hash != config.hash() {
            return Err(Error::invalid("checkpoint was written for a different config"));
        }
        let mut trial = Trial::new(config, meta.trial_index)?;
        if trial.seed != meta.seed {
            return Err(Error::invalid("checkpoint seed does not match the trial seed"));
        }
        trial.weights = WeightBundle::from_container(file)?;
        if trial.weights.w_out.len() != trial.trainer.accumulators.len()
            || trial.weights.n_res() != config.hyperparameters.n_res
        {
            return Err(Error::invalid("checkpoint network shape differs from the config"));
        }
        if meta.episodes_seen.len() != trial.trainer.accumulators.len() {
            return Err(Error::invalid("checkpoint unit count differs from the config"));
        }
        for (acc, &seen) in trial.trainer.accumulators.iter_mut().zip(&meta.episodes_seen) {
            let a = file.require(&format!("a_tilde.{}", acc.unit))?;
            let b = file.require(&format!("b_tilde.{}", acc.unit))?;
            if a.shape() != acc.a_tilde.shape() || b.len() != acc.b_tilde.len() {
                return Err(Error::invalid("checkpoint accumulator shape differs"));
            }
            acc.a_tilde.copy_from(a);
            acc.b_tilde.copy_from_slice(b.as_slice());
            acc.episodes_seen = seen;
        }
        trial.schedule = meta.schedule;
        let parse = |s: &str| -> Result<u128> {
            s.parse()
                .map_err(|_| Error::invalid(format!("bad generator position `{s}` in checkpoint")))
        };
        let pos = RngPosition {
            seed: parse(&meta.rng[0])? as u64,
            stream: parse(&meta.rng[1])? as u64,
            word_pos: parse(&meta.rng[2])?,
        };
        trial.policy_rng = pos.restore();
        trial.records = meta.records.clone();
        if meta.episodes_done != trial.records.len() {
            return Err(Error::invalid("checkpoint record count differs from episodes_done"));
        }
        if let Some(log) = trajectories {
            trial.trajectories = Some(log.truncated(meta.episodes_done));
        } else if config.log_trajectories && meta.episodes_done > 0 {
            return Err(Error::invalid("trajectory log missing for a logging run"));
        }
        Ok(trial)
    }
}

/// Records (and trajectories when enabled) of a finished trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutput {
    pub trial_index: usize,
    pub seed: u64,
    pub records: Vec<EpisodeRecord>,
    pub trajectories: Option<TrajectoryLog>,
}

pub fn run_trial(config: &TrialConfig, trial_index: usize) -> Result<TrialOutput> {
    let mut trial = Trial::new(config, trial_index)?;
    trial.run_to_end(|_| Ok(()))?;
    Ok(TrialOutput {
        trial_index,
        seed: trial.seed,
        records: trial.records,
        trajectories: trial.trajectories,
    })
}

/// Per-trial results and the across-trial learning curve.
#[derive(Debug)]
pub struct BatchOutput {
    pub trials: Vec<Result<TrialOutput>>,
    pub curve: LearningCurve,
}

impl BatchOutput {
    pub fn completed(&self) -> impl Iterator<Item = &TrialOutput> {
        self.trials.iter().filter_map(|t| t.as_ref().ok())
    }
}

/// Run all trials in parallel. Failed trials are reported individually and
/// left out of the aggregate.
pub fn run_batch(config: &TrialConfig) -> Result<BatchOutput> {
    config.validate()?;
    let trials: Vec<Result<TrialOutput>> = (0..config.n_trials)
        .into_par_iter()
        .map(|i| run_trial(config, i))
        .collect();
    for (i, t) in trials.iter().enumerate() {
        if let Err(e) = t {
            warn!("trial {i} failed: {e}");
        }
    }
    let completed: Vec<&[EpisodeRecord]> = trials
        .iter()
        .filter_map(|t| t.as_ref().ok().map(|t| t.records.as_slice()))
        .collect();
    if completed.len() < trials.len() {
        warn!(
            "aggregating over {} of {} trials",
            completed.len(),
            trials.len()
        );
    }
    let curve = LearningCurve::from_trials(&completed);
    Ok(BatchOutput { trials, curve })
}
