//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.
//!
//! Run a subset by number: `cargo test --test acceptance -- 1 4 10`.

mod common;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use esn_crowd::cli::{self, MetricKind, Windows};
use esn_crowd::env::{Action, TaskKind};
use esn_crowd::esn::{AgentInput, NetworkShape, ReservoirState, SparsityProfile, WeightBundle, N_ACTIONS};
use esn_crowd::env::OBS_DIM;
use esn_crowd::lspi::{Accumulators, EpsilonSchedule, GroupMode, LearningUnits, Trace, Trainer};
use esn_crowd::metrics::accumulate_density;
use esn_crowd::runner::{run_batch, BatchOutput, Hyperparameters, Trial, TrialConfig};
use nalgebra::{DVector, RowDVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = std::result::Result<String, String>;

struct Criterion {
    number: usize,
    name: &'static str,
    limit: Option<Duration>,
    run: fn(&mut Shared) -> Outcome,
}

/// Learning runs reused by more than one criterion.
#[derive(Default)]
struct Shared {
    runs: std::collections::HashMap<(TaskKind, usize), BatchOutput>,
}

impl Shared {
    fn batch(&mut self, task: TaskKind, n: usize) -> Result<&BatchOutput, String> {
        if !self.runs.contains_key(&(task, n)) {
            let config = desk_config(task, n);
            let out = run_batch(&config).map_err(|e| e.to_string())?;
            if let Some(Err(e)) = out.trials.iter().find(|t| t.is_err()) {
                return Err(format!("{task:?} n={n}: trial failed: {e}"));
            }
            self.runs.insert((task, n), out);
        }
        Ok(&self.runs[&(task, n)])
    }
}

fn desk_config(task: TaskKind, n: usize) -> TrialConfig {
    let mut c = TrialConfig::new(task, n);
    c.hyperparameters.n_res = 256;
    c.n_trials = 3;
    c.n_episodes = match task {
        TaskKind::Task1 => 120,
        TaskKind::Task2 => 150,
    };
    c.log_trajectories = task == TaskKind::Task2 && n == 32;
    c
}

/// Mean v̄ of each trial over its last `k` episodes, optionally for one group.
fn trial_velocities(out: &BatchOutput, k: usize, t_max: usize, group: Option<usize>) -> Vec<f64> {
    out.completed()
        .map(|t| {
            let tail = &t.records[t.records.len() - k..];
            let sum: f64 = tail
                .iter()
                .map(|r| group.map_or(r.mean, |g| r.group_means[g]))
                .sum();
            sum / k as f64 / t_max as f64
        })
        .collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn fmt_list(v: &[f64]) -> String {
    let items: Vec<String> = v.iter().map(|x| format!("{x:.3}")).collect();
    format!("[{}]", items.join(", "))
}

fn table_profile() -> SparsityProfile {
    Hyperparameters::default().sparsity()
}

fn spectral_radius(_: &mut Shared) -> Outcome {
    let profile = table_profile();
    let shape = NetworkShape {
        n_res: 256,
        alpha: 0.8,
        group_input: false,
    };
    let mut worst: f64 = 0.0;
    let mut worst_residual: f64 = 0.0;
    for seed in 0..20 {
        let w = WeightBundle::generate(shape, &profile, 1, seed).map_err(|e| e.to_string())?;
        let (rho, residual) = common::subspace_spectral_radius(&w.w_res, 24, 1000 + seed);
        worst = worst.max((rho - 0.95).abs());
        worst_residual = worst_residual.max(residual);
    }
    let detail = format!("max |ρ − 0.95| = {worst:.2e}, max Ritz residual {worst_residual:.1e}");
    if worst <= 1e-6 && worst_residual < 1e-6 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn candidate_equivalence(_: &mut Shared) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for instance in 0..100u64 {
        let n_res = rng.random_range(12..=48);
        let group_input = instance % 3 == 0;
        let mut profile = table_profile();
        profile.p_s_res = 0.6;
        let shape = NetworkShape {
            n_res,
            alpha: rng.random_range(0.1..=1.0),
            group_input,
        };
        let w = WeightBundle::generate(shape, &profile, 1, instance).map_err(|e| e.to_string())?;
        let tag = [1.0, 0.0];
        let tag = group_input.then_some(&tag[..]);
        let n_agents = rng.random_range(1..=5);
        let obs: Vec<Vec<f64>> = (0..n_agents)
            .map(|_| (0..OBS_DIM).map(|_| f64::from(rng.random_bool(0.2))).collect())
            .collect();
        let states: Vec<ReservoirState> = (0..n_agents)
            .map(|k| ReservoirState {
                owner: k,
                x: DVector::from_fn(n_res, |_, _| rng.random_range(0.0..3.0)),
            })
            .collect();
        let readout = RowDVector::from_fn(n_res + 1, |_, _| rng.random_range(-1.0..1.0));
        let inputs: Vec<AgentInput<'_>> = (0..n_agents)
            .map(|k| AgentInput {
                obs: &obs[k],
                state: &states[k],
                readout: &readout,
                group_tag: tag,
            })
            .collect();
        let population = w.evaluate_population(&inputs).map_err(|e| e.to_string())?;
        for k in 0..n_agents {
            let single = w
                .evaluate_candidates(&obs[k], &states[k], &readout, tag)
                .map_err(|e| e.to_string())?;
            for a in 0..N_ACTIONS {
                let (bar, q) = common::candidate_by_definition(&w, &obs[k], &states[k].x, &readout, tag, a);
                for c in [&single, &population[k]] {
                    worst = worst.max((c.q_values[a] - q).abs() / q.abs().max(1.0));
                    let d = (c.states.column(a) - &bar).amax() / bar.amax().max(1.0);
                    worst = worst.max(d);
                }
            }
        }
    }
    let detail = format!("max scaled deviation {worst:.2e} over 100 instances");
    if worst <= 1e-12 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn accumulator_oracle(_: &mut Shared) -> Outcome {
    let (gamma, lambda, beta) = (0.95, 0.95, 1e-4);
    let dim = 9;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut episodes: Vec<Vec<Trace>> = Vec::new();
    for len in [4, 6, 3] {
        let traces = (0..2)
            .map(|_| {
                let mut t = Trace::new(dim);
                for step in 0..=len {
                    let x: Vec<f64> = (0..dim - 1).map(|_| rng.random_range(0.0..2.0)).collect();
                    let r = if step < len { rng.random_range(-1..=1) as f64 } else { 0.0 };
                    t.push_state(&x, r);
                }
                t
            })
            .collect();
        episodes.push(traces);
    }

    let mut acc = Accumulators::new(dim, beta, 0);
    let mut trainer = Trainer::new(
        LearningUnits::new(GroupMode::SharedWithinGroup, &[0, 0], 1).map_err(|e| e.to_string())?,
        dim,
        beta,
        gamma,
        lambda,
    );
    let mut worst: f64 = 0.0;
    for (n, traces) in episodes.iter().enumerate() {
        let refs: Vec<&Trace> = traces.iter().collect();
        acc.finalize_episode(&refs, gamma).map_err(|e| e.to_string())?;
        let (a, b) = common::direct_accumulators(&episodes[..=n], gamma, lambda, beta);
        worst = worst.max((&acc.a_tilde - &a).norm() / a.norm());
        worst = worst.max((&acc.b_tilde - &b).norm() / b.norm().max(f64::MIN_POSITIVE));
        let report = trainer.end_episode(traces).map_err(|e| e.to_string())?;
        let direct_w = a
            .transpose()
            .lu()
            .solve(&b.transpose())
            .ok_or("direct system singular")?
            .transpose();
        worst = worst.max((&report[0].w_out - &direct_w).norm() / direct_w.norm());
        acc.apply_forgetting(lambda);
    }
    let detail = format!("max relative deviation {worst:.2e} over 3 episodes");
    if worst <= 1e-10 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn tabular_lspi(_: &mut Shared) -> Outcome {
    use common::{chain_features, chain_step, chain_value_iteration, CHAIN_STATES};
    let gamma = 0.9;
    let dim = 2 * CHAIN_STATES + 1;
    let mut acc = Accumulators::new(dim, 1e-12, 0);
    // exploring starts, then the greedy policy (always right)
    for s0 in 0..CHAIN_STATES {
        for a0 in 0..2 {
            let mut trace = Trace::new(dim);
            let (mut s, mut a) = (s0, a0);
            loop {
                let (next, r) = chain_step(s, a);
                trace
                    .record_step(&chain_features(Some((s, a))), r)
                    .map_err(|e| e.to_string())?;
                match next {
                    Some(s2) => {
                        s = s2;
                        a = 1;
                    }
                    None => break,
                }
            }
            trace.record_terminal(&chain_features(None)).map_err(|e| e.to_string())?;
            acc.finalize_episode(&[&trace], gamma).map_err(|e| e.to_string())?;
            acc.apply_forgetting(1.0);
        }
    }
    let w = acc.solve().map_err(|e| e.to_string())?.w_out;
    let q_star = chain_value_iteration(gamma);
    let mut worst: f64 = 0.0;
    for s in 0..CHAIN_STATES {
        for a in 0..2 {
            let q = w[2 * s + a] + w[dim - 1];
            worst = worst.max((q - q_star[s][a]).abs());
        }
    }
    let detail = format!("max |Q − Q*| = {worst:.2e}, exit value {:.1e}", w[dim - 1]);
    if worst <= 1e-6 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn environment_fuzz(_: &mut Shared) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut violations = Vec::new();
    let mut steps = 0usize;
    for (task, sizes) in [(TaskKind::Task1, [1, 12, 40, 42]), (TaskKind::Task2, [2, 32, 64, 80])] {
        let mut map_steps = 0usize;
        let mut episode = 0usize;
        while map_steps < 100_000 {
            let n = sizes[episode % sizes.len()];
            episode += 1;
            let setup = task.setup(n).map_err(|e| e.to_string())?;
            let mut env = setup.environment().map_err(|e| e.to_string())?;
            let map = env.map().clone();
            let mut reward_sum = vec![0i64; n];
            let mut unwrapped = vec![0i64; n];
            for _ in 0..500 {
                let before = env.agents().to_vec();
                let actions: Vec<Action> = (0..n).map(|_| Action::ALL[rng.random_range(0..4)]).collect();
                let expected = common::reference_moves(&map, &before, &actions);
                let rewards = env.step(&actions).map_err(|e| e.to_string())?;
                let after = env.agents();
                if after.len() != before.len() {
                    violations.push(format!("{task:?}: agent count changed"));
                }
                let mut seen = std::collections::HashSet::new();
                for (k, a) in after.iter().enumerate() {
                    if a.id != before[k].id {
                        violations.push(format!("{task:?}: agent order changed"));
                    }
                    if !map.is_walkable(a.position) {
                        violations.push(format!("{task:?}: agent {} on a wall", a.id));
                    }
                    if !seen.insert(a.position) {
                        violations.push(format!("{task:?}: shared cell {:?}", a.position));
                    }
                    if a.position != expected[k] {
                        violations.push(format!("{task:?}: agent {} moved against the rules", a.id));
                    }
                    let w = map.width as i64;
                    let dx = (a.position.x as i64 - before[k].position.x as i64 + w + 1).rem_euclid(w) - 1;
                    unwrapped[k] += dx;
                    reward_sum[k] += rewards[k];
                }
                map_steps += 1;
                if violations.len() > 5 {
                    return Err(violations.join("; "));
                }
            }
            for (k, a) in env.agents().iter().enumerate() {
                let sign = a.direction.sign();
                if reward_sum[k] != unwrapped[k] * sign || a.cumulative_reward != reward_sum[k] {
                    violations.push(format!(
                        "{task:?}: agent {} rewards {} vs displacement {}",
                        a.id,
                        reward_sum[k],
                        unwrapped[k] * sign
                    ));
                }
            }
        }
        steps += map_steps;
    }
    if violations.is_empty() {
        Ok(format!("{steps} steps on both maps, no violations"))
    } else {
        Err(violations.join("; "))
    }
}

fn task1_learning(shared: &mut Shared) -> Outcome {
    let out = shared.batch(TaskKind::Task1, 12)?;
    let v = trial_velocities(out, 20, 500, None);
    let m = mean(&v);
    let detail = format!("v̄ over last 20 episodes = {m:.3} (trials {})", fmt_list(&v));
    if m >= 0.6 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn task1_density_trend(shared: &mut Shared) -> Outcome {
    let low = mean(&trial_velocities(shared.batch(TaskKind::Task1, 12)?, 20, 500, None));
    let high_v = trial_velocities(shared.batch(TaskKind::Task1, 40)?, 20, 500, None);
    let high = mean(&high_v);
    let detail = format!("v̄(12) = {low:.3}, v̄(40) = {high:.3} (trials {})", fmt_list(&high_v));
    if low > high {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn artifact_dir() -> PathBuf {
    Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance")
}

fn task2_lanes(shared: &mut Shared) -> Outcome {
    let out = shared.batch(TaskKind::Task2, 32)?;
    let right = trial_velocities(out, 20, 500, Some(0));
    let left = trial_velocities(out, 20, 500, Some(1));
    let (vr, vl) = (mean(&right), mean(&left));

    let logs: Vec<_> = out.completed().filter_map(|t| t.trajectories.as_ref()).collect();
    let density = accumulate_density(&logs, (100, 499), (131, 150)).map_err(|e| e.to_string())?;
    let dir = artifact_dir();
    std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    density.write(&dir, "task2_n32_density").map_err(|e| e.to_string())?;
    let rows: Vec<String> = (0..density.height)
        .map(|y| {
            let g0 = density.row_profile(0)[y];
            let g1 = density.row_profile(1)[y];
            let tag = if g0 > 2.0 * g1 {
                "R"
            } else if g1 > 2.0 * g0 {
                "L"
            } else {
                "-"
            };
            format!("{tag}({g0:.1}/{g1:.1})")
        })
        .collect();

    let detail = format!(
        "v̄ right-walkers {vr:.3}, left-walkers {vl:.3}; row occupancy right/left {}; colormaps in {}",
        rows.join(" "),
        dir.display()
    );
    if vr > 0.25 && vl > 0.25 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn task2_jamming(shared: &mut Shared) -> Outcome {
    let low = mean(&trial_velocities(shared.batch(TaskKind::Task2, 32)?, 20, 500, None));
    let high_v = trial_velocities(shared.batch(TaskKind::Task2, 64)?, 20, 500, None);
    let high = mean(&high_v);
    let detail = format!("v̄(32) = {low:.3}, v̄(64) = {high:.3} (trials {})", fmt_list(&high_v));
    if high < 0.5 * low {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn epsilon_schedule(_: &mut Shared) -> Outcome {
    let mut config = TrialConfig::new(TaskKind::Task2, 2);
    config.hyperparameters.n_res = 32;
    config.hyperparameters.p_s_res = 0.5;
    config.t_max = 1;
    config.n_episodes = 250;
    let mut trial = Trial::new(&config, 0).map_err(|e| e.to_string())?;
    trial.run_to_end(|_| Ok(())).map_err(|e| e.to_string())?;

    let mut iterate = 1.0f64;
    let mut decays = 0;
    let mut first_at_floor = None;
    for record in trial.records() {
        if record.epsilon != iterate {
            return Err(format!(
                "episode {}: ε = {} but the iterate gives {iterate}",
                record.episode, record.epsilon
            ));
        }
        if iterate <= 0.02 && first_at_floor.is_none() {
            first_at_floor = Some(record.episode);
        }
        if iterate > 0.02 {
            iterate *= 0.95;
            decays += 1;
        }
    }
    let mut schedule = EpsilonSchedule::new(1.0, 0.95, 0.02);
    for _ in 0..250 {
        schedule.decay();
    }
    let frozen = trial.records().last().map(|r| r.epsilon).unwrap_or(f64::NAN);
    let detail = format!(
        "{decays} decays, frozen at {frozen:.5} from episode {}",
        first_at_floor.unwrap_or(0)
    );
    let pow = 0.95f64.powi(77);
    if decays == 77
        && (frozen - pow).abs() < 1e-12
        && (frozen - 0.0193).abs() < 5e-5
        && schedule.epsilon == frozen
        && first_at_floor == Some(78)
    {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn csv_files(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).into_iter().flatten().flatten() {
            let path = entry.path();
            if path.is_dir() {
                stack.push(path);
            } else if path.extension().is_some_and(|e| e == "csv") {
                let rel = path.strip_prefix(root).unwrap().to_path_buf();
                out.insert(rel, std::fs::read(&path).unwrap_or_default());
            }
        }
    }
    out
}

fn reproducibility(_: &mut Shared) -> Outcome {
    let mut config = TrialConfig::new(TaskKind::Task2, 8);
    config.hyperparameters.n_res = 48;
    config.t_max = 60;
    config.n_episodes = 8;
    config.n_trials = 2;
    config.master_seed = 11;
    config.log_trajectories = true;
    config.checkpoint_every = 3;

    let mut snapshots = Vec::new();
    let mut roots = Vec::new();
    for jobs in [1, 2] {
        let root = tempfile::tempdir().map_err(|e| e.to_string())?;
        let outcome = cli::run_config(&config, &[], Some(root.path()), Some(jobs)).map_err(|e| e.to_string())?;
        for kind in [MetricKind::Curves, MetricKind::Colormap, MetricKind::Diagram] {
            cli::cmd_metrics(std::slice::from_ref(&outcome.run_dir), kind, Windows::default(), None)
                .map_err(|e| e.to_string())?;
        }
        snapshots.push(csv_files(&outcome.run_dir));
        roots.push(root);
    }
    let (a, b) = (&snapshots[0], &snapshots[1]);
    if a.is_empty() {
        return Err("no CSV files written".into());
    }
    if a.keys().ne(b.keys()) {
        return Err("the two runs wrote different file sets".into());
    }
    let differing: Vec<String> = a
        .iter()
        .filter(|(k, v)| b[*k] != **v)
        .map(|(k, _)| k.display().to_string())
        .collect();
    if differing.is_empty() {
        Ok(format!("{} CSV files identical across two runs", a.len()))
    } else {
        Err(format!("differing files: {}", differing.join(", ")))
    }
}

fn main() -> ExitCode {
    let criteria = [
        Criterion { number: 1, name: "spectral radius", limit: Some(Duration::from_secs(30)), run: spectral_radius },
        Criterion { number: 2, name: "batched candidates", limit: Some(Duration::from_secs(5)), run: candidate_equivalence },
        Criterion { number: 3, name: "accumulator oracle", limit: Some(Duration::from_secs(1)), run: accumulator_oracle },
        Criterion { number: 4, name: "tabular LSPI", limit: Some(Duration::from_secs(1)), run: tabular_lspi },
        Criterion { number: 5, name: "environment fuzz", limit: Some(Duration::from_secs(60)), run: environment_fuzz },
        Criterion { number: 6, name: "forked road learning", limit: None, run: task1_learning },
        Criterion { number: 7, name: "velocity falls with density", limit: None, run: task1_density_trend },
        Criterion { number: 8, name: "bidirectional lanes", limit: None, run: task2_lanes },
        Criterion { number: 9, name: "high-density jamming", limit: None, run: task2_jamming },
        Criterion { number: 10, name: "epsilon schedule", limit: None, run: epsilon_schedule },
        Criterion { number: 11, name: "reproducibility", limit: None, run: reproducibility },
    ];
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut shared = Shared::default();
    let mut failures = 0;
    for c in criteria.iter().filter(|c| selected.is_empty() || selected.contains(&c.number)) {
        let start = Instant::now();
        let mut result = (c.run)(&mut shared);
        let elapsed = start.elapsed();
        if let (Ok(detail), Some(limit)) = (&result, c.limit) {
            if elapsed > limit {
                result = Err(format!("{detail}; took {elapsed:.1?}, limit {limit:?}"));
            }
        }
        let (status, detail) = match &result {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failures += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {:>2} {}: {status} ({:.1?}) {detail}", c.number, c.name, elapsed);
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failures} criteria failed");
        ExitCode::FAILURE
    }
}
