//! Least-squares policy iteration over reservoir features.
//!
//! Each learning unit keeps `Ã` and `B̃`. At the end of an episode the unit's
//! agent traces are stacked into `Y1`, `Y2` and `R`, then
//!
//! ```text
//! Ã ← Ã + Y1ᵀ·Y2      B̃ ← B̃ + Rᵀ·Y2      W_out ← B̃·Ã⁻¹      Ã ← λ·Ã,  B̃ ← λ·B̃
//! ```
//!
//! in that order. `Ã` starts at `β·I`.

use log::{debug, warn};
use nalgebra::{DMatrix, DVector, RowDVector, LU};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Condition estimates above this are logged as warnings.
pub const CONDITION_WARN: f64 = 1e12;
/// Condition estimates above this fail the solve.
pub const CONDITION_FAIL: f64 = 1e14;
/// Relative residual bound `‖X·Ã − B̃‖∞ ≤ tol·‖B̃‖∞` targeted by the solve.
pub const RESIDUAL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSchedule {
    pub epsilon: f64,
    pub epsilon0: f64,
    pub delta_epsilon: f64,
    pub epsilon_min: f64,
}

impl EpsilonSchedule {
    pub fn new(epsilon0: f64, delta_epsilon: f64, epsilon_min: f64) -> Self {
        EpsilonSchedule {
            epsilon: epsilon0,
            epsilon0,
            delta_epsilon,
            epsilon_min,
        }
    }

    /// Multiply by `δ_ε` while strictly above the floor.
    pub fn decay(&mut self) {
        if self.epsilon > self.epsilon_min {
            self.epsilon *= self.delta_epsilon;
        }
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// One uniform draw decides exploration; exploring picks uniformly among all
/// actions, otherwise the greedy action is taken.
pub fn epsilon_greedy<R: Rng + ?Sized>(q_values: &[f64], epsilon: f64, rng: &mut R) -> Result<usize> {
    if q_values.is_empty() {
        return Err(Error::invalid("no actions to choose from"));
    }
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::invalid(format!("epsilon {epsilon} outside [0, 1]")));
    }
    let u: f64 = rng.random();
    if u < epsilon {
        Ok(rng.random_range(0..q_values.len()))
    } else {
        Ok(argmax(q_values))
    }
}

/// Per-agent episode record of augmented states `x̂(t) = (x(t); 1)` and rewards.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    dim: usize,
    states: Vec<f64>,
    rewards: Vec<f64>,
}

impl Trace {
    /// Empty trace for feature vectors of length `dim` (`N_res + 1`).
    pub fn new(dim: usize) -> Self {
        Trace {
            dim,
            states: Vec::new(),
            rewards: Vec::new(),
        }
    }

    pub fn with_capacity(dim: usize, steps: usize) -> Self {
        Trace {
            dim,
            states: Vec::with_capacity(dim * steps),
            rewards: Vec::with_capacity(steps),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn clear(&mut self) {
        self.states.clear();
        self.rewards.clear();
    }

    /// Append `(x̂, r)`; `x̂` must end in exactly 1.
    pub fn record_step(&mut self, x_hat: &[f64], reward: f64) -> Result<()> {
        if x_hat.len() != self.dim {
            return Err(Error::invalid(format!(
                "feature vector must have length {}, got {}",
                self.dim,
                x_hat.len()
            )));
        }
        if x_hat[self.dim - 1] != 1.0 {
            return Err(Error::ContractViolation(format!(
                "augmented state must end in 1, found {}",
                x_hat[self.dim - 1]
            )));
        }
        self.states.extend_from_slice(x_hat);
        self.rewards.push(reward);
        Ok(())
    }

    /// Append the reservoir state `x` (length `dim − 1`) with the constant 1.
    pub fn push_state(&mut self, x: &[f64], reward: f64) {
        assert_eq!(x.len() + 1, self.dim, "reservoir state length");
        self.states.extend_from_slice(x);
        self.states.push(1.0);
        self.rewards.push(reward);
    }

    /// Terminal entry: the state reached after the last environment step, reward 0.
    pub fn record_terminal(&mut self, x_hat: &[f64]) -> Result<()> {
        self.record_step(x_hat, 0.0)
    }

    pub fn state(&self, t: usize) -> &[f64] {
        &self.states[t * self.dim..(t + 1) * self.dim]
    }

    pub fn reward(&self, t: usize) -> f64 {
        self.rewards[t]
    }

    pub fn total_reward(&self) -> f64 {
        self.rewards.iter().sum()
    }
}

/// `Y1`, `Y2` and `R` for one unit and one episode.
///
/// Rows are ordered by time, then agent: row `t·|G| + j`. `Y1` and `Y2` are
/// stored transposed (`dim × rows`), so column `k` holds row `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeBatch {
    pub y1_t: DMatrix<f64>,
    pub y2_t: DMatrix<f64>,
    pub r: DVector<f64>,
    pub n_agents: usize,
}

impl EpisodeBatch {
    pub fn from_traces(traces: &[&Trace], gamma: f64) -> Result<Self> {
        let Some(first) = traces.first() else {
            return Err(Error::invalid("episode batch needs at least one trace"));
        };
        let (dim, len) = (first.dim, first.len());
        if len == 0 {
            return Err(Error::invalid("traces are empty"));
        }
        if let Some(bad) = traces.iter().find(|t| t.len() != len || t.dim != dim) {
            return Err(Error::invalid(format!(
                "trace length mismatch within a unit: {} vs {len} entries",
                bad.len()
            )));
        }
        let g = traces.len();
        let rows = g * len;
        let mut y1_t = DMatrix::zeros(dim, rows);
        let mut y2_t = DMatrix::zeros(dim, rows);
        let mut r = DVector::zeros(rows);
        for t in 0..len {
            for (j, trace) in traces.iter().enumerate() {
                let k = t * g + j;
                let now = trace.state(t);
                y2_t.column_mut(k).copy_from_slice(now);
                let mut y1 = y1_t.column_mut(k);
                if t + 1 < len {
                    let next = trace.state(t + 1);
                    for i in 0..dim {
                        y1[i] = now[i] - gamma * next[i];
                    }
                    r[k] = trace.reward(t);
                } else {
                    y1.copy_from_slice(now);
                }
            }
        }
        Ok(EpisodeBatch {
            y1_t,
            y2_t,
            r,
            n_agents: g,
        })
    }

    pub fn rows(&self) -> usize {
        self.r.len()
    }
}

/// Running `Ã`, `B̃` of one learning unit.
#[derive(Debug, Clone, PartialEq)]
pub struct Accumulators {
    pub a_tilde: DMatrix<f64>,
    pub b_tilde: RowDVector<f64>,
    pub episodes_seen: u64,
    pub unit: usize,
}

/// Output of [`Accumulators::solve`].
#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub w_out: RowDVector<f64>,
    /// 1-norm condition estimate of `Ã` after symmetric diagonal scaling.
    pub condition: f64,
    /// `‖X·Ã − B̃‖∞ / ‖B̃‖∞` (absolute when `B̃ = 0`).
    pub relative_residual: f64,
}

impl Accumulators {
    pub fn new(dim: usize, beta: f64, unit: usize) -> Self {
        Accumulators {
            a_tilde: DMatrix::identity(dim, dim) * beta,
            b_tilde: RowDVector::zeros(dim),
            episodes_seen: 0,
            unit,
        }
    }

    pub fn dim(&self) -> usize {
        self.b_tilde.len()
    }

    /// `Ã += Y1ᵀ·Y2`, `B̃ += Rᵀ·Y2`.
    pub fn add_batch(&mut self, batch: &EpisodeBatch) -> Result<()> {
        if batch.y1_t.nrows() != self.dim() {
            return Err(Error::invalid(format!(
                "batch feature length {} differs from accumulator dimension {}",
                batch.y1_t.nrows(),
                self.dim()
            )));
        }
        // transpose Y2 in column blocks to bound the temporary
        const BLOCK: usize = 2048;
        let rows = batch.rows();
        let mut k = 0;
        while k < rows {
            let len = BLOCK.min(rows - k);
            let y2 = batch.y2_t.columns(k, len).transpose();
            self.a_tilde.gemm(1.0, &batch.y1_t.columns(k, len), &y2, 1.0);
            k += len;
        }
        let rb = &batch.y2_t * &batch.r;
        self.b_tilde += rb.transpose();
        Ok(())
    }

    /// Fold one episode of this unit's traces into the accumulators.
    pub fn finalize_episode(&mut self, traces: &[&Trace], gamma: f64) -> Result<()> {
        let batch = EpisodeBatch::from_traces(traces, gamma)?;
        self.add_batch(&batch)?;
        self.episodes_seen += 1;
        Ok(())
    }

    pub fn apply_forgetting(&mut self, lambda: f64) {
        self.a_tilde *= lambda;
        self.b_tilde *= lambda;
    }

    /// Solve `X·Ã = B̃` through an LU factorization of `Ãᵀ`.
    pub fn solve(&self) -> Result<SolveReport> {
        solve_output_weights(self)
    }
}

pub fn solve_output_weights(acc: &Accumulators) -> Result<SolveReport> {
    let a = &acc.a_tilde;
    let n = a.nrows();
    // Symmetric diagonal scaling S = D·Ã·D with D = |diag Ã|^(-1/2). A reservoir
    // unit that almost never fires keeps only the shrinking ridge term on its
    // diagonal; scaling removes that artificial spread from the estimate.
    let d = DVector::from_fn(n, |i, _| {
        let v = a[(i, i)].abs();
        if v > 0.0 && v.is_finite() {
            1.0 / v.sqrt()
        } else {
            1.0
        }
    });
    let mut s = a.clone();
    for j in 0..n {
        for i in 0..n {
            s[(i, j)] *= d[i] * d[j];
        }
    }
    let lu_t = LU::new(s.transpose());
    let lu = LU::new(s.clone());
    let condition = condition_estimate_1norm(&s, &lu, &lu_t);
    if condition.is_nan() || condition > CONDITION_FAIL {
        return Err(Error::Singular { condition });
    }
    if condition > CONDITION_WARN {
        warn!("unit {}: condition estimate of Ã is {condition:.3e}", acc.unit);
    } else {
        debug!("unit {}: condition estimate of Ã is {condition:.3e}", acc.unit);
    }

    // Ãᵀ·z = r  ⇔  Sᵀ·(D⁻¹z) = D·r
    let solve = |r: &DVector<f64>| lu_t.solve(&r.component_mul(&d)).map(|y| y.component_mul(&d));
    let rhs = acc.b_tilde.transpose();
    let mut x = solve(&rhs).ok_or(Error::Singular { condition })?;
    let b_norm = rhs.amax();
    let scale = if b_norm > 0.0 { b_norm } else { 1.0 };
    let mut residual = &rhs - a.tr_mul(&x);
    for _ in 0..3 {
        if residual.amax() <= RESIDUAL_TOL * scale {
            break;
        }
        let Some(dx) = solve(&residual) else { break };
        x += dx;
        residual = &rhs - a.tr_mul(&x);
    }
    let relative_residual = residual.amax() / scale;
    if relative_residual > RESIDUAL_TOL {
        warn!(
            "unit {}: solve residual {relative_residual:.3e} exceeds {RESIDUAL_TOL:e} (n = {n})",
            acc.unit
        );
    }
    Ok(SolveReport {
        w_out: x.transpose(),
        condition,
        relative_residual,
    })
}

/// `‖A‖₁·est(‖A⁻¹‖₁)` with Hager's estimator and Higham's alternating-sign
/// safeguard. `lu` factors `A`, `lu_t` factors `Aᵀ`.
fn condition_estimate_1norm(a: &DMatrix<f64>, lu: &LU<f64, nalgebra::Dyn, nalgebra::Dyn>, lu_t: &LU<f64, nalgebra::Dyn, nalgebra::Dyn>) -> f64 {
    let n = a.nrows();
    if n == 0 {
        return 0.0;
    }
    let a_norm = a
        .column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let mut x = DVector::from_element(n, 1.0 / n as f64);
    let mut est = 0.0;
    for iter in 0..5 {
        let Some(y) = lu.solve(&x) else { return f64::INFINITY };
        let new_est = y.lp_norm(1);
        if iter > 0 && new_est <= est {
            break;
        }
        est = new_est;
        let xi = y.map(|v| if v >= 0.0 { 1.0 } else { -1.0 });
        let Some(z) = lu_t.solve(&xi) else { return f64::INFINITY };
        let j = z.iamax();
        if iter > 0 && z[j].abs() <= z.dot(&x) {
            break;
        }
        x = DVector::zeros(n);
        x[j] = 1.0;
    }
    let alt = DVector::from_fn(n, |i, _| {
        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
        sign * (1.0 + i as f64 / (n.max(2) - 1) as f64)
    });
    if let Some(y) = lu.solve(&alt) {
        est = f64::max(est, 2.0 * y.lp_norm(1) / (3.0 * n as f64));
    }
    if !est.is_finite() {
        return f64::INFINITY;
    }
    a_norm * est
}

/// How agents map onto learning units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupMode {
    /// One unit per group.
    SharedWithinGroup,
    /// One unit per agent.
    Independent,
    /// One unit for everybody; agents see a one-hot group tag.
    SharedAcrossGroups,
}

/// Agent → unit assignment and optional group tags.
#[derive(Debug, Clone, PartialEq)]
pub struct LearningUnits {
    pub mode: GroupMode,
    pub unit_of: Vec<usize>,
    pub n_units: usize,
    pub group_tags: Option<Vec<[f64; 2]>>,
}

impl LearningUnits {
    /// `group_of[i]` is agent `i`'s group in `0..n_groups`.
    pub fn new(mode: GroupMode, group_of: &[usize], n_groups: usize) -> Result<Self> {
        if let Some(&g) = group_of.iter().find(|&&g| g >= n_groups) {
            return Err(Error::invalid(format!("group {g} outside 0..{n_groups}")));
        }
        Ok(match mode {
            GroupMode::SharedWithinGroup => LearningUnits {
                mode,
                unit_of: group_of.to_vec(),
                n_units: n_groups,
                group_tags: None,
            },
            GroupMode::Independent => LearningUnits {
                mode,
                unit_of: (0..group_of.len()).collect(),
                n_units: group_of.len(),
                group_tags: None,
            },
            GroupMode::SharedAcrossGroups => {
                if n_groups > 2 {
                    return Err(Error::invalid(
                        "cross-group sharing supports at most two groups",
                    ));
                }
                LearningUnits {
                    mode,
                    unit_of: vec![0; group_of.len()],
                    n_units: 1,
                    group_tags: Some(
                        group_of
                            .iter()
                            .map(|&g| if g == 0 { [1.0, 0.0] } else { [0.0, 1.0] })
                            .collect(),
                    ),
                }
            }
        })
    }

    pub fn members(&self, unit: usize) -> impl Iterator<Item = usize> + '_ {
        self.unit_of
            .iter()
            .enumerate()
            .filter(move |(_, &u)| u == unit)
            .map(|(i, _)| i)
    }

    /// Bytes held by the `Ã` matrices.
    pub fn accumulator_bytes(&self, dim: usize) -> u64 {
        self.n_units as u64 * (dim as u64).pow(2) * 8
    }
}

/// Learning state shared across episodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Trainer {
    pub units: LearningUnits,
    pub accumulators: Vec<Accumulators>,
    pub gamma: f64,
    pub lambda: f64,
}

impl Trainer {
    pub fn new(units: LearningUnits, dim: usize, beta: f64, gamma: f64, lambda: f64) -> Self {
        let accumulators = (0..units.n_units).map(|u| Accumulators::new(dim, beta, u)).collect();
        Trainer {
            units,
            accumulators,
            gamma,
            lambda,
        }
    }

    /// Accumulate, solve, then forget, for every unit. `traces[i]` belongs to
    /// agent `i`. Units are processed in parallel; each is independent.
    pub fn end_episode(&mut self, traces: &[Trace]) -> Result<Vec<SolveReport>> {
        if traces.len() != self.units.unit_of.len() {
            return Err(Error::invalid(format!(
                "expected {} traces, got {}",
                self.units.unit_of.len(),
                traces.len()
            )));
        }
        let (gamma, lambda) = (self.gamma, self.lambda);
        let units = &self.units;
        self.accumulators
            .par_iter_mut()
            .enumerate()
            .map(|(u, acc)| {
                let members: Vec<&Trace> = units.members(u).map(|i| &traces[i]).collect();
                if !members.is_empty() {
                    acc.finalize_episode(&members, gamma)?;
                }
                let report = acc.solve()?;
                acc.apply_forgetting(lambda);
                Ok(report)
            })
            .collect()
    }
}
