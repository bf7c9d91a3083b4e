//! Echo-state network with action-conditioned candidate evaluation.
//!
//! All input and recurrent matrices are fixed at construction; only the
//! per-unit readout rows change, and only between episodes. For an agent with
//! observation `o` and previous reservoir state `x`, the shared drive is
//!
//! ```text
//! drive = W_in_o·o + W_in_b + W_res·x  (+ W_in_g·η_g in cross-group mode)
//! ```
//!
//! and each action `a` yields a candidate state
//! `x̄(a) = α·relu(drive + W_in_a[:, a]) + (1 − α)·x` with value
//! `Q(a) = W_out·(x̄(a); 1)`.

use nalgebra::{DMatrix, DVector, RowDVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::container::TensorFile;
use crate::env::observation::{ring_of_feature, OBS_DIM};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};

pub const N_ACTIONS: usize = 4;
pub const N_GROUP_TAGS: usize = 2;

/// Sparsity and scale of the fixed random matrices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SparsityProfile {
    /// Observation sparsity for the innermost 3×3 ring.
    pub p_s1_in: f64,
    /// Observation sparsity for the 7×7 ring minus the 3×3 ring.
    pub p_s2_in: f64,
    /// Observation sparsity for the outer 11×11 ring.
    pub p_s3_in: f64,
    pub p_sb_in: f64,
    pub p_s_res: f64,
    pub sigma_in_o: f64,
    pub sigma_in_a: f64,
    pub sigma_in_b: f64,
    pub sigma_res_0: f64,
    pub rho_target: f64,
}

impl Default for SparsityProfile {
    fn default() -> Self {
        SparsityProfile {
            p_s1_in: 0.6,
            p_s2_in: 0.8,
            p_s3_in: 0.9,
            p_sb_in: 0.9,
            p_s_res: 0.9,
            sigma_in_o: 1.0,
            sigma_in_a: 2.0,
            sigma_in_b: 1.0,
            sigma_res_0: 1.0,
            rho_target: 0.95,
        }
    }
}

impl SparsityProfile {
    pub fn validate(&self) -> Result<()> {
        let probs = [
            ("p_s1_in", self.p_s1_in),
            ("p_s2_in", self.p_s2_in),
            ("p_s3_in", self.p_s3_in),
            ("p_sb_in", self.p_sb_in),
            ("p_s_res", self.p_s_res),
        ];
        for (key, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config(key, format!("must lie in [0, 1], got {p}")));
            }
        }
        if self.p_s1_in > self.p_s2_in {
            return Err(Error::config("p_s1_in", "must not exceed p_s2_in"));
        }
        if self.p_s2_in > self.p_s3_in {
            return Err(Error::config("p_s2_in", "must not exceed p_s3_in"));
        }
        let sigmas = [
            ("sigma_in_o", self.sigma_in_o),
            ("sigma_in_a", self.sigma_in_a),
            ("sigma_in_b", self.sigma_in_b),
            ("sigma_res_0", self.sigma_res_0),
        ];
        for (key, s) in sigmas {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::config(key, format!("must be positive, got {s}")));
            }
        }
        if !(self.rho_target > 0.0 && self.rho_target < 1.0) {
            return Err(Error::config(
                "rho_target",
                format!("must lie in (0, 1), got {}", self.rho_target),
            ));
        }
        Ok(())
    }

    /// Zero probability for each column of `W_in_o`, by observation ring.
    pub fn observation_column_sparsity(&self) -> Vec<f64> {
        (0..OBS_DIM)
            .map(|feature| match ring_of_feature(feature) {
                1 => self.p_s1_in,
                2 => self.p_s2_in,
                _ => self.p_s3_in,
            })
            .collect()
    }
}

/// Draw a `rows × cols` matrix whose column `j` entries are zero with
/// probability `sparsity_per_column[j]` and `N(0, sigma²)` otherwise.
///
/// Entries are drawn in column-major order, one uniform draw per entry
/// followed by a normal draw when the entry survives.
pub fn generate_sparse_matrix<R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    sparsity_per_column: &[f64],
    sigma: f64,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    if rows == 0 || cols == 0 {
        return Err(Error::invalid(format!(
            "matrix dimensions must be positive, got {rows}×{cols}"
        )));
    }
    if sparsity_per_column.len() != cols {
        return Err(Error::invalid(format!(
            "expected {cols} column sparsities, got {}",
            sparsity_per_column.len()
        )));
    }
    if let Some(p) = sparsity_per_column
        .iter()
        .find(|p| !(0.0..=1.0).contains(*p))
    {
        return Err(Error::invalid(format!("sparsity {p} outside [0, 1]")));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::invalid(format!(
            "standard deviation must be positive, got {sigma}"
        )));
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::invalid(e.to_string()))?;
    let mut m = DMatrix::zeros(rows, cols);
    for (j, &p) in sparsity_per_column.iter().enumerate() {
        for i in 0..rows {
            let u: f64 = rng.random();
            if u >= p {
                m[(i, j)] = normal.sample(rng);
            }
        }
    }
    Ok(m)
}

/// Largest eigenvalue modulus, from the real Schur form.
pub fn spectral_radius(m: &DMatrix<f64>) -> Result<f64> {
    if !m.is_square() {
        return Err(Error::invalid(format!(
            "spectral radius needs a square matrix, got {}×{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.is_empty() {
        return Ok(0.0);
    }
    let eig = m.clone().complex_eigenvalues();
    Ok(eig.iter().map(|z| z.norm()).fold(0.0, f64::max))
}

/// Scale `w0` so that its spectral radius equals `rho_target`.
pub fn rescale_spectral_radius(w0: &DMatrix<f64>, rho_target: f64) -> Result<DMatrix<f64>> {
    let rho = spectral_radius(w0)?;
    if rho.is_nan() || rho <= f64::EPSILON || !rho.is_finite() {
        return Err(Error::Degenerate(format!(
            "cannot rescale a matrix with spectral radius {rho}"
        )));
    }
    Ok(w0 * (rho_target / rho))
}

/// Shape-level settings of the network.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetworkShape {
    pub n_res: usize,
    pub alpha: f64,
    /// Allocate `W_in_g` for cross-group parameter sharing.
    pub group_input: bool,
}

/// Fixed network matrices plus one readout row per learning unit.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightBundle {
    pub w_in_o: DMatrix<f64>,
    pub w_in_a: DMatrix<f64>,
    pub w_in_g: Option<DMatrix<f64>>,
    pub w_in_b: DVector<f64>,
    pub w_res: DMatrix<f64>,
    /// Readout rows of length `n_res + 1`; the trailing entry multiplies the constant 1.
    pub w_out: Vec<RowDVector<f64>>,
    pub alpha: f64,
}

impl WeightBundle {
    /// Generate the fixed matrices from `seed`, one generator stream per matrix.
    /// Readouts start at zero.
    pub fn generate(
        shape: NetworkShape,
        profile: &SparsityProfile,
        n_readouts: usize,
        seed: u64,
    ) -> Result<Self> {
        profile.validate()?;
        if shape.n_res == 0 {
            return Err(Error::invalid("reservoir must have at least one neuron"));
        }
        if !(shape.alpha > 0.0 && shape.alpha <= 1.0) {
            return Err(Error::config(
                "alpha",
                format!("must lie in (0, 1], got {}", shape.alpha),
            ));
        }
        let n = shape.n_res;
        let w_in_o = generate_sparse_matrix(
            n,
            OBS_DIM,
            &profile.observation_column_sparsity(),
            profile.sigma_in_o,
            &mut stream_rng(seed, Stream::InputObservation),
        )?;
        let w_in_a = generate_sparse_matrix(
            n,
            N_ACTIONS,
            &[0.0; N_ACTIONS],
            profile.sigma_in_a,
            &mut stream_rng(seed, Stream::InputAction),
        )?;
        let w_in_g = if shape.group_input {
            Some(generate_sparse_matrix(
                n,
                N_GROUP_TAGS,
                &[0.0; N_GROUP_TAGS],
                profile.sigma_in_a,
                &mut stream_rng(seed, Stream::InputGroup),
            )?)
        } else {
            None
        };
        let w_in_b = generate_sparse_matrix(
            n,
            1,
            &[profile.p_sb_in],
            profile.sigma_in_b,
            &mut stream_rng(seed, Stream::InputBias),
        )?
        .column(0)
        .into_owned();
        let w_res0 = generate_sparse_matrix(
            n,
            n,
            &vec![profile.p_s_res; n],
            profile.sigma_res_0,
            &mut stream_rng(seed, Stream::Reservoir),
        )?;
        let w_res = rescale_spectral_radius(&w_res0, profile.rho_target)?;
        Ok(WeightBundle {
            w_in_o,
            w_in_a,
            w_in_g,
            w_in_b,
            w_res,
            w_out: vec![RowDVector::zeros(n + 1); n_readouts],
            alpha: shape.alpha,
        })
    }

    pub fn n_res(&self) -> usize {
        self.w_res.nrows()
    }

    /// Replace readout `unit`; called only between episodes.
    pub fn set_readout(&mut self, unit: usize, row: RowDVector<f64>) -> Result<()> {
        if row.len() != self.n_res() + 1 {
            return Err(Error::invalid(format!(
                "readout must have length {}, got {}",
                self.n_res() + 1,
                row.len()
            )));
        }
        let slot = self
            .w_out
            .get_mut(unit)
            .ok_or_else(|| Error::invalid(format!("no readout {unit}")))?;
        *slot = row;
        Ok(())
    }

    /// Input part of the drive: `W_in_o·o + W_in_b (+ W_in_g·η_g)`.
    ///
    /// Only nonzero observation entries contribute, so the cost scales with the
    /// number of occupied cells in the window.
    fn input_drive(&self, obs: &[f64], group_tag: Option<&[f64]>) -> Result<DVector<f64>> {
        if obs.len() != OBS_DIM {
            return Err(Error::invalid(format!(
                "observation must have {OBS_DIM} entries, got {}",
                obs.len()
            )));
        }
        let mut drive = self.w_in_b.clone();
        for (j, &v) in obs.iter().enumerate() {
            if v != 0.0 {
                drive.axpy(v, &self.w_in_o.column(j), 1.0);
            }
        }
        match (group_tag, &self.w_in_g) {
            (Some(tag), Some(w_in_g)) => {
                if tag.len() != N_GROUP_TAGS {
                    return Err(Error::invalid(format!(
                        "group tag must have {N_GROUP_TAGS} entries, got {}",
                        tag.len()
                    )));
                }
                for (j, &v) in tag.iter().enumerate() {
                    if v != 0.0 {
                        drive.axpy(v, &w_in_g.column(j), 1.0);
                    }
                }
            }
            (Some(_), None) => {
                return Err(Error::invalid(
                    "group tag given but the network has no group input matrix",
                ))
            }
            (None, Some(_)) => {
                return Err(Error::invalid(
                    "network has a group input matrix but no group tag was given",
                ))
            }
            (None, None) => {}
        }
        Ok(drive)
    }

    /// Turn a full drive into the |A| candidate states and their Q values.
    fn expand_candidates(
        &self,
        drive: &DVector<f64>,
        x: &DVector<f64>,
        readout: &RowDVector<f64>,
    ) -> Result<Candidates> {
        let n = self.n_res();
        if readout.len() != n + 1 {
            return Err(Error::invalid(format!(
                "readout must have length {}, got {}",
                n + 1,
                readout.len()
            )));
        }
        let alpha = self.alpha;
        let mut states = DMatrix::zeros(n, N_ACTIONS);
        let mut q_values = [0.0; N_ACTIONS];
        for (a, q_out) in q_values.iter_mut().enumerate() {
            let w_a = self.w_in_a.column(a);
            let mut col = states.column_mut(a);
            let mut q = readout[n];
            for i in 0..n {
                let tilde = (drive[i] + w_a[i]).max(0.0);
                let bar = alpha * tilde + (1.0 - alpha) * x[i];
                col[i] = bar;
                q += readout[i] * bar;
            }
            *q_out = q;
        }
        Ok(Candidates { q_values, states })
    }

    /// Evaluate every action for one agent at once.
    pub fn evaluate_candidates(
        &self,
        obs: &[f64],
        state: &ReservoirState,
        readout: &RowDVector<f64>,
        group_tag: Option<&[f64]>,
    ) -> Result<Candidates> {
        let n = self.n_res();
        if state.x.len() != n {
            return Err(Error::invalid(format!(
                "reservoir state must have length {n}, got {}",
                state.x.len()
            )));
        }
        let mut drive = self.input_drive(obs, group_tag)?;
        drive.gemv(1.0, &self.w_res, &state.x, 1.0);
        self.expand_candidates(&drive, &state.x, readout)
    }

    /// Evaluate a whole population. The recurrent term for all agents is one
    /// matrix product; results match [`Self::evaluate_candidates`] up to
    /// summation order.
    pub fn evaluate_population(&self, inputs: &[AgentInput<'_>]) -> Result<Vec<Candidates>> {
        let n = self.n_res();
        if inputs.is_empty() {
            return Ok(Vec::new());
        }
        let mut stacked = DMatrix::zeros(n, inputs.len());
        for (k, input) in inputs.iter().enumerate() {
            if input.state.x.len() != n {
                return Err(Error::invalid(format!(
                    "reservoir state must have length {n}, got {}",
                    input.state.x.len()
                )));
            }
            stacked.set_column(k, &input.state.x);
        }
        let recurrent = &self.w_res * &stacked;
        inputs
            .iter()
            .enumerate()
            .map(|(k, input)| {
                let mut drive = self.input_drive(input.obs, input.group_tag)?;
                drive += recurrent.column(k);
                self.expand_candidates(&drive, &input.state.x, input.readout)
            })
            .collect()
    }

    /// Pack into a tensor container. Matrices are stored row-major.
    pub fn to_container(&self) -> TensorFile {
        let mut file = TensorFile::default();
        file.push("w_in_o", &self.w_in_o);
        file.push("w_in_a", &self.w_in_a);
        if let Some(g) = &self.w_in_g {
            file.push("w_in_g", g);
        }
        file.push("w_in_b", &DMatrix::from_column_slice(self.w_in_b.len(), 1, self.w_in_b.as_slice()));
        file.push("w_res", &self.w_res);
        file.push("alpha", &DMatrix::from_element(1, 1, self.alpha));
        for (k, row) in self.w_out.iter().enumerate() {
            file.push(&format!("w_out.{k}"), &DMatrix::from_row_slice(1, row.len(), row.as_slice()));
        }
        file
    }

    pub fn from_container(file: &TensorFile) -> Result<Self> {
        let w_in_o = file.require("w_in_o")?.clone();
        let n = w_in_o.nrows();
        let w_in_b = file.require("w_in_b")?;
        let w_res = file.require("w_res")?.clone();
        let mut w_out = Vec::new();
        while let Some(m) = file.get(&format!("w_out.{}", w_out.len())) {
            w_out.push(RowDVector::from_row_slice(m.as_slice()));
        }
        let bundle = WeightBundle {
            w_in_o,
            w_in_a: file.require("w_in_a")?.clone(),
            w_in_g: file.get("w_in_g").cloned(),
            w_in_b: DVector::from_column_slice(w_in_b.as_slice()),
            w_res,
            w_out,
            alpha: file.require("alpha")?[(0, 0)],
        };
        let consistent = bundle.w_in_o.ncols() == OBS_DIM
            && bundle.w_in_a.shape() == (n, N_ACTIONS)
            && bundle.w_in_b.len() == n
            && bundle.w_res.shape() == (n, n)
            && bundle.w_in_g.as_ref().is_none_or(|g| g.shape() == (n, N_GROUP_TAGS))
            && bundle.w_out.iter().all(|r| r.len() == n + 1);
        if !consistent {
            return Err(Error::invalid("weight container has inconsistent shapes"));
        }
        Ok(bundle)
    }
}

/// One agent's row of a population evaluation.
#[derive(Debug, Clone, Copy)]
pub struct AgentInput<'a> {
    pub obs: &'a [f64],
    pub state: &'a ReservoirState,
    pub readout: &'a RowDVector<f64>,
    pub group_tag: Option<&'a [f64]>,
}

/// Candidate states (one column per action) and their Q values.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidates {
    pub q_values: [f64; N_ACTIONS],
    pub states: DMatrix<f64>,
}

/// Leaky reservoir activation of one agent.
#[derive(Debug, Clone, PartialEq)]
pub struct ReservoirState {
    pub owner: usize,
    pub x: DVector<f64>,
}

impl ReservoirState {
    /// Zero state, the condition before an episode's first step.
    pub fn zeros(owner: usize, n_res: usize) -> Self {
        ReservoirState {
            owner,
            x: DVector::zeros(n_res),
        }
    }

    /// Adopt the candidate produced by `action`.
    pub fn commit_action(&mut self, candidates: &Candidates, action: usize) -> Result<()> {
        if action >= candidates.states.ncols() {
            return Err(Error::invalid(format!(
                "action {action} out of range for {} candidates",
                candidates.states.ncols()
            )));
        }
        if candidates.states.nrows() != self.x.len() {
            return Err(Error::invalid("candidate length differs from state length"));
        }
        self.x.copy_from(&candidates.states.column(action));
        Ok(())
    }

    /// `(x; 1)`, the feature vector seen by the readout.
    pub fn augmented(&self) -> DVector<f64> {
        let n = self.x.len();
        DVector::from_fn(n + 1, |i, _| if i < n { self.x[i] } else { 1.0 })
    }
}
