//! Reference implementations used as test oracles. Each one recomputes a
//! quantity from its definition without going through the library's code path.

#![allow(dead_code)]

use std::collections::HashMap;

use esn_crowd::env::{Action, AgentState, MapSpec, Pos};
use esn_crowd::esn::{WeightBundle, N_ACTIONS};
use esn_crowd::lspi::Trace;
use nalgebra::{Complex, DMatrix, DVector, RowDVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Largest eigenvalue modulus by block subspace iteration with Rayleigh–Ritz
/// extraction. Returns the estimate and the relative residual of its Ritz pair.
pub fn subspace_spectral_radius(w: &DMatrix<f64>, block: usize, seed: u64) -> (f64, f64) {
    let n = w.nrows();
    let k = block.min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut q = DMatrix::from_fn(n, k, |_, _| rng.random_range(-1.0..1.0)).qr().q();
    let mut last = f64::NAN;
    let mut stable = 0;
    for it in 0..20_000 {
        q = (w * &q).qr().q();
        if it % 10 != 9 {
            continue;
        }
        let h = q.transpose() * w * &q;
        let top = h
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        if (top - last).abs() <= 1e-14 * top.max(1e-300) {
            stable += 1;
            if stable >= 3 {
                break;
            }
        } else {
            stable = 0;
        }
        last = top;
    }
    // certificate: residual of the dominant Ritz pair
    let h = q.transpose() * w * &q;
    let eig = h.clone().complex_eigenvalues();
    let (idx, lambda) = eig
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.norm().partial_cmp(&b.1.norm()).unwrap())
        .map(|(i, z)| (i, *z))
        .unwrap();
    let _ = idx;
    let hc: DMatrix<Complex<f64>> = h.map(|v| Complex::new(v, 0.0));
    let shifted = &hc - DMatrix::<Complex<f64>>::identity(k, k) * lambda;
    let y = null_vector(&shifted);
    let qc: DMatrix<Complex<f64>> = q.map(|v| Complex::new(v, 0.0));
    let v = &qc * y;
    let wc: DMatrix<Complex<f64>> = w.map(|v| Complex::new(v, 0.0));
    let r = &wc * &v - &v * lambda;
    let residual = r.norm() / v.norm() / lambda.norm().max(1e-300);
    (last, residual)
}

/// Approximate null vector of a nearly singular complex matrix via inverse
/// iteration.
fn null_vector(m: &DMatrix<Complex<f64>>) -> DVector<Complex<f64>> {
    let k = m.nrows();
    let reg = m + DMatrix::<Complex<f64>>::identity(k, k) * Complex::new(1e-12, 0.0);
    let lu = reg.lu();
    let mut y = DVector::from_element(k, Complex::new(1.0, 0.0));
    for _ in 0..5 {
        if let Some(z) = lu.solve(&y) {
            let nrm = z.norm();
            y = z / Complex::new(nrm, 0.0);
        }
    }
    y
}

/// One candidate computed the long way: full products with a one-hot action.
pub fn candidate_by_definition(
    w: &WeightBundle,
    obs: &[f64],
    x: &DVector<f64>,
    readout: &RowDVector<f64>,
    group_tag: Option<&[f64]>,
    action: usize,
) -> (DVector<f64>, f64) {
    let n = w.n_res();
    let o = DVector::from_column_slice(obs);
    let mut onehot = DVector::zeros(N_ACTIONS);
    onehot[action] = 1.0;
    let mut pre = &w.w_in_o * &o + &w.w_in_a * &onehot + &w.w_in_b + &w.w_res * x;
    if let (Some(g), Some(tag)) = (&w.w_in_g, group_tag) {
        pre += g * DVector::from_column_slice(tag);
    }
    let mut bar = DVector::zeros(n);
    for i in 0..n {
        bar[i] = w.alpha * pre[i].max(0.0) + (1.0 - w.alpha) * x[i];
    }
    let mut q = readout[n];
    for i in 0..n {
        q += readout[i] * bar[i];
    }
    (bar, q)
}

/// `Ã` and `B̃` of a unit after its `n_l`-th episode, before that episode's
/// forgetting, by the double sum
/// `Σ_n λ^(n_l−n) Σ_j Σ_t (x̂_j(t) − γ·x̂_j(t+1))·x̂_j(t)ᵀ + λ^(n_l−1)·β·I`
/// with `x̂_j(t_max+1) = 0`.
pub fn direct_accumulators(
    episodes: &[Vec<Trace>],
    gamma: f64,
    lambda: f64,
    beta: f64,
) -> (DMatrix<f64>, RowDVector<f64>) {
    let dim = episodes[0][0].dim();
    let n_l = episodes.len();
    let mut a = DMatrix::identity(dim, dim) * (beta * lambda.powi(n_l as i32 - 1));
    let mut b = RowDVector::zeros(dim);
    for (n, traces) in episodes.iter().enumerate() {
        let weight = lambda.powi((n_l - 1 - n) as i32);
        for trace in traces {
            for t in 0..trace.len() {
                let now = DVector::from_column_slice(trace.state(t));
                let next = if t + 1 < trace.len() {
                    DVector::from_column_slice(trace.state(t + 1))
                } else {
                    DVector::zeros(dim)
                };
                a += (&now - &next * gamma) * now.transpose() * weight;
                let r = if t + 1 < trace.len() { trace.reward(t) } else { 0.0 };
                b += now.transpose() * (r * weight);
            }
        }
    }
    (a, b)
}

/// Outcome of simultaneous moves by the plain rules: an agent moves iff its
/// target exists, is walkable, was empty before the step and is claimed by
/// nobody else.
pub fn reference_moves(map: &MapSpec, agents: &[AgentState], actions: &[Action]) -> Vec<Pos> {
    let occupied: HashMap<Pos, usize> = agents.iter().map(|a| (a.position, a.id)).collect();
    let targets: Vec<Option<Pos>> = agents
        .iter()
        .zip(actions)
        .map(|(a, act)| {
            let (dx, dy) = act.offset();
            let x = a.position.x as i64 + dx;
            let y = a.position.y as i64 + dy;
            if y < 0 || y >= map.height as i64 {
                return None;
            }
            let x = if map.periodic_x {
                x.rem_euclid(map.width as i64)
            } else if x < 0 || x >= map.width as i64 {
                return None;
            } else {
                x
            };
            let p = Pos::new(x as usize, y as usize);
            map.is_walkable(p).then_some(p)
        })
        .collect();
    let mut claims: HashMap<Pos, usize> = HashMap::new();
    for t in targets.iter().flatten() {
        *claims.entry(*t).or_default() += 1;
    }
    agents
        .iter()
        .zip(&targets)
        .map(|(a, t)| match t {
            Some(p) if !occupied.contains_key(p) && claims[p] == 1 => *p,
            _ => a.position,
        })
        .collect()
}

/// Five-state chain. Action 0 moves left (clamped at 0), action 1 moves right;
/// moving right from state 4 exits with reward 1. All other rewards are 0.
pub const CHAIN_STATES: usize = 5;

pub fn chain_step(s: usize, a: usize) -> (Option<usize>, f64) {
    match (s, a) {
        (4, 1) => (None, 1.0),
        (s, 1) => (Some(s + 1), 0.0),
        (0, _) => (Some(0), 0.0),
        (s, _) => (Some(s - 1), 0.0),
    }
}

/// Optimal action values by value iteration to machine precision.
pub fn chain_value_iteration(gamma: f64) -> [[f64; 2]; CHAIN_STATES] {
    let mut q = [[0.0f64; 2]; CHAIN_STATES];
    loop {
        let mut next = q;
        let mut delta: f64 = 0.0;
        for s in 0..CHAIN_STATES {
            for a in 0..2 {
                let (s2, r) = chain_step(s, a);
                let v = s2.map_or(0.0, |s2| q[s2][0].max(q[s2][1]));
                next[s][a] = r + gamma * v;
                delta = delta.max((next[s][a] - q[s][a]).abs());
            }
        }
        q = next;
        if delta < 1e-15 {
            return q;
        }
    }
}

/// One-hot `(s, a)` features followed by the constant 1; the exit state is
/// the zero vector with the constant.
pub fn chain_features(sa: Option<(usize, usize)>) -> Vec<f64> {
    let mut x = vec![0.0; 2 * CHAIN_STATES + 1];
    if let Some((s, a)) = sa {
        x[2 * s + a] = 1.0;
    }
    x[2 * CHAIN_STATES] = 1.0;
    x
}
