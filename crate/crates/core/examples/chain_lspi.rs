// Least-squares evaluation on a five-state chain with one-hot features,
// compared with value iteration.

use esn_crowd::lspi::{Accumulators, Trace};

const STATES: usize = 5;

/// Right from state 4 exits with reward 1; left is clamped at state 0.
fn step(s: usize, a: usize) -> (Option<usize>, f64) {
    match (s, a) {
        (4, 1) => (None, 1.0),
        (s, 1) => (Some(s + 1), 0.0),
        (s, _) => (Some(s.saturating_sub(1)), 0.0),
    }
}

fn features(sa: Option<(usize, usize)>) -> Vec<f64> {
    let mut x = vec![0.0; 2 * STATES + 1];
    if let Some((s, a)) = sa {
        x[2 * s + a] = 1.0;
    }
    x[2 * STATES] = 1.0;
    x
}

fn main() -> esn_crowd::Result<()> {
    let gamma = 0.9;
    let dim = 2 * STATES + 1;
    let mut acc = Accumulators::new(dim, 1e-12, 0);
    for s0 in 0..STATES {
        for a0 in 0..2 {
            let mut trace = Trace::new(dim);
            let (mut s, mut a) = (s0, a0);
            loop {
                let (next, r) = step(s, a);
                trace.record_step(&features(Some((s, a))), r)?;
                match next {
                    Some(s2) => (s, a) = (s2, 1),
                    None => break,
                }
            }
            trace.record_terminal(&features(None))?;
            acc.finalize_episode(&[&trace], gamma)?;
        }
    }
    let report = acc.solve()?;

    let mut q = [[0.0f64; 2]; STATES];
    for _ in 0..200 {
        let prev = q;
        for s in 0..STATES {
            for a in 0..2 {
                let (next, r) = step(s, a);
                q[s][a] = r + gamma * next.map_or(0.0, |n| prev[n][0].max(prev[n][1]));
            }
        }
    }

    println!("state  Q(left) lstd / exact   Q(right) lstd / exact");
    for s in 0..STATES {
        let w = &report.w_out;
        let left = w[2 * s] + w[dim - 1];
        let right = w[2 * s + 1] + w[dim - 1];
        println!("{s:>5}  {left:.6} / {:.6}     {right:.6} / {:.6}", q[s][0], q[s][1]);
    }
    println!("condition estimate {:.2e}", report.condition);
    Ok(())
}
