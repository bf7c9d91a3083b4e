// Build the fixed network matrices with the default sparsity profile and
// report their fill and the reservoir's spectral radius.
//
// `cargo run --release --example reservoir_construction -- [n_res] [seed]`

use esn_crowd::esn::{spectral_radius, NetworkShape, WeightBundle};
use esn_crowd::runner::Hyperparameters;
use nalgebra::DMatrix;

fn fill(m: &DMatrix<f64>) -> f64 {
    m.iter().filter(|v| **v != 0.0).count() as f64 / m.len() as f64
}

fn main() -> esn_crowd::Result<()> {
    let mut args = std::env::args().skip(1);
    let n_res: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(256);
    let seed: u64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(0);

    let hp = Hyperparameters::default();
    let shape = NetworkShape {
        n_res,
        alpha: hp.alpha,
        group_input: true,
    };
    let w = WeightBundle::generate(shape, &hp.sparsity(), 1, seed)?;

    println!("reservoir of {n_res} neurons, seed {seed}");
    println!("  W_in_o  {:>4}×{:<4} fill {:.3}", w.w_in_o.nrows(), w.w_in_o.ncols(), fill(&w.w_in_o));
    println!("  W_in_a  {:>4}×{:<4} fill {:.3}", w.w_in_a.nrows(), w.w_in_a.ncols(), fill(&w.w_in_a));
    if let Some(g) = &w.w_in_g {
        println!("  W_in_g  {:>4}×{:<4} fill {:.3}", g.nrows(), g.ncols(), fill(g));
    }
    let b = DMatrix::from_column_slice(n_res, 1, w.w_in_b.as_slice());
    println!("  W_in_b  {:>4}×{:<4} fill {:.3}", n_res, 1, fill(&b));
    println!("  W_res   {:>4}×{:<4} fill {:.3}", n_res, n_res, fill(&w.w_res));
    println!("spectral radius of W_res: {:.12}", spectral_radius(&w.w_res)?);
    Ok(())
}
