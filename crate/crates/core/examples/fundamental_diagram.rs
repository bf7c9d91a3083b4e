// Average velocity against density on the forked road, a few trials per
// population size.
//
// `cargo run --release --example fundamental_diagram -- [episodes] [n_res]`

use esn_crowd::env::TaskKind;
use esn_crowd::metrics::fundamental_point;
use esn_crowd::runner::{run_batch, TrialConfig};

fn main() -> esn_crowd::Result<()> {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<usize>().ok());
    let episodes = args.next().flatten().unwrap_or(30);
    let n_res = args.next().flatten().unwrap_or(96);

    println!("n_agent  rho_bar  v_bar  se");
    for n in [4, 12, 24, 40] {
        let mut config = TrialConfig::new(TaskKind::Task1, n);
        config.n_episodes = episodes;
        config.n_trials = 2;
        config.hyperparameters.n_res = n_res;
        let batch = run_batch(&config)?;
        let trials: Vec<_> = batch.completed().map(|t| t.records.as_slice()).collect();
        let window = (episodes.saturating_sub(9).max(1), episodes);
        let p = fundamental_point(n, &config.setup()?.map, &trials, config.t_max, window)?;
        println!("{:>7}  {:.3}    {:.3}  {:.3}", p.n_agent, p.rho_bar, p.v_bar, p.se);
    }
    Ok(())
}
