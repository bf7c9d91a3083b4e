// Train pedestrians on the forked road and print the learning curve.
//
// `cargo run --release --example forked_road -- [n_agent] [episodes] [n_res]`
//
// Defaults are sized for a quick look (12 agents, 40 episodes, 128 neurons).

use esn_crowd::env::TaskKind;
use esn_crowd::runner::{Trial, TrialConfig};

fn main() -> esn_crowd::Result<()> {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<usize>().ok());
    let n_agent = args.next().flatten().unwrap_or(12);
    let episodes = args.next().flatten().unwrap_or(40);
    let n_res = args.next().flatten().unwrap_or(128);

    let mut config = TrialConfig::new(TaskKind::Task1, n_agent);
    config.n_episodes = episodes;
    config.hyperparameters.n_res = n_res;
    let t_max = config.t_max as f64;

    let mut trial = Trial::new(&config, 0)?;
    println!("episode  epsilon  v_bar  best   worst");
    while !trial.is_complete() {
        let r = trial.run_episode()?;
        if r.episode % 5 == 0 || r.episode == 1 {
            println!(
                "{:>7}  {:.3}    {:.3}  {:.3}  {:.3}",
                r.episode,
                r.epsilon,
                r.mean / t_max,
                r.best / t_max,
                r.worst / t_max
            );
        }
    }
    Ok(())
}
