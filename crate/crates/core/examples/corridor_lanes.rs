// Two opposing groups in the corridor. After training, prints each row's
// share of right- and left-walkers over the late episodes; lanes show up as
// rows owned by one group.
//
// `cargo run --release --example corridor_lanes -- [n_agent] [episodes] [n_res]`

use esn_crowd::env::TaskKind;
use esn_crowd::metrics::accumulate_density;
use esn_crowd::runner::{run_trial, TrialConfig};

fn main() -> esn_crowd::Result<()> {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<usize>().ok());
    let n_agent = args.next().flatten().unwrap_or(16);
    let episodes = args.next().flatten().unwrap_or(40);
    let n_res = args.next().flatten().unwrap_or(128);

    let mut config = TrialConfig::new(TaskKind::Task2, n_agent);
    config.n_episodes = episodes;
    config.hyperparameters.n_res = n_res;
    config.log_trajectories = true;

    let out = run_trial(&config, 0)?;
    let last = out.records.last().expect("at least one episode");
    let t_max = config.t_max as f64;
    println!(
        "episode {}: v_bar right {:.3}, left {:.3}",
        last.episode,
        last.group_means[0] / t_max,
        last.group_means[1] / t_max
    );

    let log = out.trajectories.expect("logging enabled");
    let first = episodes.saturating_sub(9).max(1);
    let density = accumulate_density(&[&log], (100, config.t_max - 1), (first, episodes))?;
    let (right, left) = (density.row_profile(0), density.row_profile(1));
    println!("row  right  left");
    for y in 0..density.height {
        let bar = |v: f64| "#".repeat((v * 4.0).round() as usize);
        println!("{y:>3}  {:>5.2}  {:>5.2}  {}|{}", right[y], left[y], bar(right[y]), bar(left[y]));
    }
    Ok(())
}
