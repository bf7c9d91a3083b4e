// What `esn-crowd run` followed by `esn-crowd metrics` does, from library
// code, into a temporary directory.

use esn_crowd::cli::{self, MetricKind, Windows};
use esn_crowd::env::TaskKind;
use esn_crowd::runner::TrialConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = tempfile::tempdir()?;
    let mut config = TrialConfig::new(TaskKind::Task2, 8);
    config.hyperparameters.n_res = 48;
    config.n_episodes = 6;
    config.t_max = 120;
    config.n_trials = 2;

    let overrides = ["log_trajectories=true".to_owned()];
    let config = cli::apply_overrides(&config, &overrides)?;
    let mut report = cli::ValidationReport::default();
    cli::validate_config(&config, &mut report);
    print!("{report}");

    let run = cli::run_config(&config, &overrides, Some(root.path()), None)?;
    println!("run directory {}", run.run_dir.display());
    for kind in [MetricKind::Curves, MetricKind::Colormap, MetricKind::Diagram] {
        for path in cli::cmd_metrics(std::slice::from_ref(&run.run_dir), kind, Windows::default(), None)? {
            println!("  wrote {}", path.strip_prefix(&run.run_dir).unwrap_or(&path).display());
        }
    }
    Ok(())
}
