// The three ways agents can share readouts, with the accumulator memory each
// needs and a short run under each.

use esn_crowd::env::TaskKind;
use esn_crowd::lspi::{GroupMode, LearningUnits};
use esn_crowd::runner::{run_trial, TrialConfig};

fn main() -> esn_crowd::Result<()> {
    for mode in [GroupMode::SharedWithinGroup, GroupMode::Independent, GroupMode::SharedAcrossGroups] {
        let mut config = TrialConfig::new(TaskKind::Task2, 8);
        config.group_mode = mode;
        config.hyperparameters.n_res = 64;
        config.n_episodes = 5;
        config.t_max = 100;

        let setup = config.setup()?;
        let group_of: Vec<usize> = setup.initial_agents()?.iter().map(|a| a.group).collect();
        let units = LearningUnits::new(mode, &group_of, setup.n_groups())?;
        let out = run_trial(&config, 0)?;
        let last = out.records.last().expect("episodes ran");
        println!(
            "{mode:?}: {} units, units of agents {:?}, Ã memory {} KiB, last mean reward {:.1}",
            units.n_units,
            units.unit_of,
            config.accumulator_bytes() / 1024,
            last.mean
        );
    }
    Ok(())
}
