// Evaluate the four action candidates of every agent on the forked road,
// then pick actions ε-greedily and advance the reservoirs.

use esn_crowd::env::{Action, TaskKind, OBS_DIM};
use esn_crowd::esn::{AgentInput, NetworkShape, ReservoirState, WeightBundle};
use esn_crowd::lspi::epsilon_greedy;
use esn_crowd::rng::{stream_rng, Stream};
use esn_crowd::runner::Hyperparameters;
use nalgebra::RowDVector;

fn main() -> esn_crowd::Result<()> {
    let hp = Hyperparameters::default();
    let shape = NetworkShape {
        n_res: 128,
        alpha: hp.alpha,
        group_input: false,
    };
    let w = WeightBundle::generate(shape, &hp.sparsity(), 1, 7)?;
    let mut env = TaskKind::Task1.setup(6)?.environment()?;

    // an arbitrary readout so the Q-values are not all zero
    let mut rng = stream_rng(7, Stream::Policy);
    let readout = RowDVector::from_fn(shape.n_res + 1, |_, j| ((j * 37 % 11) as f64 - 5.0) * 1e-2);
    let mut states: Vec<ReservoirState> = (0..6).map(|k| ReservoirState::zeros(k, shape.n_res)).collect();

    for t in 0..3 {
        let obs: Vec<Vec<f64>> = (0..6)
            .map(|k| {
                let mut o = vec![0.0; OBS_DIM];
                env.observe_into(k, &mut o);
                o
            })
            .collect();
        let inputs: Vec<AgentInput<'_>> = (0..6)
            .map(|k| AgentInput {
                obs: &obs[k],
                state: &states[k],
                readout: &readout,
                group_tag: None,
            })
            .collect();
        let candidates = w.evaluate_population(&inputs)?;
        let mut actions = Vec::new();
        for (k, c) in candidates.iter().enumerate() {
            let a = epsilon_greedy(&c.q_values, 0.1, &mut rng)?;
            states[k].commit_action(c, a)?;
            actions.push(Action::from_index(a).expect("valid index"));
            if k == 0 {
                let q: Vec<String> = c.q_values.iter().map(|q| format!("{q:+.4}")).collect();
                println!("t={t} agent 0: Q(up, down, right, left) = [{}] -> {:?}", q.join(", "), actions[0]);
            }
        }
        let rewards = env.step(&actions)?;
        println!("      rewards {rewards:?}");
    }
    Ok(())
}
