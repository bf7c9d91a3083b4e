// Stop a trial part way, serialize it, restore it and finish; the result is
// identical to an uninterrupted run.

use esn_crowd::container::TensorFile;
use esn_crowd::env::TaskKind;
use esn_crowd::runner::{run_trial, CheckpointMeta, Trial, TrialConfig};

fn main() -> esn_crowd::Result<()> {
    let mut config = TrialConfig::new(TaskKind::Task1, 6);
    config.hyperparameters.n_res = 64;
    config.n_episodes = 8;
    config.t_max = 80;

    let reference = run_trial(&config, 0)?;

    let mut trial = Trial::new(&config, 0)?;
    for _ in 0..3 {
        trial.run_episode()?;
    }
    let (file, meta) = trial.checkpoint();
    let bytes = file.to_bytes();
    let json = serde_json::to_string(&meta)?;
    println!("checkpoint after episode {}: {} bytes of tensors, {} bytes of metadata", meta.episodes_done, bytes.len(), json.len());
    drop(trial);

    let file = TensorFile::from_bytes(&bytes)?;
    let meta: CheckpointMeta = serde_json::from_str(&json)?;
    let mut resumed = Trial::restore(&config, &file, &meta, None)?;
    resumed.run_to_end(|_| Ok(()))?;

    let same = resumed
        .records()
        .iter()
        .zip(&reference.records)
        .all(|(a, b)| a.rewards == b.rewards && a.epsilon == b.epsilon);
    println!("resumed run matches the uninterrupted one: {same}");
    Ok(())
}
