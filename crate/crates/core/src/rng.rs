//! Seed derivation.
//!
//! Every random quantity in a trial comes from a ChaCha8 generator keyed by
//! the trial seed and a fixed stream id, so each matrix is independent of
//! the order in which the others were generated. Trial seeds are themselves
//! derived from the master seed through a dedicated stream range, which makes
//! trial `i` independent of how many trials a batch contains.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Stream ids for the fixed network matrices and the behaviour policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    InputObservation = 1,
    InputAction = 2,
    InputGroup = 3,
    InputBias = 4,
    Reservoir = 5,
    Policy = 16,
}

const TRIAL_STREAM_BASE: u64 = 1 << 40;

/// Generator for one named stream of a seed.
pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Seed of trial `index` under `master`.
pub fn split_seed(master: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(TRIAL_STREAM_BASE + index);
    rng.next_u64()
}

/// Serializable position of a ChaCha8 generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngPosition {
    pub seed: u64,
    pub stream: u64,
    pub word_pos: u128,
}

impl RngPosition {
    pub fn capture(seed: u64, rng: &ChaCha8Rng) -> Self {
        RngPosition {
            seed,
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}
