//! Seed discipline.
//!
//! Every run is driven by one master seed. Components never share a
//! generator; each draws from its own ChaCha8 stream derived from the master
//! seed and a stream id, so adding draws in one component cannot shift the
//! values seen by another.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Fixed stream ids. Episode streams live above [`EPISODE_STREAM_BASE`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    /// Network weight initialization.
    Init = 1,
    /// Minibatch index draws during training.
    Batches = 2,
    /// Train/validation split shuffle.
    Split = 3,
    /// Task goals and velocity bands.
    Tasks = 4,
}

const EPISODE_STREAM_BASE: u64 = 1_000;

pub fn substream(master_seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream as u64);
    rng
}

/// Per-episode stream: initial conditions, exploration noise, decay-tail
/// jitter. Episodes are independent of each other and of the fixed streams.
pub fn episode_stream(master_seed: u64, episode: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(EPISODE_STREAM_BASE + episode);
    rng
}
