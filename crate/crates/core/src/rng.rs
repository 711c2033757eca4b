//! Seeded random streams.
//!
//! Every consumer of randomness in a run draws from its own ChaCha stream keyed by the
//! master seed, a stream kind and an index (usually a node id). Streams never share state,
//! so the values a node sees do not depend on how events from other nodes interleave.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
#[repr(u16)]
pub enum Stream {
    StepTime = 1,
    Sampling = 2,
    Minibatch = 3,
    Heterogeneity = 4,
    Leave = 5,
    Join = 6,
    TaskWeights = 7,
    NodeData = 8,
    EvalData = 9,
    NodeMean = 10,
}

/// Opens the stream `(kind, index)` under `master_seed`.
pub fn stream(master_seed: u64, kind: Stream, index: u64) -> SimRng {
    debug_assert!(index < 1 << 48);
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(((kind as u64) << 48) | index);
    rng
}

/// Stream for a single data point, so that point `sample` of `node` can be regenerated
/// on demand without replaying the rest of the node's data.
pub fn data_point(master_seed: u64, node: u32, sample: u32) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed ^ 0x5eed_da7a_0000_0000);
    rng.set_stream(((Stream::NodeData as u64) << 48) | (u64::from(node) << 20) | u64::from(sample));
    rng
}
