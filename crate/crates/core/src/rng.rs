//! Named random streams derived from a single seed.
//!
//! Every consumer of randomness draws from its own ChaCha stream, keyed by
//! the run seed and a stream name. Adding a consumer therefore never shifts
//! the draws seen by another one.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const INIT_STATE: &str = "init_state";
pub const TRANSITION: &str = "transition";
pub const GENERATOR: &str = "generator";
pub const POLICY: &str = "policy";
pub const AUDIT: &str = "audit";

/// 64-bit FNV-1a, used to turn a stream name into a ChaCha stream id.
fn stream_id(name: &str) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in name.as_bytes() {
        hash ^= u64::from(*byte);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

pub fn stream(seed: u64, name: &str) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id(name));
    rng
}

/// Streams used while simulating episodes.
#[derive(Debug, Clone)]
pub struct EpisodeStreams {
    pub seed: u64,
    pub init_state: ChaCha8Rng,
    pub transition: ChaCha8Rng,
    pub policy: ChaCha8Rng,
}

/// Serializable position of an [`EpisodeStreams`] bundle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamPositions {
    pub seed: u64,
    pub init_state: u64,
    pub transition: u64,
    pub policy: u64,
}

fn word_pos(rng: &ChaCha8Rng) -> u64 {
    u64::try_from(rng.get_word_pos()).expect("stream position exceeds 2^64 words")
}

impl EpisodeStreams {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            init_state: stream(seed, INIT_STATE),
            transition: stream(seed, TRANSITION),
            policy: stream(seed, POLICY),
        }
    }

    pub fn positions(&self) -> StreamPositions {
        StreamPositions {
            seed: self.seed,
            init_state: word_pos(&self.init_state),
            transition: word_pos(&self.transition),
            policy: word_pos(&self.policy),
        }
    }

    pub fn restore(pos: &StreamPositions) -> Self {
        let mut streams = Self::new(pos.seed);
        streams.init_state.set_word_pos(u128::from(pos.init_state));
        streams.transition.set_word_pos(u128::from(pos.transition));
        streams.policy.set_word_pos(u128::from(pos.policy));
        streams
    }
}
