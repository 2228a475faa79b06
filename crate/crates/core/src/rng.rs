//! Named random substreams.
//!
//! Every random decision in a simulation draws from a stream identified by
//! `(master seed, purpose, agent, round)`. Streams are derived by hashing the
//! key, so the randomness an agent sees never depends on how many other
//! streams were consumed before it or on worker scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Index used for streams that are not tied to a specific agent or round.
pub const GLOBAL: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Streams {
    master: u64,
}

impl Streams {
    pub fn new(master: u64) -> Self {
        Self { master }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    pub fn stream(&self, purpose: &str, agent: u64, round: u64) -> StreamRng {
        let mut h = splitmix64(self.master ^ 0x6a09_e667_f3bc_c908);
        h = splitmix64(h ^ fnv1a(purpose.as_bytes()));
        h = splitmix64(h ^ agent);
        h = splitmix64(h ^ round.rotate_left(32));
        let mut seed = [0u8; 32];
        for chunk in seed.chunks_exact_mut(8) {
            h = splitmix64(h);
            chunk.copy_from_slice(&h.to_le_bytes());
        }
        ChaCha8Rng::from_seed(seed)
    }

    pub fn agent_round(&self, purpose: &str, agent: usize, round: usize) -> StreamRng {
        self.stream(purpose, agent as u64, round as u64)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}
