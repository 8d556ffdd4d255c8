//! Named random streams derived from a single run seed.
//!
//! Every consumer asks for a stream by purpose label (and optionally an
//! index), so parallel workers draw from independent, reproducible streams
//! regardless of scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

fn fnv1a(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Root of the stream hierarchy for one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedTree {
    seed: u64,
}

impl SeedTree {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self, label: &str) -> StreamRng {
        self.indexed(label, 0)
    }

    pub fn indexed(&self, label: &str, index: u64) -> StreamRng {
        let key = splitmix(self.seed ^ splitmix(fnv1a(label) ^ splitmix(index)));
        ChaCha8Rng::seed_from_u64(key)
    }
}
