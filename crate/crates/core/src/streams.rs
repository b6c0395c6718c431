//! Deterministic per-replicate random streams.
//!
//! Every replicate draws from its own generator, seeded from `(master seed,
//! replicate index)` through a SplitMix64 mixing step. A replicate's stream does
//! not depend on which worker runs it, so Monte Carlo results are identical for
//! any thread count.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

pub type ReplicateRng = Xoshiro256PlusPlus;

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finalizer; a bijection on `u64`.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReplicateStreams {
    master: u64,
}

impl ReplicateStreams {
    pub fn new(master: u64) -> Self {
        Self { master }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    /// Stream for replicate `index`.
    pub fn stream(&self, index: u64) -> ReplicateRng {
        let key = mix64(mix64(self.master).wrapping_add(index.wrapping_mul(GOLDEN_GAMMA)));
        Xoshiro256PlusPlus::seed_from_u64(key)
    }

    /// Independent family of streams, e.g. one per horizon of an experiment.
    pub fn substreams(&self, label: u64) -> ReplicateStreams {
        ReplicateStreams::new(mix64(self.master ^ mix64(label.wrapping_add(GOLDEN_GAMMA))))
    }
}
