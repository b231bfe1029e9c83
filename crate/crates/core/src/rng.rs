//! Seeded random streams.
//!
//! All randomness derives from one `u64` seed. Independent consumers (one
//! reader, one training cell, the particle filter) get their own ChaCha
//! stream so that they can run in any order, or concurrently, and still
//! produce the same draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Stream families. The value is folded into the ChaCha stream id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Reader = 1,
    Training = 2,
    Filter = 3,
    Trial = 4,
}

pub fn stream(seed: u64, domain: Domain, index: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((domain as u64) << 48) ^ index);
    rng
}

/// Seed of the `i`-th evaluation trial. Trial 0 uses the base seed itself.
pub fn trial_seed(base: u64, trial: u64) -> u64 {
    base.wrapping_add(trial)
}
