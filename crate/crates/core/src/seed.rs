//! Seed discipline for Monte Carlo trials.
//!
//! Every random stream is keyed by `(master_seed, trial, purpose, sub)` and
//! hashed into an independent ChaCha8 key, so any subset of trials can be
//! re-run in any order and reproduce bit-exactly.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a stream is used for. Streams never cross purposes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Purpose {
    Velocity,
    Data,
    /// Receiver noise; `sub` identifies the receiver.
    Noise,
    /// Noise of a free-standing probe receiver; `sub` is the probe position's bit pattern.
    ProbeNoise,
    Pilot,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::Velocity => 0x5645_4c4f,
            Purpose::Data => 0x4441_5441,
            Purpose::Noise => 0x4e4f_4953,
            Purpose::ProbeNoise => 0x5052_4f42,
            Purpose::Pilot => 0x5049_4c54,
        }
    }
}

pub type SimRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// 256-bit stream key for the given coordinates.
pub fn derive_key(master_seed: u64, trial: u64, purpose: Purpose, sub: u64) -> [u8; 32] {
    let mut h = splitmix64(master_seed);
    h = splitmix64(h ^ trial);
    h = splitmix64(h ^ purpose.tag());
    h = splitmix64(h ^ sub);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        h = splitmix64(h);
        chunk.copy_from_slice(&h.to_le_bytes());
    }
    key
}

pub fn stream(master_seed: u64, trial: u64, purpose: Purpose, sub: u64) -> SimRng {
    SimRng::from_seed(derive_key(master_seed, trial, purpose, sub))
}

/// Stream for a fixed, trial-independent sequence such as the pilot pattern.
pub fn fixed_stream(seed: u64, purpose: Purpose) -> SimRng {
    stream(seed, 0, purpose, 0)
}
