//! Counter-based random streams.
//!
//! Every random decision in the synthetic simulator is drawn from a stream
//! keyed by `(seed, image id, index, purpose)`, so results do not depend on
//! the order in which images or faces are visited.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// Purpose tags keep streams for different decisions independent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    FaceDraw = 1,
    FalsePositiveCount = 2,
    FalsePositive = 3,
    ImageLayout = 4,
    ScoreNoise = 5,
    BaselineSplit = 6,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn key(seed: u64, id: &str, index: u64, purpose: Purpose) -> u64 {
    let mut h = mix(seed);
    h = mix(h ^ fnv1a(id.as_bytes()));
    h = mix(h ^ index);
    mix(h ^ purpose as u64)
}

pub fn stream(seed: u64, id: &str, index: u64, purpose: Purpose) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(key(seed, id, index, purpose))
}
