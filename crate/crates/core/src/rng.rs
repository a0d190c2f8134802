//! Seeded random streams.
//!
//! Every concern (placement, circuit sampling, generation outcomes,
//! exploration, replay sampling) draws from its own ChaCha stream derived
//! from a master seed and a fixed label, so changing how many numbers one
//! component consumes never shifts another component's draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Labels of the independent streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Placement = 1,
    Circuit = 2,
    Generation = 3,
    Exploration = 4,
    Replay = 5,
    Init = 6,
    Episode = 7,
    Eval = 8,
}

/// Creates the stream `label` of the master `seed`.
pub fn stream(seed: u64, label: Stream) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(label as u64);
    rng
}

/// Derives a child seed, e.g. one seed per episode.
pub fn derive_seed(seed: u64, label: Stream, index: u64) -> u64 {
    // splitmix64 finalizer over the combined key
    let mut z = seed
        .wrapping_add((label as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
