//! Seed derivation. Every random draw in the simulator comes from a
//! `ChaCha8Rng` seeded by mixing the scenario seed with a purpose tag and
//! the identifiers of the entity that consumes it, so results never depend on
//! call order or thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

pub mod stream {
    pub const DATASET: u64 = 1;
    pub const SPLIT: u64 = 2;
    pub const PARTITION: u64 = 3;
    pub const MODEL_INIT: u64 = 4;
    pub const LOCAL_TRAIN: u64 = 5;
    pub const TOPOLOGY: u64 = 6;
    pub const SUBSAMPLE: u64 = 7;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds `parts` into `seed`; distinct part lists give independent streams.
pub fn derive_seed(seed: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(seed), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn rng_from(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Seed used by one client's local training in one round.
pub fn client_round_seed(seed: u64, constellation: u32, round: u32, client: u32) -> u64 {
    derive_seed(
        seed,
        &[
            stream::LOCAL_TRAIN,
            u64::from(constellation),
            u64::from(round),
            u64::from(client),
        ],
    )
}
