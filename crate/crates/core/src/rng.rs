//! Named random streams derived from one root seed.
//!
//! Every consumer of randomness (dataset split, pool draws, simulation trials)
//! asks for its own stream by name and optional counter, so re-seeding one
//! component never shifts the draws of another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

pub const SPLIT_STREAM: &str = "dataset-split";
pub const INIT_STREAM: &str = "init";
pub const SHUFFLE_STREAM: &str = "shuffle";
pub const POOL_STREAM: &str = "pool";
pub const TRIAL_STREAM: &str = "trial";

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

// FNV-1a; stable across platforms and releases, unlike `DefaultHasher`.
fn name_hash(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Seed for stream `name` number `counter` under `root`.
pub fn derive_seed(root: u64, name: &str, counter: u64) -> u64 {
    splitmix64(splitmix64(root ^ name_hash(name)) ^ splitmix64(counter.wrapping_add(1)))
}

pub fn stream(root: u64, name: &str, counter: u64) -> StreamRng {
    StreamRng::seed_from_u64(derive_seed(root, name, counter))
}
