//! Counter-based random streams.
//!
//! Every random draw is addressed by `(seed, domain, counter)`: the domain
//! separates unrelated consumers such as weight init and shuffling, and the
//! counter selects an independent ChaCha stream, so the
//! value drawn for example `k` does not depend on the order in which
//! examples are produced.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const DOMAIN_SYNTH_WEIGHTS: u64 = 1;
pub const DOMAIN_SYNTH_EXAMPLES: u64 = 2;
pub const DOMAIN_DOWNSAMPLE: u64 = 3;
pub const DOMAIN_SHUFFLE: u64 = 4;
pub const DOMAIN_INIT: u64 = 5;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a user seed with a domain tag into a new 64-bit seed.
pub fn derive_seed(seed: u64, domain: u64) -> u64 {
    splitmix64(seed ^ splitmix64(domain))
}

/// The `counter`-th independent stream of `(seed, domain)`.
pub fn stream(seed: u64, domain: u64, counter: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, domain));
    rng.set_stream(counter);
    rng
}
