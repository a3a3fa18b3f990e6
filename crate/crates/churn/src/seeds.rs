//! Deterministic seed derivation shared across the crate.
//!
//! Every stochastic component draws from a ChaCha stream seeded through this
//! splitmix chain, so runs are reproducible across platforms and Rust
//! versions (unlike `DefaultHasher`, whose output is unspecified).

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Fold `salts` into `base`, one mixing round per salt.
pub fn derive(base: u64, salts: &[u64]) -> u64 {
    let mut state = splitmix64(base);
    for &s in salts {
        state = splitmix64(state ^ s.wrapping_mul(0xA24B_AED4_963E_E407));
    }
    state
}

/// A ChaCha stream for `(base, salts)`.
pub fn rng(base: u64, salts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(base, salts))
}
