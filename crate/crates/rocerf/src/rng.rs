//! Seeded randomness.
//!
//! All randomness in the crate flows through explicitly seeded ChaCha8
//! streams, a fixed, platform-independent generator. Nothing ever touches the
//! OS entropy pool, so a run is fully determined by the seeds in its config.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Create the crate's standard generator from a 64-bit seed.
pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derive an independent stream seed from a base seed and an index.
///
/// Used wherever a run fans out into independent jobs (removal trials,
/// per-sample surrogates) so that job `i`'s stream depends only on
/// `(base, i)`, never on scheduling order. The mixer is SplitMix64.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
