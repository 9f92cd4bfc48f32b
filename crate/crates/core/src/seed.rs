//! Deterministic seed derivation.
//!
//! Every random draw in the crate goes through a ChaCha8 generator seeded
//! from a master seed combined with a stream index. The combiner is the
//! splitmix64 finalizer, so the mapping is fixed across platforms and runs.

/// Derives an independent child seed from a master seed and a stream index.
pub fn mix_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
