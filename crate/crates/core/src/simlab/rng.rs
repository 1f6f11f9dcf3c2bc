//! Seed threading. Every random quantity comes from a ChaCha20 generator
//! keyed by `(seed, purpose)` with the replicate index as its stream, so
//! replicates can be generated in any order or in parallel.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub const RNG_NAME: &str = "ChaCha20 (seed, purpose key, replicate stream)";

/// Seed used when neither a flag nor `DTRLAB_SEED` provides one.
pub const DEFAULT_SEED: u64 = 20240601;

/// Purpose keys, so that e.g. training and test draws never share a stream.
pub mod purpose {
    pub const DATA: u64 = 1;
    pub const TEST: u64 = 2;
    pub const MC: u64 = 3;
    pub const BOOTSTRAP: u64 = 4;
    pub const FIT: u64 = 5;
    pub const AUDIT: u64 = 6;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Sub-seed for a purpose key.
pub fn derive_seed(seed: u64, purpose: u64) -> u64 {
    splitmix64(seed ^ splitmix64(purpose))
}

pub fn stream_rng(seed: u64, purpose: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(derive_seed(seed, purpose));
    rng.set_stream(stream);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: u64 = stream_rng(7, purpose::DATA, 3).random();
        let b: u64 = stream_rng(7, purpose::DATA, 3).random();
        let c: u64 = stream_rng(7, purpose::DATA, 4).random();
        let d: u64 = stream_rng(7, purpose::TEST, 3).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }
}
