//! Deterministic seed derivation.
//!
//! All randomness in the pipeline flows from a single master seed through
//! labelled sub-streams, so adding, removing or reordering stages never
//! perturbs the draws of another stage. Each `(label, index)` pair maps to an
//! independent 64-bit seed via FNV-1a over the label followed by two
//! SplitMix64 finalization rounds; RNGs are ChaCha12 streams keyed on that
//! seed.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// SplitMix64 finalizer; full-avalanche mix of a 64-bit word.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Derive the sub-seed for `(label, index)` under `master`.
pub fn derive_seed(master: u64, label: &str, index: u64) -> u64 {
    splitmix64(splitmix64(master ^ fnv1a(label.as_bytes())) ^ index)
}

/// ChaCha12 stream for `(label, index)` under `master`.
pub fn stream(master: u64, label: &str, index: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(derive_seed(master, label, index))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_reproducible_and_label_separated() {
        let mut a = stream(42, "sim", 3);
        let mut b = stream(42, "sim", 3);
        let mut c = stream(42, "mc", 3);
        let mut d = stream(42, "sim", 4);
        let xs: Vec<u64> = (0..8).map(|_| a.gen()).collect();
        let ys: Vec<u64> = (0..8).map(|_| b.gen()).collect();
        assert_eq!(xs, ys);
        assert_ne!(xs[0], c.gen::<u64>());
        assert_ne!(xs[0], d.gen::<u64>());
    }

    #[test]
    fn derive_seed_depends_on_all_inputs() {
        let base = derive_seed(1, "x", 0);
        assert_ne!(base, derive_seed(2, "x", 0));
        assert_ne!(base, derive_seed(1, "y", 0));
        assert_ne!(base, derive_seed(1, "x", 1));
    }
}
