//! Stable hashing and seed derivation.
//!
//! Everything here is fixed by construction and must never change between
//! releases: token bucketing, manifest input hashes, and per-candidate RNG
//! seeds all flow through these functions, and run outputs are only
//! reproducible if they stay bit-stable.

/// FNV-1a 64-bit hash. Used for token bucketing and artifact fingerprints.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = OFFSET;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(PRIME);
    }
    h
}

/// Hex rendering of [`fnv1a64`], as stored in manifests.
pub fn fnv1a64_hex(bytes: &[u8]) -> String {
    format!("{:016x}", fnv1a64(bytes))
}

/// SplitMix64 finalizer; scrambles one 64-bit word.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives the RNG seed for one sampling attempt from the run seed and the
/// candidate coordinates. Each (instance, sample, attempt) triple gets an
/// independent stream, so retries after empty generations and parallel
/// schedules cannot perturb each other.
pub fn derive_seed(run_seed: u64, instance_id: u64, sample_index: u64, attempt: u64) -> u64 {
    let mut acc = splitmix64(run_seed);
    acc = splitmix64(acc ^ instance_id);
    acc = splitmix64(acc ^ sample_index);
    acc = splitmix64(acc ^ attempt);
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_matches_reference_vectors() {
        // Standard FNV-1a test vectors.
        assert_eq!(fnv1a64(b""), 0xcbf2_9ce4_8422_2325);
        assert_eq!(fnv1a64(b"a"), 0xaf63_dc4c_8601_ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn hex_is_zero_padded() {
        assert_eq!(fnv1a64_hex(b"").len(), 16);
    }

    #[test]
    fn derived_seeds_are_frozen() {
        // Guards against accidental changes to the derivation; any edit here
        // silently re-randomizes every pipeline output. The constants were
        // computed once from this implementation and pinned.
        assert_eq!(derive_seed(0, 0, 0, 0), SEED_0000);
        assert_eq!(derive_seed(17, 3, 2, 1), SEED_17_3_2_1);
        // Distinct coordinates give distinct streams.
        assert_ne!(derive_seed(17, 3, 2, 0), derive_seed(17, 3, 2, 1));
        assert_ne!(derive_seed(17, 3, 2, 0), derive_seed(17, 2, 3, 0));
        assert_ne!(derive_seed(17, 3, 2, 0), derive_seed(18, 3, 2, 0));
    }

    // Pinned outputs of derive_seed; see derived_seeds_are_frozen.
    const SEED_0000: u64 = 0x2130_748a_aac8_0268;
    const SEED_17_3_2_1: u64 = 0x8bf3_4edb_7ccc_78fe;
}
