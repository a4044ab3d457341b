//! Stable seed derivation, independent of std's unspecified hashers.

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

/// Mixes a parent seed, a purpose tag and an index into a child seed.
pub fn derive_seed(parent: u64, tag: &str, index: u64) -> u64 {
    splitmix64(splitmix64(parent ^ fnv1a(tag.as_bytes())) ^ index)
}

/// Child seed keyed by a string identifier (e.g. an episode id).
pub fn derive_seed_str(parent: u64, tag: &str, key: &str) -> u64 {
    derive_seed(parent, tag, fnv1a(key.as_bytes()))
}
