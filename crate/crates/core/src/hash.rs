//! Stable hashing used for n-gram fingerprints and the built-in embedder.
//! FNV-1a is platform-independent and versioned by this crate, unlike
//! `std::hash`, so hashes persisted in index files stay valid.

const FNV64_OFFSET: u64 = 0xcbf29ce484222325;
const FNV64_PRIME: u64 = 0x100000001b3;

const FNV128_OFFSET: u128 = 0x6c62272e07bb014262b821756295c58d;
const FNV128_PRIME: u128 = 0x0000000001000000000000000000013b;

pub fn fnv1a_64(bytes: &[u8]) -> u64 {
    let mut h = FNV64_OFFSET;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV64_PRIME);
    }
    h
}

pub fn fnv1a_128(bytes: &[u8]) -> u128 {
    let mut h = FNV128_OFFSET;
    for &b in bytes {
        h ^= b as u128;
        h = h.wrapping_mul(FNV128_PRIME);
    }
    h
}

/// 128-bit hash of a token sequence. Tokens are terminated with a byte that
/// cannot appear in UTF-8, so distinct sequences never share an encoding and
/// sequences of different lengths cannot collide structurally.
pub fn hash_token_seq(tokens: &[impl AsRef<str>]) -> u128 {
    let mut h = FNV128_OFFSET;
    for t in tokens {
        for &b in t.as_ref().as_bytes() {
            h ^= b as u128;
            h = h.wrapping_mul(FNV128_PRIME);
        }
        h ^= 0xff;
        h = h.wrapping_mul(FNV128_PRIME);
    }
    h
}

/// splitmix64 finalizer; used to derive independent per-item seeds from a
/// master seed without correlation between consecutive indices.
pub fn mix_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_mul(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_vectors() {
        // Published FNV-1a test vectors.
        assert_eq!(fnv1a_64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a_64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a_64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn token_seq_is_boundary_sensitive() {
        assert_ne!(
            hash_token_seq(&["ab", "c"]),
            hash_token_seq(&["a", "bc"]),
        );
        assert_ne!(hash_token_seq(&["a"]), hash_token_seq(&["a", "a"]));
        assert_eq!(
            hash_token_seq(&["x", "y"]),
            hash_token_seq(&["x".to_string(), "y".to_string()]),
        );
    }

    #[test]
    fn mixed_seeds_differ() {
        let a = mix_seed(42, 0);
        let b = mix_seed(42, 1);
        let c = mix_seed(43, 0);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(a, mix_seed(42, 0));
    }
}
