//! Seedable 128-bit item hashing (MurmurHash3 x64/128).
//!
//! Every stream item is mapped to a pair of 64-bit hashes. The first hash
//! supplies the column index (leading-zero count), the second the row index
//! (low bits). The function is fixed and platform-independent so that sketch
//! files are reproducible across runs and machines.

const C1: u64 = 0x87c3_7b91_1142_53d5;
const C2: u64 = 0x4cf5_ab62_691b_fc34;

#[inline]
fn fmix64(mut k: u64) -> u64 {
    k ^= k >> 33;
    k = k.wrapping_mul(0xff51_afd7_ed55_8ccd);
    k ^= k >> 33;
    k = k.wrapping_mul(0xc4ce_b9fe_1a85_ec53);
    k ^= k >> 33;
    k
}

/// Hashes `data` to a pair of 64-bit values under the given seed.
pub fn hash128(data: &[u8], seed: u64) -> [u64; 2] {
    let mut h1 = seed;
    let mut h2 = seed;
    let blocks = data.len() / 16;

    for i in 0..blocks {
        let k1 = u64::from_le_bytes(data[i * 16..i * 16 + 8].try_into().unwrap());
        let k2 = u64::from_le_bytes(data[i * 16 + 8..i * 16 + 16].try_into().unwrap());

        h1 ^= k1.wrapping_mul(C1).rotate_left(31).wrapping_mul(C2);
        h1 = h1
            .rotate_left(27)
            .wrapping_add(h2)
            .wrapping_mul(5)
            .wrapping_add(0x52dc_e729);
        h2 ^= k2.wrapping_mul(C2).rotate_left(33).wrapping_mul(C1);
        h2 = h2
            .rotate_left(31)
            .wrapping_add(h1)
            .wrapping_mul(5)
            .wrapping_add(0x3849_5ab5);
    }

    let tail = &data[blocks * 16..];
    let mut k1 = 0u64;
    let mut k2 = 0u64;
    for (i, &b) in tail.iter().enumerate() {
        if i < 8 {
            k1 |= (b as u64) << (8 * i);
        } else {
            k2 |= (b as u64) << (8 * (i - 8));
        }
    }
    if !tail.is_empty() {
        h2 ^= k2.wrapping_mul(C2).rotate_left(33).wrapping_mul(C1);
        h1 ^= k1.wrapping_mul(C1).rotate_left(31).wrapping_mul(C2);
    }

    let len = data.len() as u64;
    h1 ^= len;
    h2 ^= len;
    h1 = h1.wrapping_add(h2);
    h2 = h2.wrapping_add(h1);
    h1 = fmix64(h1);
    h2 = fmix64(h2);
    h1 = h1.wrapping_add(h2);
    h2 = h2.wrapping_add(h1);
    [h1, h2]
}

/// Convenience wrapper for hashing a 64-bit item in little-endian form.
pub fn hash_u64(item: u64, seed: u64) -> [u64; 2] {
    hash128(&item.to_le_bytes(), seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_seed_sensitive() {
        let a = hash128(b"hello", 7);
        let b = hash128(b"hello", 7);
        let c = hash128(b"hello", 8);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(hash128(b"hello", 7), hash128(b"hellp", 7));
    }

    #[test]
    fn empty_input_ok() {
        let a = hash128(b"", 0);
        let b = hash128(b"", 1);
        assert_ne!(a, b);
    }
}
