//! 64-bit FNV-1a hashing for seed derivation and split assignment.
//!
//! Chosen over the standard library hasher because the output must be
//! stable across runs, platforms, and library versions.

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Derives a stream seed from a base seed and a sequence of domain labels.
pub fn derive_seed(base: u64, parts: &[&[u8]]) -> u64 {
    let mut buf = Vec::with_capacity(8 + parts.iter().map(|p| p.len() + 1).sum::<usize>());
    buf.extend_from_slice(&base.to_le_bytes());
    for p in parts {
        buf.push(0x1f); // unit separator, keeps ("ab","c") distinct from ("a","bc")
        buf.extend_from_slice(p);
    }
    fnv1a64(&buf)
}
