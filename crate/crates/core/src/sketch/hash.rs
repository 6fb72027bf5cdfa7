//! Flow identifiers and the pairwise-independent row hashes.
//!
//! Each row hash is `h(x) = ((a * key(x) + b) mod p) mod w` with the Mersenne
//! prime `p = 2^61 - 1`. The per-row `(a, b)` pairs come from a ChaCha stream
//! seeded with the sketch seed, so every node derives the same family.
//!
//! Identifiers wider than 64 bits are first folded to a 64-bit key by
//! [`FlowId::key`]; identifiers of at most 8 bytes map to their big-endian
//! integer value directly.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SketchError;

const MERSENNE_61: u64 = (1u64 << 61) - 1;

/// Largest supported identifier, in bytes.
pub const MAX_ID_BYTES: usize = 32;

/// An opaque flow identifier of 4..=32 bytes.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FlowId {
    buf: [u8; MAX_ID_BYTES],
    len: u8,
}

impl FlowId {
    /// Identifier from raw big-endian bytes; `bytes.len()` must be in 4..=32.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, SketchError> {
        if !(4..=MAX_ID_BYTES).contains(&bytes.len()) {
            return Err(SketchError::IdWidth(bytes.len() * 8));
        }
        let mut buf = [0u8; MAX_ID_BYTES];
        buf[..bytes.len()].copy_from_slice(bytes);
        Ok(Self {
            buf,
            len: bytes.len() as u8,
        })
    }

    /// Encodes `value` big-endian into an identifier of `bits` bits.
    ///
    /// `bits` must be a multiple of 8 in 32..=256 and `value` must fit.
    pub fn from_u128(value: u128, bits: u32) -> Result<Self, SketchError> {
        let bytes = id_bytes(bits)?;
        if bits < 128 && value >> bits != 0 {
            return Err(SketchError::IdOverflow { value, bits });
        }
        let mut buf = [0u8; MAX_ID_BYTES];
        let be = value.to_be_bytes();
        if bytes >= 16 {
            buf[bytes - 16..bytes].copy_from_slice(&be);
        } else {
            buf[..bytes].copy_from_slice(&be[16 - bytes..]);
        }
        Ok(Self {
            buf,
            len: bytes as u8,
        })
    }

    pub fn from_u64(value: u64, bits: u32) -> Result<Self, SketchError> {
        Self::from_u128(value as u128, bits)
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.buf[..self.len as usize]
    }

    pub fn bits(&self) -> u32 {
        self.len as u32 * 8
    }

    /// Integer value when the identifier fits in 128 bits.
    pub fn to_u128(&self) -> Option<u128> {
        let bytes = self.as_bytes();
        let significant = bytes.iter().position(|&b| b != 0).unwrap_or(bytes.len());
        if bytes.len() - significant > 16 {
            return None;
        }
        Some(bytes.iter().fold(0u128, |acc, &b| (acc << 8) | b as u128))
    }

    /// 64-bit key fed to the row hashes.
    ///
    /// Identifiers up to 8 bytes use their integer value. Longer identifiers
    /// are folded chunk by chunk through the splitmix64 finalizer, with the
    /// byte length mixed in first.
    pub fn key(&self) -> u64 {
        let bytes = self.as_bytes();
        if bytes.len() <= 8 {
            return bytes.iter().fold(0u64, |acc, &b| (acc << 8) | b as u64);
        }
        let mut h = mix64(bytes.len() as u64);
        for chunk in bytes.chunks(8) {
            let mut word = [0u8; 8];
            word[..chunk.len()].copy_from_slice(chunk);
            h = mix64(h ^ u64::from_be_bytes(word));
        }
        h
    }
}

impl fmt::Debug for FlowId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FlowId(0x{})", hex::encode(self.as_bytes()))
    }
}

impl fmt::Display for FlowId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{}", hex::encode(self.as_bytes()))
    }
}

/// Byte width for an identifier of `bits` bits.
pub fn id_bytes(bits: u32) -> Result<usize, SketchError> {
    if bits % 8 != 0 || !(32..=256).contains(&bits) {
        return Err(SketchError::IdWidth(bits as usize));
    }
    Ok(bits as usize / 8)
}

/// splitmix64 output function.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
struct RowHash {
    a: u64,
    b: u64,
}

/// The `d` row hashes of a sketch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HashFamily {
    rows: Vec<RowHash>,
    w: u64,
}

impl HashFamily {
    pub fn new(d: usize, w: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = (0..d)
            .map(|_| RowHash {
                a: rng.gen_range(1..MERSENNE_61),
                b: rng.gen_range(0..MERSENNE_61),
            })
            .collect();
        Self { rows, w: w as u64 }
    }

    pub fn depth(&self) -> usize {
        self.rows.len()
    }

    pub fn width(&self) -> usize {
        self.w as usize
    }

    /// Zero-based column of `key` in `row`.
    #[inline]
    pub fn column_of_key(&self, row: usize, key: u64) -> usize {
        let h = self.rows[row];
        let x = mod_mersenne(key as u128);
        let v = mod_mersenne(h.a as u128 * x as u128 + h.b as u128);
        (v % self.w) as usize
    }

    #[inline]
    pub fn column(&self, row: usize, id: &FlowId) -> usize {
        self.column_of_key(row, id.key())
    }

    /// Zero-based column for every row.
    pub fn columns(&self, id: &FlowId) -> Vec<usize> {
        let key = id.key();
        (0..self.rows.len())
            .map(|r| self.column_of_key(r, key))
            .collect()
    }
}

#[inline]
fn mod_mersenne(x: u128) -> u64 {
    let p = MERSENNE_61 as u128;
    let mut r = (x & p) + (x >> 61);
    r = (r & p) + (r >> 61);
    if r >= p {
        r -= p;
    }
    r as u64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mersenne_reduction_matches_modulo() {
        let p = MERSENNE_61 as u128;
        for x in [0u128, 1, p - 1, p, p + 1, u64::MAX as u128, (p - 1) * (p - 1) + p - 1] {
            assert_eq!(mod_mersenne(x) as u128, x % p, "x={x}");
        }
    }

    #[test]
    fn same_seed_same_columns() {
        let a = HashFamily::new(5, 272, 99);
        let b = HashFamily::new(5, 272, 99);
        let c = HashFamily::new(5, 272, 100);
        let id = FlowId::from_u64(0xdead_beef, 64).unwrap();
        assert_eq!(a.columns(&id), b.columns(&id));
        assert_ne!(a, c);
    }

    #[test]
    fn columns_in_range() {
        let fam = HashFamily::new(7, 13, 1);
        for v in 0..2000u64 {
            let id = FlowId::from_u64(v.wrapping_mul(0x9e37_79b9), 64).unwrap();
            assert!(fam.columns(&id).iter().all(|&c| c < 13));
        }
    }

    #[test]
    fn roughly_uniform() {
        let w = 16;
        let fam = HashFamily::new(1, w, 5);
        let mut hist = vec![0usize; w];
        let n = 32_000u64;
        for v in 0..n {
            hist[fam.column(0, &FlowId::from_u64(v, 32).unwrap())] += 1;
        }
        let expect = n as f64 / w as f64;
        for &h in &hist {
            assert!((h as f64 - expect).abs() < 0.1 * expect, "{hist:?}");
        }
    }

    #[test]
    fn id_encoding() {
        let id = FlowId::from_u64(0x0102_0304, 32).unwrap();
        assert_eq!(id.as_bytes(), &[1, 2, 3, 4]);
        assert_eq!(id.key(), 0x0102_0304);
        assert_eq!(id.to_u128(), Some(0x0102_0304));
        assert!(FlowId::from_u64(1 << 40, 32).is_err());
        assert!(FlowId::from_u64(1, 12).is_err());
        let wide = FlowId::from_u128(7, 256).unwrap();
        assert_eq!(wide.as_bytes().len(), 32);
        assert_eq!(wide.to_u128(), Some(7));
    }

    #[test]
    fn wide_ids_fold_differently() {
        let a = FlowId::from_u128(1, 128).unwrap();
        let b = FlowId::from_u128(2, 128).unwrap();
        let c = FlowId::from_u128(1, 136).unwrap();
        assert_ne!(a.key(), b.key());
        assert_ne!(a.key(), c.key());
    }
}
