//! LSB-first bit stream primitives shared by the Golomb and Huffman coders.

use crate::error::{Error, Result};

#[derive(Default)]
pub struct BitWriter {
    bytes: Vec<u8>,
    used: u32, // bits used in the last byte, 0..8
}

impl BitWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn write_bit(&mut self, bit: bool) {
        if self.used == 0 {
            self.bytes.push(0);
        }
        if bit {
            let last = self.bytes.last_mut().unwrap();
            *last |= 1 << self.used;
        }
        self.used = (self.used + 1) % 8;
    }

    /// Writes the low `n` bits of `value`, least significant first.
    pub fn write_bits(&mut self, value: u64, n: u32) {
        debug_assert!(n <= 64);
        for i in 0..n {
            self.write_bit((value >> i) & 1 != 0);
        }
    }

    /// Writes the low `n` bits of a wide value (Huffman codes can exceed 64).
    pub fn write_bits_wide(&mut self, value: u128, n: u32) {
        debug_assert!(n <= 128);
        for i in 0..n {
            self.write_bit((value >> i) & 1 != 0);
        }
    }

    /// Unary code: `q` one-bits followed by a zero terminator.
    pub fn write_unary(&mut self, q: u64) {
        for _ in 0..q {
            self.write_bit(true);
        }
        self.write_bit(false);
    }

    pub fn bit_len(&self) -> u64 {
        if self.used == 0 {
            self.bytes.len() as u64 * 8
        } else {
            (self.bytes.len() as u64 - 1) * 8 + self.used as u64
        }
    }

    pub fn finish(self) -> Vec<u8> {
        self.bytes
    }
}

pub struct BitReader<'a> {
    bytes: &'a [u8],
    pos: u64,
}

impl<'a> BitReader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub fn read_bit(&mut self) -> Result<bool> {
        let byte = (self.pos / 8) as usize;
        if byte >= self.bytes.len() {
            return Err(Error::Corrupt("bitstream truncated"));
        }
        let bit = self.bytes[byte] >> (self.pos % 8) & 1 != 0;
        self.pos += 1;
        Ok(bit)
    }

    pub fn read_bits(&mut self, n: u32) -> Result<u64> {
        debug_assert!(n <= 64);
        let mut out = 0u64;
        for i in 0..n {
            if self.read_bit()? {
                out |= 1 << i;
            }
        }
        Ok(out)
    }

    pub fn read_unary(&mut self) -> Result<u64> {
        let mut q = 0u64;
        while self.read_bit()? {
            q += 1;
            if q > (self.bytes.len() as u64) * 8 {
                return Err(Error::Corrupt("unary run overflows payload"));
            }
        }
        Ok(q)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bit_roundtrip() {
        let mut w = BitWriter::new();
        w.write_bits(0b1011, 4);
        w.write_unary(5);
        w.write_bits(u64::MAX, 64);
        w.write_bits_wide(0xdead_beef_dead_beef_dead_beef, 100);
        let bytes = w.finish();
        let mut r = BitReader::new(&bytes);
        assert_eq!(r.read_bits(4).unwrap(), 0b1011);
        assert_eq!(r.read_unary().unwrap(), 5);
        assert_eq!(r.read_bits(64).unwrap(), u64::MAX);
        let mut wide = 0u128;
        for i in 0..100 {
            if r.read_bit().unwrap() {
                wide |= 1 << i;
            }
        }
        assert_eq!(wide, 0xdead_beef_dead_beef_dead_beef);
    }

    #[test]
    fn truncation_is_detected() {
        let mut w = BitWriter::new();
        w.write_bits(0xff, 8);
        let bytes = w.finish();
        let mut r = BitReader::new(&bytes);
        assert!(r.read_bits(8).is_ok());
        assert!(r.read_bit().is_err());
    }

    #[test]
    fn random_sequences_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let vals: Vec<(u64, u32)> = (0..200)
                .map(|_| {
                    let n = rng.gen_range(1..=64u32);
                    (rng.gen::<u64>() & (u64::MAX >> (64 - n)), n)
                })
                .collect();
            let mut w = BitWriter::new();
            for &(v, n) in &vals {
                w.write_bits(v, n);
            }
            let bytes = w.finish();
            let mut r = BitReader::new(&bytes);
            for &(v, n) in &vals {
                assert_eq!(r.read_bits(n).unwrap(), v);
            }
        }
    }
}
