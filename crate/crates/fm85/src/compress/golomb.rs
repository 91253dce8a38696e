//! Golomb coding of non-negative integers with a minimal-binary remainder.

use super::bits::{BitReader, BitWriter};
use crate::error::Result;

/// Golomb parameter from a per-position 1-bit density: round(-1/log2(1-rho)),
/// at least 1.
pub fn golomb_parameter(rho: f64) -> u64 {
    let rho = rho.clamp(1e-9, 1.0 - 1e-9);
    let b = -1.0 / (1.0 - rho).log2();
    (b.round() as u64).max(1)
}

/// Minimal binary (truncated binary) code for r in [0, b).
fn write_minimal_binary(w: &mut BitWriter, r: u64, b: u64) {
    debug_assert!(r < b);
    if b == 1 {
        return;
    }
    let t = 64 - (b - 1).leading_zeros(); // ceil(log2 b)
    let cutoff = (1u64 << t) - b;
    if r < cutoff {
        w.write_bits(r, t - 1);
    } else {
        // shift so the longer codewords occupy the top of the range; emit
        // the high bit last so the prefix property holds in LSB-first order
        let v = r + cutoff;
        w.write_bits(v >> 1, t - 1);
        w.write_bits(v & 1, 1);
    }
}

fn read_minimal_binary(r: &mut BitReader<'_>, b: u64) -> Result<u64> {
    if b == 1 {
        return Ok(0);
    }
    let t = 64 - (b - 1).leading_zeros();
    let cutoff = (1u64 << t) - b;
    let head = r.read_bits(t - 1)?;
    if head < cutoff {
        Ok(head)
    } else {
        let low = r.read_bits(1)?;
        Ok(((head << 1) | low) - cutoff)
    }
}

pub fn golomb_encode(w: &mut BitWriter, value: u64, b: u64) {
    debug_assert!(b >= 1);
    w.write_unary(value / b);
    write_minimal_binary(w, value % b, b);
}

pub fn golomb_decode(r: &mut BitReader<'_>, b: u64) -> Result<u64> {
    debug_assert!(b >= 1);
    let q = r.read_unary()?;
    let rem = read_minimal_binary(r, b)?;
    Ok(q * b + rem)
}
