//! Compressed sketch format: a small header plus entropy-coded window and
//! surprising-set payloads, with a trailing CRC32.
//!
//! The window's 32 bits per row are rotated conditionally, split into bytes,
//! and transposed to column-major order. Byte-column 0 (the eight
//! highest-entropy columns) is Huffman coded against a model derived from
//! the header fields; the remaining sparse or dense positions are Golomb
//! coded per column, inverting columns whose model density exceeds one half.
//! Everything the decoder needs is recomputed from the header, so the code
//! tables never travel with the data.

pub mod bits;
pub mod golomb;
pub mod huffman;

use std::collections::BTreeSet;

use bits::{BitReader, BitWriter};
use golomb::{golomb_decode, golomb_encode, golomb_parameter};
use huffman::HuffmanCode;

use crate::error::{Error, Result};
use crate::estimators::icon_estimate;
use crate::sketch::{CouponId, Fm85Sketch, SketchConfig, WINDOW_WIDTH};

pub const MAGIC: [u8; 4] = *b"FM85";
pub const VERSION: u8 = 1;

pub const FLAG_ROTATED: u8 = 1 << 0;
pub const FLAG_HIP_VALID: u8 = 1 << 1;
pub const FLAG_EXTERNAL_CODEC: u8 = 1 << 2;
const PHASE_SHIFT: u8 = 4;

/// Pluggable byte compressor for the window byte-plane, replacing the
/// built-in entropy coder when supplied.
pub trait ByteCodec {
    fn name(&self) -> &'static str;
    fn encode(&self, bytes: &[u8]) -> Vec<u8>;
    fn decode(&self, bytes: &[u8]) -> Result<Vec<u8>>;
}

/// Serialized sketch container. All multi-byte integers little-endian.
#[derive(Clone, Debug, PartialEq)]
pub struct CompressedSketch {
    pub flags: u8,
    pub log2_k: u8,
    pub window_offset: u8,
    pub collected_count: u64,
    pub hash_seed: u64,
    /// (A, R), present iff `FLAG_HIP_VALID`.
    pub hip: Option<(f64, f64)>,
    pub window_payload: Vec<u8>,
    pub surprising_payload: Vec<u8>,
}

/// Whether the conditional rotation applies: C > floor(3.3 k).
pub fn rotation_active(collected: u64, k: u64) -> bool {
    collected * 10 > 33 * k
}

/// Phase of C/k within its unit-period oscillation, bucketed into 16 bins.
pub fn phase_bucket(collected: u64, k: u64) -> u8 {
    ((collected % k) * 16 / k) as u8
}

/// The raw 4k-byte window plane: per-row 32-bit words (bit 0 = leftmost
/// window column), conditionally rotated right by one, split into bytes
/// low-to-high and emitted column-major.
pub fn window_bytes(sketch: &Fm85Sketch) -> Vec<u8> {
    let k = sketch.config().k() as usize;
    let rotated = rotation_active(sketch.collected_count(), sketch.config().k());
    let mut out = vec![0u8; 4 * k];
    for (row, &word) in sketch.window_words().iter().enumerate() {
        let w = if rotated { word.rotate_right(1) } else { word };
        for byte_col in 0..4 {
            out[byte_col * k + row] = (w >> (8 * byte_col)) as u8;
        }
    }
    out
}

/// Row-major variant of the same plane (comparison baseline only).
pub fn window_bytes_row_major(sketch: &Fm85Sketch) -> Vec<u8> {
    let k = sketch.config().k() as usize;
    let rotated = rotation_active(sketch.collected_count(), sketch.config().k());
    let mut out = Vec::with_capacity(4 * k);
    for &word in sketch.window_words() {
        let w = if rotated { word.rotate_right(1) } else { word };
        out.extend_from_slice(&w.to_le_bytes());
    }
    out
}

/// Model probability that each physical window bit position (post-rotation)
/// is set, derived solely from header fields so the decoder can rebuild it.
fn window_bit_model(k: u64, window_offset: u32, collected: u64, rotated: bool) -> [f64; 32] {
    // back out a stream-length scale from C; beyond 64k-1 the inverse is
    // undefined, so clamp (the model only shapes code lengths, not payload
    // correctness)
    let c = collected.min(64 * k - 1);
    let n = icon_estimate(c, k).expect("clamped coupon count").max(0.0);
    let mut q = [0.0f64; 32];
    for (t, slot) in q.iter_mut().enumerate() {
        let col = window_offset + t as u32;
        let prob = if col <= 64 {
            let p = 1.0 / (k as f64 * 2f64.powi(col as i32));
            -f64::exp_m1(n * f64::ln_1p(-p))
        } else {
            0.0
        };
        *slot = prob.clamp(0.005, 0.995);
    }
    if rotated {
        let mut rot = [0.0f64; 32];
        for (t, &v) in q.iter().enumerate() {
            // rotate_right(1) sends logical bit t to physical position t-1
            rot[(t + 31) % 32] = v;
        }
        rot
    } else {
        q
    }
}

fn byte0_weights(model: &[f64; 32]) -> [f64; 256] {
    let mut w = [0.0f64; 256];
    for (sym, slot) in w.iter_mut().enumerate() {
        let mut p = 1.0;
        for (bit, &q) in model.iter().enumerate().take(8) {
            p *= if sym >> bit & 1 != 0 { q } else { 1.0 - q };
        }
        *slot = p;
    }
    w
}

fn encode_window(sketch: &Fm85Sketch, model: &[f64; 32]) -> Vec<u8> {
    let k = sketch.config().k();
    let rotated = rotation_active(sketch.collected_count(), k);
    let words: Vec<u32> = sketch
        .window_words()
        .iter()
        .map(|&w| if rotated { w.rotate_right(1) } else { w })
        .collect();
    let mut w = BitWriter::new();
    // byte-column 0: Huffman over the eight hottest positions
    let code = HuffmanCode::build(&byte0_weights(model));
    for &word in &words {
        code.encode(&mut w, word as u8);
    }
    // positions 8..31: per-column Golomb-coded set-bit positions, inverted
    // when the column is mostly ones
    let len_bits = 64 - (k - 1).leading_zeros().min(63);
    for (u, &q) in model.iter().enumerate().skip(8) {
        let invert = q > 0.5;
        let density = if invert { 1.0 - q } else { q };
        let b = golomb_parameter(density);
        let mut prev: i64 = -1;
        let mut ones: Vec<u64> = Vec::new();
        for (row, &word) in words.iter().enumerate() {
            let bit = (word >> u) & 1 != 0;
            if bit != invert {
                ones.push(row as u64);
            }
        }
        w.write_bits(ones.len() as u64, len_bits + 1);
        for &pos in &ones {
            golomb_encode(&mut w, (pos as i64 - prev - 1) as u64, b);
            prev = pos as i64;
        }
    }
    w.finish()
}

fn decode_window(
    payload: &[u8],
    k: u64,
    model: &[f64; 32],
    rotated: bool,
) -> Result<Vec<u32>> {
    let mut r = BitReader::new(payload);
    let mut words = vec![0u32; k as usize];
    let code = HuffmanCode::build(&byte0_weights(model));
    for word in words.iter_mut() {
        *word = code.decode(&mut r)? as u32;
    }
    let len_bits = 64 - (k - 1).leading_zeros().min(63);
    for (u, &q) in model.iter().enumerate().skip(8) {
        let invert = q > 0.5;
        let density = if invert { 1.0 - q } else { q };
        let b = golomb_parameter(density);
        let count = r.read_bits(len_bits + 1)?;
        if count > k {
            return Err(Error::Corrupt("window column population exceeds k"));
        }
        let mut mask = vec![invert; k as usize];
        let mut pos: i64 = -1;
        for _ in 0..count {
            let gap = golomb_decode(&mut r, b)?;
            pos += gap as i64 + 1;
            if pos >= k as i64 {
                return Err(Error::Corrupt("window bit position beyond k"));
            }
            mask[pos as usize] = !invert;
        }
        for (row, &bit) in mask.iter().enumerate() {
            if bit {
                words[row] |= 1 << u;
            }
        }
    }
    if rotated {
        for w in &mut words {
            *w = w.rotate_left(1);
        }
    }
    Ok(words)
}

/// Golomb-coded surprising set over the linearized index
/// (col - first_surprising_col) * k + row, sorted by (col, row).
pub fn encode_surprising(
    coupons: impl IntoIterator<Item = CouponId>,
    window_offset: u32,
    k: u64,
) -> Vec<u8> {
    let sorted: BTreeSet<CouponId> = coupons.into_iter().collect();
    if sorted.is_empty() {
        return Vec::new();
    }
    let base = window_offset + WINDOW_WIDTH;
    let rho = sorted.len() as f64 / (WINDOW_WIDTH as u64 * k) as f64;
    let b = golomb_parameter(rho);
    let mut w = BitWriter::new();
    w.write_bits(sorted.len() as u64, 32);
    w.write_bits(b, 32);
    let mut prev: i64 = -1;
    for c in &sorted {
        debug_assert!(c.col >= base);
        let idx = (c.col - base) as u64 * k + c.row as u64;
        golomb_encode(&mut w, (idx as i64 - prev - 1) as u64, b);
        prev = idx as i64;
    }
    w.finish()
}

pub fn decode_surprising(
    payload: &[u8],
    window_offset: u32,
    k: u64,
) -> Result<BTreeSet<CouponId>> {
    let mut out = BTreeSet::new();
    if payload.is_empty() {
        return Ok(out);
    }
    let base = window_offset + WINDOW_WIDTH;
    let mut r = BitReader::new(payload);
    let count = r.read_bits(32)?;
    let b = r.read_bits(32)?;
    if b == 0 {
        return Err(Error::Corrupt("zero golomb parameter"));
    }
    let mut idx: i64 = -1;
    for _ in 0..count {
        let gap = golomb_decode(&mut r, b)?;
        idx += gap as i64 + 1;
        let col = base + (idx as u64 / k) as u32;
        let row = (idx as u64 % k) as u32;
        if col > 64 {
            return Err(Error::Corrupt("surprising column beyond 64"));
        }
        out.insert(CouponId { col, row });
    }
    Ok(out)
}

/// Compresses a sketch with the built-in entropy coder.
pub fn compress(sketch: &Fm85Sketch) -> Result<CompressedSketch> {
    compress_with(sketch, None)
}

/// Compresses a sketch, optionally replacing the built-in window coder with
/// an external byte codec (flag bit 2).
pub fn compress_with(
    sketch: &Fm85Sketch,
    codec: Option<&dyn ByteCodec>,
) -> Result<CompressedSketch> {
    let config = sketch.config();
    if config.max_col() != 64 {
        return Err(Error::InvalidConfig(
            "compressed format requires the default 64-column layout",
        ));
    }
    let k = config.k();
    let c = sketch.collected_count();
    let rotated = rotation_active(c, k);
    let mut flags = phase_bucket(c, k) << PHASE_SHIFT;
    if rotated {
        flags |= FLAG_ROTATED;
    }
    let hip = if sketch.hip_valid() {
        flags |= FLAG_HIP_VALID;
        Some((sketch.hip_accumulator(), sketch.hip_remaining()))
    } else {
        None
    };
    let window_payload = match codec {
        Some(codec) => {
            flags |= FLAG_EXTERNAL_CODEC;
            codec.encode(&window_bytes(sketch))
        }
        None => {
            let model = window_bit_model(k, sketch.window_offset(), c, rotated);
            encode_window(sketch, &model)
        }
    };
    let surprising_payload = encode_surprising(sketch.surprising(), sketch.window_offset(), k);
    Ok(CompressedSketch {
        flags,
        log2_k: config.log2_k() as u8,
        window_offset: sketch.window_offset() as u8,
        collected_count: c,
        hash_seed: 0,
        hip,
        window_payload,
        surprising_payload,
    })
}

/// Inverts `compress`; the same codec (or none) must be supplied.
pub fn decompress(cs: &CompressedSketch) -> Result<Fm85Sketch> {
    decompress_with(cs, None)
}

pub fn decompress_with(
    cs: &CompressedSketch,
    codec: Option<&dyn ByteCodec>,
) -> Result<Fm85Sketch> {
    if cs.log2_k > 32 {
        return Err(Error::Corrupt("log2_k out of range"));
    }
    let k = 1u64 << cs.log2_k;
    let config = SketchConfig::with_k(k).map_err(|_| Error::Corrupt("k below minimum"))?;
    let rotated = cs.flags & FLAG_ROTATED != 0;
    if rotated != rotation_active(cs.collected_count, k) {
        return Err(Error::Corrupt("rotation flag contradicts coupon count"));
    }
    let window_offset = cs.window_offset as u32;
    let words = if cs.flags & FLAG_EXTERNAL_CODEC != 0 {
        let codec = codec.ok_or(Error::Corrupt("payload needs an external codec"))?;
        let bytes = codec.decode(&cs.window_payload)?;
        if bytes.len() != 4 * k as usize {
            return Err(Error::Corrupt("window plane size mismatch"));
        }
        let mut words = vec![0u32; k as usize];
        for (row, word) in words.iter_mut().enumerate() {
            for byte_col in 0..4 {
                *word |= (bytes[byte_col * k as usize + row] as u32) << (8 * byte_col);
            }
            if rotated {
                *word = word.rotate_left(1);
            }
        }
        words
    } else {
        let model = window_bit_model(k, window_offset, cs.collected_count, rotated);
        decode_window(&cs.window_payload, k, &model, rotated)?
    };
    let surprising = decode_surprising(&cs.surprising_payload, window_offset, k)?;
    Fm85Sketch::from_parts(
        config,
        window_offset,
        words,
        surprising,
        cs.collected_count,
        cs.hip,
    )
}

fn crc32(bytes: &[u8]) -> u32 {
    let mut crc = !0u32;
    for &b in bytes {
        crc ^= b as u32;
        for _ in 0..8 {
            crc = (crc >> 1) ^ (0xedb8_8320 & (0u32.wrapping_sub(crc & 1)));
        }
    }
    !crc
}

impl CompressedSketch {
    /// Canonical byte form: header, payloads, trailing CRC32 of everything
    /// preceding it.
    pub fn serialize(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(
            32 + self.window_payload.len() + self.surprising_payload.len(),
        );
        out.extend_from_slice(&MAGIC);
        out.push(VERSION);
        out.push(self.flags);
        out.push(self.log2_k);
        out.push(self.window_offset);
        out.extend_from_slice(&self.collected_count.to_le_bytes());
        out.extend_from_slice(&self.hash_seed.to_le_bytes());
        if let Some((a, r)) = self.hip {
            out.extend_from_slice(&a.to_le_bytes());
            out.extend_from_slice(&r.to_le_bytes());
        }
        out.extend_from_slice(&(self.window_payload.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.window_payload);
        out.extend_from_slice(&(self.surprising_payload.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.surprising_payload);
        let crc = crc32(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn deserialize(bytes: &[u8]) -> Result<CompressedSketch> {
        if bytes.len() < 8 {
            return Err(Error::Corrupt("file shorter than header"));
        }
        if bytes[0..4] != MAGIC {
            return Err(Error::Corrupt("bad magic"));
        }
        if bytes[4] != VERSION {
            return Err(Error::UnsupportedVersion(bytes[4]));
        }
        let body_len = bytes.len() - 4;
        let stored = u32::from_le_bytes(bytes[body_len..].try_into().unwrap());
        if crc32(&bytes[..body_len]) != stored {
            return Err(Error::Corrupt("checksum mismatch"));
        }
        let flags = bytes[5];
        let log2_k = bytes[6];
        let window_offset = bytes[7];
        let mut pos = 8usize;
        let mut take = |n: usize| -> Result<&[u8]> {
            if pos + n > body_len {
                return Err(Error::Corrupt("truncated container"));
            }
            let s = &bytes[pos..pos + n];
            pos += n;
            Ok(s)
        };
        let collected_count = u64::from_le_bytes(take(8)?.try_into().unwrap());
        let hash_seed = u64::from_le_bytes(take(8)?.try_into().unwrap());
        let hip = if flags & FLAG_HIP_VALID != 0 {
            let a = f64::from_le_bytes(take(8)?.try_into().unwrap());
            let r = f64::from_le_bytes(take(8)?.try_into().unwrap());
            Some((a, r))
        } else {
            None
        };
        let wlen = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        let window_payload = take(wlen)?.to_vec();
        let slen = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        let surprising_payload = take(slen)?.to_vec();
        if pos != body_len {
            return Err(Error::Corrupt("trailing garbage before checksum"));
        }
        Ok(CompressedSketch {
            flags,
            log2_k,
            window_offset,
            collected_count,
            hash_seed,
            hip,
            window_payload,
            surprising_payload,
        })
    }

    /// Total serialized size in bits.
    pub fn serialized_bits(&self) -> u64 {
        self.serialize().len() as u64 * 8
    }
}
