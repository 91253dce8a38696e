//! HLL baseline: the lossy keep-only-the-rightmost-column projection of the
//! coupon sketch, with raw, MDL, and HIP estimators.

use crate::error::{Error, Result};
use crate::estimators::{bitmap_estimate, LN2};
use crate::sketch::{hash_to_coupon, Fm85Sketch, SketchConfig};

/// HLL sketch: one register per row holding the rightmost collected column
/// (0 = none).
#[derive(Clone, Debug, PartialEq)]
pub struct HllSketch {
    config: SketchConfig,
    registers: Vec<u8>,
    hip_accumulator: f64,
    hip_remaining: f64,
    hip_valid: bool,
}

impl HllSketch {
    pub fn new(config: SketchConfig) -> Self {
        Self {
            config,
            registers: vec![0; config.k() as usize],
            hip_accumulator: 0.0,
            hip_remaining: 1.0,
            hip_valid: true,
        }
    }

    pub fn config(&self) -> &SketchConfig {
        &self.config
    }

    pub fn registers(&self) -> &[u8] {
        &self.registers
    }

    pub fn hip_valid(&self) -> bool {
        self.hip_valid
    }

    /// Projects an FM85 sketch: each register is the row's maximum collected
    /// column. The HIP state of the projection is not derivable, so it is
    /// invalid.
    pub fn from_fm85(sketch: &Fm85Sketch) -> HllSketch {
        let mut out = HllSketch::new(*sketch.config());
        out.hip_valid = false;
        for c in sketch.collected_coupons() {
            let r = &mut out.registers[c.row as usize];
            *r = (*r).max(c.col as u8);
        }
        out
    }

    /// Processes one hashed item.
    pub fn update(&mut self, hash_pair: [u64; 2]) {
        let c = hash_to_coupon(hash_pair, &self.config);
        self.update_register(c.row, c.col as u8);
    }

    /// Raises a register to `col` if that increases it, with the HIP update.
    pub fn update_register(&mut self, row: u32, col: u8) {
        let old = self.registers[row as usize];
        if col <= old {
            return;
        }
        self.registers[row as usize] = col;
        if self.hip_valid {
            self.hip_accumulator += 1.0 / self.hip_remaining;
            let k = self.config.k() as f64;
            self.hip_remaining -= (2f64.powi(-(old as i32)) - 2f64.powi(-(col as i32))) / k;
        }
    }

    /// Register-wise max merge. HIP is invalid afterwards.
    pub fn merge(a: &HllSketch, b: &HllSketch) -> Result<HllSketch> {
        if a.config != b.config {
            return Err(Error::ConfigMismatch);
        }
        let mut out = HllSketch::new(a.config);
        out.hip_valid = false;
        for (r, (&x, &y)) in out
            .registers
            .iter_mut()
            .zip(a.registers.iter().zip(b.registers.iter()))
        {
            *r = x.max(y);
        }
        Ok(out)
    }

    /// Histogram of register values, indexed 0..=max_col.
    pub fn register_counts(&self) -> Vec<u64> {
        let mut counts = vec![0u64; self.config.max_col() as usize + 1];
        for &r in &self.registers {
            counts[r as usize] += 1;
        }
        counts
    }
}

/// Standard HLL bias-correction constant.
pub fn hll_alpha(k: u64) -> f64 {
    0.7213 / (1.0 + 1.079 / k as f64)
}

/// Raw harmonic-mean estimator with the small-n bitmap splice.
pub fn hll_estimate(hll: &HllSketch) -> f64 {
    hll_estimate_from_counts(&hll.register_counts(), hll.config().k())
}

/// Negative log2-likelihood (bits) of the register histogram under
/// stream-length hypothesis m.
///
/// P(register = v | m) = P(max <= v) - P(max <= v-1), where
/// P(max <= v) = prod_{j > v} (1 - q_j(m)) = exp(m * S_v) with
/// S_v = sum_{j > v} ln(1 - p_j).
pub fn hll_description_length(counts: &[u64], k: u64, max_col: u32, m: f64) -> f64 {
    let kf = k as f64;
    // suffix sums of ln(1-p_j)
    let mut s = vec![0.0f64; max_col as usize + 2];
    for v in (0..=max_col as usize).rev() {
        let mut acc = s[v + 1];
        if v < max_col as usize {
            let p = 1.0 / (kf * 2f64.powi(v as i32 + 1));
            acc += f64::ln_1p(-p);
        }
        s[v] = acc;
    }
    let mut bits = 0.0;
    for (v, &c) in counts.iter().enumerate().take(max_col as usize + 1) {
        if c == 0 {
            continue;
        }
        let log_le_v = m * s[v]; // ln P(max <= v)
        let prob = if v == 0 {
            log_le_v.exp()
        } else {
            // P(max<=v) - P(max<=v-1) = exp(m s_v) (1 - exp(m (s_{v-1}-s_v)))
            log_le_v.exp() * (-f64::exp_m1(m * (s[v - 1] - s[v])))
        };
        if prob <= 0.0 {
            return f64::INFINITY;
        }
        bits -= c as f64 * prob.ln() / LN2;
    }
    bits
}

/// MDL estimate over the register likelihood, searched like `mdl_estimate`.
pub fn hll_mdl_estimate(hll: &HllSketch) -> f64 {
    let counts = hll.register_counts();
    hll_mdl_from_counts(&counts, hll.config().k(), hll.config().max_col())
}

pub fn hll_mdl_from_counts(counts: &[u64], k: u64, max_col: u32) -> f64 {
    let nonzero: u64 = counts.iter().skip(1).sum();
    if nonzero == 0 {
        return 0.0;
    }
    let guess = hll_estimate_from_counts(counts, k).max(1.0);
    crate::estimators::mdl_search(&|m| hll_description_length(counts, k, max_col, m), guess)
}

/// Raw-with-splice estimator from a register histogram.
pub fn hll_estimate_from_counts(counts: &[u64], k: u64) -> f64 {
    let mut inv_sum = 0.0;
    for (v, &c) in counts.iter().enumerate() {
        inv_sum += c as f64 * 2f64.powi(-(v as i32));
    }
    let raw = hll_alpha(k) * (k * k) as f64 / inv_sum;
    if counts[0] > 0 && raw < 2.5 * k as f64 {
        bitmap_estimate(k - counts[0], k).unwrap_or(raw)
    } else {
        raw
    }
}

/// HIP estimate of a continuously maintained HLL sketch.
pub fn hll_hip_estimate(hll: &HllSketch) -> Result<f64> {
    if !hll.hip_valid() {
        return Err(Error::HipUnavailable);
    }
    Ok(hll.hip_accumulator)
}
