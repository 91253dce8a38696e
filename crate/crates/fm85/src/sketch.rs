//! The coupon-collection sketch: coupon universe, probabilities, state,
//! idempotent update and merge.
//!
//! The sketch is conceptually a `k x infinity` matrix of indicator bits whose
//! column-`j` coupons each have single-draw probability `1/(k*2^j)`. The
//! concrete representation keeps an offset, a `k x 32` sliding window of
//! explicit bits (everything left of the window is implicitly collected) and
//! a sparse set of "surprising" coupons right of the window.

use std::collections::BTreeSet;

use crate::error::{Error, Result};

/// Number of explicitly stored window columns per row.
pub const WINDOW_WIDTH: u32 = 32;

/// Default (and maximum) representable column index; probability mass beyond
/// column 64 is below 2^-64 per row and unreachable at any feasible stream
/// length.
pub const DEFAULT_MAX_COL: u32 = 64;

/// Sketch shape parameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SketchConfig {
    k: u64,
    max_col: u32,
}

impl SketchConfig {
    /// `k` must be a power of two >= 16; `max_col` in `1..=64`.
    pub fn new(k: u64, max_col: u32) -> Result<Self> {
        if k < 16 || !k.is_power_of_two() || k > (1 << 32) {
            return Err(Error::InvalidConfig("k must be a power of two >= 16"));
        }
        if max_col == 0 || max_col > DEFAULT_MAX_COL {
            return Err(Error::InvalidConfig("max_col must be in 1..=64"));
        }
        Ok(Self { k, max_col })
    }

    /// Default 64-column configuration.
    pub fn with_k(k: u64) -> Result<Self> {
        Self::new(k, DEFAULT_MAX_COL)
    }

    pub fn k(&self) -> u64 {
        self.k
    }

    pub fn max_col(&self) -> u32 {
        self.max_col
    }

    pub fn log2_k(&self) -> u32 {
        self.k.trailing_zeros()
    }
}

/// A collectible cell of the coupon matrix. `col` is 1-based.
///
/// The derived ordering is (col, row); the compressed form relies on it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CouponId {
    pub col: u32,
    pub row: u32,
}

/// Single-draw probability of a coupon: exactly `1/(k*2^col)`.
pub fn coupon_probability(config: &SketchConfig, c: CouponId) -> f64 {
    debug_assert!(c.col >= 1 && c.col <= config.max_col);
    1.0 / (config.k as f64 * 2f64.powi(c.col as i32))
}

/// Maps a pair of 64-bit hashes to a coupon: the column is the leading-zero
/// count of the first hash plus one (clamped to `max_col`), the row is the
/// low bits of the second hash.
pub fn hash_to_coupon(hash_pair: [u64; 2], config: &SketchConfig) -> CouponId {
    let col = (hash_pair[0].leading_zeros() + 1).min(config.max_col);
    let row = (hash_pair[1] & (config.k - 1)) as u32;
    CouponId { col, row }
}

/// Coupon-collection sketch state.
#[derive(Clone, Debug, PartialEq)]
pub struct Fm85Sketch {
    config: SketchConfig,
    window_offset: u32,
    window: Vec<u32>,
    surprising: BTreeSet<CouponId>,
    collected: u64,
    hip_accumulator: f64,
    hip_remaining: f64,
    hip_valid: bool,
}

impl Fm85Sketch {
    pub fn new(config: SketchConfig) -> Self {
        Self {
            config,
            window_offset: 1,
            window: vec![0u32; config.k as usize],
            surprising: BTreeSet::new(),
            collected: 0,
            hip_accumulator: 0.0,
            hip_remaining: 1.0,
            hip_valid: true,
        }
    }

    pub fn config(&self) -> &SketchConfig {
        self.config_ref()
    }

    fn config_ref(&self) -> &SketchConfig {
        &self.config
    }

    /// Column index of the leftmost explicitly stored window column.
    pub fn window_offset(&self) -> u32 {
        self.window_offset
    }

    /// Number of collected coupons (the summary statistic C).
    pub fn collected_count(&self) -> u64 {
        self.collected
    }

    /// Per-row window words; bit `t` represents column `window_offset + t`.
    pub fn window_words(&self) -> &[u32] {
        &self.window
    }

    /// Collected coupons right of the window, sorted by (col, row).
    pub fn surprising(&self) -> impl Iterator<Item = CouponId> + '_ {
        self.surprising.iter().copied()
    }

    pub fn surprising_count(&self) -> usize {
        self.surprising.len()
    }

    pub fn hip_valid(&self) -> bool {
        self.hip_valid
    }

    /// HIP accumulator A (the running unbiased estimate).
    pub fn hip_accumulator(&self) -> f64 {
        self.hip_accumulator
    }

    /// Remaining uncollected probability R maintained incrementally.
    pub fn hip_remaining(&self) -> f64 {
        self.hip_remaining
    }

    /// Processes one coupon. Re-inserting an already-collected coupon leaves
    /// every field unchanged.
    pub fn update(&mut self, c: CouponId) {
        debug_assert!(c.col >= 1 && c.col <= self.config.max_col);
        debug_assert!((c.row as u64) < self.config.k);
        if c.col < self.window_offset {
            return; // implicitly collected
        }
        let t = c.col - self.window_offset;
        if t < WINDOW_WIDTH {
            let mask = 1u32 << t;
            if self.window[c.row as usize] & mask != 0 {
                return;
            }
            self.window[c.row as usize] |= mask;
            self.record_novel(c);
            if t == 0 {
                self.slide();
            }
        } else if self.surprising.insert(c) {
            self.record_novel(c);
        }
    }

    fn record_novel(&mut self, c: CouponId) {
        self.collected += 1;
        if self.hip_valid {
            // A <- A + 1/R, then R <- R - p, in that order.
            self.hip_accumulator += 1.0 / self.hip_remaining;
            self.hip_remaining -= coupon_probability(&self.config, c);
        }
    }

    /// Slides the window right while its leftmost column is all ones,
    /// pulling newly in-range surprising coupons into the window.
    fn slide(&mut self) {
        while self.window_offset <= self.config.max_col
            && self.window.iter().all(|w| w & 1 != 0)
        {
            for w in &mut self.window {
                *w >>= 1;
            }
            self.window_offset += 1;
            let incoming = self.window_offset + WINDOW_WIDTH - 1;
            if incoming <= self.config.max_col {
                let lo = CouponId { col: incoming, row: 0 };
                let hi = CouponId { col: incoming, row: u32::MAX };
                let moved: Vec<CouponId> = self.surprising.range(lo..=hi).copied().collect();
                for c in moved {
                    self.surprising.remove(&c);
                    self.window[c.row as usize] |= 1 << (WINDOW_WIDTH - 1);
                }
            }
        }
    }

    /// Whether the coupon has been collected.
    pub fn collected(&self, c: CouponId) -> bool {
        if c.col < self.window_offset {
            return true;
        }
        let t = c.col - self.window_offset;
        if t < WINDOW_WIDTH {
            self.window[c.row as usize] & (1 << t) != 0
        } else {
            self.surprising.contains(&c)
        }
    }

    /// Enumerates every collected coupon (implicit left-of-window cells
    /// included).
    pub fn collected_coupons(&self) -> Vec<CouponId> {
        let mut out = Vec::new();
        for col in 1..self.window_offset {
            for row in 0..self.config.k as u32 {
                out.push(CouponId { col, row });
            }
        }
        for t in 0..WINDOW_WIDTH {
            let col = self.window_offset + t;
            if col > self.config.max_col {
                break;
            }
            for (row, w) in self.window.iter().enumerate() {
                if w & (1 << t) != 0 {
                    out.push(CouponId { col, row: row as u32 });
                }
            }
        }
        out.extend(self.surprising.iter().copied());
        out
    }

    /// Number of collected coupons in each column, indexed by `col - 1`.
    pub fn column_counts(&self) -> Vec<u64> {
        let mut counts = vec![0u64; self.config.max_col as usize];
        for c in counts.iter_mut().take((self.window_offset - 1) as usize) {
            *c = self.config.k;
        }
        for t in 0..WINDOW_WIDTH {
            let col = self.window_offset + t;
            if col > self.config.max_col {
                break;
            }
            counts[(col - 1) as usize] = self
                .window
                .iter()
                .filter(|w| *w & (1 << t) != 0)
                .count() as u64;
        }
        for c in &self.surprising {
            counts[(c.col - 1) as usize] += 1;
        }
        counts
    }

    /// Recomputes `1 - sum of collected coupon probabilities` from scratch.
    pub fn recompute_remaining(&self) -> f64 {
        let counts = self.column_counts();
        let mut collected_mass = 0.0;
        for j in (1..=self.config.max_col).rev() {
            let p = 1.0 / (self.config.k as f64 * 2f64.powi(j as i32));
            collected_mass += counts[(j - 1) as usize] as f64 * p;
        }
        1.0 - collected_mass
    }

    /// Unions two sketches' collected sets. The result's HIP state is
    /// permanently invalid: HIP depends on processing order and cannot be
    /// recalculated from the merged state.
    pub fn merge(a: &Fm85Sketch, b: &Fm85Sketch) -> Result<Fm85Sketch> {
        if a.config != b.config {
            return Err(Error::ConfigMismatch);
        }
        let mut out = Fm85Sketch::new(a.config);
        out.hip_valid = false;
        for c in a.collected_coupons() {
            out.update(c);
        }
        for c in b.collected_coupons() {
            out.update(c);
        }
        Ok(out)
    }

    /// Reassembles a sketch from its stored fields, validating the
    /// representation invariants.
    pub(crate) fn from_parts(
        config: SketchConfig,
        window_offset: u32,
        window: Vec<u32>,
        surprising: BTreeSet<CouponId>,
        collected: u64,
        hip: Option<(f64, f64)>,
    ) -> Result<Fm85Sketch> {
        if window_offset < 1 || window_offset > config.max_col + 1 {
            return Err(Error::Corrupt("window offset out of range"));
        }
        if window.len() != config.k as usize {
            return Err(Error::Corrupt("window size mismatch"));
        }
        for c in &surprising {
            if c.col < window_offset + WINDOW_WIDTH
                || c.col > config.max_col
                || c.row as u64 >= config.k
            {
                return Err(Error::Corrupt("surprising coupon out of range"));
            }
        }
        let window_bits: u64 = window.iter().map(|w| w.count_ones() as u64).sum();
        let expect =
            config.k * (window_offset as u64 - 1) + window_bits + surprising.len() as u64;
        if collected != expect {
            return Err(Error::Corrupt("collected count inconsistent"));
        }
        let (hip_valid, hip_accumulator, hip_remaining) = match hip {
            Some((a, r)) => (true, a, r),
            None => (false, 0.0, 1.0),
        };
        Ok(Fm85Sketch {
            config,
            window_offset,
            window,
            surprising,
            collected,
            hip_accumulator,
            hip_remaining,
            hip_valid,
        })
    }
}
