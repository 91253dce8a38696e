//! Entropy of the sketch state: exact finite-n values and the asymptotic
//! per-row constants of the FM85 and HLL representations.

use crate::estimators::LN2;
use crate::sketch::SketchConfig;

/// Truncation range for the column-offset sum. Cells with c*2^-d > 45 or
/// c*2^-d < 2^-60 contribute under 1e-12 bits, so [-60, 60] covers the
/// oscillating band to well past double-precision relevance.
const D_RANGE: i32 = 60;

/// Which sketch family the asymptotic constant describes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EntropyKind {
    Fm85,
    Hll,
}

/// A coupon cell in the asymptotic regime n = c * k * 2^b, described by the
/// mantissa c in [1, 2) and the column offset d = j - b.
#[derive(Clone, Copy, Debug)]
pub struct AsymptoticCell {
    pub c: f64,
    pub d: i32,
}

/// Probability that the cell is still uncollected: exp(-c * 2^-d).
pub fn cell_uncollected_prob(cell: AsymptoticCell) -> f64 {
    (-cell.c * 2f64.powi(-cell.d)).exp()
}

fn binary_entropy(q: f64) -> f64 {
    if q <= 0.0 || q >= 1.0 {
        return 0.0;
    }
    let p = 1.0 - q;
    -(q * q.ln() + p * p.ln()) / LN2
}

/// Binary entropy (bits) of one FM85 cell in the asymptotic regime.
pub fn fm85_cell_entropy(cell: AsymptoticCell) -> f64 {
    binary_entropy(cell_uncollected_prob(cell))
}

/// Per-row entropy of the FM85 window state at mantissa c, summed over
/// column offsets d in [-60, 60].
pub fn fm85_row_entropy(c: f64) -> f64 {
    (-D_RANGE..=D_RANGE)
        .map(|d| fm85_cell_entropy(AsymptoticCell { c, d }))
        .sum()
}

/// Per-row entropy of the HLL state: each cell's term is reached only if all
/// cells to its left are collected, which damps the FM85 term by r_d.
pub fn hll_row_entropy(c: f64) -> f64 {
    (-D_RANGE..=D_RANGE)
        .map(|d| {
            let cell = AsymptoticCell { c, d };
            cell_uncollected_prob(cell) * fm85_cell_entropy(cell)
        })
        .sum()
}

/// One sampled entropy curve over a period of the oscillation.
#[derive(Clone, Debug)]
pub struct EntropyCurve {
    /// (log2 c, bits per row) pairs.
    pub samples: Vec<(f64, f64)>,
    /// Arithmetic mean over log2(c) uniform in [0, 1).
    pub mean_constant: f64,
}

/// Samples the per-row entropy curve on a uniform midpoint grid in log2(c).
pub fn entropy_curve(kind: EntropyKind, samples: usize) -> EntropyCurve {
    assert!(samples >= 1);
    let mut out = Vec::with_capacity(samples);
    let mut total = 0.0;
    for i in 0..samples {
        let t = (i as f64 + 0.5) / samples as f64;
        let c = 2f64.powf(t);
        let bits = match kind {
            EntropyKind::Fm85 => fm85_row_entropy(c),
            EntropyKind::Hll => hll_row_entropy(c),
        };
        out.push((t, bits));
        total += bits;
    }
    EntropyCurve {
        samples: out,
        mean_constant: total / samples as f64,
    }
}

/// Mean per-row entropy constant: 4.699204337 bits for FM85 and
/// 2.831952664 bits for HLL in the limit.
pub fn entropy_constant(kind: EntropyKind, samples: usize) -> f64 {
    assert!(samples >= 256);
    entropy_curve(kind, samples).mean_constant
}

/// Exact entropy in bits of the collected-coupon indicator vector after n
/// draws.
pub fn finite_entropy(n: u64, config: &SketchConfig) -> f64 {
    let k = config.k() as f64;
    let mut total = 0.0;
    for j in 1..=config.max_col() {
        let p = 1.0 / (k * 2f64.powi(j as i32));
        let log_unc = n as f64 * f64::ln_1p(-p);
        let q = -f64::exp_m1(log_unc);
        if q <= 0.0 || q >= 1.0 {
            continue;
        }
        // k identical independent cells per column; ln(1-q) is log_unc exactly
        total -= k * (q * q.ln() + (1.0 - q) * log_unc) / LN2;
    }
    total
}
