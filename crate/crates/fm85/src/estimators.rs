//! Cardinality estimators over the coupon sketch: ICON (inverted expected
//! coupon count), MDL (minimum description length), HIP (historic inverse
//! probability), plus the bitmap/TSBM references and closed-form error
//! models.

use crate::error::{Error, Result};
use crate::sketch::Fm85Sketch;

pub const LN2: f64 = std::f64::consts::LN_2;
/// ICON asymptote constant: n-hat ~ D * k * exp(L*C/k).
pub const ICON_D: f64 = 0.7940236;
/// Euler-Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Constants of the ICON closed-form approximation.
#[derive(Clone, Copy, Debug)]
pub struct EstimatorConstants {
    pub l: f64,
    pub d: f64,
}

impl Default for EstimatorConstants {
    fn default() -> Self {
        Self { l: LN2, d: ICON_D }
    }
}

/// Expected collected-coupon count after n draws, over `max_col` columns.
pub fn expected_coupons_cols(n: f64, k: u64, max_col: u32) -> f64 {
    debug_assert!(n >= 0.0);
    let kf = k as f64;
    let mut total = 0.0;
    for j in 1..=max_col {
        let p = 1.0 / (kf * 2f64.powi(j as i32));
        // 1 - (1-p)^n, stable for tiny p and huge n
        total -= f64::exp_m1(n * f64::ln_1p(-p));
    }
    kf * total
}

/// Expected coupon count E(C) over the default 64 columns.
pub fn expected_coupons(n: f64, k: u64) -> f64 {
    expected_coupons_cols(n, k, 64)
}

/// Variance of the coupon count: k * sum_j q_j (1 - q_j).
pub fn coupon_count_variance(n: f64, k: u64) -> f64 {
    let kf = k as f64;
    let mut total = 0.0;
    for j in 1..=64 {
        let p = 1.0 / (kf * 2f64.powi(j));
        let q = -f64::exp_m1(n * f64::ln_1p(-p));
        total += q * (1.0 - q);
    }
    kf * total
}

/// Real-valued inverse of `expected_coupons`: the m with E(C at m) = c.
///
/// Binary search on the monotone map; tolerance 1e-9 * max(1, c) or 60
/// halvings, whichever comes first.
pub fn icon_inverse(c: f64, k: u64) -> Result<f64> {
    if !(c >= 0.0) || c >= (k * 64) as f64 {
        return Err(Error::OutOfRange("coupon count outside invertible range"));
    }
    if c == 0.0 {
        return Ok(0.0);
    }
    let tol = 1e-9 * c.max(1.0);
    let mut hi = 1.0f64;
    while expected_coupons(hi, k) < c {
        hi *= 2.0;
    }
    let mut lo = hi / 2.0;
    if expected_coupons(lo, k) >= c {
        lo = 0.0;
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let e = expected_coupons(mid, k);
        if (e - c).abs() < tol {
            return Ok(mid);
        }
        if e < c {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// ICON estimate for an integer coupon count.
pub fn icon_estimate(c: u64, k: u64) -> Result<f64> {
    if c >= k * 64 {
        return Err(Error::OutOfRange("coupon count beyond table capacity"));
    }
    icon_inverse(c as f64, k)
}

/// Closed-form ICON approximation D * k * exp(L * C / k).
pub fn icon_asymptotic(c: f64, k: u64) -> f64 {
    ICON_D * k as f64 * f64::exp(LN2 * c / k as f64)
}

/// Precomputed ICON inverse for every C in `0..capacity`.
pub struct IconTable {
    k: u64,
    entries: Vec<f64>,
}

impl IconTable {
    /// Builds entries for C in `0..capacity` (capacity at most 64k).
    pub fn build(k: u64, capacity: usize) -> Result<IconTable> {
        if capacity as u64 > k * 64 {
            return Err(Error::OutOfRange("table capacity beyond 64k coupons"));
        }
        let mut entries = Vec::with_capacity(capacity);
        // Warm-started bisection: each entry brackets from the previous one.
        let mut lo = 0.0f64;
        for c in 0..capacity {
            let target = c as f64;
            if c == 0 {
                entries.push(0.0);
                continue;
            }
            let tol = 1e-9 * target.max(1.0);
            let mut hi = (lo * 2.0).max(2.0);
            while expected_coupons(hi, k) < target {
                hi *= 2.0;
            }
            let mut a = lo;
            let mut b = hi;
            for _ in 0..60 {
                let mid = 0.5 * (a + b);
                let e = expected_coupons(mid, k);
                if (e - target).abs() < tol {
                    a = mid;
                    b = mid;
                    break;
                }
                if e < target {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            let n = 0.5 * (a + b);
            entries.push(n);
            lo = n;
        }
        Ok(IconTable { k, entries })
    }

    pub fn k(&self) -> u64 {
        self.k
    }

    pub fn lookup(&self, c: u64) -> Result<f64> {
        self.entries
            .get(c as usize)
            .copied()
            .ok_or(Error::OutOfRange("coupon count beyond table capacity"))
    }

    pub fn capacity(&self) -> usize {
        self.entries.len()
    }
}

/// Description length in bits of per-column collected counts under the
/// hypothesis that the stream length was `m`.
///
/// Returns +infinity when a collected coupon has model probability zero.
pub fn description_length_from_counts(counts: &[u64], k: u64, m: f64) -> f64 {
    let kf = k as f64;
    let mut bits = 0.0;
    for (idx, &c) in counts.iter().enumerate() {
        let j = idx as i32 + 1;
        let p = 1.0 / (kf * 2f64.powi(j));
        let log_unc = m * f64::ln_1p(-p); // ln (1-p)^m
        let q = -f64::exp_m1(log_unc);
        if c > 0 {
            if q <= 0.0 {
                return f64::INFINITY;
            }
            bits -= c as f64 * q.ln() / LN2;
        }
        if c < k {
            if log_unc == f64::NEG_INFINITY {
                return f64::INFINITY;
            }
            bits -= (k - c) as f64 * log_unc / LN2;
        }
    }
    bits
}

/// Description length of a sketch's collected set under stream-length
/// hypothesis m.
pub fn description_length(sketch: &Fm85Sketch, m: f64) -> f64 {
    description_length_from_counts(&sketch.column_counts(), sketch.config().k(), m)
}

const MDL_M_MAX: f64 = 4.611_686_018_427_388e18; // 2^62

/// Minimizes a unimodal function over integers in `[1, MDL_M_MAX]` given an
/// initial guess, by geometric bracketing, golden-section narrowing, and a
/// final integer scan. Ties resolve to the smallest m.
pub(crate) fn mdl_search<F: Fn(f64) -> f64>(f: &F, guess: f64) -> f64 {
    let mut lo = (guess / 4.0).max(1.0);
    let mut hi = (guess * 4.0).max(8.0).min(MDL_M_MAX);
    // expand until the minimum is interior
    while lo > 1.0 && f(lo) <= f((lo * 1.5).min(hi)) {
        lo = (lo / 4.0).max(1.0);
    }
    while hi < MDL_M_MAX && f(hi) <= f((hi / 1.5).max(lo)) {
        hi = (hi * 4.0).min(MDL_M_MAX);
    }
    let phi = 0.618_033_988_749_895f64;
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > 2.0 {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = f(x2);
        }
    }
    let start = (lo.floor() - 4.0).max(1.0) as u64;
    let end = (hi.ceil() + 4.0).min(MDL_M_MAX) as u64;
    let mut best_m = start;
    let mut best = f(start as f64);
    for m in start + 1..=end {
        let v = f(m as f64);
        if v < best {
            best = v;
            best_m = m;
        }
    }
    best_m as f64
}

/// MDL estimate from per-column counts: the integer m minimizing the
/// description length.
pub fn mdl_estimate_from_counts(counts: &[u64], k: u64) -> f64 {
    let c: u64 = counts.iter().sum();
    if c == 0 {
        return 0.0;
    }
    let cap = k * counts.len() as u64;
    let guess = icon_inverse((c as f64).min(cap as f64 - 0.5), k)
        .unwrap_or_else(|_| icon_asymptotic(c as f64, k))
        .max(1.0);
    mdl_search(&|m| description_length_from_counts(counts, k, m), guess)
}

/// MDL estimate of a sketch.
pub fn mdl_estimate(sketch: &Fm85Sketch) -> f64 {
    mdl_estimate_from_counts(&sketch.column_counts(), sketch.config().k())
}

/// HIP estimate: the accumulator A. Unavailable after a merge.
pub fn hip_estimate(sketch: &Fm85Sketch) -> Result<f64> {
    if !sketch.hip_valid() {
        return Err(Error::HipUnavailable);
    }
    Ok(sketch.hip_accumulator())
}

/// Conjectured variance of the FM85 HIP estimator.
#[derive(Clone, Copy, Debug)]
pub struct HipVarianceModel {
    pub x: f64,
    pub v: f64,
}

/// V/n^2 = (1-x)^2 / (1-x^2) - 1/n with x = (1/2)^(1/k).
pub fn hip_variance_conjecture(n: f64, k: u64) -> HipVarianceModel {
    let x = 2f64.powf(-1.0 / k as f64);
    let v = n * n * ((1.0 - x) * (1.0 - x) / (1.0 - x * x)) - n;
    HipVarianceModel { x, v }
}

/// Closed-form (bias/n, sigma/n, rmse/n) of the ICON estimator.
pub fn icon_error_model(k: u64) -> (f64, f64, f64) {
    let kf = k as f64;
    let bias = LN2 * LN2 / (2.0 * kf);
    let sigma = LN2 / kf.sqrt();
    (bias, sigma, sigma)
}

const HARMONIC_SWITCH: u64 = 1_000_000;

/// i'th harmonic number; direct summation up to 10^6, asymptotic expansion
/// beyond.
pub fn harmonic(i: u64) -> f64 {
    if i <= HARMONIC_SWITCH {
        // reverse order so small terms accumulate first
        (1..=i).rev().map(|m| 1.0 / m as f64).sum()
    } else {
        let x = i as f64;
        x.ln() + EULER_GAMMA + 1.0 / (2.0 * x) - 1.0 / (12.0 * x * x)
    }
}

/// H(a) - H(b) for a >= b, computed as a range sum when that is cheap enough
/// to avoid cancellation.
fn harmonic_diff(a: u64, b: u64) -> f64 {
    debug_assert!(a >= b);
    if a <= 4 * HARMONIC_SWITCH || a - b <= HARMONIC_SWITCH {
        (b + 1..=a).rev().map(|m| 1.0 / m as f64).sum()
    } else {
        harmonic(a) - harmonic(b)
    }
}

/// Plain bitmap estimator: k (H(k) - H(k-C)).
pub fn bitmap_estimate(c: u64, k: u64) -> Result<f64> {
    if c > k {
        return Err(Error::OutOfRange("bitmap coupon count exceeds k"));
    }
    Ok(k as f64 * harmonic_diff(k, k - c))
}

/// Two-step bitmap estimator: 3k (H(3k) - H(3k-C)).
pub fn tsbm_estimate(c: u64, k: u64) -> Result<f64> {
    if c > 3 * k {
        return Err(Error::OutOfRange("tsbm coupon count exceeds 3k"));
    }
    Ok(3.0 * k as f64 * harmonic_diff(3 * k, 3 * k - c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sketch::{hash_to_coupon, CouponId, SketchConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn expected_coupons_base_cases() {
        assert_eq!(expected_coupons(0.0, 16), 0.0);
        for k in [16u64, 256, 4096] {
            assert!((expected_coupons(1.0, k) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn expected_coupons_matches_asymptote() {
        let k = 256u64;
        let n = k as f64 * 2f64.powi(40);
        let direct = expected_coupons(n, k);
        let asymptote = (k as f64 / LN2) * (n / (ICON_D * k as f64)).ln();
        let ratio = direct / asymptote;
        assert!((0.999..=1.001).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn variance_base_cases() {
        assert_eq!(coupon_count_variance(0.0, 16), 0.0);
        for k in [16u64, 1024] {
            let v = coupon_count_variance(1.0, k);
            let expect = 1.0 - 1.0 / (3.0 * k as f64);
            assert!((v - expect).abs() < 1e-10, "k={k} v={v}");
        }
    }

    #[test]
    fn variance_is_approximately_k_deep_in_stream() {
        let k = 1024u64;
        let n = k as f64 * 2f64.powi(30);
        let ratio = coupon_count_variance(n, k) / k as f64;
        assert!((0.98..=1.02).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn icon_base_cases() {
        assert_eq!(icon_estimate(0, 16).unwrap(), 0.0);
        assert!((icon_estimate(1, 256).unwrap() - 1.0).abs() < 1e-6);
        assert!(icon_estimate(64 * 16, 16).is_err());
    }

    #[test]
    fn icon_matches_closed_form_deep_in_stream() {
        let k = 1u64 << 15;
        let c = 8 * k;
        let n = icon_estimate(c, k).unwrap();
        let ratio = n / icon_asymptotic(c as f64, k);
        assert!((0.99..=1.01).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn icon_asymptotic_examples() {
        let k = 256u64;
        assert!((icon_asymptotic(0.0, k) - ICON_D * 256.0).abs() < 1e-9);
        assert!((icon_asymptotic(256.0, k) - 2.0 * ICON_D * 256.0).abs() < 1e-9);
        assert!((icon_asymptotic(512.0, k) - 4.0 * ICON_D * 256.0).abs() < 1e-9);
    }

    #[test]
    fn icon_inverse_consistency() {
        let k = 64u64;
        for c in (0..=10 * k).step_by(7) {
            let n = icon_estimate(c, k).unwrap();
            let back = expected_coupons(n.round(), k);
            assert!((back - c as f64).abs() < 1.0, "c={c} back={back}");
        }
    }

    #[test]
    fn icon_is_strictly_increasing() {
        let k = 32u64;
        let mut prev = -1.0;
        for c in 0..5 * k {
            let n = icon_estimate(c, k).unwrap();
            assert!(n > prev, "c={c}");
            prev = n;
        }
    }

    #[test]
    fn icon_near_exact_before_collisions() {
        // For n <= sqrt(k) collisions are negligible, so inverting the exact
        // expectation recovers n almost perfectly.
        let k = 1u64 << 12;
        for n in [1u64, 5, 17, 63] {
            let c = expected_coupons(n as f64, k);
            let back = icon_inverse(c, k).unwrap();
            assert!(
                (back - n as f64).abs() / (n as f64) < 0.001,
                "n={n} back={back}"
            );
        }
    }

    #[test]
    fn icon_table_matches_direct_search() {
        let k = 64u64;
        let table = IconTable::build(k, (4 * k) as usize).unwrap();
        assert_eq!(table.lookup(0).unwrap(), 0.0);
        assert!((table.lookup(1).unwrap() - 1.0).abs() < 1e-6);
        let mut prev = -1.0;
        for c in 0..4 * k {
            let t = table.lookup(c).unwrap();
            let d = icon_estimate(c, k).unwrap();
            assert!((t - d).abs() <= 1e-6 * d.max(1.0), "c={c} {t} vs {d}");
            assert!(t > prev);
            prev = t;
        }
        assert!(table.lookup(4 * k).is_err());
    }

    #[test]
    fn description_length_empty_sketch() {
        let k = 16u64;
        let counts = vec![0u64; 64];
        let mut expect = 0.0;
        for j in 1..=64 {
            let p = 1.0 / (k as f64 * 2f64.powi(j));
            expect -= k as f64 * f64::ln_1p(-p) / LN2;
        }
        let got = description_length_from_counts(&counts, k, 1.0);
        assert!((got - expect).abs() < 1e-9);
    }

    #[test]
    fn description_length_single_coupon_unit_k() {
        // One row, coupon in column 1 collected, hypothesis m=1:
        // 1 bit for the collected cell plus -log2(1-2^-j) for each empty one.
        let mut counts = vec![0u64; 64];
        counts[0] = 1;
        let mut expect = 1.0;
        for j in 2..=64 {
            expect -= f64::ln_1p(-2f64.powi(-j)) / LN2;
        }
        let got = description_length_from_counts(&counts, 1, 1.0);
        assert!((got - expect).abs() < 1e-9);
    }

    #[test]
    fn description_length_impossible_is_infinite() {
        let mut counts = vec![0u64; 64];
        counts[0] = 1;
        assert_eq!(
            description_length_from_counts(&counts, 16, 0.0),
            f64::INFINITY
        );
    }

    #[test]
    fn mdl_matches_exhaustive_search_tiny_universe() {
        // k=1 with two columns: 2 coupons. Brute force over m = 1..1000.
        for counts in [[1u64, 0], [0, 1], [1, 1]] {
            let got = mdl_estimate_from_counts(&counts, 1);
            let mut best_m = 1u64;
            let mut best = f64::INFINITY;
            for m in 1..=1000u64 {
                let v = description_length_from_counts(&counts, 1, m as f64);
                if v < best {
                    best = v;
                    best_m = m;
                }
            }
            assert_eq!(got, best_m as f64, "counts {counts:?}");
        }
    }

    #[test]
    fn mdl_zero_and_monotone_under_inclusion() {
        let config = SketchConfig::with_k(16).unwrap();
        let empty = Fm85Sketch::new(config);
        assert_eq!(mdl_estimate(&empty), 0.0);

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let mut small = Fm85Sketch::new(config);
            let mut large = Fm85Sketch::new(config);
            for _ in 0..rng.gen_range(1..200) {
                let c = hash_to_coupon([rng.gen(), rng.gen()], &config);
                small.update(c);
                large.update(c);
            }
            for _ in 0..rng.gen_range(0..200) {
                large.update(hash_to_coupon([rng.gen(), rng.gen()], &config));
            }
            assert!(mdl_estimate(&large) >= mdl_estimate(&small));
        }
    }

    #[test]
    fn merge_consistency_of_set_estimators() {
        let config = SketchConfig::with_k(16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let draws: Vec<[u64; 2]> = (0..400).map(|_| [rng.gen(), rng.gen()]).collect();
        let mut a = Fm85Sketch::new(config);
        let mut b = Fm85Sketch::new(config);
        let mut whole = Fm85Sketch::new(config);
        for (i, d) in draws.iter().enumerate() {
            let c = hash_to_coupon(*d, &config);
            if i < 250 {
                a.update(c);
            } else {
                b.update(c);
            }
            whole.update(c);
        }
        let merged = Fm85Sketch::merge(&a, &b).unwrap();
        assert_eq!(merged.collected_count(), whole.collected_count());
        assert_eq!(
            icon_estimate(merged.collected_count(), 16).unwrap(),
            icon_estimate(whole.collected_count(), 16).unwrap()
        );
        assert_eq!(mdl_estimate(&merged), mdl_estimate(&whole));
        assert!(hip_estimate(&merged).is_err());
        assert!(hip_estimate(&whole).is_ok());
    }

    #[test]
    fn hip_base_cases() {
        let config = SketchConfig::with_k(16).unwrap();
        let mut s = Fm85Sketch::new(config);
        assert_eq!(hip_estimate(&s).unwrap(), 0.0);
        s.update(CouponId { col: 1, row: 0 });
        assert_eq!(hip_estimate(&s).unwrap(), 1.0);
    }

    #[test]
    fn hip_variance_closed_forms() {
        // k=1: x = 1/2 so V/n^2 = 1/3 - 1/n.
        let n = 1000.0;
        let m = hip_variance_conjecture(n, 1);
        assert!((m.x - 0.5).abs() < 1e-15);
        assert!((m.v / (n * n) - (1.0 / 3.0 - 1.0 / n)).abs() < 1e-12);
        // large k: V/n^2 approaches (ln 2)/(2k) from below-ish
        for k in [1u64 << 10, 1 << 14] {
            let big = 1e12;
            let m = hip_variance_conjecture(big, k);
            let bound = LN2 / (2.0 * k as f64);
            let rel = m.v / (big * big);
            assert!(rel <= bound * 1.001, "k={k} rel={rel} bound={bound}");
            assert!(rel >= bound * 0.99, "k={k} rel={rel} bound={bound}");
        }
    }

    #[test]
    fn icon_error_model_values() {
        let (b, s, r) = icon_error_model(16);
        assert!((16.0 * b - 0.240_226_50).abs() < 1e-7);
        assert!((4.0 * s - 0.693_147_18).abs() < 1e-7);
        assert_eq!(s, r);
        let (_, s, _) = icon_error_model(4096);
        assert!((s - 0.010830).abs() < 5e-6);
    }

    #[test]
    fn harmonic_values() {
        assert_eq!(harmonic(0), 0.0);
        assert_eq!(harmonic(1), 1.0);
        assert!((harmonic(3) - 11.0 / 6.0).abs() < 1e-15);
        // direct sum and expansion agree at the switch point
        let direct: f64 = (1..=HARMONIC_SWITCH).rev().map(|m| 1.0 / m as f64).sum();
        let x = HARMONIC_SWITCH as f64;
        let expansion = x.ln() + EULER_GAMMA + 1.0 / (2.0 * x) - 1.0 / (12.0 * x * x);
        assert!((direct - expansion).abs() / direct < 1e-12);
    }

    #[test]
    fn bitmap_and_tsbm_examples() {
        assert!((tsbm_estimate(1, 1).unwrap() - 1.0).abs() < 1e-12);
        // k (H(k) - H(0)) = k H(k); k=3 -> 3 * 11/6 = 5.5
        assert!((bitmap_estimate(3, 3).unwrap() - 5.5).abs() < 1e-12);
        // log approximation
        let k = 1024u64;
        let est = bitmap_estimate(512, k).unwrap();
        let approx = k as f64 * (k as f64 / (k - 512) as f64).ln();
        assert!((est / approx - 1.0).abs() < 0.01);
        assert!(bitmap_estimate(k + 1, k).is_err());
        assert!(tsbm_estimate(3 * k + 1, k).is_err());
    }
}
