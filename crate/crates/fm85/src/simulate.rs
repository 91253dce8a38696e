//! Exponentially accelerated coupon-collection simulation: instead of
//! feeding n draws one by one, draw the coupon discovery order with
//! exponential clocks and then the geometric waiting time before each novel
//! coupon. Cost is O(M k log(M k)) regardless of how deep the stream runs.

use rand::Rng;

use crate::error::{Error, Result};
use crate::estimators::{icon_estimate, mdl_estimate_from_counts, IconTable};
use crate::hll::{hll_estimate_from_counts, hll_mdl_from_counts};
use crate::sketch::{hash_to_coupon, CouponId, Fm85Sketch, SketchConfig};

#[derive(Clone, Copy, Debug)]
pub struct SimulatorConfig {
    pub k: u64,
    /// Number of instantiated columns M; coupons right of M are treated as
    /// never collected (their probability mass still counts toward waiting
    /// times).
    pub num_columns: u32,
    /// Simulation stops once n exceeds k * 2^stop_exponent.
    pub stop_exponent: u32,
    pub seed: u64,
}

impl SimulatorConfig {
    pub fn new(k: u64, num_columns: u32, stop_exponent: u32, seed: u64) -> Result<Self> {
        if k == 0 || !k.is_power_of_two() {
            return Err(Error::InvalidConfig("k must be a power of two >= 1"));
        }
        if num_columns <= stop_exponent + 10 {
            return Err(Error::InvalidConfig(
                "num_columns must exceed stop_exponent + 10",
            ));
        }
        if k.trailing_zeros() + num_columns > 120 {
            return Err(Error::InvalidConfig("k * 2^num_columns overflows"));
        }
        Ok(Self {
            k,
            num_columns,
            stop_exponent,
            seed,
        })
    }

    pub fn desk_default(k: u64, seed: u64) -> Result<Self> {
        Self::new(k, 96, 80, seed)
    }

    /// Stream length at which simulation stops: k * 2^stop_exponent.
    pub fn limit(&self) -> u128 {
        (self.k as u128) << self.stop_exponent
    }
}

/// Ordered coupon-collection events of one simulated stream.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscoveryTrace {
    pub k: u64,
    /// (coupon, n at which it was collected); n strictly increasing.
    pub events: Vec<(CouponId, u128)>,
    /// Every n up to and including this value is covered by the trace.
    pub limit: u128,
}

/// Draws the order in which coupons would be discovered: coupon i gets clock
/// E_i / p_i with E_i a unit exponential, sorted ascending.
pub fn discovery_order<R: Rng>(config: &SimulatorConfig, rng: &mut R) -> Vec<CouponId> {
    let mut clocked: Vec<(f64, CouponId)> =
        Vec::with_capacity(config.num_columns as usize * config.k as usize);
    for col in 1..=config.num_columns {
        // 1/p = k * 2^col
        let inv_p = config.k as f64 * 2f64.powi(col as i32);
        for row in 0..config.k as u32 {
            let u: f64 = 1.0 - rng.gen::<f64>(); // (0, 1]
            let clock = -u.ln() * inv_p;
            clocked.push((clock, CouponId { col, row }));
        }
    }
    clocked.sort_by(|a, b| a.0.total_cmp(&b.0));
    clocked.into_iter().map(|(_, c)| c).collect()
}

/// Walks the discovery order, drawing the geometric waiting time before each
/// novel coupon. The remaining-probability numerator is maintained exactly
/// over the dyadic denominator k * 2^M.
pub fn simulate_trace<R: Rng>(config: &SimulatorConfig, rng: &mut R) -> DiscoveryTrace {
    let order = discovery_order(config, rng);
    let m = config.num_columns;
    let denom: u128 = (config.k as u128) << m;
    // all coupons uncollected, tail columns included: total mass is exactly 1
    let mut r_num: u128 = denom;
    let mut n: u128 = 0;
    let limit = config.limit();
    let mut events = Vec::new();
    for c in order {
        let wait = if r_num == denom {
            1u128
        } else {
            let r = r_num as f64 / denom as f64;
            let u: f64 = 1.0 - rng.gen::<f64>();
            let t = (u.ln() / f64::ln_1p(-r)).floor() + 1.0;
            t as u128
        };
        n += wait;
        events.push((c, n));
        r_num -= 1u128 << (m - c.col);
        if n > limit {
            break;
        }
    }
    DiscoveryTrace {
        k: config.k,
        events,
        limit,
    }
}

/// Validation oracle: n literal draws through the hash path.
pub fn naive_simulate<R: Rng>(n: u64, config: &SketchConfig, rng: &mut R) -> Fm85Sketch {
    let mut s = Fm85Sketch::new(*config);
    for _ in 0..n {
        s.update(hash_to_coupon([rng.gen(), rng.gen()], config));
    }
    s
}

/// One checkpoint's worth of estimates.
#[derive(Clone, Copy, Debug)]
pub struct EstimateRow {
    pub n: u128,
    pub collected: u64,
    pub icon: f64,
    pub mdl: Option<f64>,
    pub hip: f64,
    pub hll: f64,
    pub hll_mdl: Option<f64>,
    pub hll_hip: f64,
}

#[derive(Clone, Copy, Default)]
pub struct ReplayOptions<'a> {
    /// MDL estimates are two orders of magnitude slower; off by default.
    pub include_mdl: bool,
    /// Optional precomputed ICON inverse shared across trials.
    pub icon_table: Option<&'a IconTable>,
}

/// Reconstructs sketch state at each checkpoint from the trace prefix and
/// evaluates the six estimators. Checkpoints must be ascending and within
/// the trace's covered range.
pub fn replay_estimators(
    trace: &DiscoveryTrace,
    checkpoints: &[u128],
    options: &ReplayOptions<'_>,
) -> Result<Vec<EstimateRow>> {
    let k = trace.k;
    if let Some(table) = options.icon_table {
        if table.k() != k {
            return Err(Error::ConfigMismatch);
        }
    }
    if checkpoints.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::OutOfRange("checkpoints must be ascending"));
    }
    if checkpoints.last().is_some_and(|&n| n > trace.limit) {
        return Err(Error::CheckpointBeyondTrace);
    }
    // incremental state; columns clamp to 64 like the real hash path
    let mut row_masks = vec![0u64; k as usize];
    let mut col_counts = vec![0u64; 64];
    let mut collected = 0u64;
    let mut fm_a = 0.0f64;
    let mut fm_r = 1.0f64;
    let mut registers = vec![0u8; k as usize];
    let mut reg_counts = vec![0u64; 65];
    reg_counts[0] = k;
    let mut hll_a = 0.0f64;
    let mut hll_r = 1.0f64;

    let mut out = Vec::with_capacity(checkpoints.len());
    let mut next = 0usize;
    for &checkpoint in checkpoints {
        while next < trace.events.len() && trace.events[next].1 <= checkpoint {
            let (c, _) = trace.events[next];
            next += 1;
            let col = c.col.min(64);
            let p = 1.0 / (k as f64 * 2f64.powi(col as i32));
            let mask = 1u64 << (col - 1);
            if row_masks[c.row as usize] & mask == 0 {
                row_masks[c.row as usize] |= mask;
                col_counts[(col - 1) as usize] += 1;
                collected += 1;
                fm_a += 1.0 / fm_r;
                fm_r -= p;
            }
            let old = registers[c.row as usize];
            if col as u8 > old {
                registers[c.row as usize] = col as u8;
                reg_counts[old as usize] -= 1;
                reg_counts[col as usize] += 1;
                hll_a += 1.0 / hll_r;
                hll_r -= (2f64.powi(-(old as i32)) - 2f64.powi(-(col as i32))) / k as f64;
            }
        }
        let icon = {
            let c = collected.min(64 * k - 1);
            match options.icon_table {
                Some(t) if (c as usize) < t.capacity() => t.lookup(c)?,
                _ => icon_estimate(c, k)?,
            }
        };
        let mdl = options
            .include_mdl
            .then(|| mdl_estimate_from_counts(&col_counts, k));
        let hll = hll_estimate_from_counts(&reg_counts, k);
        let hll_mdl = options
            .include_mdl
            .then(|| hll_mdl_from_counts(&reg_counts, k, 64));
        out.push(EstimateRow {
            n: checkpoint,
            collected,
            icon,
            mdl,
            hip: fm_a,
            hll,
            hll_mdl,
            hll_hip: hll_a,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::expected_coupons;
    use crate::hll::{hll_estimate, hll_hip_estimate, HllSketch};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn config_validation() {
        assert!(SimulatorConfig::new(64, 96, 80, 0).is_ok());
        assert!(SimulatorConfig::new(0, 96, 80, 0).is_err());
        assert!(SimulatorConfig::new(48, 96, 80, 0).is_err());
        assert!(SimulatorConfig::new(64, 90, 80, 0).is_err());
        assert!(SimulatorConfig::new(1 << 30, 96, 80, 0).is_err());
    }

    #[test]
    fn order_is_a_permutation() {
        let config = SimulatorConfig::new(16, 20, 8, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let order = discovery_order(&config, &mut rng);
        assert_eq!(order.len(), 20 * 16);
        let set: std::collections::HashSet<_> = order.iter().collect();
        assert_eq!(set.len(), order.len());
    }

    #[test]
    fn equal_rates_are_symmetric() {
        // two coupons with the same probability: each first half the time
        let config = SimulatorConfig::new(2, 12, 1, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let trials = 10_000;
        let mut first_a = 0u32;
        for _ in 0..trials {
            let order = discovery_order(&config, &mut rng);
            let first = order
                .iter()
                .find(|c| c.col == 1)
                .expect("column 1 present");
            if first.row == 0 {
                first_a += 1;
            }
        }
        let freq = first_a as f64 / trials as f64;
        assert!((freq - 0.5).abs() < 0.02, "freq {freq}");
    }

    #[test]
    fn competing_exponentials_probability() {
        // k=1, two columns: p_A = 1/2, p_B = 1/4; A first with prob 2/3
        // bypasses the M > stop+10 rule: this micro-universe only needs the
        // ordering, never a trace
        let config = SimulatorConfig {
            k: 1,
            num_columns: 2,
            stop_exponent: 0,
            seed: 0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let trials = 100_000;
        let mut a_first = 0u32;
        for _ in 0..trials {
            let order = discovery_order(&config, &mut rng);
            if order[0].col == 1 {
                a_first += 1;
            }
        }
        let freq = a_first as f64 / trials as f64;
        assert!((freq - 2.0 / 3.0).abs() < 0.01, "freq {freq}");
    }

    #[test]
    fn first_wait_is_always_one() {
        let config = SimulatorConfig::new(16, 20, 8, 0).unwrap();
        for seed in 0..50 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let trace = simulate_trace(&config, &mut rng);
            assert_eq!(trace.events[0].1, 1);
        }
    }

    #[test]
    fn traces_are_reproducible_and_well_formed() {
        let config = SimulatorConfig::new(32, 40, 16, 9).unwrap();
        let mut r1 = ChaCha8Rng::seed_from_u64(config.seed);
        let mut r2 = ChaCha8Rng::seed_from_u64(config.seed);
        let a = simulate_trace(&config, &mut r1);
        let b = simulate_trace(&config, &mut r2);
        assert_eq!(a, b);
        assert!(a.events.len() <= 40 * 32);
        assert!(a.events.windows(2).all(|w| w[0].1 < w[1].1));
        let last = a.events.last().unwrap().1;
        assert!(last > a.limit || a.events.len() == 40 * 32);
    }

    #[test]
    fn trace_mean_coupon_count_matches_expectation() {
        let k = 64u64;
        let config = SimulatorConfig::new(k, 22, 11, 0).unwrap();
        let trials = 3000;
        let checkpoints = [k as u128, 32 * k as u128, 1024 * k as u128];
        let mut sums = [0.0f64; 3];
        let mut sumsq = [0.0f64; 3];
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..trials {
            let trace = simulate_trace(&config, &mut rng);
            let rows =
                replay_estimators(&trace, &checkpoints, &ReplayOptions::default()).unwrap();
            for (i, row) in rows.iter().enumerate() {
                sums[i] += row.collected as f64;
                sumsq[i] += (row.collected as f64).powi(2);
            }
        }
        for (i, &cp) in checkpoints.iter().enumerate() {
            let mean = sums[i] / trials as f64;
            let var = (sumsq[i] / trials as f64 - mean * mean).max(0.0);
            let se = (var / trials as f64).sqrt();
            let expect = expected_coupons(cp as f64, k);
            assert!(
                (mean - expect).abs() < 4.0 * se,
                "cp={cp} mean={mean} expect={expect} se={se}"
            );
        }
    }

    #[test]
    fn accelerated_and_naive_coupon_distributions_agree() {
        // two-sample KS test on C at n=1000, k=64
        let k = 64u64;
        let sketch_config = SketchConfig::with_k(k).unwrap();
        let sim_config = SimulatorConfig::new(k, 30, 5, 0).unwrap();
        let trials = 1500;
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let mut naive: Vec<f64> = Vec::with_capacity(trials);
        let mut fast: Vec<f64> = Vec::with_capacity(trials);
        for _ in 0..trials {
            naive.push(naive_simulate(1000, &sketch_config, &mut rng).collected_count() as f64);
            let trace = simulate_trace(&sim_config, &mut rng);
            let row = &replay_estimators(&trace, &[1000], &ReplayOptions::default()).unwrap()[0];
            fast.push(row.collected as f64);
        }
        naive.sort_by(f64::total_cmp);
        fast.sort_by(f64::total_cmp);
        let mut d: f64 = 0.0;
        let (mut i, mut j) = (0usize, 0usize);
        while i < naive.len() && j < fast.len() {
            if naive[i] <= fast[j] {
                i += 1;
            } else {
                j += 1;
            }
            let cdf_gap = i as f64 / naive.len() as f64 - j as f64 / fast.len() as f64;
            d = d.max(cdf_gap.abs());
        }
        let ne = (naive.len() * fast.len()) as f64 / (naive.len() + fast.len()) as f64;
        let lambda = d * ne.sqrt();
        // Kolmogorov asymptotic tail
        let p: f64 = (1..=100)
            .map(|m| {
                2.0 * (-1.0f64).powi(m + 1) * (-2.0 * (m as f64 * lambda).powi(2)).exp()
            })
            .sum();
        assert!(p.clamp(0.0, 1.0) > 0.001, "d={d} lambda={lambda} p={p}");
    }

    #[test]
    fn naive_hip_mean_is_unbiased() {
        let config = SketchConfig::with_k(64).unwrap();
        let n = 2000u64;
        let trials = 200;
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..trials {
            let s = naive_simulate(n, &config, &mut rng);
            let e = s.hip_accumulator();
            sum += e;
            sumsq += e * e;
        }
        let mean = sum / trials as f64;
        let var = (sumsq / trials as f64 - mean * mean).max(0.0);
        let se = (var / trials as f64).sqrt();
        assert!((mean - n as f64).abs() < 4.0 * se, "mean={mean} se={se}");
        assert_eq!(
            naive_simulate(0, &config, &mut rng).collected_count(),
            0
        );
    }

    #[test]
    fn replay_matches_direct_sketch_construction() {
        let k = 64u64;
        let config = SimulatorConfig::new(k, 24, 12, 0).unwrap();
        let sketch_config = SketchConfig::with_k(k).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        for _ in 0..20 {
            let trace = simulate_trace(&config, &mut rng);
            let checkpoint = trace.limit / 2;
            let rows = replay_estimators(
                &trace,
                &[checkpoint],
                &ReplayOptions {
                    include_mdl: true,
                    icon_table: None,
                },
            )
            .unwrap();
            let row = &rows[0];
            // feed the same novel-coupon sequence into real sketches
            let mut fm = Fm85Sketch::new(sketch_config);
            let mut hll = HllSketch::new(sketch_config);
            for &(c, n) in &trace.events {
                if n > checkpoint {
                    break;
                }
                let clamped = CouponId {
                    col: c.col.min(64),
                    row: c.row,
                };
                fm.update(clamped);
                hll.update_register(clamped.row, clamped.col as u8);
            }
            assert_eq!(row.collected, fm.collected_count());
            assert_eq!(row.hip, fm.hip_accumulator());
            assert_eq!(
                row.icon,
                icon_estimate(fm.collected_count().min(64 * k - 1), k).unwrap()
            );
            assert_eq!(
                row.mdl.unwrap(),
                mdl_estimate_from_counts(&fm.column_counts(), k)
            );
            assert_eq!(row.hll, hll_estimate(&hll));
            assert_eq!(row.hll_hip, hll_hip_estimate(&hll).unwrap());
        }
    }

    #[test]
    fn replay_edge_cases() {
        let config = SimulatorConfig::new(16, 20, 8, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        let trace = simulate_trace(&config, &mut rng);
        // checkpoint 0 precedes every event
        let rows = replay_estimators(&trace, &[0], &ReplayOptions::default()).unwrap();
        assert_eq!(rows[0].collected, 0);
        assert_eq!(rows[0].icon, 0.0);
        assert_eq!(rows[0].hip, 0.0);
        assert_eq!(rows[0].hll, 0.0);
        // beyond the covered range
        assert!(matches!(
            replay_estimators(&trace, &[trace.limit + 1], &ReplayOptions::default()),
            Err(Error::CheckpointBeyondTrace)
        ));
        // non-ascending
        assert!(replay_estimators(&trace, &[5, 3], &ReplayOptions::default()).is_err());
        // ordering of distinct checkpoint lists agrees pointwise
        let a = replay_estimators(&trace, &[10, 100, 1000], &ReplayOptions::default()).unwrap();
        let b = replay_estimators(&trace, &[100], &ReplayOptions::default()).unwrap();
        assert_eq!(a[1].collected, b[0].collected);
        assert_eq!(a[1].hip, b[0].hip);
    }
}
