//! Flat-region measurement of Error and Bias Constants with quadratic
//! extrapolation in 1/k.
//!
//! For each k, many accelerated traces are replayed at checkpoints
//! n = k*2^e spread over the flat region; sqrt(k)*RMSE/n (or k*bias/n) is
//! averaged over checkpoints, and the per-k values are extrapolated to
//! k = infinity by least squares against 1/k.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimators::IconTable;
use crate::simulate::{replay_estimators, simulate_trace, ReplayOptions, SimulatorConfig};

/// Number of trial groups used for subsampling uncertainty (and the unit of
/// deterministic parallelism).
const GROUPS: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Estimator {
    Icon,
    Mdl,
    Hip,
    Hll,
    HllMdl,
    HllHip,
    /// Returns the true n; for harness self-tests.
    Oracle,
}

impl Estimator {
    pub const ALL: [Estimator; 6] = [
        Estimator::Icon,
        Estimator::Mdl,
        Estimator::Hip,
        Estimator::Hll,
        Estimator::HllMdl,
        Estimator::HllHip,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Estimator::Icon => "fm85-icon",
            Estimator::Mdl => "fm85-mdl",
            Estimator::Hip => "fm85-hip",
            Estimator::Hll => "hll",
            Estimator::HllMdl => "hll-mdl",
            Estimator::HllHip => "hll-hip",
            Estimator::Oracle => "oracle",
        }
    }

    pub fn parse(name: &str) -> Result<Estimator> {
        Ok(match name {
            "fm85-icon" | "icon" => Estimator::Icon,
            "fm85-mdl" | "mdl" => Estimator::Mdl,
            "fm85-hip" | "hip" => Estimator::Hip,
            "hll" => Estimator::Hll,
            "hll-mdl" => Estimator::HllMdl,
            "hll-hip" => Estimator::HllHip,
            "oracle" => Estimator::Oracle,
            _ => return Err(Error::InvalidConfig("unknown estimator name")),
        })
    }

    fn needs_mdl(&self) -> bool {
        matches!(self, Estimator::Mdl | Estimator::HllMdl)
    }
}

/// Checkpoint layout n = k*2^e for e in [lo, hi], `per_octave` points per
/// doubling.
#[derive(Clone, Copy, Debug)]
pub struct FlatRegionSpec {
    pub lo_exponent: u32,
    pub hi_exponent: u32,
    pub per_octave: u32,
}

impl FlatRegionSpec {
    pub fn new(lo_exponent: u32, hi_exponent: u32, per_octave: u32) -> Result<Self> {
        if lo_exponent < 10 || hi_exponent <= lo_exponent || per_octave == 0 {
            return Err(Error::InvalidConfig(
                "flat region needs 10 <= lo < hi and per_octave >= 1",
            ));
        }
        Ok(Self {
            lo_exponent,
            hi_exponent,
            per_octave,
        })
    }

    /// Desk-scale default: e in [20, 40], 4 checkpoints per octave.
    pub fn desk_default() -> Self {
        Self {
            lo_exponent: 20,
            hi_exponent: 40,
            per_octave: 4,
        }
    }

    pub fn checkpoints(&self, k: u64) -> Vec<u128> {
        let steps = (self.hi_exponent - self.lo_exponent) * self.per_octave;
        let mut out: Vec<u128> = (0..=steps)
            .map(|i| {
                let e = self.lo_exponent as f64 + i as f64 / self.per_octave as f64;
                (k as f64 * 2f64.powf(e)).round() as u128
            })
            .collect();
        out.dedup();
        out
    }

    fn simulator_config(&self, k: u64, seed: u64) -> Result<SimulatorConfig> {
        // stop 5 octaves past the last checkpoint, columns 11 past that
        SimulatorConfig::new(k, self.hi_exponent + 16, self.hi_exponent + 5, seed)
    }
}

/// A flat-region measurement with its trial-subsampling uncertainty.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Measurement {
    pub value: f64,
    pub uncertainty: f64,
}

/// Both flat-region statistics of every estimator from one set of trials.
pub struct FlatRegionStats {
    pub k: u64,
    pub trials: u64,
    estimators: Vec<Estimator>,
    pub error: Vec<Measurement>,
    pub bias: Vec<Measurement>,
}

impl FlatRegionStats {
    fn index(&self, estimator: Estimator) -> Option<usize> {
        self.estimators.iter().position(|&e| e == estimator)
    }

    pub fn error_of(&self, estimator: Estimator) -> Option<Measurement> {
        self.index(estimator).map(|i| self.error[i])
    }

    pub fn bias_of(&self, estimator: Estimator) -> Option<Measurement> {
        self.index(estimator).map(|i| self.bias[i])
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

fn trial_seed(seed: u64, trial: u64) -> u64 {
    splitmix64(seed ^ splitmix64(trial.wrapping_add(0x5151_5151)))
}

struct GroupAccumulator {
    /// [estimator][checkpoint] sums of eps and eps^2
    sum_eps: Vec<Vec<f64>>,
    sum_eps2: Vec<Vec<f64>>,
    count: u64,
}

/// Measures the flat-region error and bias of the given estimators at one k,
/// over `trials` accelerated traces. Trials are split into 16 deterministic
/// groups (the parallel unit and the subsampling unit); uncertainty is the
/// standard error of the per-group statistics.
pub fn flat_region_stats(
    estimators: &[Estimator],
    k: u64,
    trials: u64,
    region: &FlatRegionSpec,
    seed: u64,
) -> Result<FlatRegionStats> {
    if trials < 100 {
        return Err(Error::InvalidConfig("at least 100 trials required"));
    }
    let checkpoints = region.checkpoints(k);
    let include_mdl = estimators.iter().any(Estimator::needs_mdl);
    let table = IconTable::build(k, (64 * k) as usize)?;
    let base = trials / GROUPS as u64;
    let extra = trials % GROUPS as u64;
    let groups: Vec<GroupAccumulator> = (0..GROUPS as u64)
        .into_par_iter()
        .map(|g| {
            let start = g * base + g.min(extra);
            let len = base + u64::from(g < extra);
            let mut acc = GroupAccumulator {
                sum_eps: vec![vec![0.0; checkpoints.len()]; estimators.len()],
                sum_eps2: vec![vec![0.0; checkpoints.len()]; estimators.len()],
                count: len,
            };
            let options = ReplayOptions {
                include_mdl,
                icon_table: Some(&table),
            };
            let config = region
                .simulator_config(k, seed)
                .expect("validated region/config");
            for t in start..start + len {
                let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(seed, t));
                let trace = simulate_trace(&config, &mut rng);
                let rows = replay_estimators(&trace, &checkpoints, &options)
                    .expect("checkpoints within region");
                for (cp, row) in rows.iter().enumerate() {
                    let n = row.n as f64;
                    for (ei, est) in estimators.iter().enumerate() {
                        let est_value = match est {
                            Estimator::Icon => row.icon,
                            Estimator::Mdl => row.mdl.unwrap(),
                            Estimator::Hip => row.hip,
                            Estimator::Hll => row.hll,
                            Estimator::HllMdl => row.hll_mdl.unwrap(),
                            Estimator::HllHip => row.hll_hip,
                            Estimator::Oracle => n,
                        };
                        let eps = (est_value - n) / n;
                        acc.sum_eps[ei][cp] += eps;
                        acc.sum_eps2[ei][cp] += eps * eps;
                    }
                }
            }
            acc
        })
        .collect();

    let kf = k as f64;
    let ncp = checkpoints.len() as f64;
    let mut error = Vec::with_capacity(estimators.len());
    let mut bias = Vec::with_capacity(estimators.len());
    for ei in 0..estimators.len() {
        // overall statistics pool every trial
        let mut err_total = 0.0;
        let mut bias_total = 0.0;
        for cp in 0..checkpoints.len() {
            let s2: f64 = groups.iter().map(|g| g.sum_eps2[ei][cp]).sum();
            let s1: f64 = groups.iter().map(|g| g.sum_eps[ei][cp]).sum();
            err_total += (kf * s2 / trials as f64).sqrt();
            bias_total += kf * s1 / trials as f64;
        }
        let err_value = err_total / ncp;
        let bias_value = bias_total / ncp;
        // per-group replicas for the uncertainty
        let mut err_groups = Vec::with_capacity(GROUPS);
        let mut bias_groups = Vec::with_capacity(GROUPS);
        for g in &groups {
            let mut e = 0.0;
            let mut b = 0.0;
            for cp in 0..checkpoints.len() {
                e += (kf * g.sum_eps2[ei][cp] / g.count as f64).sqrt();
                b += kf * g.sum_eps[ei][cp] / g.count as f64;
            }
            err_groups.push(e / ncp);
            bias_groups.push(b / ncp);
        }
        error.push(Measurement {
            value: err_value,
            uncertainty: standard_error(&err_groups),
        });
        bias.push(Measurement {
            value: bias_value,
            uncertainty: standard_error(&bias_groups),
        });
    }
    Ok(FlatRegionStats {
        k,
        trials,
        estimators: estimators.to_vec(),
        error,
        bias,
    })
}

fn standard_error(groups: &[f64]) -> f64 {
    let g = groups.len() as f64;
    let mean = groups.iter().sum::<f64>() / g;
    let var = groups.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (g - 1.0);
    (var / g).sqrt()
}

/// Flat-region sqrt(k)*RMSE/n averaged over checkpoints.
pub fn flat_region_error(
    estimator: Estimator,
    k: u64,
    trials: u64,
    region: &FlatRegionSpec,
    seed: u64,
) -> Result<Measurement> {
    let stats = flat_region_stats(&[estimator], k, trials, region, seed)?;
    Ok(stats.error[0])
}

/// Flat-region k*mean(n_hat - n)/n averaged over checkpoints.
pub fn flat_region_bias(
    estimator: Estimator,
    k: u64,
    trials: u64,
    region: &FlatRegionSpec,
    seed: u64,
) -> Result<Measurement> {
    let stats = flat_region_stats(&[estimator], k, trials, region, seed)?;
    Ok(stats.bias[0])
}

/// Least-squares quadratic fit y = c0 + c1 x + c2 x^2.
#[derive(Clone, Debug, Serialize)]
pub struct FitResult {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub residual_rms: f64,
    /// (1/k, measured value) inputs.
    pub points: Vec<(f64, f64)>,
}

/// Ordinary least squares.
pub fn fit_quadratic(points: &[(f64, f64)]) -> Result<FitResult> {
    let weights = vec![1.0; points.len()];
    fit_quadratic_weighted(points, &weights)
}

/// Weighted least squares: each point contributes with the given weight
/// (use 1/sigma^2 when per-point uncertainties are available).
pub fn fit_quadratic_weighted(points: &[(f64, f64)], weights: &[f64]) -> Result<FitResult> {
    assert_eq!(points.len(), weights.len());
    let mut xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    if xs.len() < 4 {
        return Err(Error::RankDeficient);
    }
    // scale x to its maximum for conditioning
    let scale = points.iter().map(|p| p.0.abs()).fold(0.0f64, f64::max);
    if scale == 0.0 {
        return Err(Error::RankDeficient);
    }
    let mut ata = [[0.0f64; 3]; 3];
    let mut atb = [0.0f64; 3];
    for (&(x, y), &w) in points.iter().zip(weights) {
        let u = x / scale;
        let basis = [1.0, u, u * u];
        for i in 0..3 {
            for j in 0..3 {
                ata[i][j] += w * basis[i] * basis[j];
            }
            atb[i] += w * basis[i] * y;
        }
    }
    let sol = solve3(ata, atb)?;
    let c0 = sol[0];
    let c1 = sol[1] / scale;
    let c2 = sol[2] / (scale * scale);
    let mut ss = 0.0;
    for &(x, y) in points {
        let r = y - (c0 + c1 * x + c2 * x * x);
        ss += r * r;
    }
    Ok(FitResult {
        c0,
        c1,
        c2,
        residual_rms: (ss / points.len() as f64).sqrt(),
        points: points.to_vec(),
    })
}

fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Result<[f64; 3]> {
    // Gaussian elimination with partial pivoting
    for col in 0..3 {
        let pivot = (col..3)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        if a[pivot][col].abs() < 1e-14 {
            return Err(Error::RankDeficient);
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..3 {
            let f = a[row][col] / a[col][col];
            for c in col..3 {
                a[row][c] -= f * a[col][c];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0f64; 3];
    for row in (0..3).rev() {
        let mut v = b[row];
        for c in row + 1..3 {
            v -= a[row][c] * x[c];
        }
        x[row] = v / a[row][row];
    }
    Ok(x)
}

/// Trial schedule: small k needs more trials because the 1/k lever arm
/// amplifies measurement noise into the fitted constants; 2^23/k keeps the
/// per-point contribution to c1 roughly uniform.
pub fn scaled_trials(base: u64, k: u64) -> u64 {
    base.max((1u64 << 23) / k)
}

/// One extrapolated constant: per-k flat-region measurements fitted
/// against 1/k.
pub struct ConstantRun {
    pub fit: FitResult,
    pub measurements: Vec<(u64, Measurement)>,
}

fn constant_run(
    estimator: Estimator,
    k_list: &[u64],
    trials: u64,
    region: &FlatRegionSpec,
    seed: u64,
    bias: bool,
    scale_trials: bool,
) -> Result<ConstantRun> {
    let k_min = *k_list.iter().min().ok_or(Error::RankDeficient)?;
    let k_max = *k_list.iter().max().unwrap();
    if k_max < 4 * k_min {
        return Err(Error::InvalidConfig("k_list must span at least 2 octaves"));
    }
    let mut points = Vec::with_capacity(k_list.len());
    let mut weights = Vec::with_capacity(k_list.len());
    let mut measurements = Vec::with_capacity(k_list.len());
    for &k in k_list {
        let t = if scale_trials {
            scaled_trials(trials, k)
        } else {
            trials
        };
        let stats = flat_region_stats(&[estimator], k, t, region, seed ^ splitmix64(k))?;
        let m = if bias { stats.bias[0] } else { stats.error[0] };
        points.push((1.0 / k as f64, m.value));
        weights.push(1.0 / m.uncertainty.max(1e-12).powi(2));
        measurements.push((k, m));
    }
    // Error fits use plain least squares: inverse-variance weighting lets
    // the tightly measured small-k points dominate and leak their
    // higher-order 1/k structure into c1. Bias-point uncertainties span a
    // ~k-fold range instead, so there weighting is what keeps the noisiest
    // large-k points from dominating c0.
    let fit = if bias {
        fit_quadratic_weighted(&points, &weights)?
    } else {
        fit_quadratic(&points)?
    };
    Ok(ConstantRun { fit, measurements })
}

/// Error Constant: extrapolated c0 of sqrt(k)*RMSE/n.
pub fn error_constant(
    estimator: Estimator,
    k_list: &[u64],
    trials: u64,
    region: &FlatRegionSpec,
    seed: u64,
) -> Result<ConstantRun> {
    constant_run(estimator, k_list, trials, region, seed, false, true)
}

/// Bias Constant: extrapolated c0 of k*bias/n.
pub fn bias_constant(
    estimator: Estimator,
    k_list: &[u64],
    trials: u64,
    region: &FlatRegionSpec,
    seed: u64,
) -> Result<ConstantRun> {
    constant_run(estimator, k_list, trials, region, seed, true, true)
}
