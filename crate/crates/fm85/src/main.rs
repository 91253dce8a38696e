//! `fm85` command line: sketch lifecycle (update / estimate / merge / info)
//! plus the measurement experiments (entropy / simulate / fit / compare-hll).

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, BufRead, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use fm85::compress::{compress, decompress, CompressedSketch, FLAG_HIP_VALID};
use fm85::entropy::{entropy_curve, EntropyKind};
use fm85::estimators::{hip_estimate, icon_estimate, mdl_estimate};
use fm85::harness::{
    bias_constant, error_constant, Estimator, FlatRegionSpec,
};
use fm85::hash::{hash128, hash_u64};
use fm85::simulate::{replay_estimators, simulate_trace, ReplayOptions, SimulatorConfig};
use fm85::sketch::{hash_to_coupon, CouponId, Fm85Sketch, SketchConfig};
use fm85::Error;

const EXIT_USAGE: u8 = 2;
const EXIT_CORRUPT: u8 = 3;
const EXIT_REFUSED: u8 = 4;

#[derive(Parser)]
#[command(name = "fm85", about = "FM85 coupon-collection cardinality sketch")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Stream items into a sketch file, creating it if needed.
    Update(UpdateArgs),
    /// Print cardinality estimates for a sketch file.
    Estimate(EstimateArgs),
    /// Union two sketch files (HIP becomes unavailable).
    Merge(MergeArgs),
    /// Print a sketch file's header and summary statistics.
    Info(InfoArgs),
    /// Emit the per-row entropy curve and its mean constant.
    Entropy(EntropyArgs),
    /// Run accelerated traces and emit per-checkpoint estimates as CSV.
    Simulate(SimulateArgs),
    /// Measure an error or bias constant by flat-region extrapolation.
    Fit(FitArgs),
    /// FM85 at k versus HLL at 2k, small-n and flat-region checkpoints.
    CompareHll(CompareHllArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum StreamFormat {
    /// Newline-delimited UTF-8 tokens.
    Tokens,
    /// Raw little-endian 64-bit integers.
    U64le,
}

#[derive(Args)]
struct UpdateArgs {
    /// Sketch file to create or extend.
    #[arg(long)]
    sketch: PathBuf,
    /// Rows (power of two >= 16); required when creating.
    #[arg(long)]
    k: Option<u64>,
    /// Hash seed recorded in the file header.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = StreamFormat::Tokens)]
    format: StreamFormat,
    /// Input path; standard input when omitted.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Update-buffer capacity in items.
    #[arg(long, default_value_t = 2000)]
    buffer: usize,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    sketch: PathBuf,
    /// icon, hip, mdl, or all.
    #[arg(long, default_value = "all")]
    estimator: String,
}

#[derive(Args)]
struct MergeArgs {
    a: PathBuf,
    b: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct InfoArgs {
    sketch: PathBuf,
}

#[derive(Args)]
struct EntropyArgs {
    /// fm85 or hll.
    #[arg(long, default_value = "fm85")]
    kind: String,
    #[arg(long, default_value_t = 4096)]
    samples: usize,
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    k: u64,
    #[arg(long, default_value_t = 100)]
    trials: u64,
    /// Comma-separated checkpoint stream lengths.
    #[arg(long, value_delimiter = ',', required = true)]
    checkpoints: Vec<u128>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 96)]
    columns: u32,
    #[arg(long, default_value_t = 80)]
    stop_exponent: u32,
    /// Include the (slow) MDL estimators.
    #[arg(long)]
    mdl: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    /// fm85-icon, fm85-mdl, fm85-hip, hll, hll-mdl, hll-hip.
    #[arg(long)]
    estimator: String,
    /// Power-of-two range, e.g. 16..512.
    #[arg(long, default_value = "16..512")]
    k: String,
    /// Baseline trials per k (small k is automatically raised).
    #[arg(long, default_value_t = 10_000)]
    trials: u64,
    /// lo:hi:per_octave checkpoint region.
    #[arg(long, default_value = "20:40:4")]
    region: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fit the bias constant instead of the error constant.
    #[arg(long)]
    bias: bool,
    /// json (FitResult) or csv (raw points).
    #[arg(long, default_value = "json")]
    format: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareHllArgs {
    /// Scales the original k = 2^15 design point down to desk size.
    #[arg(long, default_value_t = 0.01)]
    scale: f64,
    #[arg(long, default_value_t = 2000)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Corrupt(_) | Error::UnsupportedVersion(_) => EXIT_CORRUPT,
            Error::HipUnavailable => EXIT_REFUSED,
            _ => EXIT_USAGE,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        Self {
            code: EXIT_USAGE,
            message: e.to_string(),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fm85: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Update(args) => cmd_update(args),
        Command::Estimate(args) => cmd_estimate(args),
        Command::Merge(args) => cmd_merge(args),
        Command::Info(args) => cmd_info(args),
        Command::Entropy(args) => cmd_entropy(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Fit(args) => cmd_fit(args),
        Command::CompareHll(args) => cmd_compare_hll(args),
    }
}

fn read_sketch_file(path: &Path) -> Result<CompressedSketch, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError {
        code: EXIT_USAGE,
        message: format!("{}: {e}", path.display()),
    })?;
    let cs = CompressedSketch::deserialize(&bytes)?;
    Ok(cs)
}

fn write_sketch_file(path: &Path, cs: &CompressedSketch) -> Result<(), CliError> {
    // atomic replace: write a sibling temp file, then rename
    let tmp = path.with_extension("fm85.tmp");
    fs::write(&tmp, cs.serialize())?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn writer_for(out: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(fs::File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn stream_hashes(
    input: Option<&Path>,
    format: StreamFormat,
    seed: u64,
    mut sink: impl FnMut([u64; 2]) -> Result<(), CliError>,
) -> Result<(), CliError> {
    let reader: Box<dyn Read> = match input {
        Some(p) => Box::new(fs::File::open(p)?),
        None => Box::new(io::stdin()),
    };
    let mut reader = io::BufReader::new(reader);
    match format {
        StreamFormat::Tokens => {
            let mut line = String::new();
            loop {
                line.clear();
                if reader.read_line(&mut line)? == 0 {
                    break;
                }
                let token = line.trim_end_matches('\n');
                sink(hash128(token.as_bytes(), seed))?;
            }
        }
        StreamFormat::U64le => {
            let mut buf = [0u8; 8];
            loop {
                match reader.read_exact(&mut buf) {
                    Ok(()) => sink(hash_u64(u64::from_le_bytes(buf), seed))?,
                    Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => break,
                    Err(e) => return Err(e.into()),
                }
            }
        }
    }
    Ok(())
}

fn cmd_update(args: UpdateArgs) -> Result<(), CliError> {
    let mut cs = if args.sketch.exists() {
        let cs = read_sketch_file(&args.sketch)?;
        if let Some(k) = args.k {
            if k != 1u64 << cs.log2_k {
                return Err(CliError::usage("--k does not match the existing sketch"));
            }
        }
        if cs.hash_seed != args.seed {
            return Err(CliError::usage(
                "--seed does not match the existing sketch's hash seed",
            ));
        }
        cs
    } else {
        let k = args
            .k
            .ok_or_else(|| CliError::usage("--k is required to create a sketch"))?;
        let config = SketchConfig::with_k(k)?;
        let mut cs = compress(&Fm85Sketch::new(config))?;
        cs.hash_seed = args.seed;
        cs
    };
    let config = SketchConfig::with_k(1u64 << cs.log2_k)?;
    let capacity = args.buffer.max(1);
    let mut pending: Vec<CouponId> = Vec::with_capacity(capacity);
    // coupons left of the current window are already collected; track the
    // offset from the header so they can be discarded without decompressing
    let mut discard_below = cs.window_offset as u32;
    let flush = |cs: &mut CompressedSketch,
                     pending: &mut Vec<CouponId>|
     -> Result<(), CliError> {
        if pending.is_empty() {
            return Ok(());
        }
        let mut sketch = decompress(cs)?;
        for &c in pending.iter() {
            sketch.update(c);
        }
        pending.clear();
        let seed = cs.hash_seed;
        *cs = compress(&sketch)?;
        cs.hash_seed = seed;
        Ok(())
    };
    stream_hashes(args.input.as_deref(), args.format, args.seed, |pair| {
        let c = hash_to_coupon(pair, &config);
        if c.col < discard_below {
            return Ok(());
        }
        pending.push(c);
        if pending.len() >= capacity {
            flush(&mut cs, &mut pending)?;
            discard_below = cs.window_offset as u32;
        }
        Ok(())
    })?;
    flush(&mut cs, &mut pending)?;
    write_sketch_file(&args.sketch, &cs)?;
    Ok(())
}

fn cmd_estimate(args: EstimateArgs) -> Result<(), CliError> {
    let cs = read_sketch_file(&args.sketch)?;
    let sketch = decompress(&cs)?;
    let k = sketch.config().k();
    let icon = || -> Result<f64, Error> {
        icon_estimate(sketch.collected_count().min(64 * k - 1), k)
    };
    match args.estimator.as_str() {
        "icon" => println!("icon {}", icon()?),
        "mdl" => println!("mdl {}", mdl_estimate(&sketch)),
        "hip" => println!("hip {}", hip_estimate(&sketch)?),
        "all" => {
            let bits_per_row = cs.serialized_bits() as f64 / k as f64;
            println!("k {k}");
            println!("collected {}", sketch.collected_count());
            println!("window_offset {}", sketch.window_offset());
            println!("bits_per_row {bits_per_row:.3}");
            println!("icon {}", icon()?);
            println!("mdl {}", mdl_estimate(&sketch));
            match hip_estimate(&sketch) {
                Ok(v) => println!("hip {v}"),
                Err(_) => println!("hip unavailable (sketch was merged)"),
            }
        }
        _ => return Err(CliError::usage("estimator must be icon, mdl, hip, or all")),
    }
    Ok(())
}

fn cmd_merge(args: MergeArgs) -> Result<(), CliError> {
    let ca = read_sketch_file(&args.a)?;
    let cb = read_sketch_file(&args.b)?;
    if ca.hash_seed != cb.hash_seed {
        return Err(CliError::usage("sketches use different hash seeds"));
    }
    let a = decompress(&ca)?;
    let b = decompress(&cb)?;
    let merged = Fm85Sketch::merge(&a, &b)?;
    let mut out = compress(&merged)?;
    out.hash_seed = ca.hash_seed;
    debug_assert_eq!(out.flags & FLAG_HIP_VALID, 0);
    write_sketch_file(&args.out, &out)?;
    Ok(())
}

fn cmd_info(args: InfoArgs) -> Result<(), CliError> {
    let cs = read_sketch_file(&args.sketch)?;
    println!("k {}", 1u64 << cs.log2_k);
    println!("collected {}", cs.collected_count);
    println!("window_offset {}", cs.window_offset);
    println!("hash_seed {}", cs.hash_seed);
    println!("hip_valid {}", cs.hip.is_some());
    println!("flags {:#010b}", cs.flags);
    println!(
        "window_payload_bytes {} surprising_payload_bytes {}",
        cs.window_payload.len(),
        cs.surprising_payload.len()
    );
    println!(
        "bits_per_row {:.3}",
        cs.serialized_bits() as f64 / (1u64 << cs.log2_k) as f64
    );
    Ok(())
}

fn cmd_entropy(args: EntropyArgs) -> Result<(), CliError> {
    let kind = match args.kind.as_str() {
        "fm85" => EntropyKind::Fm85,
        "hll" => EntropyKind::Hll,
        _ => return Err(CliError::usage("--kind must be fm85 or hll")),
    };
    if args.samples < 256 {
        return Err(CliError::usage("--samples must be at least 256"));
    }
    let curve = entropy_curve(kind, args.samples);
    let mut w = writer_for(args.out.as_deref())?;
    writeln!(w, "log2_c,bits_per_row")?;
    for (t, bits) in &curve.samples {
        writeln!(w, "{t:.8},{bits:.9}")?;
    }
    writeln!(w, "mean_constant,{:.9}", curve.mean_constant)?;
    w.flush()?;
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), CliError> {
    let config = SimulatorConfig::new(args.k, args.columns, args.stop_exponent, args.seed)?;
    let mut checkpoints = args.checkpoints.clone();
    checkpoints.sort_unstable();
    let options = ReplayOptions {
        include_mdl: args.mdl,
        icon_table: None,
    };
    let rows: Vec<Vec<fm85::simulate::EstimateRow>> = (0..args.trials)
        .into_par_iter()
        .map(|t| {
            let mut rng =
                ChaCha8Rng::seed_from_u64(args.seed ^ (t.wrapping_mul(0x9e3779b97f4a7c15)));
            let trace = simulate_trace(&config, &mut rng);
            replay_estimators(&trace, &checkpoints, &options)
        })
        .collect::<Result<_, _>>()?;
    let mut w = writer_for(args.out.as_deref())?;
    writeln!(w, "trial,n,collected,icon,mdl,hip,hll,hll_mdl,hll_hip")?;
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x}"));
    for (t, trial_rows) in rows.iter().enumerate() {
        for r in trial_rows {
            writeln!(
                w,
                "{t},{},{},{},{},{},{},{},{}",
                r.n,
                r.collected,
                r.icon,
                opt(r.mdl),
                r.hip,
                r.hll,
                opt(r.hll_mdl),
                r.hll_hip
            )?;
        }
    }
    w.flush()?;
    Ok(())
}

fn parse_k_range(spec: &str) -> Result<Vec<u64>, CliError> {
    let (lo, hi) = spec
        .split_once("..")
        .ok_or_else(|| CliError::usage("--k must look like 16..512"))?;
    let lo: u64 = lo.parse().map_err(|_| CliError::usage("bad k range"))?;
    let hi: u64 = hi.parse().map_err(|_| CliError::usage("bad k range"))?;
    if !lo.is_power_of_two() || !hi.is_power_of_two() || lo > hi {
        return Err(CliError::usage("k range ends must be powers of two"));
    }
    Ok(std::iter::successors(Some(lo), |&k| (k < hi).then(|| k * 2)).collect())
}

fn parse_region(spec: &str) -> Result<FlatRegionSpec, CliError> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return Err(CliError::usage("--region must look like 20:40:4"));
    }
    let nums: Vec<u32> = parts
        .iter()
        .map(|p| p.parse().map_err(|_| CliError::usage("bad region")))
        .collect::<Result<_, _>>()?;
    Ok(FlatRegionSpec::new(nums[0], nums[1], nums[2])?)
}

fn cmd_fit(args: FitArgs) -> Result<(), CliError> {
    let estimator = Estimator::parse(&args.estimator)?;
    let k_list = parse_k_range(&args.k)?;
    let region = parse_region(&args.region)?;
    let run = if args.bias {
        bias_constant(estimator, &k_list, args.trials, &region, args.seed)?
    } else {
        error_constant(estimator, &k_list, args.trials, &region, args.seed)?
    };
    let mut w = writer_for(args.out.as_deref())?;
    match args.format.as_str() {
        "json" => {
            let mut doc = BTreeMap::new();
            doc.insert("estimator", serde_json::json!(estimator.name()));
            doc.insert("kind", serde_json::json!(if args.bias { "bias" } else { "error" }));
            doc.insert("fit", serde_json::to_value(&run.fit).unwrap());
            doc.insert(
                "measurements",
                serde_json::json!(run
                    .measurements
                    .iter()
                    .map(|(k, m)| serde_json::json!({
                        "k": k,
                        "value": m.value,
                        "uncertainty": m.uncertainty,
                    }))
                    .collect::<Vec<_>>()),
            );
            writeln!(w, "{}", serde_json::to_string_pretty(&doc).unwrap())?;
        }
        "csv" => {
            writeln!(w, "inv_k,value,uncertainty")?;
            for (k, m) in &run.measurements {
                writeln!(w, "{},{},{}", 1.0 / *k as f64, m.value, m.uncertainty)?;
            }
            writeln!(
                w,
                "# c0={} c1={} c2={} residual_rms={}",
                run.fit.c0, run.fit.c1, run.fit.c2, run.fit.residual_rms
            )?;
        }
        _ => return Err(CliError::usage("--format must be json or csv")),
    }
    w.flush()?;
    Ok(())
}

fn cmd_compare_hll(args: CompareHllArgs) -> Result<(), CliError> {
    if !(args.scale > 0.0 && args.scale <= 1.0) {
        return Err(CliError::usage("--scale must be in (0, 1]"));
    }
    // the original design point is FM85 at 2^15 vs HLL at 2^16
    let k_fm = ((1u64 << 15) as f64 * args.scale)
        .round()
        .max(16.0) as u64;
    let k_fm = k_fm.next_power_of_two();
    let k_hll = 2 * k_fm;
    let trials = args.trials.max(100);
    // small-n checkpoint (pre-collision regime) and a flat-region checkpoint
    let small_n = (k_fm / 8).max(8) as u128;
    let large_n = (k_fm as u128) << 14;
    // FM85 side: ICON + FM85 HIP; HLL side: raw + HLL HIP at 2k rows
    let run = |k: u64, seed_salt: u64, use_hll: bool| -> Result<[(f64, f64); 2], Error> {
        let config = SimulatorConfig::new(k, 30, 15, args.seed)?;
        let sums: Vec<[f64; 4]> = (0..trials)
            .into_par_iter()
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(
                    args.seed ^ seed_salt ^ t.wrapping_mul(0x9e3779b97f4a7c15),
                );
                let trace = simulate_trace(&config, &mut rng);
                let rows = replay_estimators(
                    &trace,
                    &[small_n, large_n],
                    &ReplayOptions::default(),
                )?;
                let mut out = [0.0f64; 4];
                for (i, row) in rows.iter().enumerate() {
                    let n = row.n as f64;
                    let (raw, hip) = if use_hll {
                        (row.hll, row.hll_hip)
                    } else {
                        (row.icon, row.hip)
                    };
                    out[2 * i] = ((raw - n) / n).powi(2);
                    out[2 * i + 1] = ((hip - n) / n).powi(2);
                }
                Ok(out)
            })
            .collect::<Result<_, Error>>()?;
        let mut acc = [0.0f64; 4];
        for s in &sums {
            for (a, v) in acc.iter_mut().zip(s) {
                *a += v;
            }
        }
        let se = |x: f64| (x / trials as f64).sqrt();
        Ok([(se(acc[0]), se(acc[1])), (se(acc[2]), se(acc[3]))])
    };
    let fm = run(k_fm, 0x1111, false)?;
    let hll = run(k_hll, 0x2222, true)?;
    let mut w = writer_for(args.out.as_deref())?;
    writeln!(w, "k_fm85 {k_fm}")?;
    writeln!(w, "k_hll {k_hll}")?;
    writeln!(w, "trials {trials}")?;
    writeln!(
        w,
        "regime,n,fm85_icon_se,fm85_hip_se,hll_se,hll_hip_se,nonhip_ratio,hip_ratio"
    )?;
    for (i, (label, n)) in [("small", small_n), ("flat", large_n)].iter().enumerate() {
        let (icon_se, fm_hip_se) = fm[i];
        let (hll_se, hll_hip_se) = hll[i];
        writeln!(
            w,
            "{label},{n},{icon_se:.6},{fm_hip_se:.6},{hll_se:.6},{hll_hip_se:.6},{:.4},{:.4}",
            hll_se / icon_se,
            hll_hip_se / fm_hip_se
        )?;
    }
    w.flush()?;
    Ok(())
}
