//! Command-line surface over the cycle-bound toolkit: bound refinement
//! chains, bound tables, residue-class average proofs, frontier
//! thresholds, range verification, and trajectory profiles.
//!
//! Every run emits a reproducibility header (config hash, precision,
//! mode). JSON output is deterministic byte-for-byte apart from the
//! `elapsed_ms` timing field, and every numeric value in it is an exact
//! decimal or rational string.

use clap::{Parser, Subcommand, ValueEnum};
use cyclebound_core::case_engine::{
    checkpoint_load, prove_average_bound, prove_from_frontier, AverageMode, CheckpointPolicy,
    SearchConfig, SearchOutcome, XZeroMode,
};
use cyclebound_core::collatz::{merger_witness, profile, verify_range_opts, VerifyOptions};
use cyclebound_core::numerics::DEFAULT_PRECISION_BITS;
use cyclebound_core::pipeline::{
    baseline_k_bound, certificate_frontier, iterate_bounds, table_row, x0_threshold, BoundReport,
    GlobalConfig, M2Strategy, TConstantMode, TableRow, ThresholdMode, Verdict,
};
use cyclebound_core::{Rational, RealInterval};
use num_bigint::{BigInt, BigUint};
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde_json::{json, Value};
use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

const PRECISION_ENV: &str = "CYCLEBOUND_PRECISION_BITS";

#[derive(Parser)]
#[command(name = "cyclebound", version, about = "Exact lower bounds on the size of hypothetical nontrivial Collatz cycles")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Report format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,

    /// Working precision in bits; overrides the CYCLEBOUND_PRECISION_BITS
    /// environment variable, which overrides the built-in default.
    #[arg(long, global = true)]
    precision_bits: Option<u32>,

    /// Worker threads for engine and verifier pools; 0 means all cores.
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Refine a lower bound on the odd-member count K of an m-cycle until
    /// it stops improving or contradicts the cycle-size ceiling.
    Bounds(BoundsArgs),
    /// Refined K bounds for several minima counts at once.
    Table(TableArgs),
    /// Prove an average reciprocal-sum bound by residue-class cases.
    Search(SearchArgs),
    /// Convergence frontier required to push K past a target bound.
    Threshold(ThresholdArgs),
    /// Verify that every n below a limit reaches a smaller value.
    VerifyRange(VerifyRangeArgs),
    /// Local-minimum profile of a single trajectory.
    Profile(ProfileArgs),
}

#[derive(Parser)]
struct BoundsArgs {
    /// Number of local minima of the hypothetical cycle.
    #[arg(long, value_parser = parse_flex_u64)]
    m: u64,

    /// Starting lower bound on K. Accepts 7e11, 704*2^60, or plain digits.
    #[arg(long, value_parser = parse_flex_big)]
    k0: BigUint,

    /// Convergence frontier X0 backing the reciprocal-sum constants.
    #[arg(long, value_parser = parse_flex_big, default_value = "704*2^60")]
    x0: BigUint,

    /// Reciprocal-sum constant backing each round.
    #[arg(long, value_enum, default_value_t = ModeArg::Computer1)]
    mode: ModeArg,

    /// Forced-window selection per round.
    #[arg(long, value_enum, default_value_t = StrategyArg::Maximal)]
    m2_strategy: StrategyArg,
}

#[derive(Parser)]
struct TableArgs {
    /// Minima counts, comma separated; each accepts 1.34e10-style forms.
    #[arg(long, value_delimiter = ',', value_parser = parse_flex_u64, required = true)]
    m: Vec<u64>,

    /// Starting lower bound on K for every row; defaults to the
    /// unconditional 7.2e10.
    #[arg(long, value_parser = parse_flex_big)]
    k0: Option<BigUint>,

    /// Convergence frontier X0 backing the reciprocal-sum constants.
    #[arg(long, value_parser = parse_flex_big, default_value = "704*2^60")]
    x0: BigUint,

    /// Reciprocal-sum constant backing each round.
    #[arg(long, value_enum, default_value_t = ModeArg::Computer1)]
    mode: ModeArg,

    /// Forced-window selection per round; rows default to the exhaustive
    /// scan because the maximal window is not always the best one.
    #[arg(long, value_enum, default_value_t = StrategyArg::Best)]
    m2_strategy: StrategyArg,

    /// Acknowledge that the computer-certified constant rests on the
    /// residue-class certificate rather than a closed-form proof.
    #[arg(long)]
    trust_certificate: bool,
}

#[derive(Parser)]
struct SearchArgs {
    /// Whether minima are weighted by their o-step counts.
    #[arg(long, value_enum)]
    mode: SearchModeArg,

    /// Target average coefficient, e.g. 97/54 or 3/4.
    #[arg(long, value_parser = parse_flex_rational)]
    target: Rational,

    /// Maximum processed minima per window.
    #[arg(long)]
    depth: u32,

    /// Convergence frontier: `symbolic` (every X0 > 765) or a concrete
    /// value in any integer form.
    #[arg(long, value_parser = parse_x0_mode, default_value = "symbolic")]
    x0: XZeroMode,

    /// Per-run branching cap; longer runs take the shortcut branch.
    #[arg(long, default_value_t = 64)]
    k_cap: u32,

    /// Abort to UNPROVEN after this many explored nodes.
    #[arg(long)]
    node_budget: Option<u64>,

    /// Write the open frontier here periodically.
    #[arg(long)]
    checkpoint: Option<PathBuf>,

    /// Continue from the checkpoint instead of the root.
    #[arg(long, requires = "checkpoint")]
    resume: bool,

    /// Checkpoint after this many explored nodes.
    #[arg(long, default_value_t = 10_000)]
    checkpoint_every: u64,
}

#[derive(Parser)]
struct ThresholdArgs {
    /// Target lower bound on K to be reached.
    #[arg(long, value_parser = parse_flex_big)]
    k_target: BigUint,

    /// Constant turning the gap ε* into a frontier: the weighted o-step
    /// bound gives 1/(4 log 2·ε*), the older route 1/(3 log 2·ε*).
    #[arg(long, value_enum, default_value_t = ThresholdModeArg::Weighted)]
    mode: ThresholdModeArg,
}

#[derive(Parser)]
struct VerifyRangeArgs {
    /// Verify every 2 <= n <= limit.
    #[arg(long, value_parser = parse_flex_u64)]
    limit: u64,

    /// Persist sweep progress here after each block.
    #[arg(long)]
    checkpoint: Option<PathBuf>,

    /// Continue from the checkpoint instead of restarting.
    #[arg(long, requires = "checkpoint")]
    resume: bool,
}

#[derive(Parser)]
struct ProfileArgs {
    /// Odd start value in any integer form.
    #[arg(long, value_parser = parse_flex_big)]
    n: BigUint,

    /// Number of local minima to collect.
    #[arg(long, default_value_t = 20)]
    minima: usize,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
    Text,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    /// Closed-form 97/54 average per minimum.
    Analytic,
    /// Certified average of 1 per minimum at the 704*2^60 frontier.
    Computer1,
    /// o-step weighted 3/4 average, independent of m and K.
    Weighted,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum StrategyArg {
    /// Largest feasible forced window.
    Maximal,
    /// Scan every feasible window and keep the smallest ε.
    Best,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SearchModeArg {
    Unweighted,
    Weighted,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ThresholdModeArg {
    /// Weighted o-step constant 1/(4 log 2 · ε*).
    #[value(alias = "theorem20")]
    Weighted,
    /// Unweighted constant 1/(3 log 2 · ε*).
    Legacy,
}

impl ModeArg {
    fn to_core(self) -> TConstantMode {
        match self {
            ModeArg::Analytic => TConstantMode::Analytic9754,
            ModeArg::Computer1 => TConstantMode::Computer1,
            ModeArg::Weighted => TConstantMode::Weighted34,
        }
    }

    fn label(self) -> &'static str {
        match self {
            ModeArg::Analytic => "analytic",
            ModeArg::Computer1 => "computer1",
            ModeArg::Weighted => "weighted",
        }
    }
}

impl StrategyArg {
    fn to_core(self) -> M2Strategy {
        match self {
            StrategyArg::Maximal => M2Strategy::MaximalFeasible,
            StrategyArg::Best => M2Strategy::BestEpsilon,
        }
    }

    fn label(self) -> &'static str {
        match self {
            StrategyArg::Maximal => "maximal",
            StrategyArg::Best => "best",
        }
    }
}

// --- flexible integer and rational forms --------------------------------

// Accepted integer spellings: plain digits, c*2^e, 2^e, and integer-valued
// scientific notation with an optional dotted mantissa (1.34e10).
fn parse_flex_big(s: &str) -> Result<BigUint, String> {
    let t: String = s.chars().filter(|c| !c.is_whitespace() && *c != '_').collect();
    if t.is_empty() {
        return Err("empty integer".into());
    }
    if let Some((lhs, rhs)) = t.split_once('*') {
        let base = parse_digits(lhs)?;
        let shift = parse_pow2(rhs)?;
        return Ok(base << shift);
    }
    if t.starts_with("2^") {
        return Ok(BigUint::one() << parse_pow2(&t)?);
    }
    if let Some((mant, exp)) = t.split_once(['e', 'E']) {
        let exp: u32 = exp.parse().map_err(|_| format!("bad exponent in {s}"))?;
        let (digits, frac_len) = match mant.split_once('.') {
            None => (mant.to_string(), 0u32),
            Some((int, frac)) => (format!("{int}{frac}"), frac.len() as u32),
        };
        if exp < frac_len {
            return Err(format!("{s} is not an integer"));
        }
        let value = parse_digits(&digits)?;
        return Ok(value * BigUint::from(10u32).pow(exp - frac_len));
    }
    parse_digits(&t)
}

fn parse_digits(s: &str) -> Result<BigUint, String> {
    if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
        return Err(format!("bad integer {s}"));
    }
    s.parse().map_err(|_| format!("bad integer {s}"))
}

fn parse_pow2(s: &str) -> Result<u32, String> {
    let e = s.strip_prefix("2^").ok_or_else(|| format!("expected 2^e, got {s}"))?;
    e.parse().map_err(|_| format!("bad power of two {s}"))
}

fn parse_flex_u64(s: &str) -> Result<u64, String> {
    parse_flex_big(s)?.to_u64().ok_or_else(|| format!("{s} exceeds 64 bits"))
}

// Rationals as p/q, plain integers, or exact decimals (0.75).
fn parse_flex_rational(s: &str) -> Result<Rational, String> {
    let t = s.trim();
    if let Some((num, den)) = t.split_once('/') {
        let n = parse_digits(num.trim())?;
        let d = parse_digits(den.trim())?;
        if d.is_zero() {
            return Err("zero denominator".into());
        }
        return Ok(Rational::new(BigInt::from(n), BigInt::from(d)));
    }
    if let Some((int, frac)) = t.split_once('.') {
        let digits = parse_digits(&format!("{int}{frac}"))?;
        let scale = BigInt::from(10u32).pow(frac.len() as u32);
        return Ok(Rational::new(BigInt::from(digits), scale));
    }
    Ok(Rational::from_integer(BigInt::from(parse_digits(t)?)))
}

fn parse_x0_mode(s: &str) -> Result<XZeroMode, String> {
    if s.eq_ignore_ascii_case("symbolic") {
        return Ok(XZeroMode::Symbolic);
    }
    parse_flex_big(s).map(XZeroMode::Concrete)
}

// --- exact and display rendering of numbers -----------------------------

fn big_str(n: &BigUint) -> String {
    n.to_string()
}

fn rational_str(r: &Rational) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

fn interval_json(iv: &RealInterval) -> (String, String) {
    (rational_str(&iv.lo_rational()), rational_str(&iv.hi_rational()))
}

// Display-only scientific form of an exact rational, by decimal-digit
// scaling; never consults floating point.
fn sci_str(r: &Rational, sig: usize) -> String {
    if r.is_zero() {
        return "0".into();
    }
    let sign = if r.is_negative() { "-" } else { "" };
    let n = r.numer().abs().to_biguint().expect("abs is nonnegative");
    let d = r.denom().abs().to_biguint().expect("abs is nonnegative");
    let e0 = n.to_string().len() as i64 - d.to_string().len() as i64;
    let shift = sig as i64 + 1 - e0;
    let scaled = if shift >= 0 {
        n * BigUint::from(10u32).pow(shift as u32) / d
    } else {
        n / (d * BigUint::from(10u32).pow((-shift) as u32))
    };
    let s = scaled.to_string();
    let exp = s.len() as i64 - 1 - shift;
    let mant: String = s.chars().take(sig + 1).collect();
    let (head, tail) = mant.split_at(1);
    format!("{sign}{head}.{tail}e{exp}")
}

fn verdict_str(v: Verdict) -> &'static str {
    match v {
        Verdict::Improved => "IMPROVED",
        Verdict::FixedPoint => "FIXED_POINT",
        Verdict::Contradiction => "CONTRADICTION",
    }
}

fn fnv1a64(data: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for &b in data {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

// --- report assembly ----------------------------------------------------

struct Report {
    /// Canonical semantic description; hashed into the header.
    config_line: String,
    mode_label: String,
    precision_bits: u32,
    body: Value,
    /// Rows for csv and the aligned text table: header then data.
    table: Vec<Vec<String>>,
    /// Free-form closing lines for the text format.
    summary: Vec<String>,
    exit_code: i32,
}

fn meta_value(report: &Report, elapsed_ms: u128) -> Value {
    json!({
        "command": report.config_line.split(';').next().expect("config line is never empty"),
        "config_hash": format!("{:016x}", fnv1a64(report.config_line.as_bytes())),
        "elapsed_ms": elapsed_ms.to_string(),
        "mode": report.mode_label,
        "precision_bits": report.precision_bits.to_string(),
        "version": env!("CARGO_PKG_VERSION"),
    })
}

fn render(report: &Report, format: Format, elapsed_ms: u128) -> String {
    let meta = meta_value(report, elapsed_ms);
    match format {
        Format::Json => {
            let mut body = report.body.clone();
            body.as_object_mut().expect("bodies are objects").insert("run".into(), meta);
            let mut out = serde_json::to_string_pretty(&body).expect("no non-string keys");
            out.push('\n');
            out
        }
        Format::Csv => {
            let mut out = String::new();
            for key in ["command", "config_hash", "mode", "precision_bits", "elapsed_ms"] {
                let v = &meta[key];
                let v = v.as_str().map(str::to_string).unwrap_or_else(|| v.to_string());
                let _ = writeln!(out, "# {key}: {v}");
            }
            for row in &report.table {
                let _ = writeln!(out, "{}", row.join(","));
            }
            out
        }
        Format::Text => {
            let mut out = String::new();
            let _ = writeln!(
                out,
                "cyclebound {} | config {} | mode {} | precision {} bits | {} ms",
                env!("CARGO_PKG_VERSION"),
                meta["config_hash"].as_str().expect("hash is a string"),
                report.mode_label,
                report.precision_bits,
                elapsed_ms,
            );
            if !report.table.is_empty() {
                let cols = report.table[0].len();
                let mut widths = vec![0usize; cols];
                for row in &report.table {
                    for (w, cell) in widths.iter_mut().zip(row) {
                        *w = (*w).max(cell.len());
                    }
                }
                for row in &report.table {
                    let line: Vec<String> = row
                        .iter()
                        .zip(&widths)
                        .map(|(cell, w)| format!("{cell:>w$}"))
                        .collect();
                    let _ = writeln!(out, "{}", line.join("  "));
                }
            }
            for line in &report.summary {
                let _ = writeln!(out, "{line}");
            }
            out
        }
    }
}

// --- commands -----------------------------------------------------------

fn resolve_precision(flag: Option<u32>) -> Result<u32, String> {
    if let Some(bits) = flag {
        return Ok(bits);
    }
    match std::env::var(PRECISION_ENV) {
        Err(_) => Ok(DEFAULT_PRECISION_BITS),
        Ok(raw) => raw
            .parse()
            .map_err(|_| format!("{PRECISION_ENV} must be a positive integer, got {raw}")),
    }
}

fn round_rows(reports: &[BoundReport]) -> Vec<Vec<String>> {
    let mut rows = vec![
        ["round", "k_in", "m2", "epsilon", "k_out", "verdict"]
            .map(String::from)
            .to_vec(),
    ];
    for (i, r) in reports.iter().enumerate() {
        rows.push(vec![
            (i + 1).to_string(),
            big_str(&r.k_in),
            r.m2.to_string(),
            sci_str(&r.epsilon.hi_rational(), 4),
            big_str(&r.k_out),
            verdict_str(r.verdict).to_string(),
        ]);
    }
    rows
}

// Flag-level validation; the library treats violations as caller bugs.
fn check_frontier(x0: &BigUint, mode: ModeArg) -> Result<(), String> {
    if *x0 < BigUint::from(766u32) {
        return Err("frontier must be at least 766".into());
    }
    if mode == ModeArg::Computer1 && *x0 < certificate_frontier() {
        return Err("computer1 constants are certified only from the frontier 704*2^60 up".into());
    }
    Ok(())
}

fn run_bounds(args: &BoundsArgs, precision_bits: u32) -> Result<Report, String> {
    if args.m == 0 {
        return Err("m must be at least 1".into());
    }
    if args.k0.is_zero() {
        return Err("k0 must be at least 1".into());
    }
    check_frontier(&args.x0, args.mode)?;
    let config = GlobalConfig::new(args.x0.clone(), args.mode.to_core(), precision_bits)
        .with_m2_strategy(args.m2_strategy.to_core());
    let reports = iterate_bounds(args.m, &args.k0, &config).map_err(|e| e.to_string())?;
    let last = reports.last().expect("at least one round always runs");
    let final_k = match last.verdict {
        Verdict::FixedPoint => last.k_in.clone(),
        _ => last.k_out.clone(),
    };
    let rounds: Vec<Value> = reports
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let (eps_lo, eps_hi) = interval_json(&r.epsilon);
            let v = r.v.as_ref().map(interval_json);
            json!({
                "epsilon_hi": eps_hi,
                "epsilon_lo": eps_lo,
                "k_in": big_str(&r.k_in),
                "k_out": big_str(&r.k_out),
                "m2": r.m2.to_string(),
                "precision_bits": r.precision_bits.to_string(),
                "round": (i + 1).to_string(),
                "v_hi": v.as_ref().map(|(_, hi)| hi.clone()),
                "v_lo": v.as_ref().map(|(lo, _)| lo.clone()),
                "verdict": verdict_str(r.verdict),
            })
        })
        .collect();
    let config_line = format!(
        "bounds;m={};k0={};x0={};mode={};m2={};precision={}",
        args.m,
        args.k0,
        args.x0,
        args.mode.label(),
        args.m2_strategy.label(),
        precision_bits,
    );
    Ok(Report {
        config_line,
        mode_label: args.mode.label().into(),
        precision_bits,
        body: json!({
            "final_k": big_str(&final_k),
            "input": {
                "k0": big_str(&args.k0),
                "m": args.m.to_string(),
                "m2_strategy": args.m2_strategy.label(),
                "mode": args.mode.label(),
                "x0": big_str(&args.x0),
            },
            "rounds": rounds,
            "verdict": verdict_str(last.verdict),
        }),
        table: round_rows(&reports),
        summary: vec![format!("verdict: {} with K >= {}", verdict_str(last.verdict), final_k)],
        exit_code: 0,
    })
}

fn run_table(args: &TableArgs, precision_bits: u32, workers: usize) -> Result<Report, String> {
    if args.mode == ModeArg::Computer1 && !args.trust_certificate {
        return Err("computer1 table rows rest on the residue-class certificate; \
                    pass --trust-certificate to acknowledge it"
            .into());
    }
    if args.m.iter().any(|&m| m == 0) {
        return Err("every m must be at least 1".into());
    }
    check_frontier(&args.x0, args.mode)?;
    let k0 = args.k0.clone().unwrap_or_else(baseline_k_bound);
    if k0.is_zero() {
        return Err("k0 must be at least 1".into());
    }
    let config = GlobalConfig::new(args.x0.clone(), args.mode.to_core(), precision_bits)
        .with_m2_strategy(args.m2_strategy.to_core());
    let workers = if workers == 0 {
        std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
    } else {
        workers
    };
    let rows: Vec<TableRow> = if workers <= 1 || args.m.len() <= 1 {
        args.m
            .iter()
            .map(|&m| table_row(m, &k0, &config))
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?
    } else {
        // Rows are independent; slot-indexed results keep output order
        // identical for every worker count.
        let next = std::sync::atomic::AtomicUsize::new(0);
        let slots: Vec<std::sync::Mutex<Option<Result<TableRow, String>>>> =
            args.m.iter().map(|_| std::sync::Mutex::new(None)).collect();
        std::thread::scope(|scope| {
            for _ in 0..workers.min(args.m.len()) {
                scope.spawn(|| loop {
                    let idx = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                    if idx >= args.m.len() {
                        break;
                    }
                    let row = table_row(args.m[idx], &k0, &config).map_err(|e| e.to_string());
                    *slots[idx].lock().expect("no poisoned slots") = Some(row);
                });
            }
        });
        slots
            .into_iter()
            .map(|s| s.into_inner().expect("no poisoned slots").expect("every slot filled"))
            .collect::<Result<_, _>>()?
    };
    let mut table = vec![vec!["m".to_string(), "k_bound".to_string()]];
    let rows_json: Vec<Value> = rows
        .iter()
        .map(|row| {
            table.push(vec![row.m.to_string(), big_str(&row.k_bound)]);
            json!({"k_bound": big_str(&row.k_bound), "m": row.m.to_string()})
        })
        .collect();
    let m_list: Vec<String> = args.m.iter().map(|m| m.to_string()).collect();
    let config_line = format!(
        "table;m={};k0={};x0={};mode={};m2={};precision={}",
        m_list.join(","),
        k0,
        args.x0,
        args.mode.label(),
        args.m2_strategy.label(),
        precision_bits,
    );
    Ok(Report {
        config_line,
        mode_label: args.mode.label().into(),
        precision_bits,
        body: json!({
            "input": {
                "k0": big_str(&k0),
                "m2_strategy": args.m2_strategy.label(),
                "mode": args.mode.label(),
                "trust_certificate": args.trust_certificate,
                "x0": big_str(&args.x0),
            },
            "rows": rows_json,
        }),
        table,
        summary: Vec::new(),
        exit_code: 0,
    })
}

fn run_search(args: &SearchArgs, precision_bits: u32, workers: usize) -> Result<Report, String> {
    if args.depth == 0 {
        return Err("depth must be at least 1".into());
    }
    if !args.target.is_positive() {
        return Err("target must be positive".into());
    }
    if let XZeroMode::Concrete(x) = &args.x0 {
        if *x < BigUint::from(766u32) {
            return Err("concrete frontier must be at least 766".into());
        }
    }
    let mode = match args.mode {
        SearchModeArg::Unweighted => AverageMode::Unweighted,
        SearchModeArg::Weighted => AverageMode::Weighted,
    };
    let mut config = SearchConfig::new(mode, args.target.clone(), args.x0.clone(), args.depth);
    config.k_cap = args.k_cap;
    config.node_budget = args.node_budget;
    config.worker_count = workers;
    if let Some(path) = &args.checkpoint {
        config.checkpoint = Some(CheckpointPolicy { path: path.clone(), every_nodes: args.checkpoint_every });
    }
    let outcome: SearchOutcome = if args.resume {
        let path = args.checkpoint.as_ref().expect("clap enforces resume => checkpoint");
        let frontier = checkpoint_load(path, &config).map_err(|e| e.to_string())?;
        prove_from_frontier(frontier, &config)
    } else {
        prove_average_bound(&config)
    };
    let verdict = if outcome.proven {
        "PROVEN"
    } else if outcome.budget_exhausted || outcome.witnesses.is_empty() {
        "UNPROVEN"
    } else {
        "FALSE"
    };
    let witnesses: Vec<Value> = outcome
        .witnesses
        .iter()
        .map(|w| {
            json!({
                "modulus_exp": w.modulus_exp.to_string(),
                "residue": big_str(&w.residue),
            })
        })
        .collect();
    let x0_label = match &args.x0 {
        XZeroMode::Symbolic => "symbolic".to_string(),
        XZeroMode::Concrete(x) => big_str(x),
    };
    let mode_label = match args.mode {
        SearchModeArg::Unweighted => "unweighted",
        SearchModeArg::Weighted => "weighted",
    };
    let config_line = format!(
        "search;mode={mode_label};target={};depth={};x0={x0_label};k_cap={};precision={precision_bits}",
        rational_str(&args.target),
        args.depth,
        args.k_cap,
    );
    let table = vec![
        ["verdict", "nodes_explored", "closed_count", "max_modulus_exp", "witness_count"]
            .map(String::from)
            .to_vec(),
        vec![
            verdict.to_string(),
            outcome.nodes_explored.to_string(),
            outcome.closed_count.to_string(),
            outcome.max_modulus_exp_reached.to_string(),
            outcome.witnesses.len().to_string(),
        ],
    ];
    let mut summary = vec![format!("average bound {}: {verdict}", rational_str(&args.target))];
    for w in &outcome.witnesses {
        summary.push(format!("open class: n = {} (mod 2^{})", w.residue, w.modulus_exp));
    }
    Ok(Report {
        config_line,
        mode_label: mode_label.into(),
        precision_bits,
        body: json!({
            "budget_exhausted": outcome.budget_exhausted,
            "closed_count": outcome.closed_count.to_string(),
            "input": {
                "depth": args.depth.to_string(),
                "k_cap": args.k_cap.to_string(),
                "mode": mode_label,
                "target": rational_str(&args.target),
                "x0": x0_label,
            },
            "max_modulus_exp": outcome.max_modulus_exp_reached.to_string(),
            "nodes_explored": outcome.nodes_explored.to_string(),
            "verdict": verdict,
            "witnesses": witnesses,
        }),
        table,
        summary,
        exit_code: if outcome.proven { 0 } else { 2 },
    })
}

fn run_threshold(args: &ThresholdArgs, precision_bits: u32) -> Result<Report, String> {
    let mode = match args.mode {
        ThresholdModeArg::Weighted => ThresholdMode::Weighted,
        ThresholdModeArg::Legacy => ThresholdMode::Legacy,
    };
    let mode_label = match args.mode {
        ThresholdModeArg::Weighted => "weighted",
        ThresholdModeArg::Legacy => "legacy",
    };
    if args.k_target < BigUint::from(2u32) {
        return Err("k-target must be at least 2".into());
    }
    let (eps_star, required) =
        x0_threshold(&args.k_target, mode, precision_bits).map_err(|e| e.to_string())?;
    let (eps_lo, eps_hi) = interval_json(&eps_star);
    let unit = BigUint::one() << 60;
    let units_ceil = (&required + &unit - BigUint::one()) / &unit;
    let config_line = format!(
        "threshold;k_target={};mode={mode_label};precision={precision_bits}",
        args.k_target,
    );
    Ok(Report {
        config_line,
        mode_label: mode_label.into(),
        precision_bits,
        body: json!({
            "eps_star_hi": eps_hi,
            "eps_star_lo": eps_lo,
            "input": {"k_target": big_str(&args.k_target), "mode": mode_label},
            "x0_required": big_str(&required),
            "x0_required_units_2_60": big_str(&units_ceil),
        }),
        table: vec![
            ["eps_star", "x0_required", "x0_required_units_2_60"].map(String::from).to_vec(),
            vec![
                sci_str(&eps_star.hi_rational(), 6),
                big_str(&required),
                big_str(&units_ceil),
            ],
        ],
        summary: vec![format!(
            "reaching K >= {} takes eps* ~ {} and therefore X0 >= {} ({}*2^60)",
            args.k_target,
            sci_str(&eps_star.hi_rational(), 4),
            required,
            units_ceil,
        )],
        exit_code: 0,
    })
}

fn run_verify_range(args: &VerifyRangeArgs, precision_bits: u32, workers: usize) -> Result<Report, String> {
    if args.limit < 2 {
        return Err("limit must be at least 2".into());
    }
    let opts = VerifyOptions {
        worker_count: workers,
        checkpoint: args.checkpoint.clone(),
        resume: args.resume,
    };
    let report = verify_range_opts(args.limit, &opts).map_err(|e| e.to_string())?;
    let config_line = format!("verify-range;limit={};precision={precision_bits}", args.limit);
    Ok(Report {
        config_line,
        mode_label: "sweep".into(),
        precision_bits,
        body: json!({
            "input": {"limit": args.limit.to_string()},
            "max_excursion": big_str(&report.max_excursion),
            "verified": report.verified,
        }),
        table: vec![
            ["limit", "verified", "max_excursion"].map(String::from).to_vec(),
            vec![
                report.limit.to_string(),
                report.verified.to_string(),
                big_str(&report.max_excursion),
            ],
        ],
        summary: vec![if report.verified {
            format!("every 2 <= n <= {} descends below itself", report.limit)
        } else {
            format!("verification FAILED below {}", report.limit)
        }],
        exit_code: if report.verified { 0 } else { 2 },
    })
}

fn run_profile(args: &ProfileArgs, precision_bits: u32) -> Result<Report, String> {
    if (&args.n % 2u32).is_zero() {
        return Err("profile starts at an odd value".into());
    }
    let prof = profile(&args.n, args.minima);
    let merger = merger_witness(&args.n);
    let mut table = vec![["index", "n", "k", "ell", "T(n)"].map(String::from).to_vec()];
    let minima: Vec<Value> = prof
        .minima
        .iter()
        .enumerate()
        .map(|(i, rec)| {
            table.push(vec![
                (i + 1).to_string(),
                big_str(&rec.n),
                rec.k.to_string(),
                rec.ell.to_string(),
                rational_str(&rec.t_value),
            ]);
            json!({
                "ell": rec.ell.to_string(),
                "k": rec.k.to_string(),
                "n": big_str(&rec.n),
                "t": rational_str(&rec.t_value),
            })
        })
        .collect();
    let config_line = format!("profile;n={};minima={};precision={precision_bits}", args.n, args.minima);
    Ok(Report {
        config_line,
        mode_label: "trajectory".into(),
        precision_bits,
        body: json!({
            "input": {"minima": args.minima.to_string(), "start": big_str(&args.n)},
            "merger": merger.as_ref().map(|(joins, steps)| {
                json!({"joins": big_str(joins), "steps": steps.to_string()})
            }),
            "minima": minima,
            "trivial_start": prof.trivial_start,
            "truncated": prof.truncated,
        }),
        table,
        summary: match merger {
            Some((joins, steps)) => {
                vec![format!("merges with the trajectory of {joins} after {steps} steps")]
            }
            None => Vec::new(),
        },
        exit_code: 0,
    })
}

fn execute(cli: &Cli) -> Result<Report, String> {
    let precision_bits = resolve_precision(cli.precision_bits)?;
    match &cli.command {
        Command::Bounds(args) => run_bounds(args, precision_bits),
        Command::Table(args) => run_table(args, precision_bits, cli.workers),
        Command::Search(args) => run_search(args, precision_bits, cli.workers),
        Command::Threshold(args) => run_threshold(args, precision_bits),
        Command::VerifyRange(args) => run_verify_range(args, precision_bits, cli.workers),
        Command::Profile(args) => run_profile(args, precision_bits),
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version are requested output, not usage errors.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let started = Instant::now();
    match execute(&cli) {
        Ok(report) => {
            print!("{}", render(&report, cli.format, started.elapsed().as_millis()));
            std::process::exit(report.exit_code);
        }
        Err(message) => {
            eprintln!("error: {message}");
            std::process::exit(1);
        }
    }
}
