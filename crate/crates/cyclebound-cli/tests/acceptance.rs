//! Release acceptance gates. Each test drives the compiled binary or the
//! public library surface the way a user would, pins its targets and
//! tolerances as exact constants, and prints one pass or fail line for its
//! criterion. A failing criterion lists every clause that missed.

use cyclebound_core::case_engine::{
    prove_average_bound, soundness_sample, AverageMode, SearchConfig, XZeroMode,
};
use cyclebound_core::collatz::{accel_odd_run, collatz_step, profile};
use cyclebound_core::contfrac::{
    cf_expand, smallest_denominator_between, smallest_denominator_in_open_interval,
};
use cyclebound_core::numerics::{cmp_conservative, delta_interval, rat};
use cyclebound_core::{Rational, RealInterval};
use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_traits::One;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use std::process::Command;
use std::time::{Duration, Instant};

fn run_cli(args: &[&str]) -> (Value, i32, Duration) {
    let started = Instant::now();
    let output = Command::new(env!("CARGO_BIN_EXE_cyclebound"))
        .args(["--format", "json"])
        .args(args)
        .output()
        .expect("binary runs");
    let elapsed = started.elapsed();
    let stdout = String::from_utf8(output.stdout).expect("utf-8 output");
    let body: Value = serde_json::from_str(&stdout)
        .unwrap_or_else(|e| panic!("unparseable output for {args:?}: {e}\n{stdout}"));
    (body, output.status.code().unwrap_or(-1), elapsed)
}

fn raw_cli(args: &[&str]) -> (String, i32) {
    let output = Command::new(env!("CARGO_BIN_EXE_cyclebound"))
        .args(args)
        .output()
        .expect("binary runs");
    (String::from_utf8(output.stdout).expect("utf-8 output"), output.status.code().unwrap_or(-1))
}

fn as_u64(v: &Value) -> u64 {
    v.as_u64()
        .or_else(|| v.as_str().and_then(|s| s.parse().ok()))
        .unwrap_or_else(|| panic!("not a u64 field: {v}"))
}

fn as_big(v: &Value) -> BigUint {
    v.as_str()
        .and_then(|s| s.parse().ok())
        .unwrap_or_else(|| panic!("not a big integer field: {v}"))
}

// Exact rational from the toolkit's own serialization: plain digits or p/q.
fn as_rat(v: &Value) -> Rational {
    let s = v.as_str().unwrap_or_else(|| panic!("not a rational field: {v}"));
    let parse = |t: &str| t.parse::<BigInt>().unwrap_or_else(|_| panic!("bad integer {t}"));
    match s.split_once('/') {
        Some((p, q)) => Rational::new(parse(p), parse(q)),
        None => Rational::from_integer(parse(s)),
    }
}

fn pow10(e: u32) -> BigInt {
    BigInt::from(10u32).pow(e)
}

// mant * 10^-neg, the exact value of a pinned scientific-notation constant.
fn sci(mant: u64, neg: u32) -> Rational {
    Rational::new(BigInt::from(mant), pow10(neg))
}

fn big10(mant: u64, exp: u32) -> BigUint {
    BigUint::from(mant) * BigUint::from(10u32).pow(exp)
}

struct Gate {
    criterion: u32,
    fails: Vec<String>,
}

impl Gate {
    fn new(criterion: u32) -> Gate {
        Gate { criterion, fails: Vec::new() }
    }

    fn check(&mut self, ok: bool, clause: String) {
        if !ok {
            self.fails.push(clause);
        }
    }

    fn finish(self) {
        if self.fails.is_empty() {
            println!("criterion {}: PASS", self.criterion);
        } else {
            println!("criterion {}: FAIL", self.criterion);
            for clause in &self.fails {
                println!("  - {clause}");
            }
            panic!("criterion {} missed {} clause(s)", self.criterion, self.fails.len());
        }
    }
}

#[test]
fn criterion_1_refinement_chain_reproduces_published_rounds() {
    let mut gate = Gate::new(1);
    let (body, code, elapsed) =
        run_cli(&["bounds", "--m", "91", "--k0", "7e11", "--x0", "704*2^60", "--mode", "computer1"]);

    gate.check(code == 0, format!("exit code {code}, expected 0"));
    gate.check(
        body["verdict"] == "CONTRADICTION",
        format!("verdict {}, expected CONTRADICTION", body["verdict"]),
    );

    // Published per-round floors and ceilings: the window sizes and K bounds
    // are floors, the epsilon upper endpoints are ceilings.
    let m2_floors = [47u64, 67, 77, 82, 86, 88, 91];
    let eps_ceilings = [
        sci(69, 33),
        sci(51, 37),
        sci(41, 39),
        sci(23, 40),
        sci(23, 41),
        sci(53, 42),
        sci(111, 45),
    ];
    let k_floors = [
        big10(52, 14),
        big10(397, 15),
        big10(464, 16),
        big10(274, 17),
        big10(776, 17),
        big10(205, 18),
        big10(794, 19),
    ];

    let rounds = body["rounds"].as_array().expect("rounds array");
    gate.check(rounds.len() == 7, format!("{} rounds, expected 7", rounds.len()));
    for (i, round) in rounds.iter().enumerate().take(7) {
        let m2 = as_u64(&round["m2"]);
        let eps = as_rat(&round["epsilon_hi"]);
        let k = as_big(&round["k_out"]);
        gate.check(m2 >= m2_floors[i], format!("round {}: m2 = {m2} < {}", i + 1, m2_floors[i]));
        gate.check(
            eps <= eps_ceilings[i],
            format!("round {}: epsilon upper endpoint above its ceiling", i + 1),
        );
        gate.check(k >= k_floors[i], format!("round {}: K = {k} < {}", i + 1, k_floors[i]));
    }

    gate.check(
        as_big(&body["final_k"]) > big10(22, 19),
        format!("final K {} does not exceed 2.2e20", body["final_k"]),
    );
    gate.check(elapsed < Duration::from_secs(60), format!("took {elapsed:?}, limit 60s"));
    gate.finish();
}

#[test]
fn criterion_2_table_rows_dominate_published_bounds() {
    let mut gate = Gate::new(2);
    let published = [
        (98u64, big10(776, 17)),
        (117, big10(274, 17)),
        (369, big10(464, 16)),
        (4366, big10(397, 15)),
        (17096, big10(130, 15)),
        (802_380, big10(526, 13)),
        (1_890_000_000, big10(164, 10)),
        (2_180_000_000, big10(890, 9)),
        (13_400_000_000, big10(137, 9)),
    ];
    let (body, code, elapsed) = run_cli(&[
        "table",
        "--m",
        "98,117,369,4366,17096,802380,1.89e9,2.18e9,1.34e10",
        "--trust-certificate",
    ]);

    gate.check(code == 0, format!("exit code {code}, expected 0"));
    let rows = body["rows"].as_array().expect("rows array");
    gate.check(rows.len() == published.len(), format!("{} rows, expected 9", rows.len()));
    for (row, (m, floor)) in rows.iter().zip(&published) {
        let row_m = as_u64(&row["m"]);
        let bound = as_big(&row["k_bound"]);
        gate.check(row_m == *m, format!("row order: got m = {row_m}, expected {m}"));
        gate.check(&bound >= floor, format!("m = {m}: bound {bound} below published {floor}"));
    }
    gate.check(elapsed < Duration::from_secs(600), format!("took {elapsed:?}, limit 600s"));
    gate.finish();
}

#[test]
fn criterion_3_threshold_windows_match_published_figures() {
    let mut gate = Gate::new(3);
    let unit = BigUint::one() << 60u32;

    let (weighted, code_w, t_w) =
        run_cli(&["threshold", "--k-target", "1.375e11", "--mode", "theorem20"]);
    gate.check(code_w == 0, format!("weighted exit code {code_w}, expected 0"));

    // Four significant figures of agreement with the published 1.1032e-22
    // means the whole enclosure sits inside its half-ulp window.
    let eps_lo = as_rat(&weighted["eps_star_lo"]);
    let eps_hi = as_rat(&weighted["eps_star_hi"]);
    gate.check(
        eps_lo >= sci(110_315, 27) && eps_hi <= sci(110_325, 27),
        "eps* enclosure does not round to the published 1.1032e-22".to_string(),
    );
    let x0_w = as_big(&weighted["x0_required"]);
    gate.check(
        x0_w >= BigUint::from(2835u32) * &unit && x0_w <= BigUint::from(2837u32) * &unit,
        format!("weighted X0 requirement {x0_w} outside [2835, 2837] * 2^60"),
    );

    let (legacy, code_l, t_l) = run_cli(&["threshold", "--k-target", "1.375e11", "--mode", "legacy"]);
    gate.check(code_l == 0, format!("legacy exit code {code_l}, expected 0"));
    let x0_l = as_big(&legacy["x0_required"]);
    gate.check(
        x0_l >= BigUint::from(3780u32) * &unit && x0_l <= BigUint::from(3782u32) * &unit,
        format!("legacy X0 requirement {x0_l} outside [3780, 3782] * 2^60"),
    );

    let elapsed = t_w + t_l;
    gate.check(elapsed < Duration::from_secs(5), format!("took {elapsed:?}, limit 5s"));
    gate.finish();
}

// Just under 3/4 the symbolic suprema are too coarse to close every window,
// so the open counts separate the two frontier modes at equal depth.
const KNIFE_EDGE_TARGET: &str = "29999999999999999999999996/40000000000000000000000000";

#[test]
fn criterion_4_average_bound_verdicts_and_concrete_reduction() {
    let mut gate = Gate::new(4);

    let proven_runs =
        [("unweighted", "35/18", "2"), ("unweighted", "97/54", "3"), ("weighted", "3/4", "3")];
    for (mode, target, depth) in proven_runs {
        let (body, code, elapsed) = run_cli(&[
            "search", "--mode", mode, "--target", target, "--depth", depth, "--x0", "symbolic",
        ]);
        let label = format!("{mode} {target} depth {depth}");
        gate.check(code == 0, format!("{label}: exit code {code}, expected 0"));
        gate.check(
            body["verdict"] == "PROVEN",
            format!("{label}: verdict {}, expected PROVEN", body["verdict"]),
        );
        gate.check(
            elapsed < Duration::from_secs(10),
            format!("{label}: took {elapsed:?}, limit 10s"),
        );
    }

    let (false_body, false_code, _) =
        run_cli(&["search", "--mode", "unweighted", "--target", "1", "--depth", "1"]);
    let false_witnesses = false_body["witnesses"].as_array().expect("witnesses array").len();
    gate.check(false_code == 2, format!("target 1: exit code {false_code}, expected 2"));
    gate.check(
        false_body["verdict"] == "FALSE",
        format!("target 1: verdict {}, expected FALSE", false_body["verdict"]),
    );
    gate.check(false_witnesses > 0, "target 1: empty witness set".to_string());

    // A concrete frontier must strictly shrink the open set left by the
    // symbolic one at the same depth.
    let (loose, _, _) = run_cli(&[
        "search", "--mode", "weighted", "--target", KNIFE_EDGE_TARGET, "--depth", "3", "--x0",
        "symbolic",
    ]);
    let (tight, _, _) = run_cli(&[
        "search", "--mode", "weighted", "--target", KNIFE_EDGE_TARGET, "--depth", "3", "--x0",
        "704*2^60",
    ]);
    let open_loose = loose["witnesses"].as_array().expect("witnesses array").len();
    let open_tight = tight["witnesses"].as_array().expect("witnesses array").len();
    gate.check(open_loose > 0, "knife edge: symbolic run left no open nodes".to_string());
    gate.check(
        open_tight < open_loose,
        format!("knife edge: concrete open count {open_tight} not below symbolic {open_loose}"),
    );
    gate.finish();
}

#[test]
fn criterion_5_closed_nodes_survive_concrete_sampling() {
    let mut gate = Gate::new(5);
    // Closure claims hold for every frontier above the symbolic threshold;
    // a small instantiation keeps the sampled classes dense.
    let x0 = BigUint::from(1_000_000u32);
    let runs = [(AverageMode::Unweighted, rat(97, 54), 3), (AverageMode::Weighted, rat(3, 4), 3)];
    for (mode, target, depth) in runs {
        let mut config = SearchConfig::new(mode, target.clone(), XZeroMode::Symbolic, depth);
        config.collect_closed = true;
        let outcome = prove_average_bound(&config);
        gate.check(outcome.proven, format!("{mode:?} target {target}: search did not close"));
        gate.check(
            !outcome.closed.is_empty(),
            format!("{mode:?} target {target}: no closed nodes recorded"),
        );
        for node in &outcome.closed {
            match soundness_sample(node, &config, &x0, 100) {
                Ok(checked) => gate.check(
                    checked == 100,
                    format!(
                        "{mode:?} target {target}: {checked} of 100 members checked at {:?}",
                        node.state.decisions
                    ),
                ),
                Err(detail) => gate.check(
                    false,
                    format!("{mode:?} target {target}: sampling violation, {detail}"),
                ),
            }
        }
    }
    gate.finish();
}

// First fraction found by scanning denominators upward; the smallest
// denominator in an open rational interval never exceeds the sum of the
// endpoint denominators.
fn brute_force_smallest(alpha: &Rational, beta: &Rational) -> Rational {
    let bound = alpha.denom() + beta.denom();
    let mut d = BigInt::one();
    while d <= bound {
        let scaled = alpha * Rational::from_integer(d.clone());
        let p = scaled.floor().to_integer() + 1;
        let cand = Rational::new(p, d.clone());
        if &cand < beta {
            return cand;
        }
        d += 1;
    }
    panic!("no fraction with denominator <= {bound} in ({alpha}, {beta})");
}

// Quotients of log2(3) certified by an exact rational series bracket.
const DELTA_QUOTIENTS: [u32; 40] = [
    1, 1, 1, 2, 2, 3, 1, 5, 2, 23, 2, 2, 1, 1, 55, 1, 4, 3, 1, 1, 15, 1, 9, 2, 5, 7, 1, 1, 4, 8,
    1, 11, 1, 20, 2, 1, 10, 1, 4, 1,
];

#[test]
fn criterion_6_continued_fraction_oracle_agreement() {
    let mut gate = Gate::new(6);

    let mut rng = ChaCha8Rng::seed_from_u64(0xacce_60a1);
    let random_rational = |rng: &mut ChaCha8Rng| {
        let d: i64 = rng.gen_range(1..=200);
        let n: i64 = rng.gen_range(0..=3 * d);
        rat(n, d)
    };
    let mut done = 0u32;
    let mut mismatches = 0u32;
    let mut enclosure_hits = 0u32;
    while done < 10_000 {
        let (a, b) = (random_rational(&mut rng), random_rational(&mut rng));
        let (alpha, beta) = match a.cmp(&b) {
            std::cmp::Ordering::Less => (a, b),
            std::cmp::Ordering::Greater => (b, a),
            std::cmp::Ordering::Equal => continue,
        };
        let gamma = smallest_denominator_between(&alpha, &beta).value();
        if gamma != brute_force_smallest(&alpha, &beta) || gamma <= alpha || gamma >= beta {
            mismatches += 1;
            if mismatches <= 3 {
                gate.check(false, format!("interval ({alpha}, {beta}): got {gamma}"));
            }
        }
        // The enclosure form may refuse when an endpoint's own denominator
        // undercuts the answer, but a committed result must agree.
        if let Ok(found) = smallest_denominator_in_open_interval(
            &RealInterval::from_rational(&alpha, 256),
            &RealInterval::from_rational(&beta, 256),
        ) {
            enclosure_hits += 1;
            gate.check(
                found.value() == gamma,
                format!("enclosure form disagrees on ({alpha}, {beta})"),
            );
        }
        done += 1;
    }
    gate.check(mismatches == 0, format!("{mismatches} of {done} intervals disagreed"));
    gate.check(enclosure_hits > 0, "enclosure form never committed".to_string());

    let cf = cf_expand(&delta_interval(256), DELTA_QUOTIENTS.len()).expect("expansion succeeds");
    let got = &cf.partial_quotients;
    gate.check(got.len() >= 20, format!("only {} certain quotients at 256 bits", got.len()));
    let overlap = got.len().min(DELTA_QUOTIENTS.len());
    for (i, q) in got.iter().take(overlap).enumerate() {
        gate.check(
            *q == BigInt::from(DELTA_QUOTIENTS[i]),
            format!("quotient {i}: got {q}, expected {}", DELTA_QUOTIENTS[i]),
        );
    }
    gate.finish();
}

#[test]
fn criterion_7_kernel_exhaustive_and_range_verification() {
    let mut gate = Gate::new(7);

    // Exhaustive equivalence of the closed-form run with literal stepping.
    let mut bad_runs = 0u64;
    let mut n = BigUint::one();
    let limit = BigUint::from(1u32 << 20);
    while n < limit {
        let (k, end) = accel_odd_run(&n);
        let mut x = n.clone();
        let mut clean = true;
        for _ in 0..k {
            clean &= x.is_odd();
            x = collatz_step(&x);
        }
        if !clean || x != end || end.is_odd() {
            bad_runs += 1;
        }
        n += 2u32;
    }
    gate.check(bad_runs == 0, format!("{bad_runs} odd starts below 2^20 disagreed"));

    // Run-length structure: n = a * 2^k - 1 runs at least k odd steps,
    // exactly k when a is odd.
    let mut rng = ChaCha8Rng::seed_from_u64(0xacce_0d01);
    let mut structure_misses = 0u64;
    for _ in 0..100_000 {
        let a: u64 = rng.gen_range(1..(1u64 << 40));
        let k: u32 = rng.gen_range(1..=40);
        let start = BigUint::from(a) * (BigUint::one() << k) - 1u32;
        let (run, _) = accel_odd_run(&start);
        if run < k as u64 || (a % 2 == 1 && run != k as u64) {
            structure_misses += 1;
        }
    }
    gate.check(structure_misses == 0, format!("{structure_misses} run-length misses in 1e5"));

    // Growth of consecutive minima stays below the critical power, decided
    // conservatively on logarithms.
    let delta = delta_interval(96);
    let mut rng = ChaCha8Rng::seed_from_u64(0xacce_94a1);
    let mut growth_misses = 0u64;
    let mut pairs = 0u64;
    while pairs < 100_000 {
        let start = BigUint::from(rng.gen_range(3u64..(1u64 << 48)) | 1);
        let trajectory = profile(&start, 6);
        for w in trajectory.minima.windows(2) {
            let a = RealInterval::from_bigint(&BigInt::from(w[0].n.clone()), 96);
            let b = RealInterval::from_bigint(&BigInt::from(w[1].n.clone()), 96);
            let lhs = b.ln().unwrap();
            let rhs = delta.mul(&a.ln().unwrap());
            if !cmp_conservative(&lhs, &rhs).is_true() {
                growth_misses += 1;
            }
            pairs += 1;
        }
    }
    gate.check(growth_misses == 0, format!("{growth_misses} growth misses in 1e5 pairs"));

    let (body, code, elapsed) = run_cli(&["verify-range", "--limit", "1e8"]);
    gate.check(code == 0, format!("verify-range exit code {code}, expected 0"));
    gate.check(
        body["verified"] == Value::Bool(true),
        format!("verify-range verdict {}, expected true", body["verified"]),
    );
    gate.check(
        as_big(&body["max_excursion"]) == BigUint::from(1_092_571_914_585_050u64),
        format!("max excursion {}, expected 1092571914585050", body["max_excursion"]),
    );
    gate.check(elapsed < Duration::from_secs(300), format!("took {elapsed:?}, limit 300s"));
    gate.finish();
}

#[test]
fn criterion_8_worker_count_determinism() {
    let mut gate = Gate::new(8);
    let commands: [&[&str]; 10] = [
        &["bounds", "--m", "91", "--k0", "7e11", "--x0", "704*2^60", "--mode", "computer1"],
        &["table", "--m", "98,117,369,4366,17096,802380,1.89e9,2.18e9,1.34e10", "--trust-certificate"],
        &["threshold", "--k-target", "1.375e11", "--mode", "theorem20"],
        &["threshold", "--k-target", "1.375e11", "--mode", "legacy"],
        &["search", "--mode", "unweighted", "--target", "35/18", "--depth", "2"],
        &["search", "--mode", "unweighted", "--target", "97/54", "--depth", "3"],
        &["search", "--mode", "weighted", "--target", "3/4", "--depth", "3"],
        &["search", "--mode", "unweighted", "--target", "1", "--depth", "1"],
        &["search", "--mode", "weighted", "--target", KNIFE_EDGE_TARGET, "--depth", "3"],
        &[
            "search", "--mode", "weighted", "--target", KNIFE_EDGE_TARGET, "--depth", "3", "--x0",
            "704*2^60",
        ],
    ];

    // Only the labeled timing field may differ between runs.
    let strip_timing = |text: &str| {
        text.lines().filter(|l| !l.contains("\"elapsed_ms\"")).collect::<Vec<_>>().join("\n")
    };
    for command in commands {
        let mut serial = vec!["--format", "json", "--workers", "1"];
        serial.extend_from_slice(command);
        let mut parallel = vec!["--format", "json", "--workers", "4"];
        parallel.extend_from_slice(command);
        let (out_serial, code_serial) = raw_cli(&serial);
        let (out_parallel, code_parallel) = raw_cli(&parallel);
        gate.check(
            code_serial == code_parallel,
            format!("{command:?}: exit codes {code_serial} vs {code_parallel}"),
        );
        gate.check(
            strip_timing(&out_serial) == strip_timing(&out_parallel),
            format!("{command:?}: bodies differ between 1 and 4 workers"),
        );
    }
    gate.finish();
}
