//! Bound-refinement pipeline for hypothetical cycles: rigorous enclosures
//! of (K+L)/K − δ from reciprocal-sum constants, smallest-denominator
//! obstructions turning each enclosure into a larger lower bound on the
//! odd-member count K, bound tables over many minima counts m, and
//! frontier thresholds for reaching a target K.

use crate::contfrac::{cf_expand, cf_expand_rational, smallest_denominator_in_open_interval};
use crate::numerics::{
    cmp_conservative, delta_interval, ln2_interval, with_precision_retry, NumericsError,
    Rational, RealInterval, TriState, PRECISION_CEILING_BITS,
};
use num_bigint::{BigInt, BigUint};
use num_traits::{One, Zero};

/// Which per-minimum reciprocal-sum constant backs the ε computation.
///
/// `Analytic9754` is the closed-form 97/54 average, valid for any frontier
/// above the minimum. `Computer1` adds the case-certificate average of 1
/// per minimum, established at the frontier of [`certificate_frontier`],
/// and never exceeds the analytic constant. `Weighted34` is the o-step
/// weighted 3/4 average, independent of both m and K.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TConstantMode {
    Analytic9754,
    Computer1,
    Weighted34,
}

/// How the forced-window size m2 is picked each round.
///
/// The largest feasible window is the default, but a larger window is not
/// always the better one: the incomplete tail of its leading stretch can
/// cost slightly more than the window saves, and near knife edges that
/// sliver decides whether the next obstruction falls inside the interval.
/// The exhaustive strategy scans every feasible size and keeps the one
/// with the smallest ε upper endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum M2Strategy {
    #[default]
    MaximalFeasible,
    BestEpsilon,
}

/// Frontier at which the unweighted per-window certificate was
/// established: 704·2^60.
pub fn certificate_frontier() -> BigUint {
    BigUint::from(704u32) << 60
}

/// Unconditional lower bound on the odd-member count of any nontrivial
/// cycle: 7.2·10^10. Safe starting point for every refinement chain.
pub fn baseline_k_bound() -> BigUint {
    BigUint::from(72u32) * BigUint::from(10u32).pow(9)
}

/// Smallest frontier for which the analytic reciprocal-sum lemmas hold.
pub const MIN_FRONTIER: u32 = 766;

/// Rounds after which a refinement chain gives up; the documented chains
/// converge in at most seven.
pub const ITERATION_ROUND_CAP: usize = 50;

// Reported ε endpoints below this scale are widened outward to it (or to
// zero). Small m with a large K drives the window bound to scales like
// 2^-10^10, far past anything distinguishable here, and the widening keeps
// every reported endpoint materializable as an exact rational.
const EPSILON_FLOOR_EXP: i64 = -(1 << 14);

#[derive(Debug, Clone)]
pub struct GlobalConfig {
    /// Verified convergence frontier X0: every n <= x0 reaches the trivial
    /// cycle, so every cycle member exceeds it.
    pub x0: BigUint,
    pub t_constant_mode: TConstantMode,
    pub m2_strategy: M2Strategy,
    pub precision_bits: u32,
}

impl GlobalConfig {
    pub fn new(x0: BigUint, t_constant_mode: TConstantMode, precision_bits: u32) -> GlobalConfig {
        assert!(x0 >= BigUint::from(MIN_FRONTIER), "frontier below the analytic minimum");
        if t_constant_mode == TConstantMode::Computer1 {
            assert!(x0 >= certificate_frontier(), "certificate mode needs the certificate frontier");
        }
        GlobalConfig { x0, t_constant_mode, m2_strategy: M2Strategy::default(), precision_bits }
    }

    pub fn with_m2_strategy(mut self, m2_strategy: M2Strategy) -> GlobalConfig {
        self.m2_strategy = m2_strategy;
        self
    }

    fn x0_rational(&self) -> Rational {
        Rational::from_integer(BigInt::from(self.x0.clone()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Improved,
    FixedPoint,
    Contradiction,
}

/// One refinement round: the enclosure computed for the entering bound and
/// the smallest-denominator obstruction it yields.
#[derive(Debug, Clone)]
pub struct BoundReport {
    pub m: u64,
    pub k_in: BigUint,
    pub m2: u64,
    /// Window o-step exponent; absent when m2 = 0 or in the weighted mode.
    pub v: Option<RealInterval>,
    pub epsilon: RealInterval,
    pub k_out: BigUint,
    pub verdict: Verdict,
    pub mode: TConstantMode,
    /// Precision at which every comparison in the round was decided.
    pub precision_bits: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TableRow {
    pub m: u64,
    pub k_bound: BigUint,
}

/// Coefficient backing a frontier threshold: the weighted constant gives
/// 1/(4 log 2 · ε*), the prior-art constant 1/(3 log 2 · ε*).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThresholdMode {
    Weighted,
    Legacy,
}

// Interval power with a plain integer exponent, by squaring; stays much
// tighter than the exp/ln route and never fails.
fn ipow_u64(base: &RealInterval, mut e: u64) -> RealInterval {
    let mut acc = RealInterval::from_i64(1, base.precision_bits());
    let mut sq = base.clone();
    while e > 0 {
        if e & 1 == 1 {
            acc = acc.mul(&sq);
        }
        e >>= 1;
        if e > 0 {
            sq = sq.mul(&sq);
        }
    }
    acc
}

// The m2 feasibility predicate, cross-multiplied by m to avoid divisions:
// m·(δ^{m2}−1)·log(162/97·X0) <= m2·K·(δ−1)·log 2.
fn m2_feasible(m: u64, m2: u64, k: &BigUint, config: &GlobalConfig, bits: u32) -> TriState {
    if m2 == 0 {
        return TriState::True;
    }
    let delta = delta_interval(bits);
    let one = RealInterval::from_i64(1, bits);
    let growth = ipow_u64(&delta, m2).sub(&one);
    let window_arg = Rational::new(BigInt::from(162) * BigInt::from(config.x0.clone()), BigInt::from(97));
    let log_window = RealInterval::from_rational(&window_arg, bits)
        .ln()
        .expect("window argument is strictly positive");
    let lhs = RealInterval::from_u64(m, bits).mul(&growth).mul(&log_window);
    let rhs = RealInterval::from_rational(
        &Rational::from_integer(BigInt::from(m2) * BigInt::from(k.clone())),
        bits,
    )
    .mul(&delta.sub(&one))
    .mul(&ln2_interval(bits));
    cmp_conservative(&lhs, &rhs)
}

/// Largest m2 in [0, m] whose window premise is certain at interval
/// precision; infeasible and undecidable candidates both count as false.
pub fn choose_m2(m: u64, k: &BigUint, config: &GlobalConfig) -> u64 {
    assert!(m >= 1, "minima count must be positive");
    assert!(!k.is_zero(), "entering bound must be positive");
    // The premise forces δ^{m2-1} <= K, so the cap loses nothing.
    let cap = m.min(2 * k.bits() + 64);
    for m2 in (1..=cap).rev() {
        let mut bits = config.precision_bits;
        loop {
            match m2_feasible(m, m2, k, config, bits) {
                TriState::True => return m2,
                TriState::False => break,
                TriState::Unknown => {
                    if bits >= PRECISION_CEILING_BITS {
                        break;
                    }
                    bits = (bits * 2).min(PRECISION_CEILING_BITS);
                }
            }
        }
    }
    0
}

// Exact leading term of the T-sum bound: the window of m1 = m − m2 minima
// preceding the forced-large tail, as a rational multiple of 1.
//
// The certificate option bounds complete sub-windows of up to 60 minima by
// 1/frontier each; an incomplete final stretch of p <= 59 minima falls
// back to the analytic (97p+73)/54 bound, worst at p = 59, adding 145/3.
fn leading_window_term(m: u64, m2: u64, config: &GlobalConfig) -> Rational {
    let x0 = config.x0_rational();
    if m2 == m {
        return Rational::zero();
    }
    if m2 == m - 1 {
        // A single leading minimum only carries its trivial bound.
        return Rational::from_integer(BigInt::from(3)) / x0;
    }
    let m1 = m - m2;
    let analytic = Rational::new(BigInt::from(97) * BigInt::from(m1) + BigInt::from(73), BigInt::from(54)) / &x0;
    match config.t_constant_mode {
        TConstantMode::Analytic9754 => analytic,
        TConstantMode::Computer1 => {
            let frontier = Rational::from_integer(BigInt::from(certificate_frontier()));
            let certified = Rational::new(BigInt::from(3) * BigInt::from(m1) + BigInt::from(145), BigInt::from(3)) / frontier;
            analytic.min(certified)
        }
        TConstantMode::Weighted34 => unreachable!("weighted mode has no leading window"),
    }
}

// Exact full-cycle T-sum constant when no window is forced large: the
// cyclic wrap removes the incomplete-tail excess entirely.
fn full_cycle_term(m: u64, config: &GlobalConfig) -> Rational {
    let x0 = config.x0_rational();
    let analytic = Rational::new(BigInt::from(97) * BigInt::from(m), BigInt::from(54)) / &x0;
    match config.t_constant_mode {
        TConstantMode::Analytic9754 => analytic,
        TConstantMode::Computer1 => {
            let frontier = Rational::from_integer(BigInt::from(certificate_frontier()));
            let certified = Rational::from_integer(BigInt::from(m)) / frontier;
            analytic.min(certified)
        }
        TConstantMode::Weighted34 => unreachable!("weighted mode ignores m"),
    }
}

// Enclosures of the round quantities at one working precision: the window
// exponent v (when m2 >= 1) and ε itself.
fn epsilon_parts(
    m: u64,
    k: &BigUint,
    m2: u64,
    config: &GlobalConfig,
    bits: u32,
) -> Result<(Option<RealInterval>, RealInterval), NumericsError> {
    let ln2 = ln2_interval(bits);
    if config.t_constant_mode == TConstantMode::Weighted34 {
        // K-independent: the weighted T-average cancels K exactly, leaving
        // (3/4) / (3 log 2 · X0) = 1 / (4 log 2 · X0).
        let quarter = Rational::new(BigInt::one(), BigInt::from(4) * BigInt::from(config.x0.clone()));
        let eps = RealInterval::from_rational(&quarter, bits).div(&ln2)?;
        return Ok((None, eps.widen_below(EPSILON_FLOOR_EXP)));
    }
    let prefactor = RealInterval::from_rational(
        &Rational::new(BigInt::one(), BigInt::from(3) * BigInt::from(k.clone())),
        bits,
    )
    .div(&ln2)?;
    if m2 == 0 {
        let sum_t = RealInterval::from_rational(&full_cycle_term(m, config), bits);
        return Ok((None, prefactor.mul(&sum_t).widen_below(EPSILON_FLOOR_EXP)));
    }
    let delta = delta_interval(bits);
    let one = RealInterval::from_i64(1, bits);
    let growth = ipow_u64(&delta, m2).sub(&one);
    let share = RealInterval::from_rational(
        &Rational::new(BigInt::from(m2) * BigInt::from(k.clone()), BigInt::from(m)),
        bits,
    );
    let v = share.mul(&delta.sub(&one)).div(&growth)?;
    let two_v = RealInterval::from_i64(2, bits).pow(&v)?;
    let base = two_v.sub(&one);
    if !base.is_strictly_positive() {
        return Err(NumericsError::InsufficientPrecision { bits });
    }
    let head = RealInterval::from_i64(3, bits).div(&base)?;
    let tail = if m2 >= 2 {
        let powd = base.pow(&delta)?;
        RealInterval::from_rational(&Rational::from_integer(BigInt::from(3) * BigInt::from(m2 - 1)), bits)
            .div(&powd)?
    } else {
        RealInterval::from_i64(0, bits)
    };
    let lead = RealInterval::from_rational(&leading_window_term(m, m2, config), bits);
    let eps = prefactor.mul(&lead.add(&head).add(&tail));
    Ok((Some(v), eps.widen_below(EPSILON_FLOOR_EXP)))
}

/// Rigorous upper enclosure of (K+L)/K − δ for an m-cycle with at least
/// K odd members, given a forced-large window of m2 minima.
pub fn epsilon_bound(
    m: u64,
    k: &BigUint,
    m2: u64,
    config: &GlobalConfig,
) -> Result<RealInterval, NumericsError> {
    assert!(m >= 1 && m2 <= m, "window exceeds the minima count");
    assert!(!k.is_zero(), "entering bound must be positive");
    with_precision_retry(config.precision_bits, PRECISION_CEILING_BITS, |bits| {
        epsilon_parts(m, k, m2, config, bits).map(|(_, eps)| eps)
    })
}

/// Enclosure of the published cycle-size ceiling 1.4784·m·δ^m.
pub fn sw_upper_bound(m: u64, precision_bits: u32) -> RealInterval {
    assert!(m >= 1, "minima count must be positive");
    let delta = delta_interval(precision_bits);
    let scale = Rational::new(BigInt::from(14784) * BigInt::from(m), BigInt::from(10000));
    RealInterval::from_rational(&scale, precision_bits).mul(&ipow_u64(&delta, m))
}

// Certain comparison of k against the cycle-size ceiling, in log space so
// astronomically large m never materializes δ^m as a rational.
fn certainly_exceeds_ceiling(k: &BigUint, m: u64, bits: u32) -> Result<bool, NumericsError> {
    let ln_k = RealInterval::from_bigint(&BigInt::from(k.clone()), bits).ln()?;
    let delta = delta_interval(bits);
    let ln_scale = RealInterval::from_rational(&Rational::new(BigInt::from(14784), BigInt::from(10000)), bits).ln()?;
    let ln_m = RealInterval::from_u64(m, bits).ln()?;
    let ln_ceiling = ln_scale.add(&ln_m).add(&RealInterval::from_u64(m, bits).mul(&delta.ln()?));
    Ok(cmp_conservative(&ln_ceiling, &ln_k) == TriState::True)
}

enum DenomProbe {
    Within,
    Exceeds(BigUint),
}

// Floor for every denominator in the open interval (lo, hi): once the
// shared expansion prefix of the endpoints reaches a convergent
// denominator above `cap`, so has every fraction between them. Keeps
// chains from impossibly large starting bounds from expanding forever.
fn denominator_probe(lo: &Rational, hi: &Rational, cap: &BigInt) -> DenomProbe {
    let mut terms = 48usize;
    loop {
        let cf = match cf_expand_rational(lo, hi, terms) {
            // No shared first quotient: the interval is wide, nothing to cap.
            Err(_) => return DenomProbe::Within,
            Ok(cf) => cf,
        };
        let mut q_prev = BigInt::one();
        let mut q_curr = BigInt::zero();
        for a in &cf.partial_quotients {
            let q_next = a * &q_curr + &q_prev;
            q_prev = std::mem::replace(&mut q_curr, q_next);
            if &q_curr > cap {
                return DenomProbe::Exceeds(q_curr.to_biguint().expect("denominators are positive"));
            }
        }
        if cf.partial_quotients.len() < terms || cf.exact {
            return DenomProbe::Within;
        }
        terms *= 2;
    }
}

// One refinement round at one working precision. The feasibility premise
// is downward closed: (δ^{m2}−1)/m2 grows with m2, so every size below
// `m2_max` is feasible too and the exhaustive strategy may scan them all.
fn round_at(
    m: u64,
    k_in: &BigUint,
    m2_max: u64,
    config: &GlobalConfig,
    bits: u32,
) -> Result<(u64, Option<RealInterval>, RealInterval, BigUint), NumericsError> {
    let (m2, v, eps) = match config.m2_strategy {
        M2Strategy::MaximalFeasible => {
            let (v, eps) = epsilon_parts(m, k_in, m2_max, config, bits)?;
            (m2_max, v, eps)
        }
        M2Strategy::BestEpsilon => {
            let mut best: Option<(u64, Option<RealInterval>, RealInterval)> = None;
            // Downward scan with a strict compare keeps the largest of the
            // tied sizes, exact endpoint rationals keep it deterministic.
            for m2 in (0..=m2_max).rev() {
                let (v, eps) = epsilon_parts(m, k_in, m2, config, bits)?;
                if best.as_ref().is_none_or(|(_, _, b)| eps.hi_rational() < b.hi_rational()) {
                    best = Some((m2, v, eps));
                }
            }
            best.expect("the scan range is never empty")
        }
    };
    let delta = delta_interval(bits);
    let upper = delta.add(&eps);
    // Far beyond any denominator the exact search should surface; only a
    // pathologically narrow enclosure trips it, and then the floor alone
    // already decides the verdict.
    let cap = BigInt::from(k_in.clone()) << 24;
    let k_out = match denominator_probe(&delta.lo_rational(), &upper.hi_rational(), &cap) {
        DenomProbe::Exceeds(q) => q,
        DenomProbe::Within => {
            let f = smallest_denominator_in_open_interval(&delta, &upper)?;
            f.denominator.to_biguint().expect("denominators are positive")
        }
    };
    Ok((m2, v, eps, k_out))
}

/// Repeats window selection, ε enclosure, and denominator extraction until
/// the bound stops improving, the round cap trips, or the bound exceeds
/// the cycle-size ceiling outright.
pub fn iterate_bounds(
    m: u64,
    k_start: &BigUint,
    config: &GlobalConfig,
) -> Result<Vec<BoundReport>, NumericsError> {
    assert!(m >= 1, "minima count must be positive");
    assert!(!k_start.is_zero(), "starting bound must be positive");
    let mut reports = Vec::new();
    let mut k = k_start.clone();
    for _ in 0..ITERATION_ROUND_CAP {
        let m2_max = match config.t_constant_mode {
            TConstantMode::Weighted34 => 0,
            _ => choose_m2(m, &k, config),
        };
        let mut decided_bits = config.precision_bits;
        let (m2, v, eps, k_out) =
            with_precision_retry(config.precision_bits, PRECISION_CEILING_BITS, |bits| {
                decided_bits = bits;
                round_at(m, &k, m2_max, config, bits)
            })?;
        let verdict = if certainly_exceeds_ceiling(&k_out, m, decided_bits)? {
            Verdict::Contradiction
        } else if k_out > k {
            Verdict::Improved
        } else {
            Verdict::FixedPoint
        };
        reports.push(BoundReport {
            m,
            k_in: k.clone(),
            m2,
            v,
            epsilon: eps,
            k_out: k_out.clone(),
            verdict,
            mode: config.t_constant_mode,
            precision_bits: decided_bits,
        });
        match verdict {
            Verdict::Improved => k = k_out,
            _ => break,
        }
    }
    Ok(reports)
}

/// Final refined bound for one minima count: the last improved bound when
/// the chain parks at a fixed point, the closing bound otherwise.
pub fn table_row(
    m: u64,
    k_start: &BigUint,
    config: &GlobalConfig,
) -> Result<TableRow, NumericsError> {
    let reports = iterate_bounds(m, k_start, config)?;
    let k_bound = match reports.last() {
        None => k_start.clone(),
        Some(r) => match r.verdict {
            Verdict::FixedPoint => r.k_in.clone(),
            _ => r.k_out.clone(),
        },
    };
    Ok(TableRow { m, k_bound })
}

/// Final refined bound per minima count. Certificate-backed rows demand an
/// explicit acknowledgement that the engine certificate is trusted.
pub fn generate_table(
    m_values: &[u64],
    k_start: &BigUint,
    config: &GlobalConfig,
    trust_certificate: bool,
) -> Result<Vec<TableRow>, NumericsError> {
    if config.t_constant_mode == TConstantMode::Computer1 {
        assert!(trust_certificate, "certificate-backed table rows need the trust flag");
    }
    m_values.iter().map(|&m| table_row(m, k_start, config)).collect()
}

/// Sharp threshold for a target bound: ε* is the exact gap from δ up to
/// the nearest fraction above it with denominator below the target, and
/// the required frontier is the ceiling of 1/(c·log 2·ε*) for the mode's
/// coefficient c.
pub fn x0_threshold(
    k_target: &BigUint,
    mode: ThresholdMode,
    precision_bits: u32,
) -> Result<(RealInterval, BigUint), NumericsError> {
    assert!(*k_target >= BigUint::from(2u32), "target below the first obstruction");
    let q_bound = BigInt::from(k_target - 1u32);
    with_precision_retry(precision_bits.max(256), PRECISION_CEILING_BITS, |bits| {
        let delta = delta_interval(bits);
        let cf = cf_expand(&delta, 512)?;
        // Exact convergents of the validated prefix; the expansion must
        // already overshoot the denominator bound to pin the best one.
        let mut p_prev = BigInt::zero();
        let mut p_curr = BigInt::one();
        let mut q_prev = BigInt::one();
        let mut q_curr = BigInt::zero();
        let mut below: Option<(usize, BigInt, BigInt)> = None;
        let mut overshoot = false;
        for (idx, a) in cf.partial_quotients.iter().enumerate() {
            let p_next = a * &p_curr + &p_prev;
            let q_next = a * &q_curr + &q_prev;
            p_prev = std::mem::replace(&mut p_curr, p_next);
            q_prev = std::mem::replace(&mut q_curr, q_next);
            if q_curr > q_bound {
                overshoot = true;
                break;
            }
            // Odd-index convergents approach from above.
            if idx % 2 == 1 {
                below = Some((idx, p_curr.clone(), q_curr.clone()));
            }
        }
        if !overshoot {
            return Err(NumericsError::InsufficientPrecision { bits });
        }
        let (_, p_j, q_j) = below.expect("denominator 1 is always admissible");
        // Refine along the mediants toward the next convergent from above;
        // every step shrinks the fraction while keeping it above δ.
        let steps = (&q_bound - &q_j) / &q_prev;
        let f_min = Rational::new(&p_j + &steps * &p_prev, &q_j + steps * &q_prev);
        let eps_star = RealInterval::from_rational(&f_min, bits).sub(&delta);
        if !eps_star.is_strictly_positive() {
            return Err(NumericsError::InsufficientPrecision { bits });
        }
        let coefficient = match mode {
            ThresholdMode::Weighted => 4,
            ThresholdMode::Legacy => 3,
        };
        let denom = RealInterval::from_i64(coefficient, bits)
            .mul(&ln2_interval(bits))
            .mul(&eps_star);
        let needed = denom.recip()?;
        let required = needed
            .hi_rational()
            .ceil()
            .to_integer()
            .to_biguint()
            .expect("thresholds are positive");
        Ok((eps_star, required))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(mode: TConstantMode) -> GlobalConfig {
        GlobalConfig::new(certificate_frontier(), mode, 384)
    }

    fn pow10(e: u32) -> BigUint {
        BigUint::from(10u32).pow(e)
    }

    #[test]
    fn window_selection_reproduces_documented_choices() {
        let config = cfg(TConstantMode::Computer1);
        let k0 = BigUint::from(7u32) * pow10(11);
        assert_eq!(choose_m2(91, &k0, &config), 47);
        let k_late = BigUint::from(205u32) * pow10(18);
        assert_eq!(choose_m2(91, &k_late, &config), 91);
        assert_eq!(choose_m2(91, &BigUint::one(), &config), 0);
    }

    #[test]
    fn mediant_walk_finds_the_first_obstruction() {
        // Brute force over bounded denominators agrees with the walk.
        let bits = 192;
        let delta = delta_interval(bits);
        for target in 2u32..=60 {
            let (eps_star, _) =
                x0_threshold(&BigUint::from(target), ThresholdMode::Weighted, bits).unwrap();
            let mut best: Option<Rational> = None;
            for q in 1..target {
                let q = BigInt::from(q);
                // floor(q·δ) is certain because δ's enclosure is far
                // narrower than the spacing of multiples of 1/q.
                let lo = (delta.lo_rational() * Rational::from_integer(q.clone())).floor();
                let hi = (delta.hi_rational() * Rational::from_integer(q.clone())).floor();
                assert_eq!(lo, hi);
                let candidate = Rational::new(lo.to_integer() + 1, q);
                if best.as_ref().is_none_or(|b| &candidate < b) {
                    best = Some(candidate);
                }
            }
            let f = best.unwrap();
            let implied = eps_star.add(&delta);
            assert!(implied.contains_rational(&f), "target {target}: walk disagrees with {f}");
        }
    }
}
