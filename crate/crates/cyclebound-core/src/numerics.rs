//! Exact rationals and outward-rounded real intervals.
//!
//! Every proof-relevant comparison in this crate is decided either on
//! `Rational` (exact) or on `RealInterval` (conservative). Interval endpoints
//! are dyadic numbers `mantissa * 2^exp` with a bounded mantissa, so the
//! endpoints themselves are exact rationals and every operation rounds
//! outward: the result interval always contains the exact result.
//!
//! Transcendental constants (log 2, log 3 and their ratio) are evaluated from
//! integer series with explicit tail bounds; no floating point is involved.

use num_bigint::{BigInt, Sign};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::sync::Mutex;
use thiserror::Error;

/// Arbitrary-precision rational in canonical form (positive denominator,
/// reduced). `num_rational` maintains the canonical form after every
/// operation.
pub type Rational = BigRational;

/// Shorthand for a rational from machine integers.
pub fn rat(numer: i64, denom: i64) -> Rational {
    Rational::new(BigInt::from(numer), BigInt::from(denom))
}

/// `r^k` for nonnegative integer k, exact.
pub fn rat_pow(r: &Rational, k: u32) -> Rational {
    Rational::new(r.numer().pow(k), r.denom().pow(k))
}

/// Default working precision for interval arithmetic, in mantissa bits.
pub const DEFAULT_PRECISION_BITS: u32 = 384;
/// Hard ceiling for the automatic precision-doubling retry.
pub const PRECISION_CEILING_BITS: u32 = 8192;

// Extra bits used internally while evaluating transcendental series, so the
// final outward rounding to the requested precision stays tight.
const GUARD_BITS: u32 = 64;

// Largest |exponent| for which a dyadic endpoint may be materialized as a
// Rational (2^|exp| digits). Proof paths never exceed this; quantities like
// delta^m for huge m are compared dyadically instead.
const MAX_MATERIALIZE_EXP: i64 = 1 << 21;

#[derive(Debug, Error)]
pub enum NumericsError {
    /// A comparison or expansion could not be decided at the given precision.
    #[error("insufficient precision at {bits} bits")]
    InsufficientPrecision { bits: u32 },
    /// Retry driver ran out of headroom.
    #[error("precision ceiling of {ceiling} bits exhausted")]
    PrecisionExhausted { ceiling: u32 },
    /// Logarithm or power of an interval that is not strictly positive.
    #[error("interval operand must be strictly positive")]
    NonpositiveBase,
    /// Division by an interval whose enclosure contains zero.
    #[error("division by an interval containing zero")]
    DivisorSpansZero,
    /// A dyadic exponent left the representable range.
    #[error("dyadic exponent overflow")]
    ExponentOverflow,
}

/// Conservative three-valued comparison result.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum TriState {
    True,
    False,
    Unknown,
}

impl TriState {
    pub fn is_true(self) -> bool {
        self == TriState::True
    }
    pub fn is_false(self) -> bool {
        self == TriState::False
    }
    pub fn is_unknown(self) -> bool {
        self == TriState::Unknown
    }
}

impl std::fmt::Display for TriState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            TriState::True => "TRUE",
            TriState::False => "FALSE",
            TriState::Unknown => "UNKNOWN",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Dir {
    Down,
    Up,
}

// A dyadic number mantissa * 2^exp, normalized so the mantissa is odd or
// zero. Exponents are i64: values like delta^m for m ~ 10^10 have exponents
// around 2*10^10, far inside the range, while the mantissa stays bounded by
// the working precision.
#[derive(Clone, Debug, PartialEq, Eq)]
struct Dyadic {
    mant: BigInt,
    exp: i64,
}

impl Dyadic {
    fn zero() -> Dyadic {
        Dyadic {
            mant: BigInt::zero(),
            exp: 0,
        }
    }

    fn from_bigint(n: &BigInt) -> Dyadic {
        Dyadic {
            mant: n.clone(),
            exp: 0,
        }
        .normalized()
    }

    fn from_i64(n: i64) -> Dyadic {
        Dyadic::from_bigint(&BigInt::from(n))
    }

    fn normalized(mut self) -> Dyadic {
        if self.mant.is_zero() {
            self.exp = 0;
            return self;
        }
        let tz = self.mant.trailing_zeros().unwrap_or(0);
        if tz > 0 {
            // Low bits are zero, so this shift is an exact division.
            self.mant = &self.mant >> (tz as usize);
            self.exp = self
                .exp
                .checked_add(tz as i64)
                .expect("dyadic exponent overflow");
        }
        self
    }

    fn is_zero(&self) -> bool {
        self.mant.is_zero()
    }

    fn sign_i(&self) -> i8 {
        match self.mant.sign() {
            Sign::Minus => -1,
            Sign::NoSign => 0,
            Sign::Plus => 1,
        }
    }

    // Position p with 2^(p-1) <= |value| < 2^p. Meaningful only for nonzero.
    fn msb_pos(&self) -> i64 {
        debug_assert!(!self.is_zero());
        self.exp
            .checked_add(self.mant.magnitude().bits() as i64)
            .expect("dyadic exponent overflow")
    }

    fn neg(&self) -> Dyadic {
        Dyadic {
            mant: -&self.mant,
            exp: self.exp,
        }
    }

    fn abs(&self) -> Dyadic {
        Dyadic {
            mant: self.mant.abs(),
            exp: self.exp,
        }
    }

    // Exact multiplication by 2^k.
    fn scale_pow2(&self, k: i64) -> Result<Dyadic, NumericsError> {
        if self.is_zero() {
            return Ok(Dyadic::zero());
        }
        let exp = self
            .exp
            .checked_add(k)
            .ok_or(NumericsError::ExponentOverflow)?;
        Ok(Dyadic {
            mant: self.mant.clone(),
            exp,
        })
    }

    // Round to at most `prec` mantissa bits in direction `dir`.
    fn round_to(self, prec: u32, dir: Dir) -> Dyadic {
        if self.mant.is_zero() {
            return Dyadic::zero();
        }
        let bits = self.mant.magnitude().bits();
        if bits <= prec as u64 {
            return self.normalized();
        }
        let drop = (bits - prec as u64) as usize;
        let unit = BigInt::one() << drop;
        let (mut q, r) = self.mant.div_rem(&unit);
        if !r.is_zero() {
            // div_rem truncates toward zero; adjust to floor or ceiling.
            match dir {
                Dir::Down if self.mant.sign() == Sign::Minus => q -= 1,
                Dir::Up if self.mant.sign() == Sign::Plus => q += 1,
                _ => {}
            }
        }
        Dyadic {
            mant: q,
            exp: self
                .exp
                .checked_add(drop as i64)
                .expect("dyadic exponent overflow"),
        }
        .normalized()
    }

    fn cmp_val(&self, other: &Dyadic) -> Ordering {
        let (sa, sb) = (self.sign_i(), other.sign_i());
        if sa != sb {
            return sa.cmp(&sb);
        }
        if sa == 0 {
            return Ordering::Equal;
        }
        // Same nonzero sign: the magnitude order is decided by msb position
        // unless the positions tie, in which case the exponent gap equals the
        // mantissa-width gap and aligning is cheap.
        let (pa, pb) = (self.msb_pos(), other.msb_pos());
        if pa != pb {
            let mag = pa.cmp(&pb);
            return if sa > 0 { mag } else { mag.reverse() };
        }
        let e = self.exp.min(other.exp);
        let a = &self.mant << ((self.exp - e) as usize);
        let b = &other.mant << ((other.exp - e) as usize);
        a.cmp(&b)
    }

    // Exact conversion; refuses exponents that would materialize huge powers.
    fn to_rational(&self) -> Rational {
        assert!(
            self.exp.abs() <= MAX_MATERIALIZE_EXP,
            "dyadic exponent {} too large to materialize as a rational",
            self.exp
        );
        if self.exp >= 0 {
            Rational::from_integer(&self.mant << (self.exp as usize))
        } else {
            Rational::new(self.mant.clone(), BigInt::one() << ((-self.exp) as usize))
        }
    }

    fn floor_bigint(&self) -> BigInt {
        if self.is_zero() {
            return BigInt::zero();
        }
        assert!(
            self.exp.abs() <= MAX_MATERIALIZE_EXP,
            "dyadic exponent {} too large for floor",
            self.exp
        );
        if self.exp >= 0 {
            &self.mant << (self.exp as usize)
        } else {
            let unit = BigInt::one() << ((-self.exp) as usize);
            self.mant.div_floor(&unit)
        }
    }
}

// Absorption threshold for addition: when the operands' magnitudes differ by
// more than prec + ABSORB_SLACK bits, the small operand is replaced by a
// one-ulp outward nudge instead of a gigantic alignment shift.
const ABSORB_SLACK: u32 = 8;

fn dy_add(a: &Dyadic, b: &Dyadic, prec: u32, dir: Dir) -> Dyadic {
    if a.is_zero() {
        return b.clone().round_to(prec, dir);
    }
    if b.is_zero() {
        return a.clone().round_to(prec, dir);
    }
    let (pa, pb) = (a.msb_pos(), b.msb_pos());
    let gap = prec as i64 + ABSORB_SLACK as i64;
    if pa - pb > gap {
        return dy_absorb(a, b.sign_i(), prec, dir);
    }
    if pb - pa > gap {
        return dy_absorb(b, a.sign_i(), prec, dir);
    }
    let e = a.exp.min(b.exp);
    let m = (&a.mant << ((a.exp - e) as usize)) + (&b.mant << ((b.exp - e) as usize));
    Dyadic { mant: m, exp: e }.round_to(prec, dir)
}

// big + small where |small| sits more than prec + ABSORB_SLACK bits below
// big's msb: round big, then nudge one unit in the last place whenever plain
// rounding would not be outward. The nudge happens at big's own precision, so
// no alignment shift across the (possibly astronomical) exponent gap occurs;
// the gap guarantees one ulp dominates |small|.
fn dy_absorb(big: &Dyadic, small_sign: i8, prec: u32, dir: Dir) -> Dyadic {
    let r = big.clone().round_to(prec, dir);
    let hurts = match dir {
        Dir::Down => small_sign < 0,
        Dir::Up => small_sign > 0,
    };
    if !hurts {
        return r;
    }
    // Widen to a full prec-bit mantissa first so the nudged value keeps its
    // magnitude even when the mantissa was a bare power of two.
    let bits = r.mant.magnitude().bits() as u32;
    let widen = prec.saturating_sub(bits) as usize;
    let mant = (&r.mant << widen) + BigInt::from(small_sign as i64);
    Dyadic {
        mant,
        exp: r.exp - widen as i64,
    }
    .round_to(prec, dir)
}

fn dy_sub(a: &Dyadic, b: &Dyadic, prec: u32, dir: Dir) -> Dyadic {
    dy_add(a, &b.neg(), prec, dir)
}

fn dy_mul(a: &Dyadic, b: &Dyadic, prec: u32, dir: Dir) -> Dyadic {
    if a.is_zero() || b.is_zero() {
        return Dyadic::zero();
    }
    let exp = a
        .exp
        .checked_add(b.exp)
        .expect("dyadic exponent overflow");
    Dyadic {
        mant: &a.mant * &b.mant,
        exp,
    }
    .round_to(prec, dir)
}

fn dy_div(a: &Dyadic, b: &Dyadic, prec: u32, dir: Dir) -> Dyadic {
    debug_assert!(!b.is_zero());
    if a.is_zero() {
        return Dyadic::zero();
    }
    // Scale the dividend so the integer quotient carries prec + 2 bits.
    let need = prec as i64 + 2 + b.mant.magnitude().bits() as i64 - a.mant.magnitude().bits() as i64;
    let s = need.max(0) as usize;
    let num = &a.mant << s;
    let q = match dir {
        Dir::Down => num.div_floor(&b.mant),
        Dir::Up => num.div_ceil(&b.mant),
    };
    let exp = a
        .exp
        .checked_sub(b.exp)
        .and_then(|e| e.checked_sub(s as i64))
        .expect("dyadic exponent overflow");
    Dyadic { mant: q, exp }.round_to(prec, dir)
}

fn dy_from_rational(r: &Rational, prec: u32, dir: Dir) -> Dyadic {
    if r.is_zero() {
        return Dyadic::zero();
    }
    let a = Dyadic::from_bigint(r.numer());
    let b = Dyadic::from_bigint(r.denom());
    dy_div(&a, &b, prec, dir)
}

/// Closed interval `[lo, hi]` with exact dyadic endpoints; the represented
/// real is guaranteed to lie inside, and all arithmetic rounds outward.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RealInterval {
    lo: Dyadic,
    hi: Dyadic,
    prec: u32,
}

impl RealInterval {
    fn raw(lo: Dyadic, hi: Dyadic, prec: u32) -> RealInterval {
        debug_assert!(lo.cmp_val(&hi) != Ordering::Greater);
        RealInterval { lo, hi, prec }
    }

    /// Tightest enclosure of an exact rational at the given precision.
    pub fn from_rational(r: &Rational, prec: u32) -> RealInterval {
        RealInterval::raw(
            dy_from_rational(r, prec, Dir::Down),
            dy_from_rational(r, prec, Dir::Up),
            prec,
        )
    }

    /// Enclosure of the closed interval `[lo, hi]` given by exact rationals.
    pub fn from_rational_bounds(lo: &Rational, hi: &Rational, prec: u32) -> RealInterval {
        assert!(lo <= hi, "interval endpoints out of order");
        RealInterval::raw(
            dy_from_rational(lo, prec, Dir::Down),
            dy_from_rational(hi, prec, Dir::Up),
            prec,
        )
    }

    /// Exact point interval for an integer (integers are always dyadic).
    pub fn from_bigint(n: &BigInt, prec: u32) -> RealInterval {
        let d = Dyadic::from_bigint(n);
        RealInterval::raw(d.clone(), d, prec)
    }

    pub fn from_u64(n: u64, prec: u32) -> RealInterval {
        RealInterval::from_bigint(&BigInt::from(n), prec)
    }

    pub fn from_i64(n: i64, prec: u32) -> RealInterval {
        RealInterval::from_bigint(&BigInt::from(n), prec)
    }

    pub fn precision_bits(&self) -> u32 {
        self.prec
    }

    /// Lower endpoint as an exact rational.
    pub fn lo_rational(&self) -> Rational {
        self.lo.to_rational()
    }

    /// Upper endpoint as an exact rational.
    pub fn hi_rational(&self) -> Rational {
        self.hi.to_rational()
    }

    pub fn width_rational(&self) -> Rational {
        self.hi_rational() - self.lo_rational()
    }

    pub fn is_strictly_positive(&self) -> bool {
        self.lo.sign_i() > 0
    }

    /// Outward-widened copy in which any endpoint of magnitude below
    /// 2^floor_exp moves to zero or to ±2^floor_exp, away from the interval.
    /// Degenerate regimes can push quantities to scales like 2^-10^10 whose
    /// exact rationals are unmaterializable; widening them through this
    /// keeps every endpoint printable and only ever loosens the enclosure.
    pub fn widen_below(&self, floor_exp: i64) -> RealInterval {
        let widen = |d: &Dyadic, dir: Dir| {
            if d.is_zero() || d.msb_pos() > floor_exp {
                return d.clone().normalized();
            }
            let outward = match dir {
                Dir::Down => d.sign_i() < 0,
                Dir::Up => d.sign_i() > 0,
            };
            if outward {
                Dyadic { mant: BigInt::from(d.sign_i()), exp: floor_exp }
            } else {
                Dyadic::zero()
            }
        };
        RealInterval::raw(widen(&self.lo, Dir::Down), widen(&self.hi, Dir::Up), self.prec)
    }

    pub fn is_strictly_negative(&self) -> bool {
        self.hi.sign_i() < 0
    }

    /// Exact test that the rational lies inside the enclosure.
    pub fn contains_rational(&self, r: &Rational) -> bool {
        self.lo_rational() <= *r && *r <= self.hi_rational()
    }

    pub fn add(&self, o: &RealInterval) -> RealInterval {
        let p = self.prec.max(o.prec);
        RealInterval::raw(
            dy_add(&self.lo, &o.lo, p, Dir::Down),
            dy_add(&self.hi, &o.hi, p, Dir::Up),
            p,
        )
    }

    pub fn sub(&self, o: &RealInterval) -> RealInterval {
        let p = self.prec.max(o.prec);
        RealInterval::raw(
            dy_sub(&self.lo, &o.hi, p, Dir::Down),
            dy_sub(&self.hi, &o.lo, p, Dir::Up),
            p,
        )
    }

    pub fn neg(&self) -> RealInterval {
        RealInterval::raw(self.hi.neg(), self.lo.neg(), self.prec)
    }

    pub fn mul(&self, o: &RealInterval) -> RealInterval {
        let p = self.prec.max(o.prec);
        let pairs = [
            (&self.lo, &o.lo),
            (&self.lo, &o.hi),
            (&self.hi, &o.lo),
            (&self.hi, &o.hi),
        ];
        let mut lo: Option<Dyadic> = None;
        let mut hi: Option<Dyadic> = None;
        for (x, y) in pairs {
            let d = dy_mul(x, y, p, Dir::Down);
            let u = dy_mul(x, y, p, Dir::Up);
            lo = Some(match lo {
                None => d,
                Some(c) if d.cmp_val(&c) == Ordering::Less => d,
                Some(c) => c,
            });
            hi = Some(match hi {
                None => u,
                Some(c) if u.cmp_val(&c) == Ordering::Greater => u,
                Some(c) => c,
            });
        }
        RealInterval::raw(lo.unwrap(), hi.unwrap(), p)
    }

    pub fn div(&self, o: &RealInterval) -> Result<RealInterval, NumericsError> {
        if o.lo.sign_i() <= 0 && o.hi.sign_i() >= 0 {
            return Err(NumericsError::DivisorSpansZero);
        }
        let p = self.prec.max(o.prec);
        let pairs = [
            (&self.lo, &o.lo),
            (&self.lo, &o.hi),
            (&self.hi, &o.lo),
            (&self.hi, &o.hi),
        ];
        let mut lo: Option<Dyadic> = None;
        let mut hi: Option<Dyadic> = None;
        for (x, y) in pairs {
            let d = dy_div(x, y, p, Dir::Down);
            let u = dy_div(x, y, p, Dir::Up);
            lo = Some(match lo {
                None => d,
                Some(c) if d.cmp_val(&c) == Ordering::Less => d,
                Some(c) => c,
            });
            hi = Some(match hi {
                None => u,
                Some(c) if u.cmp_val(&c) == Ordering::Greater => u,
                Some(c) => c,
            });
        }
        Ok(RealInterval::raw(lo.unwrap(), hi.unwrap(), p))
    }

    pub fn recip(&self) -> Result<RealInterval, NumericsError> {
        RealInterval::from_u64(1, self.prec).div(self)
    }

    /// Exact scaling by 2^k.
    pub fn scale_pow2(&self, k: i64) -> Result<RealInterval, NumericsError> {
        Ok(RealInterval::raw(
            self.lo.scale_pow2(k)?,
            self.hi.scale_pow2(k)?,
            self.prec,
        ))
    }

    /// Natural logarithm; requires a strictly positive enclosure.
    pub fn ln(&self) -> Result<RealInterval, NumericsError> {
        if !self.is_strictly_positive() {
            return Err(NumericsError::NonpositiveBase);
        }
        let wp = self.prec + GUARD_BITS;
        let lo_enc = ln_point(&self.lo, wp)?;
        if self.lo == self.hi {
            return Ok(RealInterval::raw(lo_enc.lo, lo_enc.hi, self.prec));
        }
        let hi_enc = ln_point(&self.hi, wp)?;
        Ok(RealInterval::raw(lo_enc.lo, hi_enc.hi, self.prec))
    }

    /// Exponential function, monotone on endpoints.
    pub fn exp(&self) -> Result<RealInterval, NumericsError> {
        let wp = self.prec + GUARD_BITS;
        let lo_enc = exp_point(&self.lo, wp)?;
        if self.lo == self.hi {
            return Ok(RealInterval::raw(lo_enc.lo, lo_enc.hi, self.prec));
        }
        let hi_enc = exp_point(&self.hi, wp)?;
        Ok(RealInterval::raw(lo_enc.lo, hi_enc.hi, self.prec))
    }

    /// `self^exponent` through exp(exponent * ln(self)); base must be
    /// strictly positive.
    pub fn pow(&self, exponent: &RealInterval) -> Result<RealInterval, NumericsError> {
        let p = self.prec.max(exponent.prec);
        let base = RealInterval::raw(self.lo.clone(), self.hi.clone(), p);
        let x = exponent.mul(&base.ln()?);
        x.exp()
    }
}

/// Enclosure of log 3 / log 2 with width at most 2^(1 - precision_bits).
pub fn delta_interval(precision_bits: u32) -> RealInterval {
    assert!(precision_bits >= 16, "precision below the supported minimum");
    let wp = precision_bits + GUARD_BITS;
    let c = log_constants(wp);
    let d = c
        .ln3
        .div(&c.ln2)
        .expect("log 2 enclosure is strictly positive");
    let out = RealInterval::raw(d.lo, d.hi, precision_bits);
    debug_assert!({
        let w = dy_sub(&out.hi, &out.lo, wp, Dir::Up);
        let bound = Dyadic {
            mant: BigInt::one(),
            exp: 1 - precision_bits as i64,
        };
        w.cmp_val(&bound) != Ordering::Greater
    });
    out
}

/// Enclosure of b^e over the operand intervals; the base must be strictly
/// positive.
pub fn interval_pow(
    base: &RealInterval,
    exponent: &RealInterval,
) -> Result<RealInterval, NumericsError> {
    base.pow(exponent)
}

/// Conservative comparison of `a` against `b`: TRUE when every member of `a`
/// is below every member of `b`, FALSE when every member is above, UNKNOWN
/// when the enclosures overlap.
pub fn cmp_conservative(a: &RealInterval, b: &RealInterval) -> TriState {
    if a.hi.cmp_val(&b.lo) == Ordering::Less {
        return TriState::True;
    }
    if a.lo.cmp_val(&b.hi) == Ordering::Greater {
        return TriState::False;
    }
    TriState::Unknown
}

/// Enclosure of log 2 at the given precision.
pub fn ln2_interval(precision_bits: u32) -> RealInterval {
    let c = log_constants(precision_bits + GUARD_BITS);
    RealInterval::raw(c.ln2.lo, c.ln2.hi, precision_bits)
}

/// Enclosure of log 3 at the given precision.
pub fn ln3_interval(precision_bits: u32) -> RealInterval {
    let c = log_constants(precision_bits + GUARD_BITS);
    RealInterval::raw(c.ln3.lo, c.ln3.hi, precision_bits)
}

/// Runs `f` at increasing precision until it stops reporting
/// `InsufficientPrecision`, doubling from `start` up to `ceiling`.
pub fn with_precision_retry<T>(
    start: u32,
    ceiling: u32,
    mut f: impl FnMut(u32) -> Result<T, NumericsError>,
) -> Result<T, NumericsError> {
    let mut bits = start.max(16);
    loop {
        match f(bits) {
            Ok(v) => return Ok(v),
            Err(NumericsError::InsufficientPrecision { .. }) => {
                if bits >= ceiling {
                    return Err(NumericsError::PrecisionExhausted { ceiling });
                }
                bits = (bits.saturating_mul(2)).min(ceiling);
            }
            Err(e) => return Err(e),
        }
    }
}

// ---------------------------------------------------------------------------
// Transcendental kernels.
// ---------------------------------------------------------------------------

struct LogConstants {
    ln2: RealInterval,
    ln3: RealInterval,
}

static LOG_CACHE: Mutex<BTreeMap<u32, (RealInterval, RealInterval)>> =
    Mutex::new(BTreeMap::new());

// log 2 = 2 atanh(1/3), log 3 = log 2 + 2 atanh(1/5); both arguments keep the
// series contraction at worst z^2 = 1/9 per term.
fn log_constants(wp: u32) -> LogConstants {
    {
        let cache = LOG_CACHE.lock().unwrap();
        if let Some((l2, l3)) = cache.get(&wp) {
            return LogConstants {
                ln2: l2.clone(),
                ln3: l3.clone(),
            };
        }
    }
    let third = RealInterval::from_rational(&rat(1, 3), wp);
    let fifth = RealInterval::from_rational(&rat(1, 5), wp);
    let ln2 = atanh_series(&third, wp)
        .scale_pow2(1)
        .expect("small exponent");
    let ln32 = atanh_series(&fifth, wp)
        .scale_pow2(1)
        .expect("small exponent");
    let ln3 = ln2.add(&ln32);
    let mut cache = LOG_CACHE.lock().unwrap();
    cache.insert(wp, (ln2.clone(), ln3.clone()));
    LogConstants { ln2, ln3 }
}

fn mag_hi(iv: &RealInterval) -> Dyadic {
    let a = iv.lo.abs();
    let b = iv.hi.abs();
    if a.cmp_val(&b) == Ordering::Greater {
        a
    } else {
        b
    }
}

// atanh(z) = sum z^(2j+1)/(2j+1), |z| <= 1/2. The tail after the last added
// term is bounded by |z|^(2J+3)/(2J+3) * 1/(1 - z^2).
fn atanh_series(z: &RealInterval, wp: u32) -> RealInterval {
    debug_assert!(
        mag_hi(z)
            .cmp_val(&Dyadic {
                mant: BigInt::one(),
                exp: -1
            })
            != Ordering::Greater,
        "atanh series requires |z| <= 1/2"
    );
    let z2 = z.mul(z);
    let mut power = z.clone();
    let mut sum = z.clone();
    let mut odd = 1u32;
    let cutoff = -(wp as i64 + 4);
    loop {
        power = power.mul(&z2);
        odd += 2;
        let term = div_small(&power, odd, wp);
        sum = sum.add(&term);
        let pm = mag_hi(&power);
        if pm.is_zero() || pm.msb_pos() < cutoff {
            // Bound the remaining tail from the next power.
            let next = dy_mul(&pm, &mag_hi(&z2), wp, Dir::Up);
            let one = Dyadic::from_i64(1);
            let denom = dy_sub(&one, &mag_hi(&z2), wp, Dir::Down);
            let t = dy_div(&next, &denom, wp, Dir::Up);
            let t = dy_div(&t, &Dyadic::from_i64((odd + 2) as i64), wp, Dir::Up);
            sum = sum.add(&RealInterval::raw(t.neg(), t, wp));
            return sum;
        }
    }
}

fn div_small(iv: &RealInterval, n: u32, wp: u32) -> RealInterval {
    let d = Dyadic::from_i64(n as i64);
    RealInterval::raw(
        dy_div(&iv.lo, &d, wp, Dir::Down),
        dy_div(&iv.hi, &d, wp, Dir::Up),
        wp,
    )
}

// Enclosure of ln(d) for an exact positive dyadic point. Reduction: write
// d = m * 2^e with m in (2/3, 4/3], so z = (m-1)/(m+1) has |z| <= 1/5, then
// ln d = 2 atanh(z) + e ln 2.
fn ln_point(d: &Dyadic, wp: u32) -> Result<RealInterval, NumericsError> {
    debug_assert!(d.sign_i() > 0);
    let bits = d.mant.magnitude().bits() as i64;
    let mut e = d
        .exp
        .checked_add(bits - 1)
        .ok_or(NumericsError::ExponentOverflow)?;
    // m0 = d / 2^e lies in [1, 2); halve once more when m0 > 4/3.
    let three_mant = &d.mant * 3u32;
    let four_top = BigInt::one() << ((bits + 1) as usize);
    let mut m = Dyadic {
        mant: d.mant.clone(),
        exp: -(bits - 1),
    };
    if three_mant > four_top {
        m = m.scale_pow2(-1).expect("small exponent");
        e = e.checked_add(1).ok_or(NumericsError::ExponentOverflow)?;
    }
    let m_iv = RealInterval::raw(m.clone(), m, wp);
    let one = RealInterval::from_u64(1, wp);
    let z = m_iv.sub(&one).div(&m_iv.add(&one))?;
    let s = atanh_series(&z, wp).scale_pow2(1)?;
    let c = log_constants(wp);
    let scaled = c.ln2.mul(&RealInterval::from_i64(e, wp));
    Ok(s.add(&scaled))
}

// Enclosure of exp(d) for an exact dyadic point. Reduction: d = q ln 2 + r
// with |r| < 3/4, then exp(d) = 2^q * sum r^j / j!.
fn exp_point(d: &Dyadic, wp: u32) -> Result<RealInterval, NumericsError> {
    let c = log_constants(wp);
    let d_iv = RealInterval::raw(d.clone(), d.clone(), wp);
    let t = d_iv.div(&c.ln2)?;
    // Nearest integer to d / ln 2, from the lower endpoint plus one half.
    let half_up = dy_add(
        &t.lo,
        &Dyadic {
            mant: BigInt::one(),
            exp: -1,
        },
        wp,
        Dir::Down,
    );
    let q = half_up.floor_bigint();
    let q_i64 = q.to_i64().ok_or(NumericsError::ExponentOverflow)?;
    let r = d_iv.sub(&c.ln2.mul(&RealInterval::from_bigint(&q, wp)));
    // r must be a small remainder; a wide input interval cannot be reduced.
    let bound = Dyadic {
        mant: BigInt::from(3),
        exp: -2,
    };
    if mag_hi(&r).cmp_val(&bound) == Ordering::Greater {
        return Err(NumericsError::InsufficientPrecision { bits: wp });
    }
    let series = exp_series(&r, wp)?;
    series.scale_pow2(q_i64)
}

fn exp_series(r: &RealInterval, wp: u32) -> Result<RealInterval, NumericsError> {
    let one = RealInterval::from_u64(1, wp);
    let mut sum = one.add(r);
    let mut term = r.clone();
    let mut j = 1u32;
    let cutoff = -(wp as i64 + 4);
    let r_mag = mag_hi(r);
    loop {
        j += 1;
        if j > 5000 {
            return Err(NumericsError::InsufficientPrecision { bits: wp });
        }
        term = div_small(&term.mul(r), j, wp);
        sum = sum.add(&term);
        // Next term magnitude; |r| < 3/4 makes the remaining tail at most
        // twice the next term.
        let next = dy_div(
            &dy_mul(&mag_hi(&term), &r_mag, wp, Dir::Up),
            &Dyadic::from_i64((j + 1) as i64),
            wp,
            Dir::Up,
        );
        if next.is_zero() || next.msb_pos() < cutoff {
            let tail = next.scale_pow2(1)?;
            sum = sum.add(&RealInterval::raw(tail.neg(), tail, wp));
            return Ok(sum);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iv(lo: (i64, i64), hi: (i64, i64), prec: u32) -> RealInterval {
        RealInterval::from_rational_bounds(&rat(lo.0, lo.1), &rat(hi.0, hi.1), prec)
    }

    #[test]
    fn rational_is_canonical() {
        let r = rat(6, -4);
        assert_eq!(r.numer(), &BigInt::from(-3));
        assert_eq!(r.denom(), &BigInt::from(2));
    }

    #[test]
    fn dyadic_rounding_directions() {
        // 5/16 at 2 mantissa bits: down -> 1/4, up -> 3/8.
        let d = dy_from_rational(&rat(5, 16), 2, Dir::Down);
        assert_eq!(d.to_rational(), rat(1, 4));
        let u = dy_from_rational(&rat(5, 16), 2, Dir::Up);
        assert_eq!(u.to_rational(), rat(3, 8));
        // Negative mirror.
        let d = dy_from_rational(&rat(-5, 16), 2, Dir::Down);
        assert_eq!(d.to_rational(), rat(-3, 8));
        let u = dy_from_rational(&rat(-5, 16), 2, Dir::Up);
        assert_eq!(u.to_rational(), rat(-1, 4));
    }

    #[test]
    fn addition_absorbs_tiny_operands_outward() {
        let big = RealInterval::from_u64(1 << 20, 64);
        let tiny = RealInterval::from_rational(&rat(1, i64::MAX), 64);
        let s = big.add(&tiny);
        // True sum is slightly above 2^20; enclosure must contain it.
        assert!(s.lo_rational() <= rat(1 << 20, 1) + rat(1, i64::MAX));
        assert!(s.hi_rational() >= rat(1 << 20, 1) + rat(1, i64::MAX));
        let neg_tiny = tiny.neg();
        let s2 = big.add(&neg_tiny);
        assert!(s2.lo_rational() <= rat(1 << 20, 1) - rat(1, i64::MAX));
        assert!(s2.hi_rational() >= rat(1 << 20, 1) - rat(1, i64::MAX));
    }

    #[test]
    fn interval_mul_contains_exact_products() {
        let a = iv((-3, 2), (5, 7), 64);
        let b = iv((-1, 3), (9, 4), 64);
        let p = a.mul(&b);
        for (x, y) in [
            (rat(-3, 2), rat(-1, 3)),
            (rat(-3, 2), rat(9, 4)),
            (rat(5, 7), rat(-1, 3)),
            (rat(5, 7), rat(9, 4)),
        ] {
            assert!(p.contains_rational(&(x * y)));
        }
    }

    #[test]
    fn division_by_zero_spanning_interval_fails() {
        let a = RealInterval::from_u64(1, 64);
        let b = iv((-1, 2), (1, 2), 64);
        assert!(matches!(a.div(&b), Err(NumericsError::DivisorSpansZero)));
    }

    #[test]
    fn delta_enclosure_is_in_unit_range() {
        for prec in [16, 64, 256] {
            let d = delta_interval(prec);
            assert!(d.lo_rational() > rat(1, 1));
            assert!(d.hi_rational() < rat(2, 1));
        }
    }

    #[test]
    fn delta_width_respects_contract() {
        for prec in [16, 64, 384] {
            let d = delta_interval(prec);
            let w = d.width_rational();
            let bound = Rational::new(BigInt::one(), BigInt::one() << (prec as usize - 1));
            assert!(w <= bound, "width too large at {prec} bits");
        }
    }

    #[test]
    fn delta_monotone_refinement() {
        let coarse = delta_interval(64);
        let fine = delta_interval(256);
        assert!(coarse.lo_rational() <= fine.lo_rational());
        assert!(fine.hi_rational() <= coarse.hi_rational());
    }

    #[test]
    fn pow_identity_cases() {
        let two = RealInterval::from_u64(2, 96);
        let zero = RealInterval::from_u64(0, 96);
        let p = interval_pow(&two, &zero).unwrap();
        assert!(p.contains_rational(&rat(1, 1)));
        assert!(p.width_rational() < rat(1, 1 << 40));

        let four = RealInterval::from_u64(4, 96);
        let half = RealInterval::from_rational(&rat(1, 2), 96);
        let s = interval_pow(&four, &half).unwrap();
        assert!(s.contains_rational(&rat(2, 1)));
        assert!(s.width_rational() < rat(1, 1 << 40));
    }

    #[test]
    fn pow_rejects_nonpositive_base() {
        let bad = iv((-1, 1), (2, 1), 64);
        let e = RealInterval::from_u64(2, 64);
        assert!(matches!(
            interval_pow(&bad, &e),
            Err(NumericsError::NonpositiveBase)
        ));
    }

    #[test]
    fn cmp_conservative_cases() {
        let one = RealInterval::from_u64(1, 64);
        let two = RealInterval::from_u64(2, 64);
        assert!(cmp_conservative(&one, &two).is_true());
        assert!(cmp_conservative(&two, &one).is_false());
        let a = iv((1, 1), (3, 1), 64);
        let b = iv((2, 1), (4, 1), 64);
        assert!(cmp_conservative(&a, &b).is_unknown());
    }

    #[test]
    fn cmp_conservative_antisymmetry() {
        let cases = [
            (iv((1, 1), (1, 1), 64), iv((2, 1), (2, 1), 64)),
            (iv((1, 1), (3, 1), 64), iv((2, 1), (4, 1), 64)),
            (iv((5, 1), (6, 1), 64), iv((1, 1), (2, 1), 64)),
        ];
        for (a, b) in cases {
            let fwd = cmp_conservative(&a, &b);
            let rev = cmp_conservative(&b, &a);
            match fwd {
                TriState::True => assert!(rev.is_false()),
                TriState::False => assert!(rev.is_true()),
                TriState::Unknown => assert!(rev.is_unknown()),
            }
        }
    }

    #[test]
    fn exp_ln_round_trip_contains_argument() {
        for r in [rat(3, 2), rat(10, 7), rat(100, 3), rat(1, 17)] {
            let x = RealInterval::from_rational(&r, 128);
            let back = x.ln().unwrap().exp().unwrap();
            assert!(back.contains_rational(&r), "round trip lost {r}");
            assert!(back.width_rational() < rat(1, 1 << 60));
        }
    }

    #[test]
    fn ln_of_nonpositive_fails() {
        let z = RealInterval::from_u64(0, 64);
        assert!(matches!(z.ln(), Err(NumericsError::NonpositiveBase)));
    }

    #[test]
    fn huge_exponent_pow_stays_finite() {
        // delta^(10^9) has a dyadic exponent around 1.6 * 10^9; the operation
        // must complete without materializing the value.
        let d = delta_interval(128);
        let e = RealInterval::from_u64(1_000_000_000, 128);
        let p = d.pow(&e).unwrap();
        assert!(p.is_strictly_positive());
        // log2 of the result is 10^9 * log2(delta), around 6.6445e8.
        let lnp = p.ln().unwrap();
        let l2 = ln2_interval(128);
        let log2p = lnp.div(&l2).unwrap();
        assert!(log2p.lo_rational() > rat(664_000_000, 1));
        assert!(log2p.hi_rational() < rat(665_000_000, 1));
    }

    #[test]
    fn retry_driver_escalates_and_caps() {
        let mut seen = Vec::new();
        let r = with_precision_retry(32, 128, |bits| {
            seen.push(bits);
            if bits < 128 {
                Err(NumericsError::InsufficientPrecision { bits })
            } else {
                Ok(bits)
            }
        });
        assert_eq!(r.unwrap(), 128);
        assert_eq!(seen, vec![32, 64, 128]);

        let r = with_precision_retry(32, 64, |bits| -> Result<(), _> {
            Err(NumericsError::InsufficientPrecision { bits })
        });
        assert!(matches!(
            r,
            Err(NumericsError::PrecisionExhausted { ceiling: 64 })
        ));
    }
}
