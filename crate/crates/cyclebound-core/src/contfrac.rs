//! Continued-fraction expansion of interval-valued reals and the
//! smallest-denominator fraction inside an open interval.
//!
//! Expansion never guesses: a partial quotient is emitted only while both
//! interval endpoints agree on it, so every emitted prefix is certain. The
//! smallest-denominator search runs on the outer enclosure of the requested
//! open interval, which can only shrink the reported denominator; callers
//! that use it as a lower bound stay sound at any precision.

use crate::numerics::{NumericsError, Rational, RealInterval};
use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};

/// Partial quotients [a0; a1, a2, ...] with a0 >= 0 and ai >= 1 for i >= 1.
///
/// `exact` marks a terminating expansion of a rational point; otherwise the
/// quotients are a certain prefix of a longer (possibly infinite) expansion.
/// Exact expansions of length >= 2 end with a quotient >= 2, the canonical
/// form that makes prefix comparison deterministic.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContinuedFraction {
    pub partial_quotients: Vec<BigInt>,
    pub exact: bool,
}

impl ContinuedFraction {
    fn new(partial_quotients: Vec<BigInt>, exact: bool) -> ContinuedFraction {
        debug_assert!(!partial_quotients.is_empty());
        debug_assert!(!partial_quotients[0].is_negative());
        debug_assert!(partial_quotients[1..].iter().all(|a| a >= &BigInt::one()));
        if exact && partial_quotients.len() >= 2 {
            debug_assert!(partial_quotients.last().unwrap() >= &BigInt::from(2));
        }
        ContinuedFraction { partial_quotients, exact }
    }
}

/// A fraction strictly inside a queried open interval, in lowest terms,
/// together with the expansion position that produced it: its quotients are
/// a shared prefix of length `prefix_len` followed by the single chosen
/// quotient `chosen_quotient`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FractionInInterval {
    pub numerator: BigInt,
    pub denominator: BigInt,
    pub prefix_len: usize,
    pub chosen_quotient: BigInt,
}

impl FractionInInterval {
    /// The fraction as an exact rational.
    pub fn value(&self) -> Rational {
        Rational::new(self.numerator.clone(), self.denominator.clone())
    }
}

/// Expands the reals enclosed by `x`, emitting quotients while both
/// endpoints agree on the next one and stopping (inexactly) at the first
/// disagreement. Disagreement before the first quotient is an error.
pub fn cf_expand(x: &RealInterval, max_terms: usize) -> Result<ContinuedFraction, NumericsError> {
    assert!(x.is_strictly_positive(), "expansion needs a positive interval");
    cf_expand_rational(&x.lo_rational(), &x.hi_rational(), max_terms)
}

/// Exact-endpoint core of `cf_expand`; accepts `lo == hi` for a rational
/// point, whose expansion terminates with the `exact` flag set.
pub fn cf_expand_rational(
    lo: &Rational,
    hi: &Rational,
    max_terms: usize,
) -> Result<ContinuedFraction, NumericsError> {
    assert!(max_terms > 0, "expansion needs room for at least one term");
    assert!(lo.is_positive(), "expansion needs a positive lower endpoint");
    assert!(lo <= hi, "endpoints out of order");
    let mut quotients: Vec<BigInt> = Vec::new();
    let mut x_lo = lo.clone();
    let mut x_hi = hi.clone();
    while quotients.len() < max_terms {
        let a_lo = x_lo.floor().to_integer();
        let a_hi = x_hi.floor().to_integer();
        if a_lo != a_hi {
            if quotients.is_empty() {
                return Err(NumericsError::InsufficientPrecision { bits: 0 });
            }
            return Ok(ContinuedFraction::new(quotients, false));
        }
        let f_lo = &x_lo - Rational::from_integer(a_lo.clone());
        let f_hi = &x_hi - Rational::from_integer(a_lo.clone());
        quotients.push(a_lo);
        if f_lo.is_zero() && f_hi.is_zero() {
            return Ok(ContinuedFraction::new(quotients, true));
        }
        if f_lo.is_zero() || f_hi.is_zero() {
            // One endpoint terminated; the next quotient is unbounded on
            // that side, so nothing further is certain.
            return Ok(ContinuedFraction::new(quotients, false));
        }
        // Taking reciprocals of the fractional parts swaps the endpoints.
        x_lo = f_hi.recip();
        x_hi = f_lo.recip();
    }
    Ok(ContinuedFraction::new(quotients, false))
}

/// Exact convergents p_k/q_k of the quotient list via the standard
/// recurrence; denominators are strictly increasing from the third entry on.
pub fn convergents(cf: &ContinuedFraction) -> Vec<Rational> {
    assert!(!cf.partial_quotients.is_empty(), "no quotients to convert");
    let mut out = Vec::with_capacity(cf.partial_quotients.len());
    let mut p_prev = BigInt::zero();
    let mut p_curr = BigInt::one();
    let mut q_prev = BigInt::one();
    let mut q_curr = BigInt::zero();
    for a in &cf.partial_quotients {
        let p_next = a * &p_curr + &p_prev;
        let q_next = a * &q_curr + &q_prev;
        p_prev = std::mem::replace(&mut p_curr, p_next);
        q_prev = std::mem::replace(&mut q_curr, q_next);
        out.push(Rational::new(p_curr.clone(), q_curr.clone()));
    }
    out
}

/// Smallest-denominator fraction strictly between the enclosed endpoints.
///
/// The search runs over the outer enclosure (alpha.lo, beta.hi), a superset
/// of the true open interval, so the returned denominator is a lower bound
/// for the denominator of every fraction strictly between the true
/// endpoints. The result is then required to sit strictly between alpha.hi
/// and beta.lo; when the enclosures are too wide for that, the call fails
/// with an insufficient-precision error and the caller retries tighter.
pub fn smallest_denominator_in_open_interval(
    alpha: &RealInterval,
    beta: &RealInterval,
) -> Result<FractionInInterval, NumericsError> {
    let bits = alpha.precision_bits().min(beta.precision_bits());
    let a_hi = alpha.hi_rational();
    let b_lo = beta.lo_rational();
    if a_hi >= b_lo {
        // Enclosures touch; the open interval is not resolved yet.
        return Err(NumericsError::InsufficientPrecision { bits });
    }
    let found = smallest_denominator_between(&alpha.lo_rational(), &beta.hi_rational());
    let value = found.value();
    if value <= a_hi || value >= b_lo {
        return Err(NumericsError::InsufficientPrecision { bits });
    }
    Ok(found)
}

/// Exact-endpoint core: the unique smallest-denominator fraction in the
/// open rational interval (alpha, beta), ties among integers broken toward
/// the smallest one.
pub fn smallest_denominator_between(alpha: &Rational, beta: &Rational) -> FractionInInterval {
    assert!(!alpha.is_negative(), "search domain is nonnegative");
    assert!(alpha < beta, "interval is empty");
    let gamma = simplest_between(alpha, beta);
    debug_assert!(&gamma > alpha && &gamma < beta);
    // Re-expanding the (canonically reduced) result recovers the shared
    // prefix and the chosen final quotient.
    let digits = cf_expand_rational(&gamma, &gamma, usize::MAX)
        .expect("point expansion cannot disagree")
        .partial_quotients;
    let (numerator, denominator) = (gamma.numer().clone(), gamma.denom().clone());
    FractionInInterval {
        numerator,
        denominator,
        prefix_len: digits.len() - 1,
        chosen_quotient: digits.last().expect("nonempty expansion").clone(),
    }
}

// Classic simplest-fraction descent. Any integer strictly inside wins with
// denominator 1; otherwise the interval sits inside one unit cell and the
// problem recurses on reciprocals of the fractional parts.
fn simplest_between(alpha: &Rational, beta: &Rational) -> Rational {
    let a = alpha.floor().to_integer();
    let next_int = Rational::from_integer(&a + 1);
    if next_int < *beta {
        return next_int;
    }
    let frac_a = alpha - Rational::from_integer(a.clone());
    let frac_b = beta - Rational::from_integer(a.clone());
    if frac_a.is_zero() {
        // (0, frac_b): the simplest member is 1/q for the least q with
        // 1/q < frac_b.
        let q = frac_b.recip().floor().to_integer() + 1;
        return Rational::from_integer(a) + Rational::new(BigInt::one(), q);
    }
    let t = simplest_between(&frac_b.recip(), &frac_a.recip());
    Rational::from_integer(a) + t.recip()
}
