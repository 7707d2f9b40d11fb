//! Oracles for the continued-fraction layer: exhaustive smallest-denominator
//! search over rational intervals, the prefix-plus-incremented-quotient
//! construction where it applies, and an independent series-based expansion
//! of log2(3) to certify the interval expansion's quotients.

use cyclebound_core::contfrac::{
    cf_expand, cf_expand_rational, convergents, smallest_denominator_between,
    smallest_denominator_in_open_interval, ContinuedFraction,
};
use cyclebound_core::numerics::{delta_interval, rat, NumericsError, Rational, RealInterval};
use num_bigint::BigInt;
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// First fraction found by scanning denominators upward; the smallest
// denominator in an open rational interval never exceeds the sum of the
// endpoint denominators (their mediant lies inside the closed hull).
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

fn random_rational(rng: &mut ChaCha8Rng) -> Rational {
    let d: i64 = rng.gen_range(1..=200);
    let n: i64 = rng.gen_range(0..=3 * d);
    rat(n, d)
}

fn value_of_digits(digits: Vec<BigInt>) -> Rational {
    let cf = ContinuedFraction { partial_quotients: digits, exact: true };
    convergents(&cf).last().expect("nonempty digit list").clone()
}

#[test]
fn matches_brute_force_on_random_rational_intervals() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x00cf_0c1e);
    let mut done = 0u32;
    while done < 10_000 {
        let (a, b) = (random_rational(&mut rng), random_rational(&mut rng));
        let (alpha, beta) = match a.cmp(&b) {
            std::cmp::Ordering::Less => (a, b),
            std::cmp::Ordering::Greater => (b, a),
            std::cmp::Ordering::Equal => continue,
        };
        let found = smallest_denominator_between(&alpha, &beta);
        let gamma = found.value();
        assert!(alpha < gamma && gamma < beta, "membership failed in ({alpha}, {beta})");
        assert_eq!(gamma, brute_force_smallest(&alpha, &beta), "interval ({alpha}, {beta})");

        // Where the endpoint expansions support it, the result must equal
        // the shared prefix extended by the smaller differing quotient plus
        // one, a terminated side counting as an infinite quotient.
        if !alpha.is_zero() {
            let da = cf_expand_rational(&alpha, &alpha, usize::MAX).unwrap().partial_quotients;
            let db = cf_expand_rational(&beta, &beta, usize::MAX).unwrap().partial_quotients;
            let mut k = 0;
            while k < da.len() && k < db.len() && da[k] == db[k] {
                k += 1;
            }
            let candidate = if k < da.len() && k < db.len() {
                // Finite quotients on both sides: the smaller one sits on
                // the side fixed by the parity of the position.
                if k % 2 == 0 {
                    assert!(da[k] < db[k], "even-position order in ({alpha}, {beta})");
                } else {
                    assert!(da[k] > db[k], "odd-position order in ({alpha}, {beta})");
                }
                let mut digits = da[..k].to_vec();
                digits.push(da[k].clone().min(db[k].clone()) + 1);
                value_of_digits(digits)
            } else if k < db.len() {
                let mut digits = db[..k].to_vec();
                digits.push(db[k].clone() + 1);
                value_of_digits(digits)
            } else if k < da.len() {
                let mut digits = da[..k].to_vec();
                digits.push(da[k].clone() + 1);
                value_of_digits(digits)
            } else {
                unreachable!("distinct rationals share a full expansion");
            };
            if alpha < candidate && candidate < beta {
                assert_eq!(gamma, candidate, "construction mismatch in ({alpha}, {beta})");
            }
        }
        done += 1;
    }
}

#[test]
fn shrinking_the_interval_never_shrinks_the_denominator() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5e7_70_0e5);
    let mut done = 0u32;
    while done < 2_000 {
        let mut pts = [
            random_rational(&mut rng),
            random_rational(&mut rng),
            random_rational(&mut rng),
            random_rational(&mut rng),
        ];
        pts.sort();
        if pts[0] == pts[1] || pts[1] >= pts[2] || pts[2] == pts[3] {
            continue;
        }
        let outer = smallest_denominator_between(&pts[0], &pts[3]);
        let inner = smallest_denominator_between(&pts[1], &pts[2]);
        assert!(
            inner.denominator >= outer.denominator,
            "denominator dropped from {} to {} when shrinking ({}, {}) to ({}, {})",
            outer.denominator,
            inner.denominator,
            pts[0],
            pts[3],
            pts[1],
            pts[2]
        );
        done += 1;
    }
}

// Bracket of -ln(1 - 1/b) = sum_{k>=1} b^-k / k from an exact partial sum;
// the tail after K terms is below b^-K / ((K+1)(b-1)).
fn mercator_bracket(b: u32, terms: u32) -> (Rational, Rational) {
    let x = rat(1, b as i64);
    let mut sum = Rational::zero();
    let mut pw = Rational::one();
    for k in 1..=terms {
        pw *= &x;
        sum += Rational::new(pw.numer().clone(), pw.denom() * BigInt::from(k));
    }
    let tail = Rational::new(
        pw.numer().clone(),
        pw.denom() * BigInt::from(terms + 1) * BigInt::from(b - 1),
    );
    let hi = &sum + tail;
    (sum, hi)
}

// log2(3) bracketed by cross-dividing series brackets of ln 3 and ln 2.
fn delta_series_bracket(terms: u32) -> (Rational, Rational) {
    let (l2_lo, l2_hi) = mercator_bracket(2, terms);
    let (l32_lo, l32_hi) = mercator_bracket(3, terms);
    let l3_lo = &l2_lo + l32_lo;
    let l3_hi = &l2_hi + l32_hi;
    (l3_lo / l2_hi, l3_hi / l2_lo)
}

// Synchronized expansion of a rational bracket, used only as a test oracle.
fn bracket_digits(mut lo: Rational, mut hi: Rational, cap: usize) -> Vec<BigInt> {
    let mut out = Vec::new();
    while out.len() < cap {
        let a = lo.floor().to_integer();
        if a != hi.floor().to_integer() {
            break;
        }
        let f_lo = &lo - Rational::from_integer(a.clone());
        let f_hi = &hi - Rational::from_integer(a.clone());
        out.push(a);
        if f_lo.is_zero() || f_hi.is_zero() {
            break;
        }
        lo = f_hi.recip();
        hi = f_lo.recip();
    }
    out
}

#[test]
fn interval_expansion_of_delta_agrees_with_series_oracle() {
    let (lo, hi) = delta_series_bracket(500);
    let oracle = bracket_digits(lo, hi, 30);
    let cf = cf_expand(&delta_interval(256), 25).unwrap();
    assert!(
        cf.partial_quotients.len() >= 20,
        "only {} certain quotients at 256 bits",
        cf.partial_quotients.len()
    );
    assert!(oracle.len() >= cf.partial_quotients.len());
    assert_eq!(
        cf.partial_quotients[..],
        oracle[..cf.partial_quotients.len()],
        "interval expansion departs from the series oracle"
    );
    assert!(!cf.exact);
}

#[test]
fn unresolved_enclosures_are_reported_not_guessed() {
    let alpha = RealInterval::from_rational_bounds(&rat(1, 3), &rat(1, 2), 64);
    let beta = RealInterval::from_rational_bounds(&rat(2, 5), &rat(3, 5), 64);
    match smallest_denominator_in_open_interval(&alpha, &beta) {
        Err(NumericsError::InsufficientPrecision { .. }) => {}
        other => panic!("expected insufficient precision, got {other:?}"),
    }
}
