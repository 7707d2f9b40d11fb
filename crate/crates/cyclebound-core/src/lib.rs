//! Exact-arithmetic machinery for proving lower bounds on the size of
//! hypothetical nontrivial Collatz cycles.
//!
//! The crate is organized as five layers, bottom up:
//!
//! * [`numerics`]: arbitrary-precision rationals and outward-rounded real
//!   intervals; the only source for log 2, log 3 and their ratio.
//! * [`collatz`]: accelerated odd runs, trajectory profiles with exact
//!   reciprocal sums, merger detection, and a multi-threaded range
//!   verifier.
//! * [`contfrac`]: continued fractions over interval-valued reals and the
//!   smallest-denominator fraction in an open interval.
//! * [`case_engine`]: automated residue-class case analysis proving
//!   average reciprocal-sum bounds over windows of cycle minima.
//! * [`pipeline`]: the bound-refinement iteration that turns those
//!   averages into cycle-length exclusions, plus table generation and the
//!   convergence-threshold solver.
//!
//! All proof-critical comparisons go through exact rationals or conservative
//! intervals; no floating point is consulted anywhere a verdict depends on it.

pub mod case_engine;
pub mod collatz;
pub mod contfrac;
pub mod numerics;
pub mod pipeline;

pub use numerics::{Rational, RealInterval, TriState};
