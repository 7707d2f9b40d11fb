//! Automated residue-class case analysis: proves that windows of
//! consecutive trajectory minima have average reciprocal sums below a
//! target multiple of 1/X0.
//!
//! A search node pins the first minimum to n1 = 2^e*a + r for a free
//! integer parameter a and tracks every later minimum as an exact affine
//! form in a. Branching on the run shape (k o-steps, then one or at least
//! two e-steps) refines the class; parameter-parity splits are the sole
//! refinement mechanism, so every branch decision is reproducible by
//! simulating any concrete class member. Closing a node means proving its
//! current window's reciprocal-sum inequality for every admissible a, at
//! a symbolic X0 (valid for all X0 > 765) or a concrete one.

use crate::collatz;
use crate::numerics::{rat, rat_pow, Rational, TriState};
use crossbeam_deque::{Injector, Steal};
use num_bigint::{BigInt, BigUint, Sign};
use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use sha2::{Digest, Sha256};
use std::io::{Read, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

/// Smallest X0 at which symbolic-mode constraints are evaluated; the
/// analytic facts feeding them hold for every X0 above 765.
const SYMBOLIC_MIN_X0: i64 = 766;

/// Checkpoint file magic.
const CHECKPOINT_MAGIC: &[u8; 4] = b"CBND";
/// Checkpoint format version.
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("checkpoint format version {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("checkpoint belongs to a different search configuration")]
    ConfigMismatch,
    #[error("corrupt checkpoint record after {records_read} intact records: {detail}")]
    CorruptRecord { records_read: usize, detail: String },
}

/// Averaging mode: per processed minimum, or per o-step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AverageMode {
    Unweighted,
    Weighted,
}

/// Symbolic X0 (inequalities proved for every X0 > 765) or a concrete one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum XZeroMode {
    Symbolic,
    Concrete(BigUint),
}

#[derive(Debug, Clone)]
pub struct CheckpointPolicy {
    pub path: std::path::PathBuf,
    pub every_nodes: u64,
}

#[derive(Debug, Clone)]
pub struct SearchConfig {
    pub mode: AverageMode,
    pub target_coef: Rational,
    pub x0_mode: XZeroMode,
    /// Maximum number of processed minima per window.
    pub max_depth: u32,
    /// Per-run branching cap; longer runs take the shortcut branch.
    pub k_cap: u32,
    /// Ceiling on the class modulus exponent; exceeding it leaves the
    /// branch open rather than ever forcing a false positive.
    pub modulus_exp_ceiling: u32,
    /// Optional cap on explored nodes; exceeding it aborts to UNPROVEN.
    pub node_budget: Option<u64>,
    /// Worker threads; 0 means all available cores.
    pub worker_count: usize,
    /// Record per-node closure claims for soundness sampling.
    pub collect_closed: bool,
    pub checkpoint: Option<CheckpointPolicy>,
}

impl SearchConfig {
    pub fn new(mode: AverageMode, target_coef: Rational, x0_mode: XZeroMode, max_depth: u32) -> SearchConfig {
        assert!(target_coef.is_positive(), "target must be positive");
        assert!(max_depth >= 1, "window depth must be at least 1");
        SearchConfig {
            mode,
            target_coef,
            x0_mode,
            max_depth,
            k_cap: 64,
            modulus_exp_ceiling: 10_000,
            node_budget: None,
            worker_count: 0,
            collect_closed: false,
            checkpoint: None,
        }
    }

    /// Digest of the semantic search parameters (not execution knobs);
    /// checkpoints refuse to load under a different digest.
    pub fn semantic_hash(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(b"cbnd-config-v1");
        h.update([match self.mode {
            AverageMode::Unweighted => 0u8,
            AverageMode::Weighted => 1u8,
        }]);
        let (tn, td) = (self.target_coef.numer(), self.target_coef.denom());
        h.update(tn.to_signed_bytes_be());
        h.update(b"/");
        h.update(td.to_signed_bytes_be());
        match &self.x0_mode {
            XZeroMode::Symbolic => h.update([0u8]),
            XZeroMode::Concrete(x) => {
                h.update([1u8]);
                h.update(x.to_bytes_be());
            }
        }
        h.update(self.max_depth.to_le_bytes());
        h.update(self.k_cap.to_le_bytes());
        h.update(self.modulus_exp_ceiling.to_le_bytes());
        h.finalize().into()
    }
}

/// One branch decision on the path to a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BranchDecision {
    /// Exactly k o-steps, then one e-step (false) or at least two (true).
    Run { k: u32, ell_at_least_two: bool },
    /// More o-steps than the branching cap.
    LongRun,
}

/// Parity knowledge about the value the search front currently points at.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PendingStatus {
    /// An odd minimum whose parity is forced by the residue class.
    KnownOddMinimum,
    /// An odd minimum by branch assumption, not yet forced by the class.
    AssumedOddMinimum,
    /// A mid-e-run value whose parity the class does not determine yet.
    UnknownParity,
    /// A minimum with more o-steps than the branching cap.
    LongRunMinimum,
}

/// Exact affine form value = A*a + B; integer-valued on admissible a.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AffineForm {
    pub a: Rational,
    pub b: Rational,
}

impl AffineForm {
    fn substitute(&self, stride: &BigInt, shift: &BigInt) -> AffineForm {
        AffineForm {
            a: &self.a * Rational::from_integer(stride.clone()),
            b: &self.b + &self.a * Rational::from_integer(shift.clone()),
        }
    }

    fn eval(&self, a: &BigInt) -> Rational {
        &self.a * Rational::from_integer(a.clone()) + &self.b
    }
}

/// A processed minimum: its form, the proven reciprocal coefficient
/// (T(n) < coef/n), and the branch decision that fixed it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProcessedMinimum {
    pub form: AffineForm,
    pub coef: Rational,
    pub k: u32,
    pub ell_at_least_two: bool,
}

/// Lower-bound constraint: form >= scale*X0 + offset for all admissible a.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FloorConstraint {
    pub form: AffineForm,
    pub scale: Rational,
    pub offset: Rational,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PendingForm {
    pub form: AffineForm,
    pub status: PendingStatus,
}

/// One node of the case analysis: a residue class for the first minimum
/// plus the exact state of the window built on top of it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaseState {
    pub modulus_exp: u32,
    pub residue: BigUint,
    pub affine_forms: Vec<ProcessedMinimum>,
    pub pending_form: PendingForm,
    pub k_total: u64,
    pub min_count: u32,
    pub a_floor: BigUint,
    pub decisions: Vec<BranchDecision>,
    pub constraints: Vec<FloorConstraint>,
}

/// What a closed node claims, for later soundness sampling. Weights are
/// already multiplied into target budgets as exact rationals.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CloseClaim {
    /// Processed minima (optionally plus the pending one at coefficient 3)
    /// sum below target*weight/X0.
    Window { include_pending: bool, weight: Rational },
    /// Long-run shortcut, members with at least two trailing e-steps:
    /// processed plus the long-run minimum at coefficient 3.
    LongRunMerger { weight: Rational },
    /// Long-run shortcut, members with exactly one trailing e-step:
    /// processed plus the long-run minimum (and its successor when
    /// include_successor is set).
    LongRunDirect { include_successor: bool, weight: Rational },
}

#[derive(Debug, Clone)]
pub struct ClosedNode {
    pub state: CaseState,
    pub claims: Vec<CloseClaim>,
}

#[derive(Debug)]
pub struct SearchOutcome {
    pub proven: bool,
    /// The node budget ran out; witnesses then include the unexplored
    /// frontier and prove nothing about it.
    pub budget_exhausted: bool,
    pub nodes_explored: u64,
    pub max_modulus_exp_reached: u32,
    pub witnesses: Vec<CaseState>,
    pub elapsed_seconds: f64,
    pub closed_count: u64,
    /// Populated only when the config asks for closure records.
    pub closed: Vec<ClosedNode>,
}

fn big(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

/// Reciprocal-sum coefficient for a run of exactly k o-steps.
pub fn exact_k_coef(k: u32) -> Rational {
    big(3) - big(3) * rat_pow(&rat(2, 3), k)
}

/// The root: every odd first minimum, n1 = 2a + 1.
pub fn root_state(config: &SearchConfig) -> CaseState {
    let form = AffineForm { a: big(2), b: big(1) };
    let constraints = vec![FloorConstraint {
        form: form.clone(),
        scale: big(1),
        offset: big(1),
    }];
    let mut st = CaseState {
        modulus_exp: 1,
        residue: BigUint::one(),
        affine_forms: Vec::new(),
        pending_form: PendingForm { form, status: PendingStatus::KnownOddMinimum },
        k_total: 0,
        min_count: 0,
        a_floor: BigUint::zero(),
        decisions: Vec::new(),
        constraints,
    };
    refresh_a_floor(&mut st, config);
    st
}

// --- closure evaluation -------------------------------------------------

// Largest admissible value of X0/(A*a + B) under one constraint
// form >= scale*X0 + offset, as a supremum valid for all X0 > 765.
fn symbolic_candidate(term: &AffineForm, c: &FloorConstraint) -> Option<Rational> {
    if !c.scale.is_positive() || !c.form.a.is_positive() {
        return None;
    }
    // a >= alpha*X0 + beta, hence term >= gamma*X0 + d.
    let alpha = &c.scale / &c.form.a;
    let beta = (&c.offset - &c.form.b) / &c.form.a;
    let gamma = &term.a * alpha;
    let d = &term.a * beta + &term.b;
    if d.is_positive() {
        // X0/(gamma*X0 + d) increases toward 1/gamma.
        Some(gamma.recip())
    } else if d.is_zero() {
        Some(gamma.recip())
    } else {
        // Decreasing in X0; the supremum sits at the smallest admissible X0.
        let x = big(SYMBOLIC_MIN_X0);
        let denom = gamma * &x + d;
        if denom.is_positive() {
            Some(x / denom)
        } else {
            None
        }
    }
}

// Supremum of X0/(A*a + B) over the admissible set, from the best
// available constraint; None when no constraint bounds the term.
fn symbolic_sup(term: &AffineForm, constraints: &[FloorConstraint]) -> Option<Rational> {
    let mut best: Option<Rational> = None;
    for c in constraints {
        if let Some(v) = symbolic_candidate(term, c) {
            best = match best {
                None => Some(v),
                Some(b) if v < b => Some(v),
                some => some,
            };
        }
    }
    best
}

// Smallest admissible a for concrete X0: every constraint turned into an
// exact ceiling.
fn concrete_a_floor(constraints: &[FloorConstraint], x0: &BigUint) -> BigUint {
    let x = Rational::from_integer(BigInt::from(x0.clone()));
    let mut floor = BigInt::zero();
    for c in constraints {
        if !c.form.a.is_positive() {
            continue;
        }
        let need = (&c.scale * &x + &c.offset - &c.form.b) / &c.form.a;
        let ceil = need.ceil().to_integer();
        if ceil > floor {
            floor = ceil;
        }
    }
    floor.to_biguint().expect("nonnegative floor")
}

fn refresh_a_floor(state: &mut CaseState, config: &SearchConfig) {
    state.a_floor = match &config.x0_mode {
        XZeroMode::Symbolic => BigUint::zero(),
        XZeroMode::Concrete(x) => concrete_a_floor(&state.constraints, x),
    };
}

// Does sum(coef_i * X0/n_i) <= target*weight hold over the admissible set?
fn window_holds(
    terms: &[(AffineForm, Rational)],
    constraints: &[FloorConstraint],
    config: &SearchConfig,
    weight: &Rational,
) -> bool {
    let budget = &config.target_coef * weight;
    match &config.x0_mode {
        XZeroMode::Symbolic => {
            let mut sum = Rational::zero();
            for (form, coef) in terms {
                match symbolic_sup(form, constraints) {
                    Some(s) => sum += coef * s,
                    None => return false,
                }
            }
            sum <= budget
        }
        XZeroMode::Concrete(x) => {
            let a0 = Rational::from_integer(BigInt::from(concrete_a_floor(constraints, x)));
            let x = Rational::from_integer(BigInt::from(x.clone()));
            let mut sum = Rational::zero();
            for (form, coef) in terms {
                let n = &form.a * &a0 + &form.b;
                if !n.is_positive() {
                    return false;
                }
                sum += coef * (&x / n);
            }
            sum <= budget
        }
    }
}

fn processed_terms(state: &CaseState) -> Vec<(AffineForm, Rational)> {
    state
        .affine_forms
        .iter()
        .map(|p| (p.form.clone(), p.coef.clone()))
        .collect()
}

fn window_weight(state: &CaseState, config: &SearchConfig, extra_minima: u64, extra_osteps: u64) -> Rational {
    match config.mode {
        AverageMode::Unweighted => Rational::from_integer(BigInt::from(state.min_count as u64 + extra_minima)),
        AverageMode::Weighted => Rational::from_integer(BigInt::from(state.k_total + extra_osteps)),
    }
}

// Closure claims for the node, or None when nothing closes it yet.
fn close_check(state: &CaseState, config: &SearchConfig) -> Option<Vec<CloseClaim>> {
    match state.pending_form.status {
        PendingStatus::LongRunMinimum => {
            // The processed window alone is a valid certificate.
            if state.min_count >= 1 {
                let weight = window_weight(state, config, 0, 0);
                if window_holds(&processed_terms(state), &state.constraints, config, &weight) {
                    return Some(vec![CloseClaim::Window { include_pending: false, weight }]);
                }
            }
            close_check_long_run(state, config)
        }
        PendingStatus::KnownOddMinimum | PendingStatus::AssumedOddMinimum => {
            if state.min_count >= 1 {
                let weight = window_weight(state, config, 0, 0);
                if window_holds(&processed_terms(state), &state.constraints, config, &weight) {
                    return Some(vec![CloseClaim::Window { include_pending: false, weight }]);
                }
            }
            // Include the pending minimum at the trivial coefficient 3.
            if state.min_count + 1 <= config.max_depth {
                let weight = window_weight(state, config, 1, 1);
                let mut terms = processed_terms(state);
                terms.push((state.pending_form.form.clone(), big(3)));
                if window_holds(&terms, &state.constraints, config, &weight) {
                    return Some(vec![CloseClaim::Window { include_pending: true, weight }]);
                }
            }
            None
        }
        PendingStatus::UnknownParity => {
            if state.min_count >= 1 {
                let weight = window_weight(state, config, 0, 0);
                if window_holds(&processed_terms(state), &state.constraints, config, &weight) {
                    return Some(vec![CloseClaim::Window { include_pending: false, weight }]);
                }
            }
            None
        }
    }
}

// A long-run node closes only when both residual shapes do: members whose
// run ends in at least two e-steps (merger floor applies), and members
// whose run ends in a single e-step (huge successor).
fn close_check_long_run(state: &CaseState, config: &SearchConfig) -> Option<Vec<CloseClaim>> {
    let cap = config.k_cap;
    let run_min = state.pending_form.form.clone();

    // Merger shape: the long-run minimum sits above 2*X0.
    let mut merger_constraints = state.constraints.clone();
    merger_constraints.push(FloorConstraint {
        form: run_min.clone(),
        scale: big(2),
        offset: big(1),
    });
    let merger_weight = window_weight(state, config, 1, cap as u64 + 1);
    let mut merger_terms = processed_terms(state);
    merger_terms.push((run_min.clone(), big(3)));
    if !window_holds(&merger_terms, &merger_constraints, config, &merger_weight) {
        return None;
    }

    // Single-e-step shape, preferring the variant that also charges the
    // run's successor: the successor exceeds (3/2)^(k+1) * n/2, so the
    // combined coefficient is 3 + 3*(2/3)^(cap+1).
    let mut direct = None;
    if state.min_count + 2 <= config.max_depth {
        let weight = window_weight(state, config, 2, cap as u64 + 2);
        let coef = big(3) + big(3) * rat_pow(&rat(2, 3), cap + 1);
        let mut terms = processed_terms(state);
        terms.push((run_min.clone(), coef));
        if window_holds(&terms, &state.constraints, config, &weight) {
            direct = Some(CloseClaim::LongRunDirect { include_successor: true, weight });
        }
    }
    if direct.is_none() {
        let weight = window_weight(state, config, 1, cap as u64 + 1);
        let mut terms = processed_terms(state);
        terms.push((run_min.clone(), big(3)));
        if window_holds(&terms, &state.constraints, config, &weight) {
            direct = Some(CloseClaim::LongRunDirect { include_successor: false, weight });
        }
    }
    direct.map(|d| vec![CloseClaim::LongRunMerger { weight: merger_weight }, d])
}

/// Can the window inequality be certified for every admissible member of
/// this class? TRUE closes the node; UNKNOWN requires deeper branching.
/// (A violation for all members is never certifiable here: reciprocal
/// sums vanish as the class parameter grows, so FALSE does not occur.)
pub fn try_close(state: &CaseState, config: &SearchConfig) -> TriState {
    if close_check(state, config).is_some() {
        TriState::True
    } else {
        TriState::Unknown
    }
}

// --- branching ----------------------------------------------------------

// Inverse of an odd residue modulo 2^bits.
fn odd_inverse_mod_pow2(u: &BigUint, bits: u64) -> BigUint {
    debug_assert!(u.is_odd());
    let mask = (BigUint::one() << bits) - 1u32;
    let mut inv = BigUint::one();
    let mut good: u64 = 1;
    while good < bits {
        good *= 2;
        let modulus = BigUint::one() << good.min(bits);
        let m = &modulus - 1u32;
        let two = BigUint::from(2u32);
        inv = (&inv * ((two + &modulus - ((u * &inv) & &m)) & &m)) & &m;
    }
    inv & mask
}

// Substitute a = 2^stride_exp * a' + shift into every form of the state.
fn substitute(state: &CaseState, stride_exp: u32, shift: &BigUint) -> CaseState {
    let stride = BigInt::from(BigUint::one() << stride_exp);
    let shift_i = BigInt::from(shift.clone());
    let mut out = state.clone();
    out.modulus_exp = state.modulus_exp + stride_exp;
    out.residue = &state.residue + (BigUint::one() << state.modulus_exp) * shift;
    for p in &mut out.affine_forms {
        p.form = p.form.substitute(&stride, &shift_i);
    }
    out.pending_form.form = out.pending_form.form.substitute(&stride, &shift_i);
    for c in &mut out.constraints {
        c.form = c.form.substitute(&stride, &shift_i);
    }
    out
}

// Solve form(a) = target (mod 2^mod_exp) for a; the form has integer
// coefficients here. Returns (stride_exp, shift) with solution set
// a = 2^stride_exp * a' + shift, or None when no a solves it.
fn solve_congruence(form: &AffineForm, target: &BigInt, mod_exp: u32) -> Option<(u32, BigUint)> {
    let p = form.a.to_integer();
    let q = form.b.to_integer();
    let modulus = BigInt::from(BigUint::one() << mod_exp);
    let rhs = ((target - q) % &modulus + &modulus) % &modulus;
    let v = if p.is_zero() { u64::from(mod_exp) } else { p.trailing_zeros().unwrap_or(0).min(u64::from(mod_exp)) };
    let rhs_v = if rhs.is_zero() { u64::from(mod_exp) } else { rhs.trailing_zeros().unwrap_or(0) };
    if v > rhs_v {
        return None;
    }
    if v >= u64::from(mod_exp) {
        // Already determined for every a.
        return Some((0, BigUint::zero()));
    }
    let s = mod_exp - v as u32;
    let p_odd = (&p >> v).magnitude().clone() & ((BigUint::one() << s) - 1u32);
    let p_neg = p.sign() == Sign::Minus;
    let rhs_shift = (&rhs >> v).magnitude().clone() & ((BigUint::one() << s) - 1u32);
    let inv = odd_inverse_mod_pow2(&p_odd, u64::from(s));
    let mask = (BigUint::one() << s) - 1u32;
    let mut shift = (rhs_shift * inv) & mask.clone();
    if p_neg {
        // a solved for -p; negate the solution mod 2^s.
        if !shift.is_zero() {
            shift = (BigUint::one() << s) - shift;
        }
    }
    Some((s, shift))
}

// Integer-valuedness test for a dyadic-coefficient form: solvable unless
// the constant's denominator exceeds the slope's.
fn form_can_be_integer(form: &AffineForm) -> bool {
    let da = form.a.denom().trailing_zeros().unwrap_or(0);
    let db = form.b.denom().trailing_zeros().unwrap_or(0);
    db <= da
}

enum Normalized {
    Impossible,
    Minimum(AffineForm, PendingStatus),
    Open(AffineForm),
}

fn push_floor_unique(constraints: &mut Vec<FloorConstraint>, form: &AffineForm) {
    let c = FloorConstraint { form: form.clone(), scale: big(1), offset: big(1) };
    if !constraints.contains(&c) {
        constraints.push(c);
    }
}

// Walk a mid-e-run form down: drop impossible classes, halve while the
// class forces evenness, stop at a known-odd minimum or unresolved parity.
// Every value passed through is on the cycle, so each picks up an X0 floor.
fn normalize_front(mut form: AffineForm, constraints: &mut Vec<FloorConstraint>) -> Normalized {
    loop {
        if !form_can_be_integer(&form) {
            return Normalized::Impossible;
        }
        push_floor_unique(constraints, &form);
        if !form.a.is_integer() || !form.b.is_integer() {
            return Normalized::Open(form);
        }
        if form.a.to_integer().is_odd() {
            return Normalized::Open(form);
        }
        if form.b.to_integer().is_odd() {
            return Normalized::Minimum(form, PendingStatus::KnownOddMinimum);
        }
        // Forced even: take the e-step.
        form = AffineForm { a: form.a / big(2), b: form.b / big(2) };
    }
}

/// Children that partition this node's admissible set. An open pending
/// minimum branches on the run shape (k = 1..k_cap with one or at least
/// two trailing e-steps, plus the long-run shortcut); an unresolved
/// mid-e-run front splits the parameter's parity instead.
pub fn branch(state: &CaseState, config: &SearchConfig) -> Vec<CaseState> {
    match state.pending_form.status {
        PendingStatus::UnknownParity => branch_parity(state, config),
        PendingStatus::KnownOddMinimum | PendingStatus::AssumedOddMinimum => branch_runs(state, config),
        PendingStatus::LongRunMinimum => Vec::new(),
    }
}

fn branch_parity(state: &CaseState, config: &SearchConfig) -> Vec<CaseState> {
    let mut out = Vec::new();
    for bit in 0u32..2 {
        let mut child = substitute(state, 1, &BigUint::from(bit));
        let mut constraints = std::mem::take(&mut child.constraints);
        match normalize_front(child.pending_form.form.clone(), &mut constraints) {
            Normalized::Impossible => continue,
            Normalized::Minimum(form, status) => {
                child.pending_form = PendingForm { form, status };
            }
            Normalized::Open(form) => {
                child.pending_form = PendingForm { form, status: PendingStatus::UnknownParity };
            }
        }
        child.constraints = constraints;
        refresh_a_floor(&mut child, config);
        out.push(child);
    }
    out
}

fn branch_runs(state: &CaseState, config: &SearchConfig) -> Vec<CaseState> {
    let mut out = Vec::new();
    for k in 1..=config.k_cap {
        // Pin exactly k o-steps: front = 2^k - 1 (mod 2^(k+1)).
        let target = BigInt::from((BigUint::one() << k) - 1u32);
        let Some((stride, shift)) = solve_congruence(&state.pending_form.form, &target, k + 1) else {
            continue;
        };
        let refined = substitute(state, stride, &shift);
        let front = refined.pending_form.form.clone();
        debug_assert!(front.a.is_integer() && front.b.is_integer());
        // Run closed form: front = b*2^k - 1 with b odd, landing value
        // after k o-steps and one e-step is (3^k*b - 1)/2.
        let b_form = AffineForm {
            a: &front.a / rat_pow(&rat(2, 1), k),
            b: (&front.b + big(1)) / rat_pow(&rat(2, 1), k),
        };
        let three_k = rat_pow(&rat(3, 1), k);
        let after = AffineForm {
            a: (&b_form.a * &three_k) / big(2),
            b: (&b_form.b * &three_k - big(1)) / big(2),
        };
        debug_assert!(after.a.is_integer() && after.b.is_integer());
        let coef = exact_k_coef(k);

        // One trailing e-step: the landing value is the next odd minimum.
        let after_parity = if after.a.to_integer().is_even() {
            Some(after.b.to_integer().is_odd())
        } else {
            None
        };
        if after_parity != Some(false) {
            let mut child = refined.clone();
            child.affine_forms.push(ProcessedMinimum {
                form: front.clone(),
                coef: coef.clone(),
                k,
                ell_at_least_two: false,
            });
            child.min_count += 1;
            child.k_total += u64::from(k);
            child.decisions.push(BranchDecision::Run { k, ell_at_least_two: false });
            let status = if after_parity == Some(true) {
                PendingStatus::KnownOddMinimum
            } else {
                PendingStatus::AssumedOddMinimum
            };
            child.pending_form = PendingForm { form: after.clone(), status };
            child.constraints.push(FloorConstraint { form: after.clone(), scale: big(1), offset: big(1) });
            refresh_a_floor(&mut child, config);
            out.push(child);
        }

        // At least two trailing e-steps: the current minimum sits above
        // 2*X0 and the front moves past a second e-step.
        if after_parity != Some(true) {
            let mut child = refined.clone();
            child.affine_forms.push(ProcessedMinimum {
                form: front.clone(),
                coef,
                k,
                ell_at_least_two: true,
            });
            child.min_count += 1;
            child.k_total += u64::from(k);
            child.decisions.push(BranchDecision::Run { k, ell_at_least_two: true });
            child.constraints.push(FloorConstraint { form: front.clone(), scale: big(2), offset: big(1) });
            let halved = AffineForm { a: &after.a / big(2), b: &after.b / big(2) };
            let mut constraints = std::mem::take(&mut child.constraints);
            match normalize_front(halved, &mut constraints) {
                Normalized::Impossible => {}
                Normalized::Minimum(form, status) => {
                    child.constraints = constraints;
                    child.pending_form = PendingForm { form, status };
                    refresh_a_floor(&mut child, config);
                    out.push(child);
                }
                Normalized::Open(form) => {
                    child.constraints = constraints;
                    child.pending_form = PendingForm { form, status: PendingStatus::UnknownParity };
                    refresh_a_floor(&mut child, config);
                    out.push(child);
                }
            }
        }
    }

    // Long-run shortcut: at least k_cap + 1 o-steps.
    let cap = config.k_cap;
    let target = BigInt::from((BigUint::one() << (cap + 1)) - 1u32);
    if let Some((stride, shift)) = solve_congruence(&state.pending_form.form, &target, cap + 1) {
        let mut child = substitute(state, stride, &shift);
        child.decisions.push(BranchDecision::LongRun);
        child.pending_form.status = PendingStatus::LongRunMinimum;
        refresh_a_floor(&mut child, config);
        out.push(child);
    }
    out
}

// --- search loop --------------------------------------------------------

enum NodeResult {
    Closed(Option<ClosedNode>),
    Children(Vec<CaseState>),
    Witness(CaseState),
}

fn process_node(state: &CaseState, config: &SearchConfig) -> NodeResult {
    if let Some(claims) = close_check(state, config) {
        return NodeResult::Closed(if config.collect_closed {
            Some(ClosedNode { state: state.clone(), claims })
        } else {
            None
        });
    }
    let may_branch = match state.pending_form.status {
        PendingStatus::LongRunMinimum => false,
        PendingStatus::UnknownParity => true,
        _ => state.min_count < config.max_depth,
    };
    if !may_branch {
        return NodeResult::Witness(state.clone());
    }
    let children = branch(state, config);
    if children.iter().any(|c| c.modulus_exp > config.modulus_exp_ceiling) {
        return NodeResult::Witness(state.clone());
    }
    NodeResult::Children(children)
}

/// Full exploration from the root.
pub fn prove_average_bound(config: &SearchConfig) -> SearchOutcome {
    prove_from_frontier(vec![root_state(config)], config)
}

/// Exploration seeded with an explicit frontier (checkpoint resume).
pub fn prove_from_frontier(frontier: Vec<CaseState>, config: &SearchConfig) -> SearchOutcome {
    let started = Instant::now();
    let mut frontier = frontier;
    let mut witnesses: Vec<CaseState> = Vec::new();
    let mut closed: Vec<ClosedNode> = Vec::new();
    let mut closed_count = 0u64;
    let mut nodes_explored = 0u64;
    let mut max_exp = frontier.iter().map(|s| s.modulus_exp).max().unwrap_or(0);
    let mut budget_exhausted = false;
    let mut since_checkpoint = 0u64;

    while !frontier.is_empty() {
        if let Some(budget) = config.node_budget {
            if nodes_explored >= budget {
                budget_exhausted = true;
                break;
            }
        }
        let results = process_wave(&frontier, config);
        nodes_explored += frontier.len() as u64;
        since_checkpoint += frontier.len() as u64;
        for s in &frontier {
            max_exp = max_exp.max(s.modulus_exp);
        }
        let mut next = Vec::new();
        for r in results {
            match r {
                NodeResult::Closed(rec) => {
                    closed_count += 1;
                    if let Some(rec) = rec {
                        closed.push(rec);
                    }
                }
                NodeResult::Children(kids) => next.extend(kids),
                NodeResult::Witness(w) => witnesses.push(w),
            }
        }
        frontier = next;
        if let Some(policy) = &config.checkpoint {
            if since_checkpoint >= policy.every_nodes && !frontier.is_empty() {
                since_checkpoint = 0;
                // Best effort: a failed periodic save must not kill the run.
                let _ = checkpoint_save(&frontier, config, &policy.path);
            }
        }
    }

    if let Some(policy) = &config.checkpoint {
        if budget_exhausted {
            // Final save so an aborted run can be resumed from here.
            let _ = checkpoint_save(&frontier, config, &policy.path);
        } else {
            // A decisive run leaves no frontier worth resuming.
            let _ = std::fs::remove_file(&policy.path);
        }
    }
    if budget_exhausted {
        witnesses.extend(frontier);
    }
    witnesses.sort_by(|x, y| {
        x.modulus_exp
            .cmp(&y.modulus_exp)
            .then_with(|| x.residue.cmp(&y.residue))
    });
    SearchOutcome {
        proven: witnesses.is_empty() && !budget_exhausted,
        budget_exhausted,
        nodes_explored,
        max_modulus_exp_reached: max_exp,
        witnesses,
        elapsed_seconds: started.elapsed().as_secs_f64(),
        closed_count,
        closed,
    }
}

// One frontier wave, order-preserving so the search is schedule-independent.
fn process_wave(frontier: &[CaseState], config: &SearchConfig) -> Vec<NodeResult> {
    let workers = if config.worker_count == 0 {
        std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
    } else {
        config.worker_count
    };
    if workers <= 1 || frontier.len() <= 1 {
        return frontier.iter().map(|s| process_node(s, config)).collect();
    }
    let injector: Injector<usize> = Injector::new();
    for idx in 0..frontier.len() {
        injector.push(idx);
    }
    let slots: Vec<Mutex<Option<NodeResult>>> = (0..frontier.len()).map(|_| Mutex::new(None)).collect();
    let remaining = AtomicUsize::new(frontier.len());
    std::thread::scope(|scope| {
        for _ in 0..workers.min(frontier.len()) {
            scope.spawn(|| loop {
                match injector.steal() {
                    Steal::Success(idx) => {
                        let result = process_node(&frontier[idx], config);
                        *slots[idx].lock().unwrap() = Some(result);
                        remaining.fetch_sub(1, Ordering::SeqCst);
                    }
                    Steal::Empty => {
                        if remaining.load(Ordering::SeqCst) == 0 {
                            break;
                        }
                        std::thread::yield_now();
                    }
                    Steal::Retry => {}
                }
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().unwrap().expect("every slot filled"))
        .collect()
}

// --- soundness sampling -------------------------------------------------

// Branch decisions realized by a concrete odd start, up to max_minima runs.
fn simulate_decisions(start: &BigUint, max_minima: usize) -> Vec<(u64, bool)> {
    let mut out = Vec::new();
    let mut cur = start.clone();
    while out.len() < max_minima {
        let (k, end) = collatz::accel_odd_run(&cur);
        let ell = end.trailing_zeros().expect("even landing");
        out.push((k, ell >= 2));
        cur = end >> ell;
        if cur.is_one() {
            break;
        }
    }
    out
}

fn matches_decisions(node: &CaseState, simulated: &[(u64, bool)], k_cap: u32) -> bool {
    let mut idx = 0;
    for d in &node.decisions {
        let Some(&(k, ell2)) = simulated.get(idx) else { return false };
        match d {
            BranchDecision::Run { k: dk, ell_at_least_two } => {
                if k != u64::from(*dk) || ell2 != *ell_at_least_two {
                    return false;
                }
            }
            BranchDecision::LongRun => {
                if k < u64::from(k_cap) + 1 {
                    return false;
                }
            }
        }
        idx += 1;
    }
    true
}

/// Verifies a closed node's claims on `want` concrete class members whose
/// trajectories follow the node's branch decisions, with floors taken at
/// the given concrete X0. Returns the number of members checked.
pub fn soundness_sample(
    node: &ClosedNode,
    config: &SearchConfig,
    x0: &BigUint,
    want: usize,
) -> Result<usize, String> {
    let state = &node.state;
    let a_floor = concrete_a_floor(&state.constraints, x0);
    let x0_rat = Rational::from_integer(BigInt::from(x0.clone()));
    let needed_minima = state.min_count as usize + 2;
    let mut checked = 0usize;
    let mut a = BigInt::from(a_floor);
    let attempts_cap = want * 4096;
    let mut attempts = 0usize;
    while checked < want {
        attempts += 1;
        if attempts > attempts_cap {
            return Err(format!(
                "only {checked} of {want} class members found after {attempts_cap} candidates"
            ));
        }
        let n1 = state
            .affine_forms
            .first()
            .map(|p| p.form.eval(&a))
            .unwrap_or_else(|| state.pending_form.form.eval(&a));
        let a_cur = a.clone();
        a += 1;
        debug_assert!(n1.is_integer());
        let n1 = n1.to_integer().to_biguint().expect("positive minimum");
        debug_assert_eq!(&n1 % (BigUint::one() << state.modulus_exp), state.residue);
        let sim = simulate_decisions(&n1, needed_minima + 2);
        if !matches_decisions(state, &sim, config.k_cap) {
            continue;
        }
        // Walk the trajectory once, keeping every odd value per run so the
        // reciprocal sums can be accumulated unreduced; gcd-free fractions
        // stay exact and the final comparison cross-multiplies.
        let mut minima: Vec<BigUint> = Vec::new();
        let mut runs: Vec<Vec<BigUint>> = Vec::new();
        let mut cur = n1.clone();
        for _ in 0..needed_minima {
            minima.push(cur.clone());
            let (k, end) = collatz::accel_odd_run(&cur);
            let mut odds = Vec::with_capacity(k as usize);
            let mut v = cur.clone();
            for _ in 0..k {
                odds.push(v.clone());
                v = (&v * 3u32 + 1u32) >> 1;
            }
            debug_assert_eq!(v, end);
            runs.push(odds);
            let ell = end.trailing_zeros().expect("even landing");
            cur = end >> ell;
            if cur.is_one() {
                break;
            }
        }
        for claim in &node.claims {
            let (member_count, weight) = match claim {
                CloseClaim::Window { include_pending, weight } => {
                    (state.min_count as usize + usize::from(*include_pending), weight)
                }
                CloseClaim::LongRunMerger { weight } => {
                    if !sim[state.min_count as usize].1 {
                        continue;
                    }
                    (state.min_count as usize + 1, weight)
                }
                CloseClaim::LongRunDirect { include_successor, weight } => {
                    if sim[state.min_count as usize].1 {
                        continue;
                    }
                    (state.min_count as usize + 1 + usize::from(*include_successor), weight)
                }
            };
            if minima.len() < member_count {
                return Err(format!("trajectory of {n1} too short for the claimed window"));
            }
            let mut num = BigUint::zero();
            let mut den = BigUint::one();
            for odds in &runs[..member_count] {
                for c in odds {
                    num = num * c + &den;
                    den *= c;
                }
            }
            let budget = &config.target_coef * weight / &x0_rat;
            let bn = budget.numer().to_biguint().expect("positive budget");
            let bd = budget.denom().to_biguint().expect("positive denominator");
            if num * bd > den * bn {
                return Err(format!(
                    "member {n1} (a = {a_cur}) violates the claimed window bound"
                ));
            }
        }
        // Affine forms must reproduce the trajectory minima exactly.
        for (j, p) in state.affine_forms.iter().enumerate() {
            let predicted = p.form.eval(&a_cur).to_integer().to_biguint().expect("positive");
            if minima.get(j) != Some(&predicted) {
                return Err(format!("form {j} predicts {predicted}, trajectory disagrees"));
            }
        }
        checked += 1;
    }
    Ok(checked)
}

// --- checkpointing ------------------------------------------------------

fn put_varint(out: &mut Vec<u8>, mut v: u64) {
    loop {
        let byte = (v & 0x7f) as u8;
        v >>= 7;
        if v == 0 {
            out.push(byte);
            break;
        }
        out.push(byte | 0x80);
    }
}

fn put_biguint(out: &mut Vec<u8>, v: &BigUint) {
    let bytes = v.to_bytes_be();
    let bytes = if v.is_zero() { Vec::new() } else { bytes };
    put_varint(out, bytes.len() as u64);
    out.extend_from_slice(&bytes);
}

fn put_bigint(out: &mut Vec<u8>, v: &BigInt) {
    out.push(if v.sign() == Sign::Minus { 1 } else { 0 });
    put_biguint(out, v.magnitude());
}

fn put_rational(out: &mut Vec<u8>, v: &Rational) {
    put_bigint(out, v.numer());
    put_bigint(out, v.denom());
}

fn put_form(out: &mut Vec<u8>, f: &AffineForm) {
    put_rational(out, &f.a);
    put_rational(out, &f.b);
}

fn encode_state(state: &CaseState) -> Vec<u8> {
    let mut out = Vec::new();
    put_varint(&mut out, u64::from(state.modulus_exp));
    put_biguint(&mut out, &state.residue);
    put_varint(&mut out, u64::from(state.min_count));
    put_varint(&mut out, state.k_total);
    put_biguint(&mut out, &state.a_floor);
    put_varint(&mut out, state.decisions.len() as u64);
    for d in &state.decisions {
        match d {
            BranchDecision::Run { k, ell_at_least_two } => {
                out.push(0);
                put_varint(&mut out, u64::from(*k));
                out.push(u8::from(*ell_at_least_two));
            }
            BranchDecision::LongRun => out.push(1),
        }
    }
    put_varint(&mut out, state.affine_forms.len() as u64);
    for p in &state.affine_forms {
        put_form(&mut out, &p.form);
        put_rational(&mut out, &p.coef);
        put_varint(&mut out, u64::from(p.k));
        out.push(u8::from(p.ell_at_least_two));
    }
    out.push(match state.pending_form.status {
        PendingStatus::KnownOddMinimum => 0,
        PendingStatus::AssumedOddMinimum => 1,
        PendingStatus::UnknownParity => 2,
        PendingStatus::LongRunMinimum => 3,
    });
    put_form(&mut out, &state.pending_form.form);
    put_varint(&mut out, state.constraints.len() as u64);
    for c in &state.constraints {
        put_form(&mut out, &c.form);
        put_rational(&mut out, &c.scale);
        put_rational(&mut out, &c.offset);
    }
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], String> {
        if self.pos + n > self.buf.len() {
            return Err("unexpected end of record".into());
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn varint(&mut self) -> Result<u64, String> {
        let mut v: u64 = 0;
        let mut shift = 0u32;
        loop {
            let byte = self.take(1)?[0];
            if shift >= 63 && byte > 1 {
                return Err("varint overflow".into());
            }
            v |= u64::from(byte & 0x7f) << shift;
            if byte & 0x80 == 0 {
                return Ok(v);
            }
            shift += 7;
        }
    }

    fn biguint(&mut self) -> Result<BigUint, String> {
        let len = self.varint()? as usize;
        if len > 1 << 20 {
            return Err("integer record too large".into());
        }
        Ok(BigUint::from_bytes_be(self.take(len)?))
    }

    fn bigint(&mut self) -> Result<BigInt, String> {
        let neg = self.take(1)?[0] != 0;
        let mag = self.biguint()?;
        let sign = if mag.is_zero() {
            Sign::NoSign
        } else if neg {
            Sign::Minus
        } else {
            Sign::Plus
        };
        Ok(BigInt::from_biguint(sign, mag))
    }

    fn rational(&mut self) -> Result<Rational, String> {
        let n = self.bigint()?;
        let d = self.bigint()?;
        if !d.is_positive() {
            return Err("nonpositive denominator".into());
        }
        Ok(Rational::new(n, d))
    }

    fn form(&mut self) -> Result<AffineForm, String> {
        Ok(AffineForm { a: self.rational()?, b: self.rational()? })
    }
}

fn decode_state(buf: &[u8]) -> Result<CaseState, String> {
    let mut c = Cursor { buf, pos: 0 };
    let modulus_exp = c.varint()? as u32;
    let residue = c.biguint()?;
    let min_count = c.varint()? as u32;
    let k_total = c.varint()?;
    let a_floor = c.biguint()?;
    let n_dec = c.varint()? as usize;
    let mut decisions = Vec::with_capacity(n_dec.min(1024));
    for _ in 0..n_dec {
        match c.take(1)?[0] {
            0 => {
                let k = c.varint()? as u32;
                let ell = c.take(1)?[0] != 0;
                decisions.push(BranchDecision::Run { k, ell_at_least_two: ell });
            }
            1 => decisions.push(BranchDecision::LongRun),
            t => return Err(format!("unknown decision tag {t}")),
        }
    }
    let n_forms = c.varint()? as usize;
    let mut affine_forms = Vec::with_capacity(n_forms.min(1024));
    for _ in 0..n_forms {
        let form = c.form()?;
        let coef = c.rational()?;
        let k = c.varint()? as u32;
        let ell = c.take(1)?[0] != 0;
        affine_forms.push(ProcessedMinimum { form, coef, k, ell_at_least_two: ell });
    }
    let status = match c.take(1)?[0] {
        0 => PendingStatus::KnownOddMinimum,
        1 => PendingStatus::AssumedOddMinimum,
        2 => PendingStatus::UnknownParity,
        3 => PendingStatus::LongRunMinimum,
        t => return Err(format!("unknown pending status {t}")),
    };
    let pending_form = PendingForm { form: c.form()?, status };
    let n_cons = c.varint()? as usize;
    let mut constraints = Vec::with_capacity(n_cons.min(1024));
    for _ in 0..n_cons {
        let form = c.form()?;
        let scale = c.rational()?;
        let offset = c.rational()?;
        constraints.push(FloorConstraint { form, scale, offset });
    }
    if c.pos != buf.len() {
        return Err("trailing bytes in record".into());
    }
    Ok(CaseState {
        modulus_exp,
        residue,
        affine_forms,
        pending_form,
        k_total,
        min_count,
        a_floor,
        decisions,
        constraints,
    })
}

/// Writes the open-node frontier with a versioned, config-bound header.
pub fn checkpoint_save(frontier: &[CaseState], config: &SearchConfig, path: &Path) -> Result<(), EngineError> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&config.semantic_hash());
    for state in frontier {
        let body = encode_state(state);
        put_varint(&mut out, body.len() as u64);
        out.extend_from_slice(&body);
    }
    let tmp = path.with_extension("tmp");
    let mut f = std::fs::File::create(&tmp)?;
    f.write_all(&out)?;
    f.sync_all()?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Loads a frontier saved by `checkpoint_save`, refusing version or
/// configuration mismatches and corrupt records.
pub fn checkpoint_load(path: &Path, config: &SearchConfig) -> Result<Vec<CaseState>, EngineError> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    if buf.len() < 4 + 4 + 32 || &buf[..4] != CHECKPOINT_MAGIC {
        return Err(EngineError::BadMagic);
    }
    let version = u32::from_le_bytes(buf[4..8].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(EngineError::VersionMismatch { found: version, expected: CHECKPOINT_VERSION });
    }
    if buf[8..40] != config.semantic_hash() {
        return Err(EngineError::ConfigMismatch);
    }
    let mut states = Vec::new();
    let mut c = Cursor { buf: &buf[40..], pos: 0 };
    while c.pos < c.buf.len() {
        let corrupt = |records_read: usize, detail: String| EngineError::CorruptRecord { records_read, detail };
        let len = c.varint().map_err(|e| corrupt(states.len(), e))? as usize;
        let body = c.take(len).map_err(|e| corrupt(states.len(), e))?;
        let state = decode_state(body).map_err(|e| corrupt(states.len(), e))?;
        states.push(state);
    }
    Ok(states)
}
