//! Closed-form generalization bounds for training on a clean/randomly-labeled
//! mixture, and the pseudo-label iteration quantities derived from them.
//!
//! Everything here is a pure function of its inputs. Logarithms are natural.
//! Integer counts round toward the safe side of the inequality they serve:
//! randomized-subset sizes round down, sample-complexity thresholds round up.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default upper limit for the self-consistent sample-complexity search.
pub const DEFAULT_COMPLEXITY_CAP: u64 = 1_000_000_000_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundsError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("relaxed bound requires m/n < 1, got m={m}, n={n}")]
    RatioNotBelowOne { m: u64, n: u64 },
    #[error("too few examples for a randomized subset (N={total}, delta_tilde={delta_tilde})")]
    EmptyRandomizedSubset { total: u64, delta_tilde: f64 },
    #[error(
        "infeasible risk gamma={gamma}: must be below delta_tilde/(1+delta_tilde)={threshold}"
    )]
    InfeasibleGamma { gamma: f64, threshold: f64 },
    #[error("complexity bracket undefined: {0}")]
    UndefinedBracket(String),
    #[error("convergence ratio undefined at index {index}: bound {bound} <= E_D* {e_d_star}")]
    RatioUndefined {
        index: usize,
        bound: f64,
        e_d_star: f64,
    },
    #[error("need at least two bounds to form a ratio, got {0}")]
    TooFewBounds(usize),
    #[error("no feasible N at or below the search cap {cap}")]
    NoFeasibleN { cap: u64 },
}

fn invalid(name: &'static str, reason: impl Into<String>) -> BoundsError {
    BoundsError::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

fn check_open_unit(name: &'static str, value: f64) -> Result<(), BoundsError> {
    if value.is_finite() && value > 0.0 && value < 1.0 {
        Ok(())
    } else {
        Err(invalid(name, format!("must lie in (0,1), got {value}")))
    }
}

/// Theory parameters shared by every bound formula.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, try_from = "RawProblemSpec")]
pub struct ProblemSpec {
    k: usize,
    delta: f64,
    epsilon: f64,
    delta_tilde: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProblemSpec {
    k: usize,
    delta: f64,
    epsilon: f64,
    delta_tilde: f64,
}

impl TryFrom<RawProblemSpec> for ProblemSpec {
    type Error = BoundsError;

    fn try_from(raw: RawProblemSpec) -> Result<Self, Self::Error> {
        ProblemSpec::new(raw.k, raw.delta, raw.epsilon, raw.delta_tilde)
    }
}

impl ProblemSpec {
    pub fn new(k: usize, delta: f64, epsilon: f64, delta_tilde: f64) -> Result<Self, BoundsError> {
        if k < 2 {
            return Err(invalid("k", format!("need at least 2 classes, got {k}")));
        }
        check_open_unit("delta", delta)?;
        check_open_unit("delta_tilde", delta_tilde)?;
        let ceiling = 1.0 - 1.0 / k as f64;
        if !(epsilon.is_finite() && epsilon >= 0.0 && epsilon < ceiling) {
            return Err(invalid(
                "epsilon",
                format!("must lie in [0, 1-1/k) = [0, {ceiling}), got {epsilon}"),
            ));
        }
        Ok(Self {
            k,
            delta,
            epsilon,
            delta_tilde,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn delta_tilde(&self) -> f64 {
        self.delta_tilde
    }

    /// `log(4/delta)`, the confidence factor every concentration term carries.
    pub fn log_term(&self) -> f64 {
        (4.0 / self.delta).ln()
    }

    /// Largest population risk for which a randomized subset can still be drawn.
    pub fn gamma_threshold(&self) -> f64 {
        gamma_threshold(self.delta_tilde)
    }
}

pub fn gamma_threshold(delta_tilde: f64) -> f64 {
    delta_tilde / (1.0 + delta_tilde)
}

/// 0-1 errors on the clean and randomly-labeled training portions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalErrors {
    e_clean: f64,
    e_random: f64,
}

impl EmpiricalErrors {
    pub fn new(e_clean: f64, e_random: f64) -> Result<Self, BoundsError> {
        for (name, v) in [("e_clean", e_clean), ("e_random", e_random)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(invalid(name, format!("must lie in [0,1], got {v}")));
            }
        }
        Ok(Self { e_clean, e_random })
    }

    pub fn e_clean(&self) -> f64 {
        self.e_clean
    }

    pub fn e_random(&self) -> f64 {
        self.e_random
    }
}

/// Sizes of the randomly-labeled (`m`) and clean (`n`) training portions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    m: u64,
    n: u64,
}

impl SplitSpec {
    pub fn new(m: u64, n: u64) -> Result<Self, BoundsError> {
        if m == 0 {
            return Err(invalid("m", "randomized count must be at least 1"));
        }
        if n == 0 {
            return Err(invalid("n", "clean count must be at least 1"));
        }
        Ok(Self { m, n })
    }

    pub fn m(&self) -> u64 {
        self.m
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    /// The exact ratio `m/n`.
    pub fn ratio(&self) -> BigRational {
        BigRational::new(BigInt::from(self.m), BigInt::from(self.n))
    }

    /// Exact test of `m/n <= bound`, with `bound` taken at its exact binary value.
    pub fn ratio_at_most(&self, bound: f64) -> bool {
        match BigRational::from_float(bound) {
            Some(b) => self.ratio() <= b,
            None => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Formula {
    /// Bound with the data-dependent constant `2k + sqrt(k) + m/(n sqrt(k))`.
    Theorem1,
    /// Bound with the constant relaxed to `4k`, valid when `m < n`.
    Relaxed,
}

impl std::fmt::Display for Formula {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Formula::Theorem1 => write!(f, "theorem1"),
            Formula::Relaxed => write!(f, "relaxed"),
        }
    }
}

/// One evaluated bound with its additive components exposed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub term_clean: f64,
    pub term_random: f64,
    pub term_concentration: f64,
    pub constant_used: f64,
    pub total: f64,
    pub formula: Formula,
    /// Set when `total` exceeds 1; the value is still reported unclipped.
    pub vacuous: bool,
}

impl BoundReport {
    fn assemble(
        formula: Formula,
        k: usize,
        err: &EmpiricalErrors,
        constant: f64,
        concentration: f64,
    ) -> Self {
        let kf = k as f64;
        let term_clean = err.e_clean;
        let term_random = (kf - 1.0) * (1.0 - kf / (kf - 1.0) * err.e_random);
        let total = term_clean + term_random + concentration;
        Self {
            term_clean,
            term_random,
            term_concentration: concentration,
            constant_used: constant,
            total,
            formula,
            vacuous: total > 1.0,
        }
    }
}

/// The constant `2k + sqrt(k) + m/(n sqrt(k))`, taken at equality.
pub fn theorem1_constant(k: usize, split: &SplitSpec) -> f64 {
    let kf = k as f64;
    let sk = kf.sqrt();
    2.0 * kf + sk + split.m as f64 / (split.n as f64 * sk)
}

/// `E_S + (k-1)(1 - k/(k-1) E_S~) + c sqrt(log(4/delta) / 2m)`.
pub fn ratt_bound_theorem1(
    spec: &ProblemSpec,
    split: &SplitSpec,
    err: &EmpiricalErrors,
) -> BoundReport {
    let c = theorem1_constant(spec.k, split);
    let conc = c * (spec.log_term() / (2.0 * split.m as f64)).sqrt();
    BoundReport::assemble(Formula::Theorem1, spec.k, err, c, conc)
}

/// `E_S + (k-1)(1 - k/(k-1) E_S~) + 4k sqrt(log(4/delta) / m)`, requires `m < n`.
pub fn ratt_bound_relaxed(
    spec: &ProblemSpec,
    split: &SplitSpec,
    err: &EmpiricalErrors,
) -> Result<BoundReport, BoundsError> {
    if split.m >= split.n {
        return Err(BoundsError::RatioNotBelowOne {
            m: split.m,
            n: split.n,
        });
    }
    let c = 4.0 * spec.k as f64;
    let conc = c * (spec.log_term() / split.m as f64).sqrt();
    Ok(BoundReport::assemble(
        Formula::Relaxed,
        spec.k,
        err,
        c,
        conc,
    ))
}

fn exact(value: f64) -> BigRational {
    BigRational::from_float(value).expect("finite value")
}

fn floor_to_u64(value: &BigRational) -> u64 {
    value.floor().to_integer().to_u64().unwrap_or(0)
}

/// Split `total` examples so the randomized fraction sits at the ceiling:
/// `m = floor(delta_tilde/(1+delta_tilde) * N)`, `n = N - m`.
///
/// Evaluated in exact rational arithmetic, so `m/n <= delta_tilde` holds exactly.
pub fn optimal_split(total: u64, delta_tilde: f64) -> Result<SplitSpec, BoundsError> {
    if total == 0 {
        return Err(invalid("N", "need at least one example"));
    }
    check_open_unit("delta_tilde", delta_tilde)?;
    let dt = exact(delta_tilde);
    let one = BigRational::from_integer(1.into());
    let m_exact = &dt / (&one + &dt) * BigRational::from_integer(total.into());
    let m = floor_to_u64(&m_exact);
    if m == 0 {
        return Err(BoundsError::EmptyRandomizedSubset { total, delta_tilde });
    }
    SplitSpec::new(m, total - m)
}

/// `E_D* = (k+1) eps + 4k sqrt(log(4/delta)) / sqrt(delta_tilde/(1+delta_tilde) N)`.
///
/// The continuous form is used (no flooring of `m`).
pub fn supervised_ceiling(spec: &ProblemSpec, total: u64) -> Result<f64, BoundsError> {
    optimal_split(total, spec.delta_tilde)?;
    Ok(supervised_ceiling_continuous(spec, total as f64))
}

fn supervised_ceiling_continuous(spec: &ProblemSpec, total: f64) -> f64 {
    let kf = spec.k as f64;
    let frac = spec.delta_tilde / (1.0 + spec.delta_tilde);
    (kf + 1.0) * spec.epsilon + 4.0 * kf * spec.log_term().sqrt() / (frac * total).sqrt()
}

fn check_gamma(gamma: f64, delta_tilde: f64) -> Result<(), BoundsError> {
    let threshold = gamma_threshold(delta_tilde);
    if !(gamma.is_finite() && gamma >= 0.0) {
        return Err(invalid(
            "gamma",
            format!("must be a risk in [0,1), got {gamma}"),
        ));
    }
    // Exact comparison: gamma < dt/(1+dt)  <=>  gamma (1+dt) < dt.
    let g = exact(gamma);
    let dt = exact(delta_tilde);
    let one = BigRational::from_integer(1.into());
    if g * (one + &dt) >= dt {
        return Err(BoundsError::InfeasibleGamma { gamma, threshold });
    }
    Ok(())
}

/// Largest randomized subset that keeps the pseudo-labeled mixture within the
/// noise ceiling: `floor((dt(1-g) - g) / ((1+dt)(1-g)) * N)`.
pub fn max_randomized_count(total: u64, gamma: f64, delta_tilde: f64) -> Result<u64, BoundsError> {
    check_open_unit("delta_tilde", delta_tilde)?;
    check_gamma(gamma, delta_tilde)?;
    let g = exact(gamma);
    let dt = exact(delta_tilde);
    let one = BigRational::from_integer(1.into());
    let keep = &one - &g;
    let num = &dt * &keep - &g;
    let den = (&one + &dt) * &keep;
    let value = num / den * BigRational::from_integer(total.into());
    Ok(floor_to_u64(&value))
}

/// Mixture constraint `(m + g(N-m)) / ((1-g)(N-m)) <= dt`, checked exactly.
pub fn mixture_constraint_holds(total: u64, m: u64, gamma: f64, delta_tilde: f64) -> bool {
    if m >= total {
        return false;
    }
    let g = exact(gamma);
    let dt = exact(delta_tilde);
    let one = BigRational::from_integer(1.into());
    let rest = BigRational::from_integer((total - m).into());
    let lhs = BigRational::from_integer(m.into()) + &g * &rest;
    let rhs = dt * (one - g) * rest;
    lhs <= rhs
}

/// Count form of the mixture constraint: `(randomized + wrong) <= dt * correct`,
/// where `wrong`/`correct` count the non-randomized pseudo-labels.
pub fn mixture_counts_hold(randomized: u64, wrong: u64, correct: u64, delta_tilde: f64) -> bool {
    let lhs = BigRational::from_integer((randomized + wrong).into());
    lhs <= exact(delta_tilde) * BigRational::from_integer(correct.into())
}

/// Next-iteration risk bound `B(gamma)` for Algorithm-2 style self-training
/// over `N` unlabeled examples.
pub fn bound_map(spec: &ProblemSpec, total: u64, gamma: f64) -> Result<f64, BoundsError> {
    check_gamma(gamma, spec.delta_tilde)?;
    if total == 0 {
        return Err(invalid("N", "need at least one unlabeled example"));
    }
    Ok(bound_map_unchecked(spec, total as f64, gamma))
}

fn bound_map_unchecked(spec: &ProblemSpec, total: f64, gamma: f64) -> f64 {
    let kf = spec.k as f64;
    let dt = spec.delta_tilde;
    let keep = 1.0 - gamma;
    let inflation = ((1.0 + dt) * keep / (dt * keep - gamma)).sqrt();
    (kf + 1.0) * spec.epsilon + 4.0 * kf * spec.log_term().sqrt() * inflation / total.sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundIteration {
    /// `[g0, B(g0), B(B(g0)), ...]`, possibly truncated.
    pub values: Vec<f64>,
    /// Set when an iterate left the feasible region (or exceeded 1) before
    /// all requested steps were taken.
    pub diverged: bool,
}

pub fn iterate_bound_map(
    spec: &ProblemSpec,
    total: u64,
    gamma0: f64,
    steps: usize,
) -> Result<BoundIteration, BoundsError> {
    bound_map(spec, total, gamma0)?;
    let mut values = Vec::with_capacity(steps + 1);
    values.push(gamma0);
    let mut current = gamma0;
    for _ in 0..steps {
        if current > 1.0 || check_gamma(current, spec.delta_tilde).is_err() {
            return Ok(BoundIteration {
                values,
                diverged: true,
            });
        }
        current = bound_map_unchecked(spec, total as f64, current);
        values.push(current);
    }
    let diverged = current > 1.0 || check_gamma(current, spec.delta_tilde).is_err();
    Ok(BoundIteration { values, diverged })
}

/// `r_i = (b_{i+1} - E_D*) / (b_i - E_D*)` for consecutive pairs.
pub fn convergence_ratios(bounds: &[f64], e_d_star: f64) -> Result<Vec<f64>, BoundsError> {
    if bounds.len() < 2 {
        return Err(BoundsError::TooFewBounds(bounds.len()));
    }
    if let Some((index, &bound)) = bounds.iter().enumerate().find(|(_, b)| **b <= e_d_star) {
        return Err(BoundsError::RatioUndefined {
            index,
            bound,
            e_d_star,
        });
    }
    Ok(bounds
        .windows(2)
        .map(|w| (w[1] - e_d_star) / (w[0] - e_d_star))
        .collect())
}

/// Target contraction rate `p` and sandwich band `[E_D* + c1, E_D* + c2]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, try_from = "RawConvergenceSpec")]
pub struct ConvergenceSpec {
    p: f64,
    c1: f64,
    c2: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConvergenceSpec {
    p: f64,
    c1: f64,
    c2: f64,
}

impl TryFrom<RawConvergenceSpec> for ConvergenceSpec {
    type Error = BoundsError;

    fn try_from(raw: RawConvergenceSpec) -> Result<Self, Self::Error> {
        ConvergenceSpec::new(raw.p, raw.c1, raw.c2)
    }
}

impl ConvergenceSpec {
    pub fn new(p: f64, c1: f64, c2: f64) -> Result<Self, BoundsError> {
        check_open_unit("p", p)?;
        check_open_unit("c1", c1)?;
        check_open_unit("c2", c2)?;
        if c1 >= c2 {
            return Err(invalid(
                "c1",
                format!("band is empty: c1={c1} must be below c2={c2}"),
            ));
        }
        Ok(Self { p, c1, c2 })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn c1(&self) -> f64 {
        self.c1
    }

    pub fn c2(&self) -> f64 {
        self.c2
    }
}

fn complexity_rhs(
    spec: &ProblemSpec,
    conv: &ConvergenceSpec,
    e_d_star: f64,
) -> Result<f64, BoundsError> {
    let upper = e_d_star + conv.c2;
    if upper.is_nan() || upper >= 1.0 {
        return Err(BoundsError::UndefinedBracket(format!(
            "E_D* + c2 = {upper} must be below 1"
        )));
    }
    let dt = spec.delta_tilde;
    let odds = upper / (1.0 - upper);
    let denom = dt - odds;
    if denom.is_nan() || denom <= 0.0 {
        return Err(BoundsError::UndefinedBracket(format!(
            "delta_tilde - (E_D*+c2)/(1-E_D*-c2) = {denom} must be positive"
        )));
    }
    let kf = spec.k as f64;
    let lead = 4.0 * kf / (conv.p * conv.c1);
    let bracket = ((dt + 1.0) / denom).sqrt() - ((dt + 1.0) / dt).sqrt();
    Ok(lead * lead * bracket * bracket * spec.log_term())
}

/// Unrounded sample-complexity requirement for an explicitly supplied `E_D*`.
pub fn rate_complexity(
    spec: &ProblemSpec,
    conv: &ConvergenceSpec,
    e_d_star: f64,
) -> Result<f64, BoundsError> {
    if !(e_d_star.is_finite() && e_d_star >= 0.0) {
        return Err(invalid(
            "e_d_star",
            format!("must be a finite risk, got {e_d_star}"),
        ));
    }
    complexity_rhs(spec, conv, e_d_star)
}

/// Smallest `N` guaranteeing contraction at rate `p` inside the band, for an
/// explicitly supplied `E_D*`. Rounded up.
pub fn min_unlabeled_for_rate(
    spec: &ProblemSpec,
    conv: &ConvergenceSpec,
    e_d_star: f64,
) -> Result<u64, BoundsError> {
    let rhs = rate_complexity(spec, conv, e_d_star)?;
    if rhs > u64::MAX as f64 {
        return Err(BoundsError::NoFeasibleN { cap: u64::MAX });
    }
    Ok(rhs.ceil() as u64)
}

/// Smallest integer `N` with `N >= RHS(N)` where the right-hand side uses
/// `E_D* = supervised_ceiling(spec, N)`.
///
/// `E_D*` decreases in `N` and the right-hand side increases in `E_D*`, so the
/// predicate is monotone and a bisection over `[1, cap]` finds the boundary.
pub fn min_unlabeled_self_consistent(
    spec: &ProblemSpec,
    conv: &ConvergenceSpec,
    cap: u64,
) -> Result<u64, BoundsError> {
    let satisfied = |n: u64| -> bool {
        match supervised_ceiling(spec, n) {
            Ok(e) => match complexity_rhs(spec, conv, e) {
                Ok(rhs) => n as f64 >= rhs,
                Err(_) => false,
            },
            Err(_) => false,
        }
    };
    if cap == 0 || !satisfied(cap) {
        return Err(BoundsError::NoFeasibleN { cap });
    }
    let (mut lo, mut hi) = (1u64, cap);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if satisfied(mid) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    Ok(lo)
}

/// Right-hand side of the sample-complexity inequality at a given `N`,
/// exposed for diagnostics.
pub fn self_consistent_rhs(
    spec: &ProblemSpec,
    conv: &ConvergenceSpec,
    total: u64,
) -> Result<f64, BoundsError> {
    let e = supervised_ceiling(spec, total)?;
    complexity_rhs(spec, conv, e)
}

/// Exact-zero check helper for the middle term, used by the CLI printout.
pub fn middle_term_is_zero(k: usize, e_random: f64) -> bool {
    let kf = BigRational::from_integer((k as i64).into());
    let one = BigRational::from_integer(1.into());
    (&kf - &one) - kf * exact(e_random) == BigRational::zero()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    fn spec(k: usize, delta: f64, eps: f64, dt: f64) -> ProblemSpec {
        ProblemSpec::new(k, delta, eps, dt).unwrap()
    }

    #[test]
    fn problem_spec_rejects_bad_parameters() {
        assert!(ProblemSpec::new(1, 0.05, 0.0, 0.2).is_err());
        assert!(ProblemSpec::new(2, 0.0, 0.0, 0.2).is_err());
        assert!(ProblemSpec::new(2, 0.05, 0.0, 1.0).is_err());
        assert!(ProblemSpec::new(2, 0.05, 0.5, 0.2).is_err());
        assert!(ProblemSpec::new(4, 0.05, 0.7, 0.2).is_ok());
        assert!(ProblemSpec::new(4, 0.05, -0.1, 0.2).is_err());
    }

    #[test]
    fn theorem1_middle_term_vanishes_and_constant() {
        let s = spec(2, 0.05, 0.0, 0.5);
        let split = SplitSpec::new(100, 1000).unwrap();
        let err = EmpiricalErrors::new(0.0, 0.5).unwrap();
        let r = ratt_bound_theorem1(&s, &split, &err);
        assert_eq!(r.term_random, 0.0);
        assert!(rel(r.constant_used, 5.484_924_240_491_75) < 1e-13);
        assert!(rel(r.total, 0.811_882_428_257_626) < 1e-13);
        assert_eq!(r.formula, Formula::Theorem1);
    }

    #[test]
    fn concentration_halves_when_m_quadruples() {
        let s = spec(3, 0.1, 0.0, 0.5);
        let err = EmpiricalErrors::new(0.1, 0.6).unwrap();
        let a = ratt_bound_relaxed(&s, &SplitSpec::new(100, 1000).unwrap(), &err).unwrap();
        let b = ratt_bound_relaxed(&s, &SplitSpec::new(400, 1000).unwrap(), &err).unwrap();
        assert!(rel(b.term_concentration, a.term_concentration / 2.0) < 1e-14);
    }

    #[test]
    fn relaxed_value_and_precondition() {
        let s = spec(2, 0.05, 0.0, 0.5);
        let err = EmpiricalErrors::new(0.0, 0.5).unwrap();
        let r = ratt_bound_relaxed(&s, &SplitSpec::new(100, 1000).unwrap(), &err).unwrap();
        assert!(rel(r.total, 1.674_663_263_522_337) < 1e-13);
        assert_eq!(r.total, r.term_concentration);
        assert!(r.vacuous);
        assert_eq!(r.constant_used, 8.0);
        let e = ratt_bound_relaxed(&s, &SplitSpec::new(100, 50).unwrap(), &err).unwrap_err();
        assert_eq!(e, BoundsError::RatioNotBelowOne { m: 100, n: 50 });
        assert!(ratt_bound_relaxed(&s, &SplitSpec::new(50, 50).unwrap(), &err).is_err());
    }

    #[test]
    fn relaxed_constant_dominates_theorem1_constant_below_unit_ratio() {
        for k in 2..50 {
            for (m, n) in [(1, 2), (99, 100), (1, 1000)] {
                let split = SplitSpec::new(m, n).unwrap();
                assert!(theorem1_constant(k, &split) <= 4.0 * k as f64);
            }
        }
    }

    #[test]
    fn middle_term_sign() {
        let s = spec(4, 0.05, 0.0, 0.5);
        let split = SplitSpec::new(10, 100).unwrap();
        let over = ratt_bound_theorem1(&s, &split, &EmpiricalErrors::new(0.0, 0.9).unwrap());
        assert!(over.term_random < 0.0);
        let at = ratt_bound_theorem1(&s, &split, &EmpiricalErrors::new(0.0, 0.75).unwrap());
        assert_eq!(at.term_random, 0.0);
        assert!(middle_term_is_zero(4, 0.75));
        assert!(!middle_term_is_zero(3, 0.6));
    }

    #[test]
    fn optimal_split_examples() {
        assert_eq!(
            optimal_split(100, 0.25).unwrap(),
            SplitSpec::new(20, 80).unwrap()
        );
        let s = optimal_split(11, 0.1).unwrap();
        assert_eq!((s.m(), s.n()), (1, 10));
        assert!(s.ratio_at_most(0.1));
        assert!(matches!(
            optimal_split(5, 0.01),
            Err(BoundsError::EmptyRandomizedSubset { .. })
        ));
        assert!(optimal_split(0, 0.1).is_err());
    }

    #[test]
    fn supervised_ceiling_example() {
        let s = spec(2, 0.05, 0.01, 0.1);
        let v = supervised_ceiling(&s, 1_000_000).unwrap();
        assert!(rel(v, 0.085_542_296_952_956_6) < 1e-13);
        let zero_eps = spec(2, 0.05, 0.0, 0.1);
        let pure = supervised_ceiling(&zero_eps, 1_000_000).unwrap();
        assert!(rel(pure, v - 0.03) < 1e-12);
        let far = supervised_ceiling(&s, u64::MAX / 2).unwrap();
        assert!((far - 0.03).abs() < 1e-7);
    }

    #[test]
    fn max_randomized_count_examples() {
        assert_eq!(max_randomized_count(12000, 0.05, 0.2).unwrap(), 1473);
        for n in [10u64, 100, 12345, 1_000_000] {
            for dt in [0.1, 0.25, 0.5] {
                if let Ok(split) = optimal_split(n, dt) {
                    assert_eq!(max_randomized_count(n, 0.0, dt).unwrap(), split.m());
                }
            }
        }
        let dt = 0.25;
        let thr = gamma_threshold(dt);
        assert_eq!(thr, 0.2);
        assert!(matches!(
            max_randomized_count(1000, thr, dt),
            Err(BoundsError::InfeasibleGamma { .. })
        ));
        let below = f64::from_bits(thr.to_bits() - 1);
        assert_eq!(max_randomized_count(1000, below, dt).unwrap(), 0);
    }

    #[test]
    fn max_randomized_count_satisfies_mixture_constraint() {
        for &(n, g, dt) in &[(12000u64, 0.05, 0.2), (20000, 0.1, 0.25), (777, 0.01, 0.3)] {
            let m = max_randomized_count(n, g, dt).unwrap();
            assert!(mixture_constraint_holds(n, m, g, dt));
            assert!(!mixture_constraint_holds(n, m + 1, g, dt));
        }
    }

    #[test]
    fn bound_map_examples() {
        let s = spec(2, 0.05, 0.01, 0.2);
        let v = bound_map(&s, 1_000_000, 0.05).unwrap();
        assert!(rel(v, 0.077_787_674_984_979_6) < 1e-13);
        let b0 = bound_map(&s, 1_000_000, 0.0).unwrap();
        assert!(rel(b0, supervised_ceiling(&s, 1_000_000).unwrap()) < 1e-12);
        assert!(bound_map(&s, 1000, 1.0 / 6.0 + 1e-3).is_err());
        assert!(bound_map(&s, 1000, 0.01).unwrap() < bound_map(&s, 1000, 0.02).unwrap());
    }

    #[test]
    fn iterate_converges_to_bisected_fixed_point() {
        let s = spec(2, 0.05, 0.01, 0.2);
        let it = iterate_bound_map(&s, 1_000_000_000, 0.1, 40).unwrap();
        assert!(!it.diverged);
        assert_eq!(it.values.len(), 41);
        // Frozen from a 50-digit bisection on B(g) - g.
        let fixed = 0.031_417_189_987_404_23;
        assert!(it.values.windows(2).take(5).all(|w| w[1] < w[0]));
        assert!((it.values.last().unwrap() - fixed).abs() < 1e-12);
    }

    #[test]
    fn iterate_zero_steps_and_fixed_point_input() {
        let s = spec(2, 0.05, 0.01, 0.2);
        let it = iterate_bound_map(&s, 1000, 0.05, 0).unwrap();
        assert_eq!(it.values, vec![0.05]);
        let fixed = iterate_bound_map(&s, 1_000_000_000, 0.1, 200)
            .unwrap()
            .values[200];
        let again = iterate_bound_map(&s, 1_000_000_000, fixed, 5).unwrap();
        assert!(again.values.iter().all(|v| (v - fixed).abs() < 1e-15));
    }

    #[test]
    fn iterate_flags_divergence() {
        // Small N: B(g) jumps past the feasibility threshold.
        let s = spec(2, 0.05, 0.01, 0.2);
        let it = iterate_bound_map(&s, 100, 0.1, 10).unwrap();
        assert!(it.diverged);
        assert!(it.values.len() < 11);
        assert!(iterate_bound_map(&s, 100, 0.5, 10).is_err());
    }

    #[test]
    fn convergence_ratio_cases() {
        let e = 0.2;
        let constant = vec![e + 0.1; 5];
        assert!(convergence_ratios(&constant, e)
            .unwrap()
            .iter()
            .all(|r| (r - 1.0).abs() < 1e-15));
        let geo: Vec<f64> = (0..6).map(|i| e + 0.3 * 0.5f64.powi(i)).collect();
        assert!(convergence_ratios(&geo, e)
            .unwrap()
            .iter()
            .all(|r| (r - 0.5).abs() < 1e-12));
        assert!(matches!(
            convergence_ratios(&[0.3, 0.2], e),
            Err(BoundsError::RatioUndefined { index: 1, .. })
        ));
        assert!(convergence_ratios(&[0.3], e).is_err());
    }

    #[test]
    fn complexity_example_and_scaling() {
        let s = spec(2, 0.05, 0.0, 0.2);
        let conv = ConvergenceSpec::new(0.5, 0.01, 0.1).unwrap();
        assert_eq!(
            min_unlabeled_for_rate(&s, &conv, 0.05).unwrap(),
            246_956_030
        );
        let half = ConvergenceSpec::new(0.5, 0.005, 0.1).unwrap();
        let a = complexity_rhs(&s, &conv, 0.05).unwrap();
        let b = complexity_rhs(&s, &half, 0.05).unwrap();
        assert!(rel(b, 4.0 * a) < 1e-12);
    }

    #[test]
    fn complexity_bracket_errors() {
        let s = spec(2, 0.05, 0.0, 0.25);
        let conv = ConvergenceSpec::new(0.5, 0.01, 0.1).unwrap();
        // (E+c2)/(1-E-c2) = 0.25 when E + c2 = 0.2.
        let e = 0.2 - 0.1;
        assert!(matches!(
            min_unlabeled_for_rate(&s, &conv, e),
            Err(BoundsError::UndefinedBracket(_))
        ));
        assert!(min_unlabeled_for_rate(&s, &conv, 0.95).is_err());
    }

    #[test]
    fn self_consistent_golden() {
        let s = spec(2, 0.05, 0.005, 0.2);
        let conv = ConvergenceSpec::new(0.5, 0.01, 0.1).unwrap();
        let n = min_unlabeled_self_consistent(&s, &conv, DEFAULT_COMPLEXITY_CAP).unwrap();
        // Frozen from a 50-digit bisection against the explicit-E_D* formula.
        assert_eq!(n, 42_680_408);
        let rhs = self_consistent_rhs(&s, &conv, n).unwrap();
        assert!(n as f64 >= rhs);
        assert!(((n - 1) as f64) < self_consistent_rhs(&s, &conv, n - 1).unwrap());
        let e = supervised_ceiling(&s, n).unwrap();
        assert!(min_unlabeled_for_rate(&s, &conv, e).unwrap() <= n);
    }

    #[test]
    fn self_consistent_dominates_limit_value() {
        let s = spec(3, 0.1, 0.0, 0.3);
        let conv = ConvergenceSpec::new(0.6, 0.02, 0.05).unwrap();
        let n = min_unlabeled_self_consistent(&s, &conv, DEFAULT_COMPLEXITY_CAP).unwrap();
        let limit = min_unlabeled_for_rate(&s, &conv, 0.0).unwrap();
        assert!(n >= limit);
    }

    #[test]
    fn self_consistent_reports_cap() {
        let s = spec(2, 0.05, 0.05, 0.2);
        // (k+1) eps = 0.15 already pushes E_D* + c2 past the bracket.
        let conv = ConvergenceSpec::new(0.5, 0.01, 0.1).unwrap();
        assert_eq!(
            min_unlabeled_self_consistent(&s, &conv, 1_000_000),
            Err(BoundsError::NoFeasibleN { cap: 1_000_000 })
        );
    }

    #[test]
    fn convergence_spec_validation() {
        assert!(ConvergenceSpec::new(0.5, 0.1, 0.1).is_err());
        assert!(ConvergenceSpec::new(1.0, 0.01, 0.1).is_err());
        assert!(ConvergenceSpec::new(0.5, 0.0, 0.1).is_err());
    }
}
