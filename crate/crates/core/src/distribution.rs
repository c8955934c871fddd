//! Exact quantile / CVaR / norm calculus on finite weighted empirical
//! distributions.
//!
//! A sample is a finite list of real atoms with strictly positive weights
//! summing to one. Quantiles of such distributions are set-valued (closed
//! intervals), CVaR is an exact tail integral of the piecewise-constant
//! quantile function, and every identity downstream (optimization formula,
//! dual optimization formula, norm axioms) reduces to finite sums over the
//! sorted atoms. See Rockafellar & Uryasev (2000, 2002) for the CVaR
//! optimization background.

use serde::{Deserialize, Serialize};
use thiserror::Error;

// Intervals carry serde derives because they appear verbatim in the JSON
// reports and model files; samples round-trip through CSV instead.

#[derive(Debug, Error, PartialEq)]
pub enum DistributionError {
    #[error("sample must contain at least one atom")]
    EmptySample,
    #[error("values and weights differ in length ({values} vs {weights})")]
    LengthMismatch { values: usize, weights: usize },
    #[error("non-finite entry at index {0}")]
    NonFinite(usize),
    #[error("weight at index {0} is not strictly positive")]
    NonPositiveWeight(usize),
    #[error("weights sum to {0}, expected 1 within 1e-12")]
    WeightSum(f64),
    #[error("probability level {0} outside [0, 1]")]
    InvalidProbability(f64),
    #[error("probability level {0} outside the open interval (0, 1)")]
    ProbabilityNotInterior(f64),
    #[error("non-scaled CVaR norm is undefined at alpha = 1")]
    NormAtOne,
    #[error("epsilon must be nonnegative, got {0}")]
    NegativeEpsilon(f64),
}

const WEIGHT_SUM_TOL: f64 = 1e-12;

/// Finite weighted discrete distribution.
///
/// Atoms are kept in the order given (observation order matters to callers
/// that map weights back to data rows); a canonical sorted form with exact
/// duplicates merged is computed once at construction and backs every
/// quantile/CVaR query, so permuting the input never changes a result.
#[derive(Debug, Clone)]
pub struct EmpiricalSample {
    values: Vec<f64>,
    weights: Vec<f64>,
    canonical: Canonical,
}

#[derive(Debug, Clone, Default)]
struct Canonical {
    atoms: Vec<f64>,
    weights: Vec<f64>,
    /// Prefix sums of the normalized atom weights; the last entry is exactly 1.
    cum: Vec<f64>,
    mean: f64,
}

impl Canonical {
    fn build(values: &[f64], weights: &[f64]) -> Canonical {
        let mut order: Vec<usize> = (0..values.len()).collect();
        order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite"));
        let mut atoms: Vec<f64> = Vec::with_capacity(values.len());
        let mut w: Vec<f64> = Vec::with_capacity(values.len());
        for idx in order {
            let v = values[idx];
            match atoms.last() {
                Some(&last) if last == v => *w.last_mut().unwrap() += weights[idx],
                _ => {
                    atoms.push(v);
                    w.push(weights[idx]);
                }
            }
        }
        let total: f64 = w.iter().sum();
        for wi in &mut w {
            *wi /= total;
        }
        let mut cum = Vec::with_capacity(w.len());
        let mut acc = 0.0;
        for &wi in &w {
            acc += wi;
            cum.push(acc);
        }
        *cum.last_mut().unwrap() = 1.0;
        let mean = atoms.iter().zip(&w).map(|(v, wi)| v * wi).sum();
        Canonical {
            atoms,
            weights: w,
            cum,
            mean,
        }
    }
}

impl EmpiricalSample {
    pub fn new(values: Vec<f64>, weights: Vec<f64>) -> Result<Self, DistributionError> {
        if values.is_empty() {
            return Err(DistributionError::EmptySample);
        }
        if values.len() != weights.len() {
            return Err(DistributionError::LengthMismatch {
                values: values.len(),
                weights: weights.len(),
            });
        }
        for (i, v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(DistributionError::NonFinite(i));
            }
        }
        for (i, w) in weights.iter().enumerate() {
            if !w.is_finite() {
                return Err(DistributionError::NonFinite(i));
            }
            if *w <= 0.0 {
                return Err(DistributionError::NonPositiveWeight(i));
            }
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(DistributionError::WeightSum(total));
        }
        let canonical = Canonical::build(&values, &weights);
        Ok(EmpiricalSample {
            values,
            weights,
            canonical,
        })
    }

    /// Sample putting weight `1/l` on each of the given outcomes.
    pub fn equiprobable(values: Vec<f64>) -> Result<Self, DistributionError> {
        let l = values.len();
        if l == 0 {
            return Err(DistributionError::EmptySample);
        }
        let w = 1.0 / l as f64;
        Self::new(values, vec![w; l])
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Outcomes in the order given at construction.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Sorted distinct atoms of the canonical form.
    pub fn atoms(&self) -> &[f64] {
        &self.canonical.atoms
    }

    /// Merged weights matching [`Self::atoms`], normalized to sum to one.
    pub fn atom_weights(&self) -> &[f64] {
        &self.canonical.weights
    }

    /// Prefix sums of [`Self::atom_weights`]; ends exactly at 1.
    pub fn cum_weights(&self) -> &[f64] {
        &self.canonical.cum
    }

    pub fn mean(&self) -> f64 {
        self.canonical.mean
    }

    pub fn min_atom(&self) -> f64 {
        self.canonical.atoms[0]
    }

    pub fn max_atom(&self) -> f64 {
        *self.canonical.atoms.last().unwrap()
    }

    /// Sample of the same valid weights; panics only if `f` produces non-finite values.
    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> EmpiricalSample {
        EmpiricalSample::new(
            self.values.iter().map(|&v| f(v)).collect(),
            self.weights.clone(),
        )
        .expect("mapped sample keeps valid weights")
    }

    /// Distribution of `|X|`.
    pub fn abs(&self) -> EmpiricalSample {
        self.map_values(f64::abs)
    }

    pub fn shift(&self, c: f64) -> EmpiricalSample {
        self.map_values(|v| v + c)
    }

    pub fn scale(&self, lambda: f64) -> EmpiricalSample {
        self.map_values(|v| lambda * v)
    }

    /// Distribution of `X - E[X]`.
    pub fn centered(&self) -> EmpiricalSample {
        let m = self.mean();
        self.map_values(|v| v - m)
    }

    /// Outcome-wise combination of two samples sharing the same probability
    /// space (same length and weights in the same order).
    pub fn zip_with(
        &self,
        other: &EmpiricalSample,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<EmpiricalSample, DistributionError> {
        if self.len() != other.len() {
            return Err(DistributionError::LengthMismatch {
                values: self.len(),
                weights: other.len(),
            });
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| f(a, b))
            .collect();
        EmpiricalSample::new(values, self.weights.clone())
    }
}

/// Closed real interval housing a set-valued quantile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantileInterval {
    pub lo: f64,
    pub hi: f64,
}

impl QuantileInterval {
    pub fn new(lo: f64, hi: f64) -> Self {
        debug_assert!(lo <= hi);
        QuantileInterval { lo, hi }
    }

    pub fn point(x: f64) -> Self {
        QuantileInterval { lo: x, hi: x }
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64, tol: f64) -> bool {
        self.lo - tol <= x && x <= self.hi + tol
    }

    /// Minkowski sum of two intervals.
    pub fn minkowski_add(&self, other: &QuantileInterval) -> QuantileInterval {
        QuantileInterval::new(self.lo + other.lo, self.hi + other.hi)
    }

    /// Minkowski difference `self - other` as a set.
    pub fn minkowski_sub(&self, other: &QuantileInterval) -> QuantileInterval {
        QuantileInterval::new(self.lo - other.hi, self.hi - other.lo)
    }

    /// Set scaling; a negative factor flips the endpoints.
    pub fn scale(&self, lambda: f64) -> QuantileInterval {
        if lambda >= 0.0 {
            QuantileInterval::new(lambda * self.lo, lambda * self.hi)
        } else {
            QuantileInterval::new(lambda * self.hi, lambda * self.lo)
        }
    }

    pub fn shift(&self, c: f64) -> QuantileInterval {
        QuantileInterval::new(self.lo + c, self.hi + c)
    }
}

/// Probability interval, closed at the left end and optionally at the right.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaInterval {
    pub lo: f64,
    pub hi: f64,
    pub hi_inclusive: bool,
}

impl AlphaInterval {
    pub fn closed(lo: f64, hi: f64) -> Self {
        debug_assert!((0.0..=1.0).contains(&lo) && lo <= hi && hi <= 1.0);
        AlphaInterval {
            lo,
            hi,
            hi_inclusive: true,
        }
    }

    pub fn half_open(lo: f64, hi: f64) -> Self {
        debug_assert!((0.0..=1.0).contains(&lo) && lo <= hi && hi <= 1.0);
        AlphaInterval {
            lo,
            hi,
            hi_inclusive: false,
        }
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    /// A half-open interval with equal endpoints is empty.
    pub fn is_degenerate(&self) -> bool {
        !self.hi_inclusive && self.lo == self.hi
    }

    pub fn contains(&self, alpha: f64, tol: f64) -> bool {
        let upper_ok = if self.hi_inclusive {
            alpha <= self.hi + tol
        } else {
            alpha < self.hi + tol
        };
        self.lo - tol <= alpha && upper_ok
    }
}

fn check_probability(alpha: f64) -> Result<(), DistributionError> {
    if !(0.0..=1.0).contains(&alpha) || alpha.is_nan() {
        return Err(DistributionError::InvalidProbability(alpha));
    }
    Ok(())
}

/// `(P(X < x), P(X <= x))` read off the canonical prefix sums.
pub fn cdf_pair(s: &EmpiricalSample, x: f64) -> (f64, f64) {
    let atoms = s.atoms();
    let cum = s.cum_weights();
    let mut strict = 0.0;
    let mut weak = 0.0;
    for (j, &a) in atoms.iter().enumerate() {
        if a < x {
            strict = cum[j];
            weak = cum[j];
        } else if a == x {
            weak = cum[j];
        } else {
            break;
        }
    }
    (strict, weak)
}

/// Set-valued quantile `[q^-, q^+]` at level `alpha`.
///
/// `q^-` is the supremum of points whose cdf stays below `alpha` (essential
/// infimum at `alpha = 0`), `q^+` the infimum of points whose cdf exceeds it
/// (essential supremum at `alpha = 1`).
pub fn quantile_interval(
    s: &EmpiricalSample,
    alpha: f64,
) -> Result<QuantileInterval, DistributionError> {
    check_probability(alpha)?;
    let atoms = s.atoms();
    let cum = s.cum_weights();
    let last = atoms.len() - 1;
    // levels are meaningful only to the weight-sum resolution, so comparisons
    // against the cdf carry the same 1e-12 fuzz; otherwise prefix-sum noise
    // hides interval-valued quantiles at exact-rational breakpoints
    let tol = 1e-12;
    let lo_idx = cum.iter().position(|&c| c >= alpha - tol).unwrap_or(last);
    let hi_idx = cum.iter().position(|&c| c > alpha + tol).unwrap_or(last);
    Ok(QuantileInterval::new(atoms[lo_idx], atoms[hi_idx]))
}

/// Mass of the quantile function above `alpha`: the exact tail integral
/// `\int_alpha^1 q_beta dbeta` over the piecewise-constant quantile function.
fn tail_integral(s: &EmpiricalSample, alpha: f64) -> f64 {
    let atoms = s.atoms();
    let cum = s.cum_weights();
    let mut acc = 0.0;
    let mut prev = 0.0f64;
    for (j, &hi) in cum.iter().enumerate() {
        if hi > alpha {
            acc += atoms[j] * (hi - prev.max(alpha));
        }
        prev = hi;
    }
    acc
}

/// Conditional value-at-risk (superquantile) at level `alpha`.
///
/// Equals the mean at `alpha = 0` and the largest atom at `alpha = 1`.
pub fn cvar(s: &EmpiricalSample, alpha: f64) -> Result<f64, DistributionError> {
    check_probability(alpha)?;
    if alpha >= 1.0 {
        return Ok(s.max_atom());
    }
    Ok(tail_integral(s, alpha) / (1.0 - alpha))
}

/// Mean excess `E[X - x]_+`.
pub fn mean_excess(s: &EmpiricalSample, x: f64) -> f64 {
    s.atoms()
        .iter()
        .zip(s.atom_weights())
        .map(|(&v, &w)| w * (v - x).max(0.0))
        .sum()
}

/// CVaR through its minimization formula
/// `min_C { C + E[X - C]_+ / (1 - alpha) }`, scanned over the atoms.
///
/// The returned interval is the full set of minimizers, which coincides with
/// the quantile interval at `alpha`.
pub fn cvar_via_min(
    s: &EmpiricalSample,
    alpha: f64,
) -> Result<(f64, QuantileInterval), DistributionError> {
    check_probability(alpha)?;
    if alpha <= 0.0 || alpha >= 1.0 {
        return Err(DistributionError::ProbabilityNotInterior(alpha));
    }
    let inv = 1.0 / (1.0 - alpha);
    let objective = |c: f64| c + inv * mean_excess(s, c);
    let values: Vec<f64> = s.atoms().iter().map(|&c| objective(c)).collect();
    let best = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let tol = 1e-12 * (1.0 + best.abs());
    let lo = s.atoms()[values.iter().position(|&v| v <= best + tol).unwrap()];
    let hi = s.atoms()[values.iter().rposition(|&v| v <= best + tol).unwrap()];
    Ok((best, QuantileInterval::new(lo, hi)))
}

/// Dual CVaR optimization formula: maximizes `(1 - alpha)(cvar_alpha(X) - x)`
/// over `alpha in [0, 1]` by scanning the finitely many breakpoints.
///
/// The value equals the mean excess at `x`; the maximizer set equals
/// `[P(X < x), P(X <= x)]`.
pub fn dual_cvar_max(s: &EmpiricalSample, x: f64) -> (f64, AlphaInterval) {
    let cum = s.cum_weights();
    let atoms = s.atoms();
    // Candidate levels: 0 plus every cdf breakpoint (the last one is 1).
    let mut candidates = Vec::with_capacity(cum.len() + 1);
    candidates.push(0.0);
    candidates.extend_from_slice(cum);
    // Suffix mass above each candidate, so the objective needs no division.
    let value_at = |alpha: f64| -> f64 {
        let mut tail = 0.0;
        let mut prev = 0.0f64;
        for (j, &hi) in cum.iter().enumerate() {
            if hi > alpha {
                tail += atoms[j] * (hi - prev.max(alpha));
            }
            prev = hi;
        }
        tail - (1.0 - alpha) * x
    };
    let values: Vec<f64> = candidates.iter().map(|&a| value_at(a)).collect();
    let best = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let tol = 1e-13 * (1.0 + best.abs() + x.abs());
    let lo = candidates[values.iter().position(|&v| v >= best - tol).unwrap()];
    let hi = candidates[values.iter().rposition(|&v| v >= best - tol).unwrap()];
    (best, AlphaInterval::closed(lo, hi))
}

/// CVaR norm of `X`: the scaled variant is `cvar(|X|, alpha)`, the non-scaled
/// variant `(1 - alpha) * cvar(|X|, alpha)`; the latter is undefined at
/// `alpha = 1`.
pub fn cvar_norm(s: &EmpiricalSample, alpha: f64, scaled: bool) -> Result<f64, DistributionError> {
    check_probability(alpha)?;
    if !scaled && alpha >= 1.0 {
        return Err(DistributionError::NormAtOne);
    }
    let a = s.abs();
    if scaled {
        cvar(&a, alpha)
    } else {
        Ok(tail_integral(&a, alpha))
    }
}

/// Expected epsilon-insensitive loss `E[|X| - eps]_+` (the Vapnik error).
///
/// Vanishes exactly when every atom lies within `[-eps, eps]`, so it is not a
/// norm for `eps > 0`.
pub fn vapnik_error(s: &EmpiricalSample, eps: f64) -> Result<f64, DistributionError> {
    if eps.is_nan() || eps < 0.0 {
        return Err(DistributionError::NegativeEpsilon(eps));
    }
    Ok(s.atoms()
        .iter()
        .zip(s.atom_weights())
        .map(|(&v, &w)| w * (v.abs() - eps).max(0.0))
        .sum())
}
