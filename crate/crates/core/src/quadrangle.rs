//! Risk-quadrangle quartets generated by the CVaR norm and by the
//! epsilon-insensitive (Vapnik) error, evaluated exactly on empirical samples.
//!
//! A quartet bundles risk, deviation, regret and error values together with
//! the statistic (the argmin set of centered error minimization). The two
//! families here share the same statistic shape: the average of two symmetric
//! quantiles. `check_quadrangle_identities` re-derives every relationship
//! (D = min_C E(X-C), R = min_C {C + V(X-C)}, D = R - E[X], E = V - E[X],
//! argmin = statistic) from scratch with exact finite oracles.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distribution::{
    cvar, quantile_interval, vapnik_error, AlphaInterval, DistributionError, EmpiricalSample,
    QuantileInterval,
};

#[derive(Debug, Error, PartialEq)]
pub enum QuadrangleError {
    #[error(transparent)]
    Distribution(#[from] DistributionError),
    #[error("alpha {0} outside [0, 1)")]
    AlphaOutOfRange(f64),
    #[error("epsilon {eps} outside [0, {half_range}): no admissible level set")]
    EpsilonOutOfRange { eps: f64, half_range: f64 },
}

/// Which parameter generated a quartet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum QuadrangleParameter {
    Alpha(f64),
    Epsilon(f64),
}

/// One evaluation of a risk quadrangle on a sample.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuadrangleQuartet {
    pub risk: f64,
    pub deviation: f64,
    pub regret: f64,
    pub error: f64,
    /// Statistic as a union of disjoint closed intervals sorted by `lo`.
    pub statistic: Vec<QuantileInterval>,
    pub parameter: QuadrangleParameter,
}

/// Admissible confidence levels for a given tube half-width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonAlphaSet {
    pub intervals: Vec<AlphaInterval>,
}

impl EpsilonAlphaSet {
    pub fn contains(&self, alpha: f64, tol: f64) -> bool {
        self.intervals.iter().any(|iv| iv.contains(alpha, tol))
    }

    /// Smallest admissible level.
    pub fn min_alpha(&self) -> f64 {
        self.intervals[0].lo
    }

    /// Largest admissible level.
    pub fn max_alpha(&self) -> f64 {
        self.intervals.last().unwrap().hi
    }
}

fn check_alpha(alpha: f64) -> Result<(), QuadrangleError> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(QuadrangleError::AlphaOutOfRange(alpha));
    }
    Ok(())
}

/// Average of the two symmetric quantiles at levels `(1 -/+ alpha)/2`,
/// as a Minkowski average of the two quantile intervals.
pub fn statistic_avg_quantiles(
    s: &EmpiricalSample,
    alpha: f64,
) -> Result<QuantileInterval, QuadrangleError> {
    check_alpha(alpha)?;
    let lower = quantile_interval(s, 0.5 * (1.0 - alpha))?;
    let upper = quantile_interval(s, 0.5 * (1.0 + alpha))?;
    Ok(lower.minkowski_add(&upper).scale(0.5))
}

/// Quartet generated by the non-scaled CVaR norm at level `alpha`.
pub fn cvar_norm_quadrangle(
    s: &EmpiricalSample,
    alpha: f64,
) -> Result<QuadrangleQuartet, QuadrangleError> {
    check_alpha(alpha)?;
    let p_lo = 0.5 * (1.0 - alpha);
    let p_hi = 0.5 * (1.0 + alpha);
    let combine = |x: &EmpiricalSample| -> Result<f64, DistributionError> {
        Ok(0.5 * ((1.0 + alpha) * cvar(x, p_lo)? + (1.0 - alpha) * cvar(x, p_hi)?))
    };
    let risk = combine(s)?;
    let deviation = combine(&s.centered())?;
    let error = crate::distribution::cvar_norm(s, alpha, false)?;
    let regret = error + s.mean();
    let statistic = vec![statistic_avg_quantiles(s, alpha)?];
    Ok(QuadrangleQuartet {
        risk,
        deviation,
        regret,
        error,
        statistic,
        parameter: QuadrangleParameter::Alpha(alpha),
    })
}

/// Candidate levels where the symmetric quantile pair can change: every
/// breakpoint of either quantile map, plus segment midpoints and the ends.
fn alpha_breakpoint_grid(s: &EmpiricalSample) -> Vec<f64> {
    let mut pts = vec![0.0];
    for &c in s.cum_weights() {
        let from_upper = 2.0 * c - 1.0; // (1+a)/2 == c
        let from_lower = 1.0 - 2.0 * c; // (1-a)/2 == c
        for a in [from_upper, from_lower] {
            if (0.0..1.0).contains(&a) {
                pts.push(a);
            }
        }
    }
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup();
    let mut grid = Vec::with_capacity(2 * pts.len() + 1);
    for (i, &p) in pts.iter().enumerate() {
        grid.push(p);
        let next = pts.get(i + 1).copied().unwrap_or(1.0);
        let mid = 0.5 * (p + next);
        if mid > p && mid < 1.0 {
            grid.push(mid);
        }
    }
    grid
}

/// Half inter-quantile width as a set:
/// `((1+a)/2-quantile - (1-a)/2-quantile) / 2`.
fn half_width_interval(s: &EmpiricalSample, alpha: f64) -> QuantileInterval {
    let lower = quantile_interval(s, 0.5 * (1.0 - alpha)).expect("alpha validated");
    let upper = quantile_interval(s, 0.5 * (1.0 + alpha)).expect("alpha validated");
    upper.minkowski_sub(&lower).scale(0.5)
}

/// All levels `alpha in [0, 1)` whose symmetric quantile gap covers `eps`,
/// found exactly by scanning the quantile breakpoints. For a finite sample
/// the result is a single closed interval (possibly one point), returned as
/// a merged interval list.
pub fn alpha_set(s: &EmpiricalSample, eps: f64) -> Result<EpsilonAlphaSet, QuadrangleError> {
    let half_range = 0.5 * (s.max_atom() - s.min_atom());
    if eps.is_nan() || eps < 0.0 || eps >= half_range {
        return Err(QuadrangleError::EpsilonOutOfRange { eps, half_range });
    }
    let tol = 1e-12 * (1.0 + eps.abs());
    let member = |alpha: f64| -> bool {
        let hw = half_width_interval(s, alpha);
        hw.lo <= eps + tol && eps <= hw.hi + tol
    };
    let grid = alpha_breakpoint_grid(s);
    let members: Vec<f64> = grid.into_iter().filter(|&a| member(a)).collect();
    debug_assert!(
        !members.is_empty(),
        "admissible set must be nonempty inside the bound"
    );
    // Both bounding step functions are monotone in alpha, so membership is an
    // interval; its endpoints are attained at grid points.
    let lo = members[0];
    let hi = *members.last().unwrap();
    Ok(EpsilonAlphaSet {
        intervals: vec![AlphaInterval::closed(lo, hi)],
    })
}

/// Exact minimizer set of `C -> E[|X - C| - eps]_+` over the reals.
///
/// The objective is convex piecewise linear with breakpoints at
/// `atom -/+ eps`, so scanning those points gives the argmin interval
/// exactly.
pub fn vapnik_center_argmin(s: &EmpiricalSample, eps: f64) -> (f64, QuantileInterval) {
    let mut candidates: Vec<f64> = Vec::with_capacity(2 * s.atoms().len());
    for &v in s.atoms() {
        candidates.push(v - eps);
        candidates.push(v + eps);
    }
    candidates.sort_by(|a, b| a.partial_cmp(b).unwrap());
    candidates.dedup();
    let objective = |c: f64| {
        s.atoms()
            .iter()
            .zip(s.atom_weights())
            .map(|(&v, &w)| w * ((v - c).abs() - eps).max(0.0))
            .sum::<f64>()
    };
    let values: Vec<f64> = candidates.iter().map(|&c| objective(c)).collect();
    let best = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let tol = 1e-12 * (1.0 + best.abs());
    let lo = candidates[values.iter().position(|&v| v <= best + tol).unwrap()];
    let hi = candidates[values.iter().rposition(|&v| v <= best + tol).unwrap()];
    (best, QuantileInterval::new(lo, hi))
}

/// Quartet generated by the Vapnik error at half-width `eps`.
///
/// Risk and deviation come from the CVaR-norm quartet at any admissible
/// level, shifted by `(1 - alpha) * eps`; that value is the same across the
/// whole admissible set. The statistic is the exact minimizer interval of
/// `C -> E[|X - C| - eps]_+`, which coincides with the union of symmetric
/// quantile averages whenever the quantiles over the admissible set are
/// single-valued (in particular for atomless distributions).
pub fn qsa_quadrangle(s: &EmpiricalSample, eps: f64) -> Result<QuadrangleQuartet, QuadrangleError> {
    let admissible = alpha_set(s, eps)?;
    let alpha = admissible.min_alpha();
    let base = cvar_norm_quadrangle(s, alpha)?;
    let shift = (1.0 - alpha) * eps;
    let error = vapnik_error(s, eps)?;
    let regret = error + s.mean();
    let (_, statistic) = vapnik_center_argmin(s, eps);
    Ok(QuadrangleQuartet {
        risk: base.risk - shift,
        deviation: base.deviation - shift,
        regret,
        error,
        statistic: vec![statistic],
        parameter: QuadrangleParameter::Epsilon(eps),
    })
}

/// Whether the symmetric quantile average of `s` at `alpha`, inflated by
/// `tol`, contains zero. Used to certify which statistic a fitted model
/// estimates.
pub fn statistic_contains_zero(
    s: &EmpiricalSample,
    alpha: f64,
    tol: f64,
) -> Result<bool, QuadrangleError> {
    Ok(statistic_avg_quantiles(s, alpha)?.contains(0.0, tol))
}

/// One verified relationship inside a quartet.
#[derive(Debug, Clone, Serialize)]
pub struct IdentityCheck {
    pub name: &'static str,
    pub residual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Residual report for the quadrangle relationship formulae.
#[derive(Debug, Clone, Serialize)]
pub struct IdentityReport {
    pub checks: Vec<IdentityCheck>,
}

impl IdentityReport {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

fn push_check(out: &mut Vec<IdentityCheck>, name: &'static str, residual: f64, tolerance: f64) {
    out.push(IdentityCheck {
        name,
        residual,
        tolerance,
        pass: residual <= tolerance,
    });
}

/// Largest distance from a point of one interval to the other interval set,
/// taken both ways (Hausdorff distance between unions of closed intervals).
pub fn hausdorff_distance(a: &[QuantileInterval], b: &[QuantileInterval]) -> f64 {
    fn point_to_set(x: f64, set: &[QuantileInterval]) -> f64 {
        set.iter()
            .map(|iv| {
                if x < iv.lo {
                    iv.lo - x
                } else if x > iv.hi {
                    x - iv.hi
                } else {
                    0.0
                }
            })
            .fold(f64::INFINITY, f64::min)
    }
    fn point_in(x: f64, set: &[QuantileInterval]) -> bool {
        set.iter().any(|iv| iv.lo <= x && x <= iv.hi)
    }
    // The distance-to-set function peaks at endpoints of `from` or at gap
    // midpoints of `to` (intervals sorted by lo).
    let dir = |from: &[QuantileInterval], to: &[QuantileInterval]| {
        let mut candidates: Vec<f64> = from.iter().flat_map(|iv| [iv.lo, iv.hi]).collect();
        for w in to.windows(2) {
            let gap_mid = 0.5 * (w[0].hi + w[1].lo);
            if point_in(gap_mid, from) {
                candidates.push(gap_mid);
            }
        }
        candidates
            .into_iter()
            .map(|x| point_to_set(x, to))
            .fold(0.0f64, f64::max)
    };
    dir(a, b).max(dir(b, a))
}

/// Centered error at `c` for the error measure that generated the quartet.
fn centered_error(s: &EmpiricalSample, parameter: QuadrangleParameter, c: f64) -> f64 {
    let shifted = s.shift(-c);
    match parameter {
        QuadrangleParameter::Alpha(alpha) => {
            crate::distribution::cvar_norm(&shifted, alpha, false).expect("alpha in range")
        }
        QuadrangleParameter::Epsilon(eps) => vapnik_error(&shifted, eps).expect("eps >= 0"),
    }
}

/// Candidate centers that make the piecewise-linear minimizations exact:
/// atoms, every pairwise atom midpoint, the reported statistic endpoints and
/// (for the epsilon family) the shifted kink locations.
fn center_candidates(s: &EmpiricalSample, quartet: &QuadrangleQuartet) -> Vec<f64> {
    let atoms = s.atoms();
    let mut c: Vec<f64> = atoms.to_vec();
    for i in 0..atoms.len() {
        for j in (i + 1)..atoms.len() {
            c.push(0.5 * (atoms[i] + atoms[j]));
        }
    }
    for iv in &quartet.statistic {
        c.push(iv.lo);
        c.push(iv.hi);
    }
    if let QuadrangleParameter::Epsilon(eps) = quartet.parameter {
        for &v in atoms {
            c.push(v - eps);
            c.push(v + eps);
        }
    }
    c.sort_by(|a, b| a.partial_cmp(b).unwrap());
    c.dedup();
    c
}

/// Re-derives the relationship formulae for a quartet produced from `s` and
/// reports each residual with a pass/fail flag at `tolerance`.
pub fn check_quadrangle_identities(
    s: &EmpiricalSample,
    quartet: &QuadrangleQuartet,
    tolerance: f64,
) -> IdentityReport {
    let mean = s.mean();
    let candidates = center_candidates(s, quartet);

    let error_values: Vec<f64> = candidates
        .iter()
        .map(|&c| centered_error(s, quartet.parameter, c))
        .collect();
    let d_min = error_values.iter().cloned().fold(f64::INFINITY, f64::min);
    let argmin_tol = 1e-10 * (1.0 + d_min.abs());
    let arg_lo = candidates[error_values
        .iter()
        .position(|&v| v <= d_min + argmin_tol)
        .unwrap()];
    let arg_hi = candidates[error_values
        .iter()
        .rposition(|&v| v <= d_min + argmin_tol)
        .unwrap()];
    let argmin = vec![QuantileInterval::new(arg_lo, arg_hi)];

    // Regret route: V(Y) = E(Y) + E[Y], so min_C { C + V(X - C) } is an
    // independent pass over the same candidate grid.
    let r_min = candidates
        .iter()
        .zip(&error_values)
        .map(|(&c, &e)| c + e + (mean - c))
        .fold(f64::INFINITY, f64::min);

    let mut checks = Vec::new();
    push_check(
        &mut checks,
        "deviation = min_C error(X - C)",
        (quartet.deviation - d_min).abs(),
        tolerance,
    );
    push_check(
        &mut checks,
        "risk = min_C { C + regret(X - C) }",
        (quartet.risk - r_min).abs(),
        tolerance,
    );
    push_check(
        &mut checks,
        "deviation = risk - mean",
        (quartet.deviation - (quartet.risk - mean)).abs(),
        tolerance,
    );
    push_check(
        &mut checks,
        "error = regret - mean",
        (quartet.error - (quartet.regret - mean)).abs(),
        tolerance,
    );
    push_check(
        &mut checks,
        "statistic = argmin set",
        hausdorff_distance(&quartet.statistic, &argmin),
        tolerance,
    );
    IdentityReport { checks }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s4() -> EmpiricalSample {
        EmpiricalSample::equiprobable(vec![1.0, 2.0, 3.0, 4.0]).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn statistic_examples() {
        let st = statistic_avg_quantiles(&s4(), 0.5).unwrap();
        assert_eq!(st, QuantileInterval::new(2.0, 3.0));
        let two = EmpiricalSample::equiprobable(vec![0.0, 10.0]).unwrap();
        assert_eq!(
            statistic_avg_quantiles(&two, 0.5).unwrap(),
            QuantileInterval::point(5.0)
        );
        let sym = EmpiricalSample::equiprobable(vec![-2.0, -1.0, 1.0, 2.0]).unwrap();
        let mid = statistic_avg_quantiles(&sym, 0.5).unwrap();
        assert_eq!(mid.midpoint(), 0.0);
    }

    #[test]
    fn cvar_norm_quartet_on_s4() {
        let q = cvar_norm_quadrangle(&s4(), 0.5).unwrap();
        assert!(close(q.risk, 3.25, 1e-12));
        assert!(close(q.deviation, 0.75, 1e-12));
        assert!(close(q.error, 1.75, 1e-12));
        assert!(close(q.regret, 1.75 + 2.5, 1e-12));
        assert_eq!(q.statistic, vec![QuantileInterval::new(2.0, 3.0)]);
        assert!(close(q.deviation, q.risk - 2.5, 1e-10));
        assert!(close(q.error, q.regret - 2.5, 1e-10));
    }

    #[test]
    fn cvar_norm_quartet_constant_sample() {
        let c = EmpiricalSample::equiprobable(vec![7.0]).unwrap();
        for alpha in [0.0, 0.3, 0.9] {
            let q = cvar_norm_quadrangle(&c, alpha).unwrap();
            assert!(close(q.risk, 7.0, 1e-12));
            assert!(close(q.deviation, 0.0, 1e-12));
        }
    }

    #[test]
    fn alpha_zero_collapses_to_l1() {
        // error = E|X|, deviation = min_C E|X - C| (attained on the median set)
        let s = EmpiricalSample::equiprobable(vec![-1.0, 0.0, 2.0, 5.0]).unwrap();
        let q = cvar_norm_quadrangle(&s, 0.0).unwrap();
        assert!(close(q.error, s.abs().mean(), 1e-12));
        let median = quantile_interval(&s, 0.5).unwrap();
        let dev_oracle = s.shift(-median.midpoint()).abs().mean();
        assert!(close(q.deviation, dev_oracle, 1e-10));
        assert_eq!(q.statistic, vec![median]);
    }

    #[test]
    fn alpha_set_examples() {
        let set = alpha_set(&s4(), 1.0).unwrap();
        assert!(set.contains(0.5, 0.0));
        assert_eq!(set.intervals.len(), 1);
        // eps = 1 is admissible only at the breakpoint level 1/2
        assert!(close(set.min_alpha(), 0.5, 1e-12));
        assert!(close(set.max_alpha(), 0.5, 1e-12));

        let at_zero = alpha_set(&s4(), 0.0).unwrap();
        assert!(at_zero.contains(0.0, 0.0));

        let err = alpha_set(&s4(), 1.5).unwrap_err();
        assert!(matches!(err, QuadrangleError::EpsilonOutOfRange { .. }));
    }

    #[test]
    fn alpha_set_interior_band() {
        // eps = 0.5 equals the half-gap on the whole band [0, 1/2]
        let set = alpha_set(&s4(), 0.5).unwrap();
        assert!(close(set.min_alpha(), 0.0, 1e-12));
        assert!(close(set.max_alpha(), 0.5, 1e-12));
        assert!(set.contains(0.25, 0.0));
    }

    #[test]
    fn qsa_quartet_on_s4() {
        let q = qsa_quadrangle(&s4(), 1.0).unwrap();
        // deviation cross-checked against D_{1/2}(S4) - (1 - 1/2) * 1 = 0.25
        assert!(close(q.deviation, 0.25, 1e-10));
        assert!(close(q.error, vapnik_error(&s4(), 1.0).unwrap(), 1e-15));
        assert_eq!(q.statistic, vec![QuantileInterval::new(2.0, 3.0)]);
        // risk = deviation + mean
        assert!(close(q.risk, q.deviation + 2.5, 1e-10));
    }

    #[test]
    fn qsa_at_zero_matches_alpha_zero_quartet() {
        let s = EmpiricalSample::equiprobable(vec![-1.0, 0.5, 2.0]).unwrap();
        let qe = qsa_quadrangle(&s, 0.0).unwrap();
        let qa = cvar_norm_quadrangle(&s, 0.0).unwrap();
        assert!(close(qe.risk, qa.risk, 1e-10));
        assert!(close(qe.deviation, qa.deviation, 1e-10));
        assert!(close(qe.error, qa.error, 1e-12));
        assert!(close(qe.regret, qa.regret, 1e-12));
        assert!(hausdorff_distance(&qe.statistic, &qa.statistic) <= 1e-10);
    }

    #[test]
    fn qsa_statistic_shifts_with_sample() {
        let s = EmpiricalSample::equiprobable(vec![0.0, 1.0, 3.0, 7.0]).unwrap();
        let q = qsa_quadrangle(&s, 1.2).unwrap();
        let shifted = qsa_quadrangle(&s.shift(10.0), 1.2).unwrap();
        assert!(close(shifted.deviation, q.deviation, 1e-10));
        let moved: Vec<QuantileInterval> = q.statistic.iter().map(|iv| iv.shift(10.0)).collect();
        assert!(hausdorff_distance(&shifted.statistic, &moved) <= 1e-9);
    }

    #[test]
    fn value_constant_over_admissible_set() {
        let s = EmpiricalSample::equiprobable(vec![0.0, 1.0, 2.0, 5.0, 9.0]).unwrap();
        let eps = 1.0;
        let set = alpha_set(&s, eps).unwrap();
        let probes = [
            set.min_alpha(),
            set.max_alpha(),
            0.5 * (set.min_alpha() + set.max_alpha()),
        ];
        let reference = qsa_quadrangle(&s, eps).unwrap();
        for &a in &probes {
            if !set.contains(a, 0.0) {
                continue;
            }
            let base = cvar_norm_quadrangle(&s, a).unwrap();
            let shift = (1.0 - a) * eps;
            assert!(close(base.risk - shift, reference.risk, 1e-10));
            assert!(close(base.deviation - shift, reference.deviation, 1e-10));
        }
    }

    #[test]
    fn contains_zero_examples() {
        let sym = EmpiricalSample::equiprobable(vec![-2.0, -1.0, 1.0, 2.0]).unwrap();
        assert!(statistic_contains_zero(&sym, 0.5, 0.0).unwrap());
        assert!(!statistic_contains_zero(&s4(), 0.5, 0.0).unwrap());
        let mixed = EmpiricalSample::equiprobable(vec![-3.0, -1.0, 2.0, 4.0]).unwrap();
        assert!(statistic_contains_zero(&mixed, 0.5, 0.0).unwrap());
        let st = statistic_avg_quantiles(&mixed, 0.5).unwrap();
        assert_eq!(st, QuantileInterval::new(-0.5, 1.5));
    }

    #[test]
    fn identities_pass_for_both_families() {
        let s = s4();
        let report_alpha =
            check_quadrangle_identities(&s, &cvar_norm_quadrangle(&s, 0.5).unwrap(), 1e-8);
        assert!(report_alpha.pass(), "{report_alpha:?}");
        let report_eps = check_quadrangle_identities(&s, &qsa_quadrangle(&s, 1.0).unwrap(), 1e-8);
        assert!(report_eps.pass(), "{report_eps:?}");
        let single = EmpiricalSample::equiprobable(vec![3.0]).unwrap();
        let report_const = check_quadrangle_identities(
            &single,
            &cvar_norm_quadrangle(&single, 0.25).unwrap(),
            1e-12,
        );
        assert!(report_const.pass(), "{report_const:?}");
    }

    #[test]
    fn hausdorff_on_interval_unions() {
        let a = vec![QuantileInterval::new(0.0, 1.0)];
        let b = vec![QuantileInterval::new(0.5, 1.5)];
        assert!(close(hausdorff_distance(&a, &b), 0.5, 1e-15));
        let c = vec![
            QuantileInterval::new(0.0, 0.25),
            QuantileInterval::new(0.75, 1.0),
        ];
        assert!(close(hausdorff_distance(&a, &c), 0.25, 1e-15));
        assert_eq!(hausdorff_distance(&a, &a), 0.0);
    }
}
