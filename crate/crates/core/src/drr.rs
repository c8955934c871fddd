//! Distributionally robust view of the nu-family regression: density-bounded
//! reweightings of the empirical measure, the closed-form worst case, the
//! stable-regression count, and level selection for a known noise law.
//!
//! The ambiguity set at level `alpha` holds weights `q` with `sum q = 1` and
//! `0 <= q_i <= 1/(l(1-alpha))`; the worst-case expected absolute residual
//! over it equals the CVaR of the absolute residuals and is attained at an
//! explicit sparse weighting.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distribution::{cdf_pair, quantile_interval, DistributionError, EmpiricalSample};

#[derive(Debug, Error)]
pub enum DrrError {
    #[error("residuals must be equiprobable (weight 1/l each)")]
    NotEquiprobable,
    #[error("alpha {0} outside [0, 1)")]
    AlphaOutOfRange(f64),
    #[error("no level in [0, 1) balances the symmetric quantile average with the mean")]
    NoFeasibleAlpha,
    #[error("noise scale parameter must be positive, got {0}")]
    BadScale(f64),
    #[error(transparent)]
    Distribution(#[from] DistributionError),
}

/// Worst-case reweighting of the observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    pub weights: Vec<f64>,
}

impl WeightVector {
    /// Checks the ambiguity-set membership at the generating level.
    pub fn is_feasible(&self, alpha: f64, tol: f64) -> bool {
        let l = self.weights.len() as f64;
        let cap = 1.0 / (l * (1.0 - alpha));
        let sum: f64 = self.weights.iter().sum();
        self.weights.iter().all(|&q| q >= -tol && q <= cap + tol) && (sum - 1.0).abs() <= tol
    }
}

fn require_equiprobable(residuals: &EmpiricalSample) -> Result<(), DrrError> {
    let l = residuals.len() as f64;
    let w = 1.0 / l;
    if residuals.weights().iter().any(|&wi| (wi - w).abs() > 1e-12) {
        return Err(DrrError::NotEquiprobable);
    }
    Ok(())
}

fn check_alpha(alpha: f64) -> Result<(), DrrError> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(DrrError::AlphaOutOfRange(alpha));
    }
    Ok(())
}

/// Closed-form maximizer of `sum q_i |z_i|` over the ambiguity set:
/// cap weight above the quantile of `|z|`, the exact tie mass
/// `(P_q - alpha)/(m (1 - alpha))` on the quantile atoms, zero below.
pub fn optimal_weights(residuals: &EmpiricalSample, alpha: f64) -> Result<WeightVector, DrrError> {
    require_equiprobable(residuals)?;
    check_alpha(alpha)?;
    let l = residuals.len() as f64;
    let abs = residuals.abs();
    let q = quantile_interval(&abs, alpha)?.hi;
    let (_, p_q) = cdf_pair(&abs, q);
    let magnitudes: Vec<f64> = residuals.values().iter().map(|z| z.abs()).collect();
    let m = magnitudes.iter().filter(|&&v| v == q).count();
    debug_assert!(m >= 1);
    let cap = 1.0 / (l * (1.0 - alpha));
    let tie = (p_q - alpha) / (m as f64 * (1.0 - alpha));
    let mut weights: Vec<f64> = magnitudes
        .iter()
        .map(|&v| {
            if v > q {
                cap
            } else if v == q {
                tie
            } else {
                0.0
            }
        })
        .collect();
    // force exact unit mass by nudging the last active entry until a plain
    // left-to-right sum reads 1.0 (one or two single-ulp corrections)
    let last_active = magnitudes.iter().rposition(|&v| v >= q).unwrap();
    for _ in 0..8 {
        let sum: f64 = weights.iter().sum();
        if sum == 1.0 {
            break;
        }
        weights[last_active] += 1.0 - sum;
    }
    Ok(WeightVector { weights })
}

/// `max_{q in Q_alpha} sum q_i |z_i|`, evaluated at the closed-form weights;
/// equals `cvar(|z|, alpha)`.
pub fn worst_case_objective(residuals: &EmpiricalSample, alpha: f64) -> Result<f64, DrrError> {
    let q = optimal_weights(residuals, alpha)?;
    Ok(q.weights
        .iter()
        .zip(residuals.values())
        .map(|(&w, &z)| w * z.abs())
        .sum())
}

/// Stable-regression count equivalent to the level: `floor(l (1 - alpha))`.
/// When `l (1 - alpha)` is integral, `(1 - alpha) l` times the worst case
/// equals the sum of the `k` largest absolute residuals.
pub fn k_from_alpha(l: usize, alpha: f64) -> usize {
    ((l as f64) * (1.0 - alpha) + 1e-9).floor() as usize
}

/// Noise law for residuals; parametric variants have closed-form quantiles.
#[derive(Debug, Clone)]
pub enum NoiseModel {
    /// Density `exp(-|x - location| / scale) / (2 scale)`.
    Laplace {
        location: f64,
        scale: f64,
    },
    Gaussian {
        mean: f64,
        sd: f64,
    },
    /// Density `rate * exp(-rate (x - shift))` on `[shift, inf)`.
    ShiftedExponential {
        rate: f64,
        shift: f64,
    },
    Empirical(EmpiricalSample),
}

/// Abramowitz & Stegun 7.1.26 error-function approximation; good to ~1.5e-7,
/// which only enters through the Gaussian quantile.
fn erf(x: f64) -> f64 {
    let sign = if x < 0.0 { -1.0 } else { 1.0 };
    let x = x.abs();
    let t = 1.0 / (1.0 + 0.3275911 * x);
    let poly = t
        * (0.254829592
            + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
    sign * (1.0 - poly * (-x * x).exp())
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + erf(z / std::f64::consts::SQRT_2))
}

fn normal_quantile(p: f64) -> f64 {
    debug_assert!((0.0..1.0).contains(&p) && p > 0.0);
    // bisection on the approximate cdf; plenty for the uses here
    let (mut lo, mut hi) = (-40.0, 40.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if normal_cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

impl NoiseModel {
    pub fn validate(&self) -> Result<(), DrrError> {
        match self {
            NoiseModel::Laplace { scale, .. } if scale.is_nan() || *scale <= 0.0 => {
                Err(DrrError::BadScale(*scale))
            }
            NoiseModel::Gaussian { sd, .. } if sd.is_nan() || *sd <= 0.0 => {
                Err(DrrError::BadScale(*sd))
            }
            NoiseModel::ShiftedExponential { rate, .. } if rate.is_nan() || *rate <= 0.0 => {
                Err(DrrError::BadScale(*rate))
            }
            _ => Ok(()),
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            NoiseModel::Laplace { location, .. } => *location,
            NoiseModel::Gaussian { mean, .. } => *mean,
            NoiseModel::ShiftedExponential { rate, shift } => shift + 1.0 / rate,
            NoiseModel::Empirical(s) => s.mean(),
        }
    }

    /// Quantile as an interval; a point for the continuous families.
    pub fn quantile(&self, p: f64) -> crate::distribution::QuantileInterval {
        use crate::distribution::QuantileInterval as Iv;
        match self {
            NoiseModel::Laplace { location, scale } => {
                let q = if p < 0.5 {
                    location + scale * (2.0 * p).ln()
                } else {
                    location - scale * (2.0 * (1.0 - p)).ln()
                };
                Iv::point(q)
            }
            NoiseModel::Gaussian { mean, sd } => Iv::point(mean + sd * normal_quantile(p)),
            NoiseModel::ShiftedExponential { rate, shift } => {
                Iv::point(shift - (1.0 - p).ln() / rate)
            }
            NoiseModel::Empirical(s) => quantile_interval(s, p).expect("p validated"),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            NoiseModel::Laplace { location, scale } => {
                let z = (x - location) / scale;
                if z < 0.0 {
                    0.5 * z.exp()
                } else {
                    1.0 - 0.5 * (-z).exp()
                }
            }
            NoiseModel::Gaussian { mean, sd } => normal_cdf((x - mean) / sd),
            NoiseModel::ShiftedExponential { rate, shift } => {
                if x < *shift {
                    0.0
                } else {
                    1.0 - (-rate * (x - shift)).exp()
                }
            }
            NoiseModel::Empirical(s) => cdf_pair(s, x).1,
        }
    }

    /// `P(|X| <= x)`.
    pub fn abs_cdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        match self {
            NoiseModel::Empirical(s) => cdf_pair(&s.abs(), x).1,
            _ => self.cdf(x) - self.cdf(-x),
        }
    }

    /// Exactly symmetric about the mean: true for the location families,
    /// mirror-tested for empirical samples.
    pub fn is_symmetric(&self) -> bool {
        match self {
            NoiseModel::Laplace { .. } | NoiseModel::Gaussian { .. } => true,
            NoiseModel::ShiftedExponential { .. } => false,
            NoiseModel::Empirical(s) => {
                let atoms = s.atoms();
                let w = s.atom_weights();
                let m = s.mean();
                let n = atoms.len();
                let scale = 1.0 + s.max_atom().abs().max(s.min_atom().abs());
                (0..n).all(|i| {
                    let j = n - 1 - i;
                    ((atoms[i] - m) + (atoms[j] - m)).abs() <= 1e-9 * scale
                        && (w[i] - w[j]).abs() <= 1e-9
                })
            }
        }
    }
}

/// Outcome of the level-selection recipe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AlphaSelection {
    pub alpha_star: f64,
    pub nu: f64,
    pub eps: f64,
    pub symmetric: bool,
}

/// Half distance between the symmetric quantiles at `alpha`, interval
/// midpoint for empirical noise.
fn half_width(noise: &NoiseModel, alpha: f64) -> f64 {
    let hi = noise.quantile(0.5 * (1.0 + alpha));
    let lo = noise.quantile(0.5 * (1.0 - alpha));
    0.5 * (hi.midpoint() - lo.midpoint())
}

/// Signed balance residual `(q_{(1+a)/2} + q_{(1-a)/2})/2 - mean` for the
/// continuous families.
fn balance(noise: &NoiseModel, alpha: f64) -> f64 {
    let hi = noise.quantile(0.5 * (1.0 + alpha));
    let lo = noise.quantile(0.5 * (1.0 - alpha));
    0.5 * (hi.midpoint() + lo.midpoint()) - noise.mean()
}

/// Level selection for a known noise law:
/// match the symmetric quantile average to the mean, read off the half-width
/// `eps`, and convert back through `alpha* = P(|noise| <= eps)`. Symmetric
/// laws short-circuit: every level balances, so the caller-supplied default
/// is used directly.
pub fn select_alpha(noise: &NoiseModel, default_alpha: f64) -> Result<AlphaSelection, DrrError> {
    noise.validate()?;
    check_alpha(default_alpha)?;
    if noise.is_symmetric() {
        let eps = half_width(noise, default_alpha);
        return Ok(AlphaSelection {
            alpha_star: default_alpha,
            nu: 1.0 - default_alpha,
            eps,
            symmetric: true,
        });
    }
    let root = match noise {
        NoiseModel::Empirical(s) => empirical_balanced_alpha(s)?,
        _ => {
            // bisection on the monotone balance function
            let mut lo = 0.0;
            let mut hi = 1.0 - 1e-12;
            let f_lo = balance(noise, lo);
            let f_hi = balance(noise, hi);
            if f_lo > 0.0 || f_hi < 0.0 {
                return Err(DrrError::NoFeasibleAlpha);
            }
            while hi - lo > 1e-10 {
                let mid = 0.5 * (lo + hi);
                if balance(noise, mid) < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        }
    };
    let eps = half_width(noise, root);
    let alpha_star = noise.abs_cdf(eps);
    Ok(AlphaSelection {
        alpha_star,
        nu: 1.0 - alpha_star,
        eps,
        symmetric: false,
    })
}

/// Smallest level whose symmetric quantile sum interval covers twice the
/// mean, scanned over the finitely many quantile breakpoints.
fn empirical_balanced_alpha(s: &EmpiricalSample) -> Result<f64, DrrError> {
    let target = 2.0 * s.mean();
    let tol = 1e-9 * (1.0 + target.abs());
    let mut pts = vec![0.0];
    for &c in s.cum_weights() {
        for a in [2.0 * c - 1.0, 1.0 - 2.0 * c] {
            if (0.0..1.0).contains(&a) {
                pts.push(a);
            }
        }
    }
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup();
    let mut grid = Vec::with_capacity(2 * pts.len());
    for (i, &p) in pts.iter().enumerate() {
        grid.push(p);
        let next = pts.get(i + 1).copied().unwrap_or(1.0);
        let mid = 0.5 * (p + next);
        if mid > p && mid < 1.0 {
            grid.push(mid);
        }
    }
    for a in grid {
        let hi = quantile_interval(s, 0.5 * (1.0 + a))?;
        let lo = quantile_interval(s, 0.5 * (1.0 - a))?;
        let sum = hi.minkowski_add(&lo);
        if sum.lo - tol <= target && target <= sum.hi + tol {
            return Ok(a);
        }
    }
    Err(DrrError::NoFeasibleAlpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distribution::cvar;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn abs1234() -> EmpiricalSample {
        EmpiricalSample::equiprobable(vec![1.0, -2.0, 3.0, -4.0]).unwrap()
    }

    #[test]
    fn weights_match_closed_form() {
        let q = optimal_weights(&abs1234(), 0.5).unwrap();
        assert_eq!(q.weights, vec![0.0, 0.0, 0.5, 0.5]);
        assert!(q.is_feasible(0.5, 1e-12));
        assert_eq!(q.weights.iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn weights_uniform_at_alpha_zero_or_total_tie() {
        let q0 = optimal_weights(&abs1234(), 0.0).unwrap();
        for &w in &q0.weights {
            assert!(close(w, 0.25, 1e-15));
        }
        let tied = EmpiricalSample::equiprobable(vec![2.0, -2.0, 2.0]).unwrap();
        let qt = optimal_weights(&tied, 0.6).unwrap();
        for &w in &qt.weights {
            assert!(close(w, 1.0 / 3.0, 1e-15));
        }
        assert_eq!(qt.weights.iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn weights_reject_non_equiprobable() {
        let s = EmpiricalSample::new(vec![1.0, 2.0], vec![0.3, 0.7]).unwrap();
        assert!(matches!(
            optimal_weights(&s, 0.5),
            Err(DrrError::NotEquiprobable)
        ));
    }

    #[test]
    fn worst_case_equals_cvar_of_abs() {
        let s = abs1234();
        for alpha in [0.0, 0.25, 0.5, 0.9] {
            let wc = worst_case_objective(&s, alpha).unwrap();
            let reference = cvar(&s.abs(), alpha).unwrap();
            assert!(
                close(wc, reference, 1e-10),
                "alpha {alpha}: {wc} vs {reference}"
            );
        }
        assert!(close(worst_case_objective(&s, 0.5).unwrap(), 3.5, 1e-12));
        assert!(close(worst_case_objective(&s, 0.0).unwrap(), 2.5, 1e-12));
        assert!(close(worst_case_objective(&s, 0.999).unwrap(), 4.0, 1e-9));
    }

    #[test]
    fn stable_regression_count() {
        assert_eq!(k_from_alpha(1000, 0.6), 400);
        assert_eq!(k_from_alpha(4, 0.5), 2);
        assert_eq!(k_from_alpha(5, 0.5), 2);
        // integral case: (1 - alpha) l * worst case = sum of k largest
        let s = abs1234();
        let wc = worst_case_objective(&s, 0.5).unwrap();
        assert!(close(wc * 0.5 * 4.0, 3.0 + 4.0, 1e-10));
        // non-integral case differs from the top-k sum
        let s5 = EmpiricalSample::equiprobable(vec![1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        let wc5 = worst_case_objective(&s5, 0.5).unwrap();
        let top2 = 9.0;
        assert!((wc5 * 0.5 * 5.0 - top2).abs() > 1e-6);
    }

    #[test]
    fn laplace_symmetric_selection() {
        let noise = NoiseModel::Laplace {
            location: 0.0,
            scale: 1.0,
        };
        let sel = select_alpha(&noise, 0.6).unwrap();
        assert!(sel.symmetric);
        assert!(close(sel.alpha_star, 0.6, 1e-15));
        assert!(close(sel.nu, 0.4, 1e-15));
        // half-width at 0.6 is the 0.8-quantile: -ln(0.4)
        assert!(close(sel.eps, -(0.4f64).ln(), 1e-12));
    }

    #[test]
    fn gaussian_symmetric_for_any_mean() {
        for mean in [-3.0, 0.0, 2.5] {
            let sel = select_alpha(&NoiseModel::Gaussian { mean, sd: 2.0 }, 0.3).unwrap();
            assert!(sel.symmetric);
            assert!(close(sel.alpha_star, 0.3, 1e-15));
        }
    }

    #[test]
    fn shifted_exponential_selection() {
        let noise = NoiseModel::ShiftedExponential {
            rate: 1.0,
            shift: 0.0,
        };
        let sel = select_alpha(&noise, 0.6).unwrap();
        assert!(!sel.symmetric);
        // balanced level solves 1 - a^2 = 4 e^{-2}
        let root = (1.0 - 4.0 * (-2.0f64).exp()).sqrt();
        assert!(close(half_width(&noise, root), sel.eps, 1e-8));
        let expected_eps = 0.5 * ((1.0 + root) / (1.0 - root)).ln();
        assert!(close(sel.eps, expected_eps, 1e-8));
        assert!(close(sel.alpha_star, 1.0 - (-expected_eps).exp(), 1e-8));
        assert!(close(balance(&noise, root), 0.0, 1e-9));
    }

    #[test]
    fn mirrored_empirical_is_symmetric() {
        let s = EmpiricalSample::equiprobable(vec![-2.0, -1.0, 1.0, 2.0]).unwrap();
        let noise = NoiseModel::Empirical(s.clone());
        let sel = select_alpha(&noise, 0.5).unwrap();
        assert!(sel.symmetric);
        let skewed = EmpiricalSample::equiprobable(vec![0.0, 0.0, 0.0, 4.0]).unwrap();
        assert!(!NoiseModel::Empirical(skewed).is_symmetric());
        // the balance condition holds at every level for a mirrored sample:
        // twice the mean lies in the symmetric quantile sum interval
        let target = 2.0 * s.mean();
        for k in 0..20 {
            let a = k as f64 / 20.0;
            let hi = quantile_interval(&s, 0.5 * (1.0 + a)).unwrap();
            let lo = quantile_interval(&s, 0.5 * (1.0 - a)).unwrap();
            let sum = hi.minkowski_add(&lo);
            assert!(
                sum.lo - 1e-12 <= target && target <= sum.hi + 1e-12,
                "alpha {a}: {target} outside [{}, {}]",
                sum.lo,
                sum.hi
            );
        }
    }

    #[test]
    fn gaussian_quantile_sanity() {
        assert!(close(normal_quantile(0.5), 0.0, 1e-7));
        assert!(close(normal_quantile(0.975), 1.959964, 5e-6));
        assert!(close(normal_cdf(1.959964), 0.975, 5e-7));
    }
}
