//! Support vector regression through one QP substrate, four ways.
//!
//! The same regression problem is posed as
//!   * `EpsPrimal`  — expected epsilon-insensitive loss at fixed tube width,
//!   * `NuPrimal`   — tube width optimized jointly, weighted by `nu = 1 - alpha`,
//!   * `NuDeviation`— deviation minimization over the slope only, intercept
//!                    recovered analytically from the residual statistic,
//!   * `NuDual`     — the kernelized dual with an l1 budget and box bounds,
//!
//! and the solutions agree with each other up to solver tolerance. Models
//! carry their residual distribution plus the `(alpha, eps)` pair linking the
//! two parameterizations: `eps` lives in the alpha-quantile of the absolute
//! residuals, and `alpha` in the cdf interval of the absolute residuals at
//! `eps`.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distribution::{
    cdf_pair, cvar, quantile_interval, vapnik_error, AlphaInterval, DistributionError,
    EmpiricalSample, QuantileInterval,
};
use crate::kernel::{KernelError, KernelSpec};
use crate::linalg::{dot, norm2_sq, Mat, SparseMat};
use crate::qp::{solve_qp, ConvexQp, QpError, QpSettings, QpStatus};
use crate::quadrangle::{cvar_norm_quadrangle, statistic_avg_quantiles, QuadrangleError};

#[derive(Debug, Error)]
pub enum SvrError {
    #[error("dataset needs at least 2 rows, got {0}")]
    TooFewRows(usize),
    #[error("dataset has a non-finite entry")]
    NonFiniteData,
    #[error("targets length {targets} does not match feature rows {rows}")]
    TargetLength { rows: usize, targets: usize },
    #[error("feature vector has length {got}, expected {expected}")]
    FeatureDim { expected: usize, got: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("tube half-width {eps} must stay below half the target range {bound}")]
    EpsilonTooLarge { eps: f64, bound: f64 },
    #[error("{formulation} solve ended with status {status:?}")]
    Solver {
        formulation: Formulation,
        status: QpStatus,
    },
    #[error(
        "objective recomputed from the model ({recomputed}) disagrees with the solver ({solver})"
    )]
    ObjectiveMismatch { recomputed: f64, solver: f64 },
    #[error("models were trained on different datasets")]
    FingerprintMismatch,
    #[error(transparent)]
    Qp(#[from] QpError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Distribution(#[from] DistributionError),
    #[error(transparent)]
    Quadrangle(#[from] QuadrangleError),
}

/// Training data: feature rows and one target per row.
#[derive(Debug, Clone)]
pub struct Dataset {
    features: Mat,
    targets: Vec<f64>,
    fingerprint: u64,
}

fn fnv1a_update(mut h: u64, bytes: &[u8]) -> u64 {
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

impl Dataset {
    pub fn new(features: Mat, targets: Vec<f64>) -> Result<Self, SvrError> {
        let l = features.nrows();
        if l < 2 {
            return Err(SvrError::TooFewRows(l));
        }
        if targets.len() != l {
            return Err(SvrError::TargetLength {
                rows: l,
                targets: targets.len(),
            });
        }
        for i in 0..l {
            if !targets[i].is_finite() || features.row(i).iter().any(|v| !v.is_finite()) {
                return Err(SvrError::NonFiniteData);
            }
        }
        let mut h = fnv1a_update(0xcbf29ce484222325, &(l as u64).to_le_bytes());
        h = fnv1a_update(h, &(features.ncols() as u64).to_le_bytes());
        for i in 0..l {
            for v in features.row(i) {
                h = fnv1a_update(h, &v.to_bits().to_le_bytes());
            }
            h = fnv1a_update(h, &targets[i].to_bits().to_le_bytes());
        }
        Ok(Dataset {
            features,
            targets,
            fingerprint: h,
        })
    }

    /// One-dimensional convenience constructor.
    pub fn from_xy(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self, SvrError> {
        let rows: Vec<Vec<f64>> = xs.into_iter().map(|x| vec![x]).collect();
        Dataset::new(Mat::from_rows(&rows), ys)
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn num_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &Mat {
        &self.features
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Formulation {
    EpsPrimal,
    NuPrimal,
    NuDeviation,
    NuDual,
}

impl std::fmt::Display for Formulation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Formulation::EpsPrimal => "eps-primal",
            Formulation::NuPrimal => "nu-primal",
            Formulation::NuDeviation => "nu-deviation",
            Formulation::NuDual => "nu-dual",
        };
        f.write_str(s)
    }
}

/// Tube parameter: a confidence level or a fixed half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SvrParameter {
    Alpha(f64),
    Epsilon(f64),
}

/// Regularization, either as a ridge weight or as a capacity constant.
///
/// For the primal formulations a capacity `C` maps to `lambda = 1/(2 C l)`;
/// the dual keeps `C` and scales its l1 budget to `C l (1 - alpha)` with box
/// bounds `|mu_i| <= C`, which corresponds to `lambda = 1/(C l)`. A `Lambda`
/// handed to the dual is converted through the exact map `C = 1/(lambda l)`
/// so that primal and dual then solve the same problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Regularization {
    Lambda(f64),
    CapC(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvrConfig {
    pub parameter: SvrParameter,
    pub regularization: Regularization,
    pub formulation: Formulation,
    pub kernel: KernelSpec,
}

impl SvrConfig {
    fn validate(&self, l: usize) -> Result<(f64, Option<f64>), SvrError> {
        match self.parameter {
            SvrParameter::Alpha(a) if !(0.0..1.0).contains(&a) => {
                return Err(SvrError::InvalidConfig(format!("alpha {a} outside [0, 1)")));
            }
            SvrParameter::Epsilon(e) if e.is_nan() || e < 0.0 => {
                return Err(SvrError::InvalidConfig(format!(
                    "eps {e} must be nonnegative"
                )));
            }
            _ => {}
        }
        match (self.formulation, self.parameter) {
            (Formulation::EpsPrimal, SvrParameter::Alpha(_)) => {
                return Err(SvrError::InvalidConfig(
                    "eps-primal requires an epsilon parameter".into(),
                ));
            }
            (
                Formulation::NuPrimal | Formulation::NuDeviation | Formulation::NuDual,
                SvrParameter::Epsilon(_),
            ) => {
                return Err(SvrError::InvalidConfig(format!(
                    "{} requires an alpha parameter",
                    self.formulation
                )));
            }
            _ => {}
        }
        if self.formulation != Formulation::NuDual && self.kernel != KernelSpec::Linear {
            return Err(SvrError::InvalidConfig(
                "primal formulations support the linear kernel only; use nu-dual".into(),
            ));
        }
        self.kernel.validate()?;
        let lf = l as f64;
        let (lambda, cap_c) = match (self.formulation, self.regularization) {
            (_, Regularization::Lambda(v)) if v.is_nan() || v <= 0.0 => {
                return Err(SvrError::InvalidConfig(format!(
                    "lambda {v} must be positive"
                )));
            }
            (_, Regularization::CapC(c)) if c.is_nan() || c <= 0.0 => {
                return Err(SvrError::InvalidConfig(format!("C {c} must be positive")));
            }
            (Formulation::NuDual, Regularization::CapC(c)) => (1.0 / (c * lf), Some(c)),
            (Formulation::NuDual, Regularization::Lambda(v)) => (v, Some(1.0 / (v * lf))),
            (_, Regularization::Lambda(v)) => (v, None),
            (_, Regularization::CapC(c)) => (1.0 / (2.0 * c * lf), Some(c)),
        };
        Ok((lambda, cap_c))
    }
}

/// Fitted model: slope or dual coefficients, analytic or solver intercept,
/// residual distributions, and the linked `(alpha, eps)` pair.
#[derive(Debug, Clone)]
pub struct SvrModel {
    pub formulation: Formulation,
    pub kernel: KernelSpec,
    pub weights: Option<Vec<f64>>,
    pub dual_coeffs: Option<Vec<f64>>,
    pub intercept: f64,
    pub pre_intercept_residuals: EmpiricalSample,
    pub residuals: EmpiricalSample,
    pub linked_eps: QuantileInterval,
    pub linked_alpha: AlphaInterval,
    pub alpha: Option<f64>,
    pub eps: Option<f64>,
    pub lambda: f64,
    pub cap_c: Option<f64>,
    pub objective: f64,
    pub kkt_residual: f64,
    pub solve_seconds: f64,
    pub dataset_fingerprint: u64,
}

impl SvrModel {
    /// Ridge part of the objective, zero for pure dual-coefficient models.
    pub fn weight_norm_sq(&self) -> f64 {
        self.weights.as_ref().map_or(0.0, |w| norm2_sq(w))
    }
}

fn names(parts: &[(&str, usize)]) -> Vec<String> {
    let mut out = Vec::new();
    for &(tag, count) in parts {
        if count == 1 {
            out.push(tag.to_string());
        } else {
            out.extend((0..count).map(|i| format!("{tag}{i}")));
        }
    }
    out
}

/// Epsilon-insensitive primal: variables `(w, b, xi, xi*)`, objective
/// `(1/l) sum(xi + xi*) + (lambda/2)||w||^2`, residual and nonnegativity rows.
pub fn build_eps_primal_qp(d: &Dataset, eps: f64, lambda: f64) -> Result<ConvexQp, SvrError> {
    let (l, n) = (d.len(), d.num_features());
    let nv = n + 1 + 2 * l;
    let mut p_rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nv];
    for j in 0..n {
        p_rows[j].push((j, lambda));
    }
    let mut c = vec![0.0; nv];
    let inv_l = 1.0 / l as f64;
    for i in 0..2 * l {
        c[n + 1 + i] = inv_l;
    }
    let mut g_rows = Vec::with_capacity(4 * l);
    let mut h = Vec::with_capacity(4 * l);
    for i in 0..l {
        // y_i - w'x_i - b <= eps + xi_i
        let mut row: Vec<(usize, f64)> = d
            .features
            .row(i)
            .iter()
            .enumerate()
            .map(|(j, &x)| (j, -x))
            .collect();
        row.push((n, -1.0));
        row.push((n + 1 + i, -1.0));
        g_rows.push(row);
        h.push(eps - d.targets[i]);
    }
    for i in 0..l {
        // w'x_i + b - y_i <= eps + xi*_i
        let mut row: Vec<(usize, f64)> = d
            .features
            .row(i)
            .iter()
            .enumerate()
            .map(|(j, &x)| (j, x))
            .collect();
        row.push((n, 1.0));
        row.push((n + 1 + l + i, -1.0));
        g_rows.push(row);
        h.push(eps + d.targets[i]);
    }
    for i in 0..2 * l {
        g_rows.push(vec![(n + 1 + i, -1.0)]);
        h.push(0.0);
    }
    Ok(ConvexQp::new(
        SparseMat::from_row_entries(nv, nv, p_rows),
        c,
        SparseMat::zeros(0, nv),
        vec![],
        SparseMat::from_row_entries(4 * l, nv, g_rows),
        h,
        names(&[("w", n), ("b", 1), ("xi", l), ("xis", l)]),
    )?)
}

/// Nu primal: the tube half-width joins the variables, weighted by
/// `nu = 1 - alpha` in the objective. No sign constraint on it: its optimal
/// value is nonnegative automatically.
pub fn build_nu_primal_qp(d: &Dataset, alpha: f64, lambda: f64) -> Result<ConvexQp, SvrError> {
    let (l, n) = (d.len(), d.num_features());
    let nv = n + 2 + 2 * l;
    let eps_ix = n + 1;
    let mut p_rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nv];
    for j in 0..n {
        p_rows[j].push((j, lambda));
    }
    let mut c = vec![0.0; nv];
    c[eps_ix] = 1.0 - alpha;
    let inv_l = 1.0 / l as f64;
    for i in 0..2 * l {
        c[n + 2 + i] = inv_l;
    }
    let mut g_rows = Vec::with_capacity(4 * l);
    let mut h = Vec::with_capacity(4 * l);
    for i in 0..l {
        let mut row: Vec<(usize, f64)> = d
            .features
            .row(i)
            .iter()
            .enumerate()
            .map(|(j, &x)| (j, -x))
            .collect();
        row.push((n, -1.0));
        row.push((eps_ix, -1.0));
        row.push((n + 2 + i, -1.0));
        g_rows.push(row);
        h.push(-d.targets[i]);
    }
    for i in 0..l {
        let mut row: Vec<(usize, f64)> = d
            .features
            .row(i)
            .iter()
            .enumerate()
            .map(|(j, &x)| (j, x))
            .collect();
        row.push((n, 1.0));
        row.push((eps_ix, -1.0));
        row.push((n + 2 + l + i, -1.0));
        g_rows.push(row);
        h.push(d.targets[i]);
    }
    for i in 0..2 * l {
        g_rows.push(vec![(n + 2 + i, -1.0)]);
        h.push(0.0);
    }
    Ok(ConvexQp::new(
        SparseMat::from_row_entries(nv, nv, p_rows),
        c,
        SparseMat::zeros(0, nv),
        vec![],
        SparseMat::from_row_entries(4 * l, nv, g_rows),
        h,
        names(&[("w", n), ("b", 1), ("eps", 1), ("xi", l), ("xis", l)]),
    )?)
}

/// Deviation route: minimize the CVaR-norm deviation of the centered
/// no-intercept residual over the slope alone, through two CVaR epigraphs.
/// Variables `(w, C1, C2, u, v)`; there is no intercept variable.
pub fn build_deviation_qp(d: &Dataset, alpha: f64, lambda: f64) -> Result<ConvexQp, SvrError> {
    let (l, n) = (d.len(), d.num_features());
    let lf = l as f64;
    let nv = n + 2 + 2 * l;
    let c1_ix = n;
    let c2_ix = n + 1;
    let xbar: Vec<f64> = (0..n)
        .map(|j| (0..l).map(|i| d.features.get(i, j)).sum::<f64>() / lf)
        .collect();
    let ybar = d.targets.iter().sum::<f64>() / lf;
    let mut p_rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nv];
    for j in 0..n {
        p_rows[j].push((j, lambda));
    }
    let mut c = vec![0.0; nv];
    c[c1_ix] = 0.5 * (1.0 + alpha);
    c[c2_ix] = 0.5 * (1.0 - alpha);
    let inv_l = 1.0 / lf;
    for i in 0..2 * l {
        c[n + 2 + i] = inv_l;
    }
    let mut g_rows = Vec::with_capacity(4 * l);
    let mut h = Vec::with_capacity(4 * l);
    // centered residual V_i(w) = (y_i - ybar) - w'(x_i - xbar)
    for i in 0..l {
        let mut row: Vec<(usize, f64)> = (0..n)
            .map(|j| (j, -(d.features.get(i, j) - xbar[j])))
            .collect();
        row.push((c1_ix, -1.0));
        row.push((n + 2 + i, -1.0));
        g_rows.push(row);
        h.push(-(d.targets[i] - ybar));
    }
    for i in 0..l {
        let mut row: Vec<(usize, f64)> = (0..n)
            .map(|j| (j, -(d.features.get(i, j) - xbar[j])))
            .collect();
        row.push((c2_ix, -1.0));
        row.push((n + 2 + l + i, -1.0));
        g_rows.push(row);
        h.push(-(d.targets[i] - ybar));
    }
    for i in 0..2 * l {
        g_rows.push(vec![(n + 2 + i, -1.0)]);
        h.push(0.0);
    }
    Ok(ConvexQp::new(
        SparseMat::from_row_entries(nv, nv, p_rows),
        c,
        SparseMat::zeros(0, nv),
        vec![],
        SparseMat::from_row_entries(4 * l, nv, g_rows),
        h,
        names(&[("w", n), ("C1", 1), ("C2", 1), ("u", l), ("v", l)]),
    )?)
}

fn dual_qp_parts(
    d: &Dataset,
    alpha: f64,
    cap_c: f64,
    kernel: &KernelSpec,
) -> Result<(ConvexQp, Mat), SvrError> {
    let l = d.len();
    let lf = l as f64;
    let gram = kernel.gram(&d.features)?;
    let nv = 2 * l;
    let mut p_rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nv];
    for i in 0..l {
        let row: Vec<(usize, f64)> = (0..l)
            .filter_map(|j| {
                let v = gram.get(i, j);
                (v != 0.0).then_some((j, v))
            })
            .collect();
        p_rows[i] = row;
    }
    let mut c = vec![0.0; nv];
    for i in 0..l {
        c[i] = -d.targets[i];
    }
    let eq = SparseMat::from_row_entries(1, nv, vec![(0..l).map(|i| (i, 1.0)).collect()]);
    let mut g_rows = Vec::with_capacity(4 * l + 1);
    let mut h = Vec::with_capacity(4 * l + 1);
    for i in 0..l {
        g_rows.push(vec![(i, 1.0), (l + i, -1.0)]); // mu_i <= t_i
        h.push(0.0);
    }
    for i in 0..l {
        g_rows.push(vec![(i, -1.0), (l + i, -1.0)]); // -mu_i <= t_i
        h.push(0.0);
    }
    g_rows.push((l..2 * l).map(|j| (j, 1.0)).collect()); // sum t <= C l (1 - alpha)
    h.push(cap_c * lf * (1.0 - alpha));
    for i in 0..l {
        g_rows.push(vec![(i, 1.0)]); // mu_i <= C
        h.push(cap_c);
    }
    for i in 0..l {
        g_rows.push(vec![(i, -1.0)]); // -mu_i <= C
        h.push(cap_c);
    }
    let qp = ConvexQp::new(
        SparseMat::from_row_entries(nv, nv, p_rows),
        c,
        eq,
        vec![0.0],
        SparseMat::from_row_entries(4 * l + 1, nv, g_rows),
        h,
        names(&[("mu", l), ("t", l)]),
    )?;
    Ok((qp, gram))
}

/// Dual formulation, emitted as a minimization of the negated objective
/// `mu'y - 1/2 mu'K mu` subject to `mu'1 = 0`, `||mu||_1 <= C l (1 - alpha)`
/// and the box `|mu_i| <= C`.
///
/// For comparison, the classical dual splits `mu` into two nonnegative
/// halves (`2l` variables with `sum(a + a*) <= C l (1 - alpha)` and
/// per-coordinate caps); the two are equivalent through
/// `mu = a - a*`, but this form keeps half the variables and is what the
/// solver receives. The classical split is not offered as a solve path.
pub fn build_dual_qp(
    d: &Dataset,
    alpha: f64,
    cap_c: f64,
    kernel: &KernelSpec,
) -> Result<ConvexQp, SvrError> {
    Ok(dual_qp_parts(d, alpha, cap_c, kernel)?.0)
}

/// Analytic intercept: the symmetric quantile average of the no-intercept
/// residuals, tie-broken at the interval midpoint.
pub fn intercept_from_statistic(
    pre_intercept_residuals: &EmpiricalSample,
    alpha: f64,
) -> Result<(QuantileInterval, f64), SvrError> {
    let interval = statistic_avg_quantiles(pre_intercept_residuals, alpha)?;
    Ok((interval, interval.midpoint()))
}

/// Quantile interval of the absolute residuals at `alpha`: the admissible
/// tube half-widths equivalent to the fitted level.
pub fn eps_from_alpha(model: &SvrModel, alpha: f64) -> Result<QuantileInterval, SvrError> {
    Ok(quantile_interval(&model.residuals.abs(), alpha)?)
}

/// Level interval `[P(|Z| < eps), P(|Z| <= eps))` with its midpoint
/// diagnostic; degenerate when no residual sits exactly at `eps`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct AlphaLink {
    pub interval: AlphaInterval,
    pub midpoint: f64,
    pub degenerate: bool,
}

pub fn alpha_from_eps(model: &SvrModel, eps: f64) -> Result<AlphaLink, SvrError> {
    if eps.is_nan() || eps < 0.0 {
        return Err(SvrError::InvalidConfig(format!(
            "eps {eps} must be nonnegative"
        )));
    }
    let abs = model.residuals.abs();
    // The interval is generated by residuals sitting exactly at eps; solver
    // tolerance perturbs that equality, so snap to a residual magnitude when
    // one lies within 1e-7 relative of the requested width.
    let snap_tol = 1e-7 * (1.0 + eps.abs());
    let probe = abs
        .atoms()
        .iter()
        .copied()
        .min_by(|a, b| {
            (a - eps)
                .abs()
                .partial_cmp(&(b - eps).abs())
                .expect("finite")
        })
        .filter(|a| (a - eps).abs() <= snap_tol)
        .unwrap_or(eps);
    let (strict, weak) = cdf_pair(&abs, probe);
    let interval = AlphaInterval::half_open(strict, weak);
    Ok(AlphaLink {
        interval,
        midpoint: interval.midpoint(),
        degenerate: interval.is_degenerate(),
    })
}

fn residual_samples(
    d: &Dataset,
    predict_raw: impl Fn(usize) -> f64,
    b: f64,
) -> Result<(EmpiricalSample, EmpiricalSample), SvrError> {
    let pre: Vec<f64> = (0..d.len())
        .map(|i| d.targets[i] - predict_raw(i))
        .collect();
    let post: Vec<f64> = pre.iter().map(|z| z - b).collect();
    Ok((
        EmpiricalSample::equiprobable(pre)?,
        EmpiricalSample::equiprobable(post)?,
    ))
}

fn linked_pair(
    residuals: &EmpiricalSample,
    parameter: SvrParameter,
) -> Result<(QuantileInterval, AlphaInterval), SvrError> {
    match parameter {
        SvrParameter::Alpha(a) => {
            let eps_iv = quantile_interval(&residuals.abs(), a)?;
            Ok((eps_iv, AlphaInterval::closed(a, a)))
        }
        SvrParameter::Epsilon(e) => {
            let (strict, weak) = cdf_pair(&residuals.abs(), e);
            Ok((
                QuantileInterval::point(e),
                AlphaInterval::half_open(strict, weak),
            ))
        }
    }
}

fn check_objective(recomputed: f64, solver: f64) -> Result<(), SvrError> {
    if (recomputed - solver).abs() > 1e-8 * (1.0 + recomputed.abs().max(solver.abs())) {
        return Err(SvrError::ObjectiveMismatch { recomputed, solver });
    }
    Ok(())
}

/// Rebuilds a primal-facing model from dual coefficients: for the linear
/// kernel the slope is `w = X' mu`; otherwise the coefficients are kept and
/// prediction goes through kernel sums. The intercept comes from the
/// symmetric quantile average of the no-intercept residuals.
pub fn recover_primal_from_dual(
    mu: &[f64],
    d: &Dataset,
    kernel: &KernelSpec,
    alpha: f64,
    cap_c: Option<f64>,
) -> Result<SvrModel, SvrError> {
    if mu.len() != d.len() {
        return Err(SvrError::FeatureDim {
            expected: d.len(),
            got: mu.len(),
        });
    }
    let lf = d.len() as f64;
    let (weights, dual_coeffs, fitted): (Option<Vec<f64>>, Option<Vec<f64>>, Vec<f64>) =
        if *kernel == KernelSpec::Linear {
            let w = d.features.t_matvec(mu);
            let fitted = (0..d.len()).map(|i| dot(d.features.row(i), &w)).collect();
            (Some(w), Some(mu.to_vec()), fitted)
        } else {
            let gram = kernel.gram(&d.features)?;
            let fitted = (0..d.len()).map(|i| dot(gram.row(i), mu)).collect();
            (None, Some(mu.to_vec()), fitted)
        };
    let (pre, _) = residual_samples(d, |i| fitted[i], 0.0)?;
    let (_, b) = intercept_from_statistic(&pre, alpha)?;
    let (pre, post) = residual_samples(d, |i| fitted[i], b)?;
    let (linked_eps, linked_alpha) = linked_pair(&post, SvrParameter::Alpha(alpha))?;
    let gram = kernel.gram(&d.features)?;
    let objective = dot(mu, &d.targets) - 0.5 * dot(mu, &gram.matvec(mu));
    Ok(SvrModel {
        formulation: Formulation::NuDual,
        kernel: *kernel,
        weights,
        dual_coeffs,
        intercept: b,
        pre_intercept_residuals: pre,
        residuals: post,
        linked_eps,
        linked_alpha,
        alpha: Some(alpha),
        eps: None,
        lambda: cap_c.map_or(f64::NAN, |c| 1.0 / (c * lf)),
        cap_c,
        objective,
        kkt_residual: f64::NAN,
        solve_seconds: 0.0,
        dataset_fingerprint: d.fingerprint,
    })
}

/// Trains one model: builds the formulation's QP, solves it, reassembles the
/// objective from the fitted model (rejecting any disagreement with the
/// solver), and records the linked `(alpha, eps)` pair.
pub fn train(d: &Dataset, cfg: &SvrConfig) -> Result<SvrModel, SvrError> {
    let (lambda, cap_c) = cfg.validate(d.len())?;
    let n = d.num_features();
    if let SvrParameter::Epsilon(eps) = cfg.parameter {
        let ymin = d.targets.iter().cloned().fold(f64::INFINITY, f64::min);
        let ymax = d.targets.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let bound = 0.5 * (ymax - ymin);
        // constant targets admit a perfect fit at any width, so only a
        // nontrivial range enforces the bound
        if bound > 0.0 && eps >= bound {
            return Err(SvrError::EpsilonTooLarge { eps, bound });
        }
    }
    let settings = QpSettings::default();
    match cfg.formulation {
        Formulation::EpsPrimal => {
            let eps = match cfg.parameter {
                SvrParameter::Epsilon(e) => e,
                SvrParameter::Alpha(_) => unreachable!("validated"),
            };
            let qp = build_eps_primal_qp(d, eps, lambda)?;
            let t0 = Instant::now();
            let sol = solve_qp(&qp, &settings);
            let secs = t0.elapsed().as_secs_f64();
            expect_optimal(cfg.formulation, &sol)?;
            let w = sol.x[..n].to_vec();
            // the optimal intercept is a whole interval; re-center on the
            // midpoint of the exact minimizer set so the choice is analytic
            let (pre0, _) = residual_samples(d, |i| dot(d.features.row(i), &w), 0.0)?;
            let b = crate::quadrangle::vapnik_center_argmin(&pre0, eps)
                .1
                .midpoint();
            let (pre, post) = residual_samples(d, |i| dot(d.features.row(i), &w), b)?;
            let recomputed = vapnik_error(&post, eps)? + 0.5 * lambda * norm2_sq(&w);
            check_objective(recomputed, sol.objective)?;
            let (linked_eps, linked_alpha) = linked_pair(&post, cfg.parameter)?;
            Ok(SvrModel {
                formulation: cfg.formulation,
                kernel: cfg.kernel,
                weights: Some(w),
                dual_coeffs: None,
                intercept: b,
                pre_intercept_residuals: pre,
                residuals: post,
                linked_eps,
                linked_alpha,
                alpha: None,
                eps: Some(eps),
                lambda,
                cap_c,
                objective: recomputed,
                kkt_residual: sol.kkt_residual,
                solve_seconds: secs,
                dataset_fingerprint: d.fingerprint,
            })
        }
        Formulation::NuPrimal => {
            let alpha = match cfg.parameter {
                SvrParameter::Alpha(a) => a,
                SvrParameter::Epsilon(_) => unreachable!("validated"),
            };
            let qp = build_nu_primal_qp(d, alpha, lambda)?;
            let t0 = Instant::now();
            let sol = solve_qp(&qp, &settings);
            let secs = t0.elapsed().as_secs_f64();
            expect_optimal(cfg.formulation, &sol)?;
            let w = sol.x[..n].to_vec();
            // analytic intercept tie-break: midpoint of the statistic interval
            let (pre0, _) = residual_samples(d, |i| dot(d.features.row(i), &w), 0.0)?;
            let (_, b) = intercept_from_statistic(&pre0, alpha)?;
            let (pre, post) = residual_samples(d, |i| dot(d.features.row(i), &w), b)?;
            let recomputed =
                (1.0 - alpha) * cvar(&post.abs(), alpha)? + 0.5 * lambda * norm2_sq(&w);
            check_objective(recomputed, sol.objective)?;
            let (linked_eps, linked_alpha) = linked_pair(&post, cfg.parameter)?;
            Ok(SvrModel {
                formulation: cfg.formulation,
                kernel: cfg.kernel,
                weights: Some(w),
                dual_coeffs: None,
                intercept: b,
                pre_intercept_residuals: pre,
                residuals: post,
                linked_eps,
                linked_alpha,
                alpha: Some(alpha),
                eps: None,
                lambda,
                cap_c,
                objective: recomputed,
                kkt_residual: sol.kkt_residual,
                solve_seconds: secs,
                dataset_fingerprint: d.fingerprint,
            })
        }
        Formulation::NuDeviation => {
            let alpha = match cfg.parameter {
                SvrParameter::Alpha(a) => a,
                SvrParameter::Epsilon(_) => unreachable!("validated"),
            };
            let qp = build_deviation_qp(d, alpha, lambda)?;
            let t0 = Instant::now();
            let sol = solve_qp(&qp, &settings);
            let secs = t0.elapsed().as_secs_f64();
            expect_optimal(cfg.formulation, &sol)?;
            let w = sol.x[..n].to_vec();
            let (pre, _) = residual_samples(d, |i| dot(d.features.row(i), &w), 0.0)?;
            let (_, b) = intercept_from_statistic(&pre, alpha)?;
            let (pre, post) = residual_samples(d, |i| dot(d.features.row(i), &w), b)?;
            let recomputed =
                cvar_norm_quadrangle(&pre, alpha)?.deviation + 0.5 * lambda * norm2_sq(&w);
            check_objective(recomputed, sol.objective)?;
            let (linked_eps, linked_alpha) = linked_pair(&post, cfg.parameter)?;
            Ok(SvrModel {
                formulation: cfg.formulation,
                kernel: cfg.kernel,
                weights: Some(w),
                dual_coeffs: None,
                intercept: b,
                pre_intercept_residuals: pre,
                residuals: post,
                linked_eps,
                linked_alpha,
                alpha: Some(alpha),
                eps: None,
                lambda,
                cap_c,
                objective: recomputed,
                kkt_residual: sol.kkt_residual,
                solve_seconds: secs,
                dataset_fingerprint: d.fingerprint,
            })
        }
        Formulation::NuDual => {
            let alpha = match cfg.parameter {
                SvrParameter::Alpha(a) => a,
                SvrParameter::Epsilon(_) => unreachable!("validated"),
            };
            let c = cap_c.expect("dual always carries a capacity");
            let (qp, gram) = dual_qp_parts(d, alpha, c, &cfg.kernel)?;
            let t0 = Instant::now();
            let sol = solve_qp(&qp, &settings);
            let secs = t0.elapsed().as_secs_f64();
            expect_optimal(cfg.formulation, &sol)?;
            let mu = sol.x[..d.len()].to_vec();
            let recomputed = dot(&mu, &d.targets) - 0.5 * dot(&mu, &gram.matvec(&mu));
            check_objective(recomputed, -sol.objective)?;
            let mut model = recover_primal_from_dual(&mu, d, &cfg.kernel, alpha, Some(c))?;
            model.kkt_residual = sol.kkt_residual;
            model.solve_seconds = secs;
            Ok(model)
        }
    }
}

fn expect_optimal(formulation: Formulation, sol: &crate::qp::QpSolution) -> Result<(), SvrError> {
    if sol.status != QpStatus::Optimal {
        return Err(SvrError::Solver {
            formulation,
            status: sol.status,
        });
    }
    Ok(())
}

/// Prediction at a new point: `w'x + b` for linear models, kernel expansion
/// `sum_j mu_j k(x_j, x) + b` for dual models.
pub fn predict(model: &SvrModel, x: &[f64], train_data: &Dataset) -> Result<f64, SvrError> {
    if x.len() != train_data.num_features() {
        return Err(SvrError::FeatureDim {
            expected: train_data.num_features(),
            got: x.len(),
        });
    }
    if let Some(w) = &model.weights {
        if w.len() != x.len() {
            return Err(SvrError::FeatureDim {
                expected: w.len(),
                got: x.len(),
            });
        }
        return Ok(dot(w, x) + model.intercept);
    }
    let mu = model
        .dual_coeffs
        .as_ref()
        .ok_or_else(|| SvrError::InvalidConfig("model carries no coefficients".into()))?;
    if model.dataset_fingerprint != train_data.fingerprint() {
        return Err(SvrError::FingerprintMismatch);
    }
    let acc = mu
        .iter()
        .enumerate()
        .map(|(j, &m)| m * model.kernel.eval(train_data.features.row(j), x))
        .sum::<f64>();
    Ok(acc + model.intercept)
}

/// Objective of the capacity-scaled primal
/// `C~ (1 - alpha) cvar_alpha(|z|) + 1/2 ||w||^2` at a given fit; the dual's
/// optimal value converges to its minimum.
pub fn scaled_primal_objective(
    d: &Dataset,
    w: &[f64],
    b: f64,
    alpha: f64,
    c_tilde: f64,
) -> Result<f64, SvrError> {
    let z: Vec<f64> = (0..d.len())
        .map(|i| (d.targets[i] - dot(d.features.row(i), w) - b).abs())
        .collect();
    let sample = EmpiricalSample::equiprobable(z)?;
    Ok(c_tilde * (1.0 - alpha) * cvar(&sample, alpha)? + 0.5 * norm2_sq(w))
}
