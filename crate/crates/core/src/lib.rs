//! Support vector regression on an exact empirical CVaR calculus.
//!
//! The crate is organized around one idea: the epsilon-insensitive and
//! nu-parameterized regressions are the same problem seen through different
//! members of a risk quadrangle, so one set of distribution primitives plus
//! one QP engine yields four interchangeable solver paths, a distributionally
//! robust reading of the fit, and exactly testable identities between all of
//! them.
//!
//! * [`distribution`] — weighted empirical samples, set-valued quantiles,
//!   CVaR and its two optimization formulas, CVaR norms, the Vapnik error.
//! * [`quadrangle`] — risk/deviation/regret/error quartets for the CVaR-norm
//!   and quantile-symmetric-average families, admissible level sets, identity
//!   checking.
//! * [`qp`] — dense-input convex QP solving with independent KKT
//!   certification.
//! * [`svr`] — the four formulations, analytic intercepts, parameter links,
//!   training and prediction.
//! * [`drr`] — robust reweighting, worst-case objectives, stable-regression
//!   counts, and level selection for known noise laws.
//! * [`case_study`] — simulation and the cross-formulation agreement
//!   harness.
//!
//! All values are immutable; every function here is safe to call from
//! multiple threads at once.

pub mod case_study;
pub mod distribution;
pub mod drr;
pub mod io;
pub mod kernel;
pub mod linalg;
pub mod qp;
pub mod quadrangle;
pub mod rng;
pub mod svr;

pub use distribution::{AlphaInterval, EmpiricalSample, QuantileInterval};
pub use kernel::KernelSpec;
pub use qp::{ConvexQp, QpSettings, QpSolution, QpStatus};
pub use quadrangle::{EpsilonAlphaSet, QuadrangleParameter, QuadrangleQuartet};
pub use svr::{Dataset, Formulation, Regularization, SvrConfig, SvrModel, SvrParameter};
