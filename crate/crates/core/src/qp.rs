//! Deterministic convex quadratic programming in standard form
//!
//! ```text
//!     minimize   1/2 x' P x + c' x
//!     s.t.       A x  = b
//!                G x <= h
//! ```
//!
//! The interior-point backend is Clarabel; solutions are re-certified here by
//! an independent KKT residual (stationarity, feasibility, complementarity in
//! the infinity norm) and optionally refined by one active-set polish step.
//! Identical inputs produce identical outputs.

use thiserror::Error;

use crate::linalg::{dot, lu_solve, norm_inf, Mat, SparseMat};

#[derive(Debug, Error)]
pub enum QpError {
    #[error("quadratic term is {0}x{1}, expected square")]
    NotSquare(usize, usize),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("quadratic term asymmetric by {0:.3e} (tolerance 1e-12)")]
    Asymmetric(f64),
    #[error("quadratic term is not positive semidefinite (eigenvalue below -1e-9 scale)")]
    NotPsd,
}

/// Convex QP with equality rows `A x = b` and inequality rows `G x <= h`.
#[derive(Debug, Clone)]
pub struct ConvexQp {
    quadratic: SparseMat,
    linear: Vec<f64>,
    eq_lhs: SparseMat,
    eq_rhs: Vec<f64>,
    ineq_lhs: SparseMat,
    ineq_rhs: Vec<f64>,
    variable_names: Vec<String>,
}

/// PSD test splitting off the diagonal-only variables (slack blocks) and
/// running shifted Cholesky attempts on the coupled principal submatrix.
fn verify_psd(p: &SparseMat) -> Result<(), QpError> {
    let scale = 1.0 + p.max_abs_diag();
    let tol = 1e-9 * scale;
    if p.min_diag() < -tol {
        return Err(QpError::NotPsd);
    }
    let coupled = p.coupled_columns();
    if coupled.is_empty() {
        return Ok(());
    }
    let block = p.principal_submatrix(&coupled);
    match crate::linalg::psd_shift(&block, &[0.0, tol]) {
        Some(_) => Ok(()),
        None => Err(QpError::NotPsd),
    }
}

impl ConvexQp {
    /// Validates dimensions, symmetry within `1e-12`, and positive
    /// semidefiniteness (smallest eigenvalue above `-1e-9` on the diagonal
    /// scale, certified through shifted Cholesky attempts).
    pub fn new(
        quadratic: SparseMat,
        linear: Vec<f64>,
        eq_lhs: SparseMat,
        eq_rhs: Vec<f64>,
        ineq_lhs: SparseMat,
        ineq_rhs: Vec<f64>,
        variable_names: Vec<String>,
    ) -> Result<Self, QpError> {
        let n = linear.len();
        if quadratic.nrows() != quadratic.ncols() {
            return Err(QpError::NotSquare(quadratic.nrows(), quadratic.ncols()));
        }
        if quadratic.nrows() != n {
            return Err(QpError::Dimension(format!(
                "quadratic is {}x{} but linear has length {n}",
                quadratic.nrows(),
                quadratic.ncols()
            )));
        }
        if eq_lhs.nrows() != eq_rhs.len() || eq_lhs.ncols() != n {
            return Err(QpError::Dimension("equality block".into()));
        }
        if ineq_lhs.nrows() != ineq_rhs.len() || ineq_lhs.ncols() != n {
            return Err(QpError::Dimension("inequality block".into()));
        }
        if !variable_names.is_empty() && variable_names.len() != n {
            return Err(QpError::Dimension("variable names".into()));
        }
        let asym = quadratic.max_abs_asymmetry();
        if asym > 1e-12 {
            return Err(QpError::Asymmetric(asym));
        }
        verify_psd(&quadratic)?;
        let names = if variable_names.is_empty() {
            (0..n).map(|i| format!("x{i}")).collect()
        } else {
            variable_names
        };
        Ok(ConvexQp {
            quadratic,
            linear,
            eq_lhs,
            eq_rhs,
            ineq_lhs,
            ineq_rhs,
            variable_names: names,
        })
    }

    /// Convenience constructor from dense blocks.
    pub fn from_dense(
        quadratic: &Mat,
        linear: Vec<f64>,
        eq_lhs: &Mat,
        eq_rhs: Vec<f64>,
        ineq_lhs: &Mat,
        ineq_rhs: Vec<f64>,
        variable_names: Vec<String>,
    ) -> Result<Self, QpError> {
        Self::new(
            SparseMat::from_dense(quadratic),
            linear,
            SparseMat::from_dense(eq_lhs),
            eq_rhs,
            SparseMat::from_dense(ineq_lhs),
            ineq_rhs,
            variable_names,
        )
    }

    pub fn num_vars(&self) -> usize {
        self.linear.len()
    }

    pub fn num_eq(&self) -> usize {
        self.eq_rhs.len()
    }

    pub fn num_ineq(&self) -> usize {
        self.ineq_rhs.len()
    }

    pub fn variable_names(&self) -> &[String] {
        &self.variable_names
    }

    pub fn quadratic(&self) -> &SparseMat {
        &self.quadratic
    }

    pub fn linear(&self) -> &[f64] {
        &self.linear
    }

    pub fn ineq_lhs(&self) -> &SparseMat {
        &self.ineq_lhs
    }

    pub fn ineq_rhs(&self) -> &[f64] {
        &self.ineq_rhs
    }

    pub fn objective_at(&self, x: &[f64]) -> f64 {
        0.5 * dot(x, &self.quadratic.matvec(x)) + dot(&self.linear, x)
    }

    /// Plain-text dump of `(P, c, A, b, G, h)` for external cross-checking.
    pub fn dump_text(&self) -> String {
        fn block(out: &mut String, name: &str, m: &SparseMat) {
            out.push_str(&format!("{name} {} {}\n", m.nrows(), m.ncols()));
            for i in 0..m.nrows() {
                let mut dense = vec![0.0; m.ncols()];
                for &(j, v) in m.row_entries(i) {
                    dense[j] = v;
                }
                let row: Vec<String> = dense.iter().map(|v| format!("{v:.17e}")).collect();
                out.push_str(&row.join(" "));
                out.push('\n');
            }
        }
        fn vector(out: &mut String, name: &str, v: &[f64]) {
            out.push_str(&format!("{name} {}\n", v.len()));
            let row: Vec<String> = v.iter().map(|x| format!("{x:.17e}")).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        let mut out = String::new();
        block(&mut out, "P", &self.quadratic);
        vector(&mut out, "c", &self.linear);
        block(&mut out, "A", &self.eq_lhs);
        vector(&mut out, "b", &self.eq_rhs);
        block(&mut out, "G", &self.ineq_lhs);
        vector(&mut out, "h", &self.ineq_rhs);
        out
    }
}

#[derive(Debug, Clone, Copy)]
pub struct QpSettings {
    pub tolerance: f64,
    pub max_iterations: u32,
}

impl Default for QpSettings {
    fn default() -> Self {
        QpSettings {
            tolerance: 1e-8,
            max_iterations: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    MaxIterations,
    Infeasible,
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: Vec<f64>,
    pub eq_duals: Vec<f64>,
    pub ineq_duals: Vec<f64>,
    pub objective: f64,
    pub kkt_residual: f64,
    pub status: QpStatus,
}

/// Infinity-norm KKT residual recomputed from the raw problem data.
pub fn kkt_residual(qp: &ConvexQp, sol: &QpSolution) -> f64 {
    kkt_residual_parts(qp, &sol.x, &sol.eq_duals, &sol.ineq_duals)
}

fn kkt_residual_parts(qp: &ConvexQp, x: &[f64], y: &[f64], z: &[f64]) -> f64 {
    let mut grad = qp.quadratic.matvec(x);
    for (g, &c) in grad.iter_mut().zip(&qp.linear) {
        *g += c;
    }
    if qp.num_eq() > 0 {
        for (g, v) in grad.iter_mut().zip(qp.eq_lhs.t_matvec(y)) {
            *g += v;
        }
    }
    if qp.num_ineq() > 0 {
        for (g, v) in grad.iter_mut().zip(qp.ineq_lhs.t_matvec(z)) {
            *g += v;
        }
    }
    let mut worst = norm_inf(&grad);
    if qp.num_eq() > 0 {
        let ax = qp.eq_lhs.matvec(x);
        for (a, &bi) in ax.iter().zip(&qp.eq_rhs) {
            worst = worst.max((a - bi).abs());
        }
    }
    if qp.num_ineq() > 0 {
        let gx = qp.ineq_lhs.matvec(x);
        for i in 0..qp.num_ineq() {
            let slack = qp.ineq_rhs[i] - gx[i];
            worst = worst.max((-slack).max(0.0)); // primal feasibility
            worst = worst.max((-z[i]).max(0.0)); // dual feasibility
            worst = worst.max((z[i] * slack).abs()); // complementarity
        }
    }
    worst
}

fn upper_csc(m: &SparseMat) -> clarabel::algebra::CscMatrix<f64> {
    let n = m.nrows();
    let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for i in 0..n {
        for &(j, v) in m.row_entries(i) {
            if i <= j {
                cols[j].push((i, v));
            }
        }
    }
    let mut colptr = Vec::with_capacity(n + 1);
    let mut rowval = Vec::new();
    let mut nzval = Vec::new();
    colptr.push(0);
    for col in &mut cols {
        col.sort_by_key(|&(i, _)| i);
        for &(i, v) in col.iter() {
            rowval.push(i);
            nzval.push(v);
        }
        colptr.push(rowval.len());
    }
    clarabel::algebra::CscMatrix::new(n, n, colptr, rowval, nzval)
}

fn stacked_csc(eq: &SparseMat, ineq: &SparseMat) -> clarabel::algebra::CscMatrix<f64> {
    let ncols = eq.ncols();
    let me = eq.nrows();
    let total_rows = me + ineq.nrows();
    let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); ncols];
    for i in 0..me {
        for &(j, v) in eq.row_entries(i) {
            cols[j].push((i, v));
        }
    }
    for i in 0..ineq.nrows() {
        for &(j, v) in ineq.row_entries(i) {
            cols[j].push((me + i, v));
        }
    }
    let mut colptr = Vec::with_capacity(ncols + 1);
    let mut rowval = Vec::new();
    let mut nzval = Vec::new();
    colptr.push(0);
    for col in &mut cols {
        col.sort_by_key(|&(i, _)| i);
        for &(i, v) in col.iter() {
            rowval.push(i);
            nzval.push(v);
        }
        colptr.push(rowval.len());
    }
    clarabel::algebra::CscMatrix::new(total_rows, ncols, colptr, rowval, nzval)
}

/// One active-set refinement pass: solve the equality-constrained KKT system
/// on the constraints the interior-point solution marks active, keep the
/// refined point only if it strictly reduces the residual.
fn polish(qp: &ConvexQp, x: &[f64], z: &[f64]) -> Option<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let n = qp.num_vars();
    let me = qp.num_eq();
    let gx = if qp.num_ineq() > 0 {
        qp.ineq_lhs.matvec(x)
    } else {
        Vec::new()
    };
    let mut active = Vec::new();
    for i in 0..qp.num_ineq() {
        let slack = qp.ineq_rhs[i] - gx[i];
        if slack < 1e-7 * (1.0 + qp.ineq_rhs[i].abs()) || z[i] > 1e-7 {
            active.push(i);
        }
    }
    let na = active.len();
    let dim = n + me + na;
    if dim > 1500 {
        return None; // refinement is a dense solve; skip at large scale
    }
    let mut kkt = Mat::zeros(dim, dim);
    for i in 0..n {
        for &(j, v) in qp.quadratic.row_entries(i) {
            kkt.set(i, j, v);
        }
    }
    for r in 0..me {
        for &(j, v) in qp.eq_lhs.row_entries(r) {
            kkt.set(n + r, j, v);
            kkt.set(j, n + r, v);
        }
    }
    for (k, &r) in active.iter().enumerate() {
        for &(j, v) in qp.ineq_lhs.row_entries(r) {
            kkt.set(n + me + k, j, v);
            kkt.set(j, n + me + k, v);
        }
    }
    // Tiny regularization keeps redundant active rows solvable.
    for i in n..dim {
        kkt.set(i, i, -1e-11);
    }
    let mut rhs = vec![0.0; dim];
    for i in 0..n {
        rhs[i] = -qp.linear[i];
    }
    rhs[n..n + me].copy_from_slice(&qp.eq_rhs);
    for (k, &r) in active.iter().enumerate() {
        rhs[n + me + k] = qp.ineq_rhs[r];
    }
    let sol = lu_solve(&kkt, &rhs)?;
    let px = sol[..n].to_vec();
    let py = sol[n..n + me].to_vec();
    let mut pz = vec![0.0; qp.num_ineq()];
    for (k, &r) in active.iter().enumerate() {
        pz[r] = sol[n + me + k].max(0.0);
    }
    Some((px, py, pz))
}

/// Solves the QP. The result is `Optimal` only when the independently
/// recomputed KKT residual meets `settings.tolerance`; an iteration-limited
/// or numerically stalled run returns its best iterate as `MaxIterations`.
pub fn solve_qp(qp: &ConvexQp, settings: &QpSettings) -> QpSolution {
    use clarabel::solver::{
        DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
    };

    let p = upper_csc(&qp.quadratic);
    let a = stacked_csc(&qp.eq_lhs, &qp.ineq_lhs);
    let mut b = qp.eq_rhs.clone();
    b.extend_from_slice(&qp.ineq_rhs);
    let mut cones: Vec<SupportedConeT<f64>> = Vec::new();
    if qp.num_eq() > 0 {
        cones.push(SupportedConeT::ZeroConeT(qp.num_eq()));
    }
    if qp.num_ineq() > 0 {
        cones.push(SupportedConeT::NonnegativeConeT(qp.num_ineq()));
    }
    let tight = (settings.tolerance * 1e-3).max(1e-12);
    let clarabel_settings = DefaultSettingsBuilder::default()
        .verbose(false)
        .max_iter(settings.max_iterations)
        .tol_gap_abs(tight)
        .tol_gap_rel(tight)
        .tol_feas(tight)
        .build()
        .expect("static settings");
    let mut solver = DefaultSolver::new(&p, &qp.linear, &a, &b, &cones, clarabel_settings)
        .expect("validated problem data");
    solver.solve();

    let status = solver.solution.status;
    let x = solver.solution.x.clone();
    let (y, z) = split_duals(&solver.solution.z, qp.num_eq());

    if matches!(
        status,
        SolverStatus::PrimalInfeasible
            | SolverStatus::AlmostPrimalInfeasible
            | SolverStatus::DualInfeasible
            | SolverStatus::AlmostDualInfeasible
    ) {
        // Dual infeasibility means no finite optimum; both cases surface as
        // an infeasible solve with the certificate iterate attached.
        return QpSolution {
            objective: f64::NAN,
            kkt_residual: f64::INFINITY,
            status: QpStatus::Infeasible,
            x,
            eq_duals: y,
            ineq_duals: z,
        };
    }

    let mut best_x = x;
    let mut best_y = y;
    let mut best_z = z;
    let mut best_res = kkt_residual_parts(qp, &best_x, &best_y, &best_z);
    if best_res > settings.tolerance {
        if let Some((px, py, pz)) = polish(qp, &best_x, &best_z) {
            let pres = kkt_residual_parts(qp, &px, &py, &pz);
            if pres < best_res {
                best_x = px;
                best_y = py;
                best_z = pz;
                best_res = pres;
            }
        }
    }

    let converged = matches!(status, SolverStatus::Solved | SolverStatus::AlmostSolved);
    let final_status = if converged && best_res <= settings.tolerance {
        QpStatus::Optimal
    } else {
        QpStatus::MaxIterations
    };
    QpSolution {
        objective: qp.objective_at(&best_x),
        kkt_residual: best_res,
        status: final_status,
        x: best_x,
        eq_duals: best_y,
        ineq_duals: best_z,
    }
}

fn split_duals(all: &[f64], num_eq: usize) -> (Vec<f64>, Vec<f64>) {
    (all[..num_eq].to_vec(), all[num_eq..].to_vec())
}
