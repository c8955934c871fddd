//! Minimal dense row-major matrix support for the QP builders and solver glue.

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    nrows: usize,
    ncols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Mat {
            nrows,
            ncols,
            data: vec![0.0; nrows * ncols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == ncols), "ragged rows");
        let mut data = Vec::with_capacity(nrows * ncols);
        for r in rows {
            data.extend_from_slice(r);
        }
        Mat { nrows, ncols, data }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.ncols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.ncols + j] = v;
    }

    #[inline]
    pub fn add_to(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.ncols + j] += v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.ncols..(i + 1) * self.ncols]
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols);
        (0..self.nrows).map(|i| dot(self.row(i), x)).collect()
    }

    /// `self^T * x`.
    pub fn t_matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.nrows);
        let mut out = vec![0.0; self.ncols];
        for i in 0..self.nrows {
            let xi = x[i];
            if xi != 0.0 {
                for (o, &a) in out.iter_mut().zip(self.row(i)) {
                    *o += xi * a;
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> Mat {
        let mut t = Mat::zeros(self.ncols, self.nrows);
        for i in 0..self.nrows {
            for j in 0..self.ncols {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    pub fn max_abs_asymmetry(&self) -> f64 {
        assert_eq!(self.nrows, self.ncols);
        let mut worst: f64 = 0.0;
        for i in 0..self.nrows {
            for j in (i + 1)..self.ncols {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn max_abs_diag(&self) -> f64 {
        (0..self.nrows.min(self.ncols)).fold(0.0f64, |m, i| m.max(self.get(i, i).abs()))
    }

    /// Adds `shift` to every diagonal entry.
    pub fn shift_diag(&mut self, shift: f64) {
        for i in 0..self.nrows.min(self.ncols) {
            self.add_to(i, i, shift);
        }
    }
}

/// Row-sparse matrix: each row holds `(column, value)` pairs sorted by column.
/// QP constraint blocks are a few entries per row, so this is the storage the
/// solver glue and the residual checks work from.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMat {
    nrows: usize,
    ncols: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

impl SparseMat {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        SparseMat {
            nrows,
            ncols,
            rows: vec![Vec::new(); nrows],
        }
    }

    pub fn from_dense(m: &Mat) -> Self {
        let mut s = SparseMat::zeros(m.nrows(), m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                let v = m.get(i, j);
                if v != 0.0 {
                    s.rows[i].push((j, v));
                }
            }
        }
        s
    }

    /// Builds from per-row entry lists; entries are sorted and must not repeat columns.
    pub fn from_row_entries(nrows: usize, ncols: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        assert_eq!(rows.len(), nrows);
        let mut rows = rows;
        for r in &mut rows {
            r.sort_by_key(|&(j, _)| j);
            debug_assert!(r.iter().all(|&(j, _)| j < ncols));
            debug_assert!(r.windows(2).all(|w| w[0].0 != w[1].0));
        }
        SparseMat { nrows, ncols, rows }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn row_entries(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rows[i]
            .binary_search_by_key(&j, |&(c, _)| c)
            .map_or(0.0, |k| self.rows[i][k].1)
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols);
        self.rows
            .iter()
            .map(|r| r.iter().map(|&(j, v)| v * x[j]).sum())
            .collect()
    }

    pub fn t_matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.nrows);
        let mut out = vec![0.0; self.ncols];
        for (i, r) in self.rows.iter().enumerate() {
            let xi = x[i];
            if xi != 0.0 {
                for &(j, v) in r {
                    out[j] += xi * v;
                }
            }
        }
        out
    }

    pub fn to_dense(&self) -> Mat {
        let mut m = Mat::zeros(self.nrows, self.ncols);
        for (i, r) in self.rows.iter().enumerate() {
            for &(j, v) in r {
                m.set(i, j, v);
            }
        }
        m
    }

    pub fn max_abs_asymmetry(&self) -> f64 {
        assert_eq!(self.nrows, self.ncols);
        let mut worst: f64 = 0.0;
        for (i, r) in self.rows.iter().enumerate() {
            for &(j, v) in r {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn max_abs_diag(&self) -> f64 {
        (0..self.nrows.min(self.ncols)).fold(0.0f64, |m, i| m.max(self.get(i, i).abs()))
    }

    pub fn min_diag(&self) -> f64 {
        (0..self.nrows.min(self.ncols)).fold(f64::INFINITY, |m, i| m.min(self.get(i, i)))
    }

    /// Column indices carrying at least one off-diagonal entry.
    pub fn coupled_columns(&self) -> Vec<usize> {
        let mut coupled = vec![false; self.ncols];
        for (i, r) in self.rows.iter().enumerate() {
            for &(j, v) in r {
                if i != j && v != 0.0 {
                    coupled[i] = true;
                    coupled[j] = true;
                }
            }
        }
        (0..self.ncols).filter(|&j| coupled[j]).collect()
    }

    /// Dense principal submatrix on the given (sorted) index set.
    pub fn principal_submatrix(&self, idx: &[usize]) -> Mat {
        let mut pos = vec![usize::MAX; self.ncols];
        for (k, &j) in idx.iter().enumerate() {
            pos[j] = k;
        }
        let mut m = Mat::zeros(idx.len(), idx.len());
        for &i in idx {
            for &(j, v) in &self.rows[i] {
                if pos[j] != usize::MAX {
                    m.set(pos[i], pos[j], v);
                }
            }
        }
        m
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

pub fn norm2_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// Cholesky factorization attempt of a symmetric matrix. Returns `None` when a
/// pivot is not strictly positive, i.e. the matrix is not positive definite.
pub fn cholesky(m: &Mat) -> Option<Mat> {
    assert_eq!(m.nrows, m.ncols);
    let n = m.nrows;
    let mut l = Mat::zeros(n, n);
    for j in 0..n {
        let mut d = m.get(j, j);
        for k in 0..j {
            d -= l.get(j, k) * l.get(j, k);
        }
        if d <= 0.0 || !d.is_finite() {
            return None;
        }
        let dj = d.sqrt();
        l.set(j, j, dj);
        for i in (j + 1)..n {
            let mut s = m.get(i, j);
            for k in 0..j {
                s -= l.get(i, k) * l.get(j, k);
            }
            l.set(i, j, s / dj);
        }
    }
    Some(l)
}

/// Smallest shift from `candidates` (ascending) that makes `m + shift*I`
/// pass a Cholesky attempt; `None` when even the largest fails.
pub fn psd_shift(m: &Mat, candidates: &[f64]) -> Option<f64> {
    for &s in candidates {
        let mut shifted = m.clone();
        shifted.shift_diag(s);
        if cholesky(&shifted).is_some() {
            return Some(s);
        }
    }
    None
}

/// Solves `a x = b` by LU with partial pivoting. Returns `None` on singularity.
pub fn lu_solve(a: &Mat, b: &[f64]) -> Option<Vec<f64>> {
    assert_eq!(a.nrows, a.ncols);
    assert_eq!(a.nrows, b.len());
    let n = a.nrows;
    let mut m = a.data.clone();
    let mut x = b.to_vec();
    for col in 0..n {
        let mut piv = col;
        let mut best = m[col * n + col].abs();
        for r in (col + 1)..n {
            let v = m[r * n + col].abs();
            if v > best {
                best = v;
                piv = r;
            }
        }
        if best < 1e-300 {
            return None;
        }
        if piv != col {
            for j in 0..n {
                m.swap(col * n + j, piv * n + j);
            }
            x.swap(col, piv);
        }
        let d = m[col * n + col];
        for r in (col + 1)..n {
            let f = m[r * n + col] / d;
            if f != 0.0 {
                m[r * n + col] = 0.0;
                for j in (col + 1)..n {
                    m[r * n + j] -= f * m[col * n + j];
                }
                x[r] -= f * x[col];
            }
        }
    }
    for r in (0..n).rev() {
        let mut s = x[r];
        for j in (r + 1)..n {
            s -= m[r * n + j] * x[j];
        }
        x[r] = s / m[r * n + r];
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matvec_and_transpose_agree() {
        let m = Mat::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]);
        assert_eq!(m.matvec(&[1.0, 1.0, 1.0]), vec![6.0, 15.0]);
        assert_eq!(m.t_matvec(&[1.0, 1.0]), m.transpose().matvec(&[1.0, 1.0]));
    }

    #[test]
    fn cholesky_detects_indefinite() {
        let pd = Mat::from_rows(&[vec![4.0, 1.0], vec![1.0, 3.0]]);
        assert!(cholesky(&pd).is_some());
        let indef = Mat::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]);
        assert!(cholesky(&indef).is_none());
    }

    #[test]
    fn lu_solves_small_system() {
        let a = Mat::from_rows(&[vec![2.0, 1.0], vec![1.0, 3.0]]);
        let x = lu_solve(&a, &[3.0, 5.0]).unwrap();
        assert!((x[0] - 0.8).abs() < 1e-12);
        assert!((x[1] - 1.4).abs() < 1e-12);
    }
}
