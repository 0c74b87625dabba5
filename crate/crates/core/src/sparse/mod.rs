//! Compressed-row matrices, Krylov solvers with fixed summation order, and
//! exact per-cell solves for block-diagonal pressure operators.

pub mod direct;

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub use direct::{DirectSolver, LuSolver};

/// A symmetric or general linear map `y = A x`.
pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

/// Coordinate-format accumulator; duplicates are summed on finalize.
#[derive(Debug, Clone, Default)]
pub struct TripletBuilder {
    nrows: usize,
    ncols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TripletBuilder {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        TripletBuilder {
            nrows,
            ncols,
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.nrows && j < self.ncols);
        self.entries.push((i, j, v));
    }

    pub fn finalize(mut self) -> CsrMatrix {
        // stable sort keeps insertion order among duplicates, so the summation
        // order is fixed
        self.entries.sort_by_key(|&(i, j, _)| (i, j));
        let mut row_ptr = vec![0usize; self.nrows + 1];
        let mut col_idx = Vec::with_capacity(self.entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(self.entries.len());
        let mut rows = Vec::with_capacity(self.entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in self.entries {
            if last == Some((i, j)) {
                *values.last_mut().expect("entry exists") += v;
            } else {
                rows.push(i);
                col_idx.push(j);
                values.push(v);
                last = Some((i, j));
            }
        }
        let mut keep_cols = Vec::with_capacity(col_idx.len());
        let mut keep_vals = Vec::with_capacity(values.len());
        for ((i, j), v) in rows.into_iter().zip(col_idx).zip(values) {
            if v != 0.0 {
                row_ptr[i + 1] += 1;
                keep_cols.push(j);
                keep_vals.push(v);
            }
        }
        for i in 0..self.nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        CsrMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            row_ptr,
            col_idx: keep_cols,
            values: keep_vals,
        }
    }
}

impl CsrMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        CsrMatrix {
            nrows,
            ncols,
            row_ptr: vec![0; nrows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![1.0; n])
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        let mut b = TripletBuilder::new(d.len(), d.len());
        for (i, &v) in d.iter().enumerate() {
            b.push(i, i, v);
        }
        b.finalize()
    }

    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        let mut b = TripletBuilder::new(m.nrows(), m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                b.push(i, j, m[(i, j)]);
            }
        }
        b.finalize()
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()]
            .iter()
            .copied()
            .zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[r.clone()].binary_search(&j) {
            Ok(k) => self.values[r.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    /// `y = A x`, summing each row left to right.
    pub fn spmv(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        if x.len() != self.ncols {
            return Err(Error::DimensionMismatch {
                expected: self.ncols,
                got: x.len(),
            });
        }
        if y.len() != self.nrows {
            return Err(Error::DimensionMismatch {
                expected: self.nrows,
                got: y.len(),
            });
        }
        self.spmv_unchecked(x, y);
        Ok(())
    }

    fn spmv_unchecked(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.values[k] * x[self.col_idx[k]];
            }
            *yi = s;
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols, "dimension mismatch in mul_vec");
        let mut y = vec![0.0; self.nrows];
        self.spmv_unchecked(x, &mut y);
        y
    }

    /// `y = A^T x`.
    pub fn mul_transpose_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.nrows, "dimension mismatch in mul_transpose_vec");
        let mut y = vec![0.0; self.ncols];
        for (i, &xi) in x.iter().enumerate() {
            for (j, v) in self.row(i) {
                y[j] += v * xi;
            }
        }
        y
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut b = TripletBuilder::new(self.ncols, self.nrows);
        for (i, j, v) in self.triplets() {
            b.push(j, i, v);
        }
        b.finalize()
    }

    pub fn scaled(&self, a: f64) -> CsrMatrix {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= a);
        if a == 0.0 {
            return CsrMatrix::zeros(self.nrows, self.ncols);
        }
        out
    }

    /// `self + a * other`.
    pub fn add_scaled(&self, a: f64, other: &CsrMatrix) -> CsrMatrix {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let mut b = TripletBuilder::new(self.nrows, self.ncols);
        for (i, j, v) in self.triplets() {
            b.push(i, j, v);
        }
        for (i, j, v) in other.triplets() {
            b.push(i, j, a * v);
        }
        b.finalize()
    }

    /// Sparse product `self * other`.
    pub fn matmul(&self, other: &CsrMatrix) -> CsrMatrix {
        assert_eq!(self.ncols, other.nrows);
        let mut b = TripletBuilder::new(self.nrows, other.ncols);
        for i in 0..self.nrows {
            for (k, a) in self.row(i) {
                for (j, v) in other.row(k) {
                    b.push(i, j, a * v);
                }
            }
        }
        b.finalize()
    }

    /// Scales row `i` by `d[i]`.
    pub fn scale_rows(&self, d: &[f64]) -> CsrMatrix {
        assert_eq!(d.len(), self.nrows);
        let mut out = self.clone();
        for (i, &di) in d.iter().enumerate() {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                out.values[k] *= di;
            }
        }
        out
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Frobenius norm of `self - self^T`.
    pub fn asymmetry(&self) -> f64 {
        self.add_scaled(-1.0, &self.transpose()).frobenius_norm()
    }

    /// Submatrix with the given row and column index ranges.
    pub fn block(&self, rows: std::ops::Range<usize>, cols: std::ops::Range<usize>) -> CsrMatrix {
        let mut b = TripletBuilder::new(rows.len(), cols.len());
        for i in rows.clone() {
            for (j, v) in self.row(i) {
                if cols.contains(&j) {
                    b.push(i - rows.start, j - cols.start, v);
                }
            }
        }
        b.finalize()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for (i, j, v) in self.triplets() {
            m[(i, j)] += v;
        }
        m
    }

    /// One `row col value` line per stored entry.
    pub fn write_coo<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "% {} {} {}", self.nrows, self.ncols, self.nnz())?;
        for (i, j, v) in self.triplets() {
            writeln!(w, "{i} {j} {v:.17e}")?;
        }
        Ok(())
    }
}

impl LinearOperator for CsrMatrix {
    fn dim(&self) -> usize {
        self.nrows
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.spmv_unchecked(x, y);
    }
}

/// Assembles a block matrix from a grid of optional blocks.
pub fn block_matrix(blocks: &[Vec<Option<&CsrMatrix>>], row_sizes: &[usize], col_sizes: &[usize]) -> CsrMatrix {
    let row_off: Vec<usize> = prefix(row_sizes);
    let col_off: Vec<usize> = prefix(col_sizes);
    let mut b = TripletBuilder::new(row_off[row_sizes.len()], col_off[col_sizes.len()]);
    for (bi, row) in blocks.iter().enumerate() {
        for (bj, blk) in row.iter().enumerate() {
            if let Some(m) = blk {
                assert_eq!((m.nrows(), m.ncols()), (row_sizes[bi], col_sizes[bj]));
                for (i, j, v) in m.triplets() {
                    b.push(row_off[bi] + i, col_off[bj] + j, v);
                }
            }
        }
    }
    b.finalize()
}

fn prefix(sizes: &[usize]) -> Vec<usize> {
    let mut off = vec![0; sizes.len() + 1];
    for (i, s) in sizes.iter().enumerate() {
        off[i + 1] = off[i] + s;
    }
    off
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += a * xi);
}

/// Identity preconditioner.
pub struct Identity(pub usize);

impl LinearOperator for Identity {
    fn dim(&self) -> usize {
        self.0
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.copy_from_slice(x);
    }
}

/// Diagonal scaling `y = d .* x`.
pub struct Diagonal(pub Vec<f64>);

impl LinearOperator for Diagonal {
    fn dim(&self) -> usize {
        self.0.len()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for ((yi, xi), di) in y.iter_mut().zip(x).zip(&self.0) {
            *yi = di * xi;
        }
    }
}

#[derive(Debug, Clone)]
pub struct CgResult {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// `||b - A x|| / ||b||` from the recurrence.
    pub relative_residual: f64,
}

/// Preconditioned conjugate gradients with zero initial guess; `m` applies
/// the inverse of the preconditioner.
pub fn cg<A, M>(a: &A, b: &[f64], m: &M, rel_tol: f64, max_iter: usize) -> Result<CgResult>
where
    A: LinearOperator + ?Sized,
    M: LinearOperator + ?Sized,
{
    cg_observed(a, b, m, rel_tol, max_iter, |_, _| {})
}

/// [`cg`] that hands every iterate to `observe`.
pub fn cg_observed<A, M, F>(
    a: &A,
    b: &[f64],
    m: &M,
    rel_tol: f64,
    max_iter: usize,
    mut observe: F,
) -> Result<CgResult>
where
    A: LinearOperator + ?Sized,
    M: LinearOperator + ?Sized,
    F: FnMut(usize, &[f64]),
{
    let n = a.dim();
    if b.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: b.len() });
    }
    let mut x = vec![0.0; n];
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        return Ok(CgResult { x, iterations: 0, relative_residual: 0.0 });
    }
    let mut r = b.to_vec();
    let mut z = vec![0.0; n];
    m.apply(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for it in 1..=max_iter {
        a.apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::Breakdown { solver: "cg", iteration: it });
        }
        let alpha = rz / pap;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        observe(it, &x);
        let res = norm2(&r) / bnorm;
        if res <= rel_tol {
            return Ok(CgResult { x, iterations: it, relative_residual: res });
        }
        m.apply(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
    }
    Err(Error::NotConverged {
        solver: "cg",
        iterations: max_iter,
        residual: norm2(&r) / bnorm,
    })
}

#[derive(Debug, Clone)]
pub struct MinresReport {
    pub iterations: usize,
    /// `sqrt(r' P r)` for every iterate, starting with the initial residual.
    pub history: Vec<f64>,
    pub converged: bool,
}

impl MinresReport {
    pub fn final_ratio(&self) -> f64 {
        match (self.history.first(), self.history.last()) {
            (Some(&h0), Some(&hk)) if h0 > 0.0 => hk / h0,
            _ => 0.0,
        }
    }
}

/// Preconditioned MinRes with zero initial guess. `p` applies the SPD
/// preconditioner; iteration stops once `sqrt(r' P r)` has dropped by
/// `reduction` relative to its initial value.
pub fn minres<A, P>(
    a: &A,
    b: &[f64],
    p: &P,
    reduction: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, MinresReport)>
where
    A: LinearOperator + ?Sized,
    P: LinearOperator + ?Sized,
{
    let n = a.dim();
    if b.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: b.len() });
    }
    let mut x = vec![0.0; n];
    let mut v_old = vec![0.0; n];
    let mut v = b.to_vec();
    let mut z = vec![0.0; n];
    p.apply(&v, &mut z);
    let g2 = dot(&z, &v);
    if g2 < 0.0 {
        return Err(Error::Breakdown { solver: "minres", iteration: 0 });
    }
    let mut gamma = g2.sqrt();
    let mut history = vec![gamma];
    if gamma == 0.0 {
        return Ok((x, MinresReport { iterations: 0, history, converged: true }));
    }
    let target = gamma / reduction;
    let mut gamma_old = 1.0;
    let mut eta = gamma;
    let (mut s_old, mut s, mut c_old, mut c) = (0.0, 0.0, 1.0, 1.0);
    let mut w_old = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut az = vec![0.0; n];
    let mut v_new = vec![0.0; n];
    let mut z_new = vec![0.0; n];
    for it in 1..=max_iter {
        z.iter_mut().for_each(|zi| *zi /= gamma);
        a.apply(&z, &mut az);
        let delta = dot(&az, &z);
        for i in 0..n {
            v_new[i] = az[i] - (delta / gamma) * v[i] - (gamma / gamma_old) * v_old[i];
        }
        p.apply(&v_new, &mut z_new);
        let g2 = dot(&z_new, &v_new);
        if g2 < -1e-14 * gamma * gamma {
            return Err(Error::Breakdown { solver: "minres", iteration: it });
        }
        let gamma_new = g2.max(0.0).sqrt();
        let a0 = c * delta - c_old * s * gamma;
        let a1 = a0.hypot(gamma_new);
        if a1 == 0.0 {
            return Err(Error::Breakdown { solver: "minres", iteration: it });
        }
        let a2 = s * delta + c_old * c * gamma;
        let a3 = s_old * gamma;
        let c_new = a0 / a1;
        let s_new = gamma_new / a1;
        for i in 0..n {
            let wn = (z[i] - a3 * w_old[i] - a2 * w[i]) / a1;
            w_old[i] = w[i];
            w[i] = wn;
            x[i] += c_new * eta * wn;
        }
        eta = -s_new * eta;
        history.push(eta.abs());
        if eta.abs() <= target || gamma_new == 0.0 {
            return Ok((x, MinresReport { iterations: it, history, converged: true }));
        }
        std::mem::swap(&mut v_old, &mut v);
        std::mem::swap(&mut v, &mut v_new);
        std::mem::swap(&mut z, &mut z_new);
        gamma_old = gamma;
        gamma = gamma_new;
        c_old = c;
        c = c_new;
        s_old = s;
        s = s_new;
    }
    let residual = history.last().copied().unwrap_or(0.0) / history[0];
    Err(Error::NotConverged { solver: "minres", iterations: max_iter, residual })
}

/// Cholesky factor of a small dense SPD matrix with a relative pivot floor,
/// so that numerically singular matrices are reported as such.
pub fn spd_cholesky(m: &DMatrix<f64>) -> Option<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    let scale = m.diagonal().iter().fold(0.0f64, |a, &d| a.max(d.abs()));
    if scale == 0.0 || (m - m.transpose()).norm() > 1e-14 * scale * m.nrows() as f64 {
        return None;
    }
    let ch = m.clone().cholesky()?;
    let l = ch.l_dirty();
    let floor = 1e-12 * scale;
    if (0..m.nrows()).all(|i| l[(i, i)] * l[(i, i)] > floor) {
        Some(ch)
    } else {
        None
    }
}

/// Exact solver for `(M kron diag(areas)) x = r`, where unknowns are stored
/// network-major (`x[i * cells + c]`).
#[derive(Debug, Clone)]
pub struct CellBlockSolver {
    m: DMatrix<f64>,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    areas: Vec<f64>,
}

impl CellBlockSolver {
    pub fn new(m: &DMatrix<f64>, areas: &[f64]) -> Result<Self> {
        let chol = spd_cholesky(m).ok_or_else(|| {
            Error::NotSpd(format!("{}x{} cell block", m.nrows(), m.ncols()))
        })?;
        Ok(CellBlockSolver { m: m.clone(), chol, areas: areas.to_vec() })
    }

    pub fn n(&self) -> usize {
        self.m.nrows()
    }

    fn check(&self, len: usize) -> Result<()> {
        let want = self.n() * self.areas.len();
        if len != want {
            return Err(Error::DimensionMismatch { expected: want, got: len });
        }
        Ok(())
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        self.check(rhs.len())?;
        let (n, nc) = (self.n(), self.areas.len());
        let mut out = vec![0.0; rhs.len()];
        let mut buf = DVector::zeros(n);
        for c in 0..nc {
            for i in 0..n {
                buf[i] = rhs[i * nc + c] / self.areas[c];
            }
            self.chol.solve_mut(&mut buf);
            for i in 0..n {
                out[i * nc + c] = buf[i];
            }
        }
        Ok(out)
    }

    pub fn multiply(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check(x.len())?;
        let (n, nc) = (self.n(), self.areas.len());
        let mut out = vec![0.0; x.len()];
        for c in 0..nc {
            for i in 0..n {
                let mut s = 0.0;
                for j in 0..n {
                    s += self.m[(i, j)] * x[j * nc + c];
                }
                out[i * nc + c] = s * self.areas[c];
            }
        }
        Ok(out)
    }
}

impl LinearOperator for CellBlockSolver {
    fn dim(&self) -> usize {
        self.n() * self.areas.len()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let z = self.solve(x).expect("dimension checked by caller");
        y.copy_from_slice(&z);
    }
}

/// Solves `(M kron diag(areas)) x = rhs` cell by cell.
pub fn cell_block_solve(m: &DMatrix<f64>, areas: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    CellBlockSolver::new(m, areas)?.solve(rhs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_sparse(n: usize, density: f64, seed: u64) -> CsrMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut b = TripletBuilder::new(n, n);
        for i in 0..n {
            for j in 0..n {
                if rng.random::<f64>() < density {
                    b.push(i, j, rng.random_range(-1.0..1.0));
                }
            }
        }
        b.finalize()
    }

    fn laplace_1d(n: usize) -> CsrMatrix {
        let mut b = TripletBuilder::new(n, n);
        for i in 0..n {
            b.push(i, i, 2.0);
            if i > 0 {
                b.push(i, i - 1, -1.0);
            }
            if i + 1 < n {
                b.push(i, i + 1, -1.0);
            }
        }
        b.finalize()
    }

    #[test]
    fn identity_spmv() {
        let x = [1.0, -2.0, 3.5];
        assert_eq!(CsrMatrix::identity(3).mul_vec(&x), x.to_vec());
    }

    #[test]
    fn small_spmv() {
        let a = CsrMatrix::from_dense(&DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]));
        assert_eq!(a.mul_vec(&[1.0, 1.0]), vec![3.0, 4.0]);
    }

    #[test]
    fn spmv_matches_dense_multiply() {
        let a = random_sparse(50, 0.2, 7);
        let d = a.to_dense();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f64> = (0..50).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y = a.mul_vec(&x);
        let yd = &d * DVector::from_column_slice(&x);
        for i in 0..50 {
            assert!((y[i] - yd[i]).abs() < 1e-14);
        }
        let yt = a.mul_transpose_vec(&x);
        let ytd = d.transpose() * DVector::from_column_slice(&x);
        for i in 0..50 {
            assert!((yt[i] - ytd[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn spmv_rejects_bad_dimensions() {
        let a = CsrMatrix::identity(3);
        let mut y = vec![0.0; 3];
        assert!(matches!(
            a.spmv(&[1.0, 2.0], &mut y),
            Err(Error::DimensionMismatch { expected: 3, got: 2 })
        ));
    }

    #[test]
    fn builder_sums_duplicates_and_drops_zeros() {
        let mut b = TripletBuilder::new(2, 2);
        b.push(0, 1, 1.0);
        b.push(0, 1, 2.0);
        b.push(1, 0, 1.0);
        b.push(1, 0, -1.0);
        let a = b.finalize();
        assert_eq!(a.nnz(), 1);
        assert_eq!(a.get(0, 1), 3.0);
        assert_eq!(a.get(1, 0), 0.0);
    }

    #[test]
    fn matmul_and_block_match_dense() {
        let a = random_sparse(12, 0.3, 1);
        let b = random_sparse(12, 0.3, 2);
        let ab = a.matmul(&b).to_dense();
        assert!((ab - a.to_dense() * b.to_dense()).norm() < 1e-13);
        let blk = a.block(2..7, 3..12).to_dense();
        assert!((blk - a.to_dense().view((2, 3), (5, 9))).norm() == 0.0);
    }

    #[test]
    fn cg_zero_rhs() {
        let a = laplace_1d(5);
        let r = cg(&a, &[0.0; 5], &Identity(5), 1e-12, 10).unwrap();
        assert_eq!(r.iterations, 0);
        assert!(r.x.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn cg_diagonal_with_jacobi() {
        let d: Vec<f64> = (1..=10).map(f64::from).collect();
        let a = CsrMatrix::from_diagonal(&d);
        let jac = Diagonal(d.iter().map(|v| 1.0 / v).collect());
        let b = vec![1.0; 10];
        let r = cg(&a, &b, &jac, 1e-12, 10).unwrap();
        assert!(r.iterations <= 10);
        for (i, xi) in r.x.iter().enumerate() {
            assert!((xi - 1.0 / d[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn cg_error_decreases_in_energy_norm() {
        let n = 30;
        let a = laplace_1d(n);
        let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let exact = a.to_dense().lu().solve(&DVector::from_column_slice(&b)).unwrap();
        let mut errors = Vec::new();
        cg_observed(&a, &b, &Identity(n), 1e-13, 2 * n, |_, x| {
            let e: Vec<f64> = x.iter().zip(exact.iter()).map(|(a, b)| a - b).collect();
            errors.push(dot(&e, &a.mul_vec(&e)));
        })
        .unwrap();
        assert!(errors.len() > 5);
        assert!(errors.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12) + 1e-28));
    }

    #[test]
    fn cg_reports_non_convergence() {
        let a = laplace_1d(50);
        let b = vec![1.0; 50];
        assert!(matches!(
            cg(&a, &b, &Identity(50), 1e-14, 3),
            Err(Error::NotConverged { solver: "cg", iterations: 3, .. })
        ));
    }

    #[test]
    fn minres_zero_rhs() {
        let a = CsrMatrix::identity(4);
        let (x, rep) = minres(&a, &[0.0; 4], &Identity(4), 1e8, 10).unwrap();
        assert_eq!(rep.iterations, 0);
        assert!(x.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn minres_two_eigenvalues() {
        let a = CsrMatrix::from_diagonal(&[1.0, -1.0]);
        let (x, rep) = minres(&a, &[3.0, 5.0], &Identity(2), 1e8, 10).unwrap();
        assert!(rep.iterations <= 2);
        assert!((x[0] - 3.0).abs() < 1e-12 && (x[1] + 5.0).abs() < 1e-12);
    }

    #[test]
    fn minres_saddle_point_toy() {
        let d = DMatrix::from_row_slice(3, 3, &[2.0, 0.5, 1.0, 0.5, 1.0, -1.0, 1.0, -1.0, 0.0]);
        let a = CsrMatrix::from_dense(&d);
        let b = [1.0, 2.0, 3.0];
        let (x, rep) = minres(&a, &b, &Identity(3), 1e12, 20).unwrap();
        let exact = d.lu().solve(&DVector::from_column_slice(&b)).unwrap();
        for i in 0..3 {
            assert!((x[i] - exact[i]).abs() < 1e-10);
        }
        assert!(rep.history.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
    }

    #[test]
    fn minres_preconditioned_history_is_monotone() {
        // indefinite block system with a diagonal SPD preconditioner
        let n = 40;
        let k = laplace_1d(n);
        let mut b = TripletBuilder::new(2 * n, 2 * n);
        for (i, j, v) in k.triplets() {
            b.push(i, j, v);
        }
        for i in 0..n {
            b.push(i, n + i, 1.0);
            b.push(n + i, i, 1.0);
            b.push(n + i, n + i, -0.1);
        }
        let a = b.finalize();
        let prec = Diagonal((0..2 * n).map(|i| if i < n { 0.5 } else { 2.0 }).collect());
        let rhs: Vec<f64> = (0..2 * n).map(|i| ((i * 7) % 5) as f64 - 2.0).collect();
        let (x, rep) = minres(&a, &rhs, &prec, 1e10, 500).unwrap();
        assert!(rep.history.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
        // the tracked norm equals sqrt(r' P r) of the true residual
        let ax = a.mul_vec(&x);
        let r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let mut pr = vec![0.0; 2 * n];
        prec.apply(&r, &mut pr);
        let true_norm = dot(&r, &pr).sqrt();
        let tracked = *rep.history.last().unwrap();
        assert!((true_norm - tracked).abs() <= 1e-6 * rep.history[0]);
    }

    #[test]
    fn minres_tracks_cg_on_well_conditioned_spd() {
        let n = 60;
        let d: Vec<f64> = (0..n).map(|i| 1.0 + 0.5 * i as f64 / n as f64).collect();
        let mut b = TripletBuilder::new(n, n);
        for i in 0..n {
            b.push(i, i, d[i]);
            if i + 1 < n {
                b.push(i, i + 1, 0.05);
                b.push(i + 1, i, 0.05);
            }
        }
        let a = b.finalize();
        let rhs: Vec<f64> = (0..n).map(|i| (i as f64).cos()).collect();
        let bn = norm2(&rhs);
        let (_, rep) = minres(&a, &rhs, &Identity(n), 1e10, 100).unwrap();
        // plain CG residual norms, iteration by iteration
        let mut x = vec![0.0; n];
        let mut r = rhs.clone();
        let mut p = r.clone();
        for k in 1..rep.iterations {
            let ap = a.mul_vec(&p);
            let rr = dot(&r, &r);
            let alpha = rr / dot(&p, &ap);
            axpy(alpha, &p, &mut x);
            axpy(-alpha, &ap, &mut r);
            let beta = dot(&r, &r) / rr;
            for (pi, ri) in p.iter_mut().zip(&r) {
                *pi = ri + beta * *pi;
            }
            let cg_res = norm2(&r) / bn;
            let mr_res = rep.history[k] / rep.history[0];
            assert!(cg_res <= 1.1 * mr_res && mr_res <= cg_res * (1.0 + 1e-9), "step {k}");
        }
    }

    #[test]
    fn minres_reports_non_convergence() {
        let a = laplace_1d(50);
        assert!(matches!(
            minres(&a, &[1.0; 50], &Identity(50), 1e12, 3),
            Err(Error::NotConverged { solver: "minres", .. })
        ));
    }

    #[test]
    fn cell_block_identity() {
        let areas = [0.5, 0.25];
        let m = DMatrix::identity(2, 2);
        let rhs = [1.0, 2.0, 3.0, 4.0];
        let x = cell_block_solve(&m, &areas, &rhs).unwrap();
        assert_eq!(x, vec![2.0, 8.0, 6.0, 16.0]);
    }

    #[test]
    fn cell_block_rejects_singular() {
        let m = DMatrix::from_element(2, 2, 0.3);
        assert!(matches!(cell_block_solve(&m, &[1.0], &[1.0, 1.0]), Err(Error::NotSpd(_))));
    }

    proptest! {
        #[test]
        fn cell_block_two_by_two_matches_adjugate(
            a in 0.1f64..10.0, d in 0.1f64..10.0, t in -0.9f64..0.9,
            r0 in -5.0f64..5.0, r1 in -5.0f64..5.0,
        ) {
            let b = t * (a * d).sqrt();
            let m = DMatrix::from_row_slice(2, 2, &[a, b, b, d]);
            let x = cell_block_solve(&m, &[1.0], &[r0, r1]).unwrap();
            let det = a * d - b * b;
            let exact = [(d * r0 - b * r1) / det, (-b * r0 + a * r1) / det];
            prop_assert!((x[0] - exact[0]).abs() <= 1e-10 * (1.0 + exact[0].abs()));
            prop_assert!((x[1] - exact[1]).abs() <= 1e-10 * (1.0 + exact[1].abs()));
        }
    }
}
