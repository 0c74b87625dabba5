//! Sparse direct factorizations behind the inner-solve interface, with
//! iterative refinement against the original matrix.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Llt, Lu};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::{MatMut, Side};

use super::{norm2, CsrMatrix, LinearOperator};
use crate::error::{Error, Result};

/// Relative residual at which refinement stops.
pub const INNER_TOL: f64 = 1e-12;
const MAX_REFINEMENT: usize = 6;

enum Factor {
    Llt(Llt<usize, f64>),
    Lu(Lu<usize, f64>),
}

impl Factor {
    fn solve_in_place(&self, x: &mut [f64]) {
        let n = x.len();
        let rhs = MatMut::from_column_major_slice_mut(x, n, 1);
        match self {
            Factor::Llt(f) => f.solve_in_place(rhs),
            Factor::Lu(f) => f.solve_in_place(rhs),
        }
    }
}

struct Refined {
    a: CsrMatrix,
    factor: Factor,
}

impl Refined {
    fn new(a: &CsrMatrix, spd: bool) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::DimensionMismatch { expected: a.nrows(), got: a.ncols() });
        }
        let n = a.nrows();
        // a symmetric CSR matrix is its own CSC representation; for LU the
        // CSC view of the transpose is the CSR data, so transpose first
        let stored = if spd { a.clone() } else { a.transpose() };
        let symbolic =
            SymbolicSparseColMatRef::new_checked(n, n, stored.row_ptr(), None, stored.col_idx());
        let mat = SparseColMatRef::new(symbolic, stored.values());
        let factor = if spd {
            Factor::Llt(
                mat.sp_cholesky(Side::Lower)
                    .map_err(|e| Error::Factorization(format!("cholesky: {e:?}")))?,
            )
        } else {
            Factor::Lu(mat.sp_lu().map_err(|e| Error::Factorization(format!("lu: {e:?}")))?)
        };
        Ok(Refined { a: a.clone(), factor })
    }

    /// Solves and refines; returns the solution and final relative residual.
    fn solve(&self, b: &[f64], tol: f64) -> (Vec<f64>, f64) {
        let bn = norm2(b);
        if bn == 0.0 {
            return (vec![0.0; b.len()], 0.0);
        }
        let mut x = b.to_vec();
        self.factor.solve_in_place(&mut x);
        let mut best = f64::INFINITY;
        for _ in 0..MAX_REFINEMENT {
            let ax = self.a.mul_vec(&x);
            let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
            let res = norm2(&r) / bn;
            // stop at the tolerance or once refinement no longer helps
            if res <= tol || res > 0.5 * best {
                return (x, res.min(best));
            }
            best = res;
            self.factor.solve_in_place(&mut r);
            x.iter_mut().zip(&r).for_each(|(xi, ri)| *xi += ri);
        }
        let ax = self.a.mul_vec(&x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
        (x, norm2(&r) / bn)
    }
}

/// Sparse Cholesky for symmetric positive definite matrices.
pub struct DirectSolver(Refined);

impl DirectSolver {
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        Ok(DirectSolver(Refined::new(a, true)?))
    }

    pub fn dim(&self) -> usize {
        self.0.a.nrows()
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.0.solve(b, INNER_TOL).0
    }

    /// Solution together with its relative residual.
    pub fn solve_with_residual(&self, b: &[f64], tol: f64) -> (Vec<f64>, f64) {
        self.0.solve(b, tol)
    }
}

impl LinearOperator for DirectSolver {
    fn dim(&self) -> usize {
        self.dim()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.copy_from_slice(&self.solve(x));
    }
}

/// Sparse LU with partial pivoting for general (e.g. indefinite) matrices.
pub struct LuSolver(Refined);

impl LuSolver {
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        Ok(LuSolver(Refined::new(a, false)?))
    }

    pub fn solve_with_residual(&self, b: &[f64], tol: f64) -> (Vec<f64>, f64) {
        self.0.solve(b, tol)
    }
}
