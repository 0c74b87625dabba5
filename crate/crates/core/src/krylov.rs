//! Norm-equivalent block-diagonal preconditioner and the preconditioned
//! MinRes driver for the monolithic system.
//!
//! With `Lambda = Lambda_1 + .. + Lambda_4` the blocks are
//! `B_u = A_uu`, `B_v = blockdiag(R_i^{-1} M) + G' (Lambda^{-1} kron A^{-1}) G`
//! (`G` the cellwise flux map, `A` the cell areas) and
//! `B_p = Lambda kron A`. The preconditioner applies their inverses.

use std::time::Instant;

use nalgebra::DMatrix;

use crate::assembly::{assemble_pressure_block, BlockSystem, BlockVector, DofLayout};
use crate::error::{Error, Result};
use crate::model::RescaledModel;
use crate::report::{IterReport, SolverKind};
use crate::sparse::direct::DirectSolver;
use crate::sparse::{dot, minres, CellBlockSolver, CsrMatrix, LinearOperator};

pub const DEFAULT_REDUCTION: f64 = 1e8;
pub const DEFAULT_MAX_ITER: usize = 500;

pub struct BlockPreconditioner {
    layout: DofLayout,
    bu_mat: CsrMatrix,
    bv_mat: CsrMatrix,
    bu: DirectSolver,
    bv: DirectSolver,
    bp: CellBlockSolver,
}

/// `B_v` as an explicit sparse matrix.
pub fn assemble_bv(sys: &BlockSystem, lambda: &DMatrix<f64>) -> Result<CsrMatrix> {
    let inv = crate::sparse::spd_cholesky(lambda)
        .ok_or_else(|| Error::NotSpd("preconditioner coupling matrix".into()))?
        .inverse();
    let inv_areas: Vec<f64> = sys.areas.iter().map(|a| 1.0 / a).collect();
    let mid = assemble_pressure_block(&inv_areas, &inv)?;
    let g = sys.b_v();
    let gd = g.transpose().matmul(&mid.matmul(&g));
    Ok(sys.m_v_block().add_scaled(1.0, &gd))
}

impl BlockPreconditioner {
    /// Preconditioner built from an arbitrary SPD coupling matrix.
    pub fn new(sys: &BlockSystem, lambda: &DMatrix<f64>) -> Result<Self> {
        if lambda.nrows() != sys.networks() || lambda.ncols() != sys.networks() {
            return Err(Error::DimensionMismatch { expected: sys.networks(), got: lambda.nrows() });
        }
        let bv_mat = assemble_bv(sys, lambda)?;
        Ok(BlockPreconditioner {
            layout: sys.layout.clone(),
            bu: DirectSolver::new(&sys.a_uu)?,
            bv: DirectSolver::new(&bv_mat)?,
            bp: CellBlockSolver::new(lambda, &sys.areas)?,
            bu_mat: sys.a_uu.clone(),
            bv_mat,
        })
    }

    pub fn from_model(sys: &BlockSystem, m: &RescaledModel) -> Result<Self> {
        Self::new(sys, &m.lambda_total)
    }

    pub fn layout(&self) -> &DofLayout {
        &self.layout
    }

    pub fn bv_matrix(&self) -> &CsrMatrix {
        &self.bv_mat
    }

    /// `z = B^{-1} r` blockwise.
    pub fn apply(&self, r: &[f64]) -> Result<Vec<f64>> {
        let l = &self.layout;
        if r.len() != l.total() {
            return Err(Error::DimensionMismatch { expected: l.total(), got: r.len() });
        }
        let mut z = Vec::with_capacity(r.len());
        z.extend(self.bu.solve(&r[l.u()]));
        z.extend(self.bv.solve(&r[l.v()]));
        z.extend(self.bp.solve(&r[l.p()])?);
        Ok(z)
    }

    /// `B x`, the inverse of [`apply`](Self::apply).
    pub fn multiply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let l = &self.layout;
        if x.len() != l.total() {
            return Err(Error::DimensionMismatch { expected: l.total(), got: x.len() });
        }
        let mut y = Vec::with_capacity(x.len());
        y.extend(self.bu_mat.mul_vec(&x[l.u()]));
        y.extend(self.bv_mat.mul_vec(&x[l.v()]));
        y.extend(self.bp.multiply(&x[l.p()])?);
        Ok(y)
    }

    /// `sqrt(r' B^{-1} r)`.
    pub fn dual_norm(&self, r: &[f64]) -> Result<f64> {
        let z = self.apply(r)?;
        Ok(dot(r, &z).max(0.0).sqrt())
    }
}

impl LinearOperator for BlockPreconditioner {
    fn dim(&self) -> usize {
        self.layout.total()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let z = BlockPreconditioner::apply(self, x).expect("dimension checked by caller");
        y.copy_from_slice(&z);
    }
}

/// Residual `b - A x` measured in the preconditioner-induced norm.
pub fn residual_bnorm(sys: &BlockSystem, p: &BlockPreconditioner, x: &[f64]) -> Result<f64> {
    if x.len() != sys.layout.total() {
        return Err(Error::DimensionMismatch { expected: sys.layout.total(), got: x.len() });
    }
    p.dual_norm(&sys.residual(x))
}

/// Preconditioned MinRes from a zero initial guess. Non-convergence within
/// `max_iter` is reported through `converged` rather than as an error.
pub fn minres_mpet(
    sys: &BlockSystem,
    p: &BlockPreconditioner,
    reduction: f64,
    max_iter: usize,
) -> Result<(BlockVector, IterReport)> {
    let start = Instant::now();
    let a = sys.monolithic();
    let b = sys.rhs();
    let mut report = IterReport::new(SolverKind::Minres);
    let x = match minres(a, &b, p, reduction, max_iter) {
        Ok((x, r)) => {
            report.iterations = r.iterations;
            report.history = r.history;
            report.converged = r.converged;
            x
        }
        Err(Error::NotConverged { iterations, residual, .. }) => {
            report.iterations = iterations;
            report.history = vec![1.0, residual];
            report.converged = false;
            report.wall_time = start.elapsed().as_secs_f64();
            return Ok((BlockVector::zeros(&sys.layout), report));
        }
        Err(e) => return Err(e),
    };
    report.wall_time = start.elapsed().as_secs_f64();
    Ok((BlockVector::from_vec(&sys.layout, x)?, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{assemble_full, BoundarySpec};
    use crate::mesh::build_unit_square_mesh;
    use crate::model::{barenblatt_params, rescale, LMode, UnitMode};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup(n: usize) -> (BlockSystem, BlockPreconditioner) {
        let mesh = build_unit_square_mesh(n).unwrap();
        let m = rescale(&barenblatt_params(UnitMode::Si, 5e-10).shear_normalized(), LMode::Paper, 10.0)
            .unwrap();
        let sys = assemble_full(&mesh, &m, &BoundarySpec::cantilever(&[2.0, 20.0])).unwrap();
        let p = BlockPreconditioner::from_model(&sys, &m).unwrap();
        (sys, p)
    }

    fn random(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn zero_maps_to_zero() {
        let (sys, p) = setup(2);
        assert!(p.apply(&vec![0.0; sys.layout.total()]).unwrap().iter().all(|&z| z == 0.0));
    }

    #[test]
    fn unit_vector_round_trip() {
        let (sys, p) = setup(3);
        let n = sys.layout.total();
        for k in [0, sys.layout.v().start + 3, sys.layout.p().start + 1, n - 1] {
            let mut e = vec![0.0; n];
            e[k] = 1.0;
            let back = p.multiply(&p.apply(&e).unwrap()).unwrap();
            for (i, v) in back.iter().enumerate() {
                assert!((v - e[i]).abs() < 1e-10, "component {i}: {v}");
            }
        }
    }

    #[test]
    fn induced_form_is_symmetric_and_positive() {
        let (sys, p) = setup(3);
        let n = sys.layout.total();
        for s in 0..10 {
            let (r1, r2) = (random(n, 2 * s), random(n, 2 * s + 1));
            let a = dot(&r1, &p.apply(&r2).unwrap());
            let b = dot(&r2, &p.apply(&r1).unwrap());
            assert!((a - b).abs() <= 1e-10 * a.abs().max(b.abs()).max(1.0));
        }
        for s in 0..100 {
            let r = random(n, 1000 + s);
            assert!(dot(&r, &p.apply(&r).unwrap()) > 0.0);
        }
    }

    #[test]
    fn residual_norm_definition() {
        let (sys, p) = setup(2);
        let n = sys.layout.total();
        let b = sys.rhs();
        let direct = dot(&b, &p.apply(&b).unwrap()).sqrt();
        let r0 = residual_bnorm(&sys, &p, &vec![0.0; n]).unwrap();
        assert!((r0 - direct).abs() <= 1e-12 * direct);
        assert!(r0 > 0.0);
        let r2 = p.dual_norm(&b.iter().map(|v| 2.0 * v).collect::<Vec<_>>()).unwrap();
        assert!((r2 - 2.0 * r0).abs() <= 1e-12 * r0);
    }

    #[test]
    fn minres_reaches_reduction() {
        let (sys, p) = setup(4);
        let (x, rep) = minres_mpet(&sys, &p, 1e8, 500).unwrap();
        assert!(rep.converged);
        let r0 = residual_bnorm(&sys, &p, &vec![0.0; sys.layout.total()]).unwrap();
        let rk = residual_bnorm(&sys, &p, &x.data).unwrap();
        // recurrence and true residual agree up to rounding
        assert!(rk <= 2e-8 * r0, "true ratio {}", rk / r0);
    }
}
