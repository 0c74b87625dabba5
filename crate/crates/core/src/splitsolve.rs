//! Fixed-stress splitting: a flow solve with the stabilization `L` followed
//! by a mechanics solve, repeated until the full coupled residual has been
//! reduced in the preconditioner-induced norm.

use std::time::Instant;

use nalgebra::DMatrix;

use crate::assembly::{assemble_pressure_block, BlockSystem, BlockVector};
use crate::error::{Error, Result};
use crate::krylov::{BlockPreconditioner, DEFAULT_MAX_ITER, DEFAULT_REDUCTION};
use crate::model::RescaledModel;
use crate::report::{EnergyRecord, IterReport, SolverKind};
use crate::sparse::direct::{DirectSolver, INNER_TOL};
use crate::sparse::{block_matrix, dot, minres, spd_cholesky, CellBlockSolver, CsrMatrix, LinearOperator};

const FLOW_REFINEMENT_STEPS: usize = 2;

#[derive(Debug, Clone)]
pub struct FixedStressOptions<'a> {
    pub reduction: f64,
    pub max_iter: usize,
    /// Converged solution used for error diagnostics.
    pub reference: Option<&'a BlockVector>,
}

impl Default for FixedStressOptions<'_> {
    fn default() -> Self {
        FixedStressOptions { reduction: DEFAULT_REDUCTION, max_iter: DEFAULT_MAX_ITER, reference: None }
    }
}

/// Flow saddle system `[[M_v, -B_v'], [-B_v, -K]]` used when `K` is singular.
struct FlowSaddle {
    mat: CsrMatrix,
    bv: DirectSolver,
    bp: CellBlockSolver,
    nv: usize,
}

impl LinearOperator for FlowSaddle {
    fn dim(&self) -> usize {
        self.mat.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let (a, b) = x.split_at(self.nv);
        y[..self.nv].copy_from_slice(&self.bv.solve(a));
        y[self.nv..].copy_from_slice(&self.bp.solve(b).expect("dimension checked by caller"));
    }
}

enum Flow {
    /// `K` is SPD: eliminate the pressure cellwise.
    Schur { schur: DirectSolver, w: CellBlockSolver, k_block: CsrMatrix, m_v: CsrMatrix },
    Saddle(FlowSaddle),
}

/// Factorized sub-problems of the splitting for one assembled system.
pub struct FixedStress<'s> {
    sys: &'s BlockSystem,
    l: f64,
    b_u: CsrMatrix,
    b_v: CsrMatrix,
    l_block: CsrMatrix,
    flow: Flow,
    mechanics: DirectSolver,
}

impl<'s> FixedStress<'s> {
    pub fn new(sys: &'s BlockSystem, m: &RescaledModel) -> Result<Self> {
        if m.n != sys.networks() {
            return Err(Error::DimensionMismatch { expected: sys.networks(), got: m.n });
        }
        let b_u = sys.b_u();
        let b_v = sys.b_v();
        let l_block = assemble_pressure_block(&sys.areas, &m.lambda_stab)?;
        let k = m.flow_pressure_matrix();
        let flow = if spd_cholesky(&k).is_some() {
            let w = CellBlockSolver::new(&k, &sys.areas)?;
            let inv_areas: Vec<f64> = sys.areas.iter().map(|a| 1.0 / a).collect();
            let k_inv = spd_cholesky(&k).expect("checked above").inverse();
            let wmat = assemble_pressure_block(&inv_areas, &k_inv)?;
            let schur = sys.m_v_block().add_scaled(1.0, &b_v.transpose().matmul(&wmat.matmul(&b_v)));
            Flow::Schur {
                schur: DirectSolver::new(&schur)?,
                w,
                k_block: assemble_pressure_block(&sys.areas, &k)?,
                m_v: sys.m_v_block(),
            }
        } else {
            Flow::Saddle(flow_saddle(sys, &b_v, &k, &m.lambda_tilde)?)
        };
        Ok(FixedStress { sys, l: m.l, b_u, b_v, l_block, flow, mechanics: DirectSolver::new(&sys.a_uu)? })
    }

    /// Whether the flow step had to fall back to the saddle-point solver.
    pub fn uses_fallback(&self) -> bool {
        matches!(self.flow, Flow::Saddle(_))
    }

    pub fn l(&self) -> f64 {
        self.l
    }

    /// Flow step: new fluxes and pressures from the previous displacement and
    /// pressures. Returns the number of inner iterations (zero when direct).
    pub fn flow_step(&self, u: &[f64], p: &[f64]) -> Result<(Vec<f64>, Vec<f64>, usize)> {
        let sys = self.sys;
        let rhs_p: Vec<f64> = sys.rhs_p.concat();
        let rhs_v: Vec<f64> = sys.rhs_v.concat();
        let bu_u = self.b_u.mul_vec(u);
        let lp = self.l_block.mul_vec(p);
        let r_p: Vec<f64> = (0..rhs_p.len()).map(|i| rhs_p[i] + bu_u[i] - lp[i]).collect();
        match &self.flow {
            Flow::Schur { schur, w, k_block, m_v } => {
                let condensed = |f_v: &[f64], f_p: &[f64]| -> Result<(Vec<f64>, Vec<f64>)> {
                    let wr = w.solve(f_p)?;
                    let bt = self.b_v.mul_transpose_vec(&wr);
                    let rhs: Vec<f64> = f_v.iter().zip(&bt).map(|(a, b)| a - b).collect();
                    let v = schur.solve(&rhs);
                    let bvv = self.b_v.mul_vec(&v);
                    let s: Vec<f64> = f_p.iter().zip(&bvv).map(|(a, b)| a + b).collect();
                    Ok((v, w.solve(&s)?.into_iter().map(|x| -x).collect()))
                };
                let (mut v, mut p_new) = condensed(&rhs_v, &r_p)?;
                // Refine against the unreduced flow equations: with widely
                // spread conductivities the condensed system alone leaves a
                // flux residual well above the outer target.
                for _ in 0..FLOW_REFINEMENT_STEPS {
                    let mv = m_v.mul_vec(&v);
                    let btp = self.b_v.mul_transpose_vec(&p_new);
                    let e_v: Vec<f64> = (0..v.len()).map(|i| rhs_v[i] - mv[i] + btp[i]).collect();
                    let bvv = self.b_v.mul_vec(&v);
                    let kp = k_block.mul_vec(&p_new);
                    let e_p: Vec<f64> = (0..r_p.len()).map(|i| r_p[i] + bvv[i] + kp[i]).collect();
                    let (dv, dp) = condensed(&e_v, &e_p)?;
                    v.iter_mut().zip(&dv).for_each(|(a, b)| *a += b);
                    p_new.iter_mut().zip(&dp).for_each(|(a, b)| *a += b);
                }
                Ok((v, p_new, 0))
            }
            Flow::Saddle(op) => {
                let mut b = rhs_v;
                b.extend_from_slice(&r_p);
                let (x, rep) = minres(&op.mat, &b, op, 1.0 / INNER_TOL, 10_000)?;
                let (v, p_new) = x.split_at(op.nv);
                Ok((v.to_vec(), p_new.to_vec(), rep.iterations))
            }
        }
    }

    /// Mechanics step: displacement for the given pressures.
    pub fn mechanics_step(&self, p: &[f64]) -> Vec<f64> {
        let bt = self.b_u.mul_transpose_vec(p);
        let rhs: Vec<f64> = self.sys.rhs_u.iter().zip(&bt).map(|(a, b)| a + b).collect();
        self.mechanics.solve(&rhs)
    }

    /// Runs the splitting from a zero initial guess.
    pub fn solve(
        &self,
        pc: &BlockPreconditioner,
        opts: &FixedStressOptions,
    ) -> Result<(BlockVector, IterReport)> {
        let start = Instant::now();
        let sys = self.sys;
        let layout = &sys.layout;
        let mut x = BlockVector::zeros(layout);
        let mut report = IterReport::new(SolverKind::FixedStress);
        let r0 = pc.dual_norm(&sys.residual(&x.data))?;
        report.history.push(r0);
        let mut errs = Vec::new();
        let mut energy = Vec::new();
        if let Some(xr) = opts.reference {
            errs.push(self.error_sum(&x, xr));
        }
        if r0 == 0.0 {
            report.converged = true;
        }
        while !report.converged && report.iterations < opts.max_iter {
            let (v, p, inner) = self.flow_step(x.u(), x.p())?;
            let u = self.mechanics_step(&p);
            x.u_mut().copy_from_slice(&u);
            x.v_mut().copy_from_slice(&v);
            x.p_mut().copy_from_slice(&p);
            report.iterations += 1;
            report.flow_inner.push(inner);
            // The mechanics row holds by construction after the direct
            // mechanics solve. Evaluating it anyway only measures rounding in
            // `A_uu u`, which for large lambda sits far above the target.
            let mut res = sys.residual(&x.data);
            res[layout.u()].fill(0.0);
            let r = pc.dual_norm(&res)?;
            report.history.push(r);
            if let Some(xr) = opts.reference {
                let e = self.error_sum(&x, xr);
                let prev = *errs.last().expect("initial error recorded");
                energy.push(self.energy_record(&x, xr, prev));
                errs.push(e);
            }
            report.converged = r <= r0 / opts.reduction;
        }
        report.true_final_ratio = Some(if r0 > 0.0 { pc.dual_norm(&sys.residual(&x.data))? / r0 } else { 0.0 });
        if opts.reference.is_some() {
            report.error_sum = Some(errs);
            report.energy = Some(energy);
        }
        report.wall_time = start.elapsed().as_secs_f64();
        Ok((x, report))
    }

    /// `||sum_i (p_i - p_i^*)||` in `L^2`.
    pub fn error_sum(&self, x: &BlockVector, reference: &BlockVector) -> f64 {
        pressure_sum_norm(&self.sys.areas, &x.pressure_sum(), &reference.pressure_sum())
    }

    /// Both sides of the one-step energy estimate for the iterate `x`, given
    /// the previous error sum.
    fn energy_record(&self, x: &BlockVector, xr: &BlockVector, prev_sum: f64) -> EnergyRecord {
        let sys = self.sys;
        let diff = |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| x - y).collect() };
        let eu = diff(x.u(), xr.u());
        let ep = diff(x.p(), xr.p());
        let mut lhs = 0.5 * dot(&eu, &sys.a_uu.mul_vec(&eu));
        for i in 0..sys.networks() {
            let ev = diff(x.v_i(i), xr.v_i(i));
            lhs += dot(&ev, &sys.m_v[i].mul_vec(&ev));
        }
        lhs += dot(&ep, &sys.c_pp.mul_vec(&ep));
        let cur = self.error_sum(x, xr);
        lhs += 0.5 * self.l * cur * cur;
        EnergyRecord { lhs, rhs: 0.5 * self.l * prev_sum * prev_sum }
    }
}

fn flow_saddle(
    sys: &BlockSystem,
    b_v: &CsrMatrix,
    k: &DMatrix<f64>,
    lambda_tilde: &DMatrix<f64>,
) -> Result<FlowSaddle> {
    let mv = sys.m_v_block();
    let kblk = assemble_pressure_block(&sys.areas, k)?.scaled(-1.0);
    let nbv = b_v.scaled(-1.0);
    let nbvt = nbv.transpose();
    let (nv, np) = (mv.nrows(), kblk.nrows());
    let mat = block_matrix(&[vec![Some(&mv), Some(&nbvt)], vec![Some(&nbv), Some(&kblk)]], &[nv, np], &[nv, np]);
    let tilde_inv = spd_cholesky(lambda_tilde)
        .ok_or_else(|| Error::NotSpd("flow preconditioner coupling matrix".into()))?
        .inverse();
    let inv_areas: Vec<f64> = sys.areas.iter().map(|a| 1.0 / a).collect();
    let mid = assemble_pressure_block(&inv_areas, &tilde_inv)?;
    let bv_pre = mv.add_scaled(1.0, &b_v.transpose().matmul(&mid.matmul(b_v)));
    Ok(FlowSaddle {
        mat,
        bv: DirectSolver::new(&bv_pre)?,
        bp: CellBlockSolver::new(lambda_tilde, &sys.areas)?,
        nv,
    })
}

/// `L^2` norm of the difference of two cellwise pressure sums.
pub fn pressure_sum_norm(areas: &[f64], a: &[f64], b: &[f64]) -> f64 {
    areas
        .iter()
        .zip(a.iter().zip(b))
        .map(|(w, (x, y))| w * (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Assembles the splitting and runs it.
pub fn fixed_stress_solve(
    sys: &BlockSystem,
    m: &RescaledModel,
    pc: &BlockPreconditioner,
    opts: &FixedStressOptions,
) -> Result<(BlockVector, IterReport)> {
    FixedStress::new(sys, m)?.solve(pc, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{assemble_full, BoundarySpec};
    use crate::krylov::minres_mpet;
    use crate::mesh::build_unit_square_mesh;
    use crate::model::{barenblatt_params, rescale, LMode, PhysicalParams, UnitMode};
    use crate::sparse::direct::LuSolver;

    fn system(p: &PhysicalParams, n: usize) -> (BlockSystem, RescaledModel) {
        let mesh = build_unit_square_mesh(n).unwrap();
        let m = rescale(p, LMode::Paper, 10.0).unwrap();
        let pressures = [2.0, 20.0, 30.0, 40.0];
        let sys = assemble_full(&mesh, &m, &BoundarySpec::cantilever(&pressures[..p.n()])).unwrap();
        (sys, m)
    }

    fn exact(sys: &BlockSystem) -> BlockVector {
        let (x, res) = LuSolver::new(sys.monolithic()).unwrap().solve_with_residual(&sys.rhs(), 1e-14);
        assert!(res < 1e-12);
        BlockVector::from_vec(&sys.layout, x).unwrap()
    }

    #[test]
    fn fixed_point_is_the_monolithic_solution() {
        let p = barenblatt_params(UnitMode::Si, 5e-10).shear_normalized();
        let (sys, m) = system(&p, 4);
        let xr = exact(&sys);
        let fs = FixedStress::new(&sys, &m).unwrap();
        let (v, pn, _) = fs.flow_step(xr.u(), xr.p()).unwrap();
        let u = fs.mechanics_step(&pn);
        let scale = xr.data.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        for (a, b) in u.iter().chain(&v).chain(&pn).zip(xr.u().iter().chain(xr.v()).chain(xr.p())) {
            assert!((a - b).abs() < 1e-9 * scale);
        }
    }

    #[test]
    fn converges_and_contracts() {
        let p = barenblatt_params(UnitMode::Si, 5e-10).shear_normalized();
        let (sys, m) = system(&p, 4);
        let xr = exact(&sys);
        let pc = BlockPreconditioner::from_model(&sys, &m).unwrap();
        let opts = FixedStressOptions { reference: Some(&xr), ..Default::default() };
        let (x, rep) = fixed_stress_solve(&sys, &m, &pc, &opts).unwrap();
        assert!(rep.converged);
        let errs = rep.error_sum.as_ref().unwrap();
        assert!(
            errs.windows(2).skip(1).all(|w| w[1] <= w[0] || w[1] < 1e-11 * errs[0]),
            "{errs:?} {:?}",
            rep.history
        );
        let (xm, _) = minres_mpet(&sys, &pc, 1e8, 1000).unwrap();
        let diff: Vec<f64> = x.data.iter().zip(&xm.data).map(|(a, b)| a - b).collect();
        let dn = dot(&diff, &pc.multiply(&diff).unwrap()).sqrt();
        assert!(dn < 1e-6 * pc.dual_norm(&sys.rhs()).unwrap());
    }

    #[test]
    fn singular_pressure_coupling_uses_fallback() {
        let mut p = barenblatt_params(UnitMode::Si, 0.0).shear_normalized();
        p.c_p = vec![0.0, 0.0];
        let (sys, m) = system(&p, 3);
        let fs = FixedStress::new(&sys, &m).unwrap();
        assert!(fs.uses_fallback());
        let xr = exact(&sys);
        let pc = BlockPreconditioner::from_model(&sys, &m).unwrap();
        let (x, rep) = fs.solve(&pc, &FixedStressOptions::default()).unwrap();
        assert!(rep.converged);
        assert!(rep.flow_inner.iter().all(|&k| k > 0));
        let err = pressure_sum_norm(&sys.areas, &x.pressure_sum(), &xr.pressure_sum());
        assert!(err < 1e-6 * pressure_sum_norm(&sys.areas, &xr.pressure_sum(), &vec![0.0; sys.areas.len()]));
    }

    #[test]
    fn zero_data_stops_immediately() {
        let p = barenblatt_params(UnitMode::Si, 5e-10).shear_normalized();
        let mesh = build_unit_square_mesh(2).unwrap();
        let m = rescale(&p, LMode::Paper, 10.0).unwrap();
        let sys = assemble_full(&mesh, &m, &BoundarySpec::homogeneous(2)).unwrap();
        let pc = BlockPreconditioner::from_model(&sys, &m).unwrap();
        let (x, rep) = fixed_stress_solve(&sys, &m, &pc, &FixedStressOptions::default()).unwrap();
        assert_eq!(rep.iterations, 0);
        assert!(x.data.iter().all(|&v| v == 0.0));
    }
}
