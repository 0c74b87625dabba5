//! Single runs: assemble the configured problem, run the selected solvers
//! and optionally audit the fixed-stress iterates against a direct solve.

use std::time::Instant;

use crate::assembly::{assemble_full, BlockSystem, BoundarySpec};
use crate::config::RunConfig;
use crate::error::Result;
use crate::krylov::{minres_mpet, BlockPreconditioner};
use crate::mesh::{build_unit_square_mesh, TriMesh};
use crate::model::{rescale, RescaledModel};
use crate::report::{AuditSummary, DofCounts, RunReport, Timings};
use crate::splitsolve::{FixedStress, FixedStressOptions};
use crate::verify::{
    conservation_residual, contraction_audit, energy_audit, estimate_infsup, rate_bound, reference_solve,
    InfSupNorm,
};

/// Largest mesh on which the inf-sup constant is estimated for audits; the
/// constant is mesh-robust, so finer runs reuse this estimate.
pub const AUDIT_ESTIMATE_MESH: usize = 16;
pub const CONTRACTION_TOL: f64 = 1e-6;
pub const SOLVER_FLOOR: f64 = 1e-11;

/// Everything needed to solve one configured problem.
pub struct Problem {
    pub mesh: TriMesh,
    pub model: RescaledModel,
    pub bc: BoundarySpec,
    pub sys: BlockSystem,
}

impl Problem {
    pub fn new(cfg: &RunConfig) -> Result<Self> {
        Self::on_mesh(cfg, cfg.n)
    }

    pub fn on_mesh(cfg: &RunConfig, n: usize) -> Result<Self> {
        let mesh = build_unit_square_mesh(n)?;
        let model = rescale(&cfg.model_params()?, cfg.l_mode, cfg.eta)?;
        let bc = BoundarySpec::cantilever(&cfg.pressures());
        let sys = assemble_full(&mesh, &model, &bc)?;
        Ok(Problem { mesh, model, bc, sys })
    }

    pub fn dofs(&self) -> DofCounts {
        let l = &self.sys.layout;
        DofCounts { displacement: l.n_u(), flux: l.n_v(), pressure: l.n_p(), total: l.total() }
    }
}

/// Runs the configured solvers.
pub fn run(cfg: &RunConfig) -> Result<RunReport> {
    let mut timings = Timings::default();
    let t = Instant::now();
    let prob = Problem::new(cfg)?;
    timings.assembly = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let pc = BlockPreconditioner::from_model(&prob.sys, &prob.model)?;
    timings.preconditioner = t.elapsed().as_secs_f64();

    let mut solves = Vec::new();
    let mut audit = None;
    if cfg.solver.minres() {
        solves.push(minres_mpet(&prob.sys, &pc, cfg.reduction, cfg.max_iter)?.1);
    }
    if cfg.solver.fixed_stress() {
        let fs = FixedStress::new(&prob.sys, &prob.model)?;
        let mut opts = FixedStressOptions { reduction: cfg.reduction, max_iter: cfg.max_iter, reference: None };
        if cfg.audit {
            let t = Instant::now();
            let (xr, reference_residual) = reference_solve(&prob.sys, &pc)?;
            opts.reference = Some(&xr);
            let (_, rep) = fs.solve(&pc, &opts)?;
            let estimate_mesh = cfg.n.min(AUDIT_ESTIMATE_MESH);
            let small;
            let est_prob = if estimate_mesh == cfg.n {
                &prob
            } else {
                small = Problem::on_mesh(cfg, estimate_mesh)?;
                &small
            };
            let est = estimate_infsup(&est_prob.mesh, &est_prob.sys, &est_prob.bc, InfSupNorm::Energy)?;
            let bound = rate_bound(prob.model.l, prob.model.lambda, est.beta2);
            let errs = rep.error_sum.as_deref().unwrap_or(&[]);
            let c = contraction_audit(errs, bound, CONTRACTION_TOL, SOLVER_FLOOR);
            audit = Some(AuditSummary {
                beta2: est.beta2,
                ck2: est.ck2(),
                estimate_mesh,
                rate_bound: bound,
                max_ratio: c.max_ratio,
                ratios_checked: c.ratios.len(),
                contraction_violations: c.violations,
                energy_max_slack: energy_audit(rep.energy.as_deref().unwrap_or(&[]), SOLVER_FLOOR),
                l_admissible: prob.model.l * (prob.model.lambda + est.ck2()) >= 1.0,
                conservation: conservation_residual(&prob.sys, &xr),
                reference_residual,
            });
            timings.audit = t.elapsed().as_secs_f64();
            solves.push(rep);
        } else {
            solves.push(fs.solve(&pc, &opts)?.1);
        }
    }
    Ok(RunReport { config: cfg.clone(), dofs: prob.dofs(), solves, audit, timings })
}
