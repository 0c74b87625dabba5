//! Solver reports and their serialized forms.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    FixedStress,
    Minres,
}

impl SolverKind {
    pub fn name(self) -> &'static str {
        match self {
            SolverKind::FixedStress => "fixed_stress",
            SolverKind::Minres => "minres",
        }
    }
}

/// Both sides of the per-iteration energy estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyRecord {
    pub lhs: f64,
    pub rhs: f64,
}

impl EnergyRecord {
    /// `(lhs - rhs) / max(|rhs|, tiny)`; positive values are violations.
    pub fn relative_slack(&self) -> f64 {
        (self.lhs - self.rhs) / self.rhs.abs().max(f64::MIN_POSITIVE)
    }
}

/// Outcome of one outer solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterReport {
    pub solver: SolverKind,
    pub iterations: usize,
    /// Residual norm in the preconditioner-induced norm, starting with the
    /// initial residual.
    pub history: Vec<f64>,
    pub converged: bool,
    /// Inner Krylov iterations of the flow step (zero for direct solves).
    pub flow_inner: Vec<usize>,
    /// `||sum_i e_{p_i}||` per iterate when a reference solution was given.
    pub error_sum: Option<Vec<f64>>,
    pub energy: Option<Vec<EnergyRecord>>,
    /// Final residual ratio with every block evaluated, when it differs in
    /// definition from the stopping residual.
    pub true_final_ratio: Option<f64>,
    pub wall_time: f64,
}

impl IterReport {
    pub fn new(solver: SolverKind) -> Self {
        IterReport {
            solver,
            iterations: 0,
            history: Vec::new(),
            converged: false,
            flow_inner: Vec::new(),
            error_sum: None,
            energy: None,
            true_final_ratio: None,
            wall_time: 0.0,
        }
    }

    pub fn final_ratio(&self) -> f64 {
        match (self.history.first(), self.history.last()) {
            (Some(&h0), Some(&hk)) if h0 > 0.0 => hk / h0,
            _ => 0.0,
        }
    }
}

/// Unknown counts of an assembled system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DofCounts {
    pub displacement: usize,
    pub flux: usize,
    pub pressure: usize,
    pub total: usize,
}

/// Reference-based diagnostics of a fixed-stress run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditSummary {
    /// Inf-sup estimate in the energy norm and the mesh it was taken on.
    pub beta2: f64,
    pub ck2: f64,
    pub estimate_mesh: usize,
    pub rate_bound: f64,
    pub max_ratio: f64,
    pub ratios_checked: usize,
    pub contraction_violations: usize,
    pub energy_max_slack: Option<f64>,
    /// Whether `L >= 1 / (lambda + cK^2)`, under which the energy
    /// inequality is guaranteed. The contraction bound needs no such
    /// condition.
    pub l_admissible: bool,
    /// Mass-balance defect of the reference solution.
    pub conservation: f64,
    /// Residual of the reference solution relative to the right-hand side.
    pub reference_residual: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub assembly: f64,
    pub preconditioner: f64,
    pub audit: f64,
}

/// One record per `run`: the configuration echo and every result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: crate::config::RunConfig,
    pub dofs: DofCounts,
    pub solves: Vec<IterReport>,
    pub audit: Option<AuditSummary>,
    pub timings: Timings,
}

impl RunReport {
    pub fn solve(&self, kind: SolverKind) -> Option<&IterReport> {
        self.solves.iter().find(|s| s.solver == kind)
    }

    /// Appends the report as one JSON line.
    pub fn append_to(&self, path: &std::path::Path) -> crate::Result<()> {
        use std::io::Write;
        let mut f = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
        writeln!(f, "{}", serde_json::to_string(self)?)?;
        Ok(())
    }

    /// Parses every record of a JSON-lines file.
    pub fn read_all(path: &std::path::Path) -> crate::Result<Vec<RunReport>> {
        std::fs::read_to_string(path)?
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(Into::into))
            .collect()
    }
}
