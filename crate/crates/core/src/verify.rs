//! Independent checks of the assembled system and of the convergence theory.
//!
//! The dense oracle shares nothing with the sparse assembly beyond the mesh
//! vertex and cell lists: it has its own quadrature (Gauss-Legendre nodes from
//! Newton iteration, collapsed onto triangles), builds each local basis in
//! physical coordinates by inverting the dof matrix, finds edges and boundary
//! sides itself, and evaluates the parameter matrices from the physical data.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assembly::{apply_constraints, assemble_broken_h1, BlockSystem, BlockVector, BoundarySpec};
use crate::error::{Error, Result};
use crate::krylov::BlockPreconditioner;
use crate::mesh::{BoundaryTag, TriMesh};
use crate::model::{PhysicalParams, RescaledModel};
use crate::report::EnergyRecord;
use crate::sparse::direct::{DirectSolver, LuSolver};
use crate::sparse::{spd_cholesky, CsrMatrix};

/// Gauss-Legendre nodes and weights on `[0, 1]`.
fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 0 { 1.0 } else if n == 1 { x } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * p - pm) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push((0.5 * (1.0 - x), 0.5 * w));
    }
    out
}

struct OracleQuad {
    line: Vec<(f64, f64)>,
    /// Reference triangle points and weights (collapsed square).
    tri: Vec<([f64; 2], f64)>,
}

impl OracleQuad {
    fn new(n: usize) -> Self {
        let line = gauss_legendre(n);
        let mut tri = Vec::new();
        for &(a, wa) in &line {
            for &(b, wb) in &line {
                tri.push(([a, b * (1.0 - a)], wa * wb * (1.0 - a)));
            }
        }
        OracleQuad { line, tri }
    }
}

/// Linear vector field `c0 + c1 x + c2 y` per component, in physical
/// coordinates.
#[derive(Clone, Copy)]
struct P1Field {
    x: [f64; 3],
    y: [f64; 3],
}

impl P1Field {
    fn at(&self, p: Vector2<f64>) -> Vector2<f64> {
        Vector2::new(
            self.x[0] + self.x[1] * p.x + self.x[2] * p.y,
            self.y[0] + self.y[1] * p.x + self.y[2] * p.y,
        )
    }

    fn grad(&self) -> Matrix2<f64> {
        Matrix2::new(self.x[1], self.x[2], self.y[1], self.y[2])
    }

    fn eps(&self) -> Matrix2<f64> {
        let g = self.grad();
        (g + g.transpose()) * 0.5
    }

    fn div(&self) -> f64 {
        self.x[1] + self.y[2]
    }
}

struct OracleEdge {
    a: Vector2<f64>,
    b: Vector2<f64>,
    len: f64,
    /// Normal of the edge oriented from its lower to its higher vertex id,
    /// rotated clockwise.
    normal: Vector2<f64>,
    cells: Vec<usize>,
    side: Option<BoundaryTag>,
}

impl OracleEdge {
    fn point(&self, s: f64) -> Vector2<f64> {
        self.a + (self.b - self.a) * s
    }
}

struct OracleCell {
    verts: [Vector2<f64>; 3],
    edges: [usize; 3],
    area: f64,
    bdm: Vec<P1Field>,
    rt: Vec<P1Field>,
}

impl OracleCell {
    fn map(&self, r: [f64; 2]) -> Vector2<f64> {
        self.verts[0] + (self.verts[1] - self.verts[0]) * r[0] + (self.verts[2] - self.verts[0]) * r[1]
    }

    fn outward(&self, e: &OracleEdge) -> Vector2<f64> {
        let centroid = (self.verts[0] + self.verts[1] + self.verts[2]) / 3.0;
        let n = e.normal;
        if n.dot(&(e.a - centroid)) > 0.0 { n } else { -n }
    }

    fn bdm_dofs(&self) -> [usize; 6] {
        let e = self.edges;
        [2 * e[0], 2 * e[0] + 1, 2 * e[1], 2 * e[1] + 1, 2 * e[2], 2 * e[2] + 1]
    }
}

/// Dense copies of every assembled block.
#[derive(Debug, Clone)]
pub struct DenseBlocks {
    pub a_uu: DMatrix<f64>,
    pub m_v: Vec<DMatrix<f64>>,
    pub du: DMatrix<f64>,
    pub dv: DMatrix<f64>,
    pub c_pp: DMatrix<f64>,
    pub rhs_u: DVector<f64>,
    pub rhs_v: Vec<DVector<f64>>,
    pub monolithic: DMatrix<f64>,
}

fn side_of(mid: Vector2<f64>) -> Option<BoundaryTag> {
    let tol = 1e-12;
    if mid.y.abs() < tol {
        Some(BoundaryTag::Bottom)
    } else if (mid.x - 1.0).abs() < tol {
        Some(BoundaryTag::Right)
    } else if (mid.y - 1.0).abs() < tol {
        Some(BoundaryTag::Top)
    } else if mid.x.abs() < tol {
        Some(BoundaryTag::Left)
    } else {
        None
    }
}

fn build_geometry(mesh: &TriMesh, quad: &OracleQuad) -> Result<(Vec<OracleEdge>, Vec<OracleCell>)> {
    let vert = |v: usize| Vector2::new(mesh.vertices()[v][0], mesh.vertices()[v][1]);
    let lookup: HashMap<(usize, usize), usize> =
        mesh.edges().iter().enumerate().map(|(i, &[a, b])| ((a.min(b), a.max(b)), i)).collect();
    let mut edges: Vec<OracleEdge> = mesh
        .edges()
        .iter()
        .map(|&[a, b]| {
            let (lo, hi) = (a.min(b), a.max(b));
            let (pa, pb) = (vert(lo), vert(hi));
            let t = pb - pa;
            let len = t.norm();
            OracleEdge {
                a: pa,
                b: pb,
                len,
                normal: Vector2::new(t.y, -t.x) / len,
                cells: Vec::new(),
                side: side_of((pa + pb) * 0.5),
            }
        })
        .collect();
    let mut cells = Vec::with_capacity(mesh.num_cells());
    for (c, tri) in mesh.cells().iter().enumerate() {
        let verts = [vert(tri[0]), vert(tri[1]), vert(tri[2])];
        let mut ids = [0; 3];
        for k in 0..3 {
            let (a, b) = (tri[(k + 1) % 3], tri[(k + 2) % 3]);
            ids[k] = *lookup
                .get(&(a.min(b), a.max(b)))
                .ok_or_else(|| Error::InvalidParameter(format!("cell {c} edge not in edge list")))?;
            edges[ids[k]].cells.push(c);
        }
        let area: f64 = quad.tri.iter().map(|(_, w)| w).sum::<f64>()
            * ((verts[1] - verts[0]).perp(&(verts[2] - verts[0]))).abs();
        cells.push(OracleCell { verts, edges: ids, area, bdm: Vec::new(), rt: Vec::new() });
    }
    for cell in &mut cells {
        // shift monomials to the centroid for conditioning
        let z = (cell.verts[0] + cell.verts[1] + cell.verts[2]) / 3.0;
        let shift = |f: P1Field| P1Field {
            x: [f.x[0] - f.x[1] * z.x - f.x[2] * z.y, f.x[1], f.x[2]],
            y: [f.y[0] - f.y[1] * z.x - f.y[2] * z.y, f.y[1], f.y[2]],
        };
        let bdm_monos: Vec<P1Field> = [
            ([1.0, 0.0, 0.0], [0.0; 3]),
            ([0.0, 1.0, 0.0], [0.0; 3]),
            ([0.0, 0.0, 1.0], [0.0; 3]),
            ([0.0; 3], [1.0, 0.0, 0.0]),
            ([0.0; 3], [0.0, 1.0, 0.0]),
            ([0.0; 3], [0.0, 0.0, 1.0]),
        ]
        .into_iter()
        .map(|(x, y)| shift(P1Field { x, y }))
        .collect();
        let rt_monos: Vec<P1Field> = [
            ([1.0, 0.0, 0.0], [0.0; 3]),
            ([0.0; 3], [1.0, 0.0, 0.0]),
            ([0.0, 1.0, 0.0], [0.0, 0.0, 1.0]),
        ]
        .into_iter()
        .map(|(x, y)| shift(P1Field { x, y }))
        .collect();
        let moment = |f: &P1Field, e: &OracleEdge, order: i32| -> f64 {
            quad.line.iter().map(|&(s, w)| w * f.at(e.point(s)).dot(&e.normal) * s.powi(order)).sum()
        };
        let mut g = DMatrix::zeros(6, 6);
        let mut gr = DMatrix::zeros(3, 3);
        for k in 0..3 {
            let e = &edges[cell.edges[k]];
            for (j, f) in bdm_monos.iter().enumerate() {
                g[(2 * k, j)] = moment(f, e, 0);
                g[(2 * k + 1, j)] = moment(f, e, 1);
            }
            for (j, f) in rt_monos.iter().enumerate() {
                gr[(k, j)] = moment(f, e, 0);
            }
        }
        let gi = g.try_inverse().ok_or(Error::DegenerateCell(0))?;
        let gri = gr.try_inverse().ok_or(Error::DegenerateCell(0))?;
        let combine = |monos: &[P1Field], coef: &DMatrix<f64>, i: usize| {
            let mut f = P1Field { x: [0.0; 3], y: [0.0; 3] };
            for (j, m) in monos.iter().enumerate() {
                for q in 0..3 {
                    f.x[q] += coef[(j, i)] * m.x[q];
                    f.y[q] += coef[(j, i)] * m.y[q];
                }
            }
            f
        };
        cell.bdm = (0..6).map(|i| combine(&bdm_monos, &gi, i)).collect();
        cell.rt = (0..3).map(|i| combine(&rt_monos, &gri, i)).collect();
    }
    Ok((edges, cells))
}

/// Parameter matrices recomputed from the physical data.
fn oracle_coefficients(p: &PhysicalParams) -> (Vec<f64>, DMatrix<f64>) {
    let n = p.n();
    let rinv = (0..n).map(|i| p.alpha[i].powi(2) / (p.tau * p.k[i])).collect();
    let c = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            p.c_p[i] / p.alpha[i].powi(2)
                + (0..n).filter(|&k| k != i).map(|k| p.tau * p.beta[i][k]).sum::<f64>() / p.alpha[i].powi(2)
        } else {
            -p.tau * p.beta[i][j] / (p.alpha[i] * p.alpha[j])
        }
    });
    (rinv, c)
}

/// Dense assembly of every block by the independent route.
pub fn dense_oracle(mesh: &TriMesh, p: &PhysicalParams, eta: f64, bc: &BoundarySpec) -> Result<DenseBlocks> {
    p.validate()?;
    let quad = OracleQuad::new(5);
    let (edges, cells) = build_geometry(mesh, &quad)?;
    let (ne, nc, n) = (edges.len(), cells.len(), p.n());
    let nu = 2 * ne;
    let jac = |c: &OracleCell| ((c.verts[1] - c.verts[0]).perp(&(c.verts[2] - c.verts[0]))).abs();

    let mut a = DMatrix::zeros(nu, nu);
    let mut du = DMatrix::zeros(nc, nu);
    let mut mass = DMatrix::zeros(ne, ne);
    let mut dv = DMatrix::zeros(nc, ne);
    for (c, cell) in cells.iter().enumerate() {
        let dofs = cell.bdm_dofs();
        let j = jac(cell);
        for (qp, w) in &quad.tri {
            let x = cell.map(*qp);
            let wt = w * j;
            for a_ in 0..6 {
                let fa = &cell.bdm[a_];
                du[(c, dofs[a_])] += wt * fa.div();
                for b_ in 0..6 {
                    let fb = &cell.bdm[b_];
                    a[(dofs[a_], dofs[b_])] +=
                        wt * (fa.eps().component_mul(&fb.eps()).sum() + p.lambda * fa.div() * fb.div());
                }
            }
            for a_ in 0..3 {
                dv[(c, cell.edges[a_])] += wt * cell.rt[a_].div();
                for b_ in 0..3 {
                    mass[(cell.edges[a_], cell.edges[b_])] += wt * cell.rt[a_].at(x).dot(&cell.rt[b_].at(x));
                }
            }
        }
    }
    // face terms with full vector jumps
    for e in &edges {
        let boundary = e.cells.len() == 1;
        if boundary && !(e.side.is_some_and(|s| bc.clamped.contains(&s))) {
            continue;
        }
        let plus = &cells[e.cells[0]];
        let n_out = plus.outward(e);
        let avg = if boundary { 1.0 } else { 0.5 };
        let mut funcs: Vec<(usize, P1Field, f64)> = Vec::new();
        for (side, &c) in e.cells.iter().enumerate() {
            let sign = if side == 0 { 1.0 } else { -1.0 };
            for (k, d) in cells[c].bdm_dofs().into_iter().enumerate() {
                funcs.push((d, cells[c].bdm[k], sign));
            }
        }
        for &(s, w) in &quad.line {
            let x = e.point(s);
            let wl = w * e.len;
            for &(di, fi, si) in &funcs {
                let ji = fi.at(x) * si;
                let ti = fi.eps() * n_out * avg;
                for &(dj, fj, sj) in &funcs {
                    let jj = fj.at(x) * sj;
                    let tj = fj.eps() * n_out * avg;
                    a[(di, dj)] += wl * (-tj.dot(&ji) - ti.dot(&jj) + eta / e.len * ji.dot(&jj));
                }
            }
        }
    }
    let mut constrained = vec![false; nu];
    for (i, e) in edges.iter().enumerate() {
        if e.cells.len() == 1 && e.side.is_some_and(|s| bc.clamped.contains(&s)) {
            constrained[2 * i] = true;
            constrained[2 * i + 1] = true;
        }
    }
    for i in 0..nu {
        if constrained[i] {
            for j in 0..nu {
                a[(i, j)] = 0.0;
                a[(j, i)] = 0.0;
            }
            a[(i, i)] = 1.0;
            for c in 0..nc {
                du[(c, i)] = 0.0;
            }
        }
    }

    let mut rhs_u = DVector::zeros(nu);
    let mut rhs_v = vec![DVector::zeros(ne); n];
    for (i, e) in edges.iter().enumerate() {
        let Some(side) = e.side else { continue };
        if e.cells.len() != 1 {
            continue;
        }
        let cell = &cells[e.cells[0]];
        let n_out = cell.outward(e);
        let g = Vector2::new(bc.traction[side.index()][0], bc.traction[side.index()][1]);
        if !bc.clamped.contains(&side) {
            for (k, d) in cell.bdm_dofs().into_iter().enumerate() {
                rhs_u[d] += quad.line.iter().map(|&(s, w)| w * e.len * g.dot(&cell.bdm[k].at(e.point(s)))).sum::<f64>();
            }
        }
        let k = cell.edges.iter().position(|&x| x == i).expect("edge belongs to its cell");
        let flux: f64 = quad.line.iter().map(|&(s, w)| w * e.len * cell.rt[k].at(e.point(s)).dot(&n_out)).sum();
        for net in 0..n {
            rhs_v[net][i] -= bc.pressure[net][side.index()] * flux;
        }
    }
    for (i, c) in constrained.iter().enumerate() {
        if *c {
            rhs_u[i] = 0.0;
        }
    }

    let (rinv, coupling) = oracle_coefficients(p);
    let m_v: Vec<DMatrix<f64>> = rinv.iter().map(|r| &mass * *r).collect();
    let mut c_pp = DMatrix::zeros(n * nc, n * nc);
    for i in 0..n {
        for j in 0..n {
            for (c, cell) in cells.iter().enumerate() {
                c_pp[(i * nc + c, j * nc + c)] = coupling[(i, j)] * cell.area;
            }
        }
    }
    let total = nu + n * ne + n * nc;
    let mut mono = DMatrix::zeros(total, total);
    mono.view_mut((0, 0), (nu, nu)).copy_from(&a);
    for i in 0..n {
        let (v0, p0) = (nu + i * ne, nu + n * ne + i * nc);
        mono.view_mut((v0, v0), (ne, ne)).copy_from(&m_v[i]);
        mono.view_mut((p0, 0), (nc, nu)).copy_from(&(-&du));
        mono.view_mut((0, p0), (nu, nc)).copy_from(&(-du.transpose()));
        mono.view_mut((p0, v0), (nc, ne)).copy_from(&(-&dv));
        mono.view_mut((v0, p0), (ne, nc)).copy_from(&(-dv.transpose()));
    }
    let pstart = nu + n * ne;
    mono.view_mut((pstart, pstart), (n * nc, n * nc)).copy_from(&(-&c_pp));
    Ok(DenseBlocks { a_uu: a, m_v, du, dv, c_pp, rhs_u, rhs_v, monolithic: mono })
}

/// Relative Frobenius distance of every sparse block from the oracle, keyed
/// by block name.
pub fn compare_with_oracle(sys: &BlockSystem, dense: &DenseBlocks) -> Vec<(String, f64)> {
    fn rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        if a.shape() != b.shape() {
            return f64::INFINITY;
        }
        let scale = b.norm().max(f64::MIN_POSITIVE);
        (a - b).norm() / scale
    }
    let col = |v: &[f64]| DMatrix::from_column_slice(v.len(), 1, v);
    let mut out = vec![
        ("a_uu".to_string(), rel(&sys.a_uu.to_dense(), &dense.a_uu)),
        ("du".to_string(), rel(&sys.du.to_dense(), &dense.du)),
        ("dv".to_string(), rel(&sys.dv.to_dense(), &dense.dv)),
        ("c_pp".to_string(), rel(&sys.c_pp.to_dense(), &dense.c_pp)),
        ("rhs_u".to_string(), rel(&col(&sys.rhs_u), &col(dense.rhs_u.as_slice()))),
        ("monolithic".to_string(), rel(&sys.monolithic().to_dense(), &dense.monolithic)),
    ];
    for i in 0..sys.networks() {
        out.push((format!("m_v[{i}]"), rel(&sys.m_v[i].to_dense(), &dense.m_v[i])));
        out.push((format!("rhs_v[{i}]"), rel(&col(&sys.rhs_v[i]), &col(dense.rhs_v[i].as_slice()))));
    }
    out
}

/// Monolithic solve by sparse LU with iterative refinement. Returns the
/// solution and its residual relative to the right-hand side, both measured
/// in the preconditioner-induced norm.
pub fn reference_solve(sys: &BlockSystem, pc: &BlockPreconditioner) -> Result<(BlockVector, f64)> {
    let b = sys.rhs();
    let bn = pc.dual_norm(&b)?;
    if bn == 0.0 {
        return Ok((BlockVector::zeros(&sys.layout), 0.0));
    }
    let (x, _) = LuSolver::new(sys.monolithic())?.solve_with_residual(&b, 1e-15);
    let ratio = pc.dual_norm(&sys.residual(&x))? / bn;
    if !ratio.is_finite() || ratio > 1e-9 {
        return Err(Error::NotConverged { solver: "reference", iterations: 1, residual: ratio });
    }
    Ok((BlockVector::from_vec(&sys.layout, x)?, ratio))
}

/// Norm on the displacement space used for the inf-sup estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InfSupNorm {
    /// `a_h(u, u)`.
    Energy,
    /// Broken gradient plus weighted tangential jumps.
    BrokenH1,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InfSupEstimate {
    pub norm: InfSupNorm,
    /// `beta_sd^2`: smallest eigenvalue of `M^{-1/2} D H^{-1} D' M^{-1/2}`.
    pub beta2: f64,
    /// Largest eigenvalue of the same matrix.
    pub s_max: f64,
}

impl InfSupEstimate {
    pub fn beta(&self) -> f64 {
        self.beta2.sqrt()
    }

    /// `c_Kd^2 = 1 / s_max`; meaningful for the energy norm.
    pub fn ck2(&self) -> f64 {
        1.0 / self.s_max
    }
}

/// Extreme eigenvalues of the pressure Schur complement `D H^{-1} D'`
/// scaled by the cell areas, formed column by column with a sparse
/// factorization of `H` and diagonalized densely.
pub fn estimate_infsup(
    mesh: &TriMesh,
    sys: &BlockSystem,
    bc: &BoundarySpec,
    norm: InfSupNorm,
) -> Result<InfSupEstimate> {
    let h = match norm {
        InfSupNorm::Energy => apply_constraints(&sys.a_h, &sys.layout.constrained),
        InfSupNorm::BrokenH1 => apply_constraints(&assemble_broken_h1(mesh, bc)?, &sys.layout.constrained),
    };
    let solver = DirectSolver::new(&h)?;
    let nc = sys.layout.cells;
    let dt = sys.du.transpose();
    let scale: Vec<f64> = sys.areas.iter().map(|a| 1.0 / a.sqrt()).collect();
    let columns: Vec<Vec<f64>> = (0..nc)
        .into_par_iter()
        .map(|c| {
            let mut e = vec![0.0; nc];
            e[c] = scale[c];
            let x = solver.solve(&dt.mul_vec(&e));
            sys.du.mul_vec(&x).iter().zip(&scale).map(|(v, s)| v * s).collect()
        })
        .collect();
    let s = DMatrix::from_fn(nc, nc, |i, j| 0.5 * (columns[j][i] + columns[i][j]));
    let ev = s.symmetric_eigenvalues();
    Ok(InfSupEstimate { norm, beta2: ev.min(), s_max: ev.max() })
}

/// Upper bound on the contraction factor of the pressure-sum error.
pub fn rate_bound(l: f64, lambda: f64, beta2: f64) -> f64 {
    (1.0 / (1.0 / (l * (1.0 / beta2 + lambda)) + 1.0)).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionAudit {
    pub ratios: Vec<f64>,
    pub bound: f64,
    pub max_ratio: f64,
    pub violations: usize,
}

impl ContractionAudit {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Checks `e_{m+1} / e_m <= bound + tol` for the pressure-sum errors of a
/// run. The zero initial guess is not the mechanics response to its own
/// pressure, which the estimate presumes, so ratios start at `m = 1`.
/// Steps whose new error lies below `floor` times the first error are
/// dominated by rounding and skipped.
pub fn contraction_audit(errors: &[f64], bound: f64, tol: f64, floor: f64) -> ContractionAudit {
    let e0 = errors.first().copied().unwrap_or(0.0);
    let ratios: Vec<f64> = errors
        .windows(2)
        .skip(1)
        .filter(|w| w[1] > floor * e0 && w[0] > 0.0)
        .map(|w| w[1] / w[0])
        .collect();
    let max_ratio = ratios.iter().copied().fold(0.0, f64::max);
    let violations = ratios.iter().filter(|&&r| r > bound + tol).count();
    ContractionAudit { ratios, bound, max_ratio, violations }
}

/// Largest relative slack `(lhs - rhs) / rhs` of the energy estimate over a
/// run, from `m = 1` on (see [`contraction_audit`]); records whose right
/// side is below `floor` times the first one are skipped.
pub fn energy_audit(records: &[EnergyRecord], floor: f64) -> Option<f64> {
    let r0 = records.first()?.rhs;
    records
        .iter()
        .skip(1)
        .filter(|r| r.rhs > floor * r0)
        .map(EnergyRecord::relative_slack)
        .fold(None, |acc: Option<f64>, s| Some(acc.map_or(s, |a| a.max(s))))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderingReport {
    pub samples: usize,
    pub violations: usize,
    /// `sum_ij (tilde Lambda^{-1})_ij` and its upper bound.
    pub inverse_sum: f64,
    pub inverse_sum_bound: f64,
}

impl OrderingReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Randomized check of the orderings between `Lambda_e`, `tilde Lambda` and
/// `Lambda_3` and their inverses, plus the bound on the entry sum of
/// `tilde Lambda^{-1}`.
pub fn check_coupling_orderings(m: &RescaledModel, samples: usize, seed: u64) -> Result<OrderingReport> {
    let chol = |a: &DMatrix<f64>, what: &str| {
        spd_cholesky(a).ok_or_else(|| Error::NotSpd(what.to_string()))
    };
    let e_inv = chol(&m.lambda_e, "Lambda_e")?.inverse();
    let t_chol = chol(&m.lambda_tilde, "tilde Lambda")?;
    let t_inv = t_chol.inverse();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tol = 1e-12;
    let mut violations = 0;
    let q = |a: &DMatrix<f64>, x: &DVector<f64>| x.dot(&(a * x));
    for _ in 0..samples {
        let x = DVector::from_fn(m.n, |_, _| rng.random_range(-1.0..1.0));
        if x.norm() == 0.0 {
            continue;
        }
        let xx = x.dot(&x);
        let (e, t, r3) = (q(&m.lambda_e, &x), q(&m.lambda_tilde, &x), q(&m.lambda3, &x));
        let (ei, ti) = (q(&e_inv, &x), q(&t_inv, &x));
        let r3i = xx / m.r;
        let le = |a: f64, b: f64| a <= b + tol * a.abs().max(b.abs());
        if !(le(t, e) && le(r3, t) && le(ei, ti) && le(ti, r3i)) {
            violations += 1;
        }
    }
    // 1' tilde Lambda^{-1} 1 by a refined solve: tilde Lambda can be very
    // ill-conditioned (R tiny), which spoils the explicit inverse
    let ones = DVector::from_element(m.n, 1.0);
    let mut y = t_chol.solve(&ones);
    for _ in 0..3 {
        let r = &ones - &m.lambda_tilde * &y;
        y += t_chol.solve(&r);
    }
    let inverse_sum = y.sum();
    let inverse_sum_bound = 1.0 / (1.0 / m.lambda0 + m.l);
    if !(inverse_sum > 0.0 && inverse_sum <= inverse_sum_bound * (1.0 + tol)) {
        violations += 1;
    }
    Ok(OrderingReport { samples, violations, inverse_sum, inverse_sum_bound })
}

/// Largest cellwise mass-balance defect of the pressure equations, relative
/// to the largest term entering the balance.
pub fn conservation_residual(sys: &BlockSystem, x: &BlockVector) -> f64 {
    let nc = sys.layout.cells;
    let du_u = sys.du.mul_vec(x.u());
    let cp = sys.c_pp.mul_vec(x.p());
    let mut worst = 0.0f64;
    let mut scale = 0.0f64;
    for i in 0..sys.networks() {
        let dv_v = sys.dv.mul_vec(x.v_i(i));
        for c in 0..nc {
            let terms = [du_u[c], dv_v[c], cp[i * nc + c], sys.rhs_p[i][c]];
            let defect = -terms[0] - terms[1] - terms[2] - terms[3];
            worst = worst.max(defect.abs());
            scale = terms.iter().fold(scale, |s, t| s.max(t.abs()));
        }
    }
    if scale == 0.0 { 0.0 } else { worst / scale }
}

/// Matrix symmetry defect relative to its Frobenius norm.
pub fn relative_asymmetry(a: &CsrMatrix) -> f64 {
    a.asymmetry() / a.frobenius_norm().max(f64::MIN_POSITIVE)
}
