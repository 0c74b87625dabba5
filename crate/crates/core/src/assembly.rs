//! Sparse blocks of the discrete coupled system.
//!
//! Unknowns are ordered `[u | v_1 .. v_n | p_1 .. p_n]`: BDM1 displacement
//! dofs `2e, 2e+1` per edge, one RT0 dof per edge and network, one P0 value
//! per cell and network. The monolithic matrix is
//!
//! ```text
//! [  A_uu      0        -B_u^T ]
//! [  0         M_v      -B_v^T ]
//! [ -B_u      -B_v      -C_pp  ]
//! ```
//!
//! where `B_u` stacks the displacement divergence `Du` once per network and
//! `B_v = blockdiag(Dv)`. Divergence blocks hold `int_T div phi`, which for
//! these spaces is the signed edge flux of the basis function.

use std::ops::Range;
use std::sync::OnceLock;

use nalgebra::{DMatrix, Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::elements::{
    bdm1_basis, quadrature_edge, quadrature_triangle, rt0_basis, AffineField, CellFrame,
};
use crate::error::{Error, Result};
use crate::mesh::{BoundaryTag, TriMesh};
use crate::model::RescaledModel;
use crate::sparse::{block_matrix, CsrMatrix, TripletBuilder};

/// Volume quadrature degree; exceeds every integrand degree in the forms.
pub const VOLUME_DEGREE: usize = 4;
/// Edge quadrature degree.
pub const EDGE_DEGREE: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DofLayout {
    pub networks: usize,
    pub edges: usize,
    pub cells: usize,
    /// Displacement dofs fixed to zero (normal component on clamped edges).
    pub constrained: Vec<bool>,
}

impl DofLayout {
    pub fn new(mesh: &TriMesh, networks: usize, bc: &BoundarySpec) -> Self {
        let edges = mesh.num_edges();
        let mut constrained = vec![false; 2 * edges];
        for &tag in &bc.clamped {
            for e in mesh.boundary_edges(tag) {
                constrained[2 * e] = true;
                constrained[2 * e + 1] = true;
            }
        }
        DofLayout { networks, edges, cells: mesh.num_cells(), constrained }
    }

    pub fn n_u(&self) -> usize {
        2 * self.edges
    }

    pub fn n_v(&self) -> usize {
        self.networks * self.edges
    }

    pub fn n_p(&self) -> usize {
        self.networks * self.cells
    }

    pub fn total(&self) -> usize {
        self.n_u() + self.n_v() + self.n_p()
    }

    pub fn u(&self) -> Range<usize> {
        0..self.n_u()
    }

    pub fn v(&self) -> Range<usize> {
        self.n_u()..self.n_u() + self.n_v()
    }

    pub fn p(&self) -> Range<usize> {
        let s = self.n_u() + self.n_v();
        s..s + self.n_p()
    }

    pub fn v_i(&self, i: usize) -> Range<usize> {
        let s = self.n_u() + i * self.edges;
        s..s + self.edges
    }

    pub fn p_i(&self, i: usize) -> Range<usize> {
        let s = self.n_u() + self.n_v() + i * self.cells;
        s..s + self.cells
    }
}

/// Flat coefficient vector with named views.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockVector {
    pub data: Vec<f64>,
    pub layout: DofLayout,
}

impl BlockVector {
    pub fn zeros(layout: &DofLayout) -> Self {
        BlockVector { data: vec![0.0; layout.total()], layout: layout.clone() }
    }

    pub fn from_vec(layout: &DofLayout, data: Vec<f64>) -> Result<Self> {
        if data.len() != layout.total() {
            return Err(Error::DimensionMismatch { expected: layout.total(), got: data.len() });
        }
        Ok(BlockVector { data, layout: layout.clone() })
    }

    pub fn u(&self) -> &[f64] {
        &self.data[self.layout.u()]
    }

    pub fn v(&self) -> &[f64] {
        &self.data[self.layout.v()]
    }

    pub fn p(&self) -> &[f64] {
        &self.data[self.layout.p()]
    }

    pub fn v_i(&self, i: usize) -> &[f64] {
        &self.data[self.layout.v_i(i)]
    }

    pub fn p_i(&self, i: usize) -> &[f64] {
        &self.data[self.layout.p_i(i)]
    }

    pub fn u_mut(&mut self) -> &mut [f64] {
        let r = self.layout.u();
        &mut self.data[r]
    }

    pub fn v_mut(&mut self) -> &mut [f64] {
        let r = self.layout.v();
        &mut self.data[r]
    }

    pub fn p_mut(&mut self) -> &mut [f64] {
        let r = self.layout.p();
        &mut self.data[r]
    }

    /// Cellwise sum of the network pressures.
    pub fn pressure_sum(&self) -> Vec<f64> {
        let c = self.layout.cells;
        let mut s = vec![0.0; c];
        for i in 0..self.layout.networks {
            for (sk, pk) in s.iter_mut().zip(self.p_i(i)) {
                *sk += pk;
            }
        }
        s
    }
}

/// Boundary and load data for one benchmark configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundarySpec {
    /// Sides with `u = 0`.
    pub clamped: Vec<BoundaryTag>,
    /// Traction per side (indexed by [`BoundaryTag::index`]), used on every
    /// side that is not clamped.
    pub traction: [[f64; 2]; 4],
    /// Dirichlet pressure per network and side.
    pub pressure: Vec<[f64; 4]>,
    pub body_force: [f64; 2],
    /// Constant source `g_i` per network.
    pub source: Vec<f64>,
}

impl BoundarySpec {
    /// Cantilever setup: left side clamped, unit downward traction on top,
    /// traction free elsewhere, constant pressures on the whole boundary.
    pub fn cantilever(pressures: &[f64]) -> Self {
        let mut traction = [[0.0; 2]; 4];
        traction[BoundaryTag::Top.index()] = [0.0, -1.0];
        BoundarySpec {
            clamped: vec![BoundaryTag::Left],
            traction,
            pressure: pressures.iter().map(|&p| [p; 4]).collect(),
            body_force: [0.0; 2],
            source: vec![0.0; pressures.len()],
        }
    }

    /// Cantilever geometry with all data zero.
    pub fn homogeneous(networks: usize) -> Self {
        BoundarySpec {
            clamped: vec![BoundaryTag::Left],
            traction: [[0.0; 2]; 4],
            pressure: vec![[0.0; 4]; networks],
            body_force: [0.0; 2],
            source: vec![0.0; networks],
        }
    }

    fn check(&self, networks: usize) -> Result<()> {
        if self.pressure.len() != networks || self.source.len() != networks {
            return Err(Error::DimensionMismatch {
                expected: networks,
                got: self.pressure.len().min(self.source.len()),
            });
        }
        Ok(())
    }
}

/// Displacement blocks before the clamped dofs are eliminated.
#[derive(Debug, Clone)]
pub struct ElasticityBlocks {
    /// DG form `a_h` without the clamping constraint.
    pub a_h: CsrMatrix,
    /// `int div u div w`.
    pub div_div: CsrMatrix,
    /// `a_h + lambda div_div` with clamped rows and columns replaced by the
    /// identity.
    pub a_uu: CsrMatrix,
    pub rhs_u: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct FluxBlocks {
    /// Unweighted RT0 mass matrix.
    pub mass: CsrMatrix,
    /// `R_i^{-1}` times `mass`.
    pub m_v: Vec<CsrMatrix>,
    /// Cells by RT0 dofs.
    pub dv: CsrMatrix,
    pub rhs_v: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct BlockSystem {
    pub layout: DofLayout,
    pub lambda: f64,
    pub areas: Vec<f64>,
    pub a_h: CsrMatrix,
    pub div_div: CsrMatrix,
    pub a_uu: CsrMatrix,
    pub m_v: Vec<CsrMatrix>,
    pub rt_mass: CsrMatrix,
    /// Cells by BDM1 dofs, clamped columns zero.
    pub du: CsrMatrix,
    pub dv: CsrMatrix,
    pub c_pp: CsrMatrix,
    pub rhs_u: Vec<f64>,
    pub rhs_v: Vec<Vec<f64>>,
    pub rhs_p: Vec<Vec<f64>>,
    monolithic: OnceLock<CsrMatrix>,
}

fn frames(mesh: &TriMesh) -> Vec<CellFrame> {
    (0..mesh.num_cells()).map(|c| CellFrame::from_mesh(mesh, c)).collect()
}

fn bdm_dofs(frame: &CellFrame) -> [usize; 6] {
    let e = frame.edge_ids;
    [2 * e[0], 2 * e[0] + 1, 2 * e[1], 2 * e[1] + 1, 2 * e[2], 2 * e[2] + 1]
}

fn frob(a: &Matrix2<f64>, b: &Matrix2<f64>) -> f64 {
    a.component_mul(b).sum()
}

/// Kind of edge contribution to a broken form.
#[derive(Clone, Copy, PartialEq)]
enum FaceForm {
    /// Symmetric interior penalty with penalty `eta / |e|`.
    Nitsche(f64),
    /// Jump penalty `1 / |e|` only.
    Penalty,
}

/// Adds the tangential-jump face terms of interior edges and clamped edges.
fn add_face_terms(
    mesh: &TriMesh,
    frames: &[CellFrame],
    clamped: &[BoundaryTag],
    form: FaceForm,
    b: &mut TripletBuilder,
) -> Result<()> {
    let rule = quadrature_edge(EDGE_DEGREE)?;
    for e in 0..mesh.num_edges() {
        let inc = mesh.edge_cells(e);
        if inc.len() == 1 {
            match mesh.boundary_tag(e) {
                Some(tag) if clamped.contains(&tag) => {}
                _ => continue,
            }
        }
        let len = mesh.edge_length(e);
        let ng = mesh.edge_normal(e);
        let n1 = Vector2::new(ng[0], ng[1]) * inc[0].sign;
        let t = Vector2::new(-n1.y, n1.x);
        // (global dof, field, jump sign, average weight)
        let mut funcs: Vec<(usize, AffineField, f64, f64)> = Vec::with_capacity(12);
        let avg = if inc.len() == 2 { 0.5 } else { 1.0 };
        for (side, i) in inc.iter().enumerate() {
            let frame = &frames[i.cell];
            let basis = bdm1_basis(frame)?;
            let dofs = bdm_dofs(frame);
            let jump = if side == 0 { 1.0 } else { -1.0 };
            for k in 0..6 {
                funcs.push((dofs[k], basis[k], jump, avg));
            }
        }
        // tangential traction of the average strain, constant per function
        let flux: Vec<f64> = funcs.iter().map(|(_, f, _, w)| w * t.dot(&(f.strain() * n1))).collect();
        for (a, (da, fa, ja, _)) in funcs.iter().enumerate() {
            for (bi, (db, fb, jb, _)) in funcs.iter().enumerate() {
                let mut val = 0.0;
                for (p, w) in rule.iter() {
                    let x = mesh.edge_point(e, p[0]);
                    let jta = ja * fa.eval(x).dot(&t);
                    let jtb = jb * fb.eval(x).dot(&t);
                    let wl = w * len;
                    val += match form {
                        FaceForm::Nitsche(eta) => {
                            wl * (-flux[a] * jtb - flux[bi] * jta + eta / len * jta * jtb)
                        }
                        FaceForm::Penalty => wl * jta * jtb / len,
                    };
                }
                b.push(*db, *da, val);
            }
        }
    }
    Ok(())
}

/// Replaces constrained rows and columns by the identity.
pub fn apply_constraints(a: &CsrMatrix, mask: &[bool]) -> CsrMatrix {
    let mut b = TripletBuilder::new(a.nrows(), a.ncols());
    for (i, j, v) in a.triplets() {
        if !mask[i] && !mask[j] {
            b.push(i, j, v);
        }
    }
    for (i, &m) in mask.iter().enumerate() {
        if m {
            b.push(i, i, 1.0);
        }
    }
    b.finalize()
}

/// Zeroes the given columns.
pub fn drop_columns(a: &CsrMatrix, mask: &[bool]) -> CsrMatrix {
    let mut b = TripletBuilder::new(a.nrows(), a.ncols());
    for (i, j, v) in a.triplets() {
        if !mask[j] {
            b.push(i, j, v);
        }
    }
    b.finalize()
}

pub fn assemble_elasticity(
    mesh: &TriMesh,
    m: &RescaledModel,
    bc: &BoundarySpec,
) -> Result<ElasticityBlocks> {
    if !(m.eta > 0.0) {
        return Err(Error::InvalidParameter(format!("eta must be positive, got {}", m.eta)));
    }
    let nu = 2 * mesh.num_edges();
    let frames = frames(mesh);
    let vol = quadrature_triangle(VOLUME_DEGREE)?;
    let edge_rule = quadrature_edge(EDGE_DEGREE)?;
    let mut ah = TripletBuilder::new(nu, nu);
    let mut dd = TripletBuilder::new(nu, nu);
    let mut rhs = vec![0.0; nu];
    let f = Vector2::new(bc.body_force[0], bc.body_force[1]);
    for frame in &frames {
        let area = frame.area();
        let basis = bdm1_basis(frame)?;
        let dofs = bdm_dofs(frame);
        let eps: Vec<Matrix2<f64>> = basis.iter().map(AffineField::strain).collect();
        for a in 0..6 {
            for b in 0..6 {
                ah.push(dofs[a], dofs[b], area * frob(&eps[a], &eps[b]));
                dd.push(dofs[a], dofs[b], area * basis[a].div() * basis[b].div());
            }
        }
        if f != Vector2::zeros() {
            let j = frame.jacobian();
            let p0 = frame.vertex(0);
            for (p, w) in vol.iter() {
                let x = p0 + j * Vector2::new(p[0], p[1]);
                for a in 0..6 {
                    rhs[dofs[a]] += w * 2.0 * area * f.dot(&basis[a].eval([x.x, x.y]));
                }
            }
        }
    }
    add_face_terms(mesh, &frames, &bc.clamped, FaceForm::Nitsche(m.eta), &mut ah)?;

    for tag in BoundaryTag::ALL {
        let g = Vector2::new(bc.traction[tag.index()][0], bc.traction[tag.index()][1]);
        if bc.clamped.contains(&tag) || g == Vector2::zeros() {
            continue;
        }
        for e in mesh.boundary_edges(tag) {
            let inc = mesh.edge_cells(e)[0];
            let frame = &frames[inc.cell];
            let basis = bdm1_basis(frame)?;
            let dofs = bdm_dofs(frame);
            let len = mesh.edge_length(e);
            for (p, w) in edge_rule.iter() {
                let x = mesh.edge_point(e, p[0]);
                for a in 0..6 {
                    rhs[dofs[a]] += w * len * g.dot(&basis[a].eval(x));
                }
            }
        }
    }

    let a_h = ah.finalize();
    let div_div = dd.finalize();
    let layout = DofLayout::new(mesh, m.n, bc);
    let a_uu = apply_constraints(&a_h.add_scaled(m.lambda, &div_div), &layout.constrained);
    for (r, &c) in rhs.iter_mut().zip(&layout.constrained) {
        if c {
            *r = 0.0;
        }
    }
    Ok(ElasticityBlocks { a_h, div_div, a_uu, rhs_u: rhs })
}

/// Broken `H^1` norm matrix: cellwise gradients plus `|e|^{-1}` weighted
/// tangential jumps on interior and clamped edges.
pub fn assemble_broken_h1(mesh: &TriMesh, bc: &BoundarySpec) -> Result<CsrMatrix> {
    let nu = 2 * mesh.num_edges();
    let frames = frames(mesh);
    let mut b = TripletBuilder::new(nu, nu);
    for frame in &frames {
        let area = frame.area();
        let basis = bdm1_basis(frame)?;
        let dofs = bdm_dofs(frame);
        for a in 0..6 {
            for c in 0..6 {
                b.push(dofs[a], dofs[c], area * frob(&basis[a].grad, &basis[c].grad));
            }
        }
    }
    add_face_terms(mesh, &frames, &bc.clamped, FaceForm::Penalty, &mut b)?;
    Ok(b.finalize())
}

/// Cells by BDM1 dofs, `int_T div phi`.
pub fn assemble_displacement_divergence(mesh: &TriMesh) -> Result<CsrMatrix> {
    let mut b = TripletBuilder::new(mesh.num_cells(), 2 * mesh.num_edges());
    for frame in frames(mesh) {
        let area = frame.area();
        let basis = bdm1_basis(&frame)?;
        for (k, dof) in bdm_dofs(&frame).into_iter().enumerate() {
            b.push(frame.cell, dof, area * basis[k].div());
        }
    }
    Ok(b.finalize())
}

pub fn assemble_flux_blocks(
    mesh: &TriMesh,
    m: &RescaledModel,
    bc: &BoundarySpec,
) -> Result<FluxBlocks> {
    bc.check(m.n)?;
    let ne = mesh.num_edges();
    let vol = quadrature_triangle(VOLUME_DEGREE)?;
    let edge_rule = quadrature_edge(EDGE_DEGREE)?;
    let mut mass = TripletBuilder::new(ne, ne);
    let mut dv = TripletBuilder::new(mesh.num_cells(), ne);
    for frame in frames(mesh) {
        let area = frame.area();
        let basis = rt0_basis(&frame)?;
        let j = frame.jacobian();
        let p0 = frame.vertex(0);
        let pts: Vec<([f64; 2], f64)> = vol
            .iter()
            .map(|(p, w)| {
                let x = p0 + j * Vector2::new(p[0], p[1]);
                ([x.x, x.y], w * 2.0 * area)
            })
            .collect();
        for a in 0..3 {
            dv.push(frame.cell, frame.edge_ids[a], area * basis[a].div());
            for b in 0..3 {
                let val: f64 = pts
                    .iter()
                    .map(|(x, w)| w * basis[a].eval(*x).dot(&basis[b].eval(*x)))
                    .sum();
                mass.push(frame.edge_ids[a], frame.edge_ids[b], val);
            }
        }
    }
    let mut rhs_v = vec![vec![0.0; ne]; m.n];
    for e in mesh.all_boundary_edges() {
        let tag = mesh.boundary_tag(e).expect("boundary edges are tagged");
        let inc = mesh.edge_cells(e)[0];
        let frame = CellFrame::from_mesh(mesh, inc.cell);
        let basis = rt0_basis(&frame)?;
        let ng = mesh.edge_normal(e);
        let n_out = Vector2::new(ng[0], ng[1]) * inc.sign;
        let len = mesh.edge_length(e);
        let flux: f64 = edge_rule
            .iter()
            .map(|(p, w)| w * len * basis[inc.local].eval(mesh.edge_point(e, p[0])).dot(&n_out))
            .sum();
        for (i, rhs) in rhs_v.iter_mut().enumerate() {
            rhs[e] -= bc.pressure[i][tag.index()] * flux;
        }
    }
    let mass = mass.finalize();
    let m_v = m.rinv.iter().map(|&r| mass.scaled(r)).collect();
    Ok(FluxBlocks { mass, m_v, dv: dv.finalize(), rhs_v })
}

/// `M kron diag(areas)` in network-major ordering.
pub fn assemble_pressure_block(areas: &[f64], mat: &DMatrix<f64>) -> Result<CsrMatrix> {
    if mat.nrows() != mat.ncols() {
        return Err(Error::DimensionMismatch { expected: mat.nrows(), got: mat.ncols() });
    }
    let (n, nc) = (mat.nrows(), areas.len());
    let mut b = TripletBuilder::new(n * nc, n * nc);
    for i in 0..n {
        for j in 0..n {
            let mij = mat[(i, j)];
            if mij != 0.0 {
                for (c, a) in areas.iter().enumerate() {
                    b.push(i * nc + c, j * nc + c, mij * a);
                }
            }
        }
    }
    Ok(b.finalize())
}

pub fn assemble_full(mesh: &TriMesh, m: &RescaledModel, bc: &BoundarySpec) -> Result<BlockSystem> {
    bc.check(m.n)?;
    let layout = DofLayout::new(mesh, m.n, bc);
    let el = assemble_elasticity(mesh, m, bc)?;
    let fl = assemble_flux_blocks(mesh, m, bc)?;
    let du = drop_columns(&assemble_displacement_divergence(mesh)?, &layout.constrained);
    let areas = mesh.cell_areas();
    let c_pp = assemble_pressure_block(&areas, &m.pressure_coupling())?;
    let rhs_p = bc.source.iter().map(|g| areas.iter().map(|a| g * a).collect()).collect();
    Ok(BlockSystem {
        layout,
        lambda: m.lambda,
        areas,
        a_h: el.a_h,
        div_div: el.div_div,
        a_uu: el.a_uu,
        m_v: fl.m_v,
        rt_mass: fl.mass,
        du,
        dv: fl.dv,
        c_pp,
        rhs_u: el.rhs_u,
        rhs_v: fl.rhs_v,
        rhs_p,
        monolithic: OnceLock::new(),
    })
}

impl BlockSystem {
    pub fn networks(&self) -> usize {
        self.layout.networks
    }

    /// `B_u`: `Du` repeated for every network.
    pub fn b_u(&self) -> CsrMatrix {
        let n = self.networks();
        let blocks: Vec<Vec<Option<&CsrMatrix>>> = (0..n).map(|_| vec![Some(&self.du)]).collect();
        block_matrix(&blocks, &vec![self.layout.cells; n], &[self.layout.n_u()])
    }

    /// `B_v = blockdiag(Dv)`.
    pub fn b_v(&self) -> CsrMatrix {
        let n = self.networks();
        let blocks: Vec<Vec<Option<&CsrMatrix>>> = (0..n)
            .map(|i| (0..n).map(|j| (i == j).then_some(&self.dv)).collect())
            .collect();
        block_matrix(&blocks, &vec![self.layout.cells; n], &vec![self.layout.edges; n])
    }

    /// `blockdiag(M_v[i])`.
    pub fn m_v_block(&self) -> CsrMatrix {
        let n = self.networks();
        let blocks: Vec<Vec<Option<&CsrMatrix>>> = (0..n)
            .map(|i| (0..n).map(|j| (i == j).then_some(&self.m_v[i])).collect())
            .collect();
        block_matrix(&blocks, &vec![self.layout.edges; n], &vec![self.layout.edges; n])
    }

    /// Full saddle-point matrix, built on first use.
    pub fn monolithic(&self) -> &CsrMatrix {
        self.monolithic.get_or_init(|| self.build_monolithic())
    }

    fn build_monolithic(&self) -> CsrMatrix {
        let bu = self.b_u().scaled(-1.0);
        let bv = self.b_v().scaled(-1.0);
        let but = bu.transpose();
        let bvt = bv.transpose();
        let mv = self.m_v_block();
        let cpp = self.c_pp.scaled(-1.0);
        let l = &self.layout;
        block_matrix(
            &[
                vec![Some(&self.a_uu), None, Some(&but)],
                vec![None, Some(&mv), Some(&bvt)],
                vec![Some(&bu), Some(&bv), Some(&cpp)],
            ],
            &[l.n_u(), l.n_v(), l.n_p()],
            &[l.n_u(), l.n_v(), l.n_p()],
        )
    }

    /// `b - A x` for the full system.
    pub fn residual(&self, x: &[f64]) -> Vec<f64> {
        let ax = self.monolithic().mul_vec(x);
        self.rhs().iter().zip(&ax).map(|(b, a)| b - a).collect()
    }

    pub fn rhs(&self) -> Vec<f64> {
        let mut b = self.rhs_u.clone();
        for r in &self.rhs_v {
            b.extend_from_slice(r);
        }
        for r in &self.rhs_p {
            b.extend_from_slice(r);
        }
        b
    }
}
