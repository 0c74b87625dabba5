//! Lowest-order H(div) and discontinuous elements on triangles.
//!
//! Vector-valued basis functions are affine, so they are stored in closed form
//! as [`AffineField`]s and evaluated exactly. All bases are globally
//! normalized: an RT0 function has unit mean normal flux (along the global
//! edge normal) on its edge, and the two BDM1 functions of an edge are dual to
//! the mean moments of the normal component against `1` and `s`, where `s`
//! runs from the global start vertex of the edge.

pub mod quadrature;

use std::sync::OnceLock;

use nalgebra::{Matrix2, SMatrix, Vector2};

pub use quadrature::{
    quadrature_edge, quadrature_triangle, EdgeRule, QuadratureRule, TriangleRule,
};

use crate::error::{Error, Result};
use crate::mesh::TriMesh;

/// `v(x) = value + grad * (x - origin)`, with `grad[(i, j)] = dv_i/dx_j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineField {
    pub origin: Vector2<f64>,
    pub value: Vector2<f64>,
    pub grad: Matrix2<f64>,
}

impl AffineField {
    pub fn zero() -> Self {
        AffineField {
            origin: Vector2::zeros(),
            value: Vector2::zeros(),
            grad: Matrix2::zeros(),
        }
    }

    pub fn eval(&self, x: [f64; 2]) -> Vector2<f64> {
        self.value + self.grad * (Vector2::new(x[0], x[1]) - self.origin)
    }

    pub fn div(&self) -> f64 {
        self.grad.trace()
    }

    pub fn strain(&self) -> Matrix2<f64> {
        0.5 * (self.grad + self.grad.transpose())
    }

    pub fn scaled(&self, a: f64) -> Self {
        AffineField {
            origin: self.origin,
            value: self.value * a,
            grad: self.grad * a,
        }
    }

    /// `self + a * other`; both must share an origin.
    pub fn axpy(&self, a: f64, other: &AffineField) -> Self {
        debug_assert_eq!(self.origin, other.origin);
        AffineField {
            origin: self.origin,
            value: self.value + other.value * a,
            grad: self.grad + other.grad * a,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Space {
    Bdm1,
    Rt0,
    P0,
}

impl Space {
    pub fn local_dim(self) -> usize {
        match self {
            Space::Bdm1 => 6,
            Space::Rt0 => 3,
            Space::P0 => 1,
        }
    }
}

/// Geometry and edge orientation of one triangle.
#[derive(Debug, Clone, Copy)]
pub struct CellFrame {
    pub cell: usize,
    pub coords: [[f64; 2]; 3],
    pub edge_ids: [usize; 3],
    /// `+1` when the global edge normal is outward for this cell.
    pub signs: [f64; 3],
}

impl CellFrame {
    pub fn from_mesh(mesh: &TriMesh, c: usize) -> Self {
        let ce = mesh.cell_edges(c);
        CellFrame {
            cell: c,
            coords: mesh.cell_coords(c),
            edge_ids: [ce[0].0, ce[1].0, ce[2].0],
            signs: [ce[0].1, ce[1].1, ce[2].1],
        }
    }

    /// A lone triangle whose global edge orientations are the local
    /// counter-clockwise ones.
    pub fn standalone(coords: [[f64; 2]; 3]) -> Self {
        CellFrame {
            cell: 0,
            coords,
            edge_ids: [0, 1, 2],
            signs: [1.0; 3],
        }
    }

    pub fn vertex(&self, k: usize) -> Vector2<f64> {
        Vector2::new(self.coords[k][0], self.coords[k][1])
    }

    pub fn jacobian(&self) -> Matrix2<f64> {
        let p0 = self.vertex(0);
        let (e1, e2) = (self.vertex(1) - p0, self.vertex(2) - p0);
        Matrix2::new(e1.x, e2.x, e1.y, e2.y)
    }

    pub fn area(&self) -> f64 {
        0.5 * self.jacobian().determinant()
    }

    /// Endpoints of local edge `k` in the global orientation.
    pub fn global_endpoints(&self, k: usize) -> (Vector2<f64>, Vector2<f64>) {
        let (a, b) = (self.vertex((k + 1) % 3), self.vertex((k + 2) % 3));
        if self.signs[k] > 0.0 {
            (a, b)
        } else {
            (b, a)
        }
    }

    pub fn edge_length(&self, k: usize) -> f64 {
        let (a, b) = self.global_endpoints(k);
        (b - a).norm()
    }

    /// Global unit normal of local edge `k`.
    pub fn global_normal(&self, k: usize) -> Vector2<f64> {
        let (a, b) = self.global_endpoints(k);
        let t = (b - a) / (b - a).norm();
        Vector2::new(t.y, -t.x)
    }

    fn check(&self) -> Result<()> {
        if self.area() <= 0.0 {
            return Err(Error::DegenerateCell(self.cell));
        }
        Ok(())
    }
}

/// Reference BDM1 functions dual to the local flux moments
/// `F_{k,q}(v) = int_{e_k} v.n s^q ds` (`q = 0, 1`, `s` in `[0,1]` along the
/// counter-clockwise direction). Ordered `[F_00, F_01, F_10, ...]`.
fn reference_bdm1() -> &'static [AffineField; 6] {
    static BASIS: OnceLock<[AffineField; 6]> = OnceLock::new();
    BASIS.get_or_init(|| {
        let verts = [
            Vector2::new(0.0, 0.0),
            Vector2::new(1.0, 0.0),
            Vector2::new(0.0, 1.0),
        ];
        // monomial fields (1,0) (x,0) (y,0) (0,1) (0,x) (0,y)
        let monomial = |j: usize, x: Vector2<f64>| -> Vector2<f64> {
            let s = match j % 3 {
                0 => 1.0,
                1 => x.x,
                _ => x.y,
            };
            if j < 3 {
                Vector2::new(s, 0.0)
            } else {
                Vector2::new(0.0, s)
            }
        };
        let rule = quadrature_edge(3).expect("tabulated");
        let mut m = SMatrix::<f64, 6, 6>::zeros();
        for k in 0..3 {
            let (a, b) = (verts[(k + 1) % 3], verts[(k + 2) % 3]);
            let nu = Vector2::new(b.y - a.y, a.x - b.x);
            for j in 0..6 {
                for (p, w) in rule.iter() {
                    let s = p[0];
                    let f = monomial(j, a + (b - a) * s).dot(&nu);
                    m[(2 * k, j)] += w * f;
                    m[(2 * k + 1, j)] += w * f * s;
                }
            }
        }
        let inv = m.try_inverse().expect("BDM1 moment matrix is invertible");
        std::array::from_fn(|i| {
            let c: [f64; 6] = std::array::from_fn(|j| inv[(j, i)]);
            AffineField {
                origin: Vector2::zeros(),
                value: Vector2::new(c[0], c[3]),
                grad: Matrix2::new(c[1], c[2], c[4], c[5]),
            }
        })
    })
}

/// Contravariant Piola map of a reference field onto the cell.
fn piola(frame: &CellFrame, f: &AffineField) -> AffineField {
    let j = frame.jacobian();
    let det = j.determinant();
    let jinv = j.try_inverse().expect("non-degenerate cell");
    AffineField {
        origin: frame.vertex(0),
        value: j * f.value / det,
        grad: j * f.grad * jinv / det,
    }
}

/// Globally normalized RT0 basis, one function per local edge.
pub fn rt0_basis(frame: &CellFrame) -> Result<[AffineField; 3]> {
    frame.check()?;
    let area = frame.area();
    Ok(std::array::from_fn(|k| {
        // (x - P_k) / (2|T|) has unit outward flux through edge k
        let scale = frame.signs[k] * frame.edge_length(k) / (2.0 * area);
        let pk = frame.vertex(k);
        let p0 = frame.vertex(0);
        AffineField {
            origin: p0,
            value: (p0 - pk) * scale,
            grad: Matrix2::identity() * scale,
        }
    }))
}

/// Globally normalized BDM1 basis; local edge `k` owns entries `2k` (mean
/// normal component) and `2k + 1` (first moment).
pub fn bdm1_basis(frame: &CellFrame) -> Result<[AffineField; 6]> {
    frame.check()?;
    let reference = reference_bdm1();
    let local: [AffineField; 6] = std::array::from_fn(|i| piola(frame, &reference[i]));
    let mut out = [AffineField::zero(); 6];
    for k in 0..3 {
        let len = frame.edge_length(k);
        let sign = frame.signs[k];
        let (phi0, phi1) = (&local[2 * k], &local[2 * k + 1]);
        out[2 * k] = if sign > 0.0 {
            phi0.scaled(len)
        } else {
            // reversed edge: s_global = 1 - s_local and n_global = -n_local
            phi0.axpy(1.0, phi1).scaled(-len)
        };
        out[2 * k + 1] = phi1.scaled(len);
    }
    Ok(out)
}

/// Global BDM1 degrees of freedom of `v` on local edge `k`: the mean normal
/// component and its mean first moment, integrated with `rule`.
pub fn bdm1_edge_dofs(frame: &CellFrame, k: usize, v: &AffineField, rule: &EdgeRule) -> [f64; 2] {
    let (a, b) = frame.global_endpoints(k);
    let n = frame.global_normal(k);
    let mut dofs = [0.0; 2];
    for (p, w) in rule.iter() {
        let s = p[0];
        let x = a + (b - a) * s;
        let vn = v.eval([x.x, x.y]).dot(&n);
        dofs[0] += w * vn;
        dofs[1] += w * vn * s;
    }
    dofs
}

/// Global dof indices of the cell's basis functions, in local order.
pub fn local_dofs(space: Space, frame: &CellFrame) -> Vec<usize> {
    match space {
        Space::Bdm1 => frame
            .edge_ids
            .iter()
            .flat_map(|&e| [2 * e, 2 * e + 1])
            .collect(),
        Space::Rt0 => frame.edge_ids.to_vec(),
        Space::P0 => vec![frame.cell],
    }
}

/// Basis values at the physical quadrature points of one cell.
#[derive(Debug, Clone)]
pub struct ElementTabulation {
    pub space: Space,
    pub dofs: Vec<usize>,
    pub points: Vec<[f64; 2]>,
    /// Physical weights (reference weights times `2|T|`).
    pub weights: Vec<f64>,
    /// `values[i][q]`; scalar spaces store the value in the first component.
    pub values: Vec<Vec<[f64; 2]>>,
    /// Constant divergence per basis function; `None` for P0.
    pub divergence: Option<Vec<f64>>,
    pub fields: Vec<AffineField>,
}

pub fn tabulate(
    space: Space,
    mesh: &TriMesh,
    cell: usize,
    rule: &TriangleRule,
) -> Result<ElementTabulation> {
    tabulate_frame(space, &CellFrame::from_mesh(mesh, cell), rule)
}

pub fn tabulate_frame(
    space: Space,
    frame: &CellFrame,
    rule: &TriangleRule,
) -> Result<ElementTabulation> {
    frame.check()?;
    let j = frame.jacobian();
    let det = j.determinant();
    let p0 = frame.vertex(0);
    let points: Vec<[f64; 2]> = rule
        .points
        .iter()
        .map(|r| {
            let x = p0 + j * Vector2::new(r[0], r[1]);
            [x.x, x.y]
        })
        .collect();
    let weights = rule.weights.iter().map(|w| w * det).collect();
    let fields: Vec<AffineField> = match space {
        Space::Bdm1 => bdm1_basis(frame)?.to_vec(),
        Space::Rt0 => rt0_basis(frame)?.to_vec(),
        Space::P0 => Vec::new(),
    };
    let (values, divergence) = if space == Space::P0 {
        (vec![vec![[1.0, 0.0]; points.len()]], None)
    } else {
        let values = fields
            .iter()
            .map(|f| {
                points
                    .iter()
                    .map(|&x| {
                        let v = f.eval(x);
                        [v.x, v.y]
                    })
                    .collect()
            })
            .collect();
        (values, Some(fields.iter().map(AffineField::div).collect()))
    };
    Ok(ElementTabulation {
        space,
        dofs: local_dofs(space, frame),
        points,
        weights,
        values,
        divergence,
        fields,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_unit_square_mesh;

    const REF: [[f64; 2]; 3] = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];

    fn rt0_mean_flux(frame: &CellFrame, k: usize, v: &AffineField) -> f64 {
        let (a, b) = frame.global_endpoints(k);
        let mid = (a + b) * 0.5;
        v.eval([mid.x, mid.y]).dot(&frame.global_normal(k))
    }

    #[test]
    fn rt0_divergence_on_reference_triangle() {
        let frame = CellFrame::standalone(REF);
        let basis = rt0_basis(&frame).unwrap();
        // |e| / |T| with |T| = 1/2: hypotenuse first
        let expected = [2.0 * 2f64.sqrt(), 2.0, 2.0];
        for (f, e) in basis.iter().zip(expected) {
            assert!((f.div() - e).abs() < 1e-14);
            assert_eq!(f.grad[(0, 1)], 0.0);
        }
    }

    #[test]
    fn rt0_dof_duality() {
        let mesh = build_unit_square_mesh(2).unwrap();
        for c in 0..mesh.num_cells() {
            let frame = CellFrame::from_mesh(&mesh, c);
            let basis = rt0_basis(&frame).unwrap();
            for (i, f) in basis.iter().enumerate() {
                for k in 0..3 {
                    let want = if i == k { 1.0 } else { 0.0 };
                    assert!((rt0_mean_flux(&frame, k, f) - want).abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn bdm1_dof_duality_is_identity() {
        let rule = quadrature_edge(3).unwrap();
        let mesh = build_unit_square_mesh(3).unwrap();
        let mut frames: Vec<CellFrame> =
            (0..mesh.num_cells()).map(|c| CellFrame::from_mesh(&mesh, c)).collect();
        frames.push(CellFrame::standalone(REF));
        frames.push(CellFrame::standalone([[0.2, 0.1], [1.3, 0.4], [0.5, 1.7]]));
        for frame in frames {
            let basis = bdm1_basis(&frame).unwrap();
            for (i, f) in basis.iter().enumerate() {
                for k in 0..3 {
                    let d = bdm1_edge_dofs(&frame, k, f, &rule);
                    for q in 0..2 {
                        let want = if i == 2 * k + q { 1.0 } else { 0.0 };
                        assert!((d[q] - want).abs() < 1e-12, "basis {i} edge {k} moment {q}");
                    }
                }
            }
        }
    }

    #[test]
    fn divergences_are_signed_edge_fluxes() {
        let mesh = build_unit_square_mesh(4).unwrap();
        for c in 0..mesh.num_cells() {
            let frame = CellFrame::from_mesh(&mesh, c);
            let area = frame.area();
            let bdm = bdm1_basis(&frame).unwrap();
            for k in 0..3 {
                let flux = frame.signs[k] * frame.edge_length(k);
                assert!((bdm[2 * k].div() * area - flux).abs() < 1e-14);
                // first-moment functions have zero mean normal flux
                assert!(bdm[2 * k + 1].div().abs() < 1e-12);
            }
        }
    }

    #[test]
    fn normal_traces_match_across_interior_edges() {
        let mesh = build_unit_square_mesh(3).unwrap();
        let rule = quadrature_edge(5).unwrap();
        for e in 0..mesh.num_edges() {
            let inc = mesh.edge_cells(e);
            if inc.len() != 2 {
                continue;
            }
            let n = mesh.edge_normal(e);
            let n = Vector2::new(n[0], n[1]);
            let b: Vec<_> = inc
                .iter()
                .map(|i| bdm1_basis(&CellFrame::from_mesh(&mesh, i.cell)).unwrap())
                .collect();
            let r: Vec<_> = inc
                .iter()
                .map(|i| rt0_basis(&CellFrame::from_mesh(&mesh, i.cell)).unwrap())
                .collect();
            for (p, _) in rule.iter() {
                let x = mesh.edge_point(e, p[0]);
                for q in 0..2 {
                    let v1 = b[0][2 * inc[0].local + q].eval(x).dot(&n);
                    let v2 = b[1][2 * inc[1].local + q].eval(x).dot(&n);
                    assert!((v1 - v2).abs() < 1e-12);
                }
                let w1 = r[0][inc[0].local].eval(x).dot(&n);
                let w2 = r[1][inc[1].local].eval(x).dot(&n);
                assert!((w1 - w2).abs() < 1e-12);
                assert!((w1 - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn bdm1_interpolant_reproduces_linear_divergence() {
        let edge_rule = quadrature_edge(3).unwrap();
        let frame = CellFrame::standalone([[0.1, 0.2], [0.9, 0.3], [0.4, 0.8]]);
        let target = AffineField {
            origin: Vector2::zeros(),
            value: Vector2::new(0.3, -1.1),
            grad: Matrix2::new(1.5, -0.2, 0.7, 2.25),
        };
        let basis = bdm1_basis(&frame).unwrap();
        let mut interp = AffineField {
            origin: basis[0].origin,
            value: Vector2::zeros(),
            grad: Matrix2::zeros(),
        };
        for k in 0..3 {
            let d = bdm1_edge_dofs(&frame, k, &target, &edge_rule);
            interp = interp.axpy(d[0], &basis[2 * k]).axpy(d[1], &basis[2 * k + 1]);
        }
        // P1 fields are reproduced exactly
        for x in [[0.3, 0.4], [0.5, 0.5], [0.1, 0.2]] {
            assert!((interp.eval(x) - target.eval(x)).norm() < 1e-12);
        }
        assert!((interp.div() - target.div()).abs() < 1e-12);
    }

    #[test]
    fn tabulation_shapes() {
        let mesh = build_unit_square_mesh(2).unwrap();
        let rule = quadrature_triangle(4).unwrap();
        let bdm = tabulate(Space::Bdm1, &mesh, 3, &rule).unwrap();
        assert_eq!(bdm.values.len(), 6);
        assert_eq!(bdm.dofs.len(), 6);
        let rt = tabulate(Space::Rt0, &mesh, 3, &rule).unwrap();
        assert_eq!(rt.values.len(), 3);
        let p0 = tabulate(Space::P0, &mesh, 3, &rule).unwrap();
        assert_eq!(p0.values.len(), 1);
        assert!(p0.divergence.is_none());
        assert!(p0.values[0].iter().all(|v| v[0] == 1.0));
        let area: f64 = p0.weights.iter().sum();
        assert!((area - mesh.cell_area(3)).abs() < 1e-15);
    }

    #[test]
    fn degenerate_cell_is_rejected() {
        let frame = CellFrame::standalone([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]]);
        assert!(matches!(rt0_basis(&frame), Err(Error::DegenerateCell(0))));
        let rule = quadrature_triangle(1).unwrap();
        assert!(tabulate_frame(Space::Bdm1, &frame, &rule).is_err());
    }
}
