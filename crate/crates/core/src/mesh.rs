//! Structured right-triangle meshes of the unit square.
//!
//! Every square of the `N x N` grid is split along its bottom-left to
//! top-right diagonal. Edges carry a global orientation from the lower to the
//! higher vertex id; the global unit normal of an edge is its tangent rotated
//! clockwise. For a counter-clockwise cell the outward normal of a local edge
//! is the clockwise rotation of its counter-clockwise tangent, so the cell
//! sign of an edge is `+1` exactly when the two orientations agree.

use std::collections::HashMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Side of the unit square an edge lies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BoundaryTag {
    /// Γ1, `y = 0`.
    Bottom,
    /// Γ2, `x = 1`.
    Right,
    /// Γ3, `y = 1`.
    Top,
    /// Γ4, `x = 0`.
    Left,
}

impl BoundaryTag {
    pub const ALL: [BoundaryTag; 4] = [
        BoundaryTag::Bottom,
        BoundaryTag::Right,
        BoundaryTag::Top,
        BoundaryTag::Left,
    ];

    pub fn index(self) -> usize {
        match self {
            BoundaryTag::Bottom => 0,
            BoundaryTag::Right => 1,
            BoundaryTag::Top => 2,
            BoundaryTag::Left => 3,
        }
    }

    fn from_midpoint(m: [f64; 2]) -> Option<Self> {
        // coordinates are i/N, so boundary midpoints are exact
        if m[1] == 0.0 {
            Some(BoundaryTag::Bottom)
        } else if m[0] == 1.0 {
            Some(BoundaryTag::Right)
        } else if m[1] == 1.0 {
            Some(BoundaryTag::Top)
        } else if m[0] == 0.0 {
            Some(BoundaryTag::Left)
        } else {
            None
        }
    }
}

/// One incidence of an edge in a cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeIncidence {
    pub cell: usize,
    /// Local edge index in the cell (the edge opposite local vertex `local`).
    pub local: usize,
    /// `+1` if the global edge normal is the outward normal of the cell.
    pub sign: f64,
}

#[derive(Debug, Clone)]
pub struct TriMesh {
    n: usize,
    vertices: Vec<[f64; 2]>,
    cells: Vec<[usize; 3]>,
    edges: Vec<[usize; 2]>,
    cell_edges: Vec<[(usize, f64); 3]>,
    edge_cells: Vec<Vec<EdgeIncidence>>,
    boundary_tag: Vec<Option<BoundaryTag>>,
}

/// Builds the `2N^2`-triangle mesh of `[0,1]^2`.
pub fn build_unit_square_mesh(n: usize) -> Result<TriMesh> {
    TriMesh::unit_square(n)
}

impl TriMesh {
    pub fn unit_square(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyMesh);
        }
        let nv = n + 1;
        let mut vertices = Vec::with_capacity(nv * nv);
        for j in 0..nv {
            for i in 0..nv {
                vertices.push([i as f64 / n as f64, j as f64 / n as f64]);
            }
        }
        let vid = |i: usize, j: usize| j * nv + i;

        let mut cells = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                let a = vid(i, j);
                let b = vid(i + 1, j);
                let c = vid(i + 1, j + 1);
                let d = vid(i, j + 1);
                cells.push([a, b, c]);
                cells.push([a, c, d]);
            }
        }

        let mut lookup: HashMap<(usize, usize), usize> = HashMap::new();
        let mut edges: Vec<[usize; 2]> = Vec::with_capacity(3 * n * n + 2 * n);
        let mut cell_edges = Vec::with_capacity(cells.len());
        let mut edge_cells: Vec<Vec<EdgeIncidence>> = Vec::new();
        for (c, cell) in cells.iter().enumerate() {
            let mut local_edges = [(0usize, 0.0f64); 3];
            for (k, slot) in local_edges.iter_mut().enumerate() {
                let a = cell[(k + 1) % 3];
                let b = cell[(k + 2) % 3];
                let key = (a.min(b), a.max(b));
                let id = *lookup.entry(key).or_insert_with(|| {
                    edges.push([key.0, key.1]);
                    edge_cells.push(Vec::with_capacity(2));
                    edges.len() - 1
                });
                let sign = if a < b { 1.0 } else { -1.0 };
                edge_cells[id].push(EdgeIncidence {
                    cell: c,
                    local: k,
                    sign,
                });
                *slot = (id, sign);
            }
            cell_edges.push(local_edges);
        }

        let boundary_tag = edges
            .iter()
            .zip(&edge_cells)
            .map(|(e, inc)| {
                if inc.len() == 1 {
                    let (p, q) = (vertices[e[0]], vertices[e[1]]);
                    BoundaryTag::from_midpoint([0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])])
                } else {
                    None
                }
            })
            .collect();

        Ok(TriMesh {
            n,
            vertices,
            cells,
            edges,
            cell_edges,
            edge_cells,
            boundary_tag,
        })
    }

    /// Subdivisions per side.
    pub fn subdivisions(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn vertex(&self, v: usize) -> [f64; 2] {
        self.vertices[v]
    }

    pub fn cells(&self) -> &[[usize; 3]] {
        &self.cells
    }

    pub fn cell(&self, c: usize) -> [usize; 3] {
        self.cells[c]
    }

    pub fn cell_coords(&self, c: usize) -> [[f64; 2]; 3] {
        let [a, b, d] = self.cells[c];
        [self.vertices[a], self.vertices[b], self.vertices[d]]
    }

    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    pub fn edge(&self, e: usize) -> [usize; 2] {
        self.edges[e]
    }

    /// `(edge id, sign)` for the three local edges of a cell; local edge `k`
    /// is opposite local vertex `k`.
    pub fn cell_edges(&self, c: usize) -> [(usize, f64); 3] {
        self.cell_edges[c]
    }

    pub fn edge_cells(&self, e: usize) -> &[EdgeIncidence] {
        &self.edge_cells[e]
    }

    pub fn boundary_tag(&self, e: usize) -> Option<BoundaryTag> {
        self.boundary_tag[e]
    }

    pub fn is_boundary_edge(&self, e: usize) -> bool {
        self.edge_cells[e].len() == 1
    }

    pub fn cell_area(&self, c: usize) -> f64 {
        let [p, q, r] = self.cell_coords(c);
        0.5 * ((q[0] - p[0]) * (r[1] - p[1]) - (r[0] - p[0]) * (q[1] - p[1]))
    }

    pub fn cell_areas(&self) -> Vec<f64> {
        (0..self.num_cells()).map(|c| self.cell_area(c)).collect()
    }

    pub fn cell_centroid(&self, c: usize) -> [f64; 2] {
        let [p, q, r] = self.cell_coords(c);
        [(p[0] + q[0] + r[0]) / 3.0, (p[1] + q[1] + r[1]) / 3.0]
    }

    pub fn edge_length(&self, e: usize) -> f64 {
        let [a, b] = self.edges[e];
        let (p, q) = (self.vertices[a], self.vertices[b]);
        (q[0] - p[0]).hypot(q[1] - p[1])
    }

    pub fn edge_midpoint(&self, e: usize) -> [f64; 2] {
        let [a, b] = self.edges[e];
        let (p, q) = (self.vertices[a], self.vertices[b]);
        [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])]
    }

    /// Unit normal of the globally oriented edge (tangent rotated clockwise).
    pub fn edge_normal(&self, e: usize) -> [f64; 2] {
        let [a, b] = self.edges[e];
        let (p, q) = (self.vertices[a], self.vertices[b]);
        let (tx, ty) = (q[0] - p[0], q[1] - p[1]);
        let len = tx.hypot(ty);
        [ty / len, -tx / len]
    }

    /// Point at parameter `s` in `[0, 1]` along the globally oriented edge.
    pub fn edge_point(&self, e: usize, s: f64) -> [f64; 2] {
        let [a, b] = self.edges[e];
        let (p, q) = (self.vertices[a], self.vertices[b]);
        [p[0] + s * (q[0] - p[0]), p[1] + s * (q[1] - p[1])]
    }

    pub fn boundary_edges(&self, tag: BoundaryTag) -> Vec<usize> {
        (0..self.num_edges())
            .filter(|&e| self.boundary_tag[e] == Some(tag))
            .collect()
    }

    pub fn all_boundary_edges(&self) -> Vec<usize> {
        (0..self.num_edges())
            .filter(|&e| self.is_boundary_edge(e))
            .collect()
    }

    /// Plain-text listing, one entity per line.
    pub fn write_dump<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "# N={} vertices={} edges={} cells={}",
            self.n,
            self.num_vertices(),
            self.num_edges(),
            self.num_cells()
        )?;
        for (i, v) in self.vertices.iter().enumerate() {
            writeln!(w, "v {i} {} {}", v[0], v[1])?;
        }
        for (i, e) in self.edges.iter().enumerate() {
            let tag = match self.boundary_tag[i] {
                Some(t) => format!("{t:?}"),
                None => "interior".to_string(),
            };
            writeln!(w, "e {i} {} {} {tag}", e[0], e[1])?;
        }
        for (i, c) in self.cells.iter().enumerate() {
            let ce = self.cell_edges[i];
            writeln!(
                w,
                "c {i} {} {} {} edges {}:{:+} {}:{:+} {}:{:+}",
                c[0], c[1], c[2], ce[0].0, ce[0].1, ce[1].0, ce[1].1, ce[2].0, ce[2].1
            )?;
        }
        Ok(())
    }
}
