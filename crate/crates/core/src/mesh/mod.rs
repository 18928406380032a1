//! Conforming triangular meshes with tagged boundaries.

mod io;
mod refine;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::element::{CellGeometry, LOCAL_EDGES};
use crate::error::{Error, Result};
use crate::scalar::Real;

pub use io::{parse_mesh, write_mesh};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BoundaryTag {
    Wall,
    Inlet,
    Outlet,
    Cylinder,
    DirichletAll,
}

impl BoundaryTag {
    pub const ALL: [BoundaryTag; 5] = [
        BoundaryTag::Wall,
        BoundaryTag::Inlet,
        BoundaryTag::Outlet,
        BoundaryTag::Cylinder,
        BoundaryTag::DirichletAll,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BoundaryTag::Wall => "wall",
            BoundaryTag::Inlet => "inlet",
            BoundaryTag::Outlet => "outlet",
            BoundaryTag::Cylinder => "cylinder",
            BoundaryTag::DirichletAll => "dirichlet_all",
        }
    }
}

impl fmt::Display for BoundaryTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BoundaryTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BoundaryTag::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::UnknownBoundaryTag(s.to_string()))
    }
}

/// Circle onto which boundary vertices tagged `cylinder` are projected
/// during refinement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnapCircle<T> {
    pub center: [T; 2],
    pub radius: T,
}

impl<T: Real> SnapCircle<T> {
    pub fn project(&self, x: [T; 2]) -> [T; 2] {
        let d = [x[0] - self.center[0], x[1] - self.center[1]];
        let n = (d[0] * d[0] + d[1] * d[1]).sqrt();
        [
            self.center[0] + self.radius * d[0] / n,
            self.center[1] + self.radius * d[1] / n,
        ]
    }

    pub fn relative_distance(&self, x: [T; 2]) -> T {
        let d = [x[0] - self.center[0], x[1] - self.center[1]];
        ((d[0] * d[0] + d[1] * d[1]).sqrt() - self.radius).abs() / self.radius
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub vertices: [usize; 2],
    /// First cell always present; second cell absent on the boundary.
    pub cells: (usize, Option<usize>),
    pub tag: Option<BoundaryTag>,
}

impl Edge {
    pub fn is_boundary(&self) -> bool {
        self.cells.1.is_none()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshStats<T> {
    pub n_cells: usize,
    pub h: T,
    pub h_min: T,
}

/// Conforming triangulation. Immutable once built.
#[derive(Debug, Clone)]
pub struct Mesh<T = f64> {
    vertices: Vec<[T; 2]>,
    cells: Vec<[usize; 3]>,
    edges: Vec<Edge>,
    cell_edges: Vec<[usize; 3]>,
    level: usize,
    snap_circle: Option<SnapCircle<T>>,
}

impl<T: Real> Mesh<T> {
    /// Builds the mesh and checks every structural invariant.
    ///
    /// `boundary` lists the tagged boundary edges as vertex pairs.
    pub fn new(
        vertices: Vec<[T; 2]>,
        cells: Vec<[usize; 3]>,
        boundary: &[(usize, usize, BoundaryTag)],
    ) -> Result<Self> {
        let nv = vertices.len();
        for (c, cell) in cells.iter().enumerate() {
            if cell.iter().any(|&v| v >= nv) {
                return Err(Error::NonConforming(format!("cell {c} references a missing vertex")));
            }
            let area = CellGeometry::new(cell.map(|v| vertices[v])).area;
            if !(area > T::zero()) {
                return Err(Error::InvertedCell { cell: c, area: area.as_f64() });
            }
        }

        let mut lookup: HashMap<(usize, usize), usize> = HashMap::with_capacity(cells.len() * 2);
        let mut edges: Vec<Edge> = Vec::with_capacity(cells.len() * 2);
        let mut cell_edges = Vec::with_capacity(cells.len());
        for (c, cell) in cells.iter().enumerate() {
            let mut ce = [0usize; 3];
            for (k, &[i, j]) in LOCAL_EDGES.iter().enumerate() {
                let (a, b) = (cell[i], cell[j]);
                let key = (a.min(b), a.max(b));
                let e = match lookup.get(&key) {
                    Some(&e) => {
                        let edge = &mut edges[e];
                        if edge.cells.1.is_some() {
                            return Err(Error::NonConforming(format!(
                                "edge ({}, {}) shared by more than two cells",
                                key.0, key.1
                            )));
                        }
                        edge.cells.1 = Some(c);
                        e
                    }
                    None => {
                        let e = edges.len();
                        lookup.insert(key, e);
                        edges.push(Edge { vertices: [key.0, key.1], cells: (c, None), tag: None });
                        e
                    }
                };
                ce[k] = e;
            }
            cell_edges.push(ce);
        }

        for &(a, b, tag) in boundary {
            let key = (a.min(b), a.max(b));
            let e = *lookup
                .get(&key)
                .ok_or_else(|| Error::NonConforming(format!("boundary entry ({a}, {b}) is not a mesh edge")))?;
            let edge = &mut edges[e];
            if !edge.is_boundary() {
                return Err(Error::NonConforming(format!("boundary entry ({a}, {b}) is an interior edge")));
            }
            if edge.tag.is_some() {
                return Err(Error::NonConforming(format!("boundary edge ({a}, {b}) tagged twice")));
            }
            edge.tag = Some(tag);
        }
        if let Some(edge) = edges.iter().find(|e| e.is_boundary() && e.tag.is_none()) {
            return Err(Error::NonConforming(format!(
                "boundary edge ({}, {}) has no tag",
                edge.vertices[0], edge.vertices[1]
            )));
        }

        Ok(Self { vertices, cells, edges, cell_edges, level: 1, snap_circle: None })
    }

    /// Attaches a snapping circle; every cylinder vertex must already lie on it.
    pub fn with_snap_circle(mut self, circle: SnapCircle<T>) -> Result<Self> {
        let tol = T::lit(1e-12);
        for e in self.edges.iter().filter(|e| e.tag == Some(BoundaryTag::Cylinder)) {
            for &v in &e.vertices {
                if circle.relative_distance(self.vertices[v]) > tol {
                    return Err(Error::NonConforming(format!("cylinder vertex {v} is off the snapping circle")));
                }
            }
        }
        self.snap_circle = Some(circle);
        Ok(self)
    }

    pub fn with_level(mut self, level: usize) -> Self {
        self.level = level;
        self
    }

    pub fn vertices(&self) -> &[[T; 2]] {
        &self.vertices
    }

    pub fn cells(&self) -> &[[usize; 3]] {
        &self.cells
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Global edge indices of a cell, local edge `k` opposite local vertex `k`.
    pub fn cell_edges(&self, cell: usize) -> [usize; 3] {
        self.cell_edges[cell]
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn snap_circle(&self) -> Option<&SnapCircle<T>> {
        self.snap_circle.as_ref()
    }

    pub fn geometry(&self, cell: usize) -> CellGeometry<T> {
        CellGeometry::new(self.cells[cell].map(|v| self.vertices[v]))
    }

    pub fn cell_diameter(&self, cell: usize) -> T {
        self.geometry(cell).diameter()
    }

    pub fn boundary_edges(&self) -> impl Iterator<Item = (usize, &Edge)> {
        self.edges.iter().enumerate().filter(|(_, e)| e.is_boundary())
    }

    /// Boundary edges as `(a, b, tag)` with `a -> b` oriented counterclockwise
    /// around the domain.
    pub fn boundary_list(&self) -> Vec<(usize, usize, BoundaryTag)> {
        self.boundary_edges()
            .map(|(_, e)| {
                let cell = self.cells[e.cells.0];
                let [a, b] = e.vertices;
                let ia = cell.iter().position(|&v| v == a).unwrap();
                let oriented = if cell[(ia + 1) % 3] == b { (a, b) } else { (b, a) };
                (oriented.0, oriented.1, e.tag.expect("validated"))
            })
            .collect()
    }

    /// Tags present in the mesh, sorted.
    pub fn tags(&self) -> Vec<BoundaryTag> {
        let mut t: Vec<_> = self.edges.iter().filter_map(|e| e.tag).collect();
        t.sort();
        t.dedup();
        t
    }

    pub fn area(&self) -> T {
        (0..self.n_cells()).map(|c| self.geometry(c).area).sum()
    }

    pub fn stats(&self) -> MeshStats<T> {
        let (h, h_min) = (0..self.n_cells())
            .map(|c| self.cell_diameter(c))
            .fold((T::zero(), T::infinity()), |(hi, lo), d| (hi.max(d), lo.min(d)));
        MeshStats { n_cells: self.n_cells(), h, h_min }
    }

    /// Stable 64-bit fingerprint of geometry and connectivity.
    pub fn fingerprint(&self) -> u64 {
        let mut hasher = Sha256::new();
        for v in &self.vertices {
            hasher.update(v[0].as_f64().to_le_bytes());
            hasher.update(v[1].as_f64().to_le_bytes());
        }
        for c in &self.cells {
            for &v in c {
                hasher.update((v as u64).to_le_bytes());
            }
        }
        let digest = hasher.finalize();
        u64::from_le_bytes(digest[..8].try_into().unwrap())
    }

    pub fn refine_uniform(&self) -> Self {
        refine::refine_uniform(self)
    }

    pub fn refined(&self, times: usize) -> Self {
        let mut m = self.clone();
        for _ in 0..times {
            m = m.refine_uniform();
        }
        m
    }

    /// Unit square split along the diagonal (0,0)-(1,1), all boundary edges
    /// tagged `tag`.
    pub fn unit_square_two_cells(tag: BoundaryTag) -> Self {
        Self::unit_square_structured(1, tag)
    }

    /// Structured `n x n` grid of the unit square, each square split along
    /// its (0,0)-(1,1) diagonal. All cells are congruent.
    pub fn unit_square_structured(n: usize, tag: BoundaryTag) -> Self {
        let m = n + 1;
        let step = T::one() / T::lit(n as f64);
        let mut vertices = Vec::with_capacity(m * m);
        for j in 0..m {
            for i in 0..m {
                vertices.push([T::lit(i as f64) * step, T::lit(j as f64) * step]);
            }
        }
        let id = |i: usize, j: usize| j * m + i;
        let mut cells = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                cells.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
                cells.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
            }
        }
        let mut boundary = Vec::with_capacity(4 * n);
        for i in 0..n {
            boundary.push((id(i, 0), id(i + 1, 0), tag));
            boundary.push((id(n, i), id(n, i + 1), tag));
            boundary.push((id(i + 1, n), id(i, n), tag));
            boundary.push((id(0, i + 1), id(0, i), tag));
        }
        Self::new(vertices, cells, &boundary).expect("structured square is valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_cell_square_counts() {
        let m = Mesh::<f64>::unit_square_two_cells(BoundaryTag::DirichletAll);
        assert_eq!(m.n_vertices(), 4);
        assert_eq!(m.n_edges(), 5);
        assert_eq!(m.n_cells(), 2);
        let interior = m.edges().iter().filter(|e| !e.is_boundary()).count();
        assert_eq!(interior, 1);
        let s = m.stats();
        assert!((s.h - 2f64.sqrt()).abs() < 1e-15);
        assert!((m.area() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn inverted_cell_is_rejected_with_index() {
        let v = vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        let cells = vec![[0, 1, 2], [0, 3, 2]];
        let err = Mesh::<f64>::new(v, cells, &[]).unwrap_err();
        assert!(matches!(err, Error::InvertedCell { cell: 1, .. }));
    }

    #[test]
    fn untagged_boundary_is_rejected() {
        let v = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let err = Mesh::<f64>::new(v, vec![[0, 1, 2]], &[(0, 1, BoundaryTag::Wall)]).unwrap_err();
        assert!(matches!(err, Error::NonConforming(_)));
    }

    #[test]
    fn tag_round_trip() {
        for t in BoundaryTag::ALL {
            assert_eq!(t.as_str().parse::<BoundaryTag>().unwrap(), t);
        }
        assert!("outflow".parse::<BoundaryTag>().is_err());
    }

    #[test]
    fn boundary_list_is_counterclockwise() {
        let m = Mesh::<f64>::unit_square_structured(3, BoundaryTag::Wall);
        for (a, b, _) in m.boundary_list() {
            let (p, q) = (m.vertices()[a], m.vertices()[b]);
            // outward normal of a ccw boundary points away from the center
            let n = [q[1] - p[1], p[0] - q[0]];
            let mid = [(p[0] + q[0]) / 2.0 - 0.5, (p[1] + q[1]) / 2.0 - 0.5];
            assert!(n[0] * mid[0] + n[1] * mid[1] > 0.0);
        }
    }
}
