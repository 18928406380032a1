//! Taylor-Hood P2/P1 spaces on a triangular mesh.
//!
//! Velocity unknowns are blocked by component: dof `c * n_nodes + node`,
//! where nodes are the mesh vertices followed by the edge midpoints
//! (node `n_vertices + e` for edge `e`). Pressure unknowns are the vertex
//! values of a continuous P1 function.

mod assembly;
mod evaluate;
mod infsup;

use std::collections::BTreeMap;

use crate::element::{p1_values, p2_values, CellGeometry};
use crate::error::{Error, Result};
use crate::mesh::{BoundaryTag, Mesh};
use crate::quadrature::TriangleRule;
use crate::sparse::CsrMatrix;

pub use assembly::OperatorKind;
pub use infsup::{compute_infsup_constant, infsup_spectrum};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryCondition {
    Dirichlet,
    /// Do-nothing: no boundary term, the natural condition of the weak form.
    Natural,
}

/// Boundary condition type for each boundary tag.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BoundarySpec {
    conditions: BTreeMap<BoundaryTag, BoundaryCondition>,
}

impl BoundarySpec {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, tag: BoundaryTag, condition: BoundaryCondition) -> Self {
        self.conditions.insert(tag, condition);
        self
    }

    /// Dirichlet data on every boundary.
    pub fn all_dirichlet() -> Self {
        BoundaryTag::ALL
            .into_iter()
            .fold(Self::new(), |s, t| s.with(t, BoundaryCondition::Dirichlet))
    }

    /// Channel flow: inflow, walls and obstacle Dirichlet, outlet do-nothing.
    pub fn channel() -> Self {
        Self::all_dirichlet().with(BoundaryTag::Outlet, BoundaryCondition::Natural)
    }

    pub fn condition(&self, tag: BoundaryTag) -> Option<BoundaryCondition> {
        self.conditions.get(&tag).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PressureGauge {
    /// Pressure fixed by a zero-mean constraint (enclosed flow).
    ZeroMean,
    /// Pressure determined by a natural outflow boundary.
    None,
}

/// P2 basis values at the quadrature points of a rule, shared by all cells.
#[derive(Debug, Clone)]
pub(crate) struct ReferenceTables {
    pub bary: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    pub p2: Vec<[f64; 6]>,
    pub p1: Vec<[f64; 3]>,
}

#[derive(Debug, Clone)]
pub struct THSpace {
    mesh: Mesh<f64>,
    n_nodes: usize,
    cell_nodes: Vec<[usize; 6]>,
    node_coords: Vec<[f64; 2]>,
    node_tags: Vec<Vec<BoundaryTag>>,
    dirichlet_node: Vec<bool>,
    dirichlet_dofs: Vec<usize>,
    gauge: PressureGauge,
    bc: BoundarySpec,
    rule: TriangleRule<f64>,
    tables: ReferenceTables,
    geometry: Vec<CellGeometry<f64>>,
    velocity_pattern: CsrMatrix,
    /// For each cell, CSR positions of the local 12x12 velocity block,
    /// local dof `c * 6 + i`, row-major.
    velocity_scatter: Vec<[usize; 144]>,
    pressure_pattern: CsrMatrix,
    pressure_scatter: Vec<[usize; 9]>,
    divergence_pattern: CsrMatrix,
    /// Local 3x12 block, pressure rows.
    divergence_scatter: Vec<[usize; 36]>,
}

impl THSpace {
    pub fn new(mesh: Mesh<f64>, bc: &BoundarySpec) -> Result<Self> {
        let nv = mesh.n_vertices();
        let n_nodes = nv + mesh.n_edges();
        let mut node_coords: Vec<[f64; 2]> = mesh.vertices().to_vec();
        node_coords.extend(mesh.edges().iter().map(|e| {
            let (a, b) = (mesh.vertices()[e.vertices[0]], mesh.vertices()[e.vertices[1]]);
            [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0]
        }));

        let mut node_tags: Vec<Vec<BoundaryTag>> = vec![Vec::new(); n_nodes];
        let mut dirichlet_node = vec![false; n_nodes];
        let mut has_natural = false;
        for (e, edge) in mesh.boundary_edges() {
            let tag = edge.tag.expect("boundary edges are tagged");
            let cond = bc
                .condition(tag)
                .ok_or_else(|| Error::UnassignedBoundaryTag(tag.to_string()))?;
            for node in [edge.vertices[0], edge.vertices[1], nv + e] {
                if !node_tags[node].contains(&tag) {
                    node_tags[node].push(tag);
                }
                if cond == BoundaryCondition::Dirichlet {
                    dirichlet_node[node] = true;
                }
            }
            has_natural |= cond == BoundaryCondition::Natural;
        }
        let mut dirichlet_dofs = Vec::new();
        for c in 0..2 {
            dirichlet_dofs.extend((0..n_nodes).filter(|&n| dirichlet_node[n]).map(|n| c * n_nodes + n));
        }
        let gauge = if has_natural { PressureGauge::None } else { PressureGauge::ZeroMean };

        let cell_nodes: Vec<[usize; 6]> = (0..mesh.n_cells())
            .map(|c| {
                let v = mesh.cells()[c];
                let e = mesh.cell_edges(c);
                [v[0], v[1], v[2], nv + e[0], nv + e[1], nv + e[2]]
            })
            .collect();
        let geometry = (0..mesh.n_cells()).map(|c| mesh.geometry(c)).collect();

        let rule = TriangleRule::<f64>::degree5();
        let tables = ReferenceTables {
            bary: rule.points.clone(),
            weights: rule.weights.clone(),
            p2: rule.points.iter().map(p2_values).collect(),
            p1: rule.points.iter().map(p1_values).collect(),
        };

        let (velocity_pattern, velocity_scatter) = velocity_pattern(&cell_nodes, n_nodes);
        let (pressure_pattern, pressure_scatter) = pressure_pattern(mesh.cells(), nv);
        let (divergence_pattern, divergence_scatter) = divergence_pattern(mesh.cells(), &cell_nodes, nv, n_nodes);

        Ok(Self {
            mesh,
            n_nodes,
            cell_nodes,
            node_coords,
            node_tags,
            dirichlet_node,
            dirichlet_dofs,
            gauge,
            bc: bc.clone(),
            rule,
            tables,
            geometry,
            velocity_pattern,
            velocity_scatter,
            pressure_pattern,
            pressure_scatter,
            divergence_pattern,
            divergence_scatter,
        })
    }

    pub fn mesh(&self) -> &Mesh<f64> {
        &self.mesh
    }

    pub fn boundary_spec(&self) -> &BoundarySpec {
        &self.bc
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_velocity(&self) -> usize {
        2 * self.n_nodes
    }

    pub fn n_pressure(&self) -> usize {
        self.mesh.n_vertices()
    }

    pub fn gauge(&self) -> PressureGauge {
        self.gauge
    }

    pub fn quadrature(&self) -> &TriangleRule<f64> {
        &self.rule
    }

    pub fn cell_nodes(&self, cell: usize) -> [usize; 6] {
        self.cell_nodes[cell]
    }

    pub fn cell_geometry(&self, cell: usize) -> &CellGeometry<f64> {
        &self.geometry[cell]
    }

    pub fn node_coords(&self) -> &[[f64; 2]] {
        &self.node_coords
    }

    /// Sorted velocity dofs carrying Dirichlet data.
    pub fn dirichlet_velocity_dofs(&self) -> &[usize] {
        &self.dirichlet_dofs
    }

    pub fn is_dirichlet_node(&self, node: usize) -> bool {
        self.dirichlet_node[node]
    }

    /// Nodes (vertices and edge midpoints) lying on boundary edges with `tag`.
    pub fn boundary_nodes(&self, tag: BoundaryTag) -> Vec<usize> {
        (0..self.n_nodes).filter(|&n| self.node_tags[n].contains(&tag)).collect()
    }

    pub fn velocity_pattern(&self) -> &CsrMatrix {
        &self.velocity_pattern
    }

    pub(crate) fn velocity_scatter(&self, cell: usize) -> &[usize; 144] {
        &self.velocity_scatter[cell]
    }

    pub(crate) fn tables(&self) -> &ReferenceTables {
        &self.tables
    }

    /// Velocity coefficients of the nodal interpolant of `f`.
    pub fn interpolate_velocity(&self, f: impl Fn([f64; 2]) -> [f64; 2]) -> Vec<f64> {
        let n = self.n_nodes;
        let mut u = vec![0.0; 2 * n];
        for (node, &x) in self.node_coords.iter().enumerate() {
            let v = f(x);
            u[node] = v[0];
            u[n + node] = v[1];
        }
        u
    }

    /// Velocity vector that equals `g` on Dirichlet nodes and vanishes elsewhere.
    pub fn boundary_lift(&self, g: impl Fn([f64; 2]) -> [f64; 2]) -> Vec<f64> {
        let n = self.n_nodes;
        let mut u = vec![0.0; 2 * n];
        for node in (0..n).filter(|&k| self.dirichlet_node[k]) {
            let v = g(self.node_coords[node]);
            u[node] = v[0];
            u[n + node] = v[1];
        }
        u
    }

    pub fn interpolate_pressure(&self, f: impl Fn([f64; 2]) -> f64) -> Vec<f64> {
        self.mesh.vertices().iter().map(|&x| f(x)).collect()
    }

    /// Diameter `h_K` of every cell.
    pub fn cell_diameters(&self) -> Vec<f64> {
        self.geometry.iter().map(|g| g.diameter()).collect()
    }

    /// Physical quadrature points and weights of a cell.
    pub fn cell_quadrature(&self, cell: usize) -> impl Iterator<Item = ([f64; 2], f64)> + '_ {
        let g = &self.geometry[cell];
        let scale = 2.0 * g.area;
        self.tables.bary.iter().zip(&self.tables.weights).map(move |(l, &w)| (g.to_physical(l), w * scale))
    }

    /// Zeroes the Dirichlet entries of a velocity vector.
    pub fn zero_dirichlet(&self, u: &mut [f64]) {
        for &d in &self.dirichlet_dofs {
            u[d] = 0.0;
        }
    }

    pub(crate) fn check_velocity(&self, v: &[f64]) -> Result<()> {
        if v.len() == self.n_velocity() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected: self.n_velocity(), got: v.len() })
        }
    }

    pub(crate) fn check_pressure(&self, p: &[f64]) -> Result<()> {
        if p.len() == self.n_pressure() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected: self.n_pressure(), got: p.len() })
        }
    }
}

fn velocity_pattern(cell_nodes: &[[usize; 6]], n_nodes: usize) -> (CsrMatrix, Vec<[usize; 144]>) {
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n_nodes];
    for nodes in cell_nodes {
        for &a in nodes {
            adj[a].extend_from_slice(nodes);
        }
    }
    for row in &mut adj {
        row.sort_unstable();
        row.dedup();
    }
    let mut rows = Vec::with_capacity(2 * n_nodes);
    for _ in 0..2 {
        for a in &adj {
            let mut r = a.clone();
            r.extend(a.iter().map(|&b| b + n_nodes));
            rows.push(r);
        }
    }
    let pattern = CsrMatrix::from_pattern(2 * n_nodes, &rows);
    let scatter = cell_nodes
        .iter()
        .map(|nodes| {
            let mut s = [0usize; 144];
            for r in 0..12 {
                let gr = (r / 6) * n_nodes + nodes[r % 6];
                for c in 0..12 {
                    let gc = (c / 6) * n_nodes + nodes[c % 6];
                    s[r * 12 + c] = pattern.position(gr, gc).expect("in pattern");
                }
            }
            s
        })
        .collect();
    (pattern, scatter)
}

fn pressure_pattern(cells: &[[usize; 3]], nv: usize) -> (CsrMatrix, Vec<[usize; 9]>) {
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); nv];
    for cell in cells {
        for &a in cell {
            adj[a].extend_from_slice(cell);
        }
    }
    for row in &mut adj {
        row.sort_unstable();
        row.dedup();
    }
    let pattern = CsrMatrix::from_pattern(nv, &adj);
    let scatter = cells
        .iter()
        .map(|cell| {
            let mut s = [0usize; 9];
            for r in 0..3 {
                for c in 0..3 {
                    s[r * 3 + c] = pattern.position(cell[r], cell[c]).expect("in pattern");
                }
            }
            s
        })
        .collect();
    (pattern, scatter)
}

fn divergence_pattern(
    cells: &[[usize; 3]],
    cell_nodes: &[[usize; 6]],
    nv: usize,
    n_nodes: usize,
) -> (CsrMatrix, Vec<[usize; 36]>) {
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); nv];
    for (cell, nodes) in cells.iter().zip(cell_nodes) {
        for &a in cell {
            adj[a].extend(nodes.iter().copied());
            adj[a].extend(nodes.iter().map(|&b| b + n_nodes));
        }
    }
    for row in &mut adj {
        row.sort_unstable();
        row.dedup();
    }
    let pattern = CsrMatrix::from_pattern(2 * n_nodes, &adj);
    let scatter = cells
        .iter()
        .zip(cell_nodes)
        .map(|(cell, nodes)| {
            let mut s = [0usize; 36];
            for r in 0..3 {
                for c in 0..12 {
                    let gc = (c / 6) * n_nodes + nodes[c % 6];
                    s[r * 12 + c] = pattern.position(cell[r], gc).expect("in pattern");
                }
            }
            s
        })
        .collect();
    (pattern, scatter)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_cell() -> THSpace {
        THSpace::new(Mesh::unit_square_two_cells(BoundaryTag::DirichletAll), &BoundarySpec::all_dirichlet()).unwrap()
    }

    #[test]
    fn two_cell_dimensions() {
        let s = two_cell();
        assert_eq!(s.n_velocity(), 18);
        assert_eq!(s.n_pressure(), 4);
        assert_eq!(s.gauge(), PressureGauge::ZeroMean);
        // everything but the diagonal midpoint is on the boundary
        assert_eq!(s.dirichlet_velocity_dofs().len(), 16);
    }

    #[test]
    fn unassigned_tag_is_an_error() {
        let m = Mesh::unit_square_two_cells(BoundaryTag::Outlet);
        let bc = BoundarySpec::new().with(BoundaryTag::Wall, BoundaryCondition::Dirichlet);
        assert!(matches!(THSpace::new(m, &bc), Err(Error::UnassignedBoundaryTag(_))));
    }

    #[test]
    fn natural_boundary_drops_gauge() {
        let m = Mesh::unit_square_structured(2, BoundaryTag::Outlet);
        let s = THSpace::new(m, &BoundarySpec::channel()).unwrap();
        assert_eq!(s.gauge(), PressureGauge::None);
        assert!(s.dirichlet_velocity_dofs().is_empty());
    }

    #[test]
    fn quadrature_weights_sum_to_cell_area() {
        let s = two_cell();
        for c in 0..2 {
            let total: f64 = s.cell_quadrature(c).map(|(_, w)| w).sum();
            assert!((total - 0.5).abs() < 1e-15);
        }
    }
}
