use super::{BoundaryTag, Mesh};
use crate::scalar::Real;

/// Red refinement: every cell split into four through its edge midpoints.
/// New vertices on cylinder edges are pushed radially onto the snap circle.
pub(super) fn refine_uniform<T: Real>(m: &Mesh<T>) -> Mesh<T> {
    let nv = m.n_vertices();
    let half = T::lit(0.5);
    let mut vertices = m.vertices.clone();
    vertices.reserve(m.n_edges());
    for e in &m.edges {
        let (p, q) = (m.vertices[e.vertices[0]], m.vertices[e.vertices[1]]);
        let mut x = [(p[0] + q[0]) * half, (p[1] + q[1]) * half];
        if let (Some(BoundaryTag::Cylinder), Some(c)) = (e.tag, m.snap_circle.as_ref()) {
            x = c.project(x);
        }
        vertices.push(x);
    }

    let mut cells = Vec::with_capacity(4 * m.n_cells());
    for (c, &[v0, v1, v2]) in m.cells.iter().enumerate() {
        let [e0, e1, e2] = m.cell_edges[c];
        let (m0, m1, m2) = (nv + e0, nv + e1, nv + e2);
        cells.push([v0, m2, m1]);
        cells.push([m2, v1, m0]);
        cells.push([m1, m0, v2]);
        cells.push([m0, m1, m2]);
    }

    let mut boundary = Vec::new();
    for (e, edge) in m.boundary_edges() {
        let tag = edge.tag.expect("validated");
        let [a, b] = edge.vertices;
        boundary.push((a, nv + e, tag));
        boundary.push((nv + e, b, tag));
    }

    let refined = Mesh::new(vertices, cells, &boundary).expect("refinement of a valid mesh is valid");
    Mesh { level: m.level + 1, snap_circle: m.snap_circle, ..refined }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_cells_become_eight() {
        let m = Mesh::<f64>::unit_square_two_cells(BoundaryTag::DirichletAll);
        let r = m.refine_uniform();
        assert_eq!(r.n_cells(), 8);
        assert_eq!(r.level(), 2);
        assert!((r.area() - 1.0).abs() < 1e-15);
        assert!((r.stats().h - m.stats().h / 2.0).abs() < 1e-15);
    }

    #[test]
    fn refinement_is_bit_reproducible() {
        let m = Mesh::<f64>::unit_square_structured(3, BoundaryTag::Wall);
        let a = m.refined(2);
        let b = m.refined(2);
        assert_eq!(a.vertices(), b.vertices());
        assert_eq!(a.cells(), b.cells());
        assert_eq!(a.fingerprint(), b.fingerprint());
    }
}
