//! Affine triangle geometry and the P1/P2 Lagrange bases.
//!
//! Local P2 node order: vertices 0, 1, 2, then the midpoints of the edges
//! opposite vertex 0, 1 and 2, i.e. edges (1,2), (2,0), (0,1).

use crate::scalar::Real;

/// Local edge `k` joins these two local vertices (it is opposite vertex `k`).
pub const LOCAL_EDGES: [[usize; 2]; 3] = [[1, 2], [2, 0], [0, 1]];

#[derive(Debug, Clone, Copy)]
pub struct CellGeometry<T> {
    pub vertices: [[T; 2]; 3],
    /// Signed area, positive for counterclockwise cells.
    pub area: T,
    /// Constant gradients of the barycentric coordinates.
    pub grad_lambda: [[T; 2]; 3],
}

impl<T: Real> CellGeometry<T> {
    pub fn new(vertices: [[T; 2]; 3]) -> Self {
        let [a, b, c] = vertices;
        let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
        let area = det / T::lit(2.0);
        // grad lambda_i = rot90(opposite edge) / (2 area)
        let g = |p: [T; 2], q: [T; 2]| [(p[1] - q[1]) / det, (q[0] - p[0]) / det];
        let grad_lambda = [g(b, c), g(c, a), g(a, b)];
        Self { vertices, area, grad_lambda }
    }

    pub fn to_physical(&self, l: &[T; 3]) -> [T; 2] {
        let v = &self.vertices;
        [
            l[0] * v[0][0] + l[1] * v[1][0] + l[2] * v[2][0],
            l[0] * v[0][1] + l[1] * v[1][1] + l[2] * v[2][1],
        ]
    }

    pub fn barycentric(&self, x: [T; 2]) -> [T; 3] {
        let v0 = self.vertices[0];
        let g = &self.grad_lambda;
        let dx = [x[0] - v0[0], x[1] - v0[1]];
        let l1 = g[1][0] * dx[0] + g[1][1] * dx[1];
        let l2 = g[2][0] * dx[0] + g[2][1] * dx[1];
        [T::one() - l1 - l2, l1, l2]
    }

    /// Longest edge length, the cell diameter.
    pub fn diameter(&self) -> T {
        LOCAL_EDGES
            .iter()
            .map(|&[i, j]| {
                let (p, q) = (self.vertices[i], self.vertices[j]);
                ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt()
            })
            .fold(T::zero(), T::max)
    }
}

pub fn p1_values<T: Real>(l: &[T; 3]) -> [T; 3] {
    *l
}

pub fn p2_values<T: Real>(l: &[T; 3]) -> [T; 6] {
    let two = T::lit(2.0);
    let four = T::lit(4.0);
    [
        l[0] * (two * l[0] - T::one()),
        l[1] * (two * l[1] - T::one()),
        l[2] * (two * l[2] - T::one()),
        four * l[1] * l[2],
        four * l[2] * l[0],
        four * l[0] * l[1],
    ]
}

pub fn p2_gradients<T: Real>(l: &[T; 3], gl: &[[T; 2]; 3]) -> [[T; 2]; 6] {
    let four = T::lit(4.0);
    let mut out = [[T::zero(); 2]; 6];
    for i in 0..3 {
        let s = four * l[i] - T::one();
        out[i] = [s * gl[i][0], s * gl[i][1]];
    }
    for (k, &[i, j]) in LOCAL_EDGES.iter().enumerate() {
        out[3 + k] = [
            four * (l[i] * gl[j][0] + l[j] * gl[i][0]),
            four * (l[i] * gl[j][1] + l[j] * gl[i][1]),
        ];
    }
    out
}

/// Laplacians of the P2 basis functions, constant on the cell.
pub fn p2_laplacians<T: Real>(gl: &[[T; 2]; 3]) -> [T; 6] {
    let dot = |a: [T; 2], b: [T; 2]| a[0] * b[0] + a[1] * b[1];
    let four = T::lit(4.0);
    let eight = T::lit(8.0);
    [
        four * dot(gl[0], gl[0]),
        four * dot(gl[1], gl[1]),
        four * dot(gl[2], gl[2]),
        eight * dot(gl[1], gl[2]),
        eight * dot(gl[2], gl[0]),
        eight * dot(gl[0], gl[1]),
    ]
}

/// Barycentric coordinates of the six P2 nodes.
pub fn p2_node_barycentric<T: Real>() -> [[T; 3]; 6] {
    let (z, o, h) = (T::zero(), T::one(), T::lit(0.5));
    [[o, z, z], [z, o, z], [z, z, o], [z, h, h], [h, z, h], [h, h, z]]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cell() -> CellGeometry<f64> {
        CellGeometry::new([[0.1, 0.2], [0.9, 0.3], [0.4, 0.8]])
    }

    #[test]
    fn p2_is_nodal() {
        let nodes = p2_node_barycentric::<f64>();
        for (i, l) in nodes.iter().enumerate() {
            let v = p2_values(l);
            for (j, &vj) in v.iter().enumerate() {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((vj - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let g = cell();
        let l = [0.2, 0.5, 0.3];
        let x = g.to_physical(&l);
        let grads = p2_gradients(&l, &g.grad_lambda);
        let eps = 1e-6;
        for d in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[d] += eps;
            xm[d] -= eps;
            let vp = p2_values(&g.barycentric(xp));
            let vm = p2_values(&g.barycentric(xm));
            for i in 0..6 {
                let fd = (vp[i] - vm[i]) / (2.0 * eps);
                assert!((fd - grads[i][d]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn barycentric_round_trip() {
        let g = cell();
        let l = [0.25, 0.35, 0.4];
        let back = g.barycentric(g.to_physical(&l));
        for k in 0..3 {
            assert!((back[k] - l[k]).abs() < 1e-14);
        }
        assert!(g.area > 0.0);
    }

    #[test]
    fn single_precision_geometry() {
        let g = CellGeometry::<f32>::new([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]);
        assert!((g.area - 0.5).abs() < 1e-7);
        assert!((g.diameter() - 2f32.sqrt()).abs() < 1e-6);
    }
}
