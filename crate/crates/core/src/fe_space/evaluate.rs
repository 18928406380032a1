//! Point evaluation of finite element fields.

use super::THSpace;
use crate::element::{p1_values, p2_gradients, p2_laplacians, p2_values};
use crate::error::{Error, Result};

const INSIDE_TOL: f64 = 1e-12;

impl THSpace {
    /// Cell containing `x` and the barycentric coordinates of `x` in it.
    /// Points on shared edges resolve to the cell where they are most interior.
    pub fn locate(&self, x: [f64; 2]) -> Result<(usize, [f64; 3])> {
        let mut best: Option<(usize, [f64; 3], f64)> = None;
        for cell in 0..self.mesh().n_cells() {
            let l = self.cell_geometry(cell).barycentric(x);
            let worst = l[0].min(l[1]).min(l[2]);
            if worst >= -INSIDE_TOL && best.is_none_or(|b| worst > b.2) {
                best = Some((cell, l, worst));
            }
        }
        best.map(|(c, l, _)| (c, l)).ok_or(Error::PointNotFound(x[0], x[1]))
    }

    pub fn eval_velocity(&self, u: &[f64], x: [f64; 2]) -> Result<[f64; 2]> {
        self.check_velocity(u)?;
        let (cell, l) = self.locate(x)?;
        let n = self.n_nodes();
        let phi = p2_values(&l);
        let mut out = [0.0; 2];
        for (i, &node) in self.cell_nodes(cell).iter().enumerate() {
            out[0] += u[node] * phi[i];
            out[1] += u[n + node] * phi[i];
        }
        Ok(out)
    }

    /// `g[c][d] = d u_c / dx_d` at `x`.
    pub fn eval_velocity_gradient(&self, u: &[f64], x: [f64; 2]) -> Result<[[f64; 2]; 2]> {
        self.check_velocity(u)?;
        let (cell, l) = self.locate(x)?;
        let n = self.n_nodes();
        let grad = p2_gradients(&l, &self.cell_geometry(cell).grad_lambda);
        let mut out = [[0.0; 2]; 2];
        for (i, &node) in self.cell_nodes(cell).iter().enumerate() {
            for d in 0..2 {
                out[0][d] += u[node] * grad[i][d];
                out[1][d] += u[n + node] * grad[i][d];
            }
        }
        Ok(out)
    }

    pub fn eval_pressure(&self, p: &[f64], x: [f64; 2]) -> Result<f64> {
        self.check_pressure(p)?;
        let (cell, l) = self.locate(x)?;
        let psi = p1_values(&l);
        Ok(self.mesh().cells()[cell].iter().zip(psi).map(|(&v, s)| p[v] * s).sum())
    }

    /// Gradient of a P1 field, constant on the containing cell.
    pub fn eval_pressure_gradient(&self, p: &[f64], x: [f64; 2]) -> Result<[f64; 2]> {
        self.check_pressure(p)?;
        let (cell, _) = self.locate(x)?;
        let g = &self.cell_geometry(cell).grad_lambda;
        let mut out = [0.0; 2];
        for (k, &v) in self.mesh().cells()[cell].iter().enumerate() {
            out[0] += p[v] * g[k][0];
            out[1] += p[v] * g[k][1];
        }
        Ok(out)
    }

    /// Laplacian of the velocity field restricted to `cell`, constant there.
    pub fn element_laplacian(&self, u: &[f64], cell: usize) -> [f64; 2] {
        let n = self.n_nodes();
        let lap = p2_laplacians(&self.cell_geometry(cell).grad_lambda);
        let mut out = [0.0; 2];
        for (i, &node) in self.cell_nodes(cell).iter().enumerate() {
            out[0] += u[node] * lap[i];
            out[1] += u[n + node] * lap[i];
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use crate::fe_space::{BoundarySpec, THSpace};
    use crate::mesh::{BoundaryTag, Mesh};

    fn space() -> THSpace {
        THSpace::new(Mesh::unit_square_structured(3, BoundaryTag::DirichletAll), &BoundarySpec::all_dirichlet())
            .unwrap()
    }

    #[test]
    fn quadratic_velocity_is_reproduced() {
        let s = space();
        let u = s.interpolate_velocity(|x| [x[0] * x[0], x[1] * x[1]]);
        let v = s.eval_velocity(&u, [0.3, 0.7]).unwrap();
        assert!((v[0] - 0.09).abs() < 1e-14 && (v[1] - 0.49).abs() < 1e-14);
        let g = s.eval_velocity_gradient(&u, [0.3, 0.7]).unwrap();
        assert!((g[0][0] - 0.6).abs() < 1e-13 && g[0][1].abs() < 1e-13);
        assert!((g[1][1] - 1.4).abs() < 1e-13 && g[1][0].abs() < 1e-13);
        for cell in 0..s.mesh().n_cells() {
            let lap = s.element_laplacian(&u, cell);
            assert!((lap[0] - 2.0).abs() < 1e-11 && (lap[1] - 2.0).abs() < 1e-11);
        }
    }

    #[test]
    fn linear_pressure_is_reproduced() {
        let s = space();
        let p = s.interpolate_pressure(|x| x[0] + x[1]);
        assert!((s.eval_pressure(&p, [0.25, 0.5]).unwrap() - 0.75).abs() < 1e-15);
        let g = s.eval_pressure_gradient(&p, [0.25, 0.5]).unwrap();
        assert!((g[0] - 1.0).abs() < 1e-13 && (g[1] - 1.0).abs() < 1e-13);
    }

    #[test]
    fn outside_point_is_an_error() {
        let s = space();
        let p = vec![0.0; s.n_pressure()];
        assert!(s.eval_pressure(&p, [1.5, 0.5]).is_err());
    }
}
