//! Finite element operators. All velocity operators share one sparsity
//! pattern, so they can be combined value-wise.

use super::THSpace;
use crate::element::p2_gradients;
use crate::error::Result;
use crate::sparse::CsrMatrix;

pub(crate) const QP: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorKind {
    /// `(u, v)` on velocities.
    Mass,
    /// `(grad u, grad v)` on velocities.
    Stiffness,
    /// `(div u, q)`, pressure rows and velocity columns.
    Divergence,
    /// `(div u, div v)`.
    GradDiv,
    /// `(grad p, grad q)` on P1.
    PressureStiffness,
    /// `(p, q)` on P1.
    PressureMass,
}

/// Basis data of one cell at the quadrature points.
pub(crate) struct CellEval {
    pub w: [f64; QP],
    pub phi: [[f64; 6]; QP],
    pub grad: [[[f64; 2]; 6]; QP],
    pub psi: [[f64; 3]; QP],
}

/// Velocity values and gradients (`g[c][d] = d u_c / dx_d`) at the quadrature points.
pub(crate) struct FieldEval {
    pub val: [[f64; 2]; QP],
    pub grad: [[[f64; 2]; 2]; QP],
}

impl FieldEval {
    pub fn div(&self, q: usize) -> f64 {
        self.grad[q][0][0] + self.grad[q][1][1]
    }
}

impl THSpace {
    pub(crate) fn cell_eval(&self, cell: usize) -> CellEval {
        let t = self.tables();
        debug_assert_eq!(t.weights.len(), QP);
        let g = self.cell_geometry(cell);
        let scale = 2.0 * g.area;
        let mut ev = CellEval {
            w: [0.0; QP],
            phi: [[0.0; 6]; QP],
            grad: [[[0.0; 2]; 6]; QP],
            psi: [[0.0; 3]; QP],
        };
        for q in 0..QP {
            ev.w[q] = t.weights[q] * scale;
            ev.phi[q] = t.p2[q];
            ev.psi[q] = t.p1[q];
            ev.grad[q] = p2_gradients(&t.bary[q], &g.grad_lambda);
        }
        ev
    }

    pub(crate) fn field_eval(&self, u: &[f64], cell: usize, ev: &CellEval) -> FieldEval {
        let n = self.n_nodes();
        let nodes = self.cell_nodes(cell);
        let mut f = FieldEval { val: [[0.0; 2]; QP], grad: [[[0.0; 2]; 2]; QP] };
        for (i, &node) in nodes.iter().enumerate() {
            let coef = [u[node], u[n + node]];
            for q in 0..QP {
                for c in 0..2 {
                    f.val[q][c] += coef[c] * ev.phi[q][i];
                    f.grad[q][c][0] += coef[c] * ev.grad[q][i][0];
                    f.grad[q][c][1] += coef[c] * ev.grad[q][i][1];
                }
            }
        }
        f
    }

    /// Accumulates local 12x12 blocks into a matrix on the velocity pattern.
    fn assemble_velocity(&self, mut local: impl FnMut(usize, &CellEval, &mut [[f64; 12]; 12])) -> CsrMatrix {
        let mut m = self.velocity_pattern().clone();
        let vals = m.values_mut();
        let mut a = [[0.0; 12]; 12];
        for cell in 0..self.mesh().n_cells() {
            let ev = self.cell_eval(cell);
            a.iter_mut().for_each(|r| r.fill(0.0));
            local(cell, &ev, &mut a);
            let s = self.velocity_scatter(cell);
            for r in 0..12 {
                for c in 0..12 {
                    vals[s[r * 12 + c]] += a[r][c];
                }
            }
        }
        m
    }

    pub fn assemble(&self, kind: OperatorKind) -> CsrMatrix {
        match kind {
            OperatorKind::Mass | OperatorKind::Stiffness => self.assemble_velocity(|_, ev, a| {
                for q in 0..QP {
                    for i in 0..6 {
                        for j in 0..6 {
                            let v = if kind == OperatorKind::Mass {
                                ev.phi[q][i] * ev.phi[q][j]
                            } else {
                                dot2(ev.grad[q][i], ev.grad[q][j])
                            };
                            a[i][j] += ev.w[q] * v;
                            a[6 + i][6 + j] += ev.w[q] * v;
                        }
                    }
                }
            }),
            OperatorKind::GradDiv => self.assemble_velocity(|_, ev, a| {
                for q in 0..QP {
                    for r in 0..12 {
                        let dr = ev.grad[q][r % 6][r / 6];
                        for c in 0..12 {
                            a[r][c] += ev.w[q] * dr * ev.grad[q][c % 6][c / 6];
                        }
                    }
                }
            }),
            OperatorKind::Divergence => {
                let mut m = self.divergence_pattern.clone();
                let vals = m.values_mut();
                for cell in 0..self.mesh().n_cells() {
                    let ev = self.cell_eval(cell);
                    let s = &self.divergence_scatter[cell];
                    for q in 0..QP {
                        for k in 0..3 {
                            for c in 0..12 {
                                vals[s[k * 12 + c]] += ev.w[q] * ev.psi[q][k] * ev.grad[q][c % 6][c / 6];
                            }
                        }
                    }
                }
                m
            }
            OperatorKind::PressureStiffness => {
                let ones = vec![1.0; self.mesh().n_cells()];
                self.assemble_weighted_pressure_stiffness(&ones)
            }
            OperatorKind::PressureMass => {
                let mut m = self.pressure_pattern.clone();
                let vals = m.values_mut();
                for cell in 0..self.mesh().n_cells() {
                    let ev = self.cell_eval(cell);
                    let s = &self.pressure_scatter[cell];
                    for q in 0..QP {
                        for i in 0..3 {
                            for j in 0..3 {
                                vals[s[i * 3 + j]] += ev.w[q] * ev.psi[q][i] * ev.psi[q][j];
                            }
                        }
                    }
                }
                m
            }
        }
    }

    /// `sum_K weight_K (grad p, grad q)_K` on P1.
    pub fn assemble_weighted_pressure_stiffness(&self, weights: &[f64]) -> CsrMatrix {
        assert_eq!(weights.len(), self.mesh().n_cells());
        let mut m = self.pressure_pattern.clone();
        let vals = m.values_mut();
        for (cell, &wk) in weights.iter().enumerate() {
            let g = self.cell_geometry(cell);
            let s = &self.pressure_scatter[cell];
            for i in 0..3 {
                for j in 0..3 {
                    vals[s[i * 3 + j]] += wk * g.area * dot2(g.grad_lambda[i], g.grad_lambda[j]);
                }
            }
        }
        m
    }

    /// Matrix `N(w)` with `v^T N(w) u = b(w, u, v)`, where
    /// `b(w, u, v) = ((w . grad) u, v) + 1/2 ((div w) u, v)`.
    pub fn assemble_convection(&self, w: &[f64]) -> Result<CsrMatrix> {
        self.check_velocity(w)?;
        Ok(self.assemble_velocity(|cell, ev, a| {
            let f = self.field_eval(w, cell, ev);
            for q in 0..QP {
                let half_div = 0.5 * f.div(q);
                for j in 0..6 {
                    let t = dot2(f.val[q], ev.grad[q][j]) + half_div * ev.phi[q][j];
                    for i in 0..6 {
                        let v = ev.w[q] * t * ev.phi[q][i];
                        a[i][j] += v;
                        a[6 + i][6 + j] += v;
                    }
                }
            }
        }))
    }

    /// Matrix `R(u)` with `v^T R(u) d = b(d, u, v)`, the second half of the
    /// Newton linearization of `b(u, u, v)`.
    pub fn assemble_newton_reaction(&self, u: &[f64]) -> Result<CsrMatrix> {
        self.check_velocity(u)?;
        Ok(self.assemble_velocity(|cell, ev, a| {
            let f = self.field_eval(u, cell, ev);
            for q in 0..QP {
                for c in 0..2 {
                    for i in 0..6 {
                        let wi = ev.w[q] * ev.phi[q][i];
                        for d in 0..2 {
                            for j in 0..6 {
                                a[c * 6 + i][d * 6 + j] += wi
                                    * (ev.phi[q][j] * f.grad[q][c][d] + 0.5 * ev.grad[q][j][d] * f.val[q][c]);
                            }
                        }
                    }
                }
            }
        }))
    }

    /// The vector `(b(w, u, phi_i))_i` without forming `N(w)`.
    pub fn apply_convection(&self, w: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        self.check_velocity(w)?;
        self.check_velocity(u)?;
        let n = self.n_nodes();
        let mut out = vec![0.0; 2 * n];
        for cell in 0..self.mesh().n_cells() {
            let ev = self.cell_eval(cell);
            let fw = self.field_eval(w, cell, &ev);
            let fu = self.field_eval(u, cell, &ev);
            let nodes = self.cell_nodes(cell);
            for q in 0..QP {
                let half_div = 0.5 * fw.div(q);
                for c in 0..2 {
                    let conv = fw.val[q][0] * fu.grad[q][c][0] + fw.val[q][1] * fu.grad[q][c][1]
                        + half_div * fu.val[q][c];
                    for i in 0..6 {
                        out[c * n + nodes[i]] += ev.w[q] * conv * ev.phi[q][i];
                    }
                }
            }
        }
        Ok(out)
    }

    /// The vector `(((w . grad) u, phi_i))_i` without the divergence term.
    pub fn apply_plain_convection(&self, w: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        self.check_velocity(w)?;
        self.check_velocity(u)?;
        let n = self.n_nodes();
        let mut out = vec![0.0; 2 * n];
        for cell in 0..self.mesh().n_cells() {
            let ev = self.cell_eval(cell);
            let fw = self.field_eval(w, cell, &ev);
            let fu = self.field_eval(u, cell, &ev);
            let nodes = self.cell_nodes(cell);
            for q in 0..QP {
                for c in 0..2 {
                    let conv = fw.val[q][0] * fu.grad[q][c][0] + fw.val[q][1] * fu.grad[q][c][1];
                    for i in 0..6 {
                        out[c * n + nodes[i]] += ev.w[q] * conv * ev.phi[q][i];
                    }
                }
            }
        }
        Ok(out)
    }

    /// `b(u, v, w)` by direct quadrature.
    pub fn trilinear(&self, u: &[f64], v: &[f64], w: &[f64]) -> Result<f64> {
        self.check_velocity(u)?;
        self.check_velocity(v)?;
        self.check_velocity(w)?;
        let mut total = 0.0;
        for cell in 0..self.mesh().n_cells() {
            let ev = self.cell_eval(cell);
            let (fu, fv, fw) =
                (self.field_eval(u, cell, &ev), self.field_eval(v, cell, &ev), self.field_eval(w, cell, &ev));
            for q in 0..QP {
                let mut s = 0.0;
                for c in 0..2 {
                    let conv = fu.val[q][0] * fv.grad[q][c][0] + fu.val[q][1] * fv.grad[q][c][1];
                    s += (conv + 0.5 * fu.div(q) * fv.val[q][c]) * fw.val[q][c];
                }
                total += ev.w[q] * s;
            }
        }
        Ok(total)
    }

    /// `(f, phi_i)` for every velocity basis function.
    pub fn load_vector(&self, f: impl Fn([f64; 2]) -> [f64; 2]) -> Vec<f64> {
        let n = self.n_nodes();
        let mut out = vec![0.0; 2 * n];
        let t = self.tables();
        for cell in 0..self.mesh().n_cells() {
            let g = self.cell_geometry(cell);
            let nodes = self.cell_nodes(cell);
            for q in 0..QP {
                let w = t.weights[q] * 2.0 * g.area;
                let fx = f(g.to_physical(&t.bary[q]));
                for i in 0..6 {
                    out[nodes[i]] += w * fx[0] * t.p2[q][i];
                    out[n + nodes[i]] += w * fx[1] * t.p2[q][i];
                }
            }
        }
        out
    }

    /// `(f, psi_i)` for every pressure basis function.
    pub fn pressure_load(&self, f: impl Fn([f64; 2]) -> f64) -> Vec<f64> {
        let mut out = vec![0.0; self.n_pressure()];
        let t = self.tables();
        for cell in 0..self.mesh().n_cells() {
            let g = self.cell_geometry(cell);
            let verts = self.mesh().cells()[cell];
            for q in 0..QP {
                let w = t.weights[q] * 2.0 * g.area;
                let fx = f(g.to_physical(&t.bary[q]));
                for k in 0..3 {
                    out[verts[k]] += w * fx * t.p1[q][k];
                }
            }
        }
        out
    }

    /// `sum_K tau_K (q + (u . grad) u - nu lap_K u - f, grad psi_i)_K` for
    /// every pressure basis function. The convection has no divergence term
    /// and `q` may be omitted.
    pub fn weighted_momentum_load(
        &self,
        tau: &[f64],
        q: Option<&[f64]>,
        u: &[f64],
        nu: f64,
        f: impl Fn([f64; 2]) -> [f64; 2],
    ) -> Result<Vec<f64>> {
        self.check_velocity(u)?;
        if let Some(q) = q {
            self.check_velocity(q)?;
        }
        if tau.len() != self.mesh().n_cells() {
            return Err(crate::error::Error::DimensionMismatch { expected: self.mesh().n_cells(), got: tau.len() });
        }
        let t = self.tables();
        let mut out = vec![0.0; self.n_pressure()];
        for cell in 0..self.mesh().n_cells() {
            let ev = self.cell_eval(cell);
            let g = self.cell_geometry(cell);
            let fu = self.field_eval(u, cell, &ev);
            let fq = q.map(|q| self.field_eval(q, cell, &ev));
            let lap = self.element_laplacian(u, cell);
            let mut total = [0.0; 2];
            for k in 0..QP {
                let fx = f(g.to_physical(&t.bary[k]));
                for c in 0..2 {
                    let conv = fu.val[k][0] * fu.grad[k][c][0] + fu.val[k][1] * fu.grad[k][c][1];
                    let dq = fq.as_ref().map_or(0.0, |e| e.val[k][c]);
                    total[c] += ev.w[k] * (dq + conv - nu * lap[c] - fx[c]);
                }
            }
            for (v, gl) in self.mesh().cells()[cell].iter().zip(&g.grad_lambda) {
                out[*v] += tau[cell] * (total[0] * gl[0] + total[1] * gl[1]);
            }
        }
        Ok(out)
    }

    /// `int psi_i`, so that `m . p` is the integral of `p`.
    pub fn pressure_mean_weights(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_pressure()];
        for cell in 0..self.mesh().n_cells() {
            let a = self.cell_geometry(cell).area / 3.0;
            for &v in &self.mesh().cells()[cell] {
                out[v] += a;
            }
        }
        out
    }
}

#[inline]
pub(crate) fn dot2(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fe_space::BoundarySpec;
    use crate::mesh::{BoundaryTag, Mesh};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn space(n: usize) -> THSpace {
        let m = if n == 1 {
            Mesh::unit_square_two_cells(BoundaryTag::DirichletAll)
        } else {
            Mesh::unit_square_structured(n, BoundaryTag::DirichletAll)
        };
        THSpace::new(m, &BoundarySpec::all_dirichlet()).unwrap()
    }

    fn random(len: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    fn interior_random(s: &THSpace, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let mut v = random(s.n_velocity(), rng);
        s.zero_dirichlet(&mut v);
        v
    }

    #[test]
    fn mass_of_constant_field_is_twice_the_area() {
        let s = space(3);
        let ones = vec![1.0; s.n_velocity()];
        let m = s.assemble(OperatorKind::Mass);
        assert!((m.quad_form(&ones) - 2.0).abs() < 1e-13);
    }

    #[test]
    fn stiffness_annihilates_constants() {
        let s = space(3);
        let ones = vec![1.0; s.n_velocity()];
        let a = s.assemble(OperatorKind::Stiffness);
        assert!(a.mul_vec(&ones).iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn divergence_of_interior_fields_has_zero_mean() {
        let s = space(3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = s.assemble(OperatorKind::Divergence);
        let ones = vec![1.0; s.n_pressure()];
        for _ in 0..5 {
            let v = interior_random(&s, &mut rng);
            assert!(b.bilinear(&ones, &v).abs() < 1e-12);
        }
    }

    #[test]
    fn symmetric_operators_are_symmetric() {
        let s = space(3);
        for kind in [
            OperatorKind::Mass,
            OperatorKind::Stiffness,
            OperatorKind::GradDiv,
            OperatorKind::PressureStiffness,
            OperatorKind::PressureMass,
        ] {
            let a = s.assemble(kind);
            assert!(a.symmetry_defect() <= 1e-12 * a.max_abs(), "{kind:?}");
        }
    }

    #[test]
    fn grad_div_is_positive_semidefinite() {
        let s = space(2);
        let g = s.assemble(OperatorKind::GradDiv);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let x = random(s.n_velocity(), &mut rng);
            let xx: f64 = x.iter().map(|v| v * v).sum();
            assert!(g.quad_form(&x) >= -1e-12 * xx);
        }
    }

    #[test]
    fn convection_matches_trilinear_oracle() {
        let s = space(1);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (w, u, v) = (random(18, &mut rng), random(18, &mut rng), random(18, &mut rng));
        let n = s.assemble_convection(&w).unwrap();
        let direct = s.trilinear(&w, &u, &v).unwrap();
        assert!((n.bilinear(&v, &u) - direct).abs() < 1e-13 * (1.0 + direct.abs()));
        let applied = s.apply_convection(&w, &u).unwrap();
        let dv: f64 = applied.iter().zip(&v).map(|(a, b)| a * b).sum();
        assert!((dv - direct).abs() < 1e-13 * (1.0 + direct.abs()));
    }

    #[test]
    fn convection_is_skew_on_interior_fields() {
        let s = space(3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..5 {
            let w = random(s.n_velocity(), &mut rng);
            let u = interior_random(&s, &mut rng);
            let n = s.assemble_convection(&w).unwrap();
            let scale = n.max_abs() * u.iter().map(|x| x * x).sum::<f64>();
            assert!(n.quad_form(&u).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn zero_wind_gives_zero_convection() {
        let s = space(2);
        let n = s.assemble_convection(&vec![0.0; s.n_velocity()]).unwrap();
        assert_eq!(n.max_abs(), 0.0);
    }

    #[test]
    fn newton_reaction_is_the_directional_derivative() {
        let s = space(2);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (u, d, v) = (
            random(s.n_velocity(), &mut rng),
            random(s.n_velocity(), &mut rng),
            random(s.n_velocity(), &mut rng),
        );
        let r = s.assemble_newton_reaction(&u).unwrap();
        let direct = s.trilinear(&d, &u, &v).unwrap();
        assert!((r.bilinear(&v, &d) - direct).abs() < 1e-12 * (1.0 + direct.abs()));
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let s = space(1);
        assert!(s.assemble_convection(&[0.0; 3]).is_err());
    }

    #[test]
    fn pressure_mean_weights_integrate_linears() {
        let s = space(2);
        let p = s.interpolate_pressure(|x| x[0] + 2.0 * x[1]);
        let m = s.pressure_mean_weights();
        let int: f64 = m.iter().zip(&p).map(|(a, b)| a * b).sum();
        assert!((int - 1.5).abs() < 1e-14);
    }

    #[test]
    fn load_vector_of_constant_force() {
        let s = space(2);
        let f = s.load_vector(|_| [1.0, 0.0]);
        let ones = s.interpolate_velocity(|_| [1.0, 1.0]);
        let total: f64 = f.iter().zip(&ones).map(|(a, b)| a * b).sum();
        assert!((total - 1.0).abs() < 1e-14);
    }
}
