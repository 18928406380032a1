//! Stabilization-motivated pressure recovery: a weighted pressure Poisson
//! problem on the pressure modes with `tau_K = c h_K^2`.

use nalgebra::{DMatrix, DVector};

use super::{momentum_quotient, PressureMethod, PressureRecovery, StepInput};
use crate::error::{Error, Result};
use crate::fe_space::THSpace;
use crate::fom::Scheme;
use crate::sparse::dot;

pub struct SmSystem {
    /// `l[(i, j)] = sum_K tau_K (grad psi_j, grad psi_i)_K`.
    pub matrix: DMatrix<f64>,
    pub tau: Vec<f64>,
    modes: Vec<Vec<f64>>,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    mean_term: DVector<f64>,
    nu: f64,
    dt: f64,
    scheme: Scheme,
    include_quotient: bool,
}

/// `tau_K = c h_K^2` with `h_K` the cell diameter.
pub fn tau_from_diameters(space: &THSpace, c: f64) -> Vec<f64> {
    space.cell_diameters().iter().map(|h| c * h * h).collect()
}

/// Largest `sum_K tau_K |K| (sum_k |p_k| |grad lambda_k|)^2` over the modes,
/// a cancellation-free bound for the diagonal of the weighted stiffness.
fn gradient_scale(space: &THSpace, modes: &[Vec<f64>], tau: &[f64]) -> f64 {
    modes
        .iter()
        .map(|m| {
            (0..space.mesh().n_cells())
                .map(|c| {
                    let g = space.cell_geometry(c);
                    let s: f64 = space.mesh().cells()[c]
                        .iter()
                        .zip(&g.grad_lambda)
                        .map(|(&v, gl)| m[v].abs() * gl[0].hypot(gl[1]))
                        .sum();
                    tau[c] * g.area * s * s
                })
                .sum::<f64>()
        })
        .fold(0.0, f64::max)
}

impl SmSystem {
    pub fn new(
        space: &THSpace,
        modes: &[Vec<f64>],
        mean: Option<&[f64]>,
        tau: Vec<f64>,
        nu: f64,
        dt: f64,
        scheme: Scheme,
    ) -> Result<Self> {
        if modes.is_empty() {
            return Err(Error::RankOutOfRange { r: 0, max: 0 });
        }
        let np = space.n_pressure();
        if let Some(m) = modes.iter().find(|m| m.len() != np) {
            return Err(Error::DimensionMismatch { expected: np, got: m.len() });
        }
        if tau.len() != space.mesh().n_cells() || tau.iter().any(|t| !(*t > 0.0)) {
            return Err(Error::InvalidConfig("tau must be positive on every cell".into()));
        }
        let s = space.assemble_weighted_pressure_stiffness(&tau);
        let sm: Vec<Vec<f64>> = modes.iter().map(|m| s.mul_vec(m)).collect();
        let r = modes.len();
        let l = DMatrix::from_fn(r, r, |i, j| dot(&modes[i], &sm[j]));
        let matrix = (&l + l.transpose()) * 0.5;
        let eig = matrix.clone().symmetric_eigenvalues();
        let lmin = eig.min();
        if !(lmin > 1e-12 * gradient_scale(space, modes, &tau)) {
            return Err(Error::SingularSystem(format!("weighted pressure stiffness, eigenvalue {lmin:e}")));
        }
        let chol = matrix.clone().cholesky().ok_or_else(|| Error::SingularSystem("weighted pressure stiffness".into()))?;
        let mean_term = match mean {
            Some(p) => {
                let sp = s.mul_vec(p);
                DVector::from_fn(r, |i, _| dot(&modes[i], &sp))
            }
            None => DVector::zeros(r),
        };
        Ok(Self { matrix, tau, modes: modes.to_vec(), chol, mean_term, nu, dt, scheme, include_quotient: true })
    }

    /// Drops the time-difference term from the right side.
    pub fn without_quotient(mut self) -> Self {
        self.include_quotient = false;
        self
    }
}

impl PressureRecovery for SmSystem {
    fn method(&self) -> PressureMethod {
        PressureMethod::Sm
    }

    fn rank(&self) -> usize {
        self.modes.len()
    }

    fn scheme(&self) -> Scheme {
        self.scheme
    }

    fn step(&self, space: &THSpace, input: &StepInput<'_>) -> Result<DVector<f64>> {
        let q = self.include_quotient.then(|| momentum_quotient(self.scheme, input, self.dt));
        let g = space.weighted_momentum_load(&self.tau, q.as_deref(), input.u, self.nu, input.forcing)?;
        let rhs = DVector::from_fn(self.rank(), |i, _| -dot(&self.modes[i], &g)) - &self.mean_term;
        Ok(self.chol.solve(&rhs))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fe_space::{BoundarySpec, OperatorKind};
    use crate::mesh::{BoundaryTag, Mesh};

    fn space() -> THSpace {
        THSpace::new(Mesh::unit_square_structured(4, BoundaryTag::DirichletAll), &BoundarySpec::all_dirichlet())
            .unwrap()
    }

    fn modes(s: &THSpace) -> Vec<Vec<f64>> {
        vec![
            s.interpolate_pressure(|x| x[0] - 0.5),
            s.interpolate_pressure(|x| x[0] * x[1] - 0.25),
            s.interpolate_pressure(|x| (3.0 * x[1]).cos()),
        ]
    }

    #[test]
    fn uniform_tau_factors_out() {
        let s = space();
        let m = modes(&s);
        let tau = vec![0.3; s.mesh().n_cells()];
        let sys = SmSystem::new(&s, &m, None, tau, 0.01, 0.01, Scheme::Bdf2).unwrap();
        let sp = s.assemble(OperatorKind::PressureStiffness);
        for i in 0..3 {
            for j in 0..3 {
                assert!((sys.matrix[(i, j)] - 0.3 * sp.bilinear(&m[i], &m[j])).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn two_cell_gram_by_hand() {
        let s = THSpace::new(Mesh::unit_square_structured(1, BoundaryTag::DirichletAll), &BoundarySpec::all_dirichlet())
            .unwrap();
        // psi = x: gradient (1, 0) on both cells of area 1/2
        let psi = s.interpolate_pressure(|x| x[0]);
        let tau = vec![2.0, 5.0];
        let sys = SmSystem::new(&s, &[psi], None, tau, 0.0, 1.0, Scheme::ImplicitEuler).unwrap();
        assert!((sys.matrix[(0, 0)] - (2.0 * 0.5 + 5.0 * 0.5)).abs() < 1e-14);
    }

    #[test]
    fn constant_mode_is_singular() {
        let s = space();
        let c = vec![1.0; s.n_pressure()];
        let tau = tau_from_diameters(&s, 1.0);
        assert!(matches!(SmSystem::new(&s, &[c], None, tau, 0.0, 1.0, Scheme::Bdf2), Err(Error::SingularSystem(_))));
    }

    #[test]
    fn manufactured_gradient_is_recovered() {
        let s = space();
        let m = modes(&s);
        let mean = s.interpolate_pressure(|x| x[1] * x[1]);
        let coeffs = [0.7, -1.3, 0.25];
        let mut q = mean.clone();
        for (c, v) in coeffs.iter().zip(&m) {
            q.iter_mut().zip(v).for_each(|(a, b)| *a += c * b);
        }
        let tau: Vec<f64> = (0..s.mesh().n_cells()).map(|k| 0.01 * (1.0 + (k % 3) as f64)).collect();
        let sys = SmSystem::new(&s, &m, Some(&mean), tau, 0.01, 0.01, Scheme::Bdf2).unwrap();
        let z = vec![0.0; s.n_velocity()];
        let forcing = |x: [f64; 2]| s.eval_pressure_gradient(&q, x).unwrap();
        let input = StepInput { u: &z, u1: &z, u2: Some(&z), forcing: &forcing };
        let c = sys.step(&s, &input).unwrap();
        for k in 0..3 {
            assert!((c[k] - coeffs[k]).abs() < 1e-10);
        }
    }

    #[test]
    fn tau_scaling_leaves_pressure_unchanged() {
        let s = space();
        let m = modes(&s);
        let u = s.interpolate_velocity(|x| [x[1] * (1.0 - x[1]), 0.0]);
        let u1 = s.interpolate_velocity(|x| [0.9 * x[1] * (1.0 - x[1]), 0.0]);
        let forcing = |x: [f64; 2]| [x[0], 1.0];
        let input = StepInput { u: &u, u1: &u1, u2: None, forcing: &forcing };
        let tau = tau_from_diameters(&s, 1.0);
        let a = SmSystem::new(&s, &m, None, tau.clone(), 0.01, 0.01, Scheme::ImplicitEuler).unwrap();
        let b = SmSystem::new(&s, &m, None, tau.iter().map(|t| 7.0 * t).collect(), 0.01, 0.01, Scheme::ImplicitEuler)
            .unwrap();
        let (pa, pb) = (a.step(&s, &input).unwrap(), b.step(&s, &input).unwrap());
        assert!((pa - pb).amax() < 1e-12);
    }

    #[test]
    fn zero_inputs_give_zero_pressure() {
        let s = space();
        let sys = SmSystem::new(&s, &modes(&s), None, tau_from_diameters(&s, 1.0), 0.01, 0.01, Scheme::Bdf2).unwrap();
        let z = vec![0.0; s.n_velocity()];
        let input = StepInput { u: &z, u1: &z, u2: Some(&z), forcing: &|_| [0.0, 0.0] };
        assert_eq!(sys.step(&s, &input).unwrap().norm(), 0.0);
    }
}
