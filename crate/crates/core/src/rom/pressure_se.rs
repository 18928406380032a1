//! Supremizer enrichment: pressure recovery from the momentum equation
//! tested with the H1-orthogonal complement of the divergence-free space.

use nalgebra::{DMatrix, DVector};

use super::{momentum_quotient, PressureMethod, PressureRecovery, StepInput};
use crate::error::{Error, Result};
use crate::fe_space::{OperatorKind, THSpace};
use crate::fom::Scheme;
use crate::sparse::{dot, CsrMatrix, LuFactors};

#[derive(Debug, Clone)]
pub struct SupremizerBasis {
    /// H1-orthonormal supremizers `zeta_i`.
    pub vectors: Vec<Vec<f64>>,
    /// `(grad zeta_i, grad zeta_j)` after orthonormalization.
    pub gram: DMatrix<f64>,
    /// Coupling `d[(i, k)] = (div zeta_i, psi_k)`.
    pub coupling: DMatrix<f64>,
    /// Smallest singular value of the coupling.
    pub beta_r: f64,
}

impl SupremizerBasis {
    pub fn rank(&self) -> usize {
        self.vectors.len()
    }
}

/// Solves `(grad w, grad v) = -(div v, psi_k)` for each mode and
/// orthonormalizes the solutions in the H1 seminorm product.
pub fn compute_supremizers(modes: &[Vec<f64>], space: &THSpace) -> Result<SupremizerBasis> {
    if modes.is_empty() {
        return Err(Error::RankOutOfRange { r: 0, max: 0 });
    }
    let np = space.n_pressure();
    if let Some(m) = modes.iter().find(|m| m.len() != np) {
        return Err(Error::DimensionMismatch { expected: np, got: m.len() });
    }
    let a = space.assemble(OperatorKind::Stiffness);
    let b = space.assemble(OperatorKind::Divergence);
    let lu = LuFactors::new(&a.eliminate_dirichlet(space.dirichlet_velocity_dofs()))?;

    let mut zetas: Vec<Vec<f64>> = Vec::with_capacity(modes.len());
    let mut a_zetas: Vec<Vec<f64>> = Vec::with_capacity(modes.len());
    for (k, psi) in modes.iter().enumerate() {
        let mut rhs: Vec<f64> = b.tr_mul_vec(psi).iter().map(|v| -v).collect();
        space.zero_dirichlet(&mut rhs);
        let mut w = lu.solve(&rhs)?;
        let start = a.quad_form(&w).max(0.0).sqrt();
        for pass in 0..2 {
            for (z, az) in zetas.iter().zip(&a_zetas) {
                let c = dot(az, &w);
                w.iter_mut().zip(z).for_each(|(x, y)| *x -= c * y);
            }
            let aw = a.mul_vec(&w);
            let n = dot(&w, &aw).max(0.0).sqrt();
            if !(n > 1e-10 * start) {
                return Err(Error::RankDeficientSupremizer(k));
            }
            let residual = a_zetas.iter().map(|az| (dot(az, &w) / n).abs()).fold(0.0, f64::max);
            if pass == 1 || residual <= 1e-10 {
                w.iter_mut().for_each(|x| *x /= n);
                a_zetas.push(aw.iter().map(|x| x / n).collect());
                break;
            }
        }
        zetas.push(w);
    }
    let r = zetas.len();
    let gram = DMatrix::from_fn(r, r, |i, j| dot(&zetas[i], &a_zetas[j]));
    let coupling = assemble_se_system_with(&zetas, modes, &b);
    let beta_r = smallest_singular_value(&coupling);
    Ok(SupremizerBasis { vectors: zetas, gram, coupling, beta_r })
}

fn assemble_se_system_with(zetas: &[Vec<f64>], modes: &[Vec<f64>], b: &CsrMatrix) -> DMatrix<f64> {
    let bz: Vec<Vec<f64>> = zetas.iter().map(|z| b.mul_vec(z)).collect();
    DMatrix::from_fn(zetas.len(), modes.len(), |i, k| dot(&bz[i], &modes[k]))
}

/// `D[(i, k)] = (div zeta_i, psi_k)`.
pub fn assemble_se_system(sup: &SupremizerBasis, modes: &[Vec<f64>], space: &THSpace) -> Result<DMatrix<f64>> {
    if modes.len() != sup.rank() {
        return Err(Error::DimensionMismatch { expected: sup.rank(), got: modes.len() });
    }
    Ok(assemble_se_system_with(&sup.vectors, modes, &space.assemble(OperatorKind::Divergence)))
}

fn smallest_singular_value(m: &DMatrix<f64>) -> f64 {
    m.singular_values().iter().copied().fold(f64::INFINITY, f64::min)
}

/// The SE recovery for a fixed rank: factorized coupling and the full-order
/// operators needed for the right side.
pub struct SeSystem {
    sup: SupremizerBasis,
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    mean_term: DVector<f64>,
    mass: CsrMatrix,
    viscous: CsrMatrix,
    nu: f64,
    mu: f64,
    dt: f64,
    scheme: Scheme,
}

impl SeSystem {
    /// `mean` is the pressure offset `pbar` when the modes are fluctuations.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        space: &THSpace,
        modes: &[Vec<f64>],
        mean: Option<&[f64]>,
        nu: f64,
        mu: f64,
        dt: f64,
        scheme: Scheme,
    ) -> Result<Self> {
        let sup = compute_supremizers(modes, space)?;
        let sv = sup.coupling.singular_values();
        let (smax, smin) = (sv.max(), sv.min());
        if !(smin > 1e-12 * smax) {
            return Err(Error::SingularSystem(format!("supremizer coupling, sigma_min {smin:e}")));
        }
        let b = space.assemble(OperatorKind::Divergence);
        let mean_term = match mean {
            Some(p) => DVector::from_fn(sup.rank(), |i, _| dot(&b.mul_vec(&sup.vectors[i]), p)),
            None => DVector::zeros(sup.rank()),
        };
        let mut viscous = space.assemble(OperatorKind::Stiffness);
        viscous.scale(nu);
        let viscous = viscous.add_scaled(mu, &space.assemble(OperatorKind::GradDiv));
        Ok(Self {
            lu: sup.coupling.clone().lu(),
            sup,
            mean_term,
            mass: space.assemble(OperatorKind::Mass),
            viscous,
            nu,
            mu,
            dt,
            scheme,
        })
    }

    pub fn supremizers(&self) -> &SupremizerBasis {
        &self.sup
    }

    pub fn viscosity(&self) -> (f64, f64) {
        (self.nu, self.mu)
    }

    /// Full-order momentum residual without the pressure, as a vector of
    /// functionals on the velocity basis.
    pub fn momentum_functional(&self, space: &THSpace, input: &StepInput<'_>) -> Result<Vec<f64>> {
        let q = momentum_quotient(self.scheme, input, self.dt);
        let mut g = self.mass.mul_vec(&q);
        let conv = space.apply_convection(input.u, input.u)?;
        let visc = self.viscous.mul_vec(input.u);
        for ((gi, c), v) in g.iter_mut().zip(&conv).zip(&visc) {
            *gi += c + v;
        }
        let f = space.load_vector(input.forcing);
        g.iter_mut().zip(&f).for_each(|(a, b)| *a -= b);
        Ok(g)
    }
}

impl PressureRecovery for SeSystem {
    fn method(&self) -> PressureMethod {
        PressureMethod::Se
    }

    fn rank(&self) -> usize {
        self.sup.rank()
    }

    fn scheme(&self) -> Scheme {
        self.scheme
    }

    fn step(&self, space: &THSpace, input: &StepInput<'_>) -> Result<DVector<f64>> {
        let g = self.momentum_functional(space, input)?;
        let rhs = DVector::from_fn(self.rank(), |i, _| dot(&self.sup.vectors[i], &g)) - &self.mean_term;
        self.lu.solve(&rhs).ok_or_else(|| Error::SingularSystem("supremizer coupling".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fe_space::BoundarySpec;
    use crate::mesh::{BoundaryTag, Mesh};

    fn space() -> THSpace {
        THSpace::new(Mesh::unit_square_structured(4, BoundaryTag::DirichletAll), &BoundarySpec::all_dirichlet())
            .unwrap()
    }

    fn zero_mean(s: &THSpace, f: impl Fn([f64; 2]) -> f64) -> Vec<f64> {
        let mut p = s.interpolate_pressure(f);
        let w = s.pressure_mean_weights();
        let m = dot(&w, &p) / w.iter().sum::<f64>();
        p.iter_mut().for_each(|v| *v -= m);
        p
    }

    fn orthonormal(s: &THSpace, raw: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
        let m = s.assemble(OperatorKind::PressureMass);
        let mut out: Vec<Vec<f64>> = Vec::new();
        for mut v in raw {
            for _ in 0..2 {
                for o in &out {
                    let c = m.bilinear(o, &v);
                    v.iter_mut().zip(o).for_each(|(a, b)| *a -= c * b);
                }
            }
            let n = m.quad_form(&v).sqrt();
            v.iter_mut().for_each(|a| *a /= n);
            out.push(v);
        }
        out
    }

    fn modes(s: &THSpace) -> Vec<Vec<f64>> {
        orthonormal(
            s,
            vec![
                zero_mean(s, |x| x[0] - 0.5),
                zero_mean(s, |x| x[0] * x[1]),
                zero_mean(s, |x| (3.0 * x[1]).sin()),
            ],
        )
    }

    #[test]
    fn single_mode_is_normalized() {
        let s = space();
        let m = modes(&s);
        let sup = compute_supremizers(&m[..1], &s).unwrap();
        assert!((sup.gram[(0, 0)] - 1.0).abs() < 1e-12);
        // tested with v = w_1, the defining problem gives (div zeta_1, psi_1) = -|grad w_1|
        let a = s.assemble(OperatorKind::Stiffness);
        let b = s.assemble(OperatorKind::Divergence);
        let mut rhs: Vec<f64> = b.tr_mul_vec(&m[0]).iter().map(|v| -v).collect();
        s.zero_dirichlet(&mut rhs);
        let w = LuFactors::new(&a.eliminate_dirichlet(s.dirichlet_velocity_dofs())).unwrap().solve(&rhs).unwrap();
        let norm = a.quad_form(&w).sqrt();
        assert!((sup.coupling[(0, 0)] + norm).abs() < 1e-10 * norm);
        assert!((sup.beta_r - norm).abs() < 1e-10 * norm);
    }

    #[test]
    fn orthonormal_and_stable() {
        let s = space();
        let sup = compute_supremizers(&modes(&s), &s).unwrap();
        assert!((&sup.gram - DMatrix::identity(3, 3)).amax() < 1e-10);
        let beta = crate::fe_space::compute_infsup_constant(&s).unwrap();
        assert!(sup.beta_r >= beta - 1e-8);
        let d = assemble_se_system(&sup, &modes(&s), &s).unwrap();
        assert!((d - &sup.coupling).amax() < 1e-14);
    }

    #[test]
    fn duplicated_mode_is_rank_deficient() {
        let s = space();
        let m = modes(&s);
        let dup = vec![m[0].clone(), m[1].clone(), m[0].clone()];
        assert!(matches!(compute_supremizers(&dup, &s), Err(Error::RankDeficientSupremizer(2))));
    }

    #[test]
    fn manufactured_gradient_is_recovered() {
        let s = space();
        let m = modes(&s);
        let mean = zero_mean(&s, |x| x[1] * x[1]);
        let coeffs = [0.7, -1.3, 0.25];
        let mut q = mean.clone();
        for (c, v) in coeffs.iter().zip(&m) {
            q.iter_mut().zip(v).for_each(|(a, b)| *a += c * b);
        }
        let sys = SeSystem::new(&s, &m, Some(&mean), 0.01, 0.1, 0.01, Scheme::Bdf2).unwrap();
        let z = vec![0.0; s.n_velocity()];
        let forcing = |x: [f64; 2]| s.eval_pressure_gradient(&q, x).unwrap();
        let input = StepInput { u: &z, u1: &z, u2: Some(&z), forcing: &forcing };
        let c = sys.step(&s, &input).unwrap();
        for k in 0..3 {
            assert!((c[k] - coeffs[k]).abs() < 1e-10, "{k}: {} vs {}", c[k], coeffs[k]);
        }
    }

    #[test]
    fn zero_inputs_give_zero_pressure() {
        let s = space();
        let sys = SeSystem::new(&s, &modes(&s), None, 0.01, 0.1, 0.01, Scheme::ImplicitEuler).unwrap();
        let z = vec![0.0; s.n_velocity()];
        let input = StepInput { u: &z, u1: &z, u2: None, forcing: &|_| [0.0, 0.0] };
        assert_eq!(sys.step(&s, &input).unwrap().norm(), 0.0);
    }
}
