//! Galerkin velocity ROM on a POD span, optionally lifted by the snapshot mean.
//!
//! With lifting the reduced velocity is `u_r = ubar + sum_k a_k phi_k`. No
//! pressure term appears because the modes are discretely divergence-free.

use std::io::{self, Write};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fe_space::{OperatorKind, THSpace};
use crate::fom::{FomConfig, Scheme};
use crate::pod::{inner_product_operator, FieldKind, InnerProduct, PodBasis};
use crate::problems::FlowProblem;

/// Terms coupling the lifting field `ubar` to the modes.
#[derive(Debug, Clone)]
pub struct LiftingTerms {
    pub field: Vec<f64>,
    /// `(grad ubar, grad phi_k)`.
    pub stiffness: DVector<f64>,
    /// `(div ubar, div phi_k)`.
    pub grad_div: DVector<f64>,
    /// `b(ubar, ubar, phi_k)`.
    pub convection: DVector<f64>,
    /// Entry `(k, j)` is `b(ubar, phi_j, phi_k)`.
    pub convection_wind: DMatrix<f64>,
    /// Entry `(k, i)` is `b(phi_i, ubar, phi_k)`.
    pub convection_field: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct ReducedOperators {
    inner_product: InnerProduct,
    modes: DMatrix<f64>,
    x_modes: DMatrix<f64>,
    pub mass: DMatrix<f64>,
    pub stiffness: DMatrix<f64>,
    pub grad_div: DMatrix<f64>,
    /// `convection[k][(i, j)] = b(phi_i, phi_j, phi_k)`.
    pub convection: Vec<DMatrix<f64>>,
    pub lifting: Option<LiftingTerms>,
}

impl ReducedOperators {
    pub fn rank(&self) -> usize {
        self.modes.ncols()
    }

    pub fn inner_product(&self) -> InnerProduct {
        self.inner_product
    }

    /// The first `r` modes as columns.
    pub fn modes(&self) -> &DMatrix<f64> {
        &self.modes
    }

    /// `T[i][j][k] = b(phi_i, phi_j, phi_k)`.
    pub fn tensor(&self, i: usize, j: usize, k: usize) -> f64 {
        self.convection[k][(i, j)]
    }

    /// `Phi^T v`, the load functional restricted to the span.
    pub fn project_load(&self, f: &[f64]) -> DVector<f64> {
        self.modes.tr_mul(&DVector::from_column_slice(f))
    }

    /// X-projection coefficients of `u - ubar`.
    pub fn project(&self, u: &[f64]) -> Result<DVector<f64>> {
        if u.len() != self.modes.nrows() {
            return Err(Error::DimensionMismatch { expected: self.modes.nrows(), got: u.len() });
        }
        let mut v = DVector::from_column_slice(u);
        if let Some(l) = &self.lifting {
            v -= DVector::from_column_slice(&l.field);
        }
        Ok(self.x_modes.tr_mul(&v))
    }

    /// `ubar + Phi a`.
    pub fn reconstruct(&self, a: &[f64]) -> Vec<f64> {
        let mut u = &self.modes * DVector::from_column_slice(a);
        if let Some(l) = &self.lifting {
            u += DVector::from_column_slice(&l.field);
        }
        u.as_slice().to_vec()
    }
}

pub fn precompute_reduced_operators(
    basis: &PodBasis,
    r: usize,
    space: &THSpace,
    lifting: Option<&[f64]>,
) -> Result<ReducedOperators> {
    if r > basis.dim() {
        return Err(Error::RankOutOfRange { r, max: basis.dim() });
    }
    let nu = space.n_velocity();
    if let Some(m) = basis.modes.first() {
        if m.len() != nu {
            return Err(Error::DimensionMismatch { expected: nu, got: m.len() });
        }
    }
    let phi = DMatrix::from_fn(nu, r, |i, k| basis.modes[k][i]);
    let x = inner_product_operator(space, FieldKind::Velocity, basis.inner_product);
    let mass_op = space.assemble(OperatorKind::Mass);
    let stiff_op = space.assemble(OperatorKind::Stiffness);
    let gd_op = space.assemble(OperatorKind::GradDiv);
    let galerkin = |a: &DMatrix<f64>| {
        let g = phi.tr_mul(a);
        (&g + g.transpose()) * 0.5
    };
    let mass = galerkin(&mass_op.mul_dense(&phi));
    let stiffness = galerkin(&stiff_op.mul_dense(&phi));
    let grad_div = galerkin(&gd_op.mul_dense(&phi));
    let x_modes = x.mul_dense(&phi);

    let slices: Vec<DMatrix<f64>> = (0..r)
        .into_par_iter()
        .map(|i| -> Result<DMatrix<f64>> {
            let n = space.assemble_convection(phi.column(i).as_slice())?;
            Ok(phi.tr_mul(&n.mul_dense(&phi)))
        })
        .collect::<Result<_>>()?;
    let convection = (0..r).map(|k| DMatrix::from_fn(r, r, |i, j| slices[i][(k, j)])).collect();

    let lifting = match lifting {
        None => None,
        Some(ubar) => {
            if ubar.len() != nu {
                return Err(Error::DimensionMismatch { expected: nu, got: ubar.len() });
            }
            let field = DVector::from_column_slice(ubar);
            let wind = space.assemble_convection(ubar)?;
            let react = space.assemble_newton_reaction(ubar)?;
            Some(LiftingTerms {
                field: ubar.to_vec(),
                stiffness: phi.tr_mul(&DVector::from_vec(stiff_op.mul_vec(ubar))),
                grad_div: phi.tr_mul(&DVector::from_vec(gd_op.mul_vec(ubar))),
                convection: phi.tr_mul(&DVector::from_vec(wind.mul_vec(field.as_slice()))),
                convection_wind: phi.tr_mul(&wind.mul_dense(&phi)),
                convection_field: phi.tr_mul(&react.mul_dense(&phi)),
            })
        }
    };
    Ok(ReducedOperators { inner_product: basis.inner_product, modes: phi, x_modes, mass, stiffness, grad_div, convection, lifting })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RomConfig {
    pub nu: f64,
    pub mu: f64,
    pub dt: f64,
    pub scheme: Scheme,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl RomConfig {
    pub fn from_fom(cfg: &FomConfig) -> Self {
        Self { nu: cfg.nu, mu: cfg.mu, dt: cfg.dt, scheme: cfg.scheme, tolerance: 1e-12, max_iterations: 30 }
    }
}

/// Residual of the reduced momentum equation and its scale.
fn residual(
    ops: &ReducedOperators,
    cfg: &RomConfig,
    alpha: f64,
    m_hist: &DVector<f64>,
    f: &DVector<f64>,
    a: &DVector<f64>,
) -> (DVector<f64>, f64) {
    let r = ops.rank();
    let inertia = &ops.mass * a * (alpha / cfg.dt);
    let visc = (&ops.stiffness * a) * cfg.nu + (&ops.grad_div * a) * cfg.mu;
    let outer = a * a.transpose();
    let conv = DVector::from_fn(r, |k, _| ops.convection[k].dot(&outer));
    let mut res = &inertia - m_hist + &visc + &conv - f;
    let mut scale = inertia.norm() + m_hist.norm() + visc.norm() + conv.norm() + f.norm();
    if let Some(l) = &ops.lifting {
        let lift = &l.stiffness * cfg.nu
            + &l.grad_div * cfg.mu
            + &l.convection
            + &l.convection_wind * a
            + &l.convection_field * a;
        scale += lift.norm();
        res += lift;
    }
    (res, scale)
}

/// One implicit step; `a2` selects BDF2 when the scheme is BDF2.
/// Returns the new coefficients and the Newton iteration count.
pub fn rom_step(
    ops: &ReducedOperators,
    cfg: &RomConfig,
    a1: &DVector<f64>,
    a2: Option<&DVector<f64>>,
    f: &DVector<f64>,
) -> Result<(DVector<f64>, usize)> {
    let r = ops.rank();
    if a1.len() != r || f.len() != r || a2.is_some_and(|a| a.len() != r) {
        return Err(Error::DimensionMismatch { expected: r, got: a1.len() });
    }
    let (alpha, hist, mut a) = match a2 {
        Some(a2) if cfg.scheme == Scheme::Bdf2 => (1.5, a1 * 2.0 - a2 * 0.5, a1 * 2.0 - a2),
        _ => (1.0, a1.clone(), a1.clone()),
    };
    if r == 0 {
        return Ok((a, 0));
    }
    let m_hist = &ops.mass * hist / cfg.dt;
    let mut last = f64::NAN;
    for it in 0..=cfg.max_iterations {
        let (res, scale) = residual(ops, cfg, alpha, &m_hist, f, &a);
        last = res.norm();
        if last <= cfg.tolerance * scale || last == 0.0 {
            return Ok((a, it));
        }
        if it == cfg.max_iterations {
            break;
        }
        let mut jac = &ops.mass * (alpha / cfg.dt) + &ops.stiffness * cfg.nu + &ops.grad_div * cfg.mu;
        for k in 0..r {
            let t = &ops.convection[k];
            let row = t * &a + t.tr_mul(&a);
            for m in 0..r {
                jac[(k, m)] += row[m];
            }
        }
        if let Some(l) = &ops.lifting {
            jac += &l.convection_wind + &l.convection_field;
        }
        let delta = jac
            .lu()
            .solve(&res)
            .ok_or_else(|| Error::SingularSystem("reduced Jacobian".into()))?;
        a -= delta;
    }
    Err(Error::NonlinearDivergence { iterations: cfg.max_iterations, residual: last })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RomTrajectory {
    pub times: Vec<f64>,
    pub coefficients: Vec<Vec<f64>>,
    pub lifted: bool,
    pub r: usize,
    pub scheme: Scheme,
    pub dt: f64,
    pub nu: f64,
    pub mu: f64,
    pub iterations: Vec<usize>,
}

impl RomTrajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn velocity(&self, ops: &ReducedOperators, n: usize) -> Vec<f64> {
        ops.reconstruct(&self.coefficients[n])
    }

    /// CSV with columns `t, a_1..a_r`.
    pub fn write_csv(&self, mut w: impl Write) -> io::Result<()> {
        write!(w, "t")?;
        for k in 1..=self.r {
            write!(w, ",a_{k}")?;
        }
        writeln!(w)?;
        for (t, a) in self.times.iter().zip(&self.coefficients) {
            write!(w, "{t:e}")?;
            for v in a {
                write!(w, ",{v:e}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Advances the ROM over `times` starting from the projection of `u0`.
pub fn run_rom(
    ops: &ReducedOperators,
    cfg: &RomConfig,
    problem: &dyn FlowProblem,
    space: &THSpace,
    times: &[f64],
    u0: &[f64],
) -> Result<RomTrajectory> {
    if times.is_empty() {
        return Err(Error::GridMismatch("empty time grid".into()));
    }
    let a0 = ops.project(u0)?;
    let mut coefficients = vec![a0.as_slice().to_vec()];
    let mut iterations = vec![0];
    let mut a1 = a0;
    let mut a2: Option<DVector<f64>> = None;
    for &t in &times[1..] {
        let f = if ops.rank() == 0 {
            DVector::zeros(0)
        } else {
            ops.project_load(&space.load_vector(|x| problem.forcing(t, x)))
        };
        let (a, its) = rom_step(ops, cfg, &a1, a2.as_ref(), &f)?;
        coefficients.push(a.as_slice().to_vec());
        iterations.push(its);
        a2 = Some(std::mem::replace(&mut a1, a));
    }
    Ok(RomTrajectory {
        times: times.to_vec(),
        coefficients,
        lifted: ops.lifting.is_some(),
        r: ops.rank(),
        scheme: cfg.scheme,
        dt: cfg.dt,
        nu: cfg.nu,
        mu: cfg.mu,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fe_space::BoundarySpec;
    use crate::mesh::{BoundaryTag, Mesh};
    use crate::pod::{compute_pod, FieldKind, PodInput};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn space() -> THSpace {
        THSpace::new(Mesh::unit_square_structured(3, BoundaryTag::DirichletAll), &BoundarySpec::all_dirichlet())
            .unwrap()
    }

    fn random_basis(space: &THSpace, n: usize, ip: InnerProduct, seed: u64) -> PodBasis {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vectors = (0..n)
            .map(|_| {
                let mut v: Vec<f64> = (0..space.n_velocity()).map(|_| rng.gen_range(-1.0..1.0)).collect();
                space.zero_dirichlet(&mut v);
                v
            })
            .collect();
        let input = PodInput { vectors, inner_product: ip, tau: None, kind: FieldKind::Velocity, mean: None };
        compute_pod(&input, space, 1e-12).unwrap()
    }

    fn cfg() -> RomConfig {
        RomConfig { nu: 0.01, mu: 0.1, dt: 0.01, scheme: Scheme::ImplicitEuler, tolerance: 1e-12, max_iterations: 30 }
    }

    #[test]
    fn l2_mass_is_identity() {
        let s = space();
        let ops = precompute_reduced_operators(&random_basis(&s, 4, InnerProduct::L2, 1), 4, &s, None).unwrap();
        assert!((&ops.mass - DMatrix::identity(4, 4)).amax() < 1e-10);
    }

    #[test]
    fn single_mode_stiffness() {
        let s = space();
        let b = random_basis(&s, 2, InnerProduct::L2, 2);
        let ops = precompute_reduced_operators(&b, 1, &s, None).unwrap();
        let a = s.assemble(OperatorKind::Stiffness).quad_form(&b.modes[0]);
        assert!((ops.stiffness[(0, 0)] - a).abs() < 1e-10 * a);
    }

    #[test]
    fn tensor_matches_trilinear_form() {
        let s = space();
        let b = random_basis(&s, 3, InnerProduct::H1, 3);
        let ops = precompute_reduced_operators(&b, 3, &s, None).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    let t = s.trilinear(&b.modes[i], &b.modes[j], &b.modes[k]).unwrap();
                    assert!((ops.tensor(i, j, k) - t).abs() < 1e-10 * (1.0 + t.abs()));
                }
                assert!(ops.tensor(i, j, j).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn symmetric_semidefinite_blocks() {
        let s = space();
        let ops = precompute_reduced_operators(&random_basis(&s, 5, InnerProduct::L2, 4), 5, &s, None).unwrap();
        for m in [&ops.stiffness, &ops.grad_div] {
            assert!((m - m.transpose()).amax() < 1e-10);
            let e = m.clone().symmetric_eigenvalues();
            assert!(e.min() > -1e-10 * e.max().max(1.0));
        }
    }

    #[test]
    fn lifting_terms_match_direct_forms() {
        let s = space();
        let b = random_basis(&s, 3, InnerProduct::L2, 5);
        let ubar = s.interpolate_velocity(|x| [x[0] * x[1], 1.0 - x[0]]);
        let ops = precompute_reduced_operators(&b, 3, &s, Some(&ubar)).unwrap();
        let l = ops.lifting.as_ref().unwrap();
        for k in 0..3 {
            let c0 = s.trilinear(&ubar, &ubar, &b.modes[k]).unwrap();
            assert!((l.convection[k] - c0).abs() < 1e-10);
            for j in 0..3 {
                let w = s.trilinear(&ubar, &b.modes[j], &b.modes[k]).unwrap();
                let f = s.trilinear(&b.modes[j], &ubar, &b.modes[k]).unwrap();
                assert!((l.convection_wind[(k, j)] - w).abs() < 1e-10);
                assert!((l.convection_field[(k, j)] - f).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn rank_out_of_range() {
        let s = space();
        let b = random_basis(&s, 2, InnerProduct::L2, 6);
        assert!(matches!(precompute_reduced_operators(&b, 3, &s, None), Err(Error::RankOutOfRange { .. })));
    }

    #[test]
    fn zero_data_stays_zero() {
        let s = space();
        let ops = precompute_reduced_operators(&random_basis(&s, 3, InnerProduct::L2, 7), 3, &s, None).unwrap();
        let z = DVector::zeros(3);
        let (a, _) = rom_step(&ops, &cfg(), &z, None, &z).unwrap();
        assert_eq!(a.norm(), 0.0);
    }

    #[test]
    fn implicit_euler_is_dissipative() {
        let s = space();
        let ops = precompute_reduced_operators(&random_basis(&s, 4, InnerProduct::L2, 8), 4, &s, None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let z = DVector::zeros(4);
        for _ in 0..20 {
            let a1 = DVector::from_fn(4, |_, _| rng.gen_range(-3.0..3.0));
            let (a, _) = rom_step(&ops, &cfg(), &a1, None, &z).unwrap();
            assert!(a.dot(&(&ops.mass * &a)) <= a1.dot(&(&ops.mass * &a1)) * (1.0 + 1e-12));
        }
    }

    #[test]
    fn newton_reaches_tolerance() {
        let s = space();
        let ops = precompute_reduced_operators(&random_basis(&s, 4, InnerProduct::H1, 10), 4, &s, None).unwrap();
        let c = RomConfig { nu: 1e-4, dt: 0.1, ..cfg() };
        let a1 = DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0]);
        let f = DVector::from_vec(vec![0.3, 0.1, -0.2, 0.0]);
        let (a, its) = rom_step(&ops, &c, &a1, None, &f).unwrap();
        let m_hist = &ops.mass * &a1 / c.dt;
        let (res, scale) = residual(&ops, &c, 1.0, &m_hist, &f, &a);
        assert!(res.norm() <= 1e-12 * scale);
        assert!(its >= 1);
    }

    #[test]
    fn zero_modes_keep_the_lifting() {
        let s = space();
        let b = random_basis(&s, 2, InnerProduct::L2, 11);
        let ubar = s.interpolate_velocity(|x| [x[1], 0.0]);
        let ops = precompute_reduced_operators(&b, 0, &s, Some(&ubar)).unwrap();
        let problem = crate::problems::NoFlow;
        let tr = run_rom(&ops, &cfg(), &problem, &s, &[0.0, 0.01, 0.02], &ubar).unwrap();
        for n in 0..tr.len() {
            assert_eq!(tr.velocity(&ops, n), ubar);
        }
    }
}
