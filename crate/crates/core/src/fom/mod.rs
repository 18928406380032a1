//! Grad-div stabilized Navier-Stokes full order model.
//!
//! Each time step solves
//!
//! ```text
//! (d_t u, v) + nu (grad u, grad v) + b(u, u, v) + mu (div u, div v) - (div v, p) = (f, v)
//! (div u, q) = 0
//! ```
//!
//! with an implicit Euler or BDF2 quotient for `d_t u` and Picard or Newton
//! iterations for the trilinear term.

mod saddle;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fe_space::{OperatorKind, THSpace};
use crate::problems::FlowProblem;
use crate::sparse::{norm2, use_sequential_kernels, CsrMatrix, LuFactors};
use saddle::SaddleSystem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    ImplicitEuler,
    Bdf2,
}

impl Scheme {
    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::ImplicitEuler => "implicit_euler",
            Scheme::Bdf2 => "bdf2",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "implicit_euler" => Ok(Scheme::ImplicitEuler),
            "bdf2" => Ok(Scheme::Bdf2),
            _ => Err(Error::InvalidConfig(format!("unknown time scheme `{s}`"))),
        }
    }
}

/// Scheme-consistent difference quotient at step `n` from `u^n`, `u^{n-1}`
/// and, for BDF2, `u^{n-2}`. BDF2 without a second back state falls back to
/// the backward quotient, as on the first step.
pub fn difference_quotient(scheme: Scheme, u: &[f64], u1: &[f64], u2: Option<&[f64]>, dt: f64) -> Vec<f64> {
    match (scheme, u2) {
        (Scheme::Bdf2, Some(u2)) => {
            u.iter().zip(u1).zip(u2).map(|((a, b), c)| (3.0 * a - 4.0 * b + c) / (2.0 * dt)).collect()
        }
        _ => u.iter().zip(u1).map(|(a, b)| (a - b) / dt).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NonlinearMethod {
    Picard,
    Newton,
}

impl FromStr for NonlinearMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "picard" => Ok(NonlinearMethod::Picard),
            "newton" => Ok(NonlinearMethod::Newton),
            _ => Err(Error::InvalidConfig(format!("unknown nonlinear method `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NonlinearSettings {
    /// Bound on the algebraic residual relative to the right-hand side.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub method: NonlinearMethod,
}

impl Default for NonlinearSettings {
    fn default() -> Self {
        Self { tolerance: 1e-10, max_iterations: 50, method: NonlinearMethod::Picard }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FomConfig {
    pub nu: f64,
    pub mu: f64,
    pub dt: f64,
    pub t_start: f64,
    pub t_end: f64,
    /// Snapshots are kept from this time on.
    pub record_start: f64,
    pub scheme: Scheme,
    pub nonlinear: NonlinearSettings,
}

impl FomConfig {
    pub fn noflow() -> Self {
        Self {
            nu: 0.01,
            mu: 0.1,
            dt: 0.005,
            t_start: 0.0,
            t_end: 1.0,
            record_start: 0.0,
            scheme: Scheme::Bdf2,
            nonlinear: NonlinearSettings::default(),
        }
    }

    pub fn cylinder() -> Self {
        Self {
            nu: 1e-3,
            mu: 0.1,
            dt: 0.005,
            t_start: 0.0,
            t_end: 10.0,
            record_start: 8.0,
            scheme: Scheme::Bdf2,
            nonlinear: NonlinearSettings::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.nu > 0.0) {
            return bad("viscosity must be positive");
        }
        if !(self.mu >= 0.0) {
            return bad("grad-div parameter must be nonnegative");
        }
        if !(self.dt > 0.0) {
            return bad("time step must be positive");
        }
        if !(self.t_end > self.t_start) {
            return bad("end time must exceed start time");
        }
        if !(self.record_start >= self.t_start && self.record_start <= self.t_end) {
            return bad("recording start must lie in the simulated interval");
        }
        let steps = (self.t_end - self.t_start) / self.dt;
        if (steps - steps.round()).abs() > 1e-9 * steps.max(1.0) {
            return bad("time interval is not a whole number of steps");
        }
        if !(self.nonlinear.tolerance > 0.0) || self.nonlinear.max_iterations == 0 {
            return bad("nonlinear tolerance and iteration cap must be positive");
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        ((self.t_end - self.t_start) / self.dt).round() as usize
    }

    pub fn time(&self, step: usize) -> f64 {
        self.t_start + step as f64 * self.dt
    }

    pub fn record_step(&self) -> usize {
        ((self.record_start - self.t_start) / self.dt).round() as usize
    }
}

/// Diagnostics of one nonlinear solve.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepReport {
    /// Relative residual before each linear solve, and at acceptance.
    pub residuals: Vec<f64>,
    pub factorizations: usize,
}

impl StepReport {
    pub fn iterations(&self) -> usize {
        self.residuals.len().saturating_sub(1)
    }
}

/// Velocity and pressure trajectory of a full order run.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSet {
    pub config: FomConfig,
    /// Recorded instants.
    pub times: Vec<f64>,
    pub velocity: Vec<Vec<f64>>,
    pub pressure: Vec<Vec<f64>>,
    /// Difference quotients for `times[derivative_start..]`.
    pub derivatives: Vec<Vec<f64>>,
    pub derivative_start: usize,
    /// POD time scale once chosen; not set by the solver.
    pub tau: Option<f64>,
    pub mesh_fingerprint: u64,
    pub n_velocity: usize,
    pub n_pressure: usize,
}

impl SnapshotSet {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Derivative at recorded index `j`, if defined.
    pub fn derivative(&self, j: usize) -> Option<&[f64]> {
        j.checked_sub(self.derivative_start).and_then(|k| self.derivatives.get(k)).map(Vec::as_slice)
    }

    pub fn check_space(&self, space: &THSpace) -> Result<()> {
        let current = space.mesh().fingerprint();
        if current != self.mesh_fingerprint {
            return Err(Error::StaleArtifact { artifact: self.mesh_fingerprint, current });
        }
        if space.n_velocity() != self.n_velocity {
            return Err(Error::DimensionMismatch { expected: space.n_velocity(), got: self.n_velocity });
        }
        Ok(())
    }
}

/// Time stepper bound to one space, problem and configuration.
pub struct FomSolver<'a> {
    space: &'a THSpace,
    problem: &'a dyn FlowProblem,
    cfg: FomConfig,
    saddle: SaddleSystem,
    mass: CsrMatrix,
    /// `nu A + mu G` on the velocity pattern.
    viscous: Vec<f64>,
    viscous_csr: CsrMatrix,
    /// Latest factorization and the time-derivative coefficient it used.
    factors: Option<(LuFactors, f64)>,
}

impl<'a> FomSolver<'a> {
    pub fn new(space: &'a THSpace, problem: &'a dyn FlowProblem, cfg: FomConfig) -> Result<Self> {
        cfg.validate()?;
        let saddle = SaddleSystem::new(space)?;
        let mass = space.assemble(OperatorKind::Mass);
        let mut viscous_csr = space.assemble(OperatorKind::Stiffness);
        viscous_csr.scale(cfg.nu);
        let viscous_csr = viscous_csr.add_scaled(cfg.mu, &space.assemble(OperatorKind::GradDiv));
        Ok(Self { space, problem, cfg, saddle, mass, viscous: viscous_csr.values().to_vec(), viscous_csr, factors: None })
    }

    pub fn config(&self) -> &FomConfig {
        &self.cfg
    }

    /// Advances from `u1` (and `u2`, the state before, for BDF2) to `t_new`.
    ///
    /// Picard iterations are carried out as defect corrections: the residual
    /// always uses the current convection matrix, while the correction reuses
    /// the latest factorization until the contraction rate degrades. Newton
    /// refactors the Jacobian every iteration.
    pub fn step(
        &mut self,
        u1: &[f64],
        u2: Option<&[f64]>,
        p1: &[f64],
        t_new: f64,
    ) -> Result<(Vec<f64>, Vec<f64>, StepReport)> {
        let cfg = self.cfg;
        let space = self.space;
        space.check_velocity(u1)?;
        let bdf2 = cfg.scheme == Scheme::Bdf2 && u2.is_some();
        let (alpha, hist): (f64, Vec<f64>) = match u2 {
            Some(u2) if bdf2 => (1.5, u1.iter().zip(u2).map(|(a, b)| 2.0 * a - 0.5 * b).collect()),
            _ => (1.0, u1.to_vec()),
        };
        let mut rhs_u = self.mass.mul_vec(&hist);
        rhs_u.iter_mut().for_each(|v| *v /= cfg.dt);
        let f = space.load_vector(|x| self.problem.forcing(t_new, x));
        rhs_u.iter_mut().zip(&f).for_each(|(r, v)| *r += v);
        let lift = space.boundary_lift(|x| self.problem.boundary_velocity(t_new, x));

        let mut u: Vec<f64> = match u2 {
            Some(u2) if bdf2 => u1.iter().zip(u2).map(|(a, b)| 2.0 * a - b).collect(),
            _ => u1.to_vec(),
        };
        for &d in space.dirichlet_velocity_dofs() {
            u[d] = lift[d];
        }
        let mut x = self.saddle.join(&u, p1);
        let mut report = StepReport::default();
        let newton = cfg.nonlinear.method == NonlinearMethod::Newton;
        if self.factors.as_ref().is_some_and(|(_, a)| *a != alpha) {
            self.factors = None;
        }
        let mut refactor = newton || self.factors.is_none();

        for _ in 0..=cfg.nonlinear.max_iterations {
            let conv = space.assemble_convection(&u)?;
            let mut k = self
                .saddle
                .matrix(&[(1.0, &self.viscous), (alpha / cfg.dt, self.mass.values()), (1.0, conv.values())]);
            if newton {
                let r = space.assemble_newton_reaction(&u)?;
                self.saddle.add_velocity(&mut k, 1.0, r.values());
            }
            let mut rhs = vec![0.0; self.saddle.n];
            rhs[..self.saddle.nu].copy_from_slice(&rhs_u);
            let mut k_picard = None;
            if newton {
                // residual of the nonlinear system, without the reaction block
                let mut kp = self.saddle.matrix(&[
                    (1.0, &self.viscous),
                    (alpha / cfg.dt, self.mass.values()),
                    (1.0, conv.values()),
                ]);
                let mut rp = rhs.clone();
                self.saddle.eliminate(&mut kp, &mut rp, &lift);
                k_picard = Some((kp, rp));
            }
            self.saddle.eliminate(&mut k, &mut rhs, &lift);

            let (kr, br) = k_picard.as_ref().map_or((&k, &rhs), |(a, b)| (a, b));
            let kx = kr.mul_vec(&x);
            let res: Vec<f64> = br.iter().zip(&kx).map(|(a, b)| a - b).collect();
            let (rn, bn) = (norm2(&res), norm2(br));
            let rel = if bn > 0.0 { rn / bn } else { rn };
            if let Some(&prev) = report.residuals.last() {
                if rel > 0.2 * prev {
                    refactor = true;
                }
            }
            report.residuals.push(rel);
            if rn == 0.0 || rel <= cfg.nonlinear.tolerance {
                let (u, p) = self.saddle.split(&x);
                return Ok((u, p, report));
            }
            if report.residuals.len() > cfg.nonlinear.max_iterations {
                break;
            }
            if refactor {
                self.factors = Some((self.saddle.factor(&k)?, alpha));
                report.factorizations += 1;
                refactor = newton;
            }
            let lu = &self.factors.as_ref().expect("factorized").0;
            let delta = lu.solve(&res)?;
            x.iter_mut().zip(&delta).for_each(|(a, b)| *a += b);
            u.copy_from_slice(&x[..self.saddle.nu]);
        }
        Err(Error::NonlinearDivergence {
            iterations: cfg.nonlinear.max_iterations,
            residual: *report.residuals.last().unwrap_or(&f64::NAN),
        })
    }

    /// Pressure consistent with `u0` at `t`, from the momentum equation with
    /// the time derivative as an extra unknown that vanishes on the boundary.
    pub fn initial_pressure(&self, u0: &[f64], t: f64) -> Result<Vec<f64>> {
        let space = self.space;
        let f = space.load_vector(|x| self.problem.forcing(t, x));
        let visc = self.viscous_csr.mul_vec(u0);
        let conv = space.apply_convection(u0, u0)?;
        let mut rhs = vec![0.0; self.saddle.n];
        for i in 0..self.saddle.nu {
            rhs[i] = f[i] - visc[i] - conv[i];
        }
        let mut m = self.saddle.matrix(&[(1.0, self.mass.values())]);
        self.saddle.eliminate(&mut m, &mut rhs, &vec![0.0; self.saddle.nu]);
        let x = self.saddle.factor(&m)?.solve(&rhs)?;
        Ok(self.saddle.split(&x).1)
    }
}

/// Runs the full trajectory and records snapshots.
pub fn run_fom(cfg: &FomConfig, problem: &dyn FlowProblem, space: &THSpace) -> Result<SnapshotSet> {
    Ok(run_fom_with_reports(cfg, problem, space)?.0)
}

pub fn run_fom_with_reports(
    cfg: &FomConfig,
    problem: &dyn FlowProblem,
    space: &THSpace,
) -> Result<(SnapshotSet, Vec<StepReport>)> {
    use_sequential_kernels();
    let mut solver = FomSolver::new(space, problem, *cfg)?;
    let n_steps = cfg.n_steps();
    let first = cfg.record_step();

    let u0 = space.interpolate_velocity(|x| problem.initial_velocity(x));
    let p0 = solver.initial_pressure(&u0, cfg.t_start)?;

    let mut set = SnapshotSet {
        config: *cfg,
        times: Vec::with_capacity(n_steps + 1 - first),
        velocity: Vec::new(),
        pressure: Vec::new(),
        derivatives: Vec::new(),
        derivative_start: usize::from(first == 0),
        tau: None,
        mesh_fingerprint: space.mesh().fingerprint(),
        n_velocity: space.n_velocity(),
        n_pressure: space.n_pressure(),
    };
    if first == 0 {
        set.times.push(cfg.t_start);
        set.velocity.push(u0.clone());
        set.pressure.push(p0.clone());
    }

    let mut reports = Vec::with_capacity(n_steps);
    let (mut u1, mut p1) = (u0, p0);
    let mut u2: Option<Vec<f64>> = None;
    for n in 1..=n_steps {
        let t = cfg.time(n);
        let (u, p, report) = solver.step(&u1, u2.as_deref(), &p1, t)?;
        reports.push(report);
        if n >= first {
            let du = difference_quotient(cfg.scheme, &u, &u1, u2.as_deref(), cfg.dt);
            set.times.push(t);
            set.velocity.push(u.clone());
            set.pressure.push(p.clone());
            set.derivatives.push(du);
        }
        u2 = Some(std::mem::replace(&mut u1, u));
        p1 = p;
    }
    Ok((set, reports))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fe_space::BoundarySpec;
    use crate::mesh::{BoundaryTag, Mesh};
    use crate::problems::{NoFlow, Quiescent};

    fn small_noflow() -> THSpace {
        THSpace::new(Mesh::unit_square_structured(4, BoundaryTag::DirichletAll), &BoundarySpec::all_dirichlet())
            .unwrap()
    }

    #[test]
    fn quotients() {
        let (u, u1, u2) = ([3.0], [1.0], [0.0]);
        assert_eq!(difference_quotient(Scheme::ImplicitEuler, &u, &u1, Some(&u2), 0.5), vec![4.0]);
        assert_eq!(difference_quotient(Scheme::Bdf2, &u, &u1, Some(&u2), 0.5), vec![5.0]);
        assert_eq!(difference_quotient(Scheme::Bdf2, &u, &u1, None, 0.5), vec![4.0]);
    }

    #[test]
    fn config_validation() {
        let mut c = FomConfig::noflow();
        assert!(c.validate().is_ok());
        assert_eq!(c.n_steps(), 200);
        c.nu = 0.0;
        assert!(c.validate().is_err());
        let mut c = FomConfig::noflow();
        c.dt = 0.003;
        assert!(c.validate().is_err());
    }

    #[test]
    fn zero_data_stays_zero() {
        let s = small_noflow();
        let mut cfg = FomConfig::noflow();
        cfg.t_end = 0.05;
        let set = run_fom(&cfg, &Quiescent, &s).unwrap();
        assert_eq!(set.len(), 11);
        assert!(set.velocity.iter().chain(&set.pressure).flatten().all(|&v| v == 0.0));
        assert!(set.derivatives.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn noflow_steps_are_divergence_free_and_converge() {
        let s = small_noflow();
        let mut cfg = FomConfig::noflow();
        cfg.t_end = 0.02;
        let (set, reports) = run_fom_with_reports(&cfg, &NoFlow, &s).unwrap();
        assert_eq!(set.derivative_start, 1);
        assert_eq!(set.derivatives.len(), 4);
        let b = s.assemble(OperatorKind::Divergence);
        for u in &set.velocity {
            let bu = b.mul_vec(u);
            assert!(bu.iter().all(|v| v.abs() < 1e-12));
        }
        for r in &reports {
            assert!(*r.residuals.last().unwrap() <= 1e-10);
            assert!(r.residuals.windows(2).all(|w| w[1] <= w[0]));
        }
        // recomputable BDF2 quotient
        let q = difference_quotient(Scheme::Bdf2, &set.velocity[3], &set.velocity[2], Some(&set.velocity[1]), cfg.dt);
        assert_eq!(set.derivative(3).unwrap(), q.as_slice());
    }

    #[test]
    fn newton_and_picard_agree() {
        let s = small_noflow();
        let mut cfg = FomConfig::noflow();
        cfg.t_end = 0.01;
        cfg.nu = 1e-3;
        let a = run_fom(&cfg, &NoFlow, &s).unwrap();
        cfg.nonlinear.method = NonlinearMethod::Newton;
        let b = run_fom(&cfg, &NoFlow, &s).unwrap();
        for (x, y) in a.pressure.last().unwrap().iter().zip(b.pressure.last().unwrap()) {
            assert!((x - y).abs() < 1e-8);
        }
    }
}
