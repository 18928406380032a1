//! Reduced-order models: the Galerkin velocity ROM and two pressure recoveries.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fe_space::THSpace;
use crate::fom::{difference_quotient, Scheme};
use crate::pod::PodBasis;
use crate::problems::FlowProblem;

pub mod pressure_se;
pub mod pressure_sm;
pub mod velocity;

pub use pressure_se::{assemble_se_system, compute_supremizers, SeSystem, SupremizerBasis};
pub use pressure_sm::{tau_from_diameters, SmSystem};
pub use velocity::{
    precompute_reduced_operators, rom_step, run_rom, LiftingTerms, ReducedOperators, RomConfig, RomTrajectory,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PressureMethod {
    Se,
    Sm,
}

impl PressureMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            PressureMethod::Se => "se",
            PressureMethod::Sm => "sm",
        }
    }
}

impl fmt::Display for PressureMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PressureMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "se" | "SE" => Ok(PressureMethod::Se),
            "sm" | "SM" => Ok(PressureMethod::Sm),
            _ => Err(Error::InvalidConfig(format!("unknown pressure method `{s}`"))),
        }
    }
}

/// Velocity data of one pressure recovery step: the reduced velocity at the
/// new level and up to two previous levels, all as full-order vectors.
pub struct StepInput<'a> {
    pub u: &'a [f64],
    pub u1: &'a [f64],
    pub u2: Option<&'a [f64]>,
    pub forcing: &'a (dyn Fn([f64; 2]) -> [f64; 2] + Sync),
}

pub(crate) fn momentum_quotient(scheme: Scheme, input: &StepInput<'_>, dt: f64) -> Vec<f64> {
    difference_quotient(scheme, input.u, input.u1, input.u2, dt)
}

pub trait PressureRecovery: Sync {
    fn method(&self) -> PressureMethod;
    fn rank(&self) -> usize;
    fn scheme(&self) -> Scheme;
    /// Pressure coefficients at the level of `input.u`.
    fn step(&self, space: &THSpace, input: &StepInput<'_>) -> Result<DVector<f64>>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct PressureTrajectory {
    pub method: PressureMethod,
    /// Time-difference scheme used on the right side.
    pub quotient: Scheme,
    pub times: Vec<f64>,
    pub coefficients: Vec<Vec<f64>>,
}

impl PressureTrajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.coefficients.first().map_or(0, Vec::len)
    }

    /// `pbar + sum_k c_k psi_k` at record `n`.
    pub fn pressure(&self, basis: &PodBasis, n: usize) -> Vec<f64> {
        basis.reconstruct(&self.coefficients[n])
    }

    /// CSV with columns `t, c_1..c_r`.
    pub fn write_csv(&self, mut w: impl Write) -> io::Result<()> {
        write!(w, "t")?;
        for k in 1..=self.rank() {
            write!(w, ",c_{k}")?;
        }
        writeln!(w)?;
        for (t, c) in self.times.iter().zip(&self.coefficients) {
            write!(w, "{t:e}")?;
            for v in c {
                write!(w, ",{v:e}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Pressures at `times[1..]` from full-order velocities `velocities[n]` at
/// `times[n]`. Steps are independent and run in parallel.
pub fn run_pressure_rom(
    rec: &dyn PressureRecovery,
    space: &THSpace,
    problem: &dyn FlowProblem,
    velocities: &[Vec<f64>],
    times: &[f64],
) -> Result<PressureTrajectory> {
    if velocities.len() != times.len() {
        return Err(Error::GridMismatch(format!("{} velocities for {} times", velocities.len(), times.len())));
    }
    let coefficients = (1..times.len())
        .into_par_iter()
        .map(|n| {
            let t = times[n];
            let forcing = |x: [f64; 2]| problem.forcing(t, x);
            let input = StepInput {
                u: &velocities[n],
                u1: &velocities[n - 1],
                u2: (n >= 2).then(|| velocities[n - 2].as_slice()),
                forcing: &forcing,
            };
            rec.step(space, &input).map(|c| c.as_slice().to_vec())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PressureTrajectory {
        method: rec.method(),
        quotient: rec.scheme(),
        times: times[1..].to_vec(),
        coefficients,
    })
}
