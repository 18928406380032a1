//! Discrete-in-time error norms and cylinder quantities of interest.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fe_space::{OperatorKind, THSpace};
use crate::fom::{difference_quotient, Scheme};
use crate::mesh::BoundaryTag;
use crate::problems::{Cylinder, FlowProblem};
use crate::sparse::{dot, CsrMatrix};

/// Values of a field at a sequence of times.
#[derive(Debug, Clone, Copy)]
pub struct Series<'a> {
    pub times: &'a [f64],
    pub values: &'a [Vec<f64>],
}

impl<'a> Series<'a> {
    pub fn new(times: &'a [f64], values: &'a [Vec<f64>]) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::GridMismatch(format!("{} times for {} fields", times.len(), values.len())));
        }
        Ok(Self { times, values })
    }
}

pub enum Reference<'a> {
    Analytic(&'a dyn FlowProblem),
    /// A discrete trajectory on the same space, indexed like the compared series.
    Discrete { velocity: Option<Series<'a>>, pressure: Option<Series<'a>> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimeErrors {
    pub t: f64,
    pub velocity: Option<f64>,
    pub divergence: Option<f64>,
    pub pressure: Option<f64>,
    pub pressure_h1k: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorReport {
    pub velocity_l2l2: Option<f64>,
    pub divergence_l2l2: Option<f64>,
    pub pressure_l2l2: Option<f64>,
    pub pressure_h1k: Option<f64>,
    /// Fraction of the pressure spectrum discarded at the used rank.
    pub remaining_fraction: Option<f64>,
    /// Largest instantaneous mean of the analytic pressure that was removed.
    pub mean_correction: f64,
    pub series: Vec<TimeErrors>,
}

struct Norms {
    mass: CsrMatrix,
    grad_div: CsrMatrix,
    pmass: CsrMatrix,
    ptau: CsrMatrix,
}

fn check_grid(a: &[f64], b: &[f64], dt: f64) -> Result<()> {
    if a.len() != b.len() || a.iter().zip(b).any(|(x, y)| (x - y).abs() > 1e-9 * dt.max(1e-300)) {
        return Err(Error::GridMismatch(format!("{} vs {} instants", a.len(), b.len())));
    }
    Ok(())
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Squared L2 and tau-weighted gradient errors against an analytic pressure,
/// after aligning both means when the analytic mean is not negligible.
fn analytic_pressure_errors(
    space: &THSpace,
    problem: &dyn FlowProblem,
    t: f64,
    p: &[f64],
    tau: &[f64],
) -> Result<(f64, f64, f64)> {
    let mesh = space.mesh();
    let mut cells = Vec::with_capacity(mesh.n_cells());
    let (mut int_ex, mut int_h, mut area) = (0.0, 0.0, 0.0);
    for cell in 0..mesh.n_cells() {
        let verts = mesh.cells()[cell];
        let g = space.cell_geometry(cell);
        let grad_h = verts
            .iter()
            .zip(&g.grad_lambda)
            .fold([0.0, 0.0], |acc, (&v, gl)| [acc[0] + p[v] * gl[0], acc[1] + p[v] * gl[1]]);
        let mut pts = Vec::new();
        for (x, w) in space.cell_quadrature(cell) {
            let (pe, ge) = problem
                .exact_pressure(t, x)
                .ok_or_else(|| Error::InvalidConfig("problem has no analytic pressure".into()))?;
            let bary = g.barycentric(x);
            let ph: f64 = verts.iter().zip(bary).map(|(&v, l)| p[v] * l).sum();
            int_ex += w * pe;
            int_h += w * ph;
            area += w;
            pts.push((w, pe - ph, [ge[0] - grad_h[0], ge[1] - grad_h[1]]));
        }
        cells.push(pts);
    }
    let mean_ex = int_ex / area;
    let shift = if mean_ex.abs() > 1e-6 { mean_ex - int_h / area } else { 0.0 };
    let (mut l2, mut h1k) = (0.0, 0.0);
    for (cell, pts) in cells.iter().enumerate() {
        for (w, e, ge) in pts {
            l2 += w * (e - shift).powi(2);
            h1k += tau[cell] * w * (ge[0] * ge[0] + ge[1] * ge[1]);
        }
    }
    Ok((l2, h1k, if shift != 0.0 { mean_ex.abs() } else { 0.0 }))
}

/// Errors `sum_j dt |e^j|^2` (reported as square roots) over the given
/// instants. The caller passes the instants `j = 1..M`.
pub fn compute_errors(
    space: &THSpace,
    reference: &Reference<'_>,
    velocity: Option<Series<'_>>,
    pressure: Option<Series<'_>>,
    tau: &[f64],
    dt: f64,
) -> Result<ErrorReport> {
    if tau.len() != space.mesh().n_cells() {
        return Err(Error::DimensionMismatch { expected: space.mesh().n_cells(), got: tau.len() });
    }
    let norms = Norms {
        mass: space.assemble(OperatorKind::Mass),
        grad_div: space.assemble(OperatorKind::GradDiv),
        pmass: space.assemble(OperatorKind::PressureMass),
        ptau: space.assemble_weighted_pressure_stiffness(tau),
    };
    if let Reference::Discrete { velocity: rv, pressure: rp } = reference {
        if let (Some(a), Some(b)) = (velocity, rv) {
            check_grid(a.times, b.times, dt)?;
        }
        if let (Some(a), Some(b)) = (pressure, rp) {
            check_grid(a.times, b.times, dt)?;
        }
    }

    let vel: Vec<(f64, f64, f64)> = match velocity {
        None => Vec::new(),
        Some(s) => s
            .values
            .par_iter()
            .enumerate()
            .map(|(j, u)| {
                let e = match reference {
                    Reference::Analytic(p) if p.zero_exact_velocity() => norms.mass.quad_form(u),
                    Reference::Analytic(_) => {
                        return Err(Error::InvalidConfig("problem has no analytic velocity".into()));
                    }
                    Reference::Discrete { velocity: Some(r), .. } => norms.mass.quad_form(&diff(u, &r.values[j])),
                    Reference::Discrete { velocity: None, .. } => {
                        return Err(Error::MissingArtifact("reference velocity".into()));
                    }
                };
                Ok((s.times[j], e, norms.grad_div.quad_form(u)))
            })
            .collect::<Result<_>>()?,
    };
    let pre: Vec<(f64, f64, f64, f64)> = match pressure {
        None => Vec::new(),
        Some(s) => s
            .values
            .par_iter()
            .enumerate()
            .map(|(j, p)| {
                let t = s.times[j];
                match reference {
                    Reference::Analytic(prob) => {
                        let (l2, h1k, m) = analytic_pressure_errors(space, *prob, t, p, tau)?;
                        Ok((t, l2, h1k, m))
                    }
                    Reference::Discrete { pressure: Some(r), .. } => {
                        let e = diff(p, &r.values[j]);
                        Ok((t, norms.pmass.quad_form(&e), norms.ptau.quad_form(&e), 0.0))
                    }
                    Reference::Discrete { pressure: None, .. } => Err(Error::MissingArtifact("reference pressure".into())),
                }
            })
            .collect::<Result<_>>()?,
    };

    let total = |v: &mut dyn Iterator<Item = f64>| (v.map(|x| dt * x.max(0.0)).sum::<f64>()).sqrt();
    let mut series: Vec<TimeErrors> = vel
        .iter()
        .map(|&(t, e, d)| TimeErrors {
            t,
            velocity: Some(e.max(0.0).sqrt()),
            divergence: Some(d.max(0.0).sqrt()),
            pressure: None,
            pressure_h1k: None,
        })
        .collect();
    for &(t, l2, h1k, _) in &pre {
        let entry = match series.iter_mut().find(|e| (e.t - t).abs() <= 1e-9 * dt) {
            Some(e) => e,
            None => {
                series.push(TimeErrors { t, velocity: None, divergence: None, pressure: None, pressure_h1k: None });
                series.last_mut().expect("just pushed")
            }
        };
        entry.pressure = Some(l2.max(0.0).sqrt());
        entry.pressure_h1k = Some(h1k.max(0.0).sqrt());
    }
    series.sort_by(|a, b| a.t.total_cmp(&b.t));
    Ok(ErrorReport {
        velocity_l2l2: velocity.map(|_| total(&mut vel.iter().map(|v| v.1))),
        divergence_l2l2: velocity.map(|_| total(&mut vel.iter().map(|v| v.2))),
        pressure_l2l2: pressure.map(|_| total(&mut pre.iter().map(|v| v.1))),
        pressure_h1k: pressure.map(|_| total(&mut pre.iter().map(|v| v.2))),
        remaining_fraction: None,
        mean_correction: pre.iter().map(|v| v.3).fold(0.0, f64::max),
        series,
    })
}

/// `log2(e_L / e_{L+1})` for consecutive levels.
pub fn empirical_order(errors: &[f64]) -> Result<Vec<f64>> {
    if let Some(i) = errors.iter().position(|e| !(*e > 0.0)) {
        return Err(Error::ZeroError(i));
    }
    Ok(errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ForceCoefficients {
    pub times: Vec<f64>,
    pub drag: Vec<f64>,
    pub lift: Vec<f64>,
    /// `p(0.15, 0.2) - p(0.25, 0.2)`.
    pub delta_p: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeriodRecord {
    pub start: f64,
    pub period: f64,
    /// Time of the lift peak within the period.
    pub t_star: f64,
    pub delta_p: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CylinderQoi {
    pub strouhal: f64,
    pub period: f64,
    pub max_drag: f64,
    pub max_lift: f64,
    /// Mean pressure difference half a period after each lift peak.
    pub delta_p: f64,
    pub periods: Vec<PeriodRecord>,
}

/// Drag and lift by the volume functional
/// `c = -20 [(d_t u, w) + nu (grad u, grad w) + ((u . grad) u, w) - (div w, p)]`
/// with `w` the nodal indicator of the cylinder boundary in the force direction.
pub fn force_coefficients(
    space: &THSpace,
    velocity: Series<'_>,
    pressure: Series<'_>,
    nu: f64,
    scheme: Scheme,
    dt: f64,
) -> Result<ForceCoefficients> {
    let n = space.n_nodes();
    let nodes = space.boundary_nodes(BoundaryTag::Cylinder);
    if nodes.is_empty() {
        return Err(Error::InvalidConfig("mesh has no cylinder boundary".into()));
    }
    let mut wd = vec![0.0; space.n_velocity()];
    let mut wl = vec![0.0; space.n_velocity()];
    for &k in &nodes {
        wd[k] = 1.0;
        wl[n + k] = 1.0;
    }
    let mass = space.assemble(OperatorKind::Mass);
    let stiff = space.assemble(OperatorKind::Stiffness);
    let b = space.assemble(OperatorKind::Divergence);
    let (mwd, mwl) = (mass.mul_vec(&wd), mass.mul_vec(&wl));
    let (awd, awl) = (stiff.mul_vec(&wd), stiff.mul_vec(&wl));
    let (bwd, bwl) = (b.mul_vec(&wd), b.mul_vec(&wl));

    let rows = pressure
        .times
        .par_iter()
        .zip(pressure.values.par_iter())
        .map(|(&t, p)| {
            let i = velocity
                .times
                .iter()
                .position(|&s| (s - t).abs() <= 1e-9 * dt)
                .ok_or_else(|| Error::GridMismatch(format!("no velocity at t = {t}")))?;
            if i == 0 {
                return Err(Error::GridMismatch(format!("no previous velocity before t = {t}")));
            }
            let u = &velocity.values[i];
            let u2 = (i >= 2).then(|| velocity.values[i - 2].as_slice());
            let q = difference_quotient(scheme, u, &velocity.values[i - 1], u2, dt);
            let conv = space.apply_plain_convection(u, u)?;
            let drag = -20.0 * (dot(&mwd, &q) + nu * dot(&awd, u) + dot(&conv, &wd) - dot(&bwd, p));
            let lift = -20.0 * (dot(&mwl, &q) + nu * dot(&awl, u) + dot(&conv, &wl) - dot(&bwl, p));
            let [a, c] = Cylinder::PRESSURE_PROBES;
            let dp = space.eval_pressure(p, a)? - space.eval_pressure(p, c)?;
            Ok((t, drag, lift, dp))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ForceCoefficients {
        times: rows.iter().map(|r| r.0).collect(),
        drag: rows.iter().map(|r| r.1).collect(),
        lift: rows.iter().map(|r| r.2).collect(),
        delta_p: rows.iter().map(|r| r.3).collect(),
    })
}

/// Times where `s` crosses zero from below, by linear interpolation.
pub fn upward_crossings(times: &[f64], s: &[f64]) -> Vec<f64> {
    let mut out = Vec::new();
    for k in 1..s.len().min(times.len()) {
        let (a, b) = (s[k - 1], s[k]);
        if a < 0.0 && b >= 0.0 {
            out.push(times[k - 1] + (times[k] - times[k - 1]) * (-a) / (b - a));
        }
    }
    out
}

fn interpolate(times: &[f64], s: &[f64], t: f64) -> Option<f64> {
    let k = times.windows(2).position(|w| w[0] <= t && t <= w[1])?;
    let th = (t - times[k]) / (times[k + 1] - times[k]);
    Some(s[k] + th * (s[k + 1] - s[k]))
}

/// Strouhal number, force maxima and pressure difference from a force record.
pub fn cylinder_qoi(f: &ForceCoefficients) -> Result<CylinderQoi> {
    let crossings = upward_crossings(&f.times, &f.lift);
    if crossings.len() < 2 {
        return Err(Error::NotPeriodic);
    }
    let mut periods = Vec::new();
    for w in crossings.windows(2) {
        let (start, end) = (w[0], w[1]);
        let mut best: Option<(f64, f64)> = None;
        for (&t, &l) in f.times.iter().zip(&f.lift) {
            if t >= start && t <= end && best.is_none_or(|(_, b)| l > b) {
                best = Some((t, l));
            }
        }
        let t_star = best.map_or(start, |b| b.0);
        periods.push(PeriodRecord { start, period: end - start, t_star, delta_p: None });
    }
    let period = periods.iter().map(|p| p.period).sum::<f64>() / periods.len() as f64;
    for p in &mut periods {
        p.delta_p = interpolate(&f.times, &f.delta_p, p.t_star + 0.5 * period);
    }
    let dps: Vec<f64> = periods.iter().filter_map(|p| p.delta_p).collect();
    let delta_p = if dps.is_empty() { f64::NAN } else { dps.iter().sum::<f64>() / dps.len() as f64 };
    Ok(CylinderQoi {
        strouhal: 2.0 * Cylinder::RADIUS / period,
        period,
        max_drag: f.drag.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        max_lift: f.lift.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        delta_p,
        periods,
    })
}
