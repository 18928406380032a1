//! Proper orthogonal decomposition by the method of snapshots.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fe_space::{OperatorKind, THSpace};
use crate::fom::SnapshotSet;
use crate::sparse::{dot, CsrMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InnerProduct {
    L2,
    H1,
}

impl InnerProduct {
    pub fn as_str(self) -> &'static str {
        match self {
            InnerProduct::L2 => "L2",
            InnerProduct::H1 => "H1",
        }
    }
}

impl fmt::Display for InnerProduct {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for InnerProduct {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "L2" | "l2" => Ok(InnerProduct::L2),
            "H1" | "h1" => Ok(InnerProduct::H1),
            _ => Err(Error::InvalidConfig(format!("unknown inner product `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FieldKind {
    Velocity,
    Pressure,
}

/// The Gram operator of an inner product on a field of the space. The H1
/// product is the gradient seminorm product.
pub fn inner_product_operator(space: &THSpace, kind: FieldKind, ip: InnerProduct) -> CsrMatrix {
    let op = match (kind, ip) {
        (FieldKind::Velocity, InnerProduct::L2) => OperatorKind::Mass,
        (FieldKind::Velocity, InnerProduct::H1) => OperatorKind::Stiffness,
        (FieldKind::Pressure, InnerProduct::L2) => OperatorKind::PressureMass,
        (FieldKind::Pressure, InnerProduct::H1) => OperatorKind::PressureStiffness,
    };
    space.assemble(op)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PodInput {
    pub vectors: Vec<Vec<f64>>,
    pub inner_product: InnerProduct,
    pub tau: Option<f64>,
    pub kind: FieldKind,
    /// Snapshot average: the velocity lifting, or the pressure offset of
    /// centered fluctuations.
    pub mean: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PodBasis {
    /// Retained eigenvalues, nonincreasing, all above the cutoff.
    pub eigenvalues: Vec<f64>,
    pub modes: Vec<Vec<f64>>,
    pub cutoff: f64,
    pub inner_product: InnerProduct,
    pub kind: FieldKind,
    /// All `N` eigenvalues of the correlation matrix, negatives clamped to 0.
    pub spectrum: Vec<f64>,
    pub tau: Option<f64>,
    pub mean: Option<Vec<f64>>,
}

impl PodBasis {
    pub fn dim(&self) -> usize {
        self.modes.len()
    }

    pub fn n_generators(&self) -> usize {
        self.spectrum.len()
    }

    /// `sum_{k>r} lambda_k` over the full spectrum.
    pub fn tail_sum(&self, r: usize) -> f64 {
        self.spectrum.iter().skip(r).fold(0.0, |a, l| a + l)
    }

    /// Fraction of the retained spectrum discarded at rank `r`.
    pub fn remaining_fraction(&self, r: usize) -> f64 {
        let total: f64 = self.eigenvalues.iter().sum();
        if total == 0.0 {
            return 0.0;
        }
        self.eigenvalues.iter().skip(r).fold(0.0, |a, l| a + l) / total
    }

    /// `mean + sum_k c_k phi_k`.
    pub fn reconstruct(&self, coeffs: &[f64]) -> Vec<f64> {
        let n = self.modes.first().map_or_else(|| self.mean.as_ref().map_or(0, Vec::len), Vec::len);
        let mut v = self.mean.clone().unwrap_or_else(|| vec![0.0; n]);
        for (c, m) in coeffs.iter().zip(&self.modes) {
            v.iter_mut().zip(m).for_each(|(a, b)| *a += c * b);
        }
        v
    }
}

/// Velocity generators: `sqrt(N) * mean` (optional) and `tau * d_t u^j`.
pub fn build_velocity_pod_input(s: &SnapshotSet, tau: f64, include_mean: bool) -> Result<PodInput> {
    if s.is_empty() {
        return Err(Error::EmptySnapshots);
    }
    let mean = average(&s.velocity);
    let n = s.derivatives.len() + usize::from(include_mean);
    if n == 0 {
        return Err(Error::EmptySnapshots);
    }
    let mut vectors = Vec::with_capacity(n);
    if include_mean {
        let scale = (n as f64).sqrt();
        vectors.push(mean.iter().map(|v| scale * v).collect());
    }
    vectors.extend(s.derivatives.iter().map(|d| d.iter().map(|v| tau * v).collect()));
    Ok(PodInput { vectors, inner_product: InnerProduct::L2, tau: Some(tau), kind: FieldKind::Velocity, mean: Some(mean) })
}

/// Pressure generators: fluctuations `p^j - mean` when `center`, else raw snapshots.
pub fn build_pressure_pod_input(s: &SnapshotSet, center: bool) -> Result<PodInput> {
    if s.pressure.is_empty() {
        return Err(Error::EmptySnapshots);
    }
    let mean = average(&s.pressure);
    let vectors = if center {
        s.pressure.iter().map(|p| p.iter().zip(&mean).map(|(a, b)| a - b).collect()).collect()
    } else {
        s.pressure.clone()
    };
    Ok(PodInput {
        vectors,
        inner_product: InnerProduct::L2,
        tau: None,
        kind: FieldKind::Pressure,
        mean: center.then_some(mean),
    })
}

fn average(v: &[Vec<f64>]) -> Vec<f64> {
    let mut m = vec![0.0; v[0].len()];
    for x in v {
        m.iter_mut().zip(x).for_each(|(a, b)| *a += b);
    }
    let n = v.len() as f64;
    m.iter_mut().for_each(|a| *a /= n);
    m
}

pub fn compute_pod(input: &PodInput, space: &THSpace, cutoff: f64) -> Result<PodBasis> {
    let x = inner_product_operator(space, input.kind, input.inner_product);
    compute_pod_with_operator(input, &x, cutoff)
}

/// POD with an explicit Gram operator `x`.
///
/// The correlation matrix `K = Y^T X Y / N` is never formed: the generators
/// are factored as `Y = Q R` with `X`-orthonormal `Q`, so that
/// `K = R^T R / N` and the eigenpairs follow from the SVD of `R / sqrt(N)`.
/// This keeps the small eigenvalues accurate relative to the largest
/// singular value rather than the largest eigenvalue.
pub fn compute_pod_with_operator(input: &PodInput, x: &CsrMatrix, cutoff: f64) -> Result<PodBasis> {
    let n = input.vectors.len();
    if n == 0 {
        return Err(Error::EmptySnapshots);
    }
    if !(cutoff >= 0.0) {
        return Err(Error::InvalidConfig("cutoff must be nonnegative".into()));
    }
    let dim = input.vectors[0].len();
    if let Some(v) = input.vectors.iter().find(|v| v.len() != dim) {
        return Err(Error::DimensionMismatch { expected: dim, got: v.len() });
    }
    let (q, r) = x_orthonormal_qr(&input.vectors, x)?;
    let svd = (r / (n as f64).sqrt()).svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]).then(a.cmp(&b)));
    let spectrum: Vec<f64> = order.iter().map(|&k| svd.singular_values[k].powi(2)).collect();
    let d = spectrum.iter().take_while(|&&l| l > cutoff).count();
    let modes = order[..d].iter().map(|&k| (&q * u.column(k)).iter().copied().collect()).collect();

    Ok(PodBasis {
        eigenvalues: spectrum[..d].to_vec(),
        modes,
        cutoff,
        inner_product: input.inner_product,
        kind: input.kind,
        spectrum,
        tau: input.tau,
        mean: input.mean.clone(),
    })
}

/// Classical Gram-Schmidt with reorthogonalization in the `x` product.
/// Columns numerically inside the span of their predecessors get a zero
/// column in `Q` and a zero diagonal in `R`.
fn x_orthonormal_qr(vectors: &[Vec<f64>], x: &CsrMatrix) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let (dim, n) = (vectors[0].len(), vectors.len());
    let mut q = DMatrix::<f64>::zeros(dim, n);
    let mut xq = DMatrix::<f64>::zeros(dim, n);
    let mut r = DMatrix::<f64>::zeros(n, n);
    for (j, y) in vectors.iter().enumerate() {
        let mut w = DVector::from_column_slice(y);
        let mut xw = DVector::from_vec(x.mul_vec(y));
        let mut norm2 = w.dot(&xw);
        let start = norm2;
        for _ in 0..3 {
            if j == 0 || norm2 <= 0.0 {
                break;
            }
            let c = xq.columns(0, j).tr_mul(&w);
            w -= q.columns(0, j) * &c;
            for (i, ci) in c.iter().enumerate() {
                r[(i, j)] += ci;
            }
            xw = DVector::from_vec(x.mul_vec(w.as_slice()));
            let next = w.dot(&xw);
            let shrunk = next < 0.25 * norm2;
            norm2 = next;
            if !shrunk {
                break;
            }
        }
        if norm2 < -1e-12 * start.abs().max(f64::MIN_POSITIVE) {
            return Err(Error::IndefiniteInnerProduct(norm2));
        }
        let nrm = norm2.max(0.0).sqrt();
        if nrm > 1e-14 * start.max(0.0).sqrt() && nrm > 0.0 {
            r[(j, j)] = nrm;
            q.set_column(j, &(w / nrm));
            xq.set_column(j, &(xw / nrm));
        }
    }
    Ok((q, r))
}

/// Coefficients `c_k = (v, phi_k)_X` for `k < r` and the X-norm of the remainder.
pub fn project(basis: &PodBasis, r: usize, v: &[f64], x: &CsrMatrix) -> Result<(Vec<f64>, f64)> {
    if r == 0 || r > basis.dim() {
        return Err(Error::RankOutOfRange { r, max: basis.dim() });
    }
    let xv = x.mul_vec(v);
    let coeffs: Vec<f64> = basis.modes[..r].iter().map(|m| dot(m, &xv)).collect();
    let mut rem = v.to_vec();
    for (c, m) in coeffs.iter().zip(&basis.modes) {
        rem.iter_mut().zip(m).for_each(|(a, b)| *a -= c * b);
    }
    Ok((coeffs, x.quad_form(&rem).max(0.0).sqrt()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct StiffnessDiagnostics {
    /// Spectral norm of `s_ij = (grad phi_j, grad phi_i)`.
    pub s_norm: f64,
    /// `C_r = sum_{k<=r} |grad phi_k|_0` for `r = 1..d`.
    pub c_r_h1: Vec<f64>,
}

pub fn stiffness_diagnostics(basis: &PodBasis, space: &THSpace) -> Result<StiffnessDiagnostics> {
    if basis.dim() == 0 {
        return Err(Error::RankOutOfRange { r: 1, max: 0 });
    }
    let a = inner_product_operator(space, basis.kind, InnerProduct::H1);
    let am: Vec<Vec<f64>> = basis.modes.iter().map(|m| a.mul_vec(m)).collect();
    let d = basis.dim();
    let s = DMatrix::from_fn(d, d, |i, j| dot(&basis.modes[i], &am[j]));
    let s = (&s + s.transpose()) * 0.5;
    let s_norm = SymmetricEigen::new(s.clone()).eigenvalues.iter().fold(0.0f64, |m, &v| m.max(v));
    let mut c = 0.0;
    let c_r_h1 = (0..d)
        .map(|k| {
            c += s[(k, k)].max(0.0).sqrt();
            c
        })
        .collect();
    Ok(StiffnessDiagnostics { s_norm, c_r_h1 })
}

/// Spectrum as CSV, `index,eigenvalue`, one-based.
pub fn write_spectrum_csv(basis: &PodBasis, mut w: impl Write) -> io::Result<()> {
    writeln!(w, "index,eigenvalue")?;
    for (k, l) in basis.spectrum.iter().enumerate() {
        writeln!(w, "{},{:e}", k + 1, l)?;
    }
    Ok(())
}
