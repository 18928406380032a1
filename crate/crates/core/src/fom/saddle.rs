//! The velocity-pressure saddle point matrix on a fixed pattern.
//!
//! Unknown order: velocity, pressure, and one Lagrange multiplier for the
//! zero-mean pressure constraint when the space is gauge-fixed.
//!
//! ```text
//! [  K   -B^T  0 ]
//! [ -B    0    m ]
//! [  0    m^T  0 ]
//! ```

use crate::error::Result;
use crate::fe_space::{OperatorKind, PressureGauge, THSpace};
use crate::sparse::{CsrMatrix, LuAnalysis, LuFactors};

pub(crate) struct SaddleSystem {
    pub nu: usize,
    pub np: usize,
    pub n: usize,
    pattern: CsrMatrix,
    /// Saddle position of each velocity-pattern entry.
    vmap: Vec<usize>,
    /// Saddle positions of each divergence entry, in `-B` and `-B^T`.
    bmap: Vec<(usize, usize)>,
    b_values: Vec<f64>,
    /// Positions of the gauge row and column entries, with their values.
    gauge: Vec<(usize, usize, f64)>,
    /// Positions in a Dirichlet row or column, and the Dirichlet diagonals.
    dir_offdiag: Vec<usize>,
    dir_diag: Vec<usize>,
    dir_dofs: Vec<usize>,
    analysis: LuAnalysis,
}

impl SaddleSystem {
    pub fn new(space: &THSpace) -> Result<Self> {
        let nu = space.n_velocity();
        let np = space.n_pressure();
        let zero_mean = space.gauge() == PressureGauge::ZeroMean;
        let n = nu + np + usize::from(zero_mean);
        let vp = space.velocity_pattern();
        let b = space.assemble(OperatorKind::Divergence);
        let bt = b.transpose();

        let mut rows: Vec<Vec<usize>> = Vec::with_capacity(n);
        for r in 0..nu {
            let mut row: Vec<usize> = vp.row(r).map(|(c, _)| c).collect();
            row.extend(bt.row(r).map(|(c, _)| nu + c));
            rows.push(row);
        }
        for q in 0..np {
            let mut row: Vec<usize> = b.row(q).map(|(c, _)| c).collect();
            row.push(nu + q);
            if zero_mean {
                row.push(nu + np);
            }
            rows.push(row);
        }
        if zero_mean {
            rows.push((nu..nu + np + 1).collect());
        }
        let pattern = CsrMatrix::from_pattern(n, &rows);

        let mut vmap = Vec::with_capacity(vp.nnz());
        for r in 0..nu {
            for (c, _) in vp.row(r) {
                vmap.push(pattern.position(r, c).expect("velocity block"));
            }
        }
        let mut bmap = Vec::with_capacity(b.nnz());
        for q in 0..np {
            for (c, _) in b.row(q) {
                bmap.push((
                    pattern.position(nu + q, c).expect("divergence block"),
                    pattern.position(c, nu + q).expect("gradient block"),
                ));
            }
        }
        let mut gauge = Vec::new();
        if zero_mean {
            let m = space.pressure_mean_weights();
            for (q, &mq) in m.iter().enumerate() {
                gauge.push((pattern.position(nu + q, nu + np).unwrap(), pattern.position(nu + np, nu + q).unwrap(), mq));
            }
        }

        let dir_dofs = space.dirichlet_velocity_dofs().to_vec();
        let mut is_dir = vec![false; n];
        dir_dofs.iter().for_each(|&d| is_dir[d] = true);
        let mut dir_offdiag = Vec::new();
        let mut dir_diag = Vec::new();
        for r in 0..n {
            for k in pattern.row_ptr()[r]..pattern.row_ptr()[r + 1] {
                let c = pattern.col_idx()[k];
                if is_dir[r] || is_dir[c] {
                    if r == c {
                        dir_diag.push(k);
                    } else {
                        dir_offdiag.push(k);
                    }
                }
            }
        }
        let analysis = LuAnalysis::new(&pattern)?;
        Ok(Self {
            nu,
            np,
            n,
            pattern,
            vmap,
            bmap,
            b_values: b.values().to_vec(),
            gauge,
            dir_offdiag,
            dir_diag,
            dir_dofs,
            analysis,
        })
    }

    /// Full (not yet eliminated) matrix with velocity block `k`, given as
    /// value arrays on the velocity pattern that are summed.
    pub fn matrix(&self, blocks: &[(f64, &[f64])]) -> CsrMatrix {
        let mut m = self.pattern.clone();
        for &(s, block) in blocks {
            self.add_velocity(&mut m, s, block);
        }
        let vals = m.values_mut();
        for (&(pb, pbt), &v) in self.bmap.iter().zip(&self.b_values) {
            vals[pb] = -v;
            vals[pbt] = -v;
        }
        for &(pr, pc, v) in &self.gauge {
            vals[pr] = v;
            vals[pc] = v;
        }
        m
    }

    /// Adds `s * block` (values on the velocity pattern) to the velocity block.
    pub fn add_velocity(&self, m: &mut CsrMatrix, s: f64, block: &[f64]) {
        let vals = m.values_mut();
        for (k, &pos) in self.vmap.iter().enumerate() {
            vals[pos] += s * block[k];
        }
    }

    /// Moves the Dirichlet columns to the right side using `lift` and replaces
    /// Dirichlet rows by identity rows carrying the lift values.
    pub fn eliminate(&self, m: &mut CsrMatrix, rhs: &mut [f64], lift: &[f64]) {
        let mut x = vec![0.0; self.n];
        for &d in &self.dir_dofs {
            x[d] = lift[d];
        }
        let y = m.mul_vec(&x);
        rhs.iter_mut().zip(&y).for_each(|(r, v)| *r -= v);
        for &d in &self.dir_dofs {
            rhs[d] = lift[d];
        }
        let vals = m.values_mut();
        for &k in &self.dir_offdiag {
            vals[k] = 0.0;
        }
        for &k in &self.dir_diag {
            vals[k] = 1.0;
        }
    }

    pub fn factor(&self, m: &CsrMatrix) -> Result<LuFactors> {
        self.analysis.factor(m)
    }

    pub fn split(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        (x[..self.nu].to_vec(), x[self.nu..self.nu + self.np].to_vec())
    }

    pub fn join(&self, u: &[f64], p: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.n];
        x[..self.nu].copy_from_slice(u);
        x[self.nu..self.nu + self.np].copy_from_slice(p);
        x
    }
}
