//! Compressed row storage and a sparse direct solver.
//!
//! Factorizations are delegated to `faer`'s supernodal LU. The symbolic
//! analysis of a pattern can be reused across numeric refactorizations,
//! which is what the time stepper does every nonlinear iteration.

use std::io::{self, Write};

use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::{Mat, MatMut, Par};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut counts = vec![0usize; nrows + 1];
        for &(r, c, _) in triplets {
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) out of bounds");
            counts[r + 1] += 1;
        }
        for i in 0..nrows {
            counts[i + 1] += counts[i];
        }
        let mut next = counts.clone();
        let mut cols = vec![0usize; triplets.len()];
        let mut vals = vec![0.0; triplets.len()];
        for &(r, c, v) in triplets {
            cols[next[r]] = c;
            vals[next[r]] = v;
            next[r] += 1;
        }
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        row_ptr.push(0);
        let mut order: Vec<usize> = Vec::new();
        for r in 0..nrows {
            let (lo, hi) = (counts[r], counts[r + 1]);
            order.clear();
            order.extend(lo..hi);
            order.sort_by_key(|&k| cols[k]);
            for &k in &order {
                if col_idx.len() > row_ptr[r] && *col_idx.last().unwrap() == cols[k] {
                    *values.last_mut().unwrap() += vals[k];
                } else {
                    col_idx.push(cols[k]);
                    values.push(vals[k]);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self { nrows, ncols, row_ptr, col_idx, values }
    }

    /// Pattern-only constructor, values zero. `rows[i]` must be sorted and unique.
    pub fn from_pattern(ncols: usize, rows: &[Vec<usize>]) -> Self {
        let mut row_ptr = vec![0];
        let mut col_idx = Vec::new();
        for r in rows {
            debug_assert!(r.windows(2).all(|w| w[0] < w[1]));
            col_idx.extend_from_slice(r);
            row_ptr.push(col_idx.len());
        }
        let values = vec![0.0; col_idx.len()];
        Self { nrows: rows.len(), ncols, row_ptr, col_idx, values }
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, row_ptr: vec![0; nrows + 1], col_idx: vec![], values: vec![] }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (lo, hi) = (self.row_ptr[r], self.row_ptr[r + 1]);
        self.col_idx[lo..hi].iter().copied().zip(self.values[lo..hi].iter().copied())
    }

    /// Position of `(r, c)` in the value array.
    pub fn position(&self, r: usize, c: usize) -> Option<usize> {
        let (lo, hi) = (self.row_ptr[r], self.row_ptr[r + 1]);
        self.col_idx[lo..hi].binary_search(&c).ok().map(|k| lo + k)
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.position(r, c).map_or(0.0, |k| self.values[k])
    }

    pub fn same_pattern(&self, other: &Self) -> bool {
        self.nrows == other.nrows
            && self.ncols == other.ncols
            && self.row_ptr == other.row_ptr
            && self.col_idx == other.col_idx
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        for (r, yr) in y.iter_mut().enumerate() {
            *yr = self.row(r).map(|(c, v)| v * x[c]).sum();
        }
    }

    /// `A B` for a dense column-major `B`.
    pub fn mul_dense(&self, b: &nalgebra::DMatrix<f64>) -> nalgebra::DMatrix<f64> {
        assert_eq!(b.nrows(), self.ncols, "dimension mismatch in mul_dense");
        let mut out = nalgebra::DMatrix::zeros(self.nrows, b.ncols());
        let (n, m) = (self.ncols, self.nrows);
        for (x, y) in b.as_slice().chunks_exact(n.max(1)).zip(out.as_mut_slice().chunks_exact_mut(m.max(1))) {
            self.mul_vec_into(x, y);
        }
        out
    }

    /// `A^T x`.
    pub fn tr_mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.nrows);
        let mut y = vec![0.0; self.ncols];
        for (r, &xr) in x.iter().enumerate() {
            if xr != 0.0 {
                for (c, v) in self.row(r) {
                    y[c] += v * xr;
                }
            }
        }
        y
    }

    /// `y^T A x`.
    pub fn bilinear(&self, y: &[f64], x: &[f64]) -> f64 {
        assert_eq!(y.len(), self.nrows);
        (0..self.nrows).map(|r| y[r] * self.row(r).map(|(c, v)| v * x[c]).sum::<f64>()).sum()
    }

    pub fn quad_form(&self, x: &[f64]) -> f64 {
        self.bilinear(x, x)
    }

    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.ncols + 1];
        for &c in &self.col_idx {
            counts[c + 1] += 1;
        }
        for i in 0..self.ncols {
            counts[i + 1] += counts[i];
        }
        let mut next = counts.clone();
        let mut col_idx = vec![0; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                col_idx[next[c]] = r;
                values[next[c]] = v;
                next[c] += 1;
            }
        }
        Self { nrows: self.ncols, ncols: self.nrows, row_ptr: counts, col_idx, values }
    }

    pub fn scale(&mut self, s: f64) {
        self.values.iter_mut().for_each(|v| *v *= s);
    }

    /// `self + s * other` on the union pattern.
    pub fn add_scaled(&self, s: f64, other: &Self) -> Self {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        if self.same_pattern(other) {
            let mut out = self.clone();
            out.values.iter_mut().zip(&other.values).for_each(|(a, b)| *a += s * b);
            return out;
        }
        let mut t: Vec<(usize, usize, f64)> = Vec::with_capacity(self.nnz() + other.nnz());
        for r in 0..self.nrows {
            t.extend(self.row(r).map(|(c, v)| (r, c, v)));
            t.extend(other.row(r).map(|(c, v)| (r, c, s * v)));
        }
        Self::from_triplets(self.nrows, self.ncols, &t)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `max |A - A^T|`, zero for exactly symmetric matrices.
    pub fn symmetry_defect(&self) -> f64 {
        assert_eq!(self.nrows, self.ncols);
        let mut d: f64 = 0.0;
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                d = d.max((v - self.get(c, r)).abs());
            }
        }
        d
    }

    /// Symmetric elimination of the listed unknowns: their rows and columns
    /// are zeroed and a unit diagonal is placed. The result needs the rows
    /// and columns to exist on the diagonal.
    pub fn eliminate_dirichlet(&self, dofs: &[usize]) -> Self {
        let mut mask = vec![false; self.nrows.max(self.ncols)];
        for &d in dofs {
            mask[d] = true;
        }
        let mut t = Vec::with_capacity(self.nnz());
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                if !mask[r] && !mask[c] {
                    t.push((r, c, v));
                }
            }
        }
        t.extend(dofs.iter().map(|&d| (d, d, 1.0)));
        Self::from_triplets(self.nrows, self.ncols, &t)
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.nrows, self.ncols);
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                m[(r, c)] += v;
            }
        }
        m
    }

    /// Debug dump, one `row col value` line per stored entry.
    pub fn write_triplets(&self, mut w: impl Write) -> io::Result<()> {
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                writeln!(w, "{r} {c} {v:e}")?;
            }
        }
        Ok(())
    }
}

/// Symbolic LU analysis of a square pattern, reusable for any matrix with
/// the same pattern.
pub struct LuAnalysis {
    n: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    /// CSC position of each CSR entry.
    csr_to_csc: Vec<usize>,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    symbolic: SymbolicLu<usize>,
}

pub struct LuFactors {
    lu: Lu<usize, f64>,
    n: usize,
}

impl LuAnalysis {
    pub fn new(pattern: &CsrMatrix) -> Result<Self> {
        if pattern.nrows != pattern.ncols {
            return Err(Error::DimensionMismatch { expected: pattern.nrows, got: pattern.ncols });
        }
        let n = pattern.nrows;
        let mut col_ptr = vec![0usize; n + 1];
        for &c in &pattern.col_idx {
            col_ptr[c + 1] += 1;
        }
        for i in 0..n {
            col_ptr[i + 1] += col_ptr[i];
        }
        let mut next = col_ptr.clone();
        let mut row_idx = vec![0usize; pattern.nnz()];
        let mut csr_to_csc = vec![0usize; pattern.nnz()];
        for r in 0..n {
            for k in pattern.row_ptr[r]..pattern.row_ptr[r + 1] {
                let c = pattern.col_idx[k];
                row_idx[next[c]] = r;
                csr_to_csc[k] = next[c];
                next[c] += 1;
            }
        }
        let sym = SymbolicSparseColMatRef::new_checked(n, n, &col_ptr, None, &row_idx);
        let symbolic = SymbolicLu::try_new(sym).map_err(|e| Error::SingularSystem(format!("{e:?}")))?;
        Ok(Self {
            n,
            col_ptr,
            row_idx,
            csr_to_csc,
            row_ptr: pattern.row_ptr.clone(),
            col_idx: pattern.col_idx.clone(),
            symbolic,
        })
    }

    pub fn factor(&self, a: &CsrMatrix) -> Result<LuFactors> {
        assert!(
            a.nrows == self.n && a.row_ptr == self.row_ptr && a.col_idx == self.col_idx,
            "matrix pattern differs from the analyzed one"
        );
        let mut csc_vals = vec![0.0; a.nnz()];
        for (k, &v) in a.values.iter().enumerate() {
            csc_vals[self.csr_to_csc[k]] = v;
        }
        let sym = SymbolicSparseColMatRef::new_checked(self.n, self.n, &self.col_ptr, None, &self.row_idx);
        let mat = SparseColMatRef::new(sym, &csc_vals);
        let lu = Lu::try_new_with_symbolic(self.symbolic.clone(), mat)
            .map_err(|e| Error::SingularSystem(format!("{e:?}")))?;
        Ok(LuFactors { lu, n: self.n })
    }
}

impl LuFactors {
    /// One-shot factorization.
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        LuAnalysis::new(a)?.factor(a)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x)?;
        Ok(x)
    }

    pub fn solve_in_place(&self, b: &mut [f64]) -> Result<()> {
        use faer::linalg::solvers::SolveCore;
        assert_eq!(b.len(), self.n);
        let rhs = MatMut::from_column_major_slice_mut(b, self.n, 1);
        self.lu.solve_in_place_with_conj(faer::Conj::No, rhs);
        if b.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::SingularSystem("non-finite solution".into()))
        }
    }

    /// Solves for several right-hand sides stored as columns.
    pub fn solve_many(&self, columns: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        use faer::linalg::solvers::SolveCore;
        let k = columns.len();
        let mut m = Mat::<f64>::zeros(self.n, k);
        for (j, col) in columns.iter().enumerate() {
            assert_eq!(col.len(), self.n);
            for (i, &v) in col.iter().enumerate() {
                m[(i, j)] = v;
            }
        }
        self.lu.solve_in_place_with_conj(faer::Conj::No, m.as_mut());
        let out: Vec<Vec<f64>> = (0..k).map(|j| (0..self.n).map(|i| m[(i, j)]).collect()).collect();
        if out.iter().flatten().all(|v| v.is_finite()) {
            Ok(out)
        } else {
            Err(Error::SingularSystem("non-finite solution".into()))
        }
    }
}

/// Runs faer kernels sequentially so repeated runs are bit-identical;
/// parallelism is applied across independent runs instead.
pub fn use_sequential_kernels() {
    faer::set_global_parallelism(Par::Seq);
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn axpy(y: &mut [f64], s: f64, x: &[f64]) {
    y.iter_mut().zip(x).for_each(|(a, b)| *a += s * b);
}
