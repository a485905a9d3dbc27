//! Compressed-row sparse matrices and the SPD solve used by Newton steps.
//!
//! Factorizations are delegated to faer's supernodal sparse Cholesky. Since the
//! matrices handed to [`SpdSolver`] are symmetric with full storage, the CSR
//! arrays are passed to faer unchanged as CSC arrays of the same matrix.

use faer::sparse::linalg::solvers::{Llt, SymbolicLlt};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::{MatMut, Side};
use faer::linalg::solvers::Solve;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("dimension mismatch: matrix is {rows}x{cols}, vector has length {len}")]
    DimensionMismatch { rows: usize, cols: usize, len: usize },
    #[error("triplet ({row}, {col}) outside a {rows}x{cols} matrix")]
    TripletOutOfBounds { row: usize, col: usize, rows: usize, cols: usize },
    #[error("non-finite value in matrix or right-hand side")]
    NonFinite,
    #[error("symmetric positive definite solve failed ({reason}); achieved relative residual {residual:e}")]
    Breakdown { reason: String, residual: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds a matrix from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self, LinalgError> {
        let mut counts = vec![0usize; nrows + 1];
        for &(r, c, v) in triplets {
            if r >= nrows || c >= ncols {
                return Err(LinalgError::TripletOutOfBounds { row: r, col: c, rows: nrows, cols: ncols });
            }
            if !v.is_finite() {
                return Err(LinalgError::NonFinite);
            }
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
        let mut scratch: Vec<(usize, f64)> = Vec::new();
        for r in 0..nrows {
            scratch.clear();
            scratch.extend((counts[r]..counts[r + 1]).map(|k| (cols[k], vals[k])));
            scratch.sort_by_key(|&(c, _)| c);
            for &(c, v) in &scratch {
                if col_idx.len() > row_ptr[r] && *col_idx.last().unwrap() == c {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(c);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Ok(Self { nrows, ncols, row_ptr, col_idx, values })
    }

    /// Wraps raw CSR arrays. Column indices must be sorted and unique within each row.
    pub fn from_csr(
        nrows: usize,
        ncols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<f64>,
    ) -> Self {
        assert_eq!(row_ptr.len(), nrows + 1);
        assert_eq!(col_idx.len(), values.len());
        assert_eq!(*row_ptr.last().unwrap(), col_idx.len());
        debug_assert!((0..nrows).all(|r| {
            let row = &col_idx[row_ptr[r]..row_ptr[r + 1]];
            row.windows(2).all(|w| w[0] < w[1]) && row.iter().all(|&c| c < ncols)
        }));
        Self { nrows, ncols, row_ptr, col_idx, values }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_csr(n, n, (0..=n).collect(), (0..n).collect(), vec![1.0; n])
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self::from_csr(nrows, ncols, vec![0; nrows + 1], Vec::new(), Vec::new())
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

    /// Iterates `(col, value)` over row `r`.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[range.clone()].iter().copied().zip(self.values[range].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.col_idx[range.clone()].binary_search(&c) {
            Ok(k) => self.values[range.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn spmv(&self, x: &[f64]) -> Result<Vec<f64>, LinalgError> {
        if x.len() != self.ncols {
            return Err(LinalgError::DimensionMismatch { rows: self.nrows, cols: self.ncols, len: x.len() });
        }
        let mut y = vec![0.0; self.nrows];
        self.spmv_into(x, &mut y);
        Ok(y)
    }

    /// `y = A x` without dimension checks beyond debug assertions.
    pub fn spmv_into(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(y.len(), self.nrows);
        for (r, out) in y.iter_mut().enumerate() {
            *out = self.row(r).map(|(c, v)| v * x[c]).sum();
        }
    }

    /// `y = Aᵀ x`.
    pub fn spmv_transpose(&self, x: &[f64]) -> Result<Vec<f64>, LinalgError> {
        if x.len() != self.nrows {
            return Err(LinalgError::DimensionMismatch { rows: self.nrows, cols: self.ncols, len: x.len() });
        }
        let mut y = vec![0.0; self.ncols];
        for (r, &xr) in x.iter().enumerate() {
            for (c, v) in self.row(r) {
                y[c] += v * xr;
            }
        }
        Ok(y)
    }

    pub fn transpose(&self) -> Self {
        let triplets: Vec<_> = (0..self.nrows).flat_map(|r| self.row(r).map(move |(c, v)| (c, r, v))).collect();
        Self::from_triplets(self.ncols, self.nrows, &triplets).expect("transpose of a valid matrix")
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.nrows == self.ncols
            && (0..self.nrows).all(|r| self.row(r).all(|(c, v)| (v - self.get(c, r)).abs() <= tol * (1.0 + v.abs())))
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    fn as_faer(&self) -> SparseColMatRef<'_, usize, f64> {
        let symbolic = SymbolicSparseColMatRef::new_checked(self.ncols, self.nrows, &self.row_ptr, None, &self.col_idx);
        SparseColMatRef::new(symbolic, &self.values)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearSolveReport {
    /// ‖A x − b‖₂ for the returned x.
    pub residual_norm: f64,
    /// `residual_norm / ‖b‖₂` (or the absolute residual when b = 0).
    pub relative_residual: f64,
    pub refinement_steps: usize,
    /// True when the Tikhonov safeguard was needed.
    pub regularized: bool,
}

/// Cholesky solver that keeps the symbolic factorization between calls on the same pattern.
#[derive(Debug, Default)]
pub struct SpdSolver {
    symbolic: Option<(Vec<usize>, Vec<usize>, SymbolicLlt<usize>)>,
}

const MAX_REFINEMENT: usize = 3;
const TIKHONOV: f64 = 1e-12;

impl SpdSolver {
    pub fn new() -> Self {
        Self::default()
    }

    /// Solves `A x = b` for symmetric positive definite `A` stored with both triangles.
    /// Guarantees `‖A x − b‖₂ ≤ tol · ‖b‖₂` or returns [`LinalgError::Breakdown`].
    pub fn solve(&mut self, a: &SparseMatrix, b: &[f64], tol: f64) -> Result<(Vec<f64>, LinearSolveReport), LinalgError> {
        let (x, report) = self.solve_best_effort(a, b, tol)?;
        if report.relative_residual > tol {
            return Err(LinalgError::Breakdown {
                reason: "residual above tolerance after refinement".into(),
                residual: report.relative_residual,
            });
        }
        Ok((x, report))
    }

    /// Like [`solve`](Self::solve), but returns the refined solution even when the
    /// residual target is missed; the report carries the achieved residual. Only a
    /// failed factorization or a non-finite result is an error.
    pub fn solve_best_effort(
        &mut self,
        a: &SparseMatrix,
        b: &[f64],
        tol: f64,
    ) -> Result<(Vec<f64>, LinearSolveReport), LinalgError> {
        if a.nrows != a.ncols || b.len() != a.nrows {
            return Err(LinalgError::DimensionMismatch { rows: a.nrows, cols: a.ncols, len: b.len() });
        }
        if !b.iter().chain(a.values.iter()).all(|v| v.is_finite()) {
            return Err(LinalgError::NonFinite);
        }
        let b_norm = norm2(b);
        if b_norm == 0.0 {
            let report = LinearSolveReport { residual_norm: 0.0, relative_residual: 0.0, refinement_steps: 0, regularized: false };
            return Ok((vec![0.0; b.len()], report));
        }
        let symbolic = self.symbolic_for(a)?;

        let first = match Llt::try_new_with_symbolic(symbolic.clone(), a.as_faer(), Side::Lower) {
            Ok(llt) => {
                let (x, report) = refine(a, &llt, b, b_norm, tol, false)?;
                if report.relative_residual <= tol {
                    return Ok((x, report));
                }
                log::debug!("Cholesky residual {:e} above tolerance; retrying with Tikhonov shift", report.relative_residual);
                Some((x, report))
            }
            Err(err) => {
                log::debug!("Cholesky factorization failed ({err:?}); retrying with Tikhonov shift");
                None
            }
        };

        let mut shifted = a.clone();
        for r in 0..shifted.nrows {
            let range = shifted.row_ptr[r]..shifted.row_ptr[r + 1];
            if let Ok(k) = shifted.col_idx[range.clone()].binary_search(&r) {
                let d = shifted.values[range.start + k];
                shifted.values[range.start + k] = d + TIKHONOV * d.abs().max(f64::MIN_POSITIVE);
            }
        }
        let second = match Llt::try_new_with_symbolic(symbolic, shifted.as_faer(), Side::Lower) {
            // refine against the unshifted operator so the residual refers to A itself
            Ok(llt) => refine(a, &llt, b, b_norm, tol, true).ok(),
            Err(_) => None,
        };
        match (first, second) {
            (Some(f), Some(s)) => Ok(if s.1.residual_norm < f.1.residual_norm { s } else { f }),
            (Some(x), None) | (None, Some(x)) => Ok(x),
            (None, None) => Err(LinalgError::Breakdown { reason: "Cholesky factorization failed".into(), residual: f64::INFINITY }),
        }
    }

    fn symbolic_for(&mut self, a: &SparseMatrix) -> Result<SymbolicLlt<usize>, LinalgError> {
        if let Some((ptr, idx, sym)) = &self.symbolic {
            if *ptr == a.row_ptr && *idx == a.col_idx {
                return Ok(sym.clone());
            }
        }
        let sym = SymbolicLlt::try_new(a.as_faer().symbolic(), Side::Lower)
            .map_err(|err| LinalgError::Breakdown { reason: format!("symbolic analysis: {err:?}"), residual: f64::INFINITY })?;
        self.symbolic = Some((a.row_ptr.clone(), a.col_idx.clone(), sym.clone()));
        Ok(sym)
    }
}

fn refine(
    a: &SparseMatrix,
    llt: &Llt<usize, f64>,
    b: &[f64],
    b_norm: f64,
    tol: f64,
    regularized: bool,
) -> Result<(Vec<f64>, LinearSolveReport), LinalgError> {
    let mut x = b.to_vec();
    llt.solve_in_place(MatMut::from_column_major_slice_mut(&mut x, b.len(), 1));
    let mut ax = vec![0.0; b.len()];
    let mut steps = 0;
    loop {
        a.spmv_into(&x, &mut ax);
        let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let res = norm2(&r);
        if !res.is_finite() {
            return Err(LinalgError::Breakdown { reason: "non-finite solution".into(), residual: res });
        }
        if res <= tol * b_norm || steps == MAX_REFINEMENT {
            let report = LinearSolveReport { residual_norm: res, relative_residual: res / b_norm, refinement_steps: steps, regularized };
            return Ok((x, report));
        }
        llt.solve_in_place(MatMut::from_column_major_slice_mut(&mut r, b.len(), 1));
        x.iter_mut().zip(&r).for_each(|(xi, di)| *xi += di);
        steps += 1;
    }
}

/// One-shot SPD solve; see [`SpdSolver::solve`].
pub fn solve_spd(a: &SparseMatrix, b: &[f64], tol: f64) -> Result<(Vec<f64>, LinearSolveReport), LinalgError> {
    SpdSolver::new().solve(a, b, tol)
}

pub fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}
