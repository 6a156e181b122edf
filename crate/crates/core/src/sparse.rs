//! Compressed sparse row matrix used for the affinity support.
//!
//! The nonzero pattern is fixed at construction; optimization-time products
//! reuse the pattern with substituted values (see
//! [`SparseMatrix::mul_dense_with`]) so the per-iteration attractive term
//! never re-sorts or reallocates the structure.

use rayon::prelude::*;

use crate::error::{Result, TsneError};
use crate::scalar::Scalar;

/// Row-major CSR matrix. Column indices within each row are strictly
/// increasing; duplicate triplets are summed at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix<T> {
    rows: usize,
    cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<u32>,
    values: Vec<T>,
}

impl<T: Scalar> SparseMatrix<T> {
    /// Builds CSR from unordered `(row, col, value)` triplets. Duplicates are
    /// summed; out-of-bounds indices are reported with their coordinates.
    pub fn from_triplets(
        rows: usize,
        cols: usize,
        triplets: &[(usize, usize, T)],
    ) -> Result<Self> {
        if cols > u32::MAX as usize {
            return Err(TsneError::InvalidParameter(format!(
                "column count {cols} exceeds the u32 index range"
            )));
        }
        for &(r, c, _) in triplets {
            if r >= rows || c >= cols {
                return Err(TsneError::TripletOutOfBounds {
                    row: r,
                    col: c,
                    rows,
                    cols,
                });
            }
        }

        let mut sorted: Vec<(usize, usize, T)> = triplets.to_vec();
        sorted.sort_by_key(|t| (t.0, t.1));

        let mut entry_rows: Vec<usize> = Vec::with_capacity(sorted.len());
        let mut col_indices: Vec<u32> = Vec::with_capacity(sorted.len());
        let mut values: Vec<T> = Vec::with_capacity(sorted.len());
        for &(r, c, v) in &sorted {
            if entry_rows.last() == Some(&r) && col_indices.last() == Some(&(c as u32)) {
                let last = values.last_mut().expect("value per stored index");
                *last = *last + v;
            } else {
                entry_rows.push(r);
                col_indices.push(c as u32);
                values.push(v);
            }
        }

        let mut row_offsets = vec![0usize; rows + 1];
        for &r in &entry_rows {
            row_offsets[r + 1] += 1;
        }
        for i in 0..rows {
            row_offsets[i + 1] += row_offsets[i];
        }

        Ok(SparseMatrix {
            rows,
            cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[u32] {
        &self.col_indices
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[u32], &[T]) {
        let lo = self.row_offsets[i];
        let hi = self.row_offsets[i + 1];
        (&self.col_indices[lo..hi], &self.values[lo..hi])
    }

    /// Value at `(i, j)`, or zero when the cell is outside the support.
    pub fn get(&self, i: usize, j: usize) -> T {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&(j as u32)) {
            Ok(pos) => vals[pos],
            Err(_) => T::zero(),
        }
    }

    /// Dense row-major copy, for small oracles and tests.
    pub fn to_dense(&self) -> Vec<T> {
        let mut dense = vec![T::zero(); self.rows * self.cols];
        for i in 0..self.rows {
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                dense[i * self.cols + c as usize] = v;
            }
        }
        dense
    }

    /// `self * dense`, where `dense` is column-count x `dense_cols`
    /// row-major. Accumulates in `f64`.
    pub fn mul_dense(&self, dense: &[T], dense_cols: usize) -> Vec<T> {
        self.mul_dense_with(&self.values, dense, dense_cols)
    }

    /// Product with the stored pattern but substituted `values` (same length
    /// and order as [`SparseMatrix::values`]). This is how per-iteration
    /// weights ride on the fixed affinity support.
    pub fn mul_dense_with(&self, values: &[T], dense: &[T], dense_cols: usize) -> Vec<T> {
        let mut out = vec![T::zero(); self.rows * dense_cols];
        self.mul_dense_with_into(values, dense, dense_cols, &mut out);
        out
    }

    /// [`SparseMatrix::mul_dense_with`] writing into a caller-owned buffer.
    ///
    /// Rows are processed in parallel; each output row is accumulated
    /// sequentially in `f64` by exactly one task, so the result does not
    /// depend on the worker count.
    pub fn mul_dense_with_into(
        &self,
        values: &[T],
        dense: &[T],
        dense_cols: usize,
        out: &mut [T],
    ) {
        assert_eq!(values.len(), self.values.len(), "substituted value count");
        assert_eq!(dense.len(), self.cols * dense_cols, "dense operand shape");
        assert_eq!(out.len(), self.rows * dense_cols, "output shape");
        out.par_chunks_mut(dense_cols)
            .enumerate()
            .for_each(|(i, row_out)| {
                let lo = self.row_offsets[i];
                let hi = self.row_offsets[i + 1];
                for (c, slot) in row_out.iter_mut().enumerate() {
                    let mut acc = 0.0f64;
                    for (col, v) in self.col_indices[lo..hi].iter().zip(&values[lo..hi]) {
                        let col = *col as usize;
                        acc += v.as_f64() * dense[col * dense_cols + c].as_f64();
                    }
                    *slot = T::from_f64(acc);
                }
            });
    }

    /// Multiplies every stored value by `factor` in place.
    pub fn scale(&mut self, factor: T) {
        for v in &mut self.values {
            *v = *v * factor;
        }
    }

    /// Sum of all stored values, accumulated in `f64`.
    pub fn sum(&self) -> f64 {
        self.values.iter().map(|v| v.as_f64()).sum()
    }
}
