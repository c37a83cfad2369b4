//! Row-compressed sparse matrices with an optional band annotation.

use crate::error::{MbsError, Result};

/// Sparse matrix in compressed-row form.
///
/// Entries within a row are sorted by column with no duplicates. Stored
/// entries are structural: an explicitly stored zero still counts as a
/// nonzero. When `bandwidth` is set, every row's stored entries span at most
/// that many consecutive columns.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseBandedMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    bandwidth: Option<usize>,
}

impl SparseBandedMatrix {
    /// Assembles a matrix from `(row, col, value)` triplets. Duplicate
    /// positions are summed.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        let mut trip: Vec<(usize, usize, f64)> = triplets.into_iter().collect();
        if let Some(&(i, j, _)) = trip.iter().find(|&&(i, j, _)| i >= nrows || j >= ncols) {
            return Err(MbsError::DimensionMismatch(format!(
                "entry ({i}, {j}) outside a {nrows} x {ncols} matrix"
            )));
        }
        trip.sort_by_key(|&(i, j, _)| (i, j));
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::with_capacity(trip.len());
        let mut values: Vec<f64> = Vec::with_capacity(trip.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in trip {
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            row_ptr[i + 1] += 1;
            col_idx.push(j);
            values.push(v);
            last = Some((i, j));
        }
        for i in 0..nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
            bandwidth: None,
        })
    }

    /// Builds a matrix row by row; each row lists `(col, value)` pairs in
    /// strictly increasing column order.
    pub(crate) fn from_sorted_rows(ncols: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        let nrows = rows.len();
        let nnz = rows.iter().map(Vec::len).sum();
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let mut col_idx = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        row_ptr.push(0);
        for row in rows {
            debug_assert!(row.windows(2).all(|w| w[0].0 < w[1].0));
            for (j, v) in row {
                debug_assert!(j < ncols);
                col_idx.push(j);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
            bandwidth: None,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![1.0; n])
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        Self {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: diag.to_vec(),
            bandwidth: Some(1),
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.nrows, self.ncols)
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn bandwidth(&self) -> Option<usize> {
        self.bandwidth
    }

    /// Columns and values stored in row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.col_idx[a..b], &self.values[a..b])
    }

    /// Iterates over `(row, col, value)` in row-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |i| {
            let (cols, vals) = self.row(i);
            cols.iter().zip(vals).map(move |(&j, &v)| (i, j, v))
        })
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).map(|p| vals[p]).unwrap_or(0.0)
    }

    /// Widest span of consecutive columns touched by any row.
    pub fn measured_bandwidth(&self) -> usize {
        (0..self.nrows)
            .map(|i| {
                let (cols, _) = self.row(i);
                match (cols.first(), cols.last()) {
                    (Some(a), Some(b)) => b - a + 1,
                    _ => 0,
                }
            })
            .max()
            .unwrap_or(0)
    }

    /// Marks the matrix as banded with its measured bandwidth.
    pub fn with_band(mut self) -> Self {
        self.bandwidth = Some(self.measured_bandwidth());
        self
    }

    pub fn without_band(mut self) -> Self {
        self.bandwidth = None;
        self
    }

    /// Lower and upper half-bandwidths of a (square) matrix: the largest
    /// `i - j` and `j - i` over stored entries.
    pub fn half_bandwidths(&self) -> (usize, usize) {
        let mut lower = 0;
        let mut upper = 0;
        for (i, j, _) in self.triplets() {
            if i > j {
                lower = lower.max(i - j);
            } else {
                upper = upper.max(j - i);
            }
        }
        (lower, upper)
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.nrows];
        self.mul_vec_into(x, &mut out);
        out
    }

    pub fn mul_vec_into(&self, x: &[f64], out: &mut [f64]) {
        assert_eq!(x.len(), self.ncols, "mul_vec: input length");
        assert_eq!(out.len(), self.nrows, "mul_vec: output length");
        for (i, o) in out.iter_mut().enumerate() {
            let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
            *o = self.values[a..b]
                .iter()
                .zip(&self.col_idx[a..b])
                .map(|(v, &j)| v * x[j])
                .sum();
        }
    }

    /// `A^T x`.
    pub fn tr_mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.ncols];
        self.tr_mul_vec_into(x, &mut out);
        out
    }

    pub fn tr_mul_vec_into(&self, x: &[f64], out: &mut [f64]) {
        assert_eq!(x.len(), self.nrows, "tr_mul_vec: input length");
        assert_eq!(out.len(), self.ncols, "tr_mul_vec: output length");
        out.iter_mut().for_each(|o| *o = 0.0);
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
            for (v, &j) in self.values[a..b].iter().zip(&self.col_idx[a..b]) {
                out[j] += v * xi;
            }
        }
    }

    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.ncols + 1];
        for &j in &self.col_idx {
            counts[j + 1] += 1;
        }
        for j in 0..self.ncols {
            counts[j + 1] += counts[j];
        }
        let row_ptr = counts.clone();
        let mut next = counts;
        let mut col_idx = vec![0; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for (i, j, v) in self.triplets() {
            let p = next[j];
            col_idx[p] = i;
            values[p] = v;
            next[j] += 1;
        }
        Self {
            nrows: self.ncols,
            ncols: self.nrows,
            row_ptr,
            col_idx,
            values,
            bandwidth: None,
        }
    }

    /// Sparse product `self * other`.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.ncols != other.nrows {
            return Err(MbsError::DimensionMismatch(format!(
                "cannot multiply {:?} by {:?}",
                self.shape(),
                other.shape()
            )));
        }
        let mut acc = vec![0.0; other.ncols];
        let mut mark = vec![usize::MAX; other.ncols];
        let mut rows = Vec::with_capacity(self.nrows);
        let mut touched: Vec<usize> = Vec::new();
        for i in 0..self.nrows {
            touched.clear();
            let (cols, vals) = self.row(i);
            for (&k, &a) in cols.iter().zip(vals) {
                let (ocols, ovals) = other.row(k);
                for (&j, &b) in ocols.iter().zip(ovals) {
                    if mark[j] != i {
                        mark[j] = i;
                        acc[j] = 0.0;
                        touched.push(j);
                    }
                    acc[j] += a * b;
                }
            }
            touched.sort_unstable();
            rows.push(touched.iter().map(|&j| (j, acc[j])).collect());
        }
        Ok(Self::from_sorted_rows(other.ncols, rows))
    }

    /// Kronecker product `self ⊗ other`.
    pub fn kron(&self, other: &Self) -> Self {
        let mut rows = Vec::with_capacity(self.nrows * other.nrows);
        for i in 0..self.nrows {
            let (acols, avals) = self.row(i);
            for k in 0..other.nrows {
                let (bcols, bvals) = other.row(k);
                let mut row = Vec::with_capacity(acols.len() * bcols.len());
                for (&j, &a) in acols.iter().zip(avals) {
                    for (&l, &b) in bcols.iter().zip(bvals) {
                        row.push((j * other.ncols + l, a * b));
                    }
                }
                rows.push(row);
            }
        }
        Self::from_sorted_rows(self.ncols * other.ncols, rows)
    }

    /// Stacks matrices with equal column counts on top of each other.
    pub fn vstack(blocks: &[Self]) -> Result<Self> {
        let Some(first) = blocks.first() else {
            return Err(MbsError::InvalidArgument("vstack of zero blocks".into()));
        };
        let ncols = first.ncols;
        if let Some(b) = blocks.iter().find(|b| b.ncols != ncols) {
            return Err(MbsError::DimensionMismatch(format!(
                "vstack: {} columns vs {}",
                b.ncols, ncols
            )));
        }
        let mut row_ptr = vec![0];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for b in blocks {
            let offset = col_idx.len();
            row_ptr.extend(b.row_ptr[1..].iter().map(|p| p + offset));
            col_idx.extend_from_slice(&b.col_idx);
            values.extend_from_slice(&b.values);
        }
        Ok(Self {
            nrows: blocks.iter().map(|b| b.nrows).sum(),
            ncols,
            row_ptr,
            col_idx,
            values,
            bandwidth: None,
        })
    }

    pub fn scale(mut self, s: f64) -> Self {
        self.values.iter_mut().for_each(|v| *v *= s);
        self
    }

    /// `diag(d) * self`.
    pub fn scale_rows(mut self, d: &[f64]) -> Self {
        assert_eq!(d.len(), self.nrows);
        for (i, &di) in d.iter().enumerate() {
            let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
            self.values[a..b].iter_mut().for_each(|v| *v *= di);
        }
        self
    }

    /// `self + alpha * other`.
    pub fn add_scaled(&self, alpha: f64, other: &Self) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(MbsError::DimensionMismatch(format!(
                "cannot add {:?} and {:?}",
                self.shape(),
                other.shape()
            )));
        }
        let rows = (0..self.nrows)
            .map(|i| {
                let (ac, av) = self.row(i);
                let (bc, bv) = other.row(i);
                let mut out = Vec::with_capacity(ac.len() + bc.len());
                let (mut p, mut q) = (0, 0);
                while p < ac.len() || q < bc.len() {
                    if q == bc.len() || (p < ac.len() && ac[p] < bc[q]) {
                        out.push((ac[p], av[p]));
                        p += 1;
                    } else if p == ac.len() || bc[q] < ac[p] {
                        out.push((bc[q], alpha * bv[q]));
                        q += 1;
                    } else {
                        out.push((ac[p], av[p] + alpha * bv[q]));
                        p += 1;
                        q += 1;
                    }
                }
                out
            })
            .collect();
        Ok(Self::from_sorted_rows(self.ncols, rows))
    }

    /// Gram matrix `A^T A`.
    pub fn gram(&self) -> Self {
        self.transpose()
            .matmul(self)
            .expect("gram dimensions always agree")
    }

    /// Keeps only the rows listed in `rows`, in that order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let picked = rows
            .iter()
            .map(|&i| {
                let (c, v) = self.row(i);
                c.iter().copied().zip(v.iter().copied()).collect()
            })
            .collect();
        Self::from_sorted_rows(self.ncols, picked)
    }

    /// Row sums.
    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.nrows).map(|i| self.row(i).1.iter().sum()).collect()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.ncols]; self.nrows];
        for (i, j, v) in self.triplets() {
            out[i][j] = v;
        }
        out
    }
}
