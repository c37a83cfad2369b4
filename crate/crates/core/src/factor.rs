//! Cholesky factorizations of sparse symmetric positive definite matrices.
//!
//! Both variants store the lower factor row by row over a profile: row `i`
//! keeps columns `first[i]..=i`. Cholesky fill never leaves the profile, so
//! the factor needs no symbolic phase. A banded matrix is the special case
//! `first[i] = i - b`; Kronecker-built multivariate operators have a wide but
//! regular envelope.

use crate::error::{MbsError, Result};
use crate::sparse::SparseBandedMatrix;

/// Relative pivot threshold below which the matrix is declared singular.
const PIVOT_TOL: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FactorKind {
    /// Fixed half-bandwidth storage, `O(n b^2)` to factor and `O(n b)` to solve.
    Banded { half_bandwidth: usize },
    /// Variable-width envelope measured from the matrix.
    Envelope,
}

#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    n: usize,
    first: Vec<usize>,
    offsets: Vec<usize>,
    data: Vec<f64>,
    kind: FactorKind,
}

impl CholeskyFactor {
    /// Factors a symmetric matrix known to have half-bandwidth `half_bw`.
    pub fn banded(a: &SparseBandedMatrix, half_bw: usize) -> Result<Self> {
        check_square(a)?;
        let first = (0..a.nrows()).map(|i| i.saturating_sub(half_bw)).collect();
        Self::factor(
            a,
            first,
            FactorKind::Banded {
                half_bandwidth: half_bw,
            },
        )
    }

    /// Factors a symmetric matrix over its measured lower envelope.
    pub fn envelope(a: &SparseBandedMatrix) -> Result<Self> {
        check_square(a)?;
        let first = (0..a.nrows())
            .map(|i| {
                let (cols, _) = a.row(i);
                cols.first().map_or(i, |&j| j.min(i))
            })
            .collect();
        Self::factor(a, first, FactorKind::Envelope)
    }

    /// Picks the banded path when the matrix carries a band annotation,
    /// otherwise the envelope path.
    pub fn auto(a: &SparseBandedMatrix) -> Result<Self> {
        if a.bandwidth().is_some() {
            let (lo, up) = a.half_bandwidths();
            Self::banded(a, lo.max(up))
        } else {
            Self::envelope(a)
        }
    }

    pub fn kind(&self) -> FactorKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Number of stored factor entries.
    pub fn stored(&self) -> usize {
        self.data.len()
    }

    fn factor(a: &SparseBandedMatrix, first: Vec<usize>, kind: FactorKind) -> Result<Self> {
        let n = a.nrows();
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        for i in 0..n {
            offsets.push(offsets[i] + (i - first[i] + 1));
        }
        let mut data = vec![0.0; offsets[n]];
        for i in 0..n {
            let (cols, vals) = a.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                if j > i {
                    break;
                }
                if j < first[i] {
                    return Err(MbsError::InvalidArgument(format!(
                        "entry ({i}, {j}) lies outside the declared band"
                    )));
                }
                data[offsets[i] + j - first[i]] = v;
            }
        }
        for i in 0..n {
            let fi = first[i];
            let row_i = offsets[i];
            for j in fi..=i {
                let fj = first[j];
                let start = fi.max(fj);
                let row_j = offsets[j];
                let mut s = data[row_i + j - fi];
                for k in start..j {
                    s -= data[row_i + k - fi] * data[row_j + k - fj];
                }
                if j == i {
                    let diag = a.get(i, i).abs().max(f64::MIN_POSITIVE);
                    if s.is_nan() || s <= PIVOT_TOL * diag {
                        return Err(MbsError::FactorizationFailure { row: i, pivot: s });
                    }
                    data[row_i + i - fi] = s.sqrt();
                } else {
                    data[row_i + j - fi] = s / data[row_j + j - fj];
                }
            }
        }
        Ok(Self {
            n,
            first,
            offsets,
            data,
            kind,
        })
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        assert_eq!(b.len(), self.n, "rhs length");
        for i in 0..self.n {
            let fi = self.first[i];
            let row = &self.data[self.offsets[i]..self.offsets[i + 1]];
            let mut s = b[i];
            for (k, l) in (fi..i).zip(row) {
                s -= l * b[k];
            }
            b[i] = s / row[i - fi];
        }
        for i in (0..self.n).rev() {
            let fi = self.first[i];
            let row = &self.data[self.offsets[i]..self.offsets[i + 1]];
            let xi = b[i] / row[i - fi];
            b[i] = xi;
            for (k, l) in (fi..i).zip(row) {
                b[k] -= l * xi;
            }
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

fn check_square(a: &SparseBandedMatrix) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(MbsError::DimensionMismatch(format!(
            "Cholesky needs a square matrix, got {:?}",
            a.shape()
        )));
    }
    Ok(())
}
