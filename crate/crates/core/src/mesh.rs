//! Univariate meshes and tensor-product meshes.
//!
//! All indices are zero-based. A cell `j` is the closed interval
//! `[points[j], points[j + 1]]`; an observation sitting exactly on an
//! interior knot is assigned to the cell on its right.

use crate::error::{invalid, MbsError, Result};

/// Relative tolerance used to classify a mesh as regular.
pub const REGULARITY_TOL: f64 = 1e-12;

/// An ordered grid `d_1 < d_2 < ... < d_m` over a covariate domain.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    points: Vec<f64>,
    widths: Vec<f64>,
    is_regular: bool,
}

impl Mesh {
    /// `m` equally spaced points from `a` to `b` inclusive.
    pub fn regular(a: f64, b: f64, m: usize) -> Result<Self> {
        if !(a.is_finite() && b.is_finite()) || a >= b {
            return invalid(format!("regular mesh needs finite a < b, got a = {a}, b = {b}"));
        }
        if m < 2 {
            return invalid(format!("a mesh needs at least 2 points, got {m}"));
        }
        let step = (b - a) / (m - 1) as f64;
        let mut points: Vec<f64> = (0..m).map(|j| a + step * j as f64).collect();
        points[m - 1] = b;
        Self::from_sorted(points)
    }

    /// Builds a mesh from arbitrary points; they are sorted first and
    /// duplicates are rejected.
    pub fn from_points(points: &[f64]) -> Result<Self> {
        if points.len() < 2 {
            return invalid(format!("a mesh needs at least 2 points, got {}", points.len()));
        }
        if let Some(bad) = points.iter().find(|p| !p.is_finite()) {
            return invalid(format!("mesh point {bad} is not finite"));
        }
        let mut sorted = points.to_vec();
        sorted.sort_by(f64::total_cmp);
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(MbsError::DuplicatePoints(w[0]));
        }
        Self::from_sorted(sorted)
    }

    fn from_sorted(points: Vec<f64>) -> Result<Self> {
        let widths: Vec<f64> = points.windows(2).map(|w| w[1] - w[0]).collect();
        if let Some(j) = widths.iter().position(|&w| w <= 0.0) {
            return Err(MbsError::DuplicatePoints(points[j]));
        }
        let span = points[points.len() - 1] - points[0];
        let w0 = widths[0];
        let is_regular = widths
            .iter()
            .all(|w| (w - w0).abs() <= REGULARITY_TOL * span);
        Ok(Self {
            points,
            widths,
            is_regular,
        })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn widths(&self) -> &[f64] {
        &self.widths
    }

    pub fn is_regular(&self) -> bool {
        self.is_regular
    }

    /// Number of mesh points `m`.
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn lower(&self) -> f64 {
        self.points[0]
    }

    pub fn upper(&self) -> f64 {
        self.points[self.points.len() - 1]
    }

    /// Common bin width of a regular mesh, averaged to smooth out rounding.
    pub fn regular_width(&self) -> Option<f64> {
        self.is_regular
            .then(|| (self.upper() - self.lower()) / (self.len() - 1) as f64)
    }

    pub fn max_width(&self) -> f64 {
        self.widths.iter().copied().fold(0.0, f64::max)
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lower() && x <= self.upper()
    }

    /// Index `j` of the cell with `points[j] <= x <= points[j + 1]`.
    ///
    /// Interior knots belong to the cell on their right; the right endpoint
    /// belongs to the last cell.
    pub fn locate_cell(&self, x: f64) -> Result<usize> {
        if !self.contains(x) {
            return Err(MbsError::OutOfDomain {
                x,
                lo: self.lower(),
                hi: self.upper(),
            });
        }
        let at_or_below = self.points.partition_point(|&p| p <= x);
        Ok((at_or_below - 1).min(self.points.len() - 2))
    }
}

/// A tensor product of univariate meshes, one per covariate.
///
/// Mesh functions over a tensor mesh are stored in row-major order: the
/// last axis varies fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorMesh {
    axes: Vec<Mesh>,
    dims: Vec<usize>,
    size: usize,
}

impl TensorMesh {
    pub fn new(axes: Vec<Mesh>) -> Result<Self> {
        if axes.is_empty() {
            return invalid("a tensor mesh needs at least one axis");
        }
        let dims: Vec<usize> = axes.iter().map(Mesh::len).collect();
        let size = dims
            .iter()
            .try_fold(1usize, |acc, &m| acc.checked_mul(m))
            .ok_or_else(|| MbsError::InvalidArgument(format!("grid size {dims:?} overflows")))?;
        Ok(Self { axes, dims, size })
    }

    /// Regular `m_1 x ... x m_p` grid on the unit cube.
    pub fn unit_regular(dims: &[usize]) -> Result<Self> {
        let axes = dims
            .iter()
            .map(|&m| Mesh::regular(0.0, 1.0, m))
            .collect::<Result<Vec<_>>>()?;
        Self::new(axes)
    }

    pub fn axes(&self) -> &[Mesh] {
        &self.axes
    }

    pub fn axis(&self, j: usize) -> &Mesh {
        &self.axes[j]
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// Number of covariates `p`.
    pub fn ndim(&self) -> usize {
        self.axes.len()
    }

    /// Total number of grid points.
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn is_regular(&self) -> bool {
        self.axes.iter().all(Mesh::is_regular)
    }

    /// Row-major strides: `stride[p - 1] = 1`.
    pub fn strides(&self) -> Vec<usize> {
        row_major_strides(&self.dims)
    }

    /// Flat row-major index of a multi-index.
    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(self.strides()).map(|(i, s)| i * s).sum()
    }

    /// Multi-index of a flat row-major index.
    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dims.len()];
        for (j, &m) in self.dims.iter().enumerate().rev() {
            idx[j] = flat % m;
            flat /= m;
        }
        idx
    }

    /// Coordinates of the grid point at a flat row-major index.
    pub fn coordinates(&self, flat: usize) -> Vec<f64> {
        self.multi_index(flat)
            .iter()
            .zip(&self.axes)
            .map(|(&i, axis)| axis.points()[i])
            .collect()
    }

    /// Containing cell (lower-corner multi-index) of a point.
    pub fn locate_cell(&self, x: &[f64]) -> Result<Vec<usize>> {
        if x.len() != self.ndim() {
            return Err(MbsError::DimensionMismatch(format!(
                "point has {} coordinates, mesh has {} axes",
                x.len(),
                self.ndim()
            )));
        }
        x.iter()
            .zip(&self.axes)
            .map(|(&xj, axis)| axis.locate_cell(xj))
            .collect()
    }
}

pub(crate) fn row_major_strides(dims: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; dims.len()];
    for j in (0..dims.len().saturating_sub(1)).rev() {
        strides[j] = strides[j + 1] * dims[j + 1];
    }
    strides
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn regular_mesh_examples() {
        let m = Mesh::regular(0.0, 1.0, 2).unwrap();
        assert_eq!(m.points(), &[0.0, 1.0]);
        assert_eq!(m.widths(), &[1.0]);

        let m = Mesh::regular(0.0, 1.0, 5).unwrap();
        assert_eq!(m.points(), &[0.0, 0.25, 0.5, 0.75, 1.0]);

        let m = Mesh::regular(-1.0, 1.0, 3).unwrap();
        assert_eq!(m.widths(), &[1.0, 1.0]);
        assert!(m.is_regular());
    }

    #[test]
    fn regular_mesh_rejects_bad_arguments() {
        assert!(Mesh::regular(1.0, 1.0, 3).is_err());
        assert!(Mesh::regular(2.0, 1.0, 3).is_err());
        assert!(Mesh::regular(0.0, 1.0, 1).is_err());
    }

    #[test]
    fn mesh_from_points_examples() {
        let m = Mesh::from_points(&[0.0, 1.0, 3.0]).unwrap();
        assert_eq!(m.widths(), &[1.0, 2.0]);
        assert!(!m.is_regular());

        assert!(Mesh::from_points(&[0.0, 0.5, 1.0]).unwrap().is_regular());
        assert_eq!(
            Mesh::from_points(&[0.0, 0.0]),
            Err(MbsError::DuplicatePoints(0.0))
        );
        assert!(Mesh::from_points(&[1.0]).is_err());
        // unsorted input is accepted
        let m = Mesh::from_points(&[1.0, 0.0, 0.5]).unwrap();
        assert_eq!(m.points(), &[0.0, 0.5, 1.0]);
    }

    #[test]
    fn locate_cell_examples() {
        let m = Mesh::from_points(&[0.0, 0.5, 1.0]).unwrap();
        // zero-based: cell 0 is [0, 0.5]
        assert_eq!(m.locate_cell(0.25).unwrap(), 0);
        assert_eq!(m.locate_cell(0.5).unwrap(), 1);
        assert_eq!(m.locate_cell(1.0).unwrap(), 1);
        assert_eq!(m.locate_cell(0.0).unwrap(), 0);
        assert!(matches!(
            m.locate_cell(1.5),
            Err(MbsError::OutOfDomain { .. })
        ));
        assert!(m.locate_cell(-0.1).is_err());
    }

    #[test]
    fn tensor_indexing_is_row_major() {
        let t = TensorMesh::unit_regular(&[2, 3, 4]).unwrap();
        assert_eq!(t.strides(), vec![12, 4, 1]);
        assert_eq!(t.size(), 24);
        for flat in 0..t.size() {
            assert_eq!(t.flat_index(&t.multi_index(flat)), flat);
        }
        assert_eq!(t.coordinates(5), vec![0.0, 0.5, 1.0 / 3.0]);
    }

    proptest! {
        #[test]
        fn widths_sum_to_span(mut pts in prop::collection::vec(-100.0f64..100.0, 2..40)) {
            pts.sort_by(f64::total_cmp);
            pts.dedup();
            prop_assume!(pts.len() >= 2);
            let mesh = Mesh::from_points(&pts).unwrap();
            let span = mesh.upper() - mesh.lower();
            let total: f64 = mesh.widths().iter().sum();
            prop_assert!((total - span).abs() <= 1e-12 * span.max(1.0) * pts.len() as f64);
        }

        #[test]
        fn locate_cell_is_consistent_and_monotone(
            mut pts in prop::collection::vec(0.0f64..10.0, 2..30),
            xs in prop::collection::vec(0.0f64..1.0, 1..30),
        ) {
            pts.sort_by(f64::total_cmp);
            pts.dedup();
            prop_assume!(pts.len() >= 2);
            let mesh = Mesh::from_points(&pts).unwrap();
            let mut scaled: Vec<f64> = xs
                .iter()
                .map(|t| mesh.lower() + t * (mesh.upper() - mesh.lower()))
                .collect();
            scaled.sort_by(f64::total_cmp);
            let mut last = 0;
            for x in scaled {
                let j = mesh.locate_cell(x).unwrap();
                prop_assert!(mesh.points()[j] <= x && x <= mesh.points()[j + 1]);
                prop_assert!(j >= last);
                last = j;
            }
        }

        #[test]
        fn regular_mesh_round_trips_through_points(a in -50.0f64..50.0, len in 0.1f64..20.0, m in 2usize..200) {
            let mesh = Mesh::regular(a, a + len, m).unwrap();
            let again = Mesh::from_points(mesh.points()).unwrap();
            prop_assert_eq!(mesh.widths(), again.widths());
            prop_assert!(mesh.is_regular());
        }
    }
}
