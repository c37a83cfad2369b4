//! Interpolation matrices mapping mesh values to values at observations.
//!
//! Every scheme here solves a small monomial (or truncated-power) system
//! `Ψ α = θ` and evaluates `ψ̃ᵀ Ψ⁻¹ θ` at the observation, so each row of the
//! interpolation matrix is `Ψ⁻ᵀ ψ̃`.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, MbsError, Result};
use crate::mesh::{Mesh, TensorMesh};
use crate::sparse::SparseBandedMatrix;

/// Largest acceptable condition estimate for a spline design.
pub const SPLINE_CONDITION_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    MovingLocalPolynomial,
    NaturalSpline,
}

/// An interpolation matrix together with how it was built.
#[derive(Debug, Clone)]
pub struct InterpolationPlan {
    pub order: usize,
    pub scheme: Scheme,
    /// `n x M` matrix; row `i` holds the weights for observation `i`.
    pub matrix: SparseBandedMatrix,
    /// Mesh indices (flat, row-major) each observation draws on.
    pub neighborhoods: Vec<Vec<usize>>,
}

impl InterpolationPlan {
    /// Interpolated values `O f`.
    pub fn apply(&self, mesh_values: &[f64]) -> Vec<f64> {
        self.matrix.mul_vec(mesh_values)
    }
}

/// Weights `Ψ⁻ᵀ ψ̃` of a square local system, or `None` if singular.
fn local_weights(design: DMatrix<f64>, at: DVector<f64>) -> Option<Vec<f64>> {
    let w = design.transpose().lu().solve(&at)?;
    w.iter().all(|v| v.is_finite()).then(|| w.iter().copied().collect())
}

/// First neighborhood index for `x` in `cell`. Constant interpolation at
/// the right end of the mesh uses the last point itself.
fn anchor(mesh: &Mesh, x: f64, cell: usize, k: usize) -> usize {
    let m = mesh.len();
    if k == 0 && x == mesh.upper() {
        m - 1
    } else {
        cell.min(m - 1 - k)
    }
}

/// Moving local polynomial of degree `k` on a univariate mesh.
///
/// An observation in cell `j` uses knots `j, ..., j + k`, shifted left near
/// the right boundary, so every row has `k + 1` consecutive nonzeros.
pub fn mlp_matrix(xs: &[f64], mesh: &Mesh, k: usize) -> Result<InterpolationPlan> {
    let m = mesh.len();
    if m < k + 1 {
        return invalid(format!("degree {k} interpolation needs {} mesh points, got {m}", k + 1));
    }
    let d = mesh.points();
    let mut rows = Vec::with_capacity(xs.len());
    let mut neighborhoods = Vec::with_capacity(xs.len());
    for (i, &x) in xs.iter().enumerate() {
        let start = anchor(mesh, x, mesh.locate_cell(x)?, k);
        let origin = d[start];
        let h = if k == 0 { 1.0 } else { d[start + k] - origin };
        let local = |v: f64| (v - origin) / h;
        let design = DMatrix::from_fn(k + 1, k + 1, |a, e| local(d[start + a]).powi(e as i32));
        let at = DVector::from_fn(k + 1, |e, _| local(x).powi(e as i32));
        let w = local_weights(design, at).ok_or(MbsError::SingularNeighborhood(i))?;
        rows.push(w.into_iter().enumerate().map(|(a, v)| (start + a, v)).collect());
        neighborhoods.push((start..=start + k).collect());
    }
    Ok(InterpolationPlan {
        order: k,
        scheme: Scheme::MovingLocalPolynomial,
        matrix: SparseBandedMatrix::from_sorted_rows(m, rows).with_band(),
        neighborhoods,
    })
}

/// All exponent vectors of length `p` with total degree `<= k`, in
/// lexicographic order. There are `C(k + p, p)` of them.
pub fn simplex_lattice(p: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(p: usize, budget: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == p {
            out.push(prefix.clone());
            return;
        }
        for t in 0..=budget {
            prefix.push(t);
            rec(p, budget - t, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(p, k, &mut Vec::with_capacity(p), &mut out);
    out
}

/// Multivariate moving local polynomial of total degree `k`.
///
/// The neighborhood of an observation is the lattice simplex
/// `{corner + t : t >= 0, Σ t_j <= k}` anchored at the lower corner of its
/// cell, with the corner pulled inward on axes where it would run past the
/// upper boundary. These points are unisolvent for total degree `k`.
pub fn mlp_matrix_multivariate(
    points: &[Vec<f64>],
    tmesh: &TensorMesh,
    k: usize,
) -> Result<InterpolationPlan> {
    let p = tmesh.ndim();
    if let Some((j, &mj)) = tmesh.dims().iter().enumerate().find(|(_, &mj)| mj < k + 1) {
        return invalid(format!(
            "axis {j} has {mj} points, degree {k} interpolation needs {}",
            k + 1
        ));
    }
    let lattice = simplex_lattice(p, k);
    let size = lattice.len();
    let strides = tmesh.strides();
    let mut rows = Vec::with_capacity(points.len());
    let mut neighborhoods = Vec::with_capacity(points.len());
    for (i, x) in points.iter().enumerate() {
        let cell = tmesh.locate_cell(x)?;
        let base: Vec<usize> = (0..p).map(|j| anchor(tmesh.axis(j), x[j], cell[j], k)).collect();
        let scaled = |j: usize, v: f64| {
            let axis = tmesh.axis(j).points();
            let b = base[j].min(axis.len() - 2);
            (v - axis[base[j]]) / (axis[b + 1] - axis[b])
        };
        let nodes: Vec<Vec<f64>> = lattice
            .iter()
            .map(|t| {
                (0..p)
                    .map(|j| scaled(j, tmesh.axis(j).points()[base[j] + t[j]]))
                    .collect()
            })
            .collect();
        let xs: Vec<f64> = (0..p).map(|j| scaled(j, x[j])).collect();
        let monomial = |u: &[f64], e: &[usize]| -> f64 {
            u.iter().zip(e).map(|(v, &ej)| v.powi(ej as i32)).product()
        };
        let design = DMatrix::from_fn(size, size, |a, b| monomial(&nodes[a], &lattice[b]));
        let at = DVector::from_fn(size, |b, _| monomial(&xs, &lattice[b]));
        let w = local_weights(design, at).ok_or(MbsError::SingularNeighborhood(i))?;
        let mut row: Vec<(usize, f64)> = lattice
            .iter()
            .zip(w)
            .map(|(t, v)| {
                let flat = (0..p).map(|j| (base[j] + t[j]) * strides[j]).sum();
                (flat, v)
            })
            .collect();
        row.sort_by_key(|&(c, _)| c);
        neighborhoods.push(row.iter().map(|&(c, _)| c).collect());
        rows.push(row);
    }
    Ok(InterpolationPlan {
        order: k,
        scheme: Scheme::MovingLocalPolynomial,
        matrix: SparseBandedMatrix::from_sorted_rows(tmesh.size(), rows),
        neighborhoods,
    })
}

/// Moving local polynomial on a mesh of any dimension; one-dimensional
/// meshes get the banded univariate construction.
pub fn mlp_for_mesh(points: &[Vec<f64>], tmesh: &TensorMesh, k: usize) -> Result<InterpolationPlan> {
    if tmesh.ndim() == 1 {
        let xs: Vec<f64> = points
            .iter()
            .map(|x| {
                x.first().copied().ok_or_else(|| {
                    MbsError::DimensionMismatch("observation has no coordinates".into())
                })
            })
            .collect::<Result<_>>()?;
        mlp_matrix(&xs, tmesh.axis(0), k)
    } else {
        mlp_matrix_multivariate(points, tmesh, k)
    }
}

/// `(v)^k_+` with `0^0 = 1`.
fn truncated_power(v: f64, k: usize) -> f64 {
    if v < 0.0 {
        0.0
    } else if k == 0 {
        1.0
    } else {
        v.powi(k as i32)
    }
}

/// Interior knots of the degree-`k` natural spline: `m - k - 1` consecutive
/// mesh points starting at zero-based index `⌊k/2⌋ + 1`.
fn spline_knots(mesh: &Mesh, k: usize) -> &[f64] {
    let start = k / 2 + 1;
    &mesh.points()[start..start + mesh.len() - k - 1]
}

/// Global interpolation through every mesh value with the truncated-power
/// basis `1, x, ..., x^k, (x - τ)^k_+`. Returns a dense `n x m` matrix.
pub fn spline_matrix(xs: &[f64], mesh: &Mesh, k: usize) -> Result<InterpolationPlan> {
    let m = mesh.len();
    if m <= k + 1 {
        return invalid(format!("degree {k} splines need more than {} mesh points, got {m}", k + 1));
    }
    if let Some(&x) = xs.iter().find(|&&x| !mesh.contains(x)) {
        return Err(MbsError::OutOfDomain {
            x,
            lo: mesh.lower(),
            hi: mesh.upper(),
        });
    }
    let (a, span) = (mesh.lower(), mesh.upper() - mesh.lower());
    let unit = |v: f64| (v - a) / span;
    let knots: Vec<f64> = spline_knots(mesh, k).iter().map(|&t| unit(t)).collect();
    let basis = |v: f64| -> Vec<f64> {
        (0..=k)
            .map(|e| v.powi(e as i32))
            .chain(knots.iter().map(|&t| truncated_power(v - t, k)))
            .collect()
    };
    let design = DMatrix::from_fn(m, m, |i, j| basis(unit(mesh.points()[i]))[j]);
    let sv = design.singular_values();
    let cond = sv.max() / sv.min();
    if cond.is_nan() || cond > SPLINE_CONDITION_LIMIT {
        return Err(MbsError::SingularDesign(cond));
    }
    let lu = design.transpose().lu();
    let mut rows = Vec::with_capacity(xs.len());
    for &x in xs {
        let w = lu
            .solve(&DVector::from_vec(basis(unit(x))))
            .ok_or(MbsError::SingularDesign(cond))?;
        rows.push(w.iter().copied().enumerate().collect());
    }
    Ok(InterpolationPlan {
        order: k,
        scheme: Scheme::NaturalSpline,
        matrix: SparseBandedMatrix::from_sorted_rows(m, rows),
        neighborhoods: vec![(0..m).collect(); xs.len()],
    })
}

/// Knots `t_q = d_{1 + qK}` of the rising polynomial basis, `q = 1..=Q`.
fn rising_knots(mesh: &Mesh, order: usize) -> Result<Vec<f64>> {
    let m = mesh.len();
    if order == 0 || !(m - 1).is_multiple_of(order) {
        return invalid(format!(
            "rising polynomial basis of order {order} needs m = 1 + QK points, got {m}"
        ));
    }
    let q = (m - 1) / order;
    Ok((1..=q).map(|i| mesh.points()[i * order]).collect())
}

/// Rising polynomial basis `1, x, ..., x^K` and
/// `(x - t_{q+1})^k_+ - (x - t_q)^k_+` for `q = 1..Q-1`, `k = 1..K`,
/// evaluated at `x`.
pub fn rising_polynomial_basis(mesh: &Mesh, order: usize, x: f64) -> Result<Vec<f64>> {
    let knots = rising_knots(mesh, order)?;
    let mut out: Vec<f64> = (0..=order).map(|e| x.powi(e as i32)).collect();
    for pair in knots.windows(2) {
        for e in 1..=order {
            out.push(truncated_power(x - pair[1], e) - truncated_power(x - pair[0], e));
        }
    }
    Ok(out)
}

/// The `m x m` design `Ψ_D` of the rising polynomial basis on the mesh.
pub fn rising_polynomial_design(mesh: &Mesh, order: usize) -> Result<DMatrix<f64>> {
    let rows = mesh
        .points()
        .iter()
        .map(|&d| rising_polynomial_basis(mesh, order, d))
        .collect::<Result<Vec<_>>>()?;
    let m = mesh.len();
    debug_assert!(rows.iter().all(|r| r.len() == m));
    Ok(DMatrix::from_fn(m, m, |i, j| rows[i][j]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    /// Lagrange form of the same local polynomial, independent of the
    /// monomial solve.
    fn lagrange_weights(nodes: &[f64], x: f64) -> Vec<f64> {
        (0..nodes.len())
            .map(|a| {
                nodes
                    .iter()
                    .enumerate()
                    .filter(|&(b, _)| b != a)
                    .map(|(_, &nb)| (x - nb) / (nodes[a] - nb))
                    .product()
            })
            .collect()
    }

    fn half_mesh() -> Mesh {
        Mesh::regular(0.0, 1.0, 3).unwrap()
    }

    #[test]
    fn mlp_examples() {
        let plan = mlp_matrix(&[0.3], &half_mesh(), 0).unwrap();
        assert_eq!(plan.matrix.to_dense()[0], vec![1.0, 0.0, 0.0]);

        let plan = mlp_matrix(&[0.25], &half_mesh(), 1).unwrap();
        let row = plan.matrix.to_dense()[0].clone();
        assert_abs_diff_eq!(row[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(row[1], 0.5, epsilon = 1e-15);
        assert_eq!(row[2], 0.0);

        let plan = mlp_matrix(&[0.3], &half_mesh(), 2).unwrap();
        assert_abs_diff_eq!(plan.apply(&[0.0, 0.25, 1.0])[0], 0.09, epsilon = 1e-14);
    }

    #[test]
    fn constant_interpolation_at_mesh_points_is_the_identity() {
        let mesh = Mesh::from_points(&[0.0, 0.2, 0.7, 1.0]).unwrap();
        let plan = mlp_matrix(mesh.points(), &mesh, 0).unwrap();
        for (i, row) in plan.matrix.to_dense().iter().enumerate() {
            assert_eq!(row.iter().sum::<f64>(), 1.0);
            assert_eq!(row[i], 1.0);
        }
        let grid = TensorMesh::unit_regular(&[3, 4]).unwrap();
        let pts: Vec<Vec<f64>> = (0..grid.size()).map(|f| grid.coordinates(f)).collect();
        let plan = mlp_matrix_multivariate(&pts, &grid, 0).unwrap();
        for (i, row) in plan.matrix.to_dense().iter().enumerate() {
            assert_eq!(row[i], 1.0);
        }
    }

    #[test]
    fn mlp_matches_lagrange_weights() {
        let mesh = Mesh::from_points(&[0.0, 0.1, 0.35, 0.4, 0.8, 1.3, 2.0]).unwrap();
        let xs = [0.0, 0.05, 0.35, 0.77, 1.9, 2.0];
        for k in 0..4 {
            let plan = mlp_matrix(&xs, &mesh, k).unwrap();
            for (i, &x) in xs.iter().enumerate() {
                let nb = &plan.neighborhoods[i];
                let nodes: Vec<f64> = nb.iter().map(|&j| mesh.points()[j]).collect();
                let expect = lagrange_weights(&nodes, x);
                let (cols, vals) = plan.matrix.row(i);
                assert_eq!(cols, nb.as_slice());
                for (v, e) in vals.iter().zip(expect) {
                    assert_abs_diff_eq!(*v, e, epsilon = 1e-12);
                }
            }
            assert!(plan.matrix.bandwidth().unwrap() <= k + 2);
        }
    }

    #[test]
    fn mlp_errors() {
        assert!(matches!(
            mlp_matrix(&[1.5], &half_mesh(), 1),
            Err(MbsError::OutOfDomain { .. })
        ));
        assert!(mlp_matrix(&[0.5], &half_mesh(), 3).is_err());
    }

    #[test]
    fn simplex_lattice_sizes() {
        assert_eq!(simplex_lattice(2, 0), vec![vec![0, 0]]);
        assert_eq!(simplex_lattice(2, 1), vec![vec![0, 0], vec![0, 1], vec![1, 0]]);
        assert_eq!(simplex_lattice(2, 2).len(), 6);
        assert_eq!(simplex_lattice(3, 2).len(), 10);
    }

    #[test]
    fn multivariate_examples() {
        let tmesh = TensorMesh::unit_regular(&[4, 5]).unwrap();
        let plan = mlp_matrix_multivariate(&[vec![0.4, 0.6]], &tmesh, 0).unwrap();
        // containing cell lower corner (1, 2) -> flat 1 * 5 + 2
        assert_eq!(plan.matrix.row(0), (&[7usize][..], &[1.0][..]));

        // unit cell corners (0,0), (1,0), (0,1) and x = (0.25, 0.25)
        let unit = TensorMesh::unit_regular(&[2, 2]).unwrap();
        let plan = mlp_matrix_multivariate(&[vec![0.25, 0.25]], &unit, 1).unwrap();
        let (cols, vals) = plan.matrix.row(0);
        // flat: (0,0) -> 0, (0,1) -> 1, (1,0) -> 2
        assert_eq!(cols, &[0, 1, 2]);
        assert_abs_diff_eq!(vals[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(vals[1], 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(vals[2], 0.25, epsilon = 1e-15);

        let plan = mlp_matrix_multivariate(&[vec![0.9, 0.1], vec![0.3, 0.99]], &tmesh, 1).unwrap();
        assert!((0..2).all(|i| plan.matrix.row(i).0.len() == 3));
        assert!(mlp_matrix_multivariate(&[vec![0.5]], &tmesh, 1).is_err());
        assert!(mlp_matrix_multivariate(&[vec![0.5, 1.1]], &tmesh, 1).is_err());
    }

    #[test]
    fn spline_examples() {
        let mesh = Mesh::regular(0.0, 1.0, 7).unwrap();
        for k in 0..=3 {
            let plan = spline_matrix(mesh.points(), &mesh, k).unwrap();
            for i in 0..7 {
                for j in 0..7 {
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert_abs_diff_eq!(plan.matrix.get(i, j), expect, epsilon = 1e-9);
                }
            }
            let xs: Vec<f64> = (0..23).map(|i| i as f64 / 22.0).collect();
            let vals = spline_matrix(&xs, &mesh, k).unwrap().apply(&[2.5; 7]);
            assert!(vals.iter().all(|v| (v - 2.5).abs() < 1e-9));
        }
        let xs: Vec<f64> = (0..41).map(|i| i as f64 / 40.0).collect();
        let spline = spline_matrix(&xs, &mesh, 1).unwrap();
        let mlp = mlp_matrix(&xs, &mesh, 1).unwrap();
        for i in 0..xs.len() {
            for j in 0..7 {
                assert_abs_diff_eq!(spline.matrix.get(i, j), mlp.matrix.get(i, j), epsilon = 1e-10);
            }
        }
        assert!(spline_matrix(&[0.5], &Mesh::regular(0.0, 1.0, 3).unwrap(), 2).is_err());
    }

    #[test]
    fn rising_basis_examples() {
        let psi = rising_polynomial_design(&half_mesh(), 1).unwrap();
        assert_eq!(psi.column(0).as_slice(), &[1.0, 1.0, 1.0]);
        assert_eq!(psi.column(1).as_slice(), &[0.0, 0.5, 1.0]);
        let five = Mesh::regular(0.0, 1.0, 5).unwrap();
        assert_eq!(rising_polynomial_design(&five, 1).unwrap().rank(1e-10), 5);
        assert!(rising_polynomial_design(&Mesh::regular(0.0, 1.0, 4).unwrap(), 2).is_err());
    }

    proptest! {
        #[test]
        fn rows_sum_to_one(xs in prop::collection::vec(0.0f64..=1.0, 1..30), k in 0usize..4, m in 5usize..20) {
            let mesh = Mesh::regular(0.0, 1.0, m).unwrap();
            let plan = mlp_matrix(&xs, &mesh, k).unwrap();
            for s in plan.matrix.row_sums() {
                prop_assert!((s - 1.0).abs() <= 1e-9);
            }
            prop_assert!(plan.matrix.triplets().count() == xs.len() * (k + 1));
        }

        #[test]
        fn multivariate_rows_sum_to_one(
            pts in prop::collection::vec((0.0f64..=1.0, 0.0f64..=1.0, 0.0f64..=1.0), 1..20),
            k in 0usize..3,
        ) {
            let tmesh = TensorMesh::unit_regular(&[4, 5, 3]).unwrap();
            let points: Vec<Vec<f64>> = pts.iter().map(|&(a, b, c)| vec![a, b, c]).collect();
            let plan = mlp_matrix_multivariate(&points, &tmesh, k).unwrap();
            let l = simplex_lattice(3, k).len();
            for (i, s) in plan.matrix.row_sums().into_iter().enumerate() {
                prop_assert!((s - 1.0).abs() <= 1e-9);
                prop_assert_eq!(plan.matrix.row(i).0.len(), l);
            }
        }

        #[test]
        fn interpolation_is_linear(
            f in prop::collection::vec(-10.0f64..10.0, 9),
            g in prop::collection::vec(-10.0f64..10.0, 9),
            a in -3.0f64..3.0,
            b in -3.0f64..3.0,
            xs in prop::collection::vec(0.0f64..=1.0, 1..10),
        ) {
            let mesh = Mesh::regular(0.0, 1.0, 9).unwrap();
            let plan = mlp_matrix(&xs, &mesh, 2).unwrap();
            let combo: Vec<f64> = f.iter().zip(&g).map(|(u, v)| a * u + b * v).collect();
            let lhs = plan.apply(&combo);
            let (pf, pg) = (plan.apply(&f), plan.apply(&g));
            for i in 0..xs.len() {
                prop_assert!((lhs[i] - (a * pf[i] + b * pg[i])).abs() <= 1e-10);
            }
        }
    }
}
