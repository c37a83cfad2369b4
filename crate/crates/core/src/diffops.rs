//! Difference operators on meshes.
//!
//! The univariate penalty operator is the normalized difference matrix
//! built by alternating first differences with divisions by differences of
//! averaged mesh points. The multivariate operator stacks, for each
//! multi-index in a [`PenaltySpec`], a Kronecker product of per-axis scaled
//! difference matrices acting on the row-major vectorization of the mesh
//! function.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, MbsError, Result};
use crate::mesh::{Mesh, TensorMesh};
use crate::sparse::SparseBandedMatrix;

/// Exponent `ℓ` of the penalty norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NormOrder {
    Finite(f64),
    #[serde(with = "infinity_literal")]
    Infinity,
}

mod infinity_literal {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str("inf")
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<(), D::Error> {
        let s = String::deserialize(d)?;
        match s.as_str() {
            "inf" | "infinity" | "Infinity" => Ok(()),
            other => Err(D::Error::custom(format!("unknown norm order {other:?}"))),
        }
    }
}

impl NormOrder {
    pub const ONE: NormOrder = NormOrder::Finite(1.0);

    pub fn is_one(&self) -> bool {
        matches!(self, NormOrder::Finite(l) if *l == 1.0)
    }

    /// The Riemann weight exponent `1/ℓ` (zero for `ℓ = ∞`).
    pub fn inverse(&self) -> f64 {
        match self {
            NormOrder::Finite(l) => 1.0 / l,
            NormOrder::Infinity => 0.0,
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        match self {
            NormOrder::Finite(l) if !(l.is_finite() && *l >= 1.0) => {
                invalid(format!("norm order must be at least 1, got {l}"))
            }
            _ => Ok(()),
        }
    }

    /// `Σ|v|^ℓ`, or `max|v|` for `ℓ = ∞`.
    pub fn power_sum(&self, v: impl IntoIterator<Item = f64>) -> f64 {
        match self {
            NormOrder::Finite(l) if *l == 1.0 => v.into_iter().map(f64::abs).sum(),
            NormOrder::Finite(l) => v.into_iter().map(|x| x.abs().powf(*l)).sum(),
            NormOrder::Infinity => v.into_iter().map(f64::abs).fold(0.0, f64::max),
        }
    }
}

impl From<f64> for NormOrder {
    fn from(l: f64) -> Self {
        if l.is_infinite() {
            NormOrder::Infinity
        } else {
            NormOrder::Finite(l)
        }
    }
}

/// A collection of difference multi-indices and a norm order.
///
/// Each multi-index counts the differences taken along each axis. A
/// univariate smoothness order `r` corresponds to the single multi-index
/// `[r + 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltySpec {
    orders: Vec<Vec<usize>>,
    ell: NormOrder,
}

impl PenaltySpec {
    pub fn new(orders: Vec<Vec<usize>>, ell: NormOrder) -> Result<Self> {
        ell.validate()?;
        let Some(first) = orders.first() else {
            return invalid("a penalty needs at least one difference order");
        };
        let p = first.len();
        if p == 0 {
            return invalid("difference multi-indices must be non-empty");
        }
        if orders.iter().any(|r| r.len() != p) {
            return invalid("all difference multi-indices must have the same length");
        }
        if p == 1 && (orders.len() != 1 || orders[0][0] == 0) {
            return invalid("a univariate penalty takes exactly one difference order of at least 1");
        }
        Ok(Self { orders, ell })
    }

    /// Penalty on the `(r + 1)`-th derivative of a univariate function.
    pub fn univariate(r: usize, ell: NormOrder) -> Result<Self> {
        Self::new(vec![vec![r + 1]], ell)
    }

    /// Axis-wise and mixed differences of order `r + 1` in two dimensions;
    /// `r = 0` is the bivariate fused lasso.
    pub fn bivariate_isotropic(r: usize, ell: NormOrder) -> Result<Self> {
        let o = r + 1;
        Self::new(vec![vec![o, o], vec![o, 0], vec![0, o]], ell)
    }

    pub fn orders(&self) -> &[Vec<usize>] {
        &self.orders
    }

    pub fn ell(&self) -> NormOrder {
        self.ell
    }

    /// Number of covariates `p`.
    pub fn dim(&self) -> usize {
        self.orders[0].len()
    }

    /// Largest isotropic order `(s, ..., s)` in the collection, 0 if none.
    pub fn max_isotropic_order(&self) -> usize {
        self.orders
            .iter()
            .filter(|r| r.iter().all(|&x| x == r[0]))
            .map(|r| r[0])
            .max()
            .unwrap_or(0)
    }

    /// Highest interpolation order allowed with this penalty: `k <= r` in one
    /// dimension, `k <= S'` (largest isotropic order) otherwise.
    pub fn max_interpolation_order(&self) -> usize {
        if self.dim() == 1 {
            self.orders[0][0] - 1
        } else {
            self.max_isotropic_order()
        }
    }

    /// Largest order requested along each axis.
    pub fn max_orders(&self) -> Vec<usize> {
        (0..self.dim())
            .map(|j| self.orders.iter().map(|r| r[j]).max().unwrap_or(0))
            .collect()
    }
}

/// Binomial coefficient as a float.
pub(crate) fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// The `(n - r) x n` matrix of unnormalized `r`-th differences.
pub fn difference_matrix(n: usize, r: usize) -> Result<SparseBandedMatrix> {
    if r == 0 {
        return invalid("difference order must be at least 1");
    }
    if n <= r {
        return invalid(format!("{r}-th differences need more than {r} points, got {n}"));
    }
    let coefs: Vec<f64> = (0..=r)
        .map(|t| {
            let sign = if (r - t).is_multiple_of(2) { 1.0 } else { -1.0 };
            sign * binomial(r, t).round()
        })
        .collect();
    let rows = (0..n - r)
        .map(|i| coefs.iter().enumerate().map(|(t, &c)| (i + t, c)).collect())
        .collect();
    Ok(SparseBandedMatrix::from_sorted_rows(n, rows).with_band())
}

/// The `(n - k) x n` moving-average matrix over windows of `k + 1` points.
pub fn averaging_matrix(n: usize, k: usize) -> Result<SparseBandedMatrix> {
    if n <= k {
        return invalid(format!("averages over {} points need more than {k} points, got {n}", k + 1));
    }
    let w = 1.0 / (k + 1) as f64;
    let rows = (0..n - k)
        .map(|i| (i..=i + k).map(|j| (j, w)).collect())
        .collect();
    Ok(SparseBandedMatrix::from_sorted_rows(n, rows).with_band())
}

/// Normalized `(r + 1)`-th difference operator over an arbitrary mesh.
///
/// Returns the `(m - r - 1) x m` matrix `N` with `‖N f‖_ℓ^ℓ` equal to the
/// Riemann approximation of `∫|f^(r+1)|^ℓ`. Level `t` takes first
/// differences and divides by the differences of `(t + 1)`-point mesh
/// averages; the last level's divisors, raised to `1/ℓ`, are the Riemann
/// weights. On a regular mesh this is `δ^(1/ℓ - r - 1)` times the plain
/// `(r + 1)`-th difference matrix.
pub fn normalized_difference_matrix(
    mesh: &Mesh,
    r: usize,
    ell: NormOrder,
) -> Result<SparseBandedMatrix> {
    ell.validate()?;
    let m = mesh.len();
    if m < r + 2 {
        return invalid(format!(
            "order {} differences need at least {} mesh points, got {m}",
            r + 1,
            r + 2
        ));
    }
    let points = mesh.points();
    let mut op = SparseBandedMatrix::identity(m);
    let mut normalizer = Vec::new();
    for t in 0..=r {
        let diff = difference_matrix(m - t, 1)?;
        let averages = averaging_matrix(m, t)?.mul_vec(points);
        normalizer = diff.mul_vec(&averages);
        if let Some(i) = normalizer.iter().position(|&w| w == 0.0) {
            return Err(MbsError::SingularNormalizer(i));
        }
        let inv: Vec<f64> = normalizer.iter().map(|w| 1.0 / w).collect();
        op = diff.scale_rows(&inv).matmul(&op)?;
    }
    let weights: Vec<f64> = normalizer.iter().map(|w| w.powf(ell.inverse())).collect();
    Ok(op.scale_rows(&weights).with_band())
}

/// Stacked operator `𝒟` with `‖𝒟 vec(f)‖_ℓ^ℓ` equal to the multivariate
/// Riemann penalty for a regular tensor mesh.
pub fn multivariate_penalty_operator(
    tmesh: &TensorMesh,
    spec: &PenaltySpec,
) -> Result<SparseBandedMatrix> {
    let p = tmesh.ndim();
    if spec.dim() != p {
        return Err(MbsError::DimensionMismatch(format!(
            "penalty has {} axes, mesh has {p}",
            spec.dim()
        )));
    }
    let widths = regular_widths(tmesh)?;
    let weight = widths.iter().product::<f64>().powf(spec.ell().inverse());
    let blocks = spec
        .orders()
        .iter()
        .map(|orders| {
            let mut op: Option<SparseBandedMatrix> = None;
            for (j, (&rj, &mj)) in orders.iter().zip(tmesh.dims()).enumerate() {
                if mj <= rj {
                    return invalid(format!(
                        "axis {j} has {mj} points, too few for order {rj} differences"
                    ));
                }
                let factor = if rj == 0 {
                    SparseBandedMatrix::identity(mj)
                } else {
                    difference_matrix(mj, rj)?.scale(widths[j].powi(-(rj as i32)))
                };
                op = Some(match op {
                    None => factor,
                    Some(acc) => acc.kron(&factor),
                });
            }
            Ok(op.expect("at least one axis").scale(weight))
        })
        .collect::<Result<Vec<_>>>()?;
    let stacked = SparseBandedMatrix::vstack(&blocks)?;
    Ok(if p == 1 { stacked.with_band() } else { stacked })
}

/// The operator used by the solver: the normalized difference matrix in one
/// dimension (irregular meshes allowed), the stacked Kronecker operator
/// otherwise.
pub fn penalty_operator(tmesh: &TensorMesh, spec: &PenaltySpec) -> Result<SparseBandedMatrix> {
    if tmesh.ndim() == 1 && spec.dim() == 1 {
        normalized_difference_matrix(tmesh.axis(0), spec.orders()[0][0] - 1, spec.ell())
    } else {
        multivariate_penalty_operator(tmesh, spec)
    }
}

/// Orthonormal basis (as columns) of the null space of the penalty operator
/// for `spec` on `tmesh`.
///
/// In the per-axis basis of monomials `t^e`, a tensor monomial is
/// annihilated by the block for `r_s` exactly when some axis has
/// `e_j < r_{s,j}`. Exponents at or above the largest order along an axis
/// behave alike, so they are represented by the full unit basis of that
/// axis. The spanning set is orthonormalized with rank detection.
pub fn null_space_basis(tmesh: &TensorMesh, spec: &PenaltySpec) -> Result<DMatrix<f64>> {
    let p = tmesh.ndim();
    if spec.dim() != p {
        return Err(MbsError::DimensionMismatch(format!(
            "penalty has {} axes, mesh has {p}",
            spec.dim()
        )));
    }
    let top = spec.max_orders();
    let allowed = |levels: &[usize]| {
        spec.orders()
            .iter()
            .all(|r| levels.iter().zip(r).any(|(&e, &rj)| e < rj))
    };
    // per-axis factor families: level e < top[j] is one monomial, level
    // top[j] stands for everything of higher degree
    let axis_factors = |j: usize, level: usize| -> Vec<Vec<f64>> {
        let axis = tmesh.axis(j);
        let m = axis.len();
        if level < top[j] {
            let (a, span) = (axis.lower(), axis.upper() - axis.lower());
            vec![axis
                .points()
                .iter()
                .map(|&d| ((d - a) / span).powi(level as i32))
                .collect()]
        } else {
            (0..m)
                .map(|i| (0..m).map(|l| if l == i { 1.0 } else { 0.0 }).collect())
                .collect()
        }
    };
    let mut spanning: Vec<Vec<f64>> = Vec::new();
    let mut levels = vec![0usize; p];
    loop {
        if allowed(&levels) {
            let mut products: Vec<Vec<f64>> = vec![vec![1.0]];
            for (j, &level) in levels.iter().enumerate() {
                let factors = axis_factors(j, level);
                products = products
                    .iter()
                    .flat_map(|acc| {
                        factors.iter().map(move |fac| {
                            acc.iter()
                                .flat_map(|&a| fac.iter().map(move |&b| a * b))
                                .collect::<Vec<f64>>()
                        })
                    })
                    .collect();
            }
            spanning.extend(products);
        }
        // odometer over levels[j] in 0..=top[j]
        let mut j = p;
        loop {
            if j == 0 {
                return orthonormalize(spanning, tmesh.size());
            }
            j -= 1;
            if levels[j] < top[j] {
                levels[j] += 1;
                break;
            }
            levels[j] = 0;
        }
    }
}

/// Modified Gram-Schmidt with two passes, dropping dependent vectors.
fn orthonormalize(vectors: Vec<Vec<f64>>, len: usize) -> Result<DMatrix<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for mut v in vectors {
        let norm0 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm0 == 0.0 {
            continue;
        }
        for _ in 0..2 {
            for b in &basis {
                let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-10 * norm0 {
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v);
        }
    }
    if basis.is_empty() {
        return invalid("the penalty operator has a trivial null space");
    }
    Ok(DMatrix::from_fn(len, basis.len(), |i, j| basis[j][i]))
}

pub(crate) fn regular_widths(tmesh: &TensorMesh) -> Result<Vec<f64>> {
    tmesh
        .axes()
        .iter()
        .enumerate()
        .map(|(j, axis)| {
            axis.regular_width().ok_or_else(|| {
                MbsError::InvalidArgument(format!(
                    "axis {j} is irregular; multivariate penalties need regular meshes"
                ))
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn dense_mul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let n = b[0].len();
        a.iter()
            .map(|row| {
                (0..n)
                    .map(|j| row.iter().zip(b).map(|(x, brow)| x * brow[j]).sum())
                    .collect()
            })
            .collect()
    }

    #[test]
    fn difference_matrix_examples() {
        assert_eq!(difference_matrix(3, 1).unwrap().mul_vec(&[1.0, 2.0, 4.0]), vec![1.0, 2.0]);
        let d2 = difference_matrix(4, 2).unwrap();
        assert_eq!(d2.mul_vec(&[0.0, 1.0, 2.0, 3.0]), vec![0.0, 0.0]);
        // Δ^(1)_3 · Δ^(1)_4 by hand: first row (-1,1,0)·rows gives (1,-2,1,0)
        let hand = dense_mul(
            &difference_matrix(3, 1).unwrap().to_dense(),
            &difference_matrix(4, 1).unwrap().to_dense(),
        );
        assert_eq!(hand[0], vec![1.0, -2.0, 1.0, 0.0]);
        assert_eq!(d2.to_dense()[0], vec![1.0, -2.0, 1.0, 0.0]);
        assert_eq!(d2.bandwidth(), Some(3));
        assert!(difference_matrix(3, 3).is_err());
        assert!(difference_matrix(3, 0).is_err());
    }

    #[test]
    fn averaging_matrix_examples() {
        assert_eq!(
            averaging_matrix(3, 0).unwrap().to_dense(),
            SparseBandedMatrix::identity(3).to_dense()
        );
        assert_eq!(averaging_matrix(3, 1).unwrap().mul_vec(&[0.0, 2.0, 4.0]), vec![1.0, 3.0]);
        let third = 1.0 / 3.0;
        assert_eq!(
            averaging_matrix(4, 2).unwrap().to_dense()[0],
            vec![third, third, third, 0.0]
        );
        assert!(averaging_matrix(2, 2).is_err());
    }

    #[test]
    fn normalized_difference_examples() {
        let mesh = Mesh::regular(0.0, 1.0, 3).unwrap();
        let op = normalized_difference_matrix(&mesh, 1, NormOrder::ONE).unwrap();
        // normalized second difference of (0,1,0) is -8, Riemann weight 0.5
        let v = op.mul_vec(&[0.0, 1.0, 0.0]);
        assert_relative_eq!(NormOrder::ONE.power_sum(v), 4.0, epsilon = 1e-12);

        let irregular = Mesh::from_points(&[0.0, 1.0, 3.0]).unwrap();
        let op = normalized_difference_matrix(&irregular, 1, NormOrder::Finite(2.0)).unwrap();
        let v = op.mul_vec(&[0.0, 1.0, 3.0]);
        assert_relative_eq!(NormOrder::Finite(2.0).power_sum(v), 0.0, epsilon = 1e-14);

        let op = normalized_difference_matrix(&Mesh::regular(0.0, 2.0, 3).unwrap(), 0, NormOrder::ONE)
            .unwrap();
        assert_relative_eq!(NormOrder::ONE.power_sum(op.mul_vec(&[0.0, 1.0, 3.0])), 3.0);

        assert!(normalized_difference_matrix(&mesh, 2, NormOrder::ONE).is_err());
        assert!(normalized_difference_matrix(&mesh, 0, NormOrder::Finite(0.5)).is_err());
    }

    #[test]
    fn irregular_second_order_matches_closed_form() {
        // r = 1, ℓ = 2: Σ (slope difference)^2 / ((d_{i+2} - d_i)/2)
        let d = [0.0, 0.3, 1.0, 1.2, 2.5];
        let f = [1.0, -0.5, 2.0, 0.1, 0.7];
        let mesh = Mesh::from_points(&d).unwrap();
        let op = normalized_difference_matrix(&mesh, 1, NormOrder::Finite(2.0)).unwrap();
        let got = NormOrder::Finite(2.0).power_sum(op.mul_vec(&f));
        let expect: f64 = (0..3)
            .map(|i| {
                let s1 = (f[i + 1] - f[i]) / (d[i + 1] - d[i]);
                let s2 = (f[i + 2] - f[i + 1]) / (d[i + 2] - d[i + 1]);
                (s2 - s1).powi(2) / ((d[i + 2] - d[i]) / 2.0)
            })
            .sum();
        assert_relative_eq!(got, expect, max_relative = 1e-13);
        assert_eq!(op.bandwidth(), Some(3));
    }

    #[test]
    fn fused_lasso_operator_example() {
        let tmesh = TensorMesh::new(vec![
            Mesh::regular(0.0, 1.0, 2).unwrap(),
            Mesh::regular(0.0, 1.0, 2).unwrap(),
        ])
        .unwrap();
        let spec = PenaltySpec::bivariate_isotropic(0, NormOrder::ONE).unwrap();
        let op = multivariate_penalty_operator(&tmesh, &spec).unwrap();
        // rows ((0,1),(2,4)): axis-1 diffs 2+3, axis-2 diffs 1+2, mixed 1
        let v = op.mul_vec(&[0.0, 1.0, 2.0, 4.0]);
        assert_relative_eq!(NormOrder::ONE.power_sum(v), 9.0);
        assert_eq!(op.nrows(), 1 + 2 + 2);
    }

    #[test]
    fn axis_difference_annihilates_constant_rows() {
        let tmesh = TensorMesh::unit_regular(&[3, 4]).unwrap();
        let spec = PenaltySpec::new(vec![vec![1, 0]], NormOrder::ONE).unwrap();
        let op = multivariate_penalty_operator(&tmesh, &spec).unwrap();
        // every row of the grid equal: f(i, j) = g(j)
        let f: Vec<f64> = (0..12).map(|k| ((k % 4) as f64).exp()).collect();
        assert!(op.mul_vec(&f).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn univariate_constructions_agree() {
        for r in 0..3 {
            for m in [r + 2, 7, 12] {
                let mesh = Mesh::regular(-1.0, 2.0, m).unwrap();
                let tmesh = TensorMesh::new(vec![mesh.clone()]).unwrap();
                for ell in [NormOrder::ONE, NormOrder::Finite(2.0)] {
                    let spec = PenaltySpec::univariate(r, ell).unwrap();
                    let a = multivariate_penalty_operator(&tmesh, &spec).unwrap();
                    let b = normalized_difference_matrix(&mesh, r, ell).unwrap();
                    assert_eq!(a.shape(), b.shape());
                    for i in 0..a.nrows() {
                        for j in 0..a.ncols() {
                            assert!((a.get(i, j) - b.get(i, j)).abs() <= 1e-12 * (1.0 + b.get(i, j).abs()));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn multivariate_rejects_bad_inputs() {
        let tmesh = TensorMesh::unit_regular(&[3, 3]).unwrap();
        let spec = PenaltySpec::univariate(0, NormOrder::ONE).unwrap();
        assert!(multivariate_penalty_operator(&tmesh, &spec).is_err());
        let too_high = PenaltySpec::new(vec![vec![3, 0]], NormOrder::ONE).unwrap();
        assert!(multivariate_penalty_operator(&tmesh, &too_high).is_err());
        let irregular = TensorMesh::new(vec![
            Mesh::from_points(&[0.0, 0.1, 1.0]).unwrap(),
            Mesh::regular(0.0, 1.0, 3).unwrap(),
        ])
        .unwrap();
        let fl = PenaltySpec::bivariate_isotropic(0, NormOrder::ONE).unwrap();
        assert!(multivariate_penalty_operator(&irregular, &fl).is_err());
    }

    #[test]
    fn spec_validation_and_orders() {
        assert!(PenaltySpec::new(vec![], NormOrder::ONE).is_err());
        assert!(PenaltySpec::new(vec![vec![1, 0], vec![1]], NormOrder::ONE).is_err());
        assert!(PenaltySpec::new(vec![vec![1], vec![2]], NormOrder::ONE).is_err());
        assert!(PenaltySpec::new(vec![vec![0]], NormOrder::ONE).is_err());
        assert!(PenaltySpec::new(vec![vec![1]], NormOrder::Finite(0.5)).is_err());
        let fl = PenaltySpec::bivariate_isotropic(0, NormOrder::Infinity).unwrap();
        assert_eq!(fl.max_isotropic_order(), 1);
        assert_eq!(fl.max_interpolation_order(), 1);
        assert_eq!(PenaltySpec::univariate(2, NormOrder::ONE).unwrap().max_interpolation_order(), 2);
        let json = serde_json::to_string(&fl).unwrap();
        let back: PenaltySpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, fl);
    }

    #[test]
    fn null_space_dimensions() {
        let cases: Vec<(Vec<usize>, Vec<Vec<usize>>, usize)> = vec![
            (vec![9], vec![vec![1]], 1),
            (vec![9], vec![vec![3]], 3),
            (vec![4, 5], vec![vec![1, 1], vec![1, 0], vec![0, 1]], 1),
            (vec![4, 5], vec![vec![1, 0]], 5),
            (vec![4, 5], vec![vec![1, 1]], 4 + 5 - 1),
            (vec![5, 6], vec![vec![2, 2], vec![2, 0], vec![0, 2]], 4),
            (vec![3, 4, 3], vec![vec![1, 1, 1]], 3 * 4 * 3 - 2 * 3 * 2),
        ];
        for (dims, orders, expect) in cases {
            let tmesh = TensorMesh::unit_regular(&dims).unwrap();
            let spec = PenaltySpec::new(orders.clone(), NormOrder::ONE).unwrap();
            let basis = null_space_basis(&tmesh, &spec).unwrap();
            assert_eq!(basis.ncols(), expect, "{dims:?} {orders:?}");
            let op = penalty_operator(&tmesh, &spec).unwrap();
            for c in 0..basis.ncols() {
                let col: Vec<f64> = basis.column(c).iter().copied().collect();
                let img = op.mul_vec(&col);
                let scale = op.triplets().map(|(_, _, v)| v.abs()).fold(0.0, f64::max);
                assert!(img.iter().all(|v| v.abs() < 1e-9 * scale), "{dims:?} {orders:?}");
            }
        }
    }

    #[test]
    fn null_space_on_irregular_univariate_mesh() {
        let mesh = Mesh::from_points(&[0.0, 0.1, 0.15, 0.6, 0.61, 1.0, 2.0]).unwrap();
        let tmesh = TensorMesh::new(vec![mesh]).unwrap();
        let spec = PenaltySpec::univariate(2, NormOrder::ONE).unwrap();
        let basis = null_space_basis(&tmesh, &spec).unwrap();
        assert_eq!(basis.ncols(), 3);
        let op = penalty_operator(&tmesh, &spec).unwrap();
        let dense = DMatrix::from_fn(op.nrows(), op.ncols(), |i, j| op.get(i, j));
        assert!((dense * &basis).amax() < 1e-8);
    }

    proptest! {
        #[test]
        fn differences_annihilate_low_degree_polynomials(n in 2usize..200, r in 1usize..6, c in prop::collection::vec(-1.0f64..1.0, 6)) {
            prop_assume!(n > r);
            let d = difference_matrix(n, r).unwrap();
            // degree < r polynomial on 1..n, centered and scaled to keep values O(1)
            let f: Vec<f64> = (1..=n)
                .map(|i| {
                    let t = i as f64 / n as f64;
                    (0..r).map(|e| c[e] * t.powi(e as i32)).sum()
                })
                .collect();
            for v in d.mul_vec(&f) {
                prop_assert!(v.abs() <= 1e-9);
            }
        }

        #[test]
        fn difference_recursion_holds(n in 3usize..40, r in 2usize..6) {
            prop_assume!(n > r);
            let lhs = difference_matrix(n, r).unwrap();
            let rhs = difference_matrix(n - 1, r - 1).unwrap().matmul(&difference_matrix(n, 1).unwrap()).unwrap();
            for i in 0..lhs.nrows() {
                for j in 0..n {
                    prop_assert_eq!(lhs.get(i, j), rhs.get(i, j));
                }
            }
        }

        #[test]
        fn regular_mesh_reduction(m in 3usize..60, r in 0usize..4, lo in -5.0f64..5.0, len in 0.1f64..10.0, ell in 1.0f64..3.0) {
            prop_assume!(m >= r + 2);
            let mesh = Mesh::regular(lo, lo + len, m).unwrap();
            let delta = mesh.regular_width().unwrap();
            let op = normalized_difference_matrix(&mesh, r, NormOrder::Finite(ell)).unwrap();
            let scale = delta.powf(1.0 / ell - r as f64 - 1.0);
            let plain = difference_matrix(m, r + 1).unwrap().scale(scale);
            for i in 0..op.nrows() {
                for j in 0..m {
                    let (a, b) = (op.get(i, j), plain.get(i, j));
                    prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(scale), "{} vs {}", a, b);
                }
            }
            prop_assert_eq!(op.bandwidth(), Some(r + 2));
        }
    }
}
