//! Direct evaluation of the Riemann penalty `P_D(f_D)`.
//!
//! Multivariate values are computed by differencing the tensor in place,
//! without going through the stacked operator, so the two routes can be
//! checked against each other.

use crate::diffops::{normalized_difference_matrix, regular_widths, NormOrder, PenaltySpec};
use crate::error::{invalid, MbsError, Result};
use crate::mesh::{row_major_strides, TensorMesh};

/// Values of a function on every point of a (tensor) mesh, row-major.
#[derive(Debug, Clone)]
pub struct MeshFunction<'a> {
    mesh: &'a TensorMesh,
    values: Vec<f64>,
}

impl<'a> MeshFunction<'a> {
    pub fn new(mesh: &'a TensorMesh, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.size() {
            return Err(MbsError::DimensionMismatch(format!(
                "{} values for a mesh of {} points",
                values.len(),
                mesh.size()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return invalid(format!("mesh function value {v} is not finite"));
        }
        Ok(Self { mesh, values })
    }

    /// Samples `f` at every grid point.
    pub fn sample(mesh: &'a TensorMesh, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let values = (0..mesh.size()).map(|i| f(&mesh.coordinates(i))).collect();
        Self::new(mesh, values)
    }

    pub fn mesh(&self) -> &TensorMesh {
        self.mesh
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Forward differences along `axis` of a row-major tensor, divided by `width`.
fn difference_along(values: &[f64], dims: &mut [usize], axis: usize, width: f64) -> Vec<f64> {
    let strides = row_major_strides(dims);
    let mut out_dims = dims.to_vec();
    out_dims[axis] -= 1;
    let out_len: usize = out_dims.iter().product();
    let out_strides = row_major_strides(&out_dims);
    let mut out = vec![0.0; out_len];
    for (flat, o) in out.iter_mut().enumerate() {
        let mut rem = flat;
        let mut src = 0;
        for (j, &s) in out_strides.iter().enumerate() {
            src += (rem / s) * strides[j];
            rem %= s;
        }
        *o = (values[src + strides[axis]] - values[src]) / width;
    }
    dims.copy_from_slice(&out_dims);
    out
}

/// `P_D(f) = Σ_s Σ_i |(δ_1⋯δ_p)^{1/ℓ} [Δ^{r_s} f]_i|^ℓ`, or the largest
/// weighted difference when `ℓ = ∞`.
pub fn penalty_value(f: &MeshFunction<'_>, spec: &PenaltySpec) -> Result<f64> {
    let mesh = f.mesh();
    let p = mesh.ndim();
    if spec.dim() != p {
        return Err(MbsError::DimensionMismatch(format!(
            "penalty has {} axes, mesh has {p}",
            spec.dim()
        )));
    }
    let ell = spec.ell();
    if p == 1 {
        let op = normalized_difference_matrix(mesh.axis(0), spec.orders()[0][0] - 1, ell)?;
        return Ok(ell.power_sum(op.mul_vec(f.values())));
    }
    let widths = regular_widths(mesh)?;
    let weight = widths.iter().product::<f64>().powf(ell.inverse());
    let mut per_order = Vec::with_capacity(spec.orders().len());
    for orders in spec.orders() {
        let mut dims = mesh.dims().to_vec();
        let mut values = f.values().to_vec();
        for (axis, &r) in orders.iter().enumerate() {
            if dims[axis] <= r {
                return invalid(format!(
                    "axis {axis} has {} points, too few for order {r} differences",
                    mesh.dims()[axis]
                ));
            }
            for _ in 0..r {
                values = difference_along(&values, &mut dims, axis, widths[axis]);
            }
        }
        per_order.push(ell.power_sum(values.into_iter().map(|v| weight * v)));
    }
    Ok(match ell {
        NormOrder::Infinity => per_order.into_iter().fold(0.0, f64::max),
        NormOrder::Finite(_) => per_order.into_iter().sum(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffops::multivariate_penalty_operator;
    use crate::mesh::Mesh;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn penalty_examples() {
        let line = TensorMesh::new(vec![Mesh::regular(0.0, 2.0, 3).unwrap()]).unwrap();
        let f = MeshFunction::new(&line, vec![0.0, 1.0, 3.0]).unwrap();
        let spec = PenaltySpec::univariate(0, NormOrder::ONE).unwrap();
        assert_relative_eq!(penalty_value(&f, &spec).unwrap(), 3.0);

        let grid = TensorMesh::new(vec![
            Mesh::regular(0.0, 1.0, 2).unwrap(),
            Mesh::regular(0.0, 1.0, 2).unwrap(),
        ])
        .unwrap();
        let f = MeshFunction::new(&grid, vec![0.0, 1.0, 2.0, 4.0]).unwrap();
        let fl = PenaltySpec::bivariate_isotropic(0, NormOrder::ONE).unwrap();
        assert_relative_eq!(penalty_value(&f, &fl).unwrap(), 9.0);

        let inf = PenaltySpec::bivariate_isotropic(0, NormOrder::Infinity).unwrap();
        assert_relative_eq!(penalty_value(&f, &inf).unwrap(), 3.0);
    }

    #[test]
    fn constants_have_zero_penalty() {
        let grid = TensorMesh::unit_regular(&[4, 5, 3]).unwrap();
        let f = MeshFunction::new(&grid, vec![1.7; 60]).unwrap();
        let spec = PenaltySpec::new(
            vec![vec![1, 0, 0], vec![0, 2, 1], vec![1, 1, 1]],
            NormOrder::Finite(1.5),
        )
        .unwrap();
        assert_eq!(penalty_value(&f, &spec).unwrap(), 0.0);
    }

    #[test]
    fn mismatches_are_rejected() {
        let grid = TensorMesh::unit_regular(&[3, 3]).unwrap();
        assert!(MeshFunction::new(&grid, vec![0.0; 8]).is_err());
        assert!(MeshFunction::new(&grid, vec![f64::NAN; 9]).is_err());
        let f = MeshFunction::new(&grid, vec![0.0; 9]).unwrap();
        let uni = PenaltySpec::univariate(0, NormOrder::ONE).unwrap();
        assert!(penalty_value(&f, &uni).is_err());
        let high = PenaltySpec::new(vec![vec![0, 3]], NormOrder::ONE).unwrap();
        assert!(penalty_value(&f, &high).is_err());
    }

    #[test]
    fn storage_order_does_not_change_the_penalty() {
        // transpose the tensor and reverse the axes of every order
        let grid = TensorMesh::new(vec![
            Mesh::regular(0.0, 2.0, 4).unwrap(),
            Mesh::regular(-1.0, 1.0, 6).unwrap(),
        ])
        .unwrap();
        let swapped = TensorMesh::new(vec![grid.axis(1).clone(), grid.axis(0).clone()]).unwrap();
        let f = MeshFunction::sample(&grid, |x| (3.0 * x[0]).sin() * x[1].exp() + x[0] * x[1]).unwrap();
        let g = MeshFunction::sample(&swapped, |x| (3.0 * x[1]).sin() * x[0].exp() + x[0] * x[1]).unwrap();
        let spec = PenaltySpec::new(vec![vec![2, 1], vec![1, 0], vec![0, 3]], NormOrder::ONE).unwrap();
        let rev = PenaltySpec::new(vec![vec![1, 2], vec![0, 1], vec![3, 0]], NormOrder::ONE).unwrap();
        let a = penalty_value(&f, &spec).unwrap();
        let b = penalty_value(&g, &rev).unwrap();
        assert_relative_eq!(a, b, max_relative = 1e-12);
        let op_a = multivariate_penalty_operator(&grid, &spec).unwrap();
        let op_b = multivariate_penalty_operator(&swapped, &rev).unwrap();
        assert_relative_eq!(
            NormOrder::ONE.power_sum(op_a.mul_vec(f.values())),
            NormOrder::ONE.power_sum(op_b.mul_vec(g.values())),
            max_relative = 1e-12
        );
    }

    #[test]
    fn riemann_sums_converge() {
        // ∫_0^1 |d²/dx² sin(2πx)| dx = 4π² · (2/π) = 8π
        let exact = 8.0 * std::f64::consts::PI;
        let spec = PenaltySpec::univariate(1, NormOrder::ONE).unwrap();
        let errs: Vec<f64> = [16, 32, 64, 128, 256]
            .iter()
            .map(|&m| {
                let mesh = TensorMesh::new(vec![Mesh::regular(0.0, 1.0, m).unwrap()]).unwrap();
                let f = MeshFunction::sample(&mesh, |x| (2.0 * std::f64::consts::PI * x[0]).sin()).unwrap();
                (penalty_value(&f, &spec).unwrap() - exact).abs()
            })
            .collect();
        assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
    }

    proptest! {
        #[test]
        fn homogeneity(vals in prop::collection::vec(-5.0f64..5.0, 20), c in -4.0f64..4.0, ell in 1.0f64..3.0) {
            let grid = TensorMesh::unit_regular(&[4, 5]).unwrap();
            let spec = PenaltySpec::bivariate_isotropic(0, NormOrder::Finite(ell)).unwrap();
            let f = MeshFunction::new(&grid, vals.clone()).unwrap();
            let g = MeshFunction::new(&grid, vals.iter().map(|v| c * v).collect()).unwrap();
            let pf = penalty_value(&f, &spec).unwrap();
            let pg = penalty_value(&g, &spec).unwrap();
            prop_assert!((pg - c.abs().powf(ell) * pf).abs() <= 1e-9 * (1.0 + pg.abs()));
        }

        #[test]
        fn operator_norm_is_convex(
            u in prop::collection::vec(-5.0f64..5.0, 30),
            v in prop::collection::vec(-5.0f64..5.0, 30),
            ell in 1.0f64..4.0,
        ) {
            let grid = TensorMesh::unit_regular(&[5, 6]).unwrap();
            let spec = PenaltySpec::new(vec![vec![1, 1], vec![2, 0], vec![0, 1]], NormOrder::Finite(ell)).unwrap();
            let op = multivariate_penalty_operator(&grid, &spec).unwrap();
            let norm = |w: &[f64]| NormOrder::Finite(ell).power_sum(op.mul_vec(w)).powf(1.0 / ell);
            let mid: Vec<f64> = u.iter().zip(&v).map(|(a, b)| 0.5 * a + 0.5 * b).collect();
            prop_assert!(norm(&mid) <= 0.5 * norm(&u) + 0.5 * norm(&v) + 1e-9);
        }
    }
}
