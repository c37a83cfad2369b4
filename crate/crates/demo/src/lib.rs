//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Three operations: a univariate fit with its λ_max, an interpolation
//! explorer over hand-set mesh values, and a bivariate fused-lasso fit.
//! Everything lives on the unit interval or square.

use mbs::{
    admm_solve, kkt_residual, lambda_max, mlp_for_mesh, mlp_matrix, null_space_basis, penalty_operator,
    AdmmOptions, MbsError, MbsProblem, Mesh, NormOrder, PenaltySpec, TensorMesh,
};
use wasm_bindgen::prelude::*;

/// Points at which fitted curves are drawn.
const CURVE_SAMPLES: usize = 241;

fn unit_mesh(m: usize) -> Result<Mesh, MbsError> {
    Mesh::regular(0.0, 1.0, m)
}

fn curve_xs() -> Vec<f64> {
    (0..CURVE_SAMPLES).map(|i| i as f64 / (CURVE_SAMPLES - 1) as f64).collect()
}

fn univariate_problem(xs: &[f64], ys: &[f64], m: usize, r: usize, k: usize) -> Result<MbsProblem, MbsError> {
    let tm = TensorMesh::new(vec![unit_mesh(m)?])?;
    let spec = PenaltySpec::univariate(r, NormOrder::ONE)?;
    if k > r {
        return Err(MbsError::InvalidArgument(format!("k = {k} exceeds r = {r}")));
    }
    MbsProblem::new(
        ys.to_vec(),
        mlp_matrix(xs, tm.axis(0), k)?.matrix,
        penalty_operator(&tm, &spec)?,
        0.0,
    )?
    .with_null_space(null_space_basis(&tm, &spec)?)
}

/// A fitted univariate curve.
#[wasm_bindgen]
#[derive(Debug, Clone)]
pub struct UnivariateFit {
    mesh: Vec<f64>,
    values: Vec<f64>,
    curve: Vec<f64>,
    objective: f64,
    iterations: usize,
    kkt: f64,
    converged: bool,
}

#[wasm_bindgen]
impl UnivariateFit {
    /// Mesh points.
    #[wasm_bindgen(getter)]
    pub fn mesh(&self) -> Vec<f64> {
        self.mesh.clone()
    }

    /// Fitted values at the mesh points.
    #[wasm_bindgen(getter)]
    pub fn values(&self) -> Vec<f64> {
        self.values.clone()
    }

    /// The fit on an even grid of [0, 1]; see `curve_grid`.
    #[wasm_bindgen(getter)]
    pub fn curve(&self) -> Vec<f64> {
        self.curve.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn objective(&self) -> f64 {
        self.objective
    }

    #[wasm_bindgen(getter)]
    pub fn iterations(&self) -> usize {
        self.iterations
    }

    #[wasm_bindgen(getter)]
    pub fn kkt(&self) -> f64 {
        self.kkt
    }

    #[wasm_bindgen(getter)]
    pub fn converged(&self) -> bool {
        self.converged
    }
}

/// The grid that `UnivariateFit::curve` and `interpolate` are sampled on.
#[wasm_bindgen]
pub fn curve_grid() -> Vec<f64> {
    curve_xs()
}

pub fn univariate_lambda_max_impl(xs: &[f64], ys: &[f64], m: usize, r: usize, k: usize) -> Result<f64, MbsError> {
    lambda_max(&univariate_problem(xs, ys, m, r, k)?)
}

pub fn fit_univariate_impl(
    xs: &[f64],
    ys: &[f64],
    m: usize,
    r: usize,
    k: usize,
    lambda: f64,
) -> Result<UnivariateFit, MbsError> {
    let prob = univariate_problem(xs, ys, m, r, k)?.with_lambda(lambda)?;
    let fit = admm_solve(&prob, &AdmmOptions::default())?;
    let mesh = unit_mesh(m)?;
    let curve = mlp_matrix(&curve_xs(), &mesh, k)?.apply(&fit.f_mesh);
    Ok(UnivariateFit {
        mesh: mesh.points().to_vec(),
        kkt: kkt_residual(&fit.f_mesh, &prob)?,
        values: fit.f_mesh,
        curve,
        objective: fit.objective,
        iterations: fit.iterations,
        converged: fit.converged,
    })
}

pub fn interpolate_impl(values: &[f64], k: usize) -> Result<Vec<f64>, MbsError> {
    let mesh = unit_mesh(values.len())?;
    Ok(mlp_matrix(&curve_xs(), &mesh, k)?.apply(values))
}

/// Fused lasso on an `m x m` mesh of the unit square. Returns the mesh
/// values with the second coordinate varying fastest.
pub fn fit_bivariate_impl(xs: &[f64], zs: &[f64], ys: &[f64], m: usize, lambda: f64) -> Result<Vec<f64>, MbsError> {
    if xs.len() != zs.len() {
        return Err(MbsError::DimensionMismatch(format!("{} x values but {} z values", xs.len(), zs.len())));
    }
    let tm = TensorMesh::new(vec![unit_mesh(m)?, unit_mesh(m)?])?;
    let spec = PenaltySpec::bivariate_isotropic(0, NormOrder::ONE)?;
    let pts: Vec<Vec<f64>> = xs.iter().zip(zs).map(|(&x, &z)| vec![x, z]).collect();
    let prob = MbsProblem::new(
        ys.to_vec(),
        mlp_for_mesh(&pts, &tm, 0)?.matrix,
        penalty_operator(&tm, &spec)?,
        lambda,
    )?;
    let opts = AdmmOptions { tol_abs: 1e-6, tol_rel: 1e-4, max_iter: 2000, ..AdmmOptions::default() };
    Ok(admm_solve(&prob, &opts)?.f_mesh)
}

fn js(e: MbsError) -> JsError {
    JsError::new(&e.to_string())
}

/// Smallest λ at which the univariate fit is a polynomial of degree `r`.
#[wasm_bindgen]
pub fn univariate_lambda_max(xs: &[f64], ys: &[f64], m: usize, r: usize, k: usize) -> Result<f64, JsError> {
    univariate_lambda_max_impl(xs, ys, m, r, k).map_err(js)
}

#[wasm_bindgen]
pub fn fit_univariate(
    xs: &[f64],
    ys: &[f64],
    m: usize,
    r: usize,
    k: usize,
    lambda: f64,
) -> Result<UnivariateFit, JsError> {
    fit_univariate_impl(xs, ys, m, r, k, lambda).map_err(js)
}

/// Interpolates values on an even mesh of [0, 1] onto `curve_grid()`.
#[wasm_bindgen]
pub fn interpolate(values: &[f64], k: usize) -> Result<Vec<f64>, JsError> {
    interpolate_impl(values, k).map_err(js)
}

#[wasm_bindgen]
pub fn fit_bivariate(xs: &[f64], zs: &[f64], ys: &[f64], m: usize, lambda: f64) -> Result<Vec<f64>, JsError> {
    fit_bivariate_impl(xs, zs, ys, m, lambda).map_err(js)
}
